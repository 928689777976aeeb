use rand::Rng;

use super::tensor::Tensor;
use super::NetError;

/// Fully connected layer on `[batch, in]` inputs, weights `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
pub struct DenseCtx {
    x: Tensor,
}

impl Dense {
    pub fn new<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Dense {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Dense {
            w: Tensor::uniform(&[out_dim, in_dim], bound, rng),
            b: Tensor::uniform(&[out_dim], bound, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, DenseCtx), NetError> {
        let (n_in, n_out) = (self.in_dim(), self.out_dim());
        if x.shape().len() != 2 || x.shape()[1] != n_in {
            return Err(NetError::ShapeMismatch {
                expected: vec![x.shape().first().copied().unwrap_or(0), n_in],
                got: x.shape().to_vec(),
            });
        }
        let batch = x.shape()[0];
        let mut y = Tensor::zeros(&[batch, n_out]);
        let (xd, w, b, yd) = (x.data(), self.w.data(), self.b.data(), y.data_mut());
        for bi in 0..batch {
            let row = &xd[bi * n_in..(bi + 1) * n_in];
            for o in 0..n_out {
                let wrow = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for i in 0..n_in {
                    acc += wrow[i] * row[i];
                }
                yd[bi * n_out + o] = acc;
            }
        }
        Ok((y, DenseCtx { x: x.clone() }))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, ctx: &DenseCtx, gy: &Tensor) -> Tensor {
        let (n_in, n_out) = (self.in_dim(), self.out_dim());
        let batch = ctx.x.shape()[0];
        assert_eq!(gy.shape(), [batch, n_out], "output gradient shape");
        let mut gx = Tensor::zeros(&[batch, n_in]);
        let (xd, gyd) = (ctx.x.data(), gy.data());
        {
            let gw = self.w.grad_mut();
            for bi in 0..batch {
                let row = &xd[bi * n_in..(bi + 1) * n_in];
                for o in 0..n_out {
                    let g = gyd[bi * n_out + o];
                    let grow = &mut gw[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        grow[i] += g * row[i];
                    }
                }
            }
        }
        {
            let gb = self.b.grad_mut();
            for bi in 0..batch {
                for o in 0..n_out {
                    gb[o] += gyd[bi * n_out + o];
                }
            }
        }
        let w = self.w.data();
        let gxd = gx.data_mut();
        for bi in 0..batch {
            let grow = &mut gxd[bi * n_in..(bi + 1) * n_in];
            for o in 0..n_out {
                let g = gyd[bi * n_out + o];
                let wrow = &w[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += g * wrow[i];
                }
            }
        }
        gx
    }
}

/// Rectified linear activation. The subgradient at 0 is taken as 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct Relu;

#[derive(Debug, Clone)]
pub struct ReluCtx {
    active: Vec<bool>,
}

impl Relu {
    pub fn forward(&self, x: &Tensor) -> (Tensor, ReluCtx) {
        let mut y = x.clone();
        let active = y
            .data_mut()
            .iter_mut()
            .map(|v| {
                let on = *v > 0.0;
                if !on {
                    *v = 0.0;
                }
                on
            })
            .collect();
        (y, ReluCtx { active })
    }

    pub fn backward(&self, ctx: &ReluCtx, gy: &Tensor) -> Tensor {
        assert_eq!(gy.len(), ctx.active.len(), "gradient length");
        let mut gx = gy.clone();
        for (g, &on) in gx.data_mut().iter_mut().zip(&ctx.active) {
            if !on {
                *g = 0.0;
            }
        }
        gx
    }
}

/// 3x3 2D convolution, stride 1, zero padding 1, on `[batch, h, w, c_in]`
/// inputs. Weights are `[c_out, 3, 3, c_in]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone)]
pub struct Conv2dCtx {
    x: Tensor,
}

impl Conv2d {
    pub fn new<R: Rng>(c_in: usize, c_out: usize, rng: &mut R) -> Conv2d {
        let bound = 1.0 / ((9 * c_in) as f64).sqrt();
        Conv2d {
            w: Tensor::uniform(&[c_out, 3, 3, c_in], bound, rng),
            b: Tensor::uniform(&[c_out], bound, rng),
        }
    }

    pub fn c_in(&self) -> usize {
        self.w.shape()[3]
    }

    pub fn c_out(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv2dCtx), NetError> {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        if x.shape().len() != 4 || x.shape()[3] != c_in {
            return Err(NetError::ShapeMismatch {
                expected: vec![0, 0, 0, c_in],
                got: x.shape().to_vec(),
            });
        }
        let (batch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut y = Tensor::zeros(&[batch, h, w, c_out]);
        let (xd, wd, bd, yd) = (x.data(), self.w.data(), self.b.data(), y.data_mut());
        for bi in 0..batch {
            let xb = &xd[bi * h * w * c_in..(bi + 1) * h * w * c_in];
            let yb = &mut yd[bi * h * w * c_out..(bi + 1) * h * w * c_out];
            for iy in 0..h {
                for ix in 0..w {
                    for co in 0..c_out {
                        let mut acc = bd[co];
                        for ky in 0..3 {
                            let ny = iy as isize + ky as isize - 1;
                            if ny < 0 || ny as usize >= h {
                                continue;
                            }
                            for kx in 0..3 {
                                let nx = ix as isize + kx as isize - 1;
                                if nx < 0 || nx as usize >= w {
                                    continue;
                                }
                                let xat = (ny as usize * w + nx as usize) * c_in;
                                let wat = ((co * 3 + ky) * 3 + kx) * c_in;
                                for ci in 0..c_in {
                                    acc += wd[wat + ci] * xb[xat + ci];
                                }
                            }
                        }
                        yb[(iy * w + ix) * c_out + co] = acc;
                    }
                }
            }
        }
        Ok((y, Conv2dCtx { x: x.clone() }))
    }

    /// Accumulates parameter gradients; returns the input gradient.
    pub fn backward(&mut self, ctx: &Conv2dCtx, gy: &Tensor) -> Tensor {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let (batch, h, w) = (ctx.x.shape()[0], ctx.x.shape()[1], ctx.x.shape()[2]);
        assert_eq!(gy.shape(), [batch, h, w, c_out], "output gradient shape");
        let mut gx = Tensor::zeros(ctx.x.shape());
        let (xd, gyd) = (ctx.x.data(), gy.data());
        let wd = self.w.data().to_vec();
        {
            let gw = self.w.grad_mut();
            for bi in 0..batch {
                let xb = &xd[bi * h * w * c_in..(bi + 1) * h * w * c_in];
                let gyb = &gyd[bi * h * w * c_out..(bi + 1) * h * w * c_out];
                let gxb = &mut gx.data_mut()[bi * h * w * c_in..(bi + 1) * h * w * c_in];
                for iy in 0..h {
                    for ix in 0..w {
                        for co in 0..c_out {
                            let g = gyb[(iy * w + ix) * c_out + co];
                            if g == 0.0 {
                                continue;
                            }
                            for ky in 0..3 {
                                let ny = iy as isize + ky as isize - 1;
                                if ny < 0 || ny as usize >= h {
                                    continue;
                                }
                                for kx in 0..3 {
                                    let nx = ix as isize + kx as isize - 1;
                                    if nx < 0 || nx as usize >= w {
                                        continue;
                                    }
                                    let xat = (ny as usize * w + nx as usize) * c_in;
                                    let wat = ((co * 3 + ky) * 3 + kx) * c_in;
                                    for ci in 0..c_in {
                                        gw[wat + ci] += g * xb[xat + ci];
                                        gxb[xat + ci] += g * wd[wat + ci];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let gb = self.b.grad_mut();
        for bi in 0..batch {
            for p in 0..h * w {
                for co in 0..c_out {
                    gb[co] += gyd[(bi * h * w + p) * c_out + co];
                }
            }
        }
        gx
    }
}

/// 2x2 max pooling with stride 2 on `[batch, h, w, c]`; h and w must be even.
/// Ties resolve to the first element in (y, x) scan order.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxPool2d;

#[derive(Debug, Clone)]
pub struct MaxPool2dCtx {
    in_shape: Vec<usize>,
    /// Flat input index of the maximum, per output element.
    arg: Vec<u32>,
}

impl MaxPool2d {
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPool2dCtx), NetError> {
        let s = x.shape();
        if s.len() != 4 || s[1] % 2 != 0 || s[2] % 2 != 0 {
            return Err(NetError::ShapeMismatch {
                expected: vec![s[0], s[1] / 2 * 2, s[2] / 2 * 2, s[3]],
                got: s.to_vec(),
            });
        }
        let (batch, h, w, c) = (s[0], s[1], s[2], s[3]);
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Tensor::zeros(&[batch, oh, ow, c]);
        let mut arg = vec![0u32; y.len()];
        let (xd, yd) = (x.data(), y.data_mut());
        for bi in 0..batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = f32::NEG_INFINITY;
                        let mut at = 0u32;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let idx = ((bi * h + oy * 2 + dy) * w + ox * 2 + dx) * c + ch;
                                if xd[idx] > best {
                                    best = xd[idx];
                                    at = idx as u32;
                                }
                            }
                        }
                        let oidx = ((bi * oh + oy) * ow + ox) * c + ch;
                        yd[oidx] = best;
                        arg[oidx] = at;
                    }
                }
            }
        }
        Ok((
            y,
            MaxPool2dCtx {
                in_shape: s.to_vec(),
                arg,
            },
        ))
    }

    pub fn backward(&self, ctx: &MaxPool2dCtx, gy: &Tensor) -> Tensor {
        assert_eq!(gy.len(), ctx.arg.len(), "gradient length");
        let mut gx = Tensor::zeros(&ctx.in_shape);
        let gxd = gx.data_mut();
        for (g, &at) in gy.data().iter().zip(&ctx.arg) {
            gxd[at as usize] += g;
        }
        gx
    }
}
