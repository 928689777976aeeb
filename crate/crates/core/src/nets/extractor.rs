use rand::Rng;

use crate::env::{ObsData, Observation, PROPRIO_DIM};
use crate::geometry::Image;
use crate::octree::Octree;

use super::layers::{Conv2d, Conv2dCtx, Dense, DenseCtx, MaxPool2d, MaxPool2dCtx, Relu, ReluCtx};
use super::sparse::{
    relu_level, relu_level_backward, voxelize_backward, voxelize_level, LevelFeatures, OctreePool,
    OctreePoolCtx, SparseConv3d, SparseConv3dCtx,
};
use super::tensor::Tensor;
use super::NetError;

/// Octree depth the sparse stack expects at its input.
const OCT_DEPTH: u8 = 4;
/// Visual feature width of the octree extractor.
const OCT_VISUAL: usize = 144;
/// Side length of the image extractor's fixed input.
const IMG_SIZE: usize = 128;
/// Visual feature width of the image extractor.
const IMG_VISUAL: usize = 208;
/// Depth normalization ceiling in meters; invalid pixels read as this far.
const MAX_DEPTH_M: f32 = 1.0;

/// Sparse 3D stack: two convolution + pool stages from depth 4 to depth 2,
/// dense voxelization, and a fully connected reduction.
#[derive(Debug)]
pub struct OctreeExtractor {
    pub conv1: SparseConv3d,
    pub conv2: SparseConv3d,
    pub fc: Dense,
    tape: Option<Vec<[OctFrameCtx; 2]>>,
}

#[derive(Debug, Clone)]
pub struct OctFrameCtx {
    c1: SparseConv3dCtx,
    m1: Vec<bool>,
    p1: OctreePoolCtx,
    c2: SparseConv3dCtx,
    m2: Vec<bool>,
    p2: OctreePoolCtx,
    /// Pooled depth-2 features, the voxelization source.
    vox_src: LevelFeatures,
    fcx: DenseCtx,
    m3: ReluCtx,
}

impl OctreeExtractor {
    pub fn new<R: Rng>(rng: &mut R) -> OctreeExtractor {
        OctreeExtractor {
            conv1: SparseConv3d::new(5, 16, rng),
            conv2: SparseConv3d::new(16, 32, rng),
            fc: Dense::new(4 * 4 * 4 * 32, OCT_VISUAL, rng),
            tape: None,
        }
    }

    pub fn visual_dim(&self) -> usize {
        OCT_VISUAL
    }

    pub fn frame_dim(&self) -> usize {
        OCT_VISUAL + PROPRIO_DIM
    }

    /// Width of the stacked two-frame feature vector.
    pub fn obs_dim(&self) -> usize {
        2 * self.frame_dim()
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count() + self.fc.param_count()
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("conv1.w", &self.conv1.w),
            ("conv1.b", &self.conv1.b),
            ("conv2.w", &self.conv2.w),
            ("conv2.b", &self.conv2.b),
            ("fc.w", &self.fc.w),
            ("fc.b", &self.fc.b),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("conv1.w", &mut self.conv1.w),
            ("conv1.b", &mut self.conv1.b),
            ("conv2.w", &mut self.conv2.w),
            ("conv2.b", &mut self.conv2.b),
            ("fc.w", &mut self.fc.w),
            ("fc.b", &mut self.fc.b),
        ]
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Encode one octree to its visual feature vector.
    pub fn forward_frame(&self, o: &Octree) -> Result<(Vec<f32>, OctFrameCtx), NetError> {
        if o.d_max() != OCT_DEPTH {
            return Err(NetError::ShapeMismatch {
                expected: vec![OCT_DEPTH as usize],
                got: vec![o.d_max() as usize],
            });
        }
        let l4 = LevelFeatures::from_octree(o);
        let (y1, c1) = self.conv1.forward(&l4)?;
        let (r1, m1) = relu_level(&y1);
        let (p1v, p1) = OctreePool.forward(&r1);
        let (y2, c2) = self.conv2.forward(&p1v)?;
        let (r2, m2) = relu_level(&y2);
        let (vox_src, p2) = OctreePool.forward(&r2);
        let flat = voxelize_level(&vox_src);
        let x = Tensor::from_vec(&[1, flat.len()], flat)?;
        let (h, fcx) = self.fc.forward(&x)?;
        let (v, m3) = Relu.forward(&h);
        Ok((
            v.data().to_vec(),
            OctFrameCtx {
                c1,
                m1,
                p1,
                c2,
                m2,
                p2,
                vox_src,
                fcx,
                m3,
            },
        ))
    }

    fn backward_frame(&mut self, ctx: &OctFrameCtx, g_visual: &[f32]) {
        let gy = Tensor::from_vec(&[1, OCT_VISUAL], g_visual.to_vec()).unwrap();
        let g = Relu.backward(&ctx.m3, &gy);
        let g = self.fc.backward(&ctx.fcx, &g);
        let g = voxelize_backward(&ctx.vox_src, g.data());
        let g = OctreePool.backward(&ctx.p2, &g);
        let g = relu_level_backward(&ctx.m2, &g);
        let g = self.conv2.backward(&ctx.c2, &g);
        let g = OctreePool.backward(&ctx.p1, &g);
        let g = relu_level_backward(&ctx.m1, &g);
        self.conv1.backward(&ctx.c1, &g);
    }

    fn frame_octree<'a>(frame: &'a ObsData) -> &'a Octree {
        match frame {
            ObsData::Octree(o) => o,
            ObsData::Image { .. } => panic!("octree extractor fed an image frame"),
        }
    }

    /// Batched stacked features without gradient recording:
    /// `[batch, obs_dim]`, each row `[vis0, proprio0, vis1, proprio1]`.
    pub fn features(&self, obs: &[&Observation]) -> Result<Tensor, NetError> {
        Ok(self.run(obs)?.0)
    }

    /// As [`Self::features`], but records a tape for `backward_stacked`.
    pub fn forward_stacked(&mut self, obs: &[&Observation]) -> Result<Tensor, NetError> {
        let (out, tape) = self.run(obs)?;
        self.tape = Some(tape);
        Ok(out)
    }

    fn run(&self, obs: &[&Observation]) -> Result<(Tensor, Vec<[OctFrameCtx; 2]>), NetError> {
        let fd = self.frame_dim();
        let mut out = Tensor::zeros(&[obs.len(), 2 * fd]);
        let mut tape = Vec::with_capacity(obs.len());
        for (bi, ob) in obs.iter().enumerate() {
            let mut ctxs = Vec::with_capacity(2);
            for (k, frame) in ob.frames.iter().enumerate() {
                let (vis, ctx) = self.forward_frame(Self::frame_octree(&frame.data))?;
                let row = &mut out.data_mut()[bi * 2 * fd + k * fd..bi * 2 * fd + (k + 1) * fd];
                row[..OCT_VISUAL].copy_from_slice(&vis);
                row[OCT_VISUAL..].copy_from_slice(&frame.proprio);
                ctxs.push(ctx);
            }
            let [a, b] = <[OctFrameCtx; 2]>::try_from(ctxs).expect("two frames");
            tape.push([a, b]);
        }
        Ok((out, tape))
    }

    /// Zero-and-replace backward over the recorded batch. The proprioception
    /// columns of `g` are pass-through and read only by shape.
    pub fn backward_stacked(&mut self, g: &Tensor) -> Result<(), NetError> {
        let tape = self.tape.take().ok_or(NetError::GraphNotBuilt)?;
        let fd = self.frame_dim();
        let batch = tape.len();
        if g.shape() != [batch, 2 * fd] {
            self.tape = Some(tape);
            return Err(NetError::ShapeMismatch {
                expected: vec![batch, 2 * fd],
                got: g.shape().to_vec(),
            });
        }
        self.zero_grads();
        for (bi, ctxs) in tape.iter().enumerate() {
            for (k, ctx) in ctxs.iter().enumerate() {
                let at = bi * 2 * fd + k * fd;
                let gv = g.data()[at..at + OCT_VISUAL].to_vec();
                self.backward_frame(ctx, &gv);
            }
        }
        self.tape = Some(tape);
        Ok(())
    }
}

/// 2D convolution stack on fixed 128x128 depth + intensity images.
#[derive(Debug)]
pub struct ImageExtractor {
    pub convs: Vec<Conv2d>,
    pub fc: Dense,
    tape: Option<Vec<[ImgFrameCtx; 2]>>,
}

#[derive(Debug, Clone)]
pub struct ImgFrameCtx {
    stages: Vec<(Conv2dCtx, ReluCtx, MaxPool2dCtx)>,
    fcx: DenseCtx,
    m: ReluCtx,
}

impl ImageExtractor {
    pub fn new<R: Rng>(rng: &mut R) -> ImageExtractor {
        let widths = [2usize, 16, 32, 64, 64, 64];
        let convs = widths
            .windows(2)
            .map(|w| Conv2d::new(w[0], w[1], rng))
            .collect();
        ImageExtractor {
            convs,
            fc: Dense::new(4 * 4 * 64, IMG_VISUAL, rng),
            tape: None,
        }
    }

    pub fn visual_dim(&self) -> usize {
        IMG_VISUAL
    }

    pub fn frame_dim(&self) -> usize {
        IMG_VISUAL + PROPRIO_DIM
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.frame_dim()
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(Conv2d::param_count).sum::<usize>() + self.fc.param_count()
    }

    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{}.w", i + 1), &c.w));
            out.push((format!("conv{}.b", i + 1), &c.b));
        }
        out.push(("fc.w".to_string(), &self.fc.w));
        out.push(("fc.b".to_string(), &self.fc.b));
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter_mut().enumerate() {
            out.push((format!("conv{}.w", i + 1), &mut c.w));
            out.push((format!("conv{}.b", i + 1), &mut c.b));
        }
        out.push(("fc.w".to_string(), &mut self.fc.w));
        out.push(("fc.b".to_string(), &mut self.fc.b));
        out
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Normalize raw depth + intensity into the `[1, 128, 128, 2]` input.
    /// Depth is clamped to [0, 1] at a 1 m ceiling; invalid (non-positive
    /// or non-finite) pixels read as the ceiling.
    fn input_tensor(depth: &Image, intensity: &Image) -> Result<Tensor, NetError> {
        if depth.width != IMG_SIZE
            || depth.height != IMG_SIZE
            || intensity.width != IMG_SIZE
            || intensity.height != IMG_SIZE
        {
            return Err(NetError::ShapeMismatch {
                expected: vec![IMG_SIZE, IMG_SIZE],
                got: vec![depth.width, depth.height],
            });
        }
        let mut x = Tensor::zeros(&[1, IMG_SIZE, IMG_SIZE, 2]);
        let xd = x.data_mut();
        for v in 0..IMG_SIZE {
            for u in 0..IMG_SIZE {
                let d = depth.get(u, v);
                let dn = if d > 0.0 && d.is_finite() {
                    (d / MAX_DEPTH_M).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                let at = (v * IMG_SIZE + u) * 2;
                xd[at] = dn;
                xd[at + 1] = intensity.get(u, v).clamp(0.0, 1.0);
            }
        }
        Ok(x)
    }

    pub fn forward_frame(
        &self,
        depth: &Image,
        intensity: &Image,
    ) -> Result<(Vec<f32>, ImgFrameCtx), NetError> {
        let mut x = Self::input_tensor(depth, intensity)?;
        let mut stages = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let (y, cc) = conv.forward(&x)?;
            let (a, rc) = Relu.forward(&y);
            let (p, pc) = MaxPool2d.forward(&a)?;
            stages.push((cc, rc, pc));
            x = p;
        }
        let flat = Tensor::from_vec(&[1, x.len()], x.data().to_vec())?;
        let (h, fcx) = self.fc.forward(&flat)?;
        let (v, m) = Relu.forward(&h);
        Ok((v.data().to_vec(), ImgFrameCtx { stages, fcx, m }))
    }

    fn backward_frame(&mut self, ctx: &ImgFrameCtx, g_visual: &[f32]) {
        let gy = Tensor::from_vec(&[1, IMG_VISUAL], g_visual.to_vec()).unwrap();
        let g = Relu.backward(&ctx.m, &gy);
        let g = self.fc.backward(&ctx.fcx, &g);
        let mut g = Tensor::from_vec(&[1, 4, 4, 64], g.data().to_vec()).unwrap();
        for (conv, (cc, rc, pc)) in self.convs.iter_mut().zip(&ctx.stages).rev() {
            let gp = MaxPool2d.backward(pc, &g);
            let gr = Relu.backward(rc, &gp);
            g = conv.backward(cc, &gr);
        }
    }

    fn frame_images(frame: &ObsData) -> (&Image, &Image) {
        match frame {
            ObsData::Image { depth, intensity } => (depth, intensity),
            ObsData::Octree(_) => panic!("image extractor fed an octree frame"),
        }
    }

    /// Batched stacked features without gradient recording.
    pub fn features(&self, obs: &[&Observation]) -> Result<Tensor, NetError> {
        Ok(self.run(obs)?.0)
    }

    pub fn forward_stacked(&mut self, obs: &[&Observation]) -> Result<Tensor, NetError> {
        let (out, tape) = self.run(obs)?;
        self.tape = Some(tape);
        Ok(out)
    }

    fn run(&self, obs: &[&Observation]) -> Result<(Tensor, Vec<[ImgFrameCtx; 2]>), NetError> {
        let fd = self.frame_dim();
        let mut out = Tensor::zeros(&[obs.len(), 2 * fd]);
        let mut tape = Vec::with_capacity(obs.len());
        for (bi, ob) in obs.iter().enumerate() {
            let mut ctxs = Vec::with_capacity(2);
            for (k, frame) in ob.frames.iter().enumerate() {
                let (depth, intensity) = Self::frame_images(&frame.data);
                let (vis, ctx) = self.forward_frame(depth, intensity)?;
                let row = &mut out.data_mut()[bi * 2 * fd + k * fd..bi * 2 * fd + (k + 1) * fd];
                row[..IMG_VISUAL].copy_from_slice(&vis);
                row[IMG_VISUAL..].copy_from_slice(&frame.proprio);
                ctxs.push(ctx);
            }
            let [a, b] = <[ImgFrameCtx; 2]>::try_from(ctxs).expect("two frames");
            tape.push([a, b]);
        }
        Ok((out, tape))
    }

    /// Zero-and-replace backward over the recorded batch.
    pub fn backward_stacked(&mut self, g: &Tensor) -> Result<(), NetError> {
        let tape = self.tape.take().ok_or(NetError::GraphNotBuilt)?;
        let fd = self.frame_dim();
        let batch = tape.len();
        if g.shape() != [batch, 2 * fd] {
            self.tape = Some(tape);
            return Err(NetError::ShapeMismatch {
                expected: vec![batch, 2 * fd],
                got: g.shape().to_vec(),
            });
        }
        self.zero_grads();
        for (bi, ctxs) in tape.iter().enumerate() {
            for (k, ctx) in ctxs.iter().enumerate() {
                let at = bi * 2 * fd + k * fd;
                let gv = g.data()[at..at + IMG_VISUAL].to_vec();
                self.backward_frame(ctx, &gv);
            }
        }
        self.tape = Some(tape);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Frame;
    use crate::reference::{
        fd_pick_targets, fd_probe_params, image_visual_f64, octree_visual_f64, random_octree,
        rel_err,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn octree_obs(rng: &mut ChaCha8Rng) -> Observation {
        let o = random_octree(rng, 120);
        let mut proprio = [0.0f32; PROPRIO_DIM];
        for p in &mut proprio {
            *p = rng.gen_range(-1.0..1.0);
        }
        let frame = Frame {
            data: ObsData::Octree(o),
            proprio,
        };
        let next = Frame {
            data: ObsData::Octree(random_octree(rng, 120)),
            proprio,
        };
        Observation::initial(frame).advance(next)
    }

    /// Images that are constant (depth miss, black) outside one textured
    /// patch. Shared conv weights then touch few independently varying
    /// positions, which keeps end-to-end FD probes well conditioned.
    fn patch_image_obs(rng: &mut ChaCha8Rng) -> Observation {
        let mk = |rng: &mut ChaCha8Rng| {
            let mut depth = Image::filled(IMG_SIZE, IMG_SIZE, 0.0);
            let mut intensity = Image::filled(IMG_SIZE, IMG_SIZE, 0.0);
            let u0 = rng.gen_range(8..IMG_SIZE - 32);
            let v0 = rng.gen_range(8..IMG_SIZE - 32);
            for dv in 0..24 {
                for du in 0..24 {
                    depth.set(u0 + du, v0 + dv, rng.gen_range(0.2..0.9));
                    intensity.set(u0 + du, v0 + dv, rng.gen_range(0.0..1.0));
                }
            }
            Frame {
                data: ObsData::Image { depth, intensity },
                proprio: [0.25; PROPRIO_DIM],
            }
        };
        let a = mk(rng);
        let b = mk(rng);
        Observation::initial(a).advance(b)
    }

    #[test]
    fn parameter_budgets_hit_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let oct = OctreeExtractor::new(&mut rng);
        let img = ImageExtractor::new(&mut rng);
        assert_eq!(oct.param_count(), 311_088);
        assert_eq!(img.param_count(), 310_496);
        let parity = (oct.param_count() as f64 - img.param_count() as f64).abs()
            / oct.param_count() as f64;
        assert!(parity <= 0.05, "parity {parity}");
        for n in [oct.param_count(), img.param_count()] {
            assert!((n as f64 - 315_000.0).abs() / 315_000.0 <= 0.05);
        }
    }

    #[test]
    fn empty_octree_encodes_to_relu_of_fc_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let ex = OctreeExtractor::new(&mut rng);
        let empty = Octree::from_parts(4, crate::geometry::Vec3::ZERO, 0.4, vec![], vec![])
            .unwrap();
        let (vis, _) = ex.forward_frame(&empty).unwrap();
        let want: Vec<f32> = ex.fc.b.data().iter().map(|&b| b.max(0.0)).collect();
        assert_eq!(vis, want);
    }

    #[test]
    fn identical_frames_produce_repeated_half_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let mut ex = OctreeExtractor::new(&mut rng);
        let frame = Frame {
            data: ObsData::Octree(random_octree(&mut rng, 80)),
            proprio: [0.5; PROPRIO_DIM],
        };
        let obs = Observation::initial(frame);
        let out = ex.forward_stacked(&[&obs]).unwrap();
        let fd = ex.frame_dim();
        assert_eq!(out.shape(), [1, 2 * fd]);
        assert_eq!(out.data()[..fd], out.data()[fd..]);
    }

    #[test]
    fn forward_is_deterministic_and_backward_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let mut ex = OctreeExtractor::new(&mut rng);
        let obs = octree_obs(&mut rng);
        let a = ex.forward_stacked(&[&obs]).unwrap();
        let b = ex.forward_stacked(&[&obs]).unwrap();
        assert_eq!(a.data(), b.data());

        let g = Tensor::uniform(&[1, ex.obs_dim()], 1.0, &mut rng);
        ex.backward_stacked(&g).unwrap();
        let g1: Vec<f32> = ex.conv1.w.grad().unwrap().to_vec();
        ex.backward_stacked(&g).unwrap();
        assert_eq!(ex.conv1.w.grad().unwrap(), &g1[..]);
    }

    #[test]
    fn backward_before_forward_is_graph_not_built() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let mut ex = OctreeExtractor::new(&mut rng);
        let g = Tensor::zeros(&[1, ex.obs_dim()]);
        assert!(matches!(
            ex.backward_stacked(&g),
            Err(NetError::GraphNotBuilt)
        ));
        let mut img = ImageExtractor::new(&mut rng);
        let g = Tensor::zeros(&[1, img.obs_dim()]);
        assert!(matches!(
            img.backward_stacked(&g),
            Err(NetError::GraphNotBuilt)
        ));
    }

    /// f64 oracle of the stacked octree loss: visual features per frame via
    /// the dense mirror, dotted with the visual slices of `coef`.
    fn octree_oracle_loss(ex: &OctreeExtractor, obs: &Observation, coef: &[f64]) -> f64 {
        let fd = ex.frame_dim();
        let mut loss = 0.0;
        for (k, frame) in obs.frames.iter().enumerate() {
            let vis = octree_visual_f64(
                OctreeExtractor::frame_octree(&frame.data),
                ex.conv1.w.data(),
                ex.conv1.b.data(),
                ex.conv2.w.data(),
                ex.conv2.b.data(),
                ex.fc.w.data(),
                ex.fc.b.data(),
            );
            loss += vis
                .iter()
                .zip(&coef[k * fd..k * fd + OCT_VISUAL])
                .map(|(&v, &c)| v * c)
                .sum::<f64>();
        }
        loss
    }

    fn image_oracle_loss(ex: &ImageExtractor, obs: &Observation, coef: &[f64]) -> f64 {
        let fd = ex.frame_dim();
        let convs: Vec<(&[f32], &[f32])> = ex
            .convs
            .iter()
            .map(|c| (c.w.data(), c.b.data()))
            .collect();
        let mut loss = 0.0;
        for (k, frame) in obs.frames.iter().enumerate() {
            let (depth, intensity) = ImageExtractor::frame_images(&frame.data);
            let vis = image_visual_f64(depth, intensity, &convs, ex.fc.w.data(), ex.fc.b.data());
            loss += vis
                .iter()
                .zip(&coef[k * fd..k * fd + IMG_VISUAL])
                .map(|(&v, &c)| v * c)
                .sum::<f64>();
        }
        loss
    }

    #[test]
    fn octree_extractor_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let mut ex = OctreeExtractor::new(&mut rng);
        let obs = octree_obs(&mut rng);
        let coef: Vec<f64> = (0..ex.obs_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let g = Tensor::from_vec(&[1, ex.obs_dim()], coef.iter().map(|&c| c as f32).collect())
            .unwrap();
        let feats = ex.forward_stacked(&[&obs]).unwrap();
        ex.backward_stacked(&g).unwrap();

        // The f64 oracle must itself mirror the production forward.
        let fd = ex.frame_dim();
        for (k, frame) in obs.frames.iter().enumerate() {
            let vis = octree_visual_f64(
                OctreeExtractor::frame_octree(&frame.data),
                ex.conv1.w.data(),
                ex.conv1.b.data(),
                ex.conv2.w.data(),
                ex.conv2.b.data(),
                ex.fc.w.data(),
                ex.fc.b.data(),
            );
            for (i, &v) in vis.iter().enumerate() {
                let got = feats.data()[k * fd + i] as f64;
                assert!(rel_err(got, v) < 1e-3, "oracle drift at {i}: {got} vs {v}");
            }
        }

        let params: Vec<&Tensor> = ex.params().into_iter().map(|(_, p)| p).collect();
        let targets = fd_pick_targets(&params, 4, &mut rng);
        assert!(targets.len() >= 16, "too few live gradient samples");
        let (worst, valid) = fd_probe_params(
            &mut ex,
            &targets,
            1e-3,
            1e-2,
            1e-9,
            |e, t, j| e.params_mut()[t].1.data_mut()[j],
            |e, t, j, v| e.params_mut()[t].1.data_mut()[j] = v,
            |e| octree_oracle_loss(e, &obs, &coef),
        );
        assert!(valid * 2 >= targets.len(), "too many void probes: {valid}");
        assert!(worst < 1e-2, "octree extractor fd mismatch: {worst}");
    }

    #[test]
    fn image_extractor_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let mut ex = ImageExtractor::new(&mut rng);
        let obs = patch_image_obs(&mut rng);
        let coef: Vec<f64> = (0..ex.obs_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let g = Tensor::from_vec(&[1, ex.obs_dim()], coef.iter().map(|&c| c as f32).collect())
            .unwrap();
        let feats = ex.forward_stacked(&[&obs]).unwrap();
        ex.backward_stacked(&g).unwrap();

        let fd = ex.frame_dim();
        let convs: Vec<(&[f32], &[f32])> = ex
            .convs
            .iter()
            .map(|c| (c.w.data(), c.b.data()))
            .collect();
        for (k, frame) in obs.frames.iter().enumerate() {
            let (depth, intensity) = ImageExtractor::frame_images(&frame.data);
            let vis = image_visual_f64(depth, intensity, &convs, ex.fc.w.data(), ex.fc.b.data());
            for (i, &v) in vis.iter().enumerate() {
                let got = feats.data()[k * fd + i] as f64;
                assert!(rel_err(got, v) < 1e-3, "oracle drift at {i}: {got} vs {v}");
            }
        }
        drop(convs);

        let params: Vec<&Tensor> = ex.params().into_iter().map(|(_, p)| p).collect();
        let targets = fd_pick_targets(&params, 3, &mut rng);
        assert!(targets.len() >= 16, "too few live gradient samples");
        let (worst, valid) = fd_probe_params(
            &mut ex,
            &targets,
            1e-3,
            1e-2,
            1e-9,
            |e, t, j| e.params_mut()[t].1.data_mut()[j],
            |e, t, j, v| e.params_mut()[t].1.data_mut()[j] = v,
            |e| image_oracle_loss(e, &obs, &coef),
        );
        assert!(valid * 2 >= targets.len(), "too many void probes: {valid}");
        assert!(worst < 1e-2, "image extractor fd mismatch: {worst}");
    }

    #[test]
    fn image_extractor_rejects_wrong_resolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let ex = ImageExtractor::new(&mut rng);
        let small = Image::filled(64, 64, 0.5);
        assert!(matches!(
            ex.forward_frame(&small, &small),
            Err(NetError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn invalid_depth_pixels_normalize_to_far_plane() {
        let mut depth = Image::filled(IMG_SIZE, IMG_SIZE, 0.5);
        depth.set(3, 7, 0.0);
        depth.set(10, 2, f32::NAN);
        depth.set(11, 2, 2.5);
        let intensity = Image::filled(IMG_SIZE, IMG_SIZE, 0.25);
        let x = ImageExtractor::input_tensor(&depth, &intensity).unwrap();
        let at = |u: usize, v: usize| x.data()[(v * IMG_SIZE + u) * 2];
        assert_eq!(at(3, 7), 1.0);
        assert_eq!(at(10, 2), 1.0);
        assert_eq!(at(11, 2), 1.0);
        assert_eq!(at(0, 0), 0.5);
    }
}
