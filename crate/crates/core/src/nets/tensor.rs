use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

/// Row-major f32 tensor of up to 5 dimensions with an optional gradient
/// buffer of the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        assert!(!shape.is_empty() && shape.len() <= 5, "1 to 5 dims");
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor, NetError> {
        if shape.is_empty() || shape.len() > 5 || shape.iter().product::<usize>() != data.len() {
            return Err(NetError::ShapeMismatch {
                expected: shape.to_vec(),
                got: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// Elementwise U(-bound, bound) draw; used for fan-in-scaled init.
    pub fn uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in &mut t.data {
            *v = rng.gen_range(-bound..bound) as f32;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated zeroed on first use.
    pub fn grad_mut(&mut self) -> &mut [f32] {
        self.grad.get_or_insert_with(|| vec![0.0; self.data.len()])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Elementwise `target <- (1 - tau) * target + tau * online`.
pub fn polyak(target: &mut Tensor, online: &Tensor, tau: f64) -> Result<(), NetError> {
    if target.shape != online.shape {
        return Err(NetError::ShapeMismatch {
            expected: target.shape.clone(),
            got: online.shape.clone(),
        });
    }
    let t = tau as f32;
    for (d, o) in target.data.iter_mut().zip(&online.data) {
        *d = (1.0 - t) * *d + t * o;
    }
    Ok(())
}

/// Linear decay from `initial` at step 0 to exactly 0 at `total_steps`.
pub fn linear_lr(initial: f64, step: u64, total_steps: u64) -> f64 {
    if total_steps == 0 {
        return initial;
    }
    let frac = (step.min(total_steps) as f64) / total_steps as f64;
    initial * (1.0 - frac)
}

/// Adam with bias correction. One instance drives a fixed set of parameter
/// tensors; state is indexed by position, so the caller must pass the same
/// tensors in the same order every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new() -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over `params` at learning rate `lr`. Tensors without a
    /// gradient buffer are skipped (their moment slots stay zero).
    pub fn apply(&mut self, params: &mut [&mut Tensor], lr: f64) {
        if self.m.len() < params.len() {
            for p in params.iter().skip(self.m.len()) {
                self.m.push(vec![0.0; p.len()]);
                self.v.push(vec![0.0; p.len()]);
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = p.grad.as_deref() else { continue };
            assert_eq!(g.len(), self.m[i].len(), "param {i} changed size");
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.len() {
                let gj = g[j] as f64;
                let mj = self.beta1 * m[j] as f64 + (1.0 - self.beta1) * gj;
                let vj = self.beta2 * v[j] as f64 + (1.0 - self.beta2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + self.eps);
                let d = p.data[j] as f64 - update;
                p.data[j] = d as f32;
            }
        }
    }

    /// Flatten optimizer state for checkpointing, in parameter order.
    pub fn state(&self) -> (u64, &[Vec<f32>], &[Vec<f32>]) {
        (self.step, &self.m, &self.v)
    }

    pub fn restore(&mut self, step: u64, m: Vec<Vec<f32>>, v: Vec<Vec<f32>>) {
        self.step = step;
        self.m = m;
        self.v = v;
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn tensor_shape_and_grad_lifecycle() {
        let mut t = Tensor::zeros(&[2, 3]);
        assert_eq!(t.len(), 6);
        assert!(t.grad().is_none());
        t.grad_mut()[4] = 2.5;
        assert_eq!(t.grad().unwrap()[4], 2.5);
        t.zero_grad();
        assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_vec(&[4], vec![0.0; 4]).is_ok());
    }

    #[test]
    fn uniform_respects_bound_and_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Tensor::uniform(&[100], 0.25, &mut rng);
        assert!(a.data().iter().all(|v| v.abs() < 0.25));
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        let b = Tensor::uniform(&[100], 0.25, &mut rng2);
        assert_eq!(a, b);
    }

    #[test]
    fn polyak_endpoint_and_midpoint_cases() {
        let online = Tensor::from_vec(&[2], vec![2.0, 4.0]).unwrap();
        let mut t = Tensor::zeros(&[2]);
        polyak(&mut t, &online, 0.0).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0]);
        polyak(&mut t, &online, 1.0).unwrap();
        assert_eq!(t.data(), &[2.0, 4.0]);
        let mut half = Tensor::zeros(&[2]);
        polyak(&mut half, &online, 0.5).unwrap();
        assert_eq!(half.data(), &[1.0, 2.0]);
        let mut bad = Tensor::zeros(&[3]);
        assert!(matches!(
            polyak(&mut bad, &online, 0.5),
            Err(NetError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn lr_schedule_endpoints_exact() {
        assert_eq!(linear_lr(2.0e-4, 0, 500_000), 2.0e-4);
        assert_eq!(linear_lr(2.0e-4, 500_000, 500_000), 0.0);
        assert_eq!(linear_lr(2.0e-4, 750_000, 500_000), 0.0);
        let mid = linear_lr(2.0e-4, 250_000, 500_000);
        assert!((mid - 1.0e-4).abs() < 1e-19);
    }

    #[test]
    fn adam_first_step_is_lr_sized_descent() {
        // With bias correction the first update is lr * g / (|g| + eps).
        let mut p = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        p.grad_mut().copy_from_slice(&[0.5, -2.0]);
        let mut opt = Adam::new();
        opt.apply(&mut [&mut p], 0.01);
        assert!((p.data()[0] - (1.0 - 0.01)).abs() < 1e-6);
        assert!((p.data()[1] - (-1.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // Minimize (x - 3)^2 by analytic gradient.
        let mut p = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let mut opt = Adam::new();
        for _ in 0..4000 {
            let x = p.data()[0];
            p.grad_mut()[0] = 2.0 * (x - 3.0);
            opt.apply(&mut [&mut p], 0.01);
        }
        assert!((p.data()[0] - 3.0).abs() < 1e-3, "got {}", p.data()[0]);
    }

    #[test]
    fn adam_state_round_trip() {
        let mut p = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        p.grad_mut()[0] = 1.0;
        let mut a = Adam::new();
        a.apply(&mut [&mut p], 0.01);
        let (step, m, v) = a.state();
        let mut b = Adam::new();
        b.restore(step, m.to_vec(), v.to_vec());
        let mut pa = p.clone();
        let mut pb = p.clone();
        a.apply(&mut [&mut pa], 0.01);
        b.apply(&mut [&mut pb], 0.01);
        assert_eq!(pa.data(), pb.data());
    }
}
