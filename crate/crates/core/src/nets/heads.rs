use rand::Rng;

use super::layers::{Dense, DenseCtx, Relu, ReluCtx};
use super::policy::ACTION_DIM;
use super::tensor::{polyak, Tensor};
use super::NetError;

/// Critic atoms per head.
pub const ATOMS: usize = 25;
const HIDDEN: usize = 256;

/// Two hidden layers then means and log-stds for the squashed policy.
#[derive(Debug, Clone)]
pub struct ActorHead {
    pub l1: Dense,
    pub l2: Dense,
    pub out: Dense,
}

#[derive(Debug, Clone)]
pub struct ActorHeadCtx {
    c1: DenseCtx,
    r1: ReluCtx,
    c2: DenseCtx,
    r2: ReluCtx,
    c3: DenseCtx,
}

/// Two hidden layers over [features, action] then one quantile atom set.
#[derive(Debug, Clone)]
pub struct CriticHead {
    pub l1: Dense,
    pub l2: Dense,
    pub out: Dense,
}

pub type CriticHeadCtx = ActorHeadCtx;

fn mlp_forward(
    l1: &Dense,
    l2: &Dense,
    out: &Dense,
    x: &Tensor,
) -> Result<(Tensor, ActorHeadCtx), NetError> {
    let (h1, c1) = l1.forward(x)?;
    let (a1, r1) = Relu.forward(&h1);
    let (h2, c2) = l2.forward(&a1)?;
    let (a2, r2) = Relu.forward(&h2);
    let (y, c3) = out.forward(&a2)?;
    Ok((y, ActorHeadCtx { c1, r1, c2, r2, c3 }))
}

fn mlp_backward(
    l1: &mut Dense,
    l2: &mut Dense,
    out: &mut Dense,
    ctx: &ActorHeadCtx,
    gy: &Tensor,
) -> Tensor {
    let g2 = out.backward(&ctx.c3, gy);
    let g2 = Relu.backward(&ctx.r2, &g2);
    let g1 = l2.backward(&ctx.c2, &g2);
    let g1 = Relu.backward(&ctx.r1, &g1);
    l1.backward(&ctx.c1, &g1)
}

impl ActorHead {
    pub fn new<R: Rng>(feat_dim: usize, rng: &mut R) -> ActorHead {
        Self::with_hidden(feat_dim, HIDDEN, rng)
    }

    pub fn with_hidden<R: Rng>(feat_dim: usize, hidden: usize, rng: &mut R) -> ActorHead {
        ActorHead {
            l1: Dense::new(feat_dim, hidden, rng),
            l2: Dense::new(hidden, hidden, rng),
            out: Dense::new(hidden, 2 * ACTION_DIM, rng),
        }
    }

    pub fn feat_dim(&self) -> usize {
        self.l1.in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.out.param_count()
    }

    /// `[batch, feat]` to `[batch, 2 * ACTION_DIM]` (means then log-stds).
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, ActorHeadCtx), NetError> {
        mlp_forward(&self.l1, &self.l2, &self.out, x)
    }

    /// Accumulates parameter gradients; returns the feature gradient.
    pub fn backward(&mut self, ctx: &ActorHeadCtx, gy: &Tensor) -> Tensor {
        mlp_backward(&mut self.l1, &mut self.l2, &mut self.out, ctx, gy)
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("l1.w", &self.l1.w),
            ("l1.b", &self.l1.b),
            ("l2.w", &self.l2.w),
            ("l2.b", &self.l2.b),
            ("out.w", &self.out.w),
            ("out.b", &self.out.b),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("l1.w", &mut self.l1.w),
            ("l1.b", &mut self.l1.b),
            ("l2.w", &mut self.l2.w),
            ("l2.b", &mut self.l2.b),
            ("out.w", &mut self.out.w),
            ("out.b", &mut self.out.b),
        ]
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }
}

impl CriticHead {
    pub fn new<R: Rng>(feat_dim: usize, rng: &mut R) -> CriticHead {
        Self::with_hidden(feat_dim, HIDDEN, rng)
    }

    pub fn with_hidden<R: Rng>(feat_dim: usize, hidden: usize, rng: &mut R) -> CriticHead {
        CriticHead {
            l1: Dense::new(feat_dim + ACTION_DIM, hidden, rng),
            l2: Dense::new(hidden, hidden, rng),
            out: Dense::new(hidden, ATOMS, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.l1.in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count() + self.out.param_count()
    }

    /// `[batch, feat + ACTION_DIM]` to `[batch, ATOMS]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, CriticHeadCtx), NetError> {
        mlp_forward(&self.l1, &self.l2, &self.out, x)
    }

    /// Accumulates parameter gradients; returns the input gradient, whose
    /// action columns drive the actor update.
    pub fn backward(&mut self, ctx: &CriticHeadCtx, gy: &Tensor) -> Tensor {
        mlp_backward(&mut self.l1, &mut self.l2, &mut self.out, ctx, gy)
    }

    pub fn params(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("l1.w", &self.l1.w),
            ("l1.b", &self.l1.b),
            ("l2.w", &self.l2.w),
            ("l2.b", &self.l2.b),
            ("out.w", &self.out.w),
            ("out.b", &self.out.b),
        ]
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("l1.w", &mut self.l1.w),
            ("l1.b", &mut self.l1.b),
            ("l2.w", &mut self.l2.w),
            ("l2.b", &mut self.l2.b),
            ("out.w", &mut self.out.w),
            ("out.b", &mut self.out.b),
        ]
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Polyak-average `online` into this head.
    pub fn track(&mut self, online: &CriticHead, tau: f64) -> Result<(), NetError> {
        for ((_, t), (_, o)) in self.params_mut().into_iter().zip(online.params()) {
            polyak(t, o, tau)?;
        }
        Ok(())
    }
}
