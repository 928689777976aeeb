//! Squashed-Gaussian policy head math.
//!
//! The actor head emits `[mu_0..mu_4, logstd_0..logstd_4]` per row. An
//! action is a = tanh(mu + sigma * z) with z standard normal; its log
//! density carries the tanh change-of-variables term, computed via the
//! stable identity log(1 - tanh^2 u) = 2*(ln 2 - u - softplus(-2u)).

use rand::Rng;
use rand_distr::StandardNormal;

pub const ACTION_DIM: usize = 5;
pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918938533204672742;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Squash one dimension: returns (action, log-density contribution).
/// With sigma = 0 the action is exactly tanh(mu) and the density is ignored.
pub(crate) fn squash(mu: f64, sigma: f64, log_sigma: f64, z: f64) -> (f64, f64) {
    let u = mu + sigma * z;
    let a = u.tanh();
    // log N(u; mu, sigma) - log(1 - a^2), with z = (u - mu) / sigma.
    let logp = -log_sigma - HALF_LN_2PI - 0.5 * z * z - 2.0 * ((2.0f64).ln() - u - softplus(-2.0 * u));
    (a, logp)
}

/// Exact log density of a single squashed-Gaussian component at action `a`.
pub fn squashed_log_density(mu: f64, log_std: f64, a: f64) -> f64 {
    let sigma = log_std.exp();
    let u = a.atanh();
    let z = (u - mu) / sigma;
    squash(mu, sigma, log_std, z).1
}

/// One reparameterized draw per batch row, with everything the backward
/// pass needs cached.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    batch: usize,
    /// Actions in (-1, 1), `[batch * ACTION_DIM]`.
    actions: Vec<f64>,
    /// Summed log density per row, `[batch]`.
    log_probs: Vec<f64>,
    sigma: Vec<f64>,
    z: Vec<f64>,
    /// Raw log-std within the clamp range (gradient passes only here).
    in_range: Vec<bool>,
}

/// Draw actions from the head output `[batch, 2 * ACTION_DIM]`.
pub fn sample_policy<R: Rng>(head_out: &[f32], batch: usize, rng: &mut R) -> SquashedSample {
    assert_eq!(head_out.len(), batch * 2 * ACTION_DIM, "head output length");
    let n = batch * ACTION_DIM;
    let mut s = SquashedSample {
        batch,
        actions: vec![0.0; n],
        log_probs: vec![0.0; batch],
        sigma: vec![0.0; n],
        z: vec![0.0; n],
        in_range: vec![false; n],
    };
    for b in 0..batch {
        let row = &head_out[b * 2 * ACTION_DIM..(b + 1) * 2 * ACTION_DIM];
        let mut logp = 0.0;
        for i in 0..ACTION_DIM {
            let mu = row[i] as f64;
            let raw = row[ACTION_DIM + i] as f64;
            let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
            let sigma = ls.exp();
            let z: f64 = rng.sample(StandardNormal);
            let (a, lp) = squash(mu, sigma, ls, z);
            let at = b * ACTION_DIM + i;
            s.actions[at] = a;
            s.sigma[at] = sigma;
            s.z[at] = z;
            s.in_range[at] = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw);
            logp += lp;
        }
        s.log_probs[b] = logp;
    }
    s
}

/// Deterministic policy: tanh of the means.
pub fn deterministic_actions(head_out: &[f32], batch: usize) -> Vec<f64> {
    assert_eq!(head_out.len(), batch * 2 * ACTION_DIM, "head output length");
    let mut out = vec![0.0; batch * ACTION_DIM];
    for b in 0..batch {
        for i in 0..ACTION_DIM {
            out[b * ACTION_DIM + i] = (head_out[b * 2 * ACTION_DIM + i] as f64).tanh();
        }
    }
    out
}

impl SquashedSample {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn actions(&self) -> &[f64] {
        &self.actions
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Gradient of sum_b coef_logp[b] * log_prob[b]
    ///            + sum_{b,i} coef_action[b,i] * action[b,i]
    /// with respect to the raw head outputs, as `[batch, 2 * ACTION_DIM]`.
    ///
    /// Per dimension, with a = tanh(mu + sigma z) and z fixed:
    ///   d log_prob / d mu      = 2a
    ///   d log_prob / d log_std = -1 + 2a * sigma * z
    ///   d a / d mu             = 1 - a^2
    ///   d a / d log_std        = (1 - a^2) * sigma * z
    /// Log-std gradients are zeroed where the raw value sat outside the
    /// clamp range.
    pub fn head_grad(&self, coef_logp: &[f64], coef_action: &[f64]) -> Vec<f32> {
        assert_eq!(coef_logp.len(), self.batch, "log-prob coefficient length");
        assert_eq!(
            coef_action.len(),
            self.batch * ACTION_DIM,
            "action coefficient length"
        );
        let mut g = vec![0.0f32; self.batch * 2 * ACTION_DIM];
        for b in 0..self.batch {
            let cl = coef_logp[b];
            for i in 0..ACTION_DIM {
                let at = b * ACTION_DIM + i;
                let a = self.actions[at];
                let sz = self.sigma[at] * self.z[at];
                let da = 1.0 - a * a;
                let ca = coef_action[at];
                let dmu = cl * 2.0 * a + ca * da;
                let mut dls = cl * (-1.0 + 2.0 * a * sz) + ca * da * sz;
                if !self.in_range[at] {
                    dls = 0.0;
                }
                g[b * 2 * ACTION_DIM + i] = dmu as f32;
                g[b * 2 * ACTION_DIM + ACTION_DIM + i] = dls as f32;
            }
        }
        g
    }
}
