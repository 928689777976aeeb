use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::env::{ObsMode, Observation};
use crate::nets::{
    deterministic_actions, sample_policy, ActorHead, Adam, CriticHead, ImageExtractor, NetError,
    OctreeExtractor, Snapshot, SnapshotEntry, Tensor, ACTION_DIM, ATOMS, SNAPSHOT_VERSION,
};

use super::losses::{actor_objective, alpha_objective, quantile_huber, target_distribution};
use super::replay::ReplayBuffer;
use super::{TqcConfig, TqcError};

/// Observation-mode dispatch over the two extractor architectures.
pub enum Extractor {
    Octree(Box<OctreeExtractor>),
    Image(Box<ImageExtractor>),
}

impl Extractor {
    fn new<R: Rng>(mode: ObsMode, rng: &mut R) -> Extractor {
        match mode {
            ObsMode::Octree => Extractor::Octree(Box::new(OctreeExtractor::new(rng))),
            ObsMode::Image => Extractor::Image(Box::new(ImageExtractor::new(rng))),
        }
    }

    pub fn mode(&self) -> ObsMode {
        match self {
            Extractor::Octree(_) => ObsMode::Octree,
            Extractor::Image(_) => ObsMode::Image,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Extractor::Octree(e) => e.obs_dim(),
            Extractor::Image(e) => e.obs_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Extractor::Octree(e) => e.param_count(),
            Extractor::Image(e) => e.param_count(),
        }
    }

    fn features(&self, obs: &[&Observation]) -> Result<Tensor, NetError> {
        match self {
            Extractor::Octree(e) => e.features(obs),
            Extractor::Image(e) => e.features(obs),
        }
    }

    fn forward_stacked(&mut self, obs: &[&Observation]) -> Result<Tensor, NetError> {
        match self {
            Extractor::Octree(e) => e.forward_stacked(obs),
            Extractor::Image(e) => e.forward_stacked(obs),
        }
    }

    fn backward_stacked(&mut self, g: &Tensor) -> Result<(), NetError> {
        match self {
            Extractor::Octree(e) => e.backward_stacked(g),
            Extractor::Image(e) => e.backward_stacked(g),
        }
    }

    fn params(&self) -> Vec<(String, &Tensor)> {
        match self {
            Extractor::Octree(e) => e
                .params()
                .into_iter()
                .map(|(n, t)| (n.to_string(), t))
                .collect(),
            Extractor::Image(e) => e.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            Extractor::Octree(e) => e
                .params_mut()
                .into_iter()
                .map(|(n, t)| (n.to_string(), t))
                .collect(),
            Extractor::Image(e) => e.params_mut(),
        }
    }
}

/// Loss values of one gradient step; `alpha` is the temperature the step
/// was computed with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

/// Truncated-quantile-critics agent: a squashed-Gaussian actor and an
/// ensemble of distributional critics over a shared frozen-or-live feature
/// extractor, plus Polyak-averaged target critics and a learned entropy
/// temperature.
///
/// One [`update`](TqcAgent::update) performs, in order: critic regression
/// onto the truncated pooled target atoms, an actor step through fresh
/// reparameterized actions, a temperature step, and a Polyak target update.
/// The critics always consume detached features; the extractor learns
/// through the actor objective alone.
pub struct TqcAgent {
    cfg: TqcConfig,
    extractor: Extractor,
    actor: ActorHead,
    critics: Vec<CriticHead>,
    targets: Vec<CriticHead>,
    log_alpha: Tensor,
    opt_actor: Adam,
    opt_critic: Adam,
    opt_alpha: Adam,
    rng: ChaCha8Rng,
}

impl TqcAgent {
    pub fn new(cfg: TqcConfig, mode: ObsMode, seed: u64) -> Result<TqcAgent, TqcError> {
        cfg.validate()?;
        if cfg.atoms != ATOMS {
            return Err(TqcError::InvalidConfig(
                "atoms must match the critic head width",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extractor = Extractor::new(mode, &mut rng);
        let dim = extractor.obs_dim();
        let actor = ActorHead::new(dim, &mut rng);
        let critics: Vec<CriticHead> = (0..cfg.n_critics)
            .map(|_| CriticHead::new(dim, &mut rng))
            .collect();
        let mut targets: Vec<CriticHead> = (0..cfg.n_critics)
            .map(|_| CriticHead::new(dim, &mut rng))
            .collect();
        for (t, c) in targets.iter_mut().zip(&critics) {
            t.track(c, 1.0)?;
        }
        Ok(TqcAgent {
            cfg,
            extractor,
            actor,
            critics,
            targets,
            log_alpha: Tensor::zeros(&[1]),
            opt_actor: Adam::new(),
            opt_critic: Adam::new(),
            opt_alpha: Adam::new(),
            rng,
        })
    }

    pub fn config(&self) -> &TqcConfig {
        &self.cfg
    }

    pub fn mode(&self) -> ObsMode {
        self.extractor.mode()
    }

    pub fn alpha(&self) -> f64 {
        (self.log_alpha.data()[0] as f64).exp()
    }

    /// Gradient steps taken so far (all optimizers step together).
    pub fn grad_steps(&self) -> u64 {
        self.opt_critic.step_count()
    }

    /// Trainable parameters: extractor, actor, and online critics.
    pub fn param_count(&self) -> usize {
        self.extractor.param_count()
            + self.actor.param_count()
            + self.critics.iter().map(|c| c.param_count()).sum::<usize>()
    }

    /// Stochastic policy action with exploration noise, clamped to
    /// [-1, 1]. Collection-time only; evaluation uses
    /// [`act_deterministic`](TqcAgent::act_deterministic).
    pub fn act_explore(&mut self, obs: &Observation) -> Result<[f64; ACTION_DIM], TqcError> {
        let f = self.extractor.features(&[obs])?;
        let (head, _) = self.actor.forward(&f)?;
        let sample = sample_policy(head.data(), 1, &mut self.rng);
        let mut action = [0.0; ACTION_DIM];
        for (a, &v) in action.iter_mut().zip(sample.actions()) {
            let noise: f64 = self.rng.sample(StandardNormal);
            *a = (v + noise * self.cfg.explore_noise).clamp(-1.0, 1.0);
        }
        Ok(action)
    }

    /// Mode of the squashed policy: `tanh` of the mean head.
    pub fn act_deterministic(&self, obs: &Observation) -> Result<[f64; ACTION_DIM], TqcError> {
        let f = self.extractor.features(&[obs])?;
        let (head, _) = self.actor.forward(&f)?;
        let acts = deterministic_actions(head.data(), 1);
        let mut action = [0.0; ACTION_DIM];
        action.copy_from_slice(&acts);
        Ok(action)
    }

    /// One gradient step at learning rate `lr`: critic, actor, temperature,
    /// then the Polyak target update.
    pub fn update(&mut self, buffer: &ReplayBuffer, lr: f64) -> Result<UpdateStats, TqcError> {
        let b = self.cfg.batch_size;
        let n = self.cfg.n_critics;
        let m = self.cfg.atoms;
        let idx = buffer.sample_indices(&mut self.rng, b)?;
        let obs: Vec<&Observation> = idx.iter().map(|&i| &buffer.get(i).obs).collect();
        let next_obs: Vec<&Observation> = idx.iter().map(|&i| &buffer.get(i).next_obs).collect();
        let rewards: Vec<f64> = idx.iter().map(|&i| buffer.get(i).reward).collect();
        let dones: Vec<bool> = idx.iter().map(|&i| buffer.get(i).done).collect();
        let mut actions = Vec::with_capacity(b * ACTION_DIM);
        for &i in &idx {
            actions.extend_from_slice(&buffer.get(i).action);
        }
        let alpha = self.alpha();

        // Critic step: soft Bellman targets from the pooled, truncated
        // target-critic atoms at (s', a' ~ pi).
        let f_next = self.extractor.features(&next_obs)?;
        let (head_next, _) = self.actor.forward(&f_next)?;
        let next = sample_policy(head_next.data(), b, &mut self.rng);
        let next_actions: Vec<f32> = next.actions().iter().map(|&a| a as f32).collect();
        let x_next = concat_actions(&f_next, &next_actions, b)?;
        let mut pooled = vec![0.0f64; b * n * m];
        for (c, target) in self.targets.iter().enumerate() {
            let (atoms, _) = target.forward(&x_next)?;
            let data = atoms.data();
            for row in 0..b {
                for j in 0..m {
                    pooled[row * n * m + c * m + j] = data[row * m + j] as f64;
                }
            }
        }
        let dropped = self.cfg.truncation.dropped(n);
        let targets = target_distribution(
            &pooled,
            b,
            dropped,
            &rewards,
            &dones,
            next.log_probs(),
            alpha,
            self.cfg.gamma,
        );

        // Online critics regress onto the shared target set through
        // detached features.
        let f_det = self.extractor.features(&obs)?;
        let x = concat_actions(&f_det, &actions, b)?;
        let inv_n = 1.0 / n as f64;
        let mut critic_loss = 0.0;
        for critic in &mut self.critics {
            critic.zero_grads();
            let (atoms, ctx) = critic.forward(&x)?;
            let atoms64: Vec<f64> = atoms.data().iter().map(|&v| v as f64).collect();
            let (loss, grad) = quantile_huber(&atoms64, b, m, &targets);
            critic_loss += loss * inv_n;
            let gy = Tensor::from_vec(
                &[b, m],
                grad.iter().map(|&g| (g * inv_n) as f32).collect(),
            )?;
            critic.backward(&ctx, &gy);
        }
        {
            let mut params: Vec<&mut Tensor> = self
                .critics
                .iter_mut()
                .flat_map(|c| c.params_mut().into_iter().map(|(_, t)| t))
                .collect();
            self.opt_critic.apply(&mut params, lr);
        }

        // Actor step: fresh reparameterized actions; the value gradient
        // reaches the policy through the critics' action inputs and the
        // extractor through the actor head alone.
        let f_on = self.extractor.forward_stacked(&obs)?;
        let (head_out, actor_ctx) = self.actor.forward(&f_on)?;
        let pi = sample_policy(head_out.data(), b, &mut self.rng);
        let pi_actions: Vec<f32> = pi.actions().iter().map(|&a| a as f32).collect();
        let x_pi = concat_actions(&f_on, &pi_actions, b)?;
        let dim = self.extractor.obs_dim();
        let mut coef_action = vec![0.0f64; b * ACTION_DIM];
        let mut q_atoms = vec![0.0f64; b * n * m];
        let gy = Tensor::from_vec(&[b, m], vec![-1.0f32 / (b * n * m) as f32; b * m])?;
        for (c, critic) in self.critics.iter_mut().enumerate() {
            let (atoms, ctx) = critic.forward(&x_pi)?;
            let data = atoms.data();
            for row in 0..b {
                for j in 0..m {
                    q_atoms[row * n * m + c * m + j] = data[row * m + j] as f64;
                }
            }
            // Dirties the critic parameter grads; the next critic step
            // zeroes them before use.
            let ig = critic.backward(&ctx, &gy);
            let ig = ig.data();
            for row in 0..b {
                for i in 0..ACTION_DIM {
                    coef_action[row * ACTION_DIM + i] +=
                        ig[row * (dim + ACTION_DIM) + dim + i] as f64;
                }
            }
        }
        let actor_loss = actor_objective(&q_atoms, b, n * m, pi.log_probs(), alpha);
        let coef_logp = vec![alpha / b as f64; b];
        let head_gy =
            Tensor::from_vec(&[b, 2 * ACTION_DIM], pi.head_grad(&coef_logp, &coef_action))?;
        self.actor.zero_grads();
        let feat_grad = self.actor.backward(&actor_ctx, &head_gy);
        self.extractor.backward_stacked(&feat_grad)?;
        {
            let mut params: Vec<&mut Tensor> = Vec::new();
            params.extend(self.actor.params_mut().into_iter().map(|(_, t)| t));
            params.extend(self.extractor.params_mut().into_iter().map(|(_, t)| t));
            self.opt_actor.apply(&mut params, lr);
        }

        // Temperature step on the fresh sample's log-probabilities.
        let (alpha_loss, dlog) = alpha_objective(
            self.log_alpha.data()[0] as f64,
            pi.log_probs(),
            self.cfg.entropy_target,
        );
        self.log_alpha.grad_mut()[0] = dlog as f32;
        self.opt_alpha.apply(&mut [&mut self.log_alpha], lr);

        for (t, c) in self.targets.iter_mut().zip(&self.critics) {
            t.track(c, self.cfg.tau)?;
        }

        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            alpha_loss,
            alpha,
        })
    }

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        out.extend(
            self.extractor
                .params()
                .into_iter()
                .map(|(n, t)| (format!("extractor.{n}"), t)),
        );
        out.extend(
            self.actor
                .params()
                .into_iter()
                .map(|(n, t)| (format!("actor.{n}"), t)),
        );
        for (c, critic) in self.critics.iter().enumerate() {
            out.extend(
                critic
                    .params()
                    .into_iter()
                    .map(move |(n, t)| (format!("critic{c}.{n}"), t)),
            );
        }
        for (c, target) in self.targets.iter().enumerate() {
            out.extend(
                target
                    .params()
                    .into_iter()
                    .map(move |(n, t)| (format!("target{c}.{n}"), t)),
            );
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = Vec::new();
        out.extend(
            self.extractor
                .params_mut()
                .into_iter()
                .map(|(n, t)| (format!("extractor.{n}"), t)),
        );
        out.extend(
            self.actor
                .params_mut()
                .into_iter()
                .map(|(n, t)| (format!("actor.{n}"), t)),
        );
        for (c, critic) in self.critics.iter_mut().enumerate() {
            out.extend(
                critic
                    .params_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("critic{c}.{n}"), t)),
            );
        }
        for (c, target) in self.targets.iter_mut().enumerate() {
            out.extend(
                target
                    .params_mut()
                    .into_iter()
                    .map(move |(n, t)| (format!("target{c}.{n}"), t)),
            );
        }
        out
    }

    fn group_of(name: &str) -> &'static str {
        if name.starts_with("extractor.") {
            "extractor"
        } else if name.starts_with("actor.") {
            "actor"
        } else if name.starts_with("critic") {
            "critic"
        } else if name.starts_with("target") {
            "target"
        } else {
            "optimizer"
        }
    }

    /// Parameter lengths each optimizer covers, in `apply` order.
    fn optimizer_lens(&self) -> (Vec<usize>, Vec<usize>) {
        let mut actor_lens: Vec<usize> =
            self.actor.params().into_iter().map(|(_, t)| t.len()).collect();
        actor_lens.extend(self.extractor.params().into_iter().map(|(_, t)| t.len()));
        let critic_lens: Vec<usize> = self
            .critics
            .iter()
            .flat_map(|c| c.params().into_iter().map(|(_, t)| t.len()))
            .collect();
        (actor_lens, critic_lens)
    }

    /// Complete training state: every online and target parameter plus all
    /// three optimizers. `step` is the caller's environment-step counter.
    pub fn snapshot(&self, step: u64) -> Snapshot {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut entries = Vec::new();
        for (name, t) in self.named_params() {
            groups
                .entry(Self::group_of(&name).to_string())
                .or_default()
                .push(name.clone());
            entries.push(SnapshotEntry {
                name,
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            });
        }
        let (actor_lens, critic_lens) = self.optimizer_lens();
        optimizer_entries("opt_actor", &self.opt_actor, &actor_lens, &mut groups, &mut entries);
        optimizer_entries(
            "opt_critic",
            &self.opt_critic,
            &critic_lens,
            &mut groups,
            &mut entries,
        );
        optimizer_entries("opt_alpha", &self.opt_alpha, &[1], &mut groups, &mut entries);
        Snapshot {
            version: SNAPSHOT_VERSION,
            step,
            alpha_log: self.log_alpha.data()[0] as f64,
            groups,
            entries,
        }
    }

    /// Restores a snapshot taken from a structurally identical agent; every
    /// parameter and optimizer moment is copied back byte-for-byte.
    pub fn restore(&mut self, snap: &Snapshot) -> Result<(), TqcError> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(TqcError::CheckpointMismatch(format!(
                "snapshot version {} (expected {})",
                snap.version, SNAPSHOT_VERSION
            )));
        }
        let expected = self.snapshot(snap.step);
        if expected.entries.len() != snap.entries.len() {
            return Err(TqcError::CheckpointMismatch(format!(
                "{} entries (expected {})",
                snap.entries.len(),
                expected.entries.len()
            )));
        }
        for (want, got) in expected.entries.iter().zip(&snap.entries) {
            if want.name != got.name || want.shape != got.shape {
                return Err(TqcError::CheckpointMismatch(format!(
                    "entry {} {:?} (expected {} {:?})",
                    got.name, got.shape, want.name, want.shape
                )));
            }
        }
        let by_name: HashMap<&str, &SnapshotEntry> =
            snap.entries.iter().map(|e| (e.name.as_str(), e)).collect();
        for (name, t) in self.named_params_mut() {
            t.data_mut().copy_from_slice(&by_name[name.as_str()].data);
        }
        let (actor_lens, critic_lens) = self.optimizer_lens();
        restore_optimizer(&mut self.opt_actor, "opt_actor", &actor_lens, &by_name);
        restore_optimizer(&mut self.opt_critic, "opt_critic", &critic_lens, &by_name);
        restore_optimizer(&mut self.opt_alpha, "opt_alpha", &[1], &by_name);
        self.log_alpha.data_mut()[0] = snap.alpha_log as f32;
        Ok(())
    }
}

/// Rows `[features, action]` for the critic input.
fn concat_actions(features: &Tensor, actions: &[f32], batch: usize) -> Result<Tensor, NetError> {
    let d = features.len() / batch;
    let mut data = Vec::with_capacity(batch * (d + ACTION_DIM));
    for b in 0..batch {
        data.extend_from_slice(&features.data()[b * d..(b + 1) * d]);
        data.extend_from_slice(&actions[b * ACTION_DIM..(b + 1) * ACTION_DIM]);
    }
    Tensor::from_vec(&[batch, d + ACTION_DIM], data)
}

/// Step counters ride in snapshots as four 16-bit limbs, exact for any u64.
fn steps_to_limbs(n: u64) -> Vec<f32> {
    (0..4).rev().map(|k| ((n >> (16 * k)) & 0xFFFF) as f32).collect()
}

fn limbs_to_steps(limbs: &[f32]) -> u64 {
    limbs.iter().fold(0, |acc, &x| (acc << 16) | (x as u64 & 0xFFFF))
}

fn optimizer_entries(
    name: &str,
    opt: &Adam,
    param_lens: &[usize],
    groups: &mut BTreeMap<String, Vec<String>>,
    entries: &mut Vec<SnapshotEntry>,
) {
    let (step, m, v) = opt.state();
    let mut add = |suffix: String, shape: Vec<usize>, data: Vec<f32>| {
        let full = format!("{name}.{suffix}");
        groups
            .entry("optimizer".to_string())
            .or_default()
            .push(full.clone());
        entries.push(SnapshotEntry {
            name: full,
            shape,
            data,
        });
    };
    add("step".to_string(), vec![4], steps_to_limbs(step));
    // Moments are padded to the full parameter list so the layout does not
    // depend on whether the optimizer has run yet; Adam initializes lazily
    // to the same zeros.
    for (k, &len) in param_lens.iter().enumerate() {
        let mk = m.get(k).cloned().unwrap_or_else(|| vec![0.0; len]);
        let vk = v.get(k).cloned().unwrap_or_else(|| vec![0.0; len]);
        add(format!("m.{k}"), vec![len], mk);
        add(format!("v.{k}"), vec![len], vk);
    }
}

fn restore_optimizer(
    opt: &mut Adam,
    name: &str,
    param_lens: &[usize],
    by_name: &HashMap<&str, &SnapshotEntry>,
) {
    // Layout already validated against the expected snapshot.
    let step = limbs_to_steps(&by_name[format!("{name}.step").as_str()].data);
    let mut m = Vec::with_capacity(param_lens.len());
    let mut v = Vec::with_capacity(param_lens.len());
    for k in 0..param_lens.len() {
        m.push(by_name[format!("{name}.m.{k}").as_str()].data.clone());
        v.push(by_name[format!("{name}.v.{k}").as_str()].data.clone());
    }
    opt.restore(step, m, v);
}
