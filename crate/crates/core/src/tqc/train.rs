use serde::{Deserialize, Serialize};

use crate::env::{Action, GraspEnv};
use crate::nets::{linear_lr, ACTION_DIM};

use super::agent::TqcAgent;
use super::config::GradientCadence;
use super::replay::{ReplayBuffer, Transition};
use super::TqcError;

/// One finished collection episode, handed to the `on_episode` hook.
/// Like [`EvalPoint`] it carries no wall-clock data, so trace streams from
/// identically seeded runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    /// 1-based episode index.
    pub episode: u64,
    /// Environment step at which the episode ended.
    pub end_step: u64,
    pub length: u32,
    pub episode_return: f64,
    pub success: bool,
    /// Object lift achieved on the final step.
    pub lift_height: f64,
    /// Curriculum lift requirement in force during the episode.
    pub required_lift: f64,
}

/// One evaluation record, emitted every `eval_every` environment steps.
/// Loss fields are means over the gradient steps since the previous record.
/// Deliberately carries no wall-clock data so metric streams from
/// identically seeded runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub mean_return: f64,
    pub success_rate: f64,
    pub alpha: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub grad_steps: u64,
}

/// Runs `episodes` episodes under the deterministic policy; returns the
/// mean episode return and the success rate.
pub fn evaluate(
    agent: &TqcAgent,
    env: &mut GraspEnv,
    episodes: usize,
) -> Result<(f64, f64), TqcError> {
    assert!(episodes > 0, "evaluation needs at least one episode");
    let mut total_return = 0.0;
    let mut wins = 0usize;
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        loop {
            let action = agent.act_deterministic(&obs)?;
            let res = env.step(&Action::from_array(action))?;
            total_return += res.reward;
            obs = res.obs;
            if res.done {
                if res.info.success {
                    wins += 1;
                }
                break;
            }
        }
    }
    Ok((
        total_return / episodes as f64,
        wins as f64 / episodes as f64,
    ))
}

/// Off-policy training driven by the agent's own config. Collection uses
/// the stochastic policy plus exploration noise; gradient updates run on
/// the configured cadence at the linearly annealed learning rate. Each
/// finished collection episode is handed to `on_episode`, and every
/// `eval_every` steps the deterministic policy is scored on `eval_env` and
/// handed to `on_eval` together with the agent (the checkpoint hook).
pub fn train(
    agent: &mut TqcAgent,
    env: &mut GraspEnv,
    eval_env: &mut GraspEnv,
    mut on_episode: impl FnMut(&EpisodeTrace) -> Result<(), TqcError>,
    mut on_eval: impl FnMut(&EvalPoint, &TqcAgent) -> Result<(), TqcError>,
) -> Result<Vec<EvalPoint>, TqcError> {
    let cfg = *agent.config();
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut points = Vec::new();
    let mut obs = env.reset()?;
    let mut ratio_budget = 0.0f64;
    let mut loss_sums = [0.0f64; 3];
    let mut loss_count = 0u64;
    let mut episode = 0u64;
    let mut ep_return = 0.0f64;
    let mut ep_len = 0u32;
    for step in 1..=cfg.total_steps {
        let action = agent.act_explore(&obs)?;
        let res = env.step(&Action::from_array(action))?;
        let mut act32 = [0.0f32; ACTION_DIM];
        for (dst, &src) in act32.iter_mut().zip(&action) {
            *dst = src as f32;
        }
        buffer.push(Transition {
            obs,
            action: act32,
            reward: res.reward,
            next_obs: res.obs.clone(),
            done: res.done,
        })?;
        ep_return += res.reward;
        ep_len += 1;
        if res.done {
            episode += 1;
            // Read before the reset below: reset recomputes the curriculum.
            on_episode(&EpisodeTrace {
                episode,
                end_step: step,
                length: ep_len,
                episode_return: ep_return,
                success: res.info.success,
                lift_height: res.info.lift_height,
                required_lift: env.lift_height(),
            })?;
            ep_return = 0.0;
            ep_len = 0;
        }
        let due = match cfg.cadence {
            GradientCadence::PerEpisode(k) => {
                if res.done {
                    u64::from(k)
                } else {
                    0
                }
            }
            GradientCadence::PerStepRatio(r) => {
                ratio_budget += r;
                let k = ratio_budget.floor();
                ratio_budget -= k;
                k as u64
            }
        };
        obs = if res.done { env.reset()? } else { res.obs };
        let lr = linear_lr(cfg.lr_initial, step, cfg.total_steps);
        for _ in 0..due {
            if buffer.len() < cfg.batch_size {
                break;
            }
            let stats = agent.update(&buffer, lr)?;
            loss_sums[0] += stats.critic_loss;
            loss_sums[1] += stats.actor_loss;
            loss_sums[2] += stats.alpha_loss;
            loss_count += 1;
        }
        if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
            let (mean_return, success_rate) = evaluate(agent, eval_env, cfg.eval_episodes)?;
            let denom = loss_count.max(1) as f64;
            let point = EvalPoint {
                step,
                mean_return,
                success_rate,
                alpha: agent.alpha(),
                critic_loss: loss_sums[0] / denom,
                actor_loss: loss_sums[1] / denom,
                alpha_loss: loss_sums[2] / denom,
                grad_steps: agent.grad_steps(),
            };
            on_eval(&point, agent)?;
            points.push(point);
            loss_sums = [0.0; 3];
            loss_count = 0;
        }
    }
    Ok(points)
}
