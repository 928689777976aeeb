use serde::{Deserialize, Serialize};

use super::TqcError;

/// How many of the pooled target atoms to discard from the top.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Drop `d` atoms per critic, `d * n_critics` from the pooled set.
    PerCritic(usize),
    /// Drop a fixed count from the pooled set regardless of critic count.
    Total(usize),
}

impl Truncation {
    pub fn dropped(&self, n_critics: usize) -> usize {
        match *self {
            Truncation::PerCritic(d) => d * n_critics,
            Truncation::Total(d) => d,
        }
    }
}

/// When gradient updates run relative to environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientCadence {
    /// A burst of updates after every finished episode.
    PerEpisode(u32),
    /// `ratio` updates per environment step, fractional budgets carrying
    /// over between steps.
    PerStepRatio(f64),
}

/// Agent and training-loop hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TqcConfig {
    /// Initial learning rate, annealed linearly to zero over `total_steps`.
    pub lr_initial: f64,
    /// Environment steps the learning-rate schedule spans.
    pub total_steps: u64,
    pub batch_size: usize,
    pub cadence: GradientCadence,
    pub gamma: f64,
    /// Polyak coefficient for the target critics.
    pub tau: f64,
    /// Entropy target for the temperature update.
    pub entropy_target: f64,
    pub n_critics: usize,
    /// Atoms per critic.
    pub atoms: usize,
    pub truncation: Truncation,
    /// Standard deviation of the Gaussian noise added to sampled actions
    /// before clamping, during collection only.
    pub explore_noise: f64,
    pub buffer_capacity: usize,
    /// Evaluation cadence in environment steps; 0 disables evaluation.
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for TqcConfig {
    fn default() -> TqcConfig {
        TqcConfig {
            lr_initial: 2.0e-4,
            total_steps: 500_000,
            batch_size: 64,
            cadence: GradientCadence::PerEpisode(100),
            gamma: 0.99,
            tau: 4.0e-5,
            entropy_target: -5.0,
            n_critics: 2,
            atoms: 25,
            truncation: Truncation::PerCritic(3),
            explore_noise: 0.025,
            buffer_capacity: 50_000,
            eval_every: 10_000,
            eval_episodes: 20,
        }
    }
}

impl TqcConfig {
    pub fn validate(&self) -> Result<(), TqcError> {
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(TqcError::InvalidConfig("lr_initial must be positive"));
        }
        if self.batch_size == 0 {
            return Err(TqcError::InvalidConfig("batch_size must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(TqcError::InvalidConfig("gamma must lie in (0, 1]"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(TqcError::InvalidConfig("tau must lie in (0, 1)"));
        }
        if !self.entropy_target.is_finite() {
            return Err(TqcError::InvalidConfig("entropy_target must be finite"));
        }
        if self.n_critics == 0 || self.atoms == 0 {
            return Err(TqcError::InvalidConfig(
                "n_critics and atoms must be positive",
            ));
        }
        if self.truncation.dropped(self.n_critics) >= self.n_critics * self.atoms {
            return Err(TqcError::InvalidConfig(
                "truncation must keep at least one pooled atom",
            ));
        }
        if !(self.explore_noise >= 0.0 && self.explore_noise.is_finite()) {
            return Err(TqcError::InvalidConfig(
                "explore_noise must be non-negative",
            ));
        }
        if self.buffer_capacity < self.batch_size {
            return Err(TqcError::InvalidConfig(
                "buffer_capacity must cover one batch",
            ));
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return Err(TqcError::InvalidConfig(
                "eval_episodes must be positive when evaluation is on",
            ));
        }
        match self.cadence {
            GradientCadence::PerEpisode(_) => {}
            GradientCadence::PerStepRatio(r) => {
                if !(r > 0.0 && r.is_finite()) {
                    return Err(TqcError::InvalidConfig(
                        "per-step update ratio must be positive",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = TqcConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.truncation.dropped(cfg.n_critics), 6);
        assert_eq!(cfg.n_critics * cfg.atoms - 6, 44);
    }

    #[test]
    fn truncation_modes_count_dropped_atoms() {
        assert_eq!(Truncation::PerCritic(3).dropped(2), 6);
        assert_eq!(Truncation::Total(3).dropped(2), 3);
        assert_eq!(Truncation::PerCritic(0).dropped(5), 0);
    }

    #[test]
    fn out_of_range_fields_are_rejected() {
        let base = TqcConfig::default();
        let cases: Vec<TqcConfig> = vec![
            TqcConfig {
                gamma: 0.0,
                ..base
            },
            TqcConfig {
                gamma: 1.5,
                ..base
            },
            TqcConfig { tau: 1.0, ..base },
            TqcConfig {
                truncation: Truncation::PerCritic(25),
                ..base
            },
            TqcConfig {
                truncation: Truncation::Total(50),
                ..base
            },
            TqcConfig {
                batch_size: 0,
                ..base
            },
            TqcConfig {
                explore_noise: -0.1,
                ..base
            },
            TqcConfig {
                buffer_capacity: 10,
                ..base
            },
            TqcConfig {
                cadence: GradientCadence::PerStepRatio(0.0),
                ..base
            },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?} should be rejected");
        }
        TqcConfig {
            truncation: Truncation::Total(49),
            ..base
        }
        .validate()
        .unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = TqcConfig {
            cadence: GradientCadence::PerStepRatio(0.25),
            truncation: Truncation::Total(5),
            ..TqcConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: TqcConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
