use rand::Rng;

use crate::env::Observation;
use crate::nets::ACTION_DIM;

use super::TqcError;

/// One environment interaction. Observations are frame stacks behind `Arc`s,
/// so cloning into the buffer is cheap.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub action: [f32; ACTION_DIM],
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

impl Transition {
    /// Invariants required of stored transitions: actions already clamped,
    /// reward finite.
    pub fn check(&self) -> Result<(), TqcError> {
        if self.action.iter().any(|a| !(-1.0..=1.0).contains(a)) {
            return Err(TqcError::InvalidTransition("action outside [-1, 1]"));
        }
        if !self.reward.is_finite() {
            return Err(TqcError::InvalidTransition("non-finite reward"));
        }
        Ok(())
    }
}

/// Fixed-capacity ring holding the most recent transitions, sampled
/// uniformly with replacement.
#[derive(Debug)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "capacity must be positive");
        ReplayBuffer {
            items: Vec::new(),
            capacity,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition, evicting the oldest once full.
    pub fn push(&mut self, t: Transition) -> Result<(), TqcError> {
        t.check()?;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Uniform indices into the buffer; rejected while the buffer holds
    /// fewer than `batch` transitions.
    pub fn sample_indices<R: Rng>(
        &self,
        rng: &mut R,
        batch: usize,
    ) -> Result<Vec<usize>, TqcError> {
        if self.items.len() < batch {
            return Err(TqcError::BufferTooSmall {
                have: self.items.len(),
                need: batch,
            });
        }
        Ok((0..batch)
            .map(|_| rng.gen_range(0..self.items.len()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::env::{Frame, ObsData, Observation, PROPRIO_DIM};
    use crate::geometry::{PointCloud, Vec3};
    use crate::octree::build_octree;

    use super::*;

    fn obs() -> Observation {
        let empty = build_octree(&PointCloud::default(), &[], Vec3::new(0.0, 0.0, 0.0), 0.4, 4)
            .unwrap();
        Observation::initial(Frame {
            data: ObsData::Octree(empty),
            proprio: [0.0; PROPRIO_DIM],
        })
    }

    fn transition(reward: f64) -> Transition {
        Transition {
            obs: obs(),
            action: [0.0; ACTION_DIM],
            reward,
            next_obs: obs(),
            done: false,
        }
    }

    #[test]
    fn ring_overwrites_the_oldest_entries() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..8 {
            buf.push(transition(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 5);
        let mut rewards: Vec<f64> = (0..5).map(|i| buf.get(i).reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn sampling_needs_a_full_batch() {
        let mut buf = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..3 {
            buf.push(transition(i as f64)).unwrap();
        }
        assert!(matches!(
            buf.sample_indices(&mut rng, 4),
            Err(TqcError::BufferTooSmall { have: 3, need: 4 })
        ));
        let idx = buf.sample_indices(&mut rng, 3).unwrap();
        assert_eq!(idx.len(), 3);
        assert!(idx.iter().all(|&i| i < 3));
    }

    #[test]
    fn sampling_is_uniform_over_the_ring() {
        let mut buf = ReplayBuffer::new(20);
        for i in 0..25 {
            buf.push(transition(i as f64)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000usize;
        let mut counts = [0u64; 20];
        for _ in 0..draws {
            counts[buf.sample_indices(&mut rng, 1).unwrap()[0]] += 1;
        }
        let expected = draws as f64 / 20.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 19 degrees of freedom; the 0.999 quantile is 43.8.
        assert!(chi2 < 43.8, "chi-squared {chi2} too large for uniformity");
    }

    #[test]
    fn invalid_transitions_are_rejected() {
        let mut buf = ReplayBuffer::new(4);
        let mut bad = transition(0.0);
        bad.action[2] = 1.5;
        assert!(matches!(
            buf.push(bad),
            Err(TqcError::InvalidTransition(_))
        ));
        let mut nan = transition(f64::NAN);
        nan.reward = f64::NAN;
        assert!(buf.push(nan).is_err());
        assert!(buf.is_empty());
    }
}
