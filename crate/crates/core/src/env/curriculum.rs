use std::collections::VecDeque;

/// Lift-height schedule: `min` at rate 0, rising linearly to `max` at
/// `full_rate`, constant beyond.
pub fn curriculum_height(min: f64, max: f64, full_rate: f64, rate: f64) -> f64 {
    let r = rate.clamp(0.0, full_rate);
    min + (max - min) * (r / full_rate)
}

/// Rolling record of episode outcomes. The success rate divides by the
/// window length regardless of fill, which pads a short history with
/// failures.
#[derive(Debug, Clone)]
pub struct SuccessWindow {
    len: usize,
    outcomes: VecDeque<bool>,
}

impl SuccessWindow {
    pub fn new(len: usize) -> SuccessWindow {
        SuccessWindow {
            len,
            outcomes: VecDeque::with_capacity(len),
        }
    }

    pub fn push(&mut self, success: bool) {
        if self.outcomes.len() == self.len {
            self.outcomes.pop_front();
        }
        self.outcomes.push_back(success);
    }

    pub fn rate(&self) -> f64 {
        let wins = self.outcomes.iter().filter(|&&s| s).count();
        wins as f64 / self.len as f64
    }

    pub fn episodes(&self) -> usize {
        self.outcomes.len()
    }
}
