use serde::{Deserialize, Serialize};

/// Learning-rate schedule family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrScheduleKind {
    ExponentialStaircase,
    ReduceOnPlateau,
    Constant,
}

/// Learning-rate schedule configuration.
///
/// Defaults match the training recipe: initial rate 0.016 decayed by 0.64
/// every 8000 steps with staircase semantics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub kind: LrScheduleKind,
    pub initial_lr: f64,
    pub decay_steps: u64,
    pub decay_rate: f64,
    pub plateau_patience: u32,
    pub plateau_factor: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            kind: LrScheduleKind::ExponentialStaircase,
            initial_lr: 0.016,
            decay_steps: 8000,
            decay_rate: 0.64,
            plateau_patience: 5,
            plateau_factor: 0.5,
        }
    }
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule {
            kind: LrScheduleKind::Constant,
            initial_lr: lr,
            ..LrSchedule::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.initial_lr) {
            return Err(format!("initial_lr must be positive, got {}", self.initial_lr));
        }
        if !positive(self.decay_rate) || self.decay_rate >= 1.0 {
            return Err(format!("decay_rate must lie in (0, 1), got {}", self.decay_rate));
        }
        if self.decay_steps == 0 {
            return Err("decay_steps must be at least 1".to_string());
        }
        if !positive(self.plateau_factor) || self.plateau_factor >= 1.0 {
            return Err(format!(
                "plateau_factor must lie in (0, 1), got {}",
                self.plateau_factor
            ));
        }
        Ok(())
    }

    /// Rate at `step` for the stateless kinds. For `ReduceOnPlateau` this is
    /// the initial rate; plateau tracking lives in [`ScheduleState`].
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.kind {
            LrScheduleKind::Constant | LrScheduleKind::ReduceOnPlateau => self.initial_lr,
            LrScheduleKind::ExponentialStaircase => {
                self.initial_lr * self.decay_rate.powi((step / self.decay_steps) as i32)
            }
        }
    }
}

/// Mutable schedule cursor used by the training loop.
///
/// For the plateau kind it tracks the best validation signal seen and
/// multiplies the current rate by `plateau_factor` once the signal has
/// failed to improve for `plateau_patience` consecutive evaluations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleState {
    pub schedule: LrSchedule,
    current_lr: f64,
    best_signal: Option<f64>,
    evals_since_improvement: u32,
}

impl ScheduleState {
    pub fn new(schedule: LrSchedule) -> Self {
        ScheduleState {
            current_lr: schedule.initial_lr,
            schedule,
            best_signal: None,
            evals_since_improvement: 0,
        }
    }

    /// Rate to use at `step`. `plateau_signal` carries the latest validation
    /// metric (lower is better) when one was just computed.
    pub fn lr_at(&mut self, step: u64, plateau_signal: Option<f64>) -> f64 {
        match self.schedule.kind {
            LrScheduleKind::Constant | LrScheduleKind::ExponentialStaircase => {
                self.current_lr = self.schedule.lr_at(step);
            }
            LrScheduleKind::ReduceOnPlateau => {
                if let Some(signal) = plateau_signal {
                    match self.best_signal {
                        Some(best) if signal >= best => {
                            self.evals_since_improvement += 1;
                            if self.evals_since_improvement >= self.schedule.plateau_patience {
                                self.current_lr *= self.schedule.plateau_factor;
                                self.evals_since_improvement = 0;
                            }
                        }
                        _ => {
                            self.best_signal = Some(signal);
                            self.evals_since_improvement = 0;
                        }
                    }
                }
            }
        }
        self.current_lr
    }

    pub fn current_lr(&self) -> f64 {
        self.current_lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn staircase_matches_published_checkpoints() {
        let s = LrSchedule::default();
        assert_eq!(s.lr_at(0), 0.016);
        assert_eq!(s.lr_at(7999), 0.016);
        assert!((s.lr_at(8000) - 0.01024).abs() < 1e-15);
        assert!((s.lr_at(16000) - 0.016 * 0.64 * 0.64).abs() < 1e-15);
        assert!((s.lr_at(16000) - 0.0065536).abs() < 1e-15);
    }

    #[test]
    fn staircase_is_non_increasing() {
        let s = LrSchedule::default();
        let mut prev = f64::INFINITY;
        for step in (0..40_000).step_by(117) {
            let lr = s.lr_at(step);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn plateau_reduces_after_patience_without_improvement() {
        let schedule = LrSchedule {
            kind: LrScheduleKind::ReduceOnPlateau,
            initial_lr: 1.0,
            plateau_patience: 2,
            plateau_factor: 0.5,
            ..LrSchedule::default()
        };
        let mut state = ScheduleState::new(schedule);
        assert_eq!(state.lr_at(0, Some(10.0)), 1.0); // first signal becomes best
        assert_eq!(state.lr_at(1, Some(11.0)), 1.0); // 1 stale eval
        assert_eq!(state.lr_at(2, Some(12.0)), 0.5); // patience reached
        assert_eq!(state.lr_at(3, Some(9.0)), 0.5); // improvement resets counter
        assert_eq!(state.lr_at(4, None), 0.5); // no signal, no change
    }

    #[test]
    fn plateau_rate_never_increases() {
        let schedule = LrSchedule {
            kind: LrScheduleKind::ReduceOnPlateau,
            initial_lr: 0.016,
            plateau_patience: 1,
            plateau_factor: 0.25,
            ..LrSchedule::default()
        };
        let mut state = ScheduleState::new(schedule);
        let mut prev = f64::INFINITY;
        let signals = [5.0, 5.0, 4.0, 6.0, 6.0, 3.0, 3.0, 3.0];
        for (step, sig) in signals.iter().enumerate() {
            let lr = state.lr_at(step as u64, Some(*sig));
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let bad_rate = LrSchedule {
            decay_rate: 1.5,
            ..LrSchedule::default()
        };
        assert!(bad_rate.validate().is_err());
        let bad_lr = LrSchedule {
            initial_lr: 0.0,
            ..LrSchedule::default()
        };
        assert!(bad_lr.validate().is_err());
        let bad_steps = LrSchedule {
            decay_steps: 0,
            ..LrSchedule::default()
        };
        assert!(bad_steps.validate().is_err());
    }
}
