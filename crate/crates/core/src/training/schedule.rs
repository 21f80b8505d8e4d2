use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub initial_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            initial_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Learning-rate policy. Milestones are epoch counts after which the rate is
/// multiplied by `factor`; the plateau policy multiplies once the validation
/// metric has not improved for `patience` epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrPolicy {
    Milestones { epochs: Vec<usize>, factor: f64 },
    Plateau { patience: usize, factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Interpolation,
    Epe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSchedule {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub lr_policy: LrPolicy,
    pub total_epochs: usize,
    pub loss: LossKind,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        TrainingSchedule::pretrain()
    }
}

impl TrainingSchedule {
    /// Interpolation pretraining: batch 8, 12 epochs, halving after epochs 3, 6, 8 and 10.
    pub fn pretrain() -> Self {
        TrainingSchedule {
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            lr_policy: LrPolicy::Milestones {
                epochs: vec![3, 6, 8, 10],
                factor: 0.5,
            },
            total_epochs: 12,
            loss: LossKind::Interpolation,
        }
    }

    /// Flow fine-tuning: 200 epochs of EPE, halving after 20 epochs without improvement.
    pub fn finetune() -> Self {
        TrainingSchedule {
            lr_policy: LrPolicy::Plateau {
                patience: 20,
                factor: 0.5,
            },
            total_epochs: 200,
            loss: LossKind::Epe,
            ..Self::pretrain()
        }
    }

    /// Named milestone preset for flow training from scratch; the epochs are a
    /// proportional reading and can be overridden in the config.
    pub fn s_short() -> Self {
        TrainingSchedule {
            lr_policy: LrPolicy::Milestones {
                epochs: vec![80, 120, 160],
                factor: 0.5,
            },
            ..Self::finetune()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "pretrain" => Ok(Self::pretrain()),
            "finetune" => Ok(Self::finetune()),
            "s_short" => Ok(Self::s_short()),
            other => Err(Error::Config(format!(
                "unknown schedule preset {other:?}; expected pretrain, finetune or s_short"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if !(o.initial_lr > 0.0) || !o.initial_lr.is_finite() {
            return Err(Error::Config(format!("initial_lr must be positive, got {}", o.initial_lr)));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.epsilon > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        if o.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        match &self.lr_policy {
            LrPolicy::Milestones { epochs, factor } => {
                if epochs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config(format!("milestones must be strictly increasing, got {epochs:?}")));
                }
                check_factor(*factor)
            }
            LrPolicy::Plateau { patience, factor } => {
                if *patience == 0 {
                    return Err(Error::Config("plateau patience must be at least 1".into()));
                }
                check_factor(*factor)
            }
        }
    }
}

fn check_factor(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("lr factor must lie in (0, 1), got {f}")))
    }
}

/// A learning-rate change, applied before epoch `epoch + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrEvent {
    pub epoch: usize,
    pub from: f64,
    pub to: f64,
}

/// Learning-rate state driven once per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrScheduler {
    pub policy: LrPolicy,
    pub lr: f64,
    /// Best validation metric so far (plateau policy).
    pub best: Option<f64>,
    /// Epochs since the best metric or the last reduction (plateau policy).
    pub stale_epochs: usize,
}

impl LrScheduler {
    pub fn new(policy: LrPolicy, initial_lr: f64) -> Self {
        LrScheduler {
            policy,
            lr: initial_lr,
            best: None,
            stale_epochs: 0,
        }
    }

    /// Record the end of `epoch` (0-based) with its validation metric; lower is
    /// better and a tie is no improvement.
    pub fn end_epoch(&mut self, epoch: usize, val_metric: Option<f64>) -> Option<LrEvent> {
        let from = self.lr;
        let reduce = match &self.policy {
            LrPolicy::Milestones { epochs, factor } => epochs.contains(&(epoch + 1)).then_some(*factor),
            LrPolicy::Plateau { patience, factor } => {
                match (val_metric, self.best) {
                    (Some(m), Some(b)) if m < b => {
                        self.best = Some(m);
                        self.stale_epochs = 0;
                    }
                    (Some(m), None) if m.is_finite() => self.best = Some(m),
                    _ => self.stale_epochs += 1,
                }
                if self.stale_epochs >= *patience {
                    self.stale_epochs = 0;
                    Some(*factor)
                } else {
                    None
                }
            }
        };
        let factor = reduce?;
        self.lr *= factor;
        Some(LrEvent {
            epoch,
            from,
            to: self.lr,
        })
    }
}

/// Learning rate used in each epoch, given the validation metric observed at
/// the end of each epoch (only read by the plateau policy).
pub fn replay_lr_trace(policy: &LrPolicy, initial_lr: f64, epochs: usize, val_history: &[f64]) -> Vec<f64> {
    let mut s = LrScheduler::new(policy.clone(), initial_lr);
    (0..epochs)
        .map(|e| {
            let lr = s.lr;
            s.end_epoch(e, val_history.get(e).copied());
            lr
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn milestone_trace() {
        let s = TrainingSchedule::pretrain();
        let lr = replay_lr_trace(&s.lr_policy, 1e-4, 12, &[]);
        assert_eq!(lr[0], 1e-4);
        assert_eq!(lr[3], 5e-5);
        assert_eq!(lr[11], 6.25e-6);
    }

    #[test]
    fn plateau_on_constant_series() {
        let s = TrainingSchedule::finetune();
        let lr = replay_lr_trace(&s.lr_policy, 1e-4, 45, &[1.0; 45]);
        assert!(lr[..21].iter().all(|&v| v == 1e-4));
        assert_eq!(lr[21], 5e-5);
        assert_eq!(lr[41], 2.5e-5);
    }

    #[test]
    fn decreasing_series_never_halves() {
        let val: Vec<f64> = (0..200).map(|e| 10.0 - e as f64 * 0.01).collect();
        let lr = replay_lr_trace(&TrainingSchedule::finetune().lr_policy, 1e-4, 200, &val);
        assert!(lr.iter().all(|&v| v == 1e-4));
    }

    #[test]
    fn validation_rejects_bad_schedules() {
        let mut s = TrainingSchedule::pretrain();
        s.lr_policy = LrPolicy::Milestones {
            epochs: vec![3, 3],
            factor: 0.5,
        };
        assert!(s.validate().is_err());
        let mut s = TrainingSchedule::finetune();
        s.lr_policy = LrPolicy::Plateau {
            patience: 0,
            factor: 0.5,
        };
        assert!(s.validate().is_err());
        assert!(TrainingSchedule::preset("s_short").unwrap().validate().is_ok());
    }
}
