//! Reduce-on-plateau and early stopping, driven by validation loss.

use serde::{Deserialize, Serialize};

/// An epoch improves only if it beats the best loss by more than this
/// fraction of the best loss.
pub const REL_IMPROVEMENT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauRule {
    pub lr_patience: usize,
    pub es_patience: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub rel_threshold: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpochDecision {
    pub improved: bool,
    /// The rate for the next epoch is lower than for this one.
    pub lr_reduced: bool,
    pub stop: bool,
}

/// Two independent non-improvement counters: one for the learning rate
/// (reset after each reduction) and one for early stopping.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauController {
    rule: PlateauRule,
    lr: f64,
    best: Option<f64>,
    lr_wait: usize,
    es_wait: usize,
}

impl PlateauController {
    pub fn new(base_lr: f64, rule: PlateauRule) -> Self {
        Self {
            rule,
            lr: base_lr,
            best: None,
            lr_wait: 0,
            es_wait: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, val_loss: f64) -> EpochDecision {
        let improved = match self.best {
            None => true,
            Some(b) => b - val_loss > self.rule.rel_threshold * b.abs(),
        };
        let mut d = EpochDecision {
            improved,
            ..EpochDecision::default()
        };
        if improved {
            self.best = Some(val_loss);
            self.lr_wait = 0;
            self.es_wait = 0;
            return d;
        }
        self.lr_wait += 1;
        self.es_wait += 1;
        if self.lr_wait >= self.rule.lr_patience {
            self.lr_wait = 0;
            let next = (self.lr * self.rule.lr_factor).max(self.rule.min_lr);
            if next < self.lr {
                self.lr = next;
                d.lr_reduced = true;
            }
        }
        d.stop = self.es_wait >= self.rule.es_patience;
        d
    }
}
