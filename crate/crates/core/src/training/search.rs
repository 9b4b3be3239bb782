//! Seeded random search over a small discrete hyperparameter space.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate, train, LossKind, TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::grid::{SplitPlan, WindowedDataset};
use crate::model::{ModelHyper, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub base_lr: Vec<f64>,
    pub kernel: Vec<usize>,
    pub att_kernel: Vec<usize>,
    pub loss: Vec<LossKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            base_lr: vec![1e-2, 3e-3, 1e-3, 3e-4],
            kernel: vec![3, 5],
            att_kernel: vec![3, 5],
            loss: vec![LossKind::Mse],
        }
    }
}

impl SearchSpace {
    /// A space containing exactly one point.
    pub fn single(base_lr: f64, kernel: usize, att_kernel: usize, loss: LossKind) -> Self {
        Self {
            base_lr: vec![base_lr],
            kernel: vec![kernel],
            att_kernel: vec![att_kernel],
            loss: vec![loss],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_lr.is_empty() || self.kernel.is_empty() || self.att_kernel.is_empty() || self.loss.is_empty() {
            return Err(Error::config("search_space", "every dimension needs at least one value"));
        }
        if self.base_lr.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::config("search_space.base_lr", "values must be positive and finite"));
        }
        if self.kernel.iter().chain(&self.att_kernel).any(|k| k % 2 == 0) {
            return Err(Error::config("search_space", "kernel sizes must be odd"));
        }
        Ok(())
    }
}

/// The sampled point of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPoint {
    pub base_lr: f64,
    pub kernel: usize,
    pub att_kernel: usize,
    pub loss: LossKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDraw {
    pub trial: usize,
    pub seed: u64,
    pub point: TrialPoint,
}

/// Draws every trial up front, so the sequence does not depend on how
/// trials are evaluated.
pub fn draw_trials(space: &SearchSpace, trials: usize, seed: u64) -> Result<Vec<TrialDraw>> {
    space.validate()?;
    if trials == 0 {
        return Err(Error::config("search_trials", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..trials)
        .map(|trial| {
            let point = TrialPoint {
                base_lr: *space.base_lr.choose(&mut rng).unwrap(),
                kernel: *space.kernel.choose(&mut rng).unwrap(),
                att_kernel: *space.att_kernel.choose(&mut rng).unwrap(),
                loss: *space.loss.choose(&mut rng).unwrap(),
            };
            TrialDraw {
                trial,
                seed: rng.gen(),
                point,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialEval<T> {
    pub val_mae: f64,
    pub epochs_run: usize,
    pub payload: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub point: TrialPoint,
    /// `None` for a diverged trial.
    pub val_mae: Option<f64>,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome<T> {
    pub best: TrialRecord,
    pub payload: T,
    pub log: Vec<TrialRecord>,
}

/// Evaluates every drawn trial and keeps the lowest validation MAE; ties go
/// to the earlier trial. Diverged trials are logged and skipped; any other
/// error aborts the search.
pub fn random_search_with<T, F>(
    space: &SearchSpace,
    trials: usize,
    seed: u64,
    mut evaluator: F,
) -> Result<SearchOutcome<T>>
where
    F: FnMut(&TrialDraw) -> Result<TrialEval<T>>,
{
    let draws = draw_trials(space, trials, seed)?;
    let mut log = Vec::with_capacity(draws.len());
    let mut best: Option<(usize, T)> = None;
    for draw in &draws {
        let (val_mae, epochs_run) = match evaluator(draw) {
            Ok(ev) => {
                let better = match &best {
                    None => true,
                    Some((i, _)) => ev.val_mae < log_mae(&log, *i),
                };
                let out = (Some(ev.val_mae), ev.epochs_run);
                if better && ev.val_mae.is_finite() {
                    best = Some((draw.trial, ev.payload));
                }
                out
            }
            Err(Error::Diverged(reason)) => {
                log::warn!("trial {} diverged: {reason}", draw.trial);
                (None, 0)
            }
            Err(e) => return Err(e),
        };
        log::info!("trial {} {:?}: val_mae {:?}", draw.trial, draw.point, val_mae);
        log.push(TrialRecord {
            trial: draw.trial,
            seed: draw.seed,
            point: draw.point,
            val_mae,
            epochs_run,
        });
    }
    let (idx, payload) = best.ok_or(Error::SearchFailed)?;
    Ok(SearchOutcome {
        best: log[idx].clone(),
        payload,
        log,
    })
}

fn log_mae(log: &[TrialRecord], i: usize) -> f64 {
    log[i].val_mae.unwrap_or(f64::INFINITY)
}

/// What a real trial produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedTrial {
    pub config: TrainConfig,
    pub params: ModelParams,
    pub history: TrainHistory,
}

/// Trains one model per drawn trial. `base` supplies everything the space
/// does not vary; `template` supplies channels and the spatial activation.
pub fn random_search(
    ds: &WindowedDataset,
    plan: &SplitPlan,
    space: &SearchSpace,
    base: &TrainConfig,
    template: &ModelHyper,
    seed: u64,
) -> Result<SearchOutcome<TrainedTrial>> {
    random_search_with(space, base.search_trials, seed, |draw| {
        let config = TrainConfig {
            base_lr: draw.point.base_lr,
            min_lr: base.min_lr.min(draw.point.base_lr),
            loss: draw.point.loss,
            seed: draw.seed,
            ..base.clone()
        };
        let hyper = ModelHyper {
            kernel: draw.point.kernel,
            att_kernel: draw.point.att_kernel,
            ..template.clone()
        };
        let p0 = ModelParams::init(&hyper, draw.seed)?;
        let (params, history) = train(ds, plan, &config, p0)?;
        let (_, val_mae) = evaluate(&params, ds, &plan.val_idx, config.loss)?;
        Ok(TrialEval {
            val_mae,
            epochs_run: history.len(),
            payload: TrainedTrial {
                config,
                params,
                history,
            },
        })
    })
}

/// CSV `trial,seed,config_json,val_mae,epochs_run`; diverged trials have
/// `NaN` MAE.
pub fn write_trial_log<W: Write>(w: W, log: &[TrialRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "seed", "config_json", "val_mae", "epochs_run"])?;
    for r in log {
        out.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            serde_json::to_string(&r.point)?,
            r.val_mae.unwrap_or(f64::NAN).to_string(),
            r.epochs_run.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
