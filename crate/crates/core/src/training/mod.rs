//! Losses, batch gradients, Adam, the plateau schedule and random search.

pub mod adam;
pub mod gradcheck;
pub mod schedule;
pub mod search;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_difference_check, TensorCheck};
pub use schedule::{EpochDecision, PlateauController, PlateauRule};
pub use search::{
    draw_trials, random_search, random_search_with, write_trial_log, SearchOutcome, SearchSpace,
    TrainedTrial, TrialDraw, TrialEval, TrialPoint, TrialRecord,
};

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{SplitPlan, WindowedDataset};
use crate::model::{backward, forward_cached, ModelParams, SampleDims};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    Mae,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "mse",
            LossKind::Mae => "mae",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::config("loss", format!("unknown loss {other:?}"))),
        }
    }
}

pub fn loss(kind: LossKind, y_hat: &[f64], y: &[f64]) -> Result<f64> {
    if y_hat.len() != y.len() || y.is_empty() {
        return Err(Error::Shape(format!(
            "loss over {} predictions and {} targets",
            y_hat.len(),
            y.len()
        )));
    }
    let n = y.len() as f64;
    let total: f64 = y_hat
        .iter()
        .zip(y)
        .map(|(p, o)| match kind {
            LossKind::Mse => (p - o) * (p - o),
            LossKind::Mae => (p - o).abs(),
        })
        .sum();
    Ok(total / n)
}

/// `∂loss/∂ŷ_b` for a batch of size `n`. The MAE subgradient at zero is 0.
fn loss_grad(kind: LossKind, y_hat: f64, y: f64, n: usize) -> f64 {
    let r = y_hat - y;
    match kind {
        LossKind::Mse => 2.0 * r / n as f64,
        LossKind::Mae => {
            if r == 0.0 {
                0.0
            } else {
                r.signum() / n as f64
            }
        }
    }
}

/// Predictions for the selected samples, in `indices` order.
pub fn predict(p: &ModelParams, ds: &WindowedDataset, indices: &[usize]) -> Result<Vec<f64>> {
    let dims = SampleDims::from_shape(&ds.sample_shape())?;
    indices
        .iter()
        .map(|&i| forward_cached(ds.input(i), dims, p).map(|c| c.y_hat))
        .collect()
}

/// Batch loss and its exact gradient with respect to every parameter.
pub fn gradients(
    p: &ModelParams,
    ds: &WindowedDataset,
    batch: &[usize],
    kind: LossKind,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::EmptySplit);
    }
    let dims = SampleDims::from_shape(&ds.sample_shape())?;
    let mut grads = p.zeros_like();
    let mut preds = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for &i in batch {
        let x = ds.input(i);
        let cache = forward_cached(x, dims, p)?;
        let y = ds.targets()[i];
        let g = loss_grad(kind, cache.y_hat, y, batch.len());
        preds.push(cache.y_hat);
        targets.push(y);
        backward(&cache, x, p, g, &mut grads);
    }
    let l = loss(kind, &preds, &targets)?;
    if !l.is_finite() {
        return Err(Error::Diverged(format!("batch loss is {l}")));
    }
    Ok((l, grads))
}

/// Loss and MAE over a set of samples.
pub fn evaluate(
    p: &ModelParams,
    ds: &WindowedDataset,
    indices: &[usize],
    kind: LossKind,
) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Err(Error::EmptySplit);
    }
    let preds = predict(p, ds, indices)?;
    let targets: Vec<f64> = indices.iter().map(|&i| ds.targets()[i]).collect();
    Ok((
        loss(kind, &preds, &targets)?,
        loss(LossKind::Mae, &preds, &targets)?,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub es_patience: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub base_lr: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub search_trials: usize,
    /// Elementwise gradient clamp `±grad_clamp`; off when `None`.
    pub grad_clamp: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_epochs: 200,
            es_patience: 10,
            lr_patience: 5,
            lr_factor: 0.5,
            min_lr: 1e-5,
            base_lr: 1e-3,
            seed: 0,
            loss: LossKind::Mse,
            search_trials: 10,
            grad_clamp: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be at least 1"));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::config("lr_factor", "must lie in (0, 1)"));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr", "must be positive and finite"));
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.base_lr) {
            return Err(Error::config("min_lr", "must lie in [0, base_lr]"));
        }
        if self.search_trials == 0 {
            return Err(Error::config("search_trials", "must be at least 1"));
        }
        if let Some(c) = self.grad_clamp {
            if !(c > 0.0) {
                return Err(Error::config("grad_clamp", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn plateau_rule(&self) -> PlateauRule {
        PlateauRule {
            lr_patience: self.lr_patience,
            es_patience: self.es_patience,
            lr_factor: self.lr_factor,
            min_lr: self.min_lr,
            rel_threshold: schedule::REL_IMPROVEMENT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochEvent {
    LrReduced,
    EarlyStopped,
}

impl fmt::Display for EpochEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EpochEvent::LrReduced => "lr_reduced",
            EpochEvent::EarlyStopped => "early_stopped",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
    /// Rate used during this epoch.
    pub lr: f64,
    pub events: Vec<EpochEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch.checked_sub(1)?)
    }

    /// CSV `epoch,train_loss,val_loss,val_mae,lr,event`; multiple events
    /// are joined with `;`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "train_loss", "val_loss", "val_mae", "lr", "event"])?;
        for r in &self.epochs {
            let events: Vec<String> = r.events.iter().map(|e| e.to_string()).collect();
            out.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.val_mae.to_string(),
                r.lr.to_string(),
                events.join(";"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// What the epoch loop trains. [`ModelObjective`] is the real one; tests
/// substitute scripted objectives to trace the schedule.
pub trait EpochObjective {
    type State: Clone;

    /// One pass over the training data at rate `lr`; returns the mean
    /// training loss.
    fn train_epoch(&mut self, state: &mut Self::State, lr: f64, epoch: usize) -> Result<f64>;

    /// Validation `(loss, mae)`.
    fn validate(&mut self, state: &Self::State) -> Result<(f64, f64)>;
}

/// Runs epochs under the plateau rule and returns the best-validation state.
pub fn run_epochs<O: EpochObjective>(
    objective: &mut O,
    initial: O::State,
    cfg: &TrainConfig,
) -> Result<(O::State, TrainHistory)> {
    cfg.validate()?;
    let mut ctl = PlateauController::new(cfg.base_lr, cfg.plateau_rule());
    let mut state = initial;
    let mut best = state.clone();
    let mut history = TrainHistory::default();
    for epoch in 1..=cfg.max_epochs {
        let lr = ctl.lr();
        let train_loss = objective.train_epoch(&mut state, lr, epoch)?;
        let (val_loss, val_mae) = objective.validate(&state)?;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "epoch {epoch}: train loss {train_loss}, validation loss {val_loss}"
            )));
        }
        let decision = ctl.observe(val_loss);
        if decision.improved {
            best = state.clone();
            history.best_epoch = epoch;
        }
        let mut events = Vec::new();
        if decision.lr_reduced {
            events.push(EpochEvent::LrReduced);
        }
        if decision.stop {
            events.push(EpochEvent::EarlyStopped);
        }
        log::debug!(
            "epoch {epoch}: train {train_loss:.6} val {val_loss:.6} mae {val_mae:.6} lr {lr:e}"
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_mae,
            lr,
            events,
        });
        if decision.stop {
            break;
        }
    }
    Ok((best, history))
}

/// Mini-batch Adam on a windowed dataset.
pub struct ModelObjective<'a> {
    ds: &'a WindowedDataset,
    plan: &'a SplitPlan,
    cfg: &'a TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl<'a> ModelObjective<'a> {
    pub fn new(ds: &'a WindowedDataset, plan: &'a SplitPlan, cfg: &'a TrainConfig, p0: &ModelParams) -> Self {
        Self {
            ds,
            plan,
            cfg,
            adam: AdamState::new(p0),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            order: plan.train_idx.clone(),
        }
    }
}

impl EpochObjective for ModelObjective<'_> {
    type State = ModelParams;

    fn train_epoch(&mut self, p: &mut ModelParams, lr: f64, _epoch: usize) -> Result<f64> {
        self.order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for batch in self.order.chunks(self.cfg.batch_size) {
            let (l, mut g) = gradients(p, self.ds, batch, self.cfg.loss)?;
            if let Some(c) = self.cfg.grad_clamp {
                for (_, t) in g.tensors_mut() {
                    t.iter_mut().for_each(|v| *v = v.clamp(-c, c));
                }
            }
            adam_step(p, &g, &mut self.adam, lr, &AdamConfig::default())?;
            total += l * batch.len() as f64;
        }
        Ok(total / self.order.len() as f64)
    }

    fn validate(&mut self, p: &ModelParams) -> Result<(f64, f64)> {
        evaluate(p, self.ds, &self.plan.val_idx, self.cfg.loss)
    }
}

/// Trains from `p0`; returns the parameters of the best validation epoch.
pub fn train(
    ds: &WindowedDataset,
    plan: &SplitPlan,
    cfg: &TrainConfig,
    p0: ModelParams,
) -> Result<(ModelParams, TrainHistory)> {
    plan.validate(ds.len())?;
    if plan.train_idx.is_empty() || plan.val_idx.is_empty() {
        return Err(Error::EmptySplit);
    }
    let mut objective = ModelObjective::new(ds, plan, cfg, &p0);
    run_epochs(&mut objective, p0, cfg)
}
