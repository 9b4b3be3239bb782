//! The run configuration: one JSON tree, every section optional.
//!
//! ```json
//! {
//!   "synthetic": { "seed": 3, "days": 365 },
//!   "pipeline": { "split_frac": 0.8 },
//!   "train": { "max_epochs": 60, "search_trials": 10 },
//!   "search": { "base_lr": [0.01, 0.003] },
//!   "spatial_activation": "sigmoid",
//!   "analytics": { "top_k": 5, "top_pct": 20.0 }
//! }
//! ```
//!
//! Command-line flags are applied after the file and win over it.

use std::fs;
use std::path::Path;

use hydrotrace_core::analytics::SeasonCalendar;
use hydrotrace_core::grid::PipelineConfig;
use hydrotrace_core::model::SpatialActivation;
use hydrotrace_core::synthetic::PlantConfig;
use hydrotrace_core::training::{SearchSpace, TrainConfig};
use hydrotrace_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsConfig {
    pub top_k: usize,
    /// Percent of grid cells kept in each location mask.
    pub top_pct: f64,
    pub calendar: SeasonCalendar,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            top_pct: 20.0,
            calendar: SeasonCalendar::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synthetic: PlantConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    pub search: SearchSpace,
    pub spatial_activation: SpatialActivation,
    pub analytics: AnalyticsConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
    }

    /// The file at `path`, or defaults when there is none.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// One seed for every stochastic stage.
    pub fn set_seed(&mut self, seed: u64) {
        self.synthetic.seed = seed;
        self.pipeline.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.synthetic.validate()?;
        self.train.validate()?;
        self.search.validate()?;
        if !(self.pipeline.split_frac > 0.0 && self.pipeline.split_frac < 1.0) {
            return Err(Error::config("pipeline.split_frac", "must lie in (0, 1)"));
        }
        if self.analytics.top_k == 0 {
            return Err(Error::config("analytics.top_k", "must be at least 1"));
        }
        if !(self.analytics.top_pct > 0.0 && self.analytics.top_pct <= 100.0) {
            return Err(Error::config("analytics.top_pct", "must lie in (0, 100]"));
        }
        Ok(())
    }
}
