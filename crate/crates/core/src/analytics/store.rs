//! Persisted attention records: what the query service reads.
//!
//! Directory layout:
//!
//! ```text
//! store.json   schema version, run id, feature names, axes, target dates
//! alpha.htt    N×T×H×W
//! beta.htt     N×C
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridAxes;
use crate::model::AttentionRecord;
use crate::tensor::{load_tensor, save_tensor, Tensor};

pub const STORE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoreMeta {
    schema_version: u32,
    run_id: String,
    feature_names: Vec<String>,
    lat: Vec<f64>,
    lon: Vec<f64>,
    dates: Vec<NaiveDate>,
}

/// Records sorted by target date, sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStore {
    pub run_id: String,
    pub feature_names: Vec<String>,
    pub records: Vec<AttentionRecord>,
}

impl AttentionStore {
    pub fn new(run_id: impl Into<String>, feature_names: Vec<String>, mut records: Vec<AttentionRecord>) -> Result<Self> {
        let first = records.first().ok_or(Error::EmptyRecords)?;
        if first.beta.len() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} feature names for {} attention weights",
                feature_names.len(),
                first.beta.len()
            )));
        }
        let (shape, axes) = (first.alpha.shape().to_vec(), Arc::clone(&first.axes));
        if records
            .iter()
            .any(|r| r.alpha.shape() != shape.as_slice() || r.beta.len() != feature_names.len() || r.axes != axes)
        {
            return Err(Error::Shape("records disagree on shapes or axes".into()));
        }
        records.sort_by_key(|r| r.target_date);
        Ok(Self {
            run_id: run_id.into(),
            feature_names,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn axes(&self) -> &GridAxes {
        &self.records[0].axes
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let first = &self.records[0];
        let meta = StoreMeta {
            schema_version: STORE_SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            feature_names: self.feature_names.clone(),
            lat: first.axes.lat.clone(),
            lon: first.axes.lon.clone(),
            dates: self.records.iter().map(|r| r.target_date).collect(),
        };
        fs::write(dir.join("store.json"), serde_json::to_vec_pretty(&meta)?)?;
        let mut ashape = vec![self.len()];
        ashape.extend_from_slice(first.alpha.shape());
        let alpha: Vec<f64> = self.records.iter().flat_map(|r| r.alpha.data().iter().copied()).collect();
        let beta: Vec<f64> = self.records.iter().flat_map(|r| r.beta.data().iter().copied()).collect();
        save_tensor(&dir.join("alpha.htt"), &Tensor::new(ashape, alpha)?)?;
        save_tensor(&dir.join("beta.htt"), &Tensor::new(vec![self.len(), self.feature_names.len()], beta)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: StoreMeta = serde_json::from_slice(&fs::read(dir.join("store.json"))?)?;
        if meta.schema_version != STORE_SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported store schema {}", meta.schema_version)));
        }
        let alpha = load_tensor(&dir.join("alpha.htt"))?;
        let beta = load_tensor(&dir.join("beta.htt"))?;
        let n = meta.dates.len();
        let (h, w, c) = (meta.lat.len(), meta.lon.len(), meta.feature_names.len());
        if alpha.rank() != 4 || alpha.shape()[0] != n || alpha.shape()[2..] != [h, w] || beta.shape() != [n, c] {
            return Err(Error::Format(format!(
                "store tensors {:?} / {:?} do not match {n} records on {h}×{w} with {c} features",
                alpha.shape(),
                beta.shape()
            )));
        }
        let axes = Arc::new(GridAxes {
            lat: meta.lat,
            lon: meta.lon,
        });
        let t = alpha.shape()[1];
        let step = t * h * w;
        let records = meta
            .dates
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                Ok(AttentionRecord {
                    alpha: Tensor::new(vec![t, h, w], alpha.data()[i * step..(i + 1) * step].to_vec())?,
                    beta: Tensor::new(vec![c], beta.data()[i * c..(i + 1) * c].to_vec())?,
                    target_date: d,
                    axes: Arc::clone(&axes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(meta.run_id, meta.feature_names, records)
    }
}
