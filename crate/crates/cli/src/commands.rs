//! One function per subcommand. Each writes into its output directory and
//! finishes with `manifest.json` listing every file it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use hydrotrace_core::analytics::{
    map_to_json, monthly_feature_means, seasonal_feature_means, seasonal_top_k, spatial_mean_map, to_pgm,
    top_percentile_locations, write_map_csv, write_mask_csv, write_table_csv, AttentionStore, Period,
};
use hydrotrace_core::grid::io::{read_grid_dir, write_grid_binary};
use hydrotrace_core::grid::{apply_preprocessing, prepare, PreparedData};
use hydrotrace_core::metrics::{MetricReport, MetricSeries};
use hydrotrace_core::model::{extract_attention, load_checkpoint, save_checkpoint, Checkpoint, ModelHyper};
use hydrotrace_core::synthetic::generate;
use hydrotrace_core::training::{predict, random_search, write_trial_log, SearchOutcome, TrainedTrial};
use hydrotrace_core::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::manifest::{dataset_fingerprint, run_id, Artifact, RunManifest, MANIFEST_VERSION};

pub const DATA_DIR: &str = "data";
pub const ORACLE_FILE: &str = "oracle.json";
pub const CHECKPOINT_FILE: &str = "model.htm";
pub const HISTORY_FILE: &str = "history.csv";
pub const TRIALS_FILE: &str = "trials.csv";
pub const BEST_CONFIG_FILE: &str = "best_config.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TXT: &str = "metrics.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const STORE_DIR: &str = "store";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Collects what a command writes, then seals it into a manifest.
struct Recorder {
    command: &'static str,
    out: PathBuf,
    started_at: DateTime<Utc>,
    written: Vec<PathBuf>,
    inputs: Vec<Artifact>,
}

impl Recorder {
    fn new(command: &'static str, out: &Path) -> Result<Self> {
        fs::create_dir_all(out)?;
        Ok(Self {
            command,
            out: out.to_path_buf(),
            started_at: Utc::now(),
            written: Vec::new(),
            inputs: Vec::new(),
        })
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.out.join(rel)
    }

    /// Records absolute or out-relative paths.
    fn wrote(&mut self, p: impl AsRef<Path>) {
        let p = p.as_ref();
        let rel = p.strip_prefix(&self.out).unwrap_or(p).to_path_buf();
        self.written.push(rel);
    }

    fn write_bytes(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let path = self.path(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.wrote(rel);
        Ok(())
    }

    fn write_with(&mut self, rel: impl AsRef<Path>, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.path(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        f(&mut w)?;
        w.flush()?;
        self.wrote(rel);
        Ok(())
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let (sha256, bytes) = crate::manifest::sha256_file(path)?;
        self.inputs.push(Artifact {
            path: path.to_path_buf(),
            sha256,
            bytes,
        });
        Ok(())
    }

    fn finish(self, sealed: Sealed) -> Result<RunManifest> {
        let artifacts = self
            .written
            .iter()
            .map(|rel| Artifact::hash(&self.out, rel))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            manifest_version: MANIFEST_VERSION,
            run_id: sealed.run_id,
            command: self.command.to_string(),
            seed: sealed.seed,
            config: sealed.config,
            dataset_fingerprint: sealed.fingerprint,
            inputs: self.inputs,
            artifacts,
            checkpoint: sealed.checkpoint,
            metric_report: sealed.metric_report,
            attention_store: sealed.attention_store,
            started_at: self.started_at,
            finished_at: Utc::now(),
        };
        manifest.write(&self.out)?;
        log::info!("{} run {} wrote {} files to {}", self.command, manifest.run_id, manifest.artifacts.len(), self.out.display());
        Ok(manifest)
    }
}

#[derive(Default)]
struct Sealed {
    run_id: String,
    seed: u64,
    config: serde_json::Value,
    fingerprint: Option<String>,
    checkpoint: Option<PathBuf>,
    metric_report: Option<PathBuf>,
    attention_store: Option<PathBuf>,
}

impl Sealed {
    fn new(command: &str, cfg: &RunConfig, seed: u64, fingerprint: Option<String>) -> Result<Self> {
        let config = serde_json::to_value(cfg)?;
        Ok(Self {
            run_id: run_id(command, &config, fingerprint.as_deref(), seed),
            seed,
            config,
            fingerprint,
            ..Self::default()
        })
    }
}

/// Synthetic dataset with planted structure: `data/` in the binary layout
/// plus `data/oracle.json`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = Recorder::new("synth", out)?;
    let data = generate(&cfg.synthetic)?;
    let dir = rec.path(DATA_DIR);
    for p in write_grid_binary(&data.series, &dir)? {
        rec.wrote(p);
    }
    let oracle = dir.join(ORACLE_FILE);
    data.oracle.save(&oracle)?;
    rec.wrote(oracle);
    let fingerprint = dataset_fingerprint(&dir)?;
    let sealed = Sealed::new("synth", cfg, cfg.synthetic.seed, Some(fingerprint))?;
    rec.finish(sealed)
}

/// Copies a dataset directory in either layout into `data/` in the binary
/// layout.
pub fn cmd_ingest(cfg: &RunConfig, data: &Path, out: &Path) -> Result<RunManifest> {
    let mut rec = Recorder::new("ingest", out)?;
    let series = read_grid_dir(data)?;
    series.validate()?;
    record_dataset_inputs(&mut rec, data)?;
    let dir = rec.path(DATA_DIR);
    for p in write_grid_binary(&series, &dir)? {
        rec.wrote(p);
    }
    let fingerprint = dataset_fingerprint(&dir)?;
    let sealed = Sealed::new("ingest", cfg, cfg.pipeline.seed, Some(fingerprint))?;
    rec.finish(sealed)
}

fn record_dataset_inputs(rec: &mut Recorder, data: &Path) -> Result<String> {
    for f in hydrotrace_core::grid::io::dataset_files(data)? {
        rec.input(&f)?;
    }
    dataset_fingerprint(data)
}

fn load_prepared(cfg: &RunConfig, data: &Path) -> Result<PreparedData> {
    let series = read_grid_dir(data)?;
    prepare(&series, &cfg.pipeline)
}

fn search(cfg: &RunConfig, prepared: &PreparedData) -> Result<SearchOutcome<TrainedTrial>> {
    let channels = prepared.dataset.sample_shape()[3];
    let template = ModelHyper {
        spatial_activation: cfg.spatial_activation,
        ..ModelHyper::new(channels, 3, 3)
    };
    log::info!(
        "searching {} trials over {} samples ({} train, {} validation)",
        cfg.train.search_trials,
        prepared.dataset.len(),
        prepared.split.train_idx.len(),
        prepared.split.val_idx.len()
    );
    random_search(
        &prepared.dataset,
        &prepared.split,
        &cfg.search,
        &cfg.train,
        &template,
        cfg.train.seed,
    )
}

/// Random search, then the best trial's checkpoint, its epoch history and
/// the trial log.
pub fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = Recorder::new("train", out)?;
    let fingerprint = record_dataset_inputs(&mut rec, data)?;
    let prepared = load_prepared(cfg, data)?;
    let outcome = search(cfg, &prepared)?;
    let best = outcome.payload;
    log::info!("best trial {} with validation MAE {:?}", outcome.best.trial, outcome.best.val_mae);

    let mut ck = Checkpoint::new(best.params, best.config.seed, prepared.dataset.feature_names().to_vec());
    ck.header.preprocessing = Some(prepared.preprocessing.clone());
    ck.header.train_config = serde_json::to_value(&best.config)?;
    save_checkpoint(&rec.path(CHECKPOINT_FILE), &ck)?;
    rec.wrote(CHECKPOINT_FILE);
    rec.write_with(HISTORY_FILE, |w| best.history.write_csv(w))?;
    rec.write_with(TRIALS_FILE, |w| write_trial_log(w, &outcome.log))?;

    let mut sealed = Sealed::new("train", cfg, cfg.train.seed, Some(fingerprint))?;
    sealed.checkpoint = Some(CHECKPOINT_FILE.into());
    rec.finish(sealed)
}

/// Random search only: the trial log and the winning configuration.
pub fn cmd_tune(cfg: &RunConfig, data: &Path, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = Recorder::new("tune", out)?;
    let fingerprint = record_dataset_inputs(&mut rec, data)?;
    let prepared = load_prepared(cfg, data)?;
    let outcome = search(cfg, &prepared)?;
    rec.write_with(TRIALS_FILE, |w| write_trial_log(w, &outcome.log))?;
    let best = json!({
        "trial": outcome.best.trial,
        "seed": outcome.best.seed,
        "val_mae": outcome.best.val_mae,
        "epochs_run": outcome.best.epochs_run,
        "hyper": outcome.payload.params.hyper,
        "train": outcome.payload.config,
    });
    rec.write_bytes(BEST_CONFIG_FILE, &serde_json::to_vec_pretty(&best)?)?;
    let sealed = Sealed::new("tune", cfg, cfg.train.seed, Some(fingerprint))?;
    rec.finish(sealed)
}

/// The dataset prepared exactly as it was for training the checkpoint.
fn prepared_for(ck: &Checkpoint, data: &Path) -> Result<PreparedData> {
    let series = read_grid_dir(data)?;
    let pre = ck
        .header
        .preprocessing
        .as_ref()
        .ok_or_else(|| Error::Format("checkpoint carries no preprocessing state".into()))?;
    let prepared = apply_preprocessing(&series, pre)?;
    let channels = prepared.dataset.sample_shape()[3];
    if channels != ck.params.hyper.channels {
        return Err(Error::Shape(format!(
            "checkpoint expects {} channels, dataset has {channels}",
            ck.params.hyper.channels
        )));
    }
    if prepared.dataset.feature_names() != ck.header.feature_names.as_slice() {
        return Err(Error::Shape(format!(
            "checkpoint features {:?} differ from dataset features {:?}",
            ck.header.feature_names,
            prepared.dataset.feature_names()
        )));
    }
    Ok(prepared)
}

/// Observed and predicted values of one split, in original target units.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPredictions {
    pub split: &'static str,
    pub dates: Vec<NaiveDate>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl SplitPredictions {
    pub fn report(&self) -> Result<MetricReport> {
        MetricReport::compute(&MetricSeries::new(self.observed.clone(), self.predicted.clone())?)
    }
}

/// `metrics.json`, `metrics.txt` and `predictions.csv` for the given splits.
pub fn write_metric_files(out: &Path, splits: &[SplitPredictions]) -> Result<Vec<PathBuf>> {
    let mut json_splits = serde_json::Map::new();
    let mut text = String::new();
    let mut reports = Vec::new();
    for s in splits {
        let report = s.report()?;
        json_splits.insert(
            s.split.to_string(),
            json!({"n_samples": s.observed.len(), "metrics": report.to_json()}),
        );
        text.push_str(&format!("{} (n = {})\n{}\n", s.split, s.observed.len(), report.to_table()));
        reports.push(report);
    }
    let doc = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "units": "original",
        "splits": json_splits,
    });
    fs::create_dir_all(out)?;
    let paths = [out.join(METRICS_JSON), out.join(METRICS_TXT), out.join(PREDICTIONS_FILE)];
    fs::write(&paths[0], serde_json::to_vec_pretty(&doc)?)?;
    fs::write(&paths[1], text)?;
    let mut w = csv::Writer::from_path(&paths[2]).map_err(Error::from)?;
    w.write_record(["split", "date", "observed", "predicted"])?;
    for s in splits {
        for ((d, o), p) in s.dates.iter().zip(&s.observed).zip(&s.predicted) {
            w.write_record([s.split.to_string(), d.to_string(), o.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(paths.to_vec())
}

/// Metric reports for the training and validation splits, in original
/// target units.
pub fn cmd_evaluate(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<RunManifest> {
    let mut rec = Recorder::new("evaluate", out)?;
    rec.input(checkpoint)?;
    let fingerprint = record_dataset_inputs(&mut rec, data)?;
    let ck = load_checkpoint(checkpoint)?;
    let prepared = prepared_for(&ck, data)?;
    let ds = &prepared.dataset;
    let scale = prepared.preprocessing.target_scale;
    let mut splits = Vec::new();
    for (name, idx) in [("train", &prepared.split.train_idx), ("validation", &prepared.split.val_idx)] {
        let pred = predict(&ck.params, ds, idx)?;
        splits.push(SplitPredictions {
            split: name,
            dates: idx.iter().map(|&i| ds.target_dates()[i]).collect(),
            observed: idx.iter().map(|&i| scale.inverse(ds.targets()[i])).collect(),
            predicted: pred.into_iter().map(|v| scale.inverse(v)).collect(),
        });
    }
    for p in write_metric_files(out, &splits)? {
        rec.wrote(p);
    }
    let mut sealed = Sealed::new("evaluate", cfg, ck.header.seed, Some(fingerprint))?;
    sealed.checkpoint = Some(checkpoint.to_path_buf());
    sealed.metric_report = Some(METRICS_JSON.into());
    rec.finish(sealed)
}

fn period_file(p: Period) -> String {
    p.to_string()
}

/// Attention store plus the monthly, seasonal, map and mask exports.
pub fn cmd_attention(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    let mut rec = Recorder::new("attention", out)?;
    rec.input(checkpoint)?;
    let fingerprint = record_dataset_inputs(&mut rec, data)?;
    let ck = load_checkpoint(checkpoint)?;
    let prepared = prepared_for(&ck, data)?;
    let ds = &prepared.dataset;
    let names = ds.feature_names().to_vec();
    let sealed_id = Sealed::new("attention", cfg, ck.header.seed, Some(fingerprint))?;

    let records = extract_attention(&ck.params, ds)?;
    let store = AttentionStore::new(sealed_id.run_id.clone(), names.clone(), records)?;
    let store_dir = rec.path(STORE_DIR);
    store.save(&store_dir)?;
    let mut store_files: Vec<PathBuf> = fs::read_dir(&store_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    store_files.sort();
    for p in store_files {
        rec.wrote(p);
    }

    let a = &cfg.analytics;
    let monthly = monthly_feature_means(&store.records, &names)?;
    rec.write_with("attention_monthly.csv", |w| write_table_csv(w, &monthly))?;
    let seasonal = seasonal_feature_means(&store.records, &names, &a.calendar)?;
    rec.write_with("attention_seasonal.csv", |w| write_table_csv(w, &seasonal))?;

    let top = seasonal_top_k(&store.records, &names, &a.calendar, a.top_k)?;
    let stem = format!("seasonal_top{}", a.top_k);
    let top_json: serde_json::Map<String, serde_json::Value> = top
        .iter()
        .map(|(s, v)| Ok((s.label().to_string(), serde_json::to_value(v)?)))
        .collect::<Result<_>>()?;
    rec.write_bytes(format!("{stem}.json"), &serde_json::to_vec_pretty(&top_json)?)?;
    rec.write_with(format!("{stem}.csv"), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["season", "rank", "index", "feature", "mean_weight"])?;
        for (s, ranked) in &top {
            for r in ranked {
                out.write_record([
                    s.label().to_string(),
                    r.rank.to_string(),
                    r.index.to_string(),
                    r.feature.clone(),
                    r.mean_weight.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    })?;

    for period in Period::seasons().chain([Period::All]) {
        let map = match spatial_mean_map(&store.records, period, &a.calendar) {
            Ok(m) => m,
            Err(Error::EmptyPeriod(p)) => {
                log::warn!("no samples in {p}; map skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        let name = period_file(period);
        rec.write_with(format!("maps/{name}.csv"), |w| write_map_csv(w, &map))?;
        rec.write_bytes(format!("maps/{name}.json"), &serde_json::to_vec_pretty(&map_to_json(&map))?)?;
        rec.write_bytes(format!("maps/{name}.pgm"), &to_pgm(&map))?;
        let mask = top_percentile_locations(&map, a.top_pct)?;
        rec.write_with(format!("masks/{name}_top{}.csv", a.top_pct), |w| {
            write_mask_csv(w, &mask, &map.lat, &map.lon)
        })?;
    }

    let mut sealed = sealed_id;
    sealed.checkpoint = Some(checkpoint.to_path_buf());
    sealed.attention_store = Some(STORE_DIR.into());
    rec.finish(sealed)
}
