//! Gridded daily inputs and the preprocessing that turns them into windowed
//! training samples.
//!
//! A [`GridSeries`] holds `T×H×W×C_d` dynamic features, `H×W×C_s` static
//! features and a daily target. [`prepare`] imputes missing values, scales
//! features, appends the static and cyclic-coordinate channels and slices the
//! result into sliding windows (`C = C_d + C_s + 4`).

pub mod io;

use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CYCLIC_FEATURE_NAMES: [&str; 4] = ["sin_lat", "cos_lat", "sin_lon", "cos_lon"];

/// Latitude (per row) and longitude (per column) of the grid, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxes {
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub dates: Vec<NaiveDate>,
    /// `T×H×W×C_d`
    pub dynamic: Tensor,
    /// `H×W×C_s`
    pub static_features: Tensor,
    pub axes: GridAxes,
    /// Dynamic names first, then static names.
    pub feature_names: Vec<String>,
    /// One value per date; NaN marks a missing observation.
    pub target: Vec<f64>,
}

impl GridSeries {
    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn height(&self) -> usize {
        self.axes.lat.len()
    }

    pub fn width(&self) -> usize {
        self.axes.lon.len()
    }

    pub fn dynamic_channels(&self) -> usize {
        self.dynamic.shape().get(3).copied().unwrap_or(0)
    }

    pub fn static_channels(&self) -> usize {
        self.static_features.shape().get(2).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, h, w) = (self.days(), self.height(), self.width());
        if t == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("empty grid series ({t} days, {h}x{w})")));
        }
        check_consecutive(&self.dates)?;
        check_monotone("lat", &self.axes.lat)?;
        check_monotone("lon", &self.axes.lon)?;
        if self.dynamic.rank() != 4 || self.dynamic.shape()[..3] != [t, h, w] {
            return Err(Error::Shape(format!(
                "dynamic features {:?} do not match {t}x{h}x{w}xC",
                self.dynamic.shape()
            )));
        }
        if self.static_features.rank() != 3 || self.static_features.shape()[..2] != [h, w] {
            return Err(Error::Shape(format!(
                "static features {:?} do not match {h}x{w}xC",
                self.static_features.shape()
            )));
        }
        if self.feature_names.len() != self.dynamic_channels() + self.static_channels() {
            return Err(Error::Shape(format!(
                "{} feature names for {} dynamic + {} static channels",
                self.feature_names.len(),
                self.dynamic_channels(),
                self.static_channels()
            )));
        }
        if self.target.len() != t {
            return Err(Error::Shape(format!(
                "target has {} values for {t} days",
                self.target.len()
            )));
        }
        Ok(())
    }

    /// Assembles `T×H×W×C` frames: dynamic, then static, then (optionally)
    /// the four cyclic coordinate channels.
    pub fn frames(&self, cyclic: bool) -> Result<Tensor> {
        let (t, h, w) = (self.days(), self.height(), self.width());
        let (cd, cs) = (self.dynamic_channels(), self.static_channels());
        let cells = coordinate_channels(&self.axes)?;
        let ce = if cyclic { 4 } else { 0 };
        let c = cd + cs + ce;
        let mut data = Vec::with_capacity(t * h * w * c);
        let dy = self.dynamic.data();
        let st = self.static_features.data();
        for day in 0..t {
            for cell in 0..h * w {
                let base = (day * h * w + cell) * cd;
                data.extend_from_slice(&dy[base..base + cd]);
                data.extend_from_slice(&st[cell * cs..(cell + 1) * cs]);
                if cyclic {
                    data.extend_from_slice(&cells[cell]);
                }
            }
        }
        Tensor::new(vec![t, h, w, c], data)
    }

    pub fn channel_names(&self, cyclic: bool) -> Vec<String> {
        let mut names = self.feature_names.clone();
        if cyclic {
            names.extend(CYCLIC_FEATURE_NAMES.iter().map(|s| s.to_string()));
        }
        names
    }
}

fn check_consecutive(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[0].succ_opt() != Some(pair[1]) {
            return Err(Error::InvalidDates(format!(
                "{} is not followed by the next day (got {})",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

fn check_monotone(name: &str, axis: &[f64]) -> Result<()> {
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(format!("{name} axis has non-finite entries")));
    }
    let inc = axis.windows(2).all(|p| p[0] < p[1]);
    let dec = axis.windows(2).all(|p| p[0] > p[1]);
    if !(inc || dec) {
        return Err(Error::Shape(format!("{name} axis is not strictly monotone")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CyclicCoords {
    pub sin_lat: f64,
    pub cos_lat: f64,
    pub sin_lon: f64,
    pub cos_lon: f64,
}

impl CyclicCoords {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sin_lat, self.cos_lat, self.sin_lon, self.cos_lon]
    }
}

/// Encodes latitude with a 90° period and longitude with a 180° period.
pub fn cyclic_encode(lat: f64, lon: f64) -> Result<CyclicCoords> {
    if !lat.is_finite() || !lon.is_finite() {
        return Err(Error::InvalidCoordinate { lat, lon });
    }
    let a = std::f64::consts::TAU * lat / 90.0;
    let b = std::f64::consts::TAU * lon / 180.0;
    Ok(CyclicCoords {
        sin_lat: a.sin(),
        cos_lat: a.cos(),
        sin_lon: b.sin(),
        cos_lon: b.cos(),
    })
}

fn coordinate_channels(axes: &GridAxes) -> Result<Vec<[f64; 4]>> {
    let mut out = Vec::with_capacity(axes.lat.len() * axes.lon.len());
    for &lat in &axes.lat {
        for &lon in &axes.lon {
            out.push(cyclic_encode(lat, lon)?.as_array());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMode {
    /// One mean per feature channel (last axis).
    #[default]
    PerChannel,
    /// One mean over the whole tensor.
    Global,
}

/// Replaces every NaN with the mean of the tensor's finite entries.
pub fn fill_missing(t: &Tensor) -> Result<Tensor> {
    let (sum, n) = t
        .data()
        .iter()
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, n), &v| (s + v, n + 1));
    if n == 0 {
        return Err(Error::CannotImpute);
    }
    let mean = sum / n as f64;
    Ok(t.map(|v| if v.is_finite() { v } else { mean }))
}

/// [`fill_missing`] applied independently to each slice of the last axis.
pub fn fill_missing_per_channel(t: &Tensor) -> Result<Tensor> {
    let Some(&c) = t.shape().last() else {
        return fill_missing(t);
    };
    if c == 0 || t.is_empty() {
        return Ok(t.clone());
    }
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (i, &v) in t.data().iter().enumerate() {
        if v.is_finite() {
            sums[i % c] += v;
            counts[i % c] += 1;
        }
    }
    if counts.contains(&0) {
        return Err(Error::CannotImpute);
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    let mut out = t.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if !v.is_finite() {
            *v = means[i % c];
        }
    }
    Ok(out)
}

pub fn impute(t: &Tensor, mode: ImputeMode) -> Result<Tensor> {
    match mode {
        ImputeMode::PerChannel => fill_missing_per_channel(t),
        ImputeMode::Global => fill_missing(t),
    }
}

/// Repeats an `H×W×C_s` grid `window_len` times along a new time axis.
pub fn broadcast_static(static_features: &Tensor, window_len: usize) -> Result<Tensor> {
    if window_len == 0 {
        return Err(Error::InvalidWindow(0));
    }
    let parts = vec![static_features.clone(); window_len];
    Tensor::stack(&parts)
}

/// Min-max scale fitted on finite values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub min: f64,
    pub max: f64,
}

impl TargetScale {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let finite = values.iter().copied().filter(|v| v.is_finite());
        let (min, max) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        if !(max > min) {
            return Err(Error::DegenerateRange { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * (self.max - self.min) + self.min
    }
}

/// Scales a series to `[0, 1]`; NaN entries stay NaN.
pub fn normalize_target(y: &[f64]) -> Result<(Vec<f64>, TargetScale)> {
    let scale = TargetScale::fit(y)?;
    Ok((y.iter().map(|&v| scale.apply(v)).collect(), scale))
}

/// Per-channel min-max statistics used to bring features to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScaling {
    /// Fits on a tensor whose last axis is channels; all values must be finite.
    pub fn fit(t: &Tensor) -> Self {
        let c = t.shape().last().copied().unwrap_or(0);
        let mut min = vec![f64::INFINITY; c];
        let mut max = vec![f64::NEG_INFINITY; c];
        for (i, &v) in t.data().iter().enumerate() {
            min[i % c] = min[i % c].min(v);
            max[i % c] = max[i % c].max(v);
        }
        Self { min, max }
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    /// Constant channels map to 0.
    pub fn apply(&self, t: &Tensor) -> Result<Tensor> {
        let c = t.shape().last().copied().unwrap_or(0);
        if c != self.channels() {
            return Err(Error::Shape(format!(
                "scaling fitted for {} channels applied to {c}",
                self.channels()
            )));
        }
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let (lo, hi) = (self.min[i % c], self.max[i % c]);
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetNormalization {
    /// Min/max fitted on the training split only.
    #[default]
    TrainSplit,
    FullSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window_len: usize,
    pub split_frac: f64,
    pub seed: u64,
    pub impute_mode: ImputeMode,
    pub cyclic_coords: bool,
    pub scale_features: bool,
    pub target_normalization: TargetNormalization,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_len: 7,
            split_frac: 0.8,
            seed: 0,
            impute_mode: ImputeMode::PerChannel,
            cyclic_coords: true,
            scale_features: true,
            target_normalization: TargetNormalization::TrainSplit,
        }
    }
}

/// Windowed samples over a shared frame buffer.
///
/// Sample `i` covers days `start_i .. start_i + window_len`, which is a
/// contiguous block of the row-major `T×H×W×C` frames, so windows are
/// borrowed rather than copied.
#[derive(Debug, Clone)]
pub struct WindowedDataset {
    frames: Arc<Tensor>,
    starts: Vec<usize>,
    targets: Vec<f64>,
    target_dates: Vec<NaiveDate>,
    window_len: usize,
    axes: Arc<GridAxes>,
    feature_names: Arc<Vec<String>>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// `(H, W, C)`
    pub fn grid_dims(&self) -> (usize, usize, usize) {
        let s = self.frames.shape();
        (s[1], s[2], s[3])
    }

    /// Shape of one sample: `[window_len, H, W, C]`.
    pub fn sample_shape(&self) -> [usize; 4] {
        let (h, w, c) = self.grid_dims();
        [self.window_len, h, w, c]
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let (h, w, c) = self.grid_dims();
        let frame = h * w * c;
        let s = self.starts[i];
        &self.frames.data()[s * frame..(s + self.window_len) * frame]
    }

    pub fn input_tensor(&self, i: usize) -> Tensor {
        Tensor::new(self.sample_shape().to_vec(), self.input(i).to_vec())
            .expect("window slice matches sample shape")
    }

    /// Materializes the full `N×Wn×H×W×C` input tensor.
    pub fn inputs(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.len() * self.input(0).len().max(1));
        for i in 0..self.len() {
            data.extend_from_slice(self.input(i));
        }
        let mut shape = vec![self.len()];
        shape.extend_from_slice(&self.sample_shape());
        Tensor::new(shape, data).expect("windows share one shape")
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn target_dates(&self) -> &[NaiveDate] {
        &self.target_dates
    }

    pub fn window_starts(&self) -> &[usize] {
        &self.starts
    }

    pub fn axes(&self) -> &GridAxes {
        &self.axes
    }

    pub fn shared_axes(&self) -> Arc<GridAxes> {
        Arc::clone(&self.axes)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// The samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> WindowedDataset {
        WindowedDataset {
            frames: Arc::clone(&self.frames),
            starts: indices.iter().map(|&i| self.starts[i]).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            target_dates: indices.iter().map(|&i| self.target_dates[i]).collect(),
            window_len: self.window_len,
            axes: Arc::clone(&self.axes),
            feature_names: Arc::clone(&self.feature_names),
        }
    }

    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> WindowedDataset {
        let mut out = self.clone();
        out.targets = self.targets.iter().map(|&v| f(v)).collect();
        out
    }
}

/// Slices assembled `T×H×W×C` frames into windows of `window_len` days; the
/// target of window `i` is day `i + window_len`.
pub fn window_frames(
    frames: Tensor,
    dates: &[NaiveDate],
    target: &[f64],
    window_len: usize,
    axes: GridAxes,
    feature_names: Vec<String>,
) -> Result<WindowedDataset> {
    if window_len == 0 {
        return Err(Error::InvalidWindow(0));
    }
    if frames.rank() != 4 {
        return Err(Error::Shape(format!("frames must be T×H×W×C, got {:?}", frames.shape())));
    }
    let total = frames.shape()[0];
    if dates.len() != total || target.len() != total {
        return Err(Error::Shape(format!(
            "{total} frames, {} dates, {} targets",
            dates.len(),
            target.len()
        )));
    }
    if feature_names.len() != frames.shape()[3] {
        return Err(Error::Shape(format!(
            "{} feature names for {} channels",
            feature_names.len(),
            frames.shape()[3]
        )));
    }
    if total <= window_len {
        return Err(Error::InsufficientHistory {
            total,
            window: window_len,
        });
    }
    let n = total - window_len;
    Ok(WindowedDataset {
        frames: Arc::new(frames),
        starts: (0..n).collect(),
        targets: target[window_len..].to_vec(),
        target_dates: dates[window_len..].to_vec(),
        window_len,
        axes: Arc::new(axes),
        feature_names: Arc::new(feature_names),
    })
}

/// Windows a series without imputation or scaling (all channels, including
/// the cyclic coordinates).
pub fn make_windows(gs: &GridSeries, window_len: usize) -> Result<WindowedDataset> {
    gs.validate()?;
    if gs.days() <= window_len {
        return Err(Error::InsufficientHistory {
            total: gs.days(),
            window: window_len,
        });
    }
    window_frames(
        gs.frames(true)?,
        &gs.dates,
        &gs.target,
        window_len,
        gs.axes.clone(),
        gs.channel_names(true),
    )
}

/// Removes samples whose target is missing, keeping order.
pub fn drop_missing_targets(ds: &WindowedDataset) -> WindowedDataset {
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.targets[i].is_finite()).collect();
    ds.select(&keep)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    /// Checks disjointness, coverage of `0..n` and the spread of validation
    /// indices.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.train_idx.iter().chain(&self.val_idx) {
            if i >= n || seen[i] {
                return Err(Error::Shape(format!("split index {i} repeated or out of range")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Shape("split does not cover every sample".into()));
        }
        if let (Some(&first), Some(&last)) = (self.val_idx.first(), self.val_idx.last()) {
            let mut v = self.val_idx.clone();
            v.sort_unstable();
            let bound = 2.0 * n as f64 / v.len() as f64;
            let max_gap = v.windows(2).map(|p| p[1] - p[0]).max().unwrap_or(0);
            if max_gap as f64 > bound {
                return Err(Error::Shape(format!(
                    "validation gap {max_gap} exceeds {bound:.2} (first {first}, last {last})"
                )));
            }
        }
        Ok(())
    }
}

/// Interleaved split: every `round(1/(1-frac))`-th sample, starting at
/// `seed mod stride`, goes to validation until `round((1-frac)·n)` are taken.
/// If the offset leaves the quota short, picking wraps around past the end.
pub fn split_dataset(n: usize, frac: f64, seed: u64) -> Result<SplitPlan> {
    if n < 5 {
        return Err(Error::TooFewSamples(n));
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::config("split_frac", format!("{frac} is not in (0, 1)")));
    }
    let quota = (((1.0 - frac) * n as f64).round() as usize).clamp(1, n - 1);
    let stride = ((1.0 / (1.0 - frac)).round() as usize).max(1);
    let offset = (seed % stride as u64) as usize;
    let mut is_val = vec![false; n];
    let mut taken = 0;
    let mut pos = offset;
    while taken < quota {
        let i = pos % n;
        if !is_val[i] {
            is_val[i] = true;
            taken += 1;
        } else if pos >= n {
            // Every stride position is taken; fall back to the next free slot.
            let free = (0..n).map(|k| (i + k) % n).find(|&k| !is_val[k]).unwrap();
            is_val[free] = true;
            taken += 1;
        }
        pos += stride;
    }
    let (val_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| is_val[i]);
    Ok(SplitPlan {
        train_idx,
        val_idx,
        seed,
    })
}

/// Fitted preprocessing state, persisted with a model so new data can be
/// transformed identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub config: PipelineConfig,
    pub feature_scaling: Option<FeatureScaling>,
    pub target_scale: TargetScale,
}

/// Output of [`prepare`]: normalized samples and their split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: WindowedDataset,
    pub split: SplitPlan,
    pub preprocessing: Preprocessing,
}

fn impute_and_scale(
    gs: &GridSeries,
    cfg: &PipelineConfig,
    scaling: Option<&FeatureScaling>,
) -> Result<(GridSeries, Option<FeatureScaling>)> {
    let mut filled = gs.clone();
    filled.dynamic = impute(&gs.dynamic, cfg.impute_mode)?;
    if gs.static_channels() > 0 {
        filled.static_features = impute(&gs.static_features, cfg.impute_mode)?;
    }
    if !cfg.scale_features {
        return Ok((filled, None));
    }
    let (cd, cs) = (gs.dynamic_channels(), gs.static_channels());
    let fitted = match scaling {
        Some(s) => s.clone(),
        None => {
            let dynamic = FeatureScaling::fit(&filled.dynamic);
            let stat = FeatureScaling::fit(&filled.static_features);
            let mut min = dynamic.min;
            let mut max = dynamic.max;
            min.extend(stat.min);
            max.extend(stat.max);
            FeatureScaling { min, max }
        }
    };
    if fitted.channels() != cd + cs {
        return Err(Error::Shape(format!(
            "scaling has {} channels, data has {}",
            fitted.channels(),
            cd + cs
        )));
    }
    let dyn_part = FeatureScaling {
        min: fitted.min[..cd].to_vec(),
        max: fitted.max[..cd].to_vec(),
    };
    let st_part = FeatureScaling {
        min: fitted.min[cd..].to_vec(),
        max: fitted.max[cd..].to_vec(),
    };
    filled.dynamic = dyn_part.apply(&filled.dynamic)?;
    if cs > 0 {
        filled.static_features = st_part.apply(&filled.static_features)?;
    }
    Ok((filled, Some(fitted)))
}

fn windows_after_impute(gs: &GridSeries, cfg: &PipelineConfig) -> Result<WindowedDataset> {
    let ds = window_frames(
        gs.frames(cfg.cyclic_coords)?,
        &gs.dates,
        &gs.target,
        cfg.window_len,
        gs.axes.clone(),
        gs.channel_names(cfg.cyclic_coords),
    )?;
    Ok(drop_missing_targets(&ds))
}

/// Full preprocessing: impute, scale, window, drop missing targets, split and
/// normalize the target.
pub fn prepare(gs: &GridSeries, cfg: &PipelineConfig) -> Result<PreparedData> {
    gs.validate()?;
    let (filled, feature_scaling) = impute_and_scale(gs, cfg, None)?;
    let ds = windows_after_impute(&filled, cfg)?;
    let split = split_dataset(ds.len(), cfg.split_frac, cfg.seed)?;
    let fit_on: Vec<f64> = match cfg.target_normalization {
        TargetNormalization::TrainSplit => split.train_idx.iter().map(|&i| ds.targets()[i]).collect(),
        TargetNormalization::FullSeries => ds.targets().to_vec(),
    };
    let target_scale = TargetScale::fit(&fit_on)?;
    let dataset = ds.map_targets(|v| target_scale.apply(v));
    Ok(PreparedData {
        dataset,
        split,
        preprocessing: Preprocessing {
            config: cfg.clone(),
            feature_scaling,
            target_scale,
        },
    })
}

/// Re-applies previously fitted preprocessing to a (possibly new) series.
pub fn apply_preprocessing(gs: &GridSeries, pre: &Preprocessing) -> Result<PreparedData> {
    gs.validate()?;
    let (filled, _) = impute_and_scale(gs, &pre.config, pre.feature_scaling.as_ref())?;
    let ds = windows_after_impute(&filled, &pre.config)?;
    let split = split_dataset(ds.len(), pre.config.split_frac, pre.config.seed)?;
    let scale = pre.target_scale;
    Ok(PreparedData {
        dataset: ds.map_targets(|v| scale.apply(v)),
        split,
        preprocessing: pre.clone(),
    })
}
