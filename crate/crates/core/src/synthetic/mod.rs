//! Gridded datasets whose target is a known function of chosen channels,
//! regions and lags.
//!
//! Every channel is a sum of Gaussian bumps, each modulated by a pair of
//! slow integer-frequency sinusoids, plus white noise. Planted bumps reserve
//! their frequencies, so over the full series every other bump is orthogonal
//! to them and non-planted channels carry no signal about the target.
//! A planted channel additionally gets a bump centred on its region whose
//! amplitude stays positive and follows a seasonal cycle; that bump is what
//! the target reads.

use std::f64::consts::PI;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{normalize_target, GridAxes, GridSeries, TargetScale};
use crate::tensor::Tensor;

pub const ORACLE_FORMAT_VERSION: u32 = 1;

/// Lowest sinusoid frequency in cycles per series; keeps drivers from
/// looking like trends.
const MIN_FREQ: usize = 3;
/// Shortest driver period. A single-unit recurrent cell can only carry a
/// smoothed recent value, so a lagged target is learnable only when the
/// drivers barely change between adjacent days.
const MIN_PERIOD_DAYS: usize = 20;
const GRID_STEP_DEG: f64 = 0.25;
const ORIGIN_LAT: f64 = 30.0;
const ORIGIN_LON: f64 = 85.0;

/// Half-open rectangle `rows × cols` anchored at `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        i >= self.row && i < self.row + self.rows && j >= self.col && j < self.col + self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    fn centre(&self) -> (f64, f64) {
        (
            self.row as f64 + (self.rows as f64 - 1.0) / 2.0,
            self.col as f64 + (self.cols as f64 - 1.0) / 2.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Planted {
    pub channel: usize,
    pub region: Region,
    pub lag: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub days: usize,
    pub planted: Vec<Planted>,
    pub noise_sigma: f64,
    pub seasonal_period: f64,
    pub seed: u64,
    /// Lags must stay below this so the planted day is inside every window.
    pub window_len: usize,
    pub bumps_per_channel: usize,
    pub white_noise: f64,
    /// Amplitude multiplier for the ordinary bumps of a planted channel.
    /// Zero leaves only the planted bump; one makes them as strong as in
    /// any other channel.
    pub distractor_scale: f64,
    /// Mean level of a planted bump relative to its oscillation; keeps the
    /// region visibly elevated in the raw field.
    pub planted_offset: f64,
    pub start_date: NaiveDate,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            height: 24,
            width: 24,
            channels: 8,
            days: 730,
            planted: vec![Planted {
                channel: 3,
                region: Region {
                    row: 5,
                    col: 13,
                    rows: 6,
                    cols: 6,
                },
                lag: 2,
                weight: 1.0,
            }],
            noise_sigma: 0.02,
            seasonal_period: 365.0,
            seed: 0,
            window_len: 7,
            bumps_per_channel: 3,
            white_noise: 0.05,
            distractor_scale: 0.0,
            planted_offset: 3.0,
            start_date: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::config("height", "grid must be non-empty"));
        }
        if self.channels == 0 {
            return Err(Error::config("channels", "need at least one channel"));
        }
        if self.window_len == 0 {
            return Err(Error::config("window_len", "must be positive"));
        }
        if self.planted.is_empty() {
            return Err(Error::config("planted", "need at least one planted channel"));
        }
        for (n, p) in self.planted.iter().enumerate() {
            if p.channel >= self.channels {
                return Err(Error::config(
                    "planted.channel",
                    format!("entry {n}: channel {} outside 0..{}", p.channel, self.channels),
                ));
            }
            let r = p.region;
            if r.rows == 0 || r.cols == 0 || r.row + r.rows > self.height || r.col + r.cols > self.width {
                return Err(Error::config(
                    "planted.region",
                    format!("entry {n}: {r:?} not inside {}x{}", self.height, self.width),
                ));
            }
            if p.lag >= self.window_len {
                return Err(Error::config(
                    "planted.lag",
                    format!("entry {n}: lag {} not below window length {}", p.lag, self.window_len),
                ));
            }
            if !p.weight.is_finite() {
                return Err(Error::config("planted.weight", format!("entry {n}: not finite")));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::config("noise_sigma", "must be finite and non-negative"));
        }
        if !(self.white_noise.is_finite() && self.white_noise >= 0.0) {
            return Err(Error::config("white_noise", "must be finite and non-negative"));
        }
        if !(self.seasonal_period.is_finite() && self.seasonal_period > 0.0) {
            return Err(Error::config("seasonal_period", "must be positive"));
        }
        if !(self.distractor_scale.is_finite() && self.distractor_scale >= 0.0) {
            return Err(Error::config("distractor_scale", "must be finite and non-negative"));
        }
        if !self.planted_offset.is_finite() {
            return Err(Error::config("planted_offset", "must be finite"));
        }
        if self.bumps_per_channel == 0 {
            return Err(Error::config("bumps_per_channel", "must be positive"));
        }
        if self.days <= self.window_len + self.max_lag() {
            return Err(Error::config(
                "days",
                format!("{} days leave no windowed samples", self.days),
            ));
        }
        Ok(())
    }

    pub fn max_lag(&self) -> usize {
        self.planted.iter().map(|p| p.lag).max().unwrap_or(0)
    }

    pub fn feature_names(&self) -> Vec<String> {
        (0..self.channels).map(|c| format!("var{c}")).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        (0..self.days)
            .map(|d| self.start_date + Duration::days(d as i64))
            .collect()
    }
}

/// Machine-readable description of the generative formula.
///
/// `target[t] = (Σ_p weight_p · mean_{region_p} X[t − lag_p, ·, ·, channel_p]
/// + ε_t − scale.min) / (scale.max − scale.min)`; days before the largest lag
/// are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub format_version: u32,
    pub config: PlantConfig,
    pub feature_names: Vec<String>,
    pub target_scale: TargetScale,
    pub formula: String,
}

impl Oracle {
    pub fn planted(&self) -> &[Planted] {
        &self.config.planted
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let oracle: Oracle = serde_json::from_slice(&std::fs::read(path)?)?;
        if oracle.format_version != ORACLE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported oracle version {}",
                oracle.format_version
            )));
        }
        oracle.config.validate()?;
        Ok(oracle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub series: GridSeries,
    pub oracle: Oracle,
}

struct Bump {
    ci: f64,
    cj: f64,
    inv_two_var: f64,
    /// `offset + Σ amp · sin(2π t / period + phase)`
    offset: f64,
    waves: Vec<(f64, f64, f64)>,
}

impl Bump {
    fn spatial(&self, i: usize, j: usize) -> f64 {
        let (di, dj) = (i as f64 - self.ci, j as f64 - self.cj);
        (-(di * di + dj * dj) * self.inv_two_var).exp()
    }

    fn temporal(&self, t: usize) -> f64 {
        self.offset
            + self
                .waves
                .iter()
                .map(|&(amp, period, phase)| amp * (2.0 * PI * t as f64 / period + phase).sin())
                .sum::<f64>()
    }
}

fn draw_bumps(cfg: &PlantConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<Bump>> {
    let top = (cfg.days / MIN_PERIOD_DAYS).max(MIN_FREQ + 2);
    let mut pool: Vec<usize> = (MIN_FREQ..=top).collect();
    pool.shuffle(rng);
    // planted bumps own the head of the pool; everything else cycles
    // through the remainder, so no distractor shares a planted frequency
    let reserved = cfg.planted.len().min(pool.len() - 1);
    let (own, shared) = pool.split_at(reserved);
    let mut next_own = 0usize;
    let mut next_shared = 0usize;
    let period = |f: usize| cfg.days as f64 / f as f64;
    let (h, w) = (cfg.height as f64, cfg.width as f64);
    let scale = h.min(w);
    let mut out = Vec::with_capacity(cfg.channels);
    for c in 0..cfg.channels {
        let mut bumps = Vec::new();
        for p in cfg.planted.iter().filter(|p| p.channel == c) {
            let (ci, cj) = p.region.centre();
            let sigma = p.region.rows.max(p.region.cols) as f64 / 3.0;
            let phase = rng.gen_range(0.0..2.0 * PI);
            let own = period(own[next_own % own.len()]);
            next_own += 1;
            let own_phase = rng.gen_range(0.0..2.0 * PI);
            bumps.push(Bump {
                ci,
                cj,
                inv_two_var: 1.0 / (2.0 * sigma * sigma),
                offset: cfg.planted_offset,
                waves: vec![(0.5, cfg.seasonal_period, phase), (0.3, own, own_phase)],
            });
        }
        let damp = if cfg.planted.iter().any(|p| p.channel == c) {
            cfg.distractor_scale
        } else {
            1.0
        };
        for _ in 0..cfg.bumps_per_channel {
            let ci = rng.gen_range(0.0..h);
            let cj = rng.gen_range(0.0..w);
            let sigma = rng.gen_range(0.1..0.3) * scale;
            let sigma = sigma.max(0.5);
            let mut waves = Vec::with_capacity(2);
            for _ in 0..2 {
                let amp = damp * rng.gen_range(0.3..1.0);
                let p = period(shared[next_shared % shared.len()]);
                next_shared += 1;
                let phase = rng.gen_range(0.0..2.0 * PI);
                waves.push((amp, p, phase));
            }
            bumps.push(Bump {
                ci,
                cj,
                inv_two_var: 1.0 / (2.0 * sigma * sigma),
                offset: 0.0,
                waves,
            });
        }
        out.push(bumps);
    }
    out
}

pub fn grid_axes(height: usize, width: usize) -> GridAxes {
    GridAxes {
        lat: (0..height).map(|i| ORIGIN_LAT - GRID_STEP_DEG * i as f64).collect(),
        lon: (0..width).map(|j| ORIGIN_LON + GRID_STEP_DEG * j as f64).collect(),
    }
}

/// Generates features and the planted target.
///
/// Region sums for the target are accumulated while the features are
/// written; [`oracle_target`] recomputes them from the finished tensor.
pub fn generate(cfg: &PlantConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let (t_total, h, w, c) = (cfg.days, cfg.height, cfg.width, cfg.channels);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bumps = draw_bumps(cfg, &mut rng);
    let spatial: Vec<Vec<f64>> = bumps
        .iter()
        .flatten()
        .map(|b| {
            (0..h * w)
                .map(|cell| b.spatial(cell / w, cell % w))
                .collect()
        })
        .collect();
    let white = Normal::new(0.0, cfg.white_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::config("white_noise", e.to_string()))?;
    let mut data = vec![0.0; t_total * h * w * c];
    let mut region_sums = vec![vec![0.0; t_total]; cfg.planted.len()];
    let mut drivers = vec![0.0; spatial.len()];
    for t in 0..t_total {
        for (d, b) in drivers.iter_mut().zip(bumps.iter().flatten()) {
            *d = b.temporal(t);
        }
        for cell in 0..h * w {
            let (i, j) = (cell / w, cell % w);
            let mut k = 0;
            for (ch, chan_bumps) in bumps.iter().enumerate() {
                let mut v = 0.0;
                for _ in chan_bumps {
                    v += spatial[k][cell] * drivers[k];
                    k += 1;
                }
                if cfg.white_noise > 0.0 {
                    v += white.sample(&mut rng);
                }
                data[((t * h + i) * w + j) * c + ch] = v;
                for (p, sums) in cfg.planted.iter().zip(region_sums.iter_mut()) {
                    if p.channel == ch && p.region.contains(i, j) {
                        sums[t] += v;
                    }
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::config("noise_sigma", e.to_string()))?;
    let first = cfg.max_lag();
    let raw: Vec<f64> = (0..t_total)
        .map(|t| {
            if t < first {
                return f64::NAN;
            }
            let mut y = 0.0;
            for (p, sums) in cfg.planted.iter().zip(&region_sums) {
                y += p.weight * sums[t - p.lag] / p.region.cells() as f64;
            }
            if cfg.noise_sigma > 0.0 {
                y += noise.sample(&mut rng);
            }
            y
        })
        .collect();
    let (target, target_scale) = normalize_target(&raw)?;
    let feature_names = cfg.feature_names();
    let series = GridSeries {
        dates: cfg.dates(),
        dynamic: Tensor::new(vec![t_total, h, w, c], data)?,
        static_features: Tensor::zeros(&[h, w, 0]),
        axes: grid_axes(h, w),
        feature_names: feature_names.clone(),
        target,
    };
    series.validate()?;
    Ok(SyntheticData {
        series,
        oracle: Oracle {
            format_version: ORACLE_FORMAT_VERSION,
            config: cfg.clone(),
            feature_names,
            target_scale,
            formula: "y[t] = (sum_p weight_p * mean_{(i,j) in region_p} X[t - lag_p, i, j, channel_p] + eps_t - min) / (max - min)".into(),
        },
    })
}

/// Noise-free raw target straight from the formula; NaN before the largest lag.
pub fn oracle_raw_target(cfg: &PlantConfig, features: &Tensor) -> Result<Vec<f64>> {
    cfg.validate()?;
    let expected = [cfg.days, cfg.height, cfg.width, cfg.channels];
    if features.shape() != expected {
        return Err(Error::Shape(format!(
            "features {:?} do not match config {:?}",
            features.shape(),
            expected
        )));
    }
    let first = cfg.max_lag();
    let mut out = vec![f64::NAN; cfg.days];
    for (t, slot) in out.iter_mut().enumerate().skip(first) {
        let mut y = 0.0;
        for p in &cfg.planted {
            let r = p.region;
            let mut s = 0.0;
            for i in r.row..r.row + r.rows {
                for j in r.col..r.col + r.cols {
                    s += features.get(&[t - p.lag, i, j, p.channel])?;
                }
            }
            y += p.weight * (s / r.cells() as f64);
        }
        *slot = y;
    }
    Ok(out)
}

/// Noise-free target normalized with the oracle's stored constants.
pub fn oracle_target(oracle: &Oracle, features: &Tensor) -> Result<Vec<f64>> {
    let raw = oracle_raw_target(&oracle.config, features)?;
    Ok(raw.into_iter().map(|v| oracle.target_scale.apply(v)).collect())
}
