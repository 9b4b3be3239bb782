//! NSE, PBIAS, RSR, R² and the performance categories they are rated in.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Paired observed and predicted values.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    observed: Vec<f64>,
    predicted: Vec<f64>,
}

impl MetricSeries {
    pub fn new(observed: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        if observed.len() != predicted.len() {
            return Err(Error::InvalidSeries(format!(
                "{} observations, {} predictions",
                observed.len(),
                predicted.len()
            )));
        }
        if observed.len() < 2 {
            return Err(Error::InvalidSeries("need at least 2 pairs".into()));
        }
        if observed.iter().chain(&predicted).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries("non-finite value".into()));
        }
        Ok(Self { observed, predicted })
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.observed.iter().copied().zip(self.predicted.iter().copied())
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `Σ(v − v̄)²`
fn sum_sq_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum()
}

/// `1 − Σ(O−P)² / Σ(O−Ō)²`
pub fn nse(ms: &MetricSeries) -> Result<f64> {
    let denom = sum_sq_dev(&ms.observed);
    if denom == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let sse: f64 = ms.pairs().map(|(o, p)| (o - p) * (o - p)).sum();
    Ok(1.0 - sse / denom)
}

/// Sign convention of percent bias.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PbiasConvention {
    /// `100·Σ(P−O)/ΣO`: positive means overestimation.
    #[default]
    PredictedMinusObserved,
    /// `100·Σ(O−P)/ΣO`: positive means underestimation.
    ObservedMinusPredicted,
}

/// Percent bias, positive for overestimation.
pub fn pbias(ms: &MetricSeries) -> Result<f64> {
    pbias_with(ms, PbiasConvention::default())
}

pub fn pbias_with(ms: &MetricSeries, convention: PbiasConvention) -> Result<f64> {
    let total: f64 = ms.observed.iter().sum();
    if total == 0.0 {
        return Err(Error::UndefinedBias);
    }
    let diff: f64 = ms.pairs().map(|(o, p)| p - o).sum();
    let v = 100.0 * diff / total;
    Ok(match convention {
        PbiasConvention::PredictedMinusObserved => v,
        PbiasConvention::ObservedMinusPredicted => -v,
    })
}

/// RMSE (divisor `n`) over the sample standard deviation of the
/// observations (divisor `n−1`).
pub fn rsr(ms: &MetricSeries) -> Result<f64> {
    let n = ms.len() as f64;
    let ss = sum_sq_dev(&ms.observed);
    if ss == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let mse: f64 = ms.pairs().map(|(o, p)| (o - p) * (o - p)).sum::<f64>() / n;
    Ok(mse.sqrt() / (ss / (n - 1.0)).sqrt())
}

/// Squared Pearson correlation.
pub fn r_squared(ms: &MetricSeries) -> Result<f64> {
    let (mo, mp) = (mean(&ms.observed), mean(&ms.predicted));
    let (mut sop, mut soo, mut spp) = (0.0, 0.0, 0.0);
    for (o, p) in ms.pairs() {
        sop += (o - mo) * (p - mp);
        soo += (o - mo) * (o - mo);
        spp += (p - mp) * (p - mp);
    }
    if soo == 0.0 || spp == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    let r = sop / (soo.sqrt() * spp.sqrt());
    Ok((r * r).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Nse,
    Pbias,
    Rsr,
    R2,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Nse, Metric::Pbias, Metric::Rsr, Metric::R2];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Nse => "NSE",
            Metric::Pbias => "PBIAS",
            Metric::Rsr => "RSR",
            Metric::R2 => "R2",
        }
    }

    pub fn compute(self, ms: &MetricSeries) -> Result<f64> {
        match self {
            Metric::Nse => nse(ms),
            Metric::Pbias => pbias(ms),
            Metric::Rsr => rsr(ms),
            Metric::R2 => r_squared(ms),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nse" => Ok(Metric::Nse),
            "pbias" => Ok(Metric::Pbias),
            "rsr" => Ok(Metric::Rsr),
            "r2" | "r²" | "r_squared" | "rsquared" => Ok(Metric::R2),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    VeryGood,
    Good,
    Satisfactory,
    Unsatisfactory,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::VeryGood => "Very Good",
            Category::Good => "Good",
            Category::Satisfactory => "Satisfactory",
            Category::Unsatisfactory => "Unsatisfactory",
        })
    }
}

/// One closed or half-open interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub lo_inclusive: bool,
    pub hi: f64,
    pub hi_inclusive: bool,
}

impl Band {
    pub const fn new(lo: f64, lo_inclusive: bool, hi: f64, hi_inclusive: bool) -> Self {
        Self {
            lo,
            lo_inclusive,
            hi,
            hi_inclusive,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_inclusive { v >= self.lo } else { v > self.lo };
        let below = if self.hi_inclusive { v <= self.hi } else { v < self.hi };
        above && below
    }
}

/// Whether a metric is rated on its value or on its magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rated {
    Value,
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBands {
    pub rated: Rated,
    pub very_good: Band,
    pub good: Band,
    pub satisfactory: Band,
}

impl MetricBands {
    pub fn classify(&self, value: f64) -> Category {
        let v = match self.rated {
            Rated::Value => value,
            Rated::Magnitude => value.abs(),
        };
        if self.very_good.contains(v) {
            Category::VeryGood
        } else if self.good.contains(v) {
            Category::Good
        } else if self.satisfactory.contains(v) {
            Category::Satisfactory
        } else {
            Category::Unsatisfactory
        }
    }
}

/// Versioned classification table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub version: u32,
    pub bands: BTreeMap<Metric, MetricBands>,
}

pub const BAND_TABLE_VERSION: u32 = 1;

impl Default for BandTable {
    /// PBIAS Satisfactory ends at 15.5 inclusive so that −15.5 % rates
    /// Satisfactory.
    fn default() -> Self {
        let b = Band::new;
        let mut bands = BTreeMap::new();
        bands.insert(
            Metric::Nse,
            MetricBands {
                rated: Rated::Value,
                very_good: b(0.80, false, 1.0, true),
                good: b(0.70, false, 0.80, true),
                satisfactory: b(0.50, false, 0.70, true),
            },
        );
        bands.insert(
            Metric::Rsr,
            MetricBands {
                rated: Rated::Value,
                very_good: b(0.0, true, 0.50, true),
                good: b(0.50, false, 0.60, true),
                satisfactory: b(0.60, false, 0.70, true),
            },
        );
        bands.insert(
            Metric::Pbias,
            MetricBands {
                rated: Rated::Magnitude,
                very_good: b(0.0, true, 5.0, false),
                good: b(5.0, true, 10.0, false),
                satisfactory: b(10.0, true, 15.5, true),
            },
        );
        bands.insert(
            Metric::R2,
            MetricBands {
                rated: Rated::Value,
                very_good: b(0.85, false, 1.0, true),
                good: b(0.75, false, 0.85, true),
                satisfactory: b(0.60, false, 0.75, true),
            },
        );
        Self {
            version: BAND_TABLE_VERSION,
            bands,
        }
    }
}

impl BandTable {
    pub fn classify(&self, metric: Metric, value: f64) -> Result<Category> {
        if !value.is_finite() {
            return Err(Error::InvalidSeries(format!("{metric} value {value} is not finite")));
        }
        self.bands
            .get(&metric)
            .map(|b| b.classify(value))
            .ok_or_else(|| Error::UnknownMetric(metric.to_string()))
    }
}

/// Classifies with the default table; `metric` is a name such as `"NSE"`.
pub fn classify(metric: &str, value: f64) -> Result<Category> {
    BandTable::default().classify(metric.parse()?, value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub nse: MetricValue,
    pub pbias: MetricValue,
    pub rsr: MetricValue,
    pub r2: MetricValue,
}

impl MetricReport {
    pub fn compute(ms: &MetricSeries) -> Result<Self> {
        Self::compute_with(ms, &BandTable::default())
    }

    pub fn compute_with(ms: &MetricSeries, table: &BandTable) -> Result<Self> {
        let rate = |m: Metric| -> Result<MetricValue> {
            let value = m.compute(ms)?;
            Ok(MetricValue {
                value,
                category: table.classify(m, value)?,
            })
        };
        Ok(Self {
            nse: rate(Metric::Nse)?,
            pbias: rate(Metric::Pbias)?,
            rsr: rate(Metric::Rsr)?,
            r2: rate(Metric::R2)?,
        })
    }

    pub fn get(&self, m: Metric) -> MetricValue {
        match m {
            Metric::Nse => self.nse,
            Metric::Pbias => self.pbias,
            Metric::Rsr => self.rsr,
            Metric::R2 => self.r2,
        }
    }

    /// `{"NSE": {"value": …, "category": …}, …}`
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for m in Metric::ALL {
            let v = self.get(m);
            map.insert(m.name().to_string(), serde_json::json!({"value": v.value, "category": v.category}));
        }
        serde_json::Value::Object(map)
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let get = |m: Metric| -> Result<MetricValue> {
            let entry = v
                .get(m.name())
                .ok_or_else(|| Error::Format(format!("report lacks {m}")))?;
            Ok(serde_json::from_value(entry.clone())?)
        };
        Ok(Self {
            nse: get(Metric::Nse)?,
            pbias: get(Metric::Pbias)?,
            rsr: get(Metric::Rsr)?,
            r2: get(Metric::R2)?,
        })
    }

    /// Fixed-width table, one metric per line.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8}{:>12}  {}\n", "metric", "value", "rating");
        for m in Metric::ALL {
            let v = self.get(m);
            let shown = match m {
                Metric::Pbias => format!("{:.2}%", v.value),
                _ => format!("{:.4}", v.value),
            };
            out.push_str(&format!("{:<8}{:>12}  {}\n", m.name(), shown, v.category));
        }
        out
    }
}

#[cfg(test)]
mod tests;
