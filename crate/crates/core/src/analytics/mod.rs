//! Aggregates over extracted attention: monthly and seasonal feature means,
//! spatial mean maps, top-percentile masks, plus their file formats and the
//! persisted attention store.
//!
//! A sample belongs to the period of its target date.

pub mod export;
pub mod store;

pub use export::{
    map_from_json, map_to_json, read_mask_csv, read_pgm, read_table_csv, to_pgm, write_map_csv,
    write_mask_csv, write_table_csv,
};
pub use store::{AttentionStore, STORE_SCHEMA_VERSION};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{apply_attention, AttentionRecord};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    PreMonsoon,
    Monsoon,
    PostMonsoon,
}

impl Season {
    pub const ALL: [Season; 4] = [Season::Winter, Season::PreMonsoon, Season::Monsoon, Season::PostMonsoon];

    pub fn label(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::PreMonsoon => "pre_monsoon",
            Season::Monsoon => "monsoon",
            Season::PostMonsoon => "post_monsoon",
        }
    }
}

/// Month (1–12) to season.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonCalendar {
    pub months: [Season; 12],
}

impl Default for SeasonCalendar {
    fn default() -> Self {
        use Season::*;
        Self {
            months: [
                Winter, Winter, PreMonsoon, PreMonsoon, PreMonsoon, Monsoon, Monsoon, Monsoon, Monsoon,
                PostMonsoon, PostMonsoon, Winter,
            ],
        }
    }
}

impl SeasonCalendar {
    pub fn season_of(&self, date: NaiveDate) -> Season {
        self.months[date.month0() as usize]
    }
}

pub fn season_of(date: NaiveDate, cal: &SeasonCalendar) -> Season {
    cal.season_of(date)
}

const MONTHS: [&str; 12] = ["jan", "feb", "mar", "apr", "may", "jun", "jul", "aug", "sep", "oct", "nov", "dec"];

/// Aggregation window: a calendar month (1–12, any year), a season, or
/// every record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Month(u32),
    Season(Season),
    All,
}

impl Period {
    pub fn contains(&self, date: NaiveDate, cal: &SeasonCalendar) -> bool {
        match *self {
            Period::Month(m) => date.month() == m,
            Period::Season(s) => cal.season_of(date) == s,
            Period::All => true,
        }
    }

    pub fn months() -> impl Iterator<Item = Period> {
        (1..=12).map(Period::Month)
    }

    pub fn seasons() -> impl Iterator<Item = Period> {
        Season::ALL.into_iter().map(Period::Season)
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Period::Month(m) => f.write_str(MONTHS[(m - 1) as usize]),
            Period::Season(s) => f.write_str(s.label()),
            Period::All => f.write_str("all"),
        }
    }
}

impl FromStr for Period {
    type Err = Error;

    /// Accepts `jan`…`dec`, `1`…`12`, season labels and `all`.
    fn from_str(s: &str) -> Result<Self> {
        let l = s.trim().to_ascii_lowercase();
        if l == "all" {
            return Ok(Period::All);
        }
        if let Some(i) = MONTHS.iter().position(|m| *m == l) {
            return Ok(Period::Month(i as u32 + 1));
        }
        if let Ok(m) = l.parse::<u32>() {
            if (1..=12).contains(&m) {
                return Ok(Period::Month(m));
            }
        }
        Season::ALL
            .into_iter()
            .find(|x| x.label() == l || x.label().replace('_', "") == l.replace(['-', '_'], ""))
            .map(Period::Season)
            .ok_or_else(|| Error::Format(format!("unknown period {s:?}")))
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttentionRow {
    pub period: Period,
    pub feature: String,
    pub mean_weight: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttentionTable {
    pub rows: Vec<FeatureAttentionRow>,
}

impl FeatureAttentionTable {
    pub fn get(&self, period: Period, feature: &str) -> Option<&FeatureAttentionRow> {
        self.rows.iter().find(|r| r.period == period && r.feature == feature)
    }

    pub fn period(&self, period: Period) -> impl Iterator<Item = &FeatureAttentionRow> {
        self.rows.iter().filter(move |r| r.period == period)
    }
}

fn check_records(records: &[AttentionRecord], names: &[String]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyRecords)?;
    let c = first.beta.len();
    if names.len() != c {
        return Err(Error::Shape(format!("{} feature names for {c} attention weights", names.len())));
    }
    if let Some(r) = records.iter().find(|r| r.beta.len() != c || r.alpha.shape() != first.alpha.shape()) {
        return Err(Error::Shape(format!(
            "record for {} has alpha {:?} / beta {:?}",
            r.target_date,
            r.alpha.shape(),
            r.beta.shape()
        )));
    }
    Ok(c)
}

/// Mean β per feature for each period in `periods` with at least one
/// record, in the order given.
pub fn feature_means(
    records: &[AttentionRecord],
    names: &[String],
    periods: impl IntoIterator<Item = Period>,
    cal: &SeasonCalendar,
) -> Result<FeatureAttentionTable> {
    let c = check_records(records, names)?;
    let mut rows = Vec::new();
    for period in periods {
        let mut sums = vec![0.0; c];
        let mut n = 0;
        for r in records.iter().filter(|r| period.contains(r.target_date, cal)) {
            for (s, b) in sums.iter_mut().zip(r.beta.data()) {
                *s += b;
            }
            n += 1;
        }
        if n == 0 {
            continue;
        }
        for (k, s) in sums.into_iter().enumerate() {
            rows.push(FeatureAttentionRow {
                period,
                feature: names[k].clone(),
                mean_weight: s / n as f64,
                n_samples: n,
            });
        }
    }
    Ok(FeatureAttentionTable { rows })
}

/// Months without records are omitted.
pub fn monthly_feature_means(records: &[AttentionRecord], names: &[String]) -> Result<FeatureAttentionTable> {
    feature_means(records, names, Period::months(), &SeasonCalendar::default())
}

pub fn seasonal_feature_means(
    records: &[AttentionRecord],
    names: &[String],
    cal: &SeasonCalendar,
) -> Result<FeatureAttentionTable> {
    feature_means(records, names, Period::seasons(), cal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub rank: usize,
    pub index: usize,
    pub feature: String,
    pub mean_weight: f64,
}

/// Features of one period ranked by mean β, descending; ties by index.
/// `k > C` is truncated to `C`.
pub fn top_k_for_period(
    records: &[AttentionRecord],
    names: &[String],
    period: Period,
    cal: &SeasonCalendar,
    k: usize,
) -> Result<Vec<RankedFeature>> {
    let table = feature_means(records, names, [period], cal)?;
    if table.rows.is_empty() {
        return Err(Error::EmptyPeriod(period.to_string()));
    }
    if k > names.len() {
        log::warn!("top-k of {k} truncated to {} features", names.len());
    }
    let mut idx: Vec<usize> = (0..names.len()).collect();
    idx.sort_by(|&a, &b| {
        table.rows[b]
            .mean_weight
            .total_cmp(&table.rows[a].mean_weight)
            .then(a.cmp(&b))
    });
    Ok(idx
        .into_iter()
        .take(k.min(names.len()))
        .enumerate()
        .map(|(rank, i)| RankedFeature {
            rank: rank + 1,
            index: i,
            feature: names[i].clone(),
            mean_weight: table.rows[i].mean_weight,
        })
        .collect())
}

/// Top `k` features for every season that has records.
pub fn seasonal_top_k(
    records: &[AttentionRecord],
    names: &[String],
    cal: &SeasonCalendar,
    k: usize,
) -> Result<BTreeMap<Season, Vec<RankedFeature>>> {
    check_records(records, names)?;
    let mut out = BTreeMap::new();
    for s in Season::ALL {
        match top_k_for_period(records, names, Period::Season(s), cal, k) {
            Ok(v) => {
                out.insert(s, v);
            }
            Err(Error::EmptyPeriod(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Mean attention over a period; `grid` is `H×W`, rows north to south.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMeanMap {
    pub period: Period,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub grid: Tensor,
    /// Set for per-feature `α·β[c]` maps.
    pub feature: Option<String>,
    pub n_samples: usize,
}

impl SpatialMeanMap {
    pub fn dims(&self) -> (usize, usize) {
        (self.grid.shape()[0], self.grid.shape()[1])
    }
}

fn mean_map(
    records: &[AttentionRecord],
    period: Period,
    cal: &SeasonCalendar,
    feature: Option<(usize, String)>,
) -> Result<SpatialMeanMap> {
    let first = records.first().ok_or(Error::EmptyRecords)?;
    let &[t, h, w] = first.alpha.shape() else {
        return Err(Error::Shape(format!("alpha must be T×H×W, got {:?}", first.alpha.shape())));
    };
    let hw = h * w;
    let mut acc = vec![0.0; hw];
    let mut n = 0;
    for r in records.iter().filter(|r| period.contains(r.target_date, cal)) {
        if r.alpha.shape() != first.alpha.shape() {
            return Err(Error::Shape("records disagree on alpha shape".into()));
        }
        let weight = match &feature {
            Some((c, _)) => *r
                .beta
                .data()
                .get(*c)
                .ok_or_else(|| Error::Shape(format!("feature index {c} out of range")))?,
            None => 1.0,
        };
        for step in r.alpha.data().chunks_exact(hw) {
            for (a, v) in acc.iter_mut().zip(step) {
                *a += v * weight;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyPeriod(period.to_string()));
    }
    let denom = (n * t) as f64;
    acc.iter_mut().for_each(|v| *v /= denom);
    Ok(SpatialMeanMap {
        period,
        lat: first.axes.lat.clone(),
        lon: first.axes.lon.clone(),
        grid: Tensor::new(vec![h, w], acc)?,
        feature: feature.map(|(_, name)| name),
        n_samples: n,
    })
}

/// `grid[i,j]` = mean of `α[t,i,j]` over the period's records and all `t`.
pub fn spatial_mean_map(records: &[AttentionRecord], period: Period, cal: &SeasonCalendar) -> Result<SpatialMeanMap> {
    mean_map(records, period, cal, None)
}

/// Mean of `α[t,i,j]·β[c]` over the period's records and all `t`.
pub fn feature_spatial_map(
    records: &[AttentionRecord],
    period: Period,
    cal: &SeasonCalendar,
    feature: usize,
    name: &str,
) -> Result<SpatialMeanMap> {
    mean_map(records, period, cal, Some((feature, name.to_string())))
}

/// Boolean `H×W` selection, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationMask {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<bool>,
}

impl LocationMask {
    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.width + col]
    }

    /// `(row, col)` of selected cells in row-major order.
    pub fn selected(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| (i / self.width, i % self.width))
    }
}

/// The `ceil(pct/100 · H·W)` highest cells; ties by row-major index.
pub fn top_percentile_locations(map: &SpatialMeanMap, pct: f64) -> Result<LocationMask> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidPercentile(pct));
    }
    let (h, w) = map.dims();
    let n = h * w;
    // tolerate representation error such as 0.07·100 = 7.000000000000001
    let want = ((pct / 100.0 * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let want = want.min(n);
    let g = map.grid.data();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    let mut cells = vec![false; n];
    for &i in &idx[..want] {
        cells[i] = true;
    }
    Ok(LocationMask {
        height: h,
        width: w,
        cells,
    })
}

/// `α ⊙ β ⊙ x` for the record's own window.
pub fn combined_attention(record: &AttentionRecord, x_window: &Tensor) -> Result<Tensor> {
    apply_attention(x_window, &record.alpha, &record.beta)
}
