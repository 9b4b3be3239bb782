//! File formats for analytics products.
//!
//! - feature table CSV: `period,feature,mean_weight,n_samples`
//! - map JSON: `{period, lat, lon, grid, feature, n_samples}`, rows north to south
//! - map CSV: `row,col,lat,lon,value` for every cell, row-major
//! - mask CSV: `row,col,lat,lon` of selected cells
//! - heatmap: binary PGM (`P5`), min-max scaled to 0..=255, constant maps at 128
//!
//! Floats are written in shortest round-trip form, so CSV and JSON
//! re-imports are exact.

use std::io::{Read, Write};

use serde_json::{json, Value};

use super::{FeatureAttentionRow, FeatureAttentionTable, LocationMask, SpatialMeanMap};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn write_table_csv<W: Write>(w: W, table: &FeatureAttentionTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["period", "feature", "mean_weight", "n_samples"])?;
    for r in &table.rows {
        out.write_record([
            r.period.to_string(),
            r.feature.clone(),
            r.mean_weight.to_string(),
            r.n_samples.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_table_csv<R: Read>(r: R) -> Result<FeatureAttentionTable> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["period", "feature", "mean_weight", "n_samples"] {
        return Err(Error::Format(format!("unexpected table header {headers:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).ok_or_else(|| Error::Format("short table row".into()));
        rows.push(FeatureAttentionRow {
            period: field(0)?.parse()?,
            feature: field(1)?.to_string(),
            mean_weight: field(2)?
                .parse()
                .map_err(|e| Error::Format(format!("mean_weight: {e}")))?,
            n_samples: field(3)?
                .parse()
                .map_err(|e| Error::Format(format!("n_samples: {e}")))?,
        });
    }
    Ok(FeatureAttentionTable { rows })
}

pub fn map_to_json(map: &SpatialMeanMap) -> Value {
    let (_, w) = map.dims();
    let grid: Vec<&[f64]> = map.grid.data().chunks_exact(w).collect();
    json!({
        "period": map.period.to_string(),
        "lat": map.lat,
        "lon": map.lon,
        "grid": grid,
        "feature": map.feature,
        "n_samples": map.n_samples,
    })
}

pub fn map_from_json(v: &Value) -> Result<SpatialMeanMap> {
    let field = |k: &str| v.get(k).ok_or_else(|| Error::Format(format!("map lacks `{k}`")));
    let period = field("period")?
        .as_str()
        .ok_or_else(|| Error::Format("period must be a string".into()))?
        .parse()?;
    let lat: Vec<f64> = serde_json::from_value(field("lat")?.clone())?;
    let lon: Vec<f64> = serde_json::from_value(field("lon")?.clone())?;
    let rows: Vec<Vec<f64>> = serde_json::from_value(field("grid")?.clone())?;
    if rows.len() != lat.len() || rows.iter().any(|r| r.len() != lon.len()) {
        return Err(Error::Format("grid does not match lat/lon axes".into()));
    }
    let feature = v.get("feature").and_then(|f| f.as_str()).map(str::to_string);
    let n_samples = v.get("n_samples").and_then(Value::as_u64).unwrap_or(0) as usize;
    Ok(SpatialMeanMap {
        period,
        grid: Tensor::new(vec![lat.len(), lon.len()], rows.concat())?,
        lat,
        lon,
        feature,
        n_samples,
    })
}

pub fn write_map_csv<W: Write>(w: W, map: &SpatialMeanMap) -> Result<()> {
    let (h, wd) = map.dims();
    if map.lat.len() != h || map.lon.len() != wd {
        return Err(Error::Shape("map does not match its lat/lon axes".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "col", "lat", "lon", "value"])?;
    for (k, v) in map.grid.data().iter().enumerate() {
        let (i, j) = (k / wd, k % wd);
        out.write_record([
            i.to_string(),
            j.to_string(),
            map.lat[i].to_string(),
            map.lon[j].to_string(),
            v.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mask_csv<W: Write>(w: W, mask: &LocationMask, lat: &[f64], lon: &[f64]) -> Result<()> {
    if lat.len() != mask.height || lon.len() != mask.width {
        return Err(Error::Shape("mask does not match lat/lon axes".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "col", "lat", "lon"])?;
    for (i, j) in mask.selected() {
        out.write_record([i.to_string(), j.to_string(), lat[i].to_string(), lon[j].to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_mask_csv<R: Read>(r: R, height: usize, width: usize) -> Result<LocationMask> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut cells = vec![false; height * width];
    for rec in rdr.records() {
        let rec = rec?;
        let idx = |i: usize| -> Result<usize> {
            rec.get(i)
                .ok_or_else(|| Error::Format("short mask row".into()))?
                .parse()
                .map_err(|e| Error::Format(format!("mask index: {e}")))
        };
        let (i, j) = (idx(0)?, idx(1)?);
        if i >= height || j >= width {
            return Err(Error::Format(format!("mask cell ({i},{j}) outside {height}×{width}")));
        }
        cells[i * width + j] = true;
    }
    Ok(LocationMask { height, width, cells })
}

/// Binary PGM of the map's grid.
pub fn to_pgm(map: &SpatialMeanMap) -> Vec<u8> {
    let (h, w) = map.dims();
    let g = map.grid.data();
    let (lo, hi) = g
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(g.iter().map(|&v| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            128
        }
    }));
    out
}

/// `(width, height, pixels)` of a binary 8-bit PGM.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::Format(format!("pgm: {m}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header is not text"))?);
    }
    if fields[0] != "P5" {
        return Err(bad("not a P5 file"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit maps are supported"));
    }
    // exactly one whitespace byte separates the header from the pixels
    let data = bytes.get(pos + 1..).ok_or_else(|| bad("missing pixel data"))?;
    if data.len() != w * h {
        return Err(bad("pixel count does not match dimensions"));
    }
    Ok((w, h, data.to_vec()))
}
