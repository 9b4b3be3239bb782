//! On-disk grid datasets.
//!
//! CSV layout (one directory):
//!
//! - `YYYY-MM-DD.csv` per day: `lat,lon,<feature_1>,…,<feature_Cd>`
//! - `static.csv` (optional): `lat,lon,<static_1>,…`
//! - `target.csv`: `date,value`
//!
//! Binary layout: `dynamic.htt` and `static.htt` (`HTT1` tensors), `grid.json`
//! with dates and axes, plus the same `target.csv`.
//!
//! Empty fields and the literal `NaN` read as missing. Rows are placed on the
//! grid by their coordinates: latitude descending (north first), longitude
//! ascending.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{GridAxes, GridSeries};
use crate::error::{Error, Result};
use crate::tensor::io::{load_tensor, save_tensor};
use crate::tensor::Tensor;

const DATE_FMT: &str = "%Y-%m-%d";

fn parse_value(field: &str) -> Result<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    f.parse::<f64>()
        .map_err(|_| Error::Format(format!("cannot parse `{f}` as a number")))
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FMT)
        .map_err(|e| Error::Format(format!("bad date `{s}`: {e}")))
}

struct CellTable {
    names: Vec<String>,
    rows: Vec<(f64, f64, Vec<f64>)>,
}

fn read_cell_table(path: &Path) -> Result<CellTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "lat" || &headers[1] != "lon" {
        return Err(Error::Format(format!(
            "{}: header must start with lat,lon",
            path.display()
        )));
    }
    let names = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let lat = parse_value(&rec[0])?;
        let lon = parse_value(&rec[1])?;
        let vals = rec.iter().skip(2).map(parse_value).collect::<Result<Vec<_>>>()?;
        rows.push((lat, lon, vals));
    }
    Ok(CellTable { names, rows })
}

/// Sorted lookup for coordinates read from text; values parsed from the same
/// string compare equal.
fn axis_index(axis: &[f64], v: f64, descending: bool) -> Option<usize> {
    if descending {
        axis.binary_search_by(|a| v.partial_cmp(a).unwrap()).ok()
    } else {
        axis.binary_search_by(|a| a.partial_cmp(&v).unwrap()).ok()
    }
}

fn place(table: &CellTable, axes: &GridAxes, path: &Path) -> Result<Vec<f64>> {
    let (h, w, c) = (axes.lat.len(), axes.lon.len(), table.names.len());
    let mut grid = vec![f64::NAN; h * w * c];
    for (lat, lon, vals) in &table.rows {
        let (Some(i), Some(j)) = (axis_index(&axes.lat, *lat, true), axis_index(&axes.lon, *lon, false))
        else {
            return Err(Error::Format(format!(
                "{}: cell ({lat}, {lon}) is not on the grid",
                path.display()
            )));
        };
        if vals.len() != c {
            return Err(Error::Format(format!("{}: ragged row", path.display())));
        }
        grid[(i * w + j) * c..(i * w + j + 1) * c].copy_from_slice(vals);
    }
    Ok(grid)
}

fn read_target(path: &Path, dates: &[NaiveDate]) -> Result<Vec<f64>> {
    let mut by_date = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format(format!("{}: expected date,value", path.display())));
        }
        by_date.insert(parse_date(&rec[0])?, parse_value(&rec[1])?);
    }
    Ok(dates
        .iter()
        .map(|d| by_date.get(d).copied().unwrap_or(f64::NAN))
        .collect())
}

fn day_files(dir: &Path) -> Result<Vec<(NaiveDate, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        if let Ok(date) = NaiveDate::parse_from_str(stem, DATE_FMT) {
            out.push((date, path));
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct GridMeta {
    start_date: NaiveDate,
    days: usize,
    lat: Vec<f64>,
    lon: Vec<f64>,
    feature_names: Vec<String>,
}

/// Reads a dataset directory in either layout.
pub fn read_grid_dir(dir: &Path) -> Result<GridSeries> {
    if dir.join("dynamic.htt").exists() {
        return read_binary(dir);
    }
    let days = day_files(dir)?;
    let Some((_, first)) = days.first() else {
        return Err(Error::Format(format!("{}: no YYYY-MM-DD.csv files", dir.display())));
    };
    let first_table = read_cell_table(first)?;
    let static_path = dir.join("static.csv");
    let static_table = if static_path.exists() {
        Some(read_cell_table(&static_path)?)
    } else {
        None
    };

    let mut lats = BTreeSet::new();
    let mut lons = BTreeSet::new();
    for (lat, lon, _) in &first_table.rows {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::InvalidCoordinate { lat: *lat, lon: *lon });
        }
        lats.insert(lat.to_bits());
        lons.insert(lon.to_bits());
    }
    let mut lat: Vec<f64> = lats.into_iter().map(f64::from_bits).collect();
    lat.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut lon: Vec<f64> = lons.into_iter().map(f64::from_bits).collect();
    lon.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let axes = GridAxes { lat, lon };
    let (h, w, cd) = (axes.lat.len(), axes.lon.len(), first_table.names.len());

    let mut dynamic = Vec::with_capacity(days.len() * h * w * cd);
    for (_, path) in &days {
        let table = read_cell_table(path)?;
        if table.names != first_table.names {
            return Err(Error::Format(format!("{}: feature columns differ", path.display())));
        }
        dynamic.extend(place(&table, &axes, path)?);
    }
    let (static_data, static_names) = match &static_table {
        Some(t) => (place(t, &axes, &static_path)?, t.names.clone()),
        None => (Vec::new(), Vec::new()),
    };
    let dates: Vec<NaiveDate> = days.iter().map(|(d, _)| *d).collect();
    let target = read_target(&dir.join("target.csv"), &dates)?;
    let mut feature_names = first_table.names.clone();
    feature_names.extend(static_names.iter().cloned());
    let gs = GridSeries {
        dynamic: Tensor::new(vec![dates.len(), h, w, cd], dynamic)?,
        static_features: Tensor::new(vec![h, w, static_names.len()], static_data)?,
        dates,
        axes,
        feature_names,
        target,
    };
    gs.validate()?;
    Ok(gs)
}

fn read_binary(dir: &Path) -> Result<GridSeries> {
    let meta: GridMeta = serde_json::from_slice(&fs::read(dir.join("grid.json"))?)?;
    let dates: Vec<NaiveDate> = (0..meta.days)
        .map(|d| meta.start_date + chrono::Duration::days(d as i64))
        .collect();
    let target = read_target(&dir.join("target.csv"), &dates)?;
    let gs = GridSeries {
        dynamic: load_tensor(&dir.join("dynamic.htt"))?,
        static_features: load_tensor(&dir.join("static.htt"))?,
        dates,
        axes: GridAxes {
            lat: meta.lat,
            lon: meta.lon,
        },
        feature_names: meta.feature_names,
        target,
    };
    gs.validate()?;
    Ok(gs)
}

fn write_target(dir: &Path, gs: &GridSeries) -> Result<PathBuf> {
    let path = dir.join("target.csv");
    let mut wtr = csv::Writer::from_path(&path)?;
    wtr.write_record(["date", "value"])?;
    for (d, v) in gs.dates.iter().zip(&gs.target) {
        wtr.write_record([d.format(DATE_FMT).to_string(), format_value(*v)])?;
    }
    wtr.flush()?;
    Ok(path)
}

fn write_cells(path: &Path, axes: &GridAxes, names: &[String], values: &[f64]) -> Result<()> {
    let c = names.len();
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header = vec!["lat".to_string(), "lon".to_string()];
    header.extend(names.iter().cloned());
    wtr.write_record(&header)?;
    let w = axes.lon.len();
    for (i, lat) in axes.lat.iter().enumerate() {
        for (j, lon) in axes.lon.iter().enumerate() {
            let mut row = vec![format_value(*lat), format_value(*lon)];
            row.extend(values[(i * w + j) * c..(i * w + j + 1) * c].iter().map(|v| format_value(*v)));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the CSV layout; returns every file written.
pub fn write_grid_dir(gs: &GridSeries, dir: &Path) -> Result<Vec<PathBuf>> {
    gs.validate()?;
    fs::create_dir_all(dir)?;
    let (h, w, cd) = (gs.height(), gs.width(), gs.dynamic_channels());
    let frame = h * w * cd;
    let dyn_names = &gs.feature_names[..cd];
    let mut written = Vec::with_capacity(gs.days() + 2);
    for (t, date) in gs.dates.iter().enumerate() {
        let path = dir.join(format!("{}.csv", date.format(DATE_FMT)));
        write_cells(&path, &gs.axes, dyn_names, &gs.dynamic.data()[t * frame..(t + 1) * frame])?;
        written.push(path);
    }
    if gs.static_channels() > 0 {
        let path = dir.join("static.csv");
        write_cells(&path, &gs.axes, &gs.feature_names[cd..], gs.static_features.data())?;
        written.push(path);
    }
    written.push(write_target(dir, gs)?);
    Ok(written)
}

/// Writes the binary layout; returns every file written.
pub fn write_grid_binary(gs: &GridSeries, dir: &Path) -> Result<Vec<PathBuf>> {
    gs.validate()?;
    fs::create_dir_all(dir)?;
    let meta = GridMeta {
        start_date: gs.dates[0],
        days: gs.days(),
        lat: gs.axes.lat.clone(),
        lon: gs.axes.lon.clone(),
        feature_names: gs.feature_names.clone(),
    };
    let meta_path = dir.join("grid.json");
    fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?)?;
    let dyn_path = dir.join("dynamic.htt");
    save_tensor(&dyn_path, &gs.dynamic)?;
    let st_path = dir.join("static.htt");
    save_tensor(&st_path, &gs.static_features)?;
    let target = write_target(dir, gs)?;
    Ok(vec![meta_path, dyn_path, st_path, target])
}

/// Every data file of a dataset directory, sorted; used for fingerprinting.
pub fn dataset_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("csv") | Some("htt") | Some("json")
                )
                && p.file_name().and_then(|n| n.to_str()) != Some("oracle.json")
        })
        .collect();
    files.sort();
    Ok(files)
}
