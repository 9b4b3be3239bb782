//! Request routing and response bodies. Nothing here touches a socket.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde_json::{json, Map, Value};

use hydrotrace_core::analytics::{
    feature_means, feature_spatial_map, map_to_json, spatial_mean_map, to_pgm, top_k_for_period,
    top_percentile_locations, AttentionStore, FeatureAttentionRow, Period, Season, SeasonCalendar,
    SpatialMeanMap,
};
use hydrotrace_core::Error as CoreError;

pub const API_SCHEMA_VERSION: u32 = 1;

pub const JSON: &str = "application/json";
pub const PGM: &str = "image/x-portable-graymap";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    fn json(status: u16, mut body: Value) -> Self {
        if let Value::Object(map) = &mut body {
            map.insert("schema_version".into(), json!(API_SCHEMA_VERSION));
        }
        Self {
            status,
            content_type: JSON,
            body: serde_json::to_vec(&body).expect("JSON values always serialize"),
        }
    }

    fn ok(body: Value) -> Self {
        Self::json(200, body)
    }

    fn error(status: u16, error: &str, detail: impl Into<String>) -> Self {
        Self::json(status, json!({"error": error, "detail": detail.into()}))
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::error(400, "bad_request", detail)
    }

    fn not_found(detail: impl Into<String>) -> Self {
        Self::error(404, "not_found", detail)
    }

    pub fn reason(&self) -> &'static str {
        match self.status {
            200 => "OK",
            400 => "Bad Request",
            404 => "Not Found",
            405 => "Method Not Allowed",
            500 => "Internal Server Error",
            501 => "Not Implemented",
            503 => "Service Unavailable",
            _ => "Unknown",
        }
    }
}

/// A loaded store plus every aggregate the endpoints serve.
///
/// Built once and never mutated, so it can be shared across threads
/// without locking.
#[derive(Debug)]
pub struct StoreIndex {
    store: AttentionStore,
    calendar: SeasonCalendar,
    tables: BTreeMap<Period, Vec<FeatureAttentionRow>>,
    maps: BTreeMap<Period, SpatialMeanMap>,
}

fn all_periods() -> impl Iterator<Item = Period> {
    Period::months().chain(Period::seasons()).chain([Period::All])
}

impl StoreIndex {
    pub fn new(store: AttentionStore, calendar: SeasonCalendar) -> hydrotrace_core::Result<Self> {
        let table = feature_means(&store.records, &store.feature_names, all_periods(), &calendar)?;
        let mut tables: BTreeMap<Period, Vec<FeatureAttentionRow>> = BTreeMap::new();
        for row in table.rows {
            tables.entry(row.period).or_default().push(row);
        }
        let mut maps = BTreeMap::new();
        for period in all_periods().filter(|p| tables.contains_key(p)) {
            maps.insert(period, spatial_mean_map(&store.records, period, &calendar)?);
        }
        Ok(Self {
            store,
            calendar,
            tables,
            maps,
        })
    }

    pub fn load(dir: &Path) -> hydrotrace_core::Result<Self> {
        Self::new(AttentionStore::load(dir)?, SeasonCalendar::default())
    }

    pub fn store(&self) -> &AttentionStore {
        &self.store
    }

    /// Feature rows of a period in stored (feature index) order.
    pub fn table(&self, period: Period) -> Option<&[FeatureAttentionRow]> {
        self.tables.get(&period).map(Vec::as_slice)
    }

    pub fn map(&self, period: Period) -> Option<&SpatialMeanMap> {
        self.maps.get(&period)
    }
}

type Query = BTreeMap<String, String>;

fn parse_query(raw: &str) -> Result<Query, Response> {
    let mut out = Query::new();
    for (k, v) in form_urlencoded::parse(raw.as_bytes()) {
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Response::bad_request(format!("parameter `{k}` given twice")));
        }
    }
    Ok(out)
}

/// Either `period=<label>` or `period=month|season&value=<name>`.
fn parse_period(q: &Query) -> Result<Period, Response> {
    let Some(kind) = q.get("period") else {
        return Err(Response::bad_request("missing `period`"));
    };
    let Some(value) = q.get("value") else {
        return kind
            .parse()
            .map_err(|_| Response::not_found(format!("unknown period {kind:?}")));
    };
    let parsed: Result<Period, _> = value.parse();
    match (kind.to_ascii_lowercase().as_str(), parsed) {
        ("month", Ok(p @ Period::Month(_))) | ("season", Ok(p @ Period::Season(_))) => Ok(p),
        ("all", _) => Ok(Period::All),
        ("month", _) => Err(Response::not_found(format!("unknown month {value:?}"))),
        ("season", _) => Err(Response::not_found(format!(
            "unknown season {value:?}; expected one of {}",
            Season::ALL.map(|s| s.label()).join(", ")
        ))),
        _ => Err(Response::bad_request(format!(
            "`period` must be month, season or all when `value` is given, got {kind:?}"
        ))),
    }
}

fn empty_period(period: Period) -> Response {
    Response::not_found(format!("no records in period {period}"))
}

fn check_known(q: &Query, allowed: &[&str]) -> Result<(), Response> {
    match q.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Response::bad_request(format!("unknown parameter `{k}`"))),
        None => Ok(()),
    }
}

fn unknown_feature(index: &StoreIndex, name: &str) -> Response {
    Response::not_found(format!(
        "unknown feature {name:?}; valid names: {}",
        index.store.feature_names.join(", ")
    ))
}

fn features(index: &StoreIndex, q: &Query) -> Result<Response, Response> {
    check_known(q, &["period", "value"])?;
    let period = parse_period(q)?;
    let rows = index.table(period).ok_or_else(|| empty_period(period))?;
    let mut sorted: Vec<&FeatureAttentionRow> = rows.iter().collect();
    // stable: ties keep feature order
    sorted.sort_by(|a, b| b.mean_weight.total_cmp(&a.mean_weight));
    Ok(Response::ok(json!({
        "period": period.to_string(),
        "n_samples": rows[0].n_samples,
        "rows": sorted,
    })))
}

fn top_features(index: &StoreIndex, q: &Query) -> Result<Response, Response> {
    check_known(q, &["period", "value", "k"])?;
    let period = parse_period(q)?;
    let k = match q.get("k") {
        None => 5,
        Some(raw) => match raw.parse::<i64>() {
            Ok(k) if k > 0 => k as usize,
            _ => return Err(Response::bad_request(format!("`k` must be a positive integer, got {raw:?}"))),
        },
    };
    let ranked = top_k_for_period(
        &index.store.records,
        &index.store.feature_names,
        period,
        &index.calendar,
        k,
    )
    .map_err(|e| match e {
        CoreError::EmptyPeriod(_) => empty_period(period),
        other => Response::error(500, "internal", other.to_string()),
    })?;
    Ok(Response::ok(json!({
        "period": period.to_string(),
        "k": ranked.len(),
        "features": ranked,
    })))
}

fn spatial(index: &StoreIndex, q: &Query) -> Result<Response, Response> {
    check_known(q, &["period", "value", "format", "top_pct", "feature"])?;
    let period = parse_period(q)?;
    let format = q.get("format").map(String::as_str).unwrap_or("json");
    if format != "json" && format != "pgm" {
        return Err(Response::bad_request(format!("`format` must be json or pgm, got {format:?}")));
    }
    let owned;
    let map = match q.get("feature") {
        Some(name) => {
            let c = index.store.feature_index(name).ok_or_else(|| unknown_feature(index, name))?;
            owned = feature_spatial_map(&index.store.records, period, &index.calendar, c, name)
                .map_err(|_| empty_period(period))?;
            &owned
        }
        None => index.map(period).ok_or_else(|| empty_period(period))?,
    };
    if let Some(raw) = q.get("top_pct") {
        let pct: f64 = raw
            .parse()
            .map_err(|_| Response::bad_request(format!("`top_pct` must be a number, got {raw:?}")))?;
        let mask = top_percentile_locations(map, pct).map_err(|e| Response::bad_request(e.to_string()))?;
        let cells: Vec<Value> = mask
            .selected()
            .map(|(i, j)| json!({"row": i, "col": j, "lat": map.lat[i], "lon": map.lon[j], "value": map.grid.data()[i * mask.width + j]}))
            .collect();
        return Ok(Response::ok(json!({
            "period": period.to_string(),
            "feature": map.feature,
            "top_pct": pct,
            "height": mask.height,
            "width": mask.width,
            "count": mask.count(),
            "cells": cells,
        })));
    }
    if format == "pgm" {
        return Ok(Response {
            status: 200,
            content_type: PGM,
            body: to_pgm(map),
        });
    }
    Ok(Response::ok(map_to_json(map)))
}

fn parse_date(q: &Query, key: &str) -> Result<NaiveDate, Response> {
    let raw = q.get(key).ok_or_else(|| Response::bad_request(format!("missing `{key}`")))?;
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map_err(|_| Response::bad_request(format!("`{key}` must be YYYY-MM-DD, got {raw:?}")))
}

fn daily(index: &StoreIndex, q: &Query) -> Result<Response, Response> {
    check_known(q, &["from", "to", "features", "spatial"])?;
    let from = parse_date(q, "from")?;
    let to = parse_date(q, "to")?;
    if from > to {
        return Err(Response::bad_request(format!("`from` {from} is after `to` {to}")));
    }
    let names = &index.store.feature_names;
    let selected: Vec<usize> = match q.get("features").filter(|s| !s.is_empty()) {
        None => (0..names.len()).collect(),
        Some(list) => list
            .split(',')
            .map(|n| index.store.feature_index(n.trim()).ok_or_else(|| unknown_feature(index, n.trim())))
            .collect::<Result<_, _>>()?,
    };
    let with_spatial = match q.get("spatial").map(String::as_str) {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => return Err(Response::bad_request(format!("`spatial` must be true or false, got {other:?}"))),
    };
    let mut rows = Vec::new();
    for r in index.store.records.iter().filter(|r| r.target_date >= from && r.target_date <= to) {
        let alpha_mean = if with_spatial { r.alpha.mean() } else { f64::NAN };
        for &c in &selected {
            let beta = r.beta.data()[c];
            let mut row = Map::new();
            row.insert("date".into(), json!(r.target_date.to_string()));
            row.insert("feature".into(), json!(names[c]));
            row.insert("beta".into(), json!(beta));
            if with_spatial {
                row.insert("spatial_mean".into(), json!(alpha_mean * beta));
            }
            rows.push(Value::Object(row));
        }
    }
    Ok(Response::ok(json!({
        "from": from.to_string(),
        "to": to.to_string(),
        "features": selected.iter().map(|&c| names[c].as_str()).collect::<Vec<_>>(),
        "rows": rows,
    })))
}

fn health(index: Option<&StoreIndex>) -> Response {
    match index {
        Some(ix) => Response::ok(json!({
            "status": "ok",
            "run_id": ix.store.run_id,
            "n_records": ix.store.len(),
        })),
        None => Response::json(503, json!({"status": "loading", "error": "unavailable", "detail": "attention store not loaded yet"})),
    }
}

const ROUTES: [&str; 6] = [
    "/v1/health",
    "/v1/attention/features",
    "/v1/attention/top-features",
    "/v1/attention/spatial",
    "/v1/attention/daily",
    "/v1/ask",
];

/// Answers one request. `target` is the request-target: path plus optional
/// query string.
pub fn handle(index: Option<&StoreIndex>, method: &str, target: &str) -> Response {
    let (path, raw_query) = target.split_once('?').unwrap_or((target, ""));
    let path = path.trim_end_matches('/');
    if !ROUTES.contains(&path) {
        return Response::not_found(format!("no route {path:?}"));
    }
    if path == "/v1/ask" {
        return match method {
            "POST" => Response::error(
                501,
                "not_implemented",
                "natural-language queries are reserved for a future integration",
            ),
            _ => Response::error(405, "method_not_allowed", "use POST"),
        };
    }
    if method != "GET" {
        return Response::error(405, "method_not_allowed", "use GET");
    }
    if path == "/v1/health" {
        return health(index);
    }
    let Some(index) = index else {
        return Response::error(503, "unavailable", "attention store not loaded yet");
    };
    let query = match parse_query(raw_query) {
        Ok(q) => q,
        Err(r) => return r,
    };
    let result = match path {
        "/v1/attention/features" => features(index, &query),
        "/v1/attention/top-features" => top_features(index, &query),
        "/v1/attention/spatial" => spatial(index, &query),
        _ => daily(index, &query),
    };
    result.unwrap_or_else(|r| r)
}
