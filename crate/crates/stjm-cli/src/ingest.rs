//! Long-format CSV ingestion: pivots (time, location) rows into a panel.
//!
//! Expected header: `time`, `location`, then `lat`,`lon` (geographic) or
//! `x`,`y` (planar), then one column per schema feature. Empty fields denote
//! missing values; a (time, location) row absent from the file yields a fully
//! missing cell row. Times may be ISO-8601 or plain integers and are converted
//! to hours since the first timestamp.

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDateTime, Timelike};
use std::collections::HashMap;
use std::path::Path;

use stjm::{Coords, FeatureKind, PanelDataset, Value};

use crate::schema::SchemaFile;

/// Presentation metadata carried alongside a panel: original time labels,
/// location identifiers and the hour of day of each time point.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelMeta {
    pub time_labels: Vec<String>,
    pub location_ids: Vec<String>,
    pub hours_of_day: Vec<u32>,
    pub geographic: bool,
}

struct ParsedTime {
    /// Hours since an arbitrary epoch; shifted so the first time is zero.
    hours: f64,
    hour_of_day: u32,
}

fn parse_time(text: &str) -> Result<ParsedTime> {
    if let Ok(v) = text.parse::<i64>() {
        return Ok(ParsedTime {
            hours: v as f64,
            hour_of_day: v.rem_euclid(24) as u32,
        });
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        let utc = dt.to_utc();
        return Ok(ParsedTime {
            hours: utc.timestamp() as f64 / 3600.0,
            hour_of_day: utc.hour(),
        });
    }
    for format in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, format) {
            return Ok(ParsedTime {
                hours: dt.and_utc().timestamp() as f64 / 3600.0,
                hour_of_day: dt.hour(),
            });
        }
    }
    bail!("cannot parse time `{text}` (expected ISO-8601 or integer hours)")
}

pub fn ingest_panel(path: &Path, schema: &SchemaFile) -> Result<(PanelDataset, PanelMeta)> {
    let spec = schema.to_feature_spec()?;
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open panel CSV {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let columns: Vec<&str> = headers.iter().collect();

    {
        let mut seen = columns.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            bail!("duplicate column names in header");
        }
    }
    let col = |name: &str| columns.iter().position(|c| *c == name);
    let time_col = col("time").context("missing `time` column")?;
    let loc_col = col("location").context("missing `location` column")?;
    let (coord_cols, geographic) = match (col("lat"), col("lon"), col("x"), col("y")) {
        (Some(a), Some(b), _, _) => ((a, b), true),
        (_, _, Some(a), Some(b)) => ((a, b), false),
        _ => bail!("missing coordinate columns: need `lat`,`lon` or `x`,`y`"),
    };
    let feature_cols: Vec<usize> = schema
        .features
        .iter()
        .map(|f| col(f.name()).with_context(|| format!("missing feature column `{}`", f.name())))
        .collect::<Result<_>>()?;
    let expected = 4 + feature_cols.len();
    if columns.len() != expected {
        bail!(
            "header has {} columns, expected {} (time, location, 2 coordinates, {} features)",
            columns.len(),
            expected,
            feature_cols.len()
        );
    }

    struct Row {
        time_idx: usize,
        location: String,
        values: Vec<Value>,
    }

    // First pass: parse rows, keyed by exact time label.
    let mut time_order: Vec<(f64, String, u32)> = Vec::new();
    let mut time_index: HashMap<String, usize> = HashMap::new();
    let mut location_coords: HashMap<String, [f64; 2]> = HashMap::new();
    let mut rows: Vec<Row> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("row {}", line + 2))?;
        let context = || format!("row {} of {}", line + 2, path.display());
        let time_label = record.get(time_col).unwrap_or("").to_string();
        let parsed = parse_time(&time_label).with_context(context)?;
        let time_idx = *time_index.entry(time_label.clone()).or_insert_with(|| {
            time_order.push((parsed.hours, time_label.clone(), parsed.hour_of_day));
            time_order.len() - 1
        });
        let location = record.get(loc_col).unwrap_or("").to_string();
        if location.is_empty() {
            bail!("{}: empty location id", context());
        }
        let coord: [f64; 2] = [
            record
                .get(coord_cols.0)
                .unwrap_or("")
                .parse()
                .with_context(context)?,
            record
                .get(coord_cols.1)
                .unwrap_or("")
                .parse()
                .with_context(context)?,
        ];
        match location_coords.get(&location) {
            None => {
                location_coords.insert(location.clone(), coord);
            }
            Some(known) if *known != coord => {
                bail!(
                    "{}: location `{location}` has inconsistent coordinates {coord:?} vs {known:?}",
                    context()
                );
            }
            _ => {}
        }
        let mut values = Vec::with_capacity(feature_cols.len());
        for (p, &c) in feature_cols.iter().enumerate() {
            let field = record.get(c).unwrap_or("");
            let value = if field.is_empty() {
                Value::Missing
            } else {
                match &spec.feature(p).kind {
                    FeatureKind::Continuous => {
                        Value::Continuous(field.parse().with_context(|| {
                            format!("{}: feature `{}`", context(), spec.feature(p).name)
                        })?)
                    }
                    FeatureKind::Categorical { levels } => {
                        let idx = levels.iter().position(|l| l == field).with_context(|| {
                            format!(
                                "{}: unknown level `{field}` for feature `{}`",
                                context(),
                                spec.feature(p).name
                            )
                        })?;
                        Value::Categorical(idx)
                    }
                }
            };
            values.push(value);
        }
        rows.push(Row {
            time_idx,
            location,
            values,
        });
    }
    if rows.is_empty() {
        bail!("panel CSV {} has no data rows", path.display());
    }

    // Time grid: sorted union of observed timestamps. Distinct labels mapping
    // to the same instant would be ambiguous.
    let mut order: Vec<usize> = (0..time_order.len()).collect();
    order.sort_by(|&a, &b| time_order[a].0.total_cmp(&time_order[b].0));
    for pair in order.windows(2) {
        if time_order[pair[0]].0 == time_order[pair[1]].0 {
            bail!(
                "time labels `{}` and `{}` denote the same instant",
                time_order[pair[0]].1,
                time_order[pair[1]].1
            );
        }
    }
    let mut time_rank = vec![0usize; time_order.len()];
    for (rank, &old) in order.iter().enumerate() {
        time_rank[old] = rank;
    }
    let t0 = time_order[order[0]].0;
    let times: Vec<f64> = order.iter().map(|&i| time_order[i].0 - t0).collect();
    let time_labels: Vec<String> = order.iter().map(|&i| time_order[i].1.clone()).collect();
    let hours_of_day: Vec<u32> = order.iter().map(|&i| time_order[i].2).collect();

    let mut location_ids: Vec<String> = location_coords.keys().cloned().collect();
    location_ids.sort();
    let loc_rank: HashMap<&str, usize> = location_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let n_times = times.len();
    let n_locations = location_ids.len();
    let n_features = spec.len();
    let mut values = vec![Value::Missing; n_times * n_locations * n_features];
    let mut filled = vec![false; n_times * n_locations];
    for row in rows {
        let t = time_rank[row.time_idx];
        let m = loc_rank[row.location.as_str()];
        let cell = t * n_locations + m;
        if filled[cell] {
            bail!(
                "duplicate row for time `{}`, location `{}`",
                time_labels[t],
                row.location
            );
        }
        filled[cell] = true;
        values[cell * n_features..(cell + 1) * n_features].copy_from_slice(&row.values);
    }

    let points: Vec<[f64; 2]> = location_ids.iter().map(|id| location_coords[id]).collect();
    let coords = if geographic {
        Coords::Geographic(points)
    } else {
        Coords::Planar(points)
    };
    let panel = PanelDataset::new(values, times, coords, spec)?;
    Ok((
        panel,
        PanelMeta {
            time_labels,
            location_ids,
            hours_of_day,
            geographic,
        },
    ))
}

/// Meta for panels that never came from a file: integer time labels and
/// S1..SM location ids.
pub fn synthetic_meta(panel: &PanelDataset) -> PanelMeta {
    PanelMeta {
        time_labels: panel
            .times()
            .iter()
            .map(|t| format!("{}", *t as i64))
            .collect(),
        location_ids: (1..=panel.n_locations()).map(|m| format!("S{m}")).collect(),
        hours_of_day: panel
            .times()
            .iter()
            .map(|t| (*t as i64).rem_euclid(24) as u32)
            .collect(),
        geographic: matches!(panel.coords(), Coords::Geographic(_)),
    }
}

/// Used when building a derived panel (e.g. rolling features) for an existing
/// meta: the meta is unchanged, so this is just a consistency assertion.
pub fn check_meta(panel: &PanelDataset, meta: &PanelMeta) {
    assert_eq!(panel.n_times(), meta.time_labels.len());
    assert_eq!(panel.n_locations(), meta.location_ids.len());
}
