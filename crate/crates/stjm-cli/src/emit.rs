//! Output writers: panels, ground truth, fit results, reports and grid
//! surfaces. All numeric output uses the shortest decimal form that parses
//! back to the same value, so emitted panels re-ingest bit-exactly.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::Path;

use stjm::eval::GridSearchResult;
use stjm::{ExperimentReport, FeatureKind, FitResult, PanelDataset, StateMatrix, Value};

use crate::ingest::{check_meta, PanelMeta};

fn format_value(panel: &PanelDataset, p: usize, v: Value) -> String {
    match v {
        Value::Missing => String::new(),
        Value::Continuous(x) => format!("{x}"),
        Value::Categorical(l) => match &panel.spec().feature(p).kind {
            FeatureKind::Categorical { levels } => levels[l].clone(),
            FeatureKind::Continuous => unreachable!("categorical value in continuous feature"),
        },
    }
}

/// Long-format panel CSV, one row per (time, location), empty fields for
/// missing cells.
pub fn write_panel_csv(panel: &PanelDataset, meta: &PanelMeta, path: &Path) -> Result<()> {
    check_meta(panel, meta);
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut header = vec!["time".to_string(), "location".to_string()];
    if meta.geographic {
        header.extend(["lat".to_string(), "lon".to_string()]);
    } else {
        header.extend(["x".to_string(), "y".to_string()]);
    }
    header.extend(panel.spec().features().iter().map(|f| f.name.clone()));
    writer.write_record(&header)?;
    let points = panel.coords().points();
    for t in 0..panel.n_times() {
        for (m, point) in points.iter().enumerate() {
            let mut record = vec![
                meta.time_labels[t].clone(),
                meta.location_ids[m].clone(),
                format!("{}", point[0]),
                format!("{}", point[1]),
            ];
            for (p, &v) in panel.row(t, m).iter().enumerate() {
                record.push(format_value(panel, p, v));
            }
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Ground-truth states as time, location, state (1-based).
pub fn write_states_csv(states: &StateMatrix, meta: &PanelMeta, path: &Path) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    writer.write_record(["time", "location", "state"])?;
    for t in 0..states.n_times() {
        for m in 0..states.n_locations() {
            writer.write_record([
                meta.time_labels[t].as_str(),
                meta.location_ids[m].as_str(),
                &(states.state(t, m) + 1).to_string(),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Summary {
    objective: f64,
    objective_trace: Vec<f64>,
    n_iter: usize,
    converged: bool,
    start_index: usize,
    /// Fraction of all cells in each state (1-based order).
    occupancy: Vec<f64>,
    per_location: Vec<LocationSummary>,
    per_hour: Vec<HourSummary>,
}

#[derive(Serialize)]
struct LocationSummary {
    location: String,
    proportions: Vec<f64>,
}

#[derive(Serialize)]
struct HourSummary {
    hour: u32,
    counts: Vec<usize>,
}

/// Writes `states.csv`, `prototypes.csv`, `summary.json` and `heatmap.csv`
/// into `out_dir`.
pub fn emit_results(
    result: &FitResult,
    panel: &PanelDataset,
    meta: &PanelMeta,
    out_dir: &Path,
) -> Result<()> {
    check_meta(panel, meta);
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let states = &result.states;
    let k = states.k();

    write_states_csv(states, meta, &out_dir.join("states.csv"))?;

    let mut writer = csv::Writer::from_path(out_dir.join("prototypes.csv"))?;
    let mut header = vec!["state".to_string()];
    header.extend(panel.spec().features().iter().map(|f| f.name.clone()));
    writer.write_record(&header)?;
    for s in 0..k {
        let mut record = vec![(s + 1).to_string()];
        for (p, &v) in result.prototypes.row(s).iter().enumerate() {
            record.push(format_value(panel, p, v));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;

    let mut per_location = Vec::with_capacity(states.n_locations());
    for m in 0..states.n_locations() {
        let mut counts = vec![0usize; k];
        for t in 0..states.n_times() {
            counts[states.state(t, m)] += 1;
        }
        per_location.push(LocationSummary {
            location: meta.location_ids[m].clone(),
            proportions: counts
                .iter()
                .map(|&c| c as f64 / states.n_times() as f64)
                .collect(),
        });
    }
    let mut hour_counts: Vec<Vec<usize>> = vec![vec![0usize; k]; 24];
    for t in 0..states.n_times() {
        let hour = meta.hours_of_day[t] as usize % 24;
        for m in 0..states.n_locations() {
            hour_counts[hour][states.state(t, m)] += 1;
        }
    }
    let per_hour = hour_counts
        .into_iter()
        .enumerate()
        .filter(|(_, counts)| counts.iter().any(|&c| c > 0))
        .map(|(hour, counts)| HourSummary {
            hour: hour as u32,
            counts,
        })
        .collect();
    let summary = Summary {
        objective: result.objective(),
        objective_trace: result.objective_trace.clone(),
        n_iter: result.n_iter,
        converged: result.converged,
        start_index: result.start_index,
        occupancy: states.occupancy(),
        per_location,
        per_hour,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(out_dir.join("summary.json"), text)?;

    let mut writer = csv::Writer::from_path(out_dir.join("heatmap.csv"))?;
    let mut header = vec!["location".to_string()];
    header.extend(meta.time_labels.iter().cloned());
    writer.write_record(&header)?;
    for m in 0..states.n_locations() {
        let mut record = vec![meta.location_ids[m].clone()];
        for t in 0..states.n_times() {
            record.push((states.state(t, m) + 1).to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Report CSV plus its machine-readable JSON twin next to it.
pub fn write_report(report: &ExperimentReport, csv_path: &Path) -> Result<()> {
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(csv_path, report.to_csv_string())
        .with_context(|| format!("cannot write {}", csv_path.display()))?;
    let json_path = csv_path.with_extension("json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(&json_path, text)
        .with_context(|| format!("cannot write {}", json_path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct GridBest {
    lambda: f64,
    gamma: f64,
    bac: f64,
}

/// BAC surface as a lambda x gamma table plus the winning pair.
pub fn write_grid(
    grid: &GridSearchResult,
    lambda_grid: &[f64],
    gamma_grid: &[f64],
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut writer = csv::Writer::from_path(out_dir.join("bac_surface.csv"))?;
    let mut header = vec!["lambda".to_string()];
    header.extend(gamma_grid.iter().map(|g| format!("gamma={g}")));
    writer.write_record(&header)?;
    for (i, &lambda) in lambda_grid.iter().enumerate() {
        let mut record = vec![format!("{lambda}")];
        record.extend(grid.surface[i].iter().map(|b| format!("{b}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    let best = GridBest {
        lambda: grid.best_lambda,
        gamma: grid.best_gamma,
        bac: grid.best_bac,
    };
    let mut text = serde_json::to_string_pretty(&best)?;
    text.push('\n');
    std::fs::write(out_dir.join("best.json"), text)?;
    Ok(())
}
