//! Trailing-window feature engineering: appends a rolling mean and sample
//! standard deviation column for every continuous feature.

use anyhow::{bail, Result};

use stjm::{Feature, FeatureSpec, PanelDataset, Value};

/// Appends, for each continuous feature and location, the mean and sample
/// standard deviation of the observed values whose timestamps fall in
/// `(tau_t - window_hours, tau_t]`. Windows with no observed value yield a
/// missing mean; windows with fewer than two yield a missing deviation.
/// Original columns are never altered.
pub fn rolling_features(panel: &PanelDataset, window_hours: u32) -> Result<PanelDataset> {
    if window_hours == 0 {
        return Ok(panel.clone());
    }
    if window_hours < 2 {
        bail!("rolling window must span at least 2 hours (got {window_hours})");
    }
    let window = window_hours as f64;
    let spec = panel.spec();
    let continuous: Vec<usize> = (0..spec.len())
        .filter(|&p| spec.feature(p).is_continuous())
        .collect();

    let mut features: Vec<Feature> = spec.features().to_vec();
    for &p in &continuous {
        let name = &spec.feature(p).name;
        features.push(Feature::continuous(format!("{name}_mean{window_hours}h")));
        features.push(Feature::continuous(format!("{name}_sd{window_hours}h")));
    }
    let new_spec = FeatureSpec::new(features)?;

    let n_times = panel.n_times();
    let n_locations = panel.n_locations();
    let times = panel.times();
    let n_new = new_spec.len();
    let mut values = Vec::with_capacity(n_times * n_locations * n_new);
    let mut window_values: Vec<f64> = Vec::new();
    for t in 0..n_times {
        // Window start: first index with tau > tau_t - window.
        let start = times.partition_point(|&tau| tau <= times[t] - window);
        for m in 0..n_locations {
            values.extend_from_slice(panel.row(t, m));
            for &p in &continuous {
                window_values.clear();
                for u in start..=t {
                    if let Value::Continuous(x) = panel.value(u, m, p) {
                        window_values.push(x);
                    }
                }
                let n = window_values.len();
                let mean = if n > 0 {
                    Some(window_values.iter().sum::<f64>() / n as f64)
                } else {
                    None
                };
                values.push(mean.map_or(Value::Missing, Value::Continuous));
                let sd = if n >= 2 {
                    let mu = mean.unwrap();
                    let var = window_values.iter().map(|x| (x - mu).powi(2)).sum::<f64>()
                        / (n - 1) as f64;
                    Some(var.sqrt())
                } else {
                    None
                };
                values.push(sd.map_or(Value::Missing, Value::Continuous));
            }
        }
    }
    Ok(PanelDataset::new(
        values,
        times.to_vec(),
        panel.coords().clone(),
        new_spec,
    )?)
}
