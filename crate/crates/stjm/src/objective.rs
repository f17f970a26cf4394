//! Exact evaluation of the model objective on a fully imputed panel.

use crate::data::{Hyperparams, PanelDataset, PrototypeSet, StateMatrix};
use crate::gower::GowerMetric;
use crate::spatial::SpatialWeights;

/// Full objective value for a state assignment and prototype set.
///
/// Sums, over locations, the Gower distance of each cell to its state's
/// prototype, minus the spatial agreement reward
/// `gamma * sum_{i != m} 1(s[t][i] == s[t][m]) * w[i][m]`, plus the temporal
/// jump penalty `lambda * 1(s[t+1][m] != s[t][m]) / (tau[t+1] - tau[t])`.
///
/// `data` must be fully imputed; the Gower metric's ranges should come from
/// the observed values of the raw panel.
pub fn objective(
    data: &PanelDataset,
    states: &StateMatrix,
    prototypes: &PrototypeSet,
    hp: &Hyperparams,
    weights: &SpatialWeights,
    metric: &GowerMetric,
) -> f64 {
    let n_times = data.n_times();
    let n_locations = data.n_locations();
    let times = data.times();
    debug_assert_eq!(states.n_times(), n_times);
    debug_assert_eq!(states.n_locations(), n_locations);
    debug_assert_eq!(weights.n_locations(), n_locations);

    let mut total = 0.0;
    for m in 0..n_locations {
        let w_row = weights.row(m);
        for t in 0..n_times {
            let s = states.state(t, m);
            total += metric.distance(data.row(t, m), prototypes.row(s));
            if hp.gamma != 0.0 {
                let mut agreement = 0.0;
                for (i, &w) in w_row.iter().enumerate() {
                    if i != m && states.state(t, i) == s {
                        agreement += w;
                    }
                }
                total -= hp.gamma * agreement;
            }
        }
        if hp.lambda != 0.0 {
            for t in 0..n_times - 1 {
                if states.state(t + 1, m) != states.state(t, m) {
                    total += hp.lambda / (times[t + 1] - times[t]);
                }
            }
        }
    }
    total
}
