//! Model estimation: initialization, prototype fitting, iterative imputation,
//! per-location dynamic-programming decoding, the coordinate-descent loop and
//! multi-start selection.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::{FeatureKind, Hyperparams, PanelDataset, PrototypeSet, StateMatrix, Value};
use crate::error::{Error, Result};
use crate::gower::GowerMetric;
use crate::objective::objective;
use crate::par;
use crate::spatial::SpatialWeights;

/// Estimator for continuous prototypes. Categorical prototypes are always the
/// mode (ties broken toward the lowest level index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrototypeRule {
    #[default]
    Mean,
    /// Exact minimizer of the absolute-deviation term; even counts use the
    /// arithmetic midpoint of the two central values.
    Median,
}

/// Fitting configuration. Locations are decoded in fixed ascending order;
/// every random draw is determined by `hyperparams.seed`.
#[derive(Debug, Clone, Default)]
pub struct FitConfig {
    pub hyperparams: Hyperparams,
    pub prototype_rule: PrototypeRule,
}

/// Output of a fit: the winning start's states, prototypes and imputed panel.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub states: StateMatrix,
    pub prototypes: PrototypeSet,
    /// Raw panel with originally missing cells filled by state prototypes.
    pub imputed_data: PanelDataset,
    /// Objective value recorded after each coordinate-descent pass.
    pub objective_trace: Vec<f64>,
    pub n_iter: usize,
    pub start_index: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("fit records at least one pass")
    }
}

/// Fills every missing cell with the unconditional mean (continuous) or mode
/// (categorical, ties toward the lowest level index) of its feature.
pub fn initial_impute(raw: &PanelDataset) -> Result<PanelDataset> {
    if !raw.has_missing() {
        return Ok(raw.clone());
    }
    let spec = raw.spec();
    let mut fills = Vec::with_capacity(spec.len());
    for (p, feature) in spec.features().iter().enumerate() {
        let fill = match &feature.kind {
            FeatureKind::Continuous => {
                let mut sum = 0.0;
                let mut count = 0usize;
                for t in 0..raw.n_times() {
                    for m in 0..raw.n_locations() {
                        if let Value::Continuous(x) = raw.value(t, m, p) {
                            sum += x;
                            count += 1;
                        }
                    }
                }
                if count == 0 {
                    return Err(Error::FullyMissingFeature(feature.name.clone()));
                }
                Value::Continuous(sum / count as f64)
            }
            FeatureKind::Categorical { levels } => {
                let mut counts = vec![0usize; levels.len()];
                for t in 0..raw.n_times() {
                    for m in 0..raw.n_locations() {
                        if let Value::Categorical(l) = raw.value(t, m, p) {
                            counts[l] += 1;
                        }
                    }
                }
                if counts.iter().all(|&c| c == 0) {
                    return Err(Error::FullyMissingFeature(feature.name.clone()));
                }
                Value::Categorical(argmax_count(&counts))
            }
        };
        fills.push(fill);
    }
    let mut imputed = raw.clone();
    for t in 0..raw.n_times() {
        for m in 0..raw.n_locations() {
            for (p, &fill) in fills.iter().enumerate() {
                if raw.value(t, m, p).is_missing() {
                    imputed.set_value(t, m, p, fill);
                }
            }
        }
    }
    Ok(imputed)
}

/// Index of the largest count, ties toward the lowest index.
fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// k-means++ seeding over all T*M cell vectors with Gower dissimilarity,
/// followed by nearest-seed assignment. Deterministic given `seed`.
///
/// `data` must be fully imputed.
pub fn initialize_states(data: &PanelDataset, k: usize, seed: u64) -> StateMatrix {
    let metric = GowerMetric::from_observed(data).expect("imputed data has observed values");
    initialize_states_with_metric(data, &metric, k, seed)
}

pub(crate) fn initialize_states_with_metric(
    data: &PanelDataset,
    metric: &GowerMetric,
    k: usize,
    seed: u64,
) -> StateMatrix {
    let n_times = data.n_times();
    let n_locations = data.n_locations();
    let n = n_times * n_locations;
    let cell = |i: usize| data.row(i / n_locations, i % n_locations);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut seeds = Vec::with_capacity(k);
    seeds.push(rng.random_range(0..n));
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| metric.distance(cell(i), cell(seeds[0])).powi(2))
        .collect();
    let mut warned = false;
    for _ in 1..k {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d2) in min_d2.iter().enumerate() {
                acc += d2;
                if u < acc {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            if !warned {
                log::warn!(
                    "k-means++ seeding: fewer distinct cell vectors than states; \
                     sampling with replacement"
                );
                warned = true;
            }
            rng.random_range(0..n)
        };
        seeds.push(next);
        for (i, best) in min_d2.iter_mut().enumerate() {
            let d2 = metric.distance(cell(i), cell(next)).powi(2);
            if d2 < *best {
                *best = d2;
            }
        }
    }

    let mut states = vec![0usize; n];
    for (i, slot) in states.iter_mut().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, &sj) in seeds.iter().enumerate() {
            let d = metric.distance(cell(i), cell(sj));
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        *slot = best;
    }
    StateMatrix::new(states, n_times, n_locations, k).expect("assignment within 0..k")
}

/// Per-state prototypes: mean or median for continuous features, mode for
/// categorical ones. Empty states are re-seeded from the cell worst fit by its
/// own prototype.
pub fn fit_prototypes(
    data: &PanelDataset,
    states: &StateMatrix,
    rule: PrototypeRule,
) -> PrototypeSet {
    let metric = GowerMetric::from_observed(data).expect("imputed data has observed values");
    fit_prototypes_with_metric(data, states, rule, &metric).0
}

pub(crate) fn fit_prototypes_with_metric(
    data: &PanelDataset,
    states: &StateMatrix,
    rule: PrototypeRule,
    metric: &GowerMetric,
) -> (PrototypeSet, Vec<usize>) {
    let k = states.k();
    let spec = data.spec();
    let n_features = spec.len();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0f64; k * n_features];
    let mut level_counts: Vec<Vec<usize>> = spec
        .features()
        .iter()
        .map(|f| match &f.kind {
            FeatureKind::Continuous => Vec::new(),
            FeatureKind::Categorical { levels } => vec![0usize; k * levels.len()],
        })
        .collect();
    let mut samples: Vec<Vec<f64>> = if rule == PrototypeRule::Median {
        vec![Vec::new(); k * n_features]
    } else {
        Vec::new()
    };

    for t in 0..data.n_times() {
        for m in 0..data.n_locations() {
            let s = states.state(t, m);
            counts[s] += 1;
            let row = data.row(t, m);
            for (p, v) in row.iter().enumerate() {
                match v {
                    Value::Continuous(x) => {
                        sums[s * n_features + p] += x;
                        if rule == PrototypeRule::Median {
                            samples[s * n_features + p].push(*x);
                        }
                    }
                    Value::Categorical(l) => {
                        let n_levels = level_counts[p].len() / k;
                        level_counts[p][s * n_levels + l] += 1;
                    }
                    Value::Missing => panic!("prototype fitting requires imputed data"),
                }
            }
        }
    }

    let mut values = vec![Value::Missing; k * n_features];
    for s in 0..k {
        if counts[s] == 0 {
            continue;
        }
        for p in 0..n_features {
            values[s * n_features + p] = match &spec.feature(p).kind {
                FeatureKind::Continuous => match rule {
                    PrototypeRule::Mean => {
                        Value::Continuous(sums[s * n_features + p] / counts[s] as f64)
                    }
                    PrototypeRule::Median => {
                        Value::Continuous(median(&mut samples[s * n_features + p]))
                    }
                },
                FeatureKind::Categorical { levels } => {
                    let n_levels = levels.len();
                    Value::Categorical(argmax_count(
                        &level_counts[p][s * n_levels..(s + 1) * n_levels],
                    ))
                }
            };
        }
    }

    // Empty states take the feature vector of the worst-fit cell, each repair
    // claiming a distinct cell.
    let empties: Vec<usize> = (0..k).filter(|&s| counts[s] == 0).collect();
    if empties.is_empty() {
        let protos = PrototypeSet::new(values, k, spec).expect("prototypes typed like features");
        return (protos, Vec::new());
    }
    let n_locations = data.n_locations();
    let mut used: Vec<usize> = Vec::new();
    for &s in &empties {
        let mut worst_cell = None;
        let mut worst_d = f64::NEG_INFINITY;
        for t in 0..data.n_times() {
            for m in 0..n_locations {
                let i = t * n_locations + m;
                if used.contains(&i) {
                    continue;
                }
                let own = states.state(t, m);
                let proto = &values[own * n_features..(own + 1) * n_features];
                let d = metric.distance(data.row(t, m), proto);
                if d > worst_d {
                    worst_d = d;
                    worst_cell = Some(i);
                }
            }
        }
        if let Some(i) = worst_cell {
            used.push(i);
            let row = data.row(i / n_locations, i % n_locations);
            values[s * n_features..(s + 1) * n_features].copy_from_slice(row);
        }
    }
    log::warn!("re-seeded {} empty state(s): {:?}", empties.len(), empties);
    let protos = PrototypeSet::new(values, k, spec).expect("prototypes typed like features");
    (protos, empties)
}

/// Median with the arithmetic-midpoint convention for even counts.
fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Fills every originally missing cell of `raw` with the prototype of its
/// current state; observed cells are never modified.
pub fn impute_missing(
    raw: &PanelDataset,
    states: &StateMatrix,
    prototypes: &PrototypeSet,
) -> PanelDataset {
    let mut filled = raw.clone();
    for t in 0..raw.n_times() {
        for m in 0..raw.n_locations() {
            let s = states.state(t, m);
            for p in 0..raw.n_features() {
                if raw.value(t, m, p).is_missing() {
                    filled.set_value(t, m, p, prototypes.value(s, p));
                }
            }
        }
    }
    filled
}

/// Exact minimum-cost state sequence for location `m`, holding the other
/// locations' states fixed at their current values.
///
/// Minimizes the per-location objective (Gower fit minus spatial agreement
/// reward plus gap-weighted jump penalties) over all K^T sequences by a
/// backward value recursion and forward argmin readout. Ties break toward the
/// lowest state index. `metric` must carry the ranges of the raw panel.
pub fn decode_location(
    m: usize,
    data: &PanelDataset,
    prototypes: &PrototypeSet,
    current: &StateMatrix,
    hp: &Hyperparams,
    weights: &SpatialWeights,
    metric: &GowerMetric,
) -> Vec<usize> {
    decode_location_with_value(m, data, prototypes, current, hp, weights, metric).0
}

pub(crate) fn decode_location_with_value(
    m: usize,
    data: &PanelDataset,
    prototypes: &PrototypeSet,
    current: &StateMatrix,
    hp: &Hyperparams,
    weights: &SpatialWeights,
    metric: &GowerMetric,
) -> (Vec<usize>, f64) {
    let n_times = data.n_times();
    let n_locations = data.n_locations();
    let k = hp.k;
    let times = data.times();
    let w_row = weights.row(m);

    // Unary cost of putting location m in state s at time t.
    let mut cost = vec![0.0f64; n_times * k];
    for t in 0..n_times {
        let row = data.row(t, m);
        if hp.gamma != 0.0 {
            let mut agreement = vec![0.0f64; k];
            for i in 0..n_locations {
                if i != m {
                    agreement[current.state(t, i)] += w_row[i];
                }
            }
            for s in 0..k {
                cost[t * k + s] = metric.distance(row, prototypes.row(s)) - hp.gamma * agreement[s];
            }
        } else {
            for s in 0..k {
                cost[t * k + s] = metric.distance(row, prototypes.row(s));
            }
        }
    }

    // Backward value function: value[t][s] is the cheapest completion from
    // (t, s) onwards, including the cost at t.
    let mut value = cost.clone();
    for t in (0..n_times.saturating_sub(1)).rev() {
        let penalty = hp.lambda / (times[t + 1] - times[t]);
        let mut best_next = f64::INFINITY;
        for j in 0..k {
            best_next = best_next.min(value[(t + 1) * k + j]);
        }
        for s in 0..k {
            let stay = value[(t + 1) * k + s];
            value[t * k + s] = cost[t * k + s] + stay.min(best_next + penalty);
        }
    }

    // Forward readout.
    let mut seq = vec![0usize; n_times];
    let (first, total) = argmin(&value[0..k]);
    seq[0] = first;
    for t in 1..n_times {
        let penalty = hp.lambda / (times[t] - times[t - 1]);
        let mut best = 0;
        let mut best_v = f64::INFINITY;
        for j in 0..k {
            let v = value[t * k + j] + if j != seq[t - 1] { penalty } else { 0.0 };
            if v < best_v {
                best_v = v;
                best = j;
            }
        }
        seq[t] = best;
    }
    (seq, total)
}

fn argmin(xs: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        if x < best_v {
            best_v = x;
            best = i;
        }
    }
    (best, best_v)
}

/// Fits the model: for each start, k-means++ initialization followed by
/// coordinate descent (prototypes, imputation, per-location decoding in
/// ascending order) until the state matrix stabilizes or `max_iter` passes.
/// Returns the start with the lowest final objective.
pub fn fit(raw: &PanelDataset, cfg: &FitConfig) -> Result<FitResult> {
    let hp = &cfg.hyperparams;
    hp.validate()?;
    let metric = GowerMetric::from_observed(raw)?;
    let weights = SpatialWeights::compute(
        raw.coords(),
        hp.distance_metric,
        hp.distance_scale,
        hp.cutoff,
    )?;
    let base = initial_impute(raw)?;

    let results = par::map_indexed(hp.n_starts, |start| {
        run_single_start(raw, &base, cfg, &metric, &weights, start)
    });

    let mut best: Option<FitResult> = None;
    for r in results {
        let better = match &best {
            None => true,
            Some(b) => r.objective() < b.objective(),
        };
        if better {
            best = Some(r);
        }
    }
    Ok(best.expect("n_starts >= 1"))
}

fn run_single_start(
    raw: &PanelDataset,
    base: &PanelDataset,
    cfg: &FitConfig,
    metric: &GowerMetric,
    weights: &SpatialWeights,
    start: usize,
) -> FitResult {
    let hp = &cfg.hyperparams;
    let seed = hp.seed.wrapping_add(start as u64);
    let mut states = initialize_states_with_metric(base, metric, hp.k, seed);
    let mut data = base.clone();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prototypes = None;

    for _ in 0..hp.max_iter {
        let (protos, _) = fit_prototypes_with_metric(&data, &states, cfg.prototype_rule, metric);
        data = impute_missing(raw, &states, &protos);
        let previous = states.clone();
        for m in 0..raw.n_locations() {
            let seq = decode_location(m, &data, &protos, &states, hp, weights, metric);
            states.set_location_sequence(m, &seq);
        }
        trace.push(objective(&data, &states, &protos, hp, weights, metric));
        prototypes = Some(protos);
        if states == previous {
            converged = true;
            break;
        }
    }

    let n_iter = trace.len();
    FitResult {
        states,
        prototypes: prototypes.expect("max_iter >= 1"),
        imputed_data: data,
        objective_trace: trace,
        n_iter,
        start_index: start,
        converged,
    }
}

/// Mixed-type k-prototypes clustering: the model with both penalties off.
pub fn kprototypes_fit(raw: &PanelDataset, cfg: &FitConfig) -> Result<FitResult> {
    let mut plain = cfg.clone();
    plain.hyperparams.lambda = 0.0;
    plain.hyperparams.gamma = 0.0;
    fit(raw, &plain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Coords, DistanceMetric, Feature, FeatureSpec};
    use approx::assert_relative_eq;
    use itertools::Itertools;

    fn mixed_spec() -> FeatureSpec {
        FeatureSpec::new(vec![
            Feature::continuous("x"),
            Feature::categorical("c", vec!["a".into(), "b".into(), "c".into()]),
        ])
        .unwrap()
    }

    fn continuous_spec() -> FeatureSpec {
        FeatureSpec::new(vec![Feature::continuous("x")]).unwrap()
    }

    fn single_feature_panel(column: Vec<Value>, n_locations: usize) -> PanelDataset {
        let n_times = column.len() / n_locations;
        PanelDataset::new(
            column,
            (0..n_times).map(|t| t as f64).collect(),
            Coords::Planar((0..n_locations).map(|m| [m as f64, 0.0]).collect()),
            continuous_spec(),
        )
        .unwrap()
    }

    #[test]
    fn initial_impute_mean_and_mode() {
        let spec = mixed_spec();
        let values = vec![
            Value::Continuous(1.0),
            Value::Categorical(0),
            Value::Missing,
            Value::Categorical(0),
            Value::Continuous(3.0),
            Value::Missing,
        ];
        let panel = PanelDataset::new(
            values,
            vec![0.0, 1.0, 2.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        let imputed = initial_impute(&panel).unwrap();
        assert_eq!(imputed.value(1, 0, 0), Value::Continuous(2.0));
        assert_eq!(imputed.value(2, 0, 1), Value::Categorical(0));
        // observed cells untouched
        assert_eq!(imputed.value(0, 0, 0), Value::Continuous(1.0));
    }

    #[test]
    fn initial_impute_mode_tie_takes_lowest_level() {
        let spec = FeatureSpec::new(vec![Feature::categorical(
            "c",
            vec!["a".into(), "b".into()],
        )])
        .unwrap();
        let values = vec![Value::Categorical(1), Value::Categorical(0), Value::Missing];
        let panel = PanelDataset::new(
            values,
            vec![0.0, 1.0, 2.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        let imputed = initial_impute(&panel).unwrap();
        assert_eq!(imputed.value(2, 0, 0), Value::Categorical(0));
    }

    #[test]
    fn initial_impute_complete_data_is_identity() {
        let panel = single_feature_panel(vec![Value::Continuous(1.0), Value::Continuous(2.0)], 1);
        assert_eq!(initial_impute(&panel).unwrap(), panel);
    }

    #[test]
    fn initialize_single_state_assigns_everything() {
        let panel = single_feature_panel((0..6).map(|i| Value::Continuous(i as f64)).collect(), 2);
        let s = initialize_states(&panel, 1, 42);
        assert!(s.states().iter().all(|&x| x == 0));
    }

    #[test]
    fn initialize_is_deterministic() {
        let panel = single_feature_panel(
            (0..20)
                .map(|i| Value::Continuous((i * 7 % 13) as f64))
                .collect(),
            4,
        );
        assert_eq!(
            initialize_states(&panel, 3, 9),
            initialize_states(&panel, 3, 9)
        );
    }

    #[test]
    fn initialize_separates_two_clouds() {
        // Ten cells near 0, ten near 100.
        let mut column = Vec::new();
        for t in 0..10 {
            column.push(Value::Continuous(t as f64 * 0.01));
            column.push(Value::Continuous(100.0 + t as f64 * 0.01));
        }
        let panel = single_feature_panel(column, 2);
        let s = initialize_states(&panel, 2, 5);
        let first = s.state(0, 0);
        let second = s.state(0, 1);
        assert_ne!(first, second);
        for t in 0..10 {
            assert_eq!(s.state(t, 0), first);
            assert_eq!(s.state(t, 1), second);
        }
    }

    #[test]
    fn initialize_more_states_than_distinct_vectors_falls_back() {
        let panel = single_feature_panel(vec![Value::Continuous(1.0); 4], 2);
        let s = initialize_states(&panel, 3, 1);
        assert_eq!(s.k(), 3);
        assert_eq!(s.states().len(), 4);
    }

    #[test]
    fn prototypes_mean_and_mode() {
        let spec = mixed_spec();
        let values = vec![
            Value::Continuous(1.0),
            Value::Categorical(0),
            Value::Continuous(2.0),
            Value::Categorical(0),
            Value::Continuous(3.0),
            Value::Categorical(1),
        ];
        let panel = PanelDataset::new(
            values,
            vec![0.0, 1.0, 2.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        let states = StateMatrix::filled(0, 3, 1, 1).unwrap();
        let protos = fit_prototypes(&panel, &states, PrototypeRule::Mean);
        assert_eq!(protos.value(0, 0), Value::Continuous(2.0));
        assert_eq!(protos.value(0, 1), Value::Categorical(0));
    }

    #[test]
    fn median_of_two_is_midpoint() {
        let panel = single_feature_panel(vec![Value::Continuous(0.0), Value::Continuous(10.0)], 1);
        let states = StateMatrix::filled(0, 2, 1, 1).unwrap();
        let protos = fit_prototypes(&panel, &states, PrototypeRule::Median);
        assert_eq!(protos.value(0, 0), Value::Continuous(5.0));
    }

    #[test]
    fn empty_state_reseeded_from_worst_fit_cell() {
        let panel = single_feature_panel(
            vec![
                Value::Continuous(0.0),
                Value::Continuous(0.1),
                Value::Continuous(9.0),
            ],
            1,
        );
        let states = StateMatrix::new(vec![0, 0, 0], 3, 1, 2).unwrap();
        let metric = GowerMetric::from_observed(&panel).unwrap();
        let (protos, repaired) =
            fit_prototypes_with_metric(&panel, &states, PrototypeRule::Mean, &metric);
        assert_eq!(repaired, vec![1]);
        // Worst-fit cell relative to state 0's mean (~3.03) is the 9.0 cell.
        assert_eq!(protos.value(1, 0), Value::Continuous(9.0));
    }

    #[test]
    fn impute_missing_fills_by_state_and_tracks_flips() {
        let panel = single_feature_panel(
            vec![
                Value::Continuous(1.0),
                Value::Missing,
                Value::Continuous(5.0),
            ],
            1,
        );
        let protos = PrototypeSet::new(
            vec![Value::Continuous(1.0), Value::Continuous(5.0)],
            2,
            &continuous_spec(),
        )
        .unwrap();
        let mut states = StateMatrix::new(vec![0, 0, 1], 3, 1, 2).unwrap();
        let filled = impute_missing(&panel, &states, &protos);
        assert_eq!(filled.value(1, 0, 0), Value::Continuous(1.0));
        // After the missing cell's state flips, the imputation follows the new prototype.
        states.set_state(1, 0, 1);
        let refilled = impute_missing(&panel, &states, &protos);
        assert_eq!(refilled.value(1, 0, 0), Value::Continuous(5.0));
        // Observed cells untouched both times.
        assert_eq!(refilled.value(0, 0, 0), Value::Continuous(1.0));
        assert_eq!(refilled.value(2, 0, 0), Value::Continuous(5.0));
    }

    #[test]
    fn impute_missing_identity_when_complete() {
        let panel = single_feature_panel(vec![Value::Continuous(1.0), Value::Continuous(2.0)], 1);
        let protos =
            PrototypeSet::new(vec![Value::Continuous(9.0)], 1, &continuous_spec()).unwrap();
        let states = StateMatrix::filled(0, 2, 1, 1).unwrap();
        assert_eq!(impute_missing(&panel, &states, &protos), panel);
    }

    // --- decoding ---

    struct DecodeInstance {
        panel: PanelDataset,
        protos: PrototypeSet,
        states: StateMatrix,
        weights: SpatialWeights,
        metric: GowerMetric,
        hp: Hyperparams,
    }

    fn random_decode_instance(
        n_times: usize,
        n_locations: usize,
        k: usize,
        lambda: f64,
        gamma: f64,
        seed: u64,
    ) -> DecodeInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        for _ in 0..n_times * n_locations {
            values.push(Value::Continuous(rng.random_range(0.0..1.0)));
        }
        // Random gaps (integer steps of 1 or 2).
        let mut times = vec![0.0];
        for _ in 1..n_times {
            times.push(times.last().unwrap() + rng.random_range(1..=2) as f64);
        }
        let coords = Coords::Planar(
            (0..n_locations)
                .map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..2.0)])
                .collect(),
        );
        let panel = PanelDataset::new(values, times, coords, continuous_spec()).unwrap();
        let protos = PrototypeSet::new(
            (0..k)
                .map(|_| Value::Continuous(rng.random_range(0.0..1.0)))
                .collect(),
            k,
            &continuous_spec(),
        )
        .unwrap();
        let states = StateMatrix::new(
            (0..n_times * n_locations)
                .map(|_| rng.random_range(0..k))
                .collect(),
            n_times,
            n_locations,
            k,
        )
        .unwrap();
        let weights =
            SpatialWeights::compute(panel.coords(), DistanceMetric::Euclidean, 1.0, None).unwrap();
        let metric = GowerMetric::from_observed(&panel).unwrap();
        let mut hp = Hyperparams::new(k, lambda, gamma);
        hp.n_starts = 1;
        DecodeInstance {
            panel,
            protos,
            states,
            weights,
            metric,
            hp,
        }
    }

    /// Cost of a full sequence for location m, written independently of the DP.
    fn sequence_cost(inst: &DecodeInstance, m: usize, seq: &[usize]) -> f64 {
        let mut total = 0.0;
        for (t, &s) in seq.iter().enumerate() {
            total += inst
                .metric
                .distance(inst.panel.row(t, m), inst.protos.row(s));
            for i in 0..inst.panel.n_locations() {
                if i != m && inst.states.state(t, i) == s {
                    total -= inst.hp.gamma * inst.weights.weight(i, m);
                }
            }
        }
        for t in 1..seq.len() {
            if seq[t] != seq[t - 1] {
                total += inst.hp.lambda / (inst.panel.times()[t] - inst.panel.times()[t - 1]);
            }
        }
        total
    }

    fn brute_force_best(inst: &DecodeInstance, m: usize) -> f64 {
        let k = inst.hp.k;
        let n_times = inst.panel.n_times();
        (0..n_times)
            .map(|_| 0..k)
            .multi_cartesian_product()
            .map(|seq| sequence_cost(inst, m, &seq))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn decode_matches_exhaustive_enumeration() {
        for seed in 0..30 {
            let inst = random_decode_instance(5, 2, 3, 0.2, 0.1, seed);
            let (seq, value) = decode_location_with_value(
                0,
                &inst.panel,
                &inst.protos,
                &inst.states,
                &inst.hp,
                &inst.weights,
                &inst.metric,
            );
            let best = brute_force_best(&inst, 0);
            assert_relative_eq!(value, best, epsilon = 1e-12);
            assert_relative_eq!(sequence_cost(&inst, 0, &seq), best, epsilon = 1e-12);
        }
    }

    #[test]
    fn decode_penalties_off_is_per_time_argmin() {
        let inst = random_decode_instance(6, 2, 3, 0.0, 0.0, 17);
        let seq = decode_location(
            0,
            &inst.panel,
            &inst.protos,
            &inst.states,
            &inst.hp,
            &inst.weights,
            &inst.metric,
        );
        for (t, &s) in seq.iter().enumerate() {
            let expected = (0..3)
                .map(|j| {
                    inst.metric
                        .distance(inst.panel.row(t, 0), inst.protos.row(j))
                })
                .enumerate()
                .fold((0usize, f64::INFINITY), |acc, (j, d)| {
                    if d < acc.1 {
                        (j, d)
                    } else {
                        acc
                    }
                })
                .0;
            assert_eq!(s, expected);
        }
    }

    #[test]
    fn decode_huge_lambda_gives_constant_sequence() {
        let mut inst = random_decode_instance(6, 1, 3, 0.0, 0.0, 23);
        inst.hp.lambda = 1e6;
        let seq = decode_location(
            0,
            &inst.panel,
            &inst.protos,
            &inst.states,
            &inst.hp,
            &inst.weights,
            &inst.metric,
        );
        assert!(seq.windows(2).all(|w| w[0] == w[1]));
        // The constant state minimizes the total Gower cost.
        let best_state = (0..3)
            .map(|s| {
                (0..6)
                    .map(|t| {
                        inst.metric
                            .distance(inst.panel.row(t, 0), inst.protos.row(s))
                    })
                    .sum::<f64>()
            })
            .enumerate()
            .fold((0usize, f64::INFINITY), |acc, (s, c)| {
                if c < acc.1 {
                    (s, c)
                } else {
                    acc
                }
            })
            .0;
        assert_eq!(seq[0], best_state);
    }

    #[test]
    fn decode_is_idempotent_after_state_update() {
        for seed in 40..50 {
            let mut inst = random_decode_instance(5, 3, 3, 0.15, 0.2, seed);
            let seq = decode_location(
                1,
                &inst.panel,
                &inst.protos,
                &inst.states,
                &inst.hp,
                &inst.weights,
                &inst.metric,
            );
            inst.states.set_location_sequence(1, &seq);
            let again = decode_location(
                1,
                &inst.panel,
                &inst.protos,
                &inst.states,
                &inst.hp,
                &inst.weights,
                &inst.metric,
            );
            assert_eq!(seq, again);
        }
    }

    #[test]
    fn decode_ties_break_toward_lowest_state() {
        // Two identical prototypes: every cost ties, so the decode must pick state 0.
        let panel = single_feature_panel(vec![Value::Continuous(0.0), Value::Continuous(1.0)], 1);
        let protos = PrototypeSet::new(
            vec![Value::Continuous(0.5), Value::Continuous(0.5)],
            2,
            &continuous_spec(),
        )
        .unwrap();
        let states = StateMatrix::filled(1, 2, 1, 2).unwrap();
        let weights =
            SpatialWeights::compute(panel.coords(), DistanceMetric::Euclidean, 1.0, None).unwrap();
        let metric = GowerMetric::from_observed(&panel).unwrap();
        let mut hp = Hyperparams::new(2, 0.1, 0.0);
        hp.n_starts = 1;
        let seq = decode_location(0, &panel, &protos, &states, &hp, &weights, &metric);
        assert_eq!(seq, vec![0, 0]);
    }

    // --- full fit ---

    fn small_mixed_panel(seed: u64, missing: bool) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = mixed_spec();
        let n_times = 8;
        let n_locations = 3;
        let mut values = Vec::new();
        for t in 0..n_times {
            for _m in 0..n_locations {
                let group = (t < n_times / 2) as usize;
                let x = rng.random_range(0.0..1.0) + group as f64 * 3.0;
                if missing && rng.random::<f64>() < 0.15 {
                    values.push(Value::Missing);
                } else {
                    values.push(Value::Continuous(x));
                }
                values.push(Value::Categorical(if group == 0 { 0 } else { 1 }));
            }
        }
        PanelDataset::new(
            values,
            (0..n_times).map(|t| t as f64).collect(),
            Coords::Planar(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
            spec,
        )
        .unwrap()
    }

    #[test]
    fn fit_k1_is_trivial() {
        let panel = small_mixed_panel(1, false);
        let mut cfg = FitConfig::default();
        cfg.hyperparams.k = 1;
        cfg.hyperparams.n_starts = 2;
        let result = fit(&panel, &cfg).unwrap();
        assert!(result.states.states().iter().all(|&s| s == 0));
        assert!(result.converged);
        assert_eq!(result.n_iter, 1);
        // Prototype equals the global mean / mode.
        let global = fit_prototypes(
            &panel,
            &StateMatrix::filled(0, 8, 3, 1).unwrap(),
            PrototypeRule::Mean,
        );
        assert_eq!(result.prototypes.row(0), global.row(0));
    }

    #[test]
    fn fit_is_deterministic() {
        let panel = small_mixed_panel(2, true);
        let mut cfg = FitConfig::default();
        cfg.hyperparams.k = 2;
        cfg.hyperparams.n_starts = 4;
        cfg.hyperparams.seed = 77;
        let a = fit(&panel, &cfg).unwrap();
        let b = fit(&panel, &cfg).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.prototypes, b.prototypes);
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.start_index, b.start_index);
        assert_eq!(a.imputed_data, b.imputed_data);
    }

    #[test]
    fn fit_never_modifies_observed_cells() {
        let panel = small_mixed_panel(3, true);
        let mut cfg = FitConfig::default();
        cfg.hyperparams.k = 2;
        cfg.hyperparams.n_starts = 2;
        let result = fit(&panel, &cfg).unwrap();
        for t in 0..panel.n_times() {
            for m in 0..panel.n_locations() {
                for p in 0..panel.n_features() {
                    let original = panel.value(t, m, p);
                    if !original.is_missing() {
                        assert_eq!(result.imputed_data.value(t, m, p), original);
                    } else {
                        assert!(!result.imputed_data.value(t, m, p).is_missing());
                    }
                }
            }
        }
    }

    #[test]
    fn fit_median_rule_objective_is_monotone() {
        // Complete data, both penalties off, median prototypes: every step is an
        // exact coordinate minimization so the trace never increases.
        for seed in 0..5 {
            let panel = small_mixed_panel(seed, false);
            let mut cfg = FitConfig {
                prototype_rule: PrototypeRule::Median,
                ..FitConfig::default()
            };
            cfg.hyperparams = Hyperparams::new(2, 0.0, 0.0);
            cfg.hyperparams.n_starts = 3;
            cfg.hyperparams.seed = seed;
            let result = fit(&panel, &cfg).unwrap();
            for w in result.objective_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "objective increased: {:?}",
                    result.objective_trace
                );
            }
        }
    }

    #[test]
    fn kprototypes_is_fit_with_penalties_off() {
        let panel = small_mixed_panel(5, true);
        let mut cfg = FitConfig {
            hyperparams: Hyperparams::new(2, 0.3, 0.2),
            ..FitConfig::default()
        };
        cfg.hyperparams.n_starts = 3;
        cfg.hyperparams.seed = 11;
        let kp = kprototypes_fit(&panel, &cfg).unwrap();
        let mut plain = cfg.clone();
        plain.hyperparams.lambda = 0.0;
        plain.hyperparams.gamma = 0.0;
        let direct = fit(&panel, &plain).unwrap();
        assert_eq!(kp.states, direct.states);
        assert_eq!(kp.objective_trace, direct.objective_trace);
    }

    #[test]
    fn fit_errors_on_fully_missing_feature() {
        let spec = continuous_spec();
        let panel = PanelDataset::new(
            vec![Value::Missing, Value::Missing],
            vec![0.0, 1.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        let cfg = FitConfig::default();
        assert!(matches!(
            fit(&panel, &cfg),
            Err(Error::FullyMissingFeature(_))
        ));
    }
}
