//! Synthetic-data generator: spatially correlated AR(1) latent field, per-time
//! quantile slicing into states, state-conditional mixed features, and gap /
//! missing-value injection.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{Coords, Feature, FeatureSpec, PanelDataset, StateMatrix, Value};
use crate::error::{Error, Result};

/// 10% / 90% quantiles of the standard normal, used for the categorical
/// conversion bands.
const PROBIT_90: f64 = 1.2815515655446004;

const MAX_MISSING_REDRAWS: usize = 100;

/// Configuration of one simulated scenario.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScenarioSpec {
    /// Retained time points (after gap injection).
    pub t: usize,
    /// Locations.
    pub m: usize,
    /// Features; the last floor(p/2) are converted to categorical.
    pub p: usize,
    /// Latent states.
    pub k: usize,
    /// Spatial correlation decay of the latent field.
    pub alpha: f64,
    /// Temporal persistence of the latent field.
    pub beta: f64,
    /// Mean separation between states.
    pub mu: f64,
    /// Common off-diagonal feature correlation.
    pub rho: f64,
    /// Fraction of time points dropped.
    pub gap_fraction: f64,
    /// Fraction of cells masked as missing.
    pub missing_fraction: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Scenario with the reference simulation parameters: K=3, alpha 0.01,
    /// beta 0.90, mu 0.50, rho 0.20.
    pub fn new(t: usize, m: usize, p: usize) -> Self {
        ScenarioSpec {
            t,
            m,
            p,
            k: 3,
            alpha: 0.01,
            beta: 0.90,
            mu: 0.50,
            rho: 0.20,
            gap_fraction: 0.0,
            missing_fraction: 0.0,
            seed: 0,
        }
    }

    pub fn with_gaps(mut self, fraction: f64) -> Self {
        self.gap_fraction = fraction;
        self
    }

    pub fn with_missing(mut self, fraction: f64) -> Self {
        self.missing_fraction = fraction;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.m == 0 || self.p == 0 || self.k == 0 {
            return Err(Error::InvalidScenario(
                "t, m, p and k must be at least 1".into(),
            ));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::InvalidScenario("alpha must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::InvalidScenario("beta must lie in [0, 1)".into()));
        }
        let rho_min = if self.p > 1 {
            -1.0 / (self.p as f64 - 1.0)
        } else {
            -1.0
        };
        if !(self.rho > rho_min && self.rho < 1.0) {
            return Err(Error::InvalidScenario(format!(
                "rho must lie in ({rho_min}, 1)"
            )));
        }
        if !(0.0..1.0).contains(&self.gap_fraction) || !(0.0..1.0).contains(&self.missing_fraction)
        {
            return Err(Error::InvalidScenario(
                "gap and missing fractions must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Time points generated before gap injection so that exactly `t` remain.
    pub fn generated_times(&self) -> usize {
        if self.gap_fraction > 0.0 {
            // Nudge below the rounding error so exact integer quotients
            // (e.g. 7 / 0.7) do not ceil one too high.
            (self.t as f64 / (1.0 - self.gap_fraction) - 1e-9).ceil() as usize
        } else {
            self.t
        }
    }

    /// State-specific feature means, equally spaced from +mu down to -mu.
    pub fn state_means(&self) -> Vec<f64> {
        if self.k == 1 {
            return vec![0.0];
        }
        (0..self.k)
            .map(|k| self.mu * (1.0 - 2.0 * k as f64 / (self.k as f64 - 1.0)))
            .collect()
    }
}

/// A generated panel together with its ground-truth state labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub data: PanelDataset,
    pub truth: StateMatrix,
    pub scenario: ScenarioSpec,
}

/// M locations drawn uniformly from the [0, 10]^2 square.
pub fn sample_locations(m: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
        .collect()
}

/// T x M latent Gaussian field: innovations are N(0, Gamma) with
/// Gamma(i, j) = exp(-alpha * ||coord_i - coord_j||), the first row is drawn
/// from the stationary distribution N(0, Gamma / (1 - beta^2)), and
/// xi_t = beta * xi_{t-1} + eta_t afterwards.
pub fn simulate_latent_field(
    coords: &[[f64; 2]],
    n_times: usize,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let n = coords.len();
    let dist = |i: usize, j: usize| {
        ((coords[i][0] - coords[j][0]).powi(2) + (coords[i][1] - coords[j][1]).powi(2)).sqrt()
    };
    let gamma = DMatrix::from_fn(n, n, |i, j| (-alpha * dist(i, j)).exp());
    let chol = match gamma.clone().cholesky() {
        Some(c) => c,
        None => {
            let jittered = &gamma + DMatrix::identity(n, n) * 1e-10;
            jittered.cholesky().ok_or(Error::FactorizationFailed)?
        }
    };
    let factor = chol.l();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw =
        |rng: &mut ChaCha8Rng| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));

    let mut field = Vec::with_capacity(n_times * n);
    let stationary_scale = 1.0 / (1.0 - beta * beta).sqrt();
    let mut current = &factor * draw(&mut rng) * stationary_scale;
    field.extend(current.iter().copied());
    for _ in 1..n_times {
        let innovation = &factor * draw(&mut rng);
        current = current * beta + innovation;
        field.extend(current.iter().copied());
    }
    Ok(field)
}

/// Slices each time's field values at its empirical j/K quantiles, j = 1..K-1.
/// A value's state is the number of cut points strictly below it; values
/// exactly at a cut go to the lower state.
pub fn slice_states(xi: &[f64], n_times: usize, n_locations: usize, k: usize) -> StateMatrix {
    assert_eq!(xi.len(), n_times * n_locations);
    let mut states = vec![0usize; n_times * n_locations];
    let mut sorted = vec![0.0f64; n_locations];
    for t in 0..n_times {
        let row = &xi[t * n_locations..(t + 1) * n_locations];
        sorted.copy_from_slice(row);
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite field values"));
        // Empirical quantile Q(j/K) = sorted[ceil(j*M/K) - 1].
        let cuts: Vec<f64> = (1..k)
            .map(|j| sorted[(j * n_locations).div_ceil(k) - 1])
            .collect();
        for (m, &x) in row.iter().enumerate() {
            states[t * n_locations + m] = cuts.partition_point(|&c| c < x);
        }
    }
    StateMatrix::new(states, n_times, n_locations, k).expect("states within 0..k")
}

/// Draws each cell's feature vector from N_P(mean_k * 1, Sigma) where Sigma has
/// unit diagonal and constant off-diagonal rho, conditional on the cell's state.
/// Returns a T x M x P array.
pub fn simulate_features(truth: &StateMatrix, spec: &ScenarioSpec, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let p = spec.p;
    let sigma = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { spec.rho });
    let chol = match sigma.clone().cholesky() {
        Some(c) => c,
        None => {
            let jittered = &sigma + DMatrix::identity(p, p) * 1e-10;
            jittered.cholesky().ok_or(Error::FactorizationFailed)?
        }
    };
    let factor = chol.l();
    let means = spec.state_means();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cells = truth.n_times() * truth.n_locations();
    let mut out = Vec::with_capacity(n_cells * p);
    let mut eps = DVector::zeros(p);
    for t in 0..truth.n_times() {
        for m in 0..truth.n_locations() {
            let mean = means[truth.state(t, m)];
            for e in eps.iter_mut() {
                *e = rng.sample::<f64, _>(StandardNormal);
            }
            let z = &factor * &eps;
            out.extend(z.iter().map(|v| v + mean));
        }
    }
    Ok(out)
}

/// Converts the last floor(P/2) features to categorical with K levels: inside
/// the state's (10%, 90%) marginal band the cell's own state is emitted with
/// probability 0.8 (the rest split evenly); outside the band levels are
/// uniform. Returns the mixed panel with integer timestamps 0..T-1.
pub fn categorize_features(
    continuous: &[f64],
    truth: &StateMatrix,
    spec: &ScenarioSpec,
    coords: Vec<[f64; 2]>,
    seed: u64,
) -> PanelDataset {
    let n_times = truth.n_times();
    let n_locations = truth.n_locations();
    let p = spec.p;
    assert_eq!(continuous.len(), n_times * n_locations * p);
    let n_categorical = p / 2;
    let first_categorical = p - n_categorical;
    let n_levels = spec.k;
    let means = spec.state_means();

    let level_names: Vec<String> = (1..=n_levels).map(|l| l.to_string()).collect();
    let features: Vec<Feature> = (0..p)
        .map(|j| {
            if j < first_categorical {
                Feature::continuous(format!("f{}", j + 1))
            } else {
                Feature::categorical(format!("f{}", j + 1), level_names.clone())
            }
        })
        .collect();
    let feature_spec = FeatureSpec::new(features).expect("valid generated spec");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(continuous.len());
    for t in 0..n_times {
        for m in 0..n_locations {
            let k = truth.state(t, m);
            let mean = means[k];
            for j in 0..p {
                let z = continuous[(t * n_locations + m) * p + j];
                if j < first_categorical {
                    values.push(Value::Continuous(z));
                    continue;
                }
                let in_band = z > mean - PROBIT_90 && z < mean + PROBIT_90;
                let level = if n_levels == 1 {
                    let _ = rng.random::<f64>();
                    0
                } else if in_band {
                    let u = rng.random::<f64>();
                    if u < 0.8 {
                        k
                    } else {
                        // Remaining mass split evenly over the other levels.
                        let slot = ((u - 0.8) / 0.2 * (n_levels - 1) as f64) as usize;
                        let slot = slot.min(n_levels - 2);
                        if slot < k {
                            slot
                        } else {
                            slot + 1
                        }
                    }
                } else {
                    rng.random_range(0..n_levels)
                };
                values.push(Value::Categorical(level));
            }
        }
    }

    let times = (0..n_times).map(|t| t as f64).collect();
    PanelDataset::new(values, times, Coords::Planar(coords), feature_spec)
        .expect("valid generated panel")
}

/// Drops a random subset of interior time points (never the first) so that
/// `floor(T_gen * (1 - fraction))` remain; retained rows keep their original
/// timestamps, producing gaps, and truth rows are dropped in lockstep.
pub fn inject_gaps(
    panel: &PanelDataset,
    truth: &StateMatrix,
    gap_fraction: f64,
    seed: u64,
) -> Result<(PanelDataset, StateMatrix)> {
    if gap_fraction == 0.0 {
        return Ok((panel.clone(), truth.clone()));
    }
    let generated = panel.n_times();
    // Nudge above the rounding error so products that are exactly integral
    // (e.g. 72 * (2/3)) do not floor one too low.
    let keep = (generated as f64 * (1.0 - gap_fraction) + 1e-9).floor() as usize;
    let n_drop = generated - keep;
    if keep == 0 || n_drop > generated - 1 {
        return Err(Error::NotEnoughTimePoints);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropped: Vec<usize> = rand::seq::index::sample(&mut rng, generated - 1, n_drop)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    dropped.sort_unstable();

    let retained: Vec<usize> = (0..generated).filter(|t| !dropped.contains(t)).collect();
    let n_locations = panel.n_locations();
    let n_features = panel.n_features();
    let mut values = Vec::with_capacity(keep * n_locations * n_features);
    let mut states = Vec::with_capacity(keep * n_locations);
    let mut times = Vec::with_capacity(keep);
    for &t in &retained {
        times.push(panel.times()[t]);
        for m in 0..n_locations {
            values.extend_from_slice(panel.row(t, m));
            states.push(truth.state(t, m));
        }
    }
    let data = PanelDataset::new(values, times, panel.coords().clone(), panel.spec().clone())?;
    let truth = StateMatrix::new(states, keep, n_locations, truth.k())?;
    Ok((data, truth))
}

/// Masks exactly `round(fraction * T*M*P)` uniformly chosen cells as missing,
/// redrawing (up to 100 times) if any feature would lose all observed values.
pub fn inject_missing(panel: &PanelDataset, fraction: f64, seed: u64) -> Result<PanelDataset> {
    if fraction == 0.0 {
        return Ok(panel.clone());
    }
    let n_features = panel.n_features();
    let n_cells = panel.n_times() * panel.n_locations() * n_features;
    let n_mask = (fraction * n_cells as f64).round() as usize;
    if n_mask == 0 {
        return Ok(panel.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_MISSING_REDRAWS {
        let mask = rand::seq::index::sample(&mut rng, n_cells, n_mask);
        let mut observed = vec![0usize; n_features];
        for (idx, v) in panel.values().iter().enumerate() {
            if !v.is_missing() {
                observed[idx % n_features] += 1;
            }
        }
        for idx in mask.iter() {
            if !panel.values()[idx].is_missing() {
                observed[idx % n_features] -= 1;
            }
        }
        if observed.contains(&0) {
            continue;
        }
        let mut values = panel.values().to_vec();
        for idx in mask.iter() {
            values[idx] = Value::Missing;
        }
        return panel.with_values(values);
    }
    Err(Error::MissingInjectionFailed(MAX_MISSING_REDRAWS))
}

/// Runs the full pipeline: locations, latent field, quantile slicing,
/// state-conditional features, categorical conversion, then gap and
/// missing-value injection. Pure function of the scenario.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<SimulatedPanel> {
    spec.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let loc_seed = master.random::<u64>();
    let field_seed = master.random::<u64>();
    let feature_seed = master.random::<u64>();
    let categorize_seed = master.random::<u64>();
    let gap_seed = master.random::<u64>();
    let missing_seed = master.random::<u64>();

    let generated = spec.generated_times();
    let coords = sample_locations(spec.m, loc_seed);
    let field = simulate_latent_field(&coords, generated, spec.alpha, spec.beta, field_seed)?;
    let truth_full = slice_states(&field, generated, spec.m, spec.k);
    let continuous = simulate_features(&truth_full, spec, feature_seed)?;
    let panel_full = categorize_features(&continuous, &truth_full, spec, coords, categorize_seed);
    let (panel, truth) = inject_gaps(&panel_full, &truth_full, spec.gap_fraction, gap_seed)?;
    debug_assert_eq!(panel.n_times(), spec.t);
    let data = inject_missing(&panel, spec.missing_fraction, missing_seed)?;
    Ok(SimulatedPanel {
        data,
        truth,
        scenario: spec.clone(),
    })
}
