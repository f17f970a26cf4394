//! Balanced accuracy with label alignment, hyperparameter grid search, and
//! the Monte Carlo experiment runner.

use itertools::Itertools;

use crate::data::{Hyperparams, PanelDataset, StateMatrix};
use crate::error::{Error, Result};
use crate::model::{fit, kprototypes_fit, FitConfig};
use crate::par;
use crate::simgen::{generate_scenario, ScenarioSpec};

/// Exhaustive label alignment is K!; past this the search is impractical.
const MAX_ALIGN_STATES: usize = 8;

/// K x K contingency counts between true and estimated states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionTensor {
    k: usize,
    counts: Vec<usize>,
}

impl ConfusionTensor {
    pub fn from_states(truth: &StateMatrix, est: &StateMatrix) -> Result<Self> {
        if truth.n_times() != est.n_times() || truth.n_locations() != est.n_locations() {
            return Err(Error::InvalidPanel(
                "truth and estimate shapes differ".into(),
            ));
        }
        let k = truth.k().max(est.k());
        let mut counts = vec![0usize; k * k];
        for (&t, &e) in truth.states().iter().zip(est.states()) {
            counts[t * k + e] += 1;
        }
        Ok(ConfusionTensor { k, counts })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, truth: usize, est: usize) -> usize {
        self.counts[truth * self.k + est]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// True positives of class k under the identity labeling.
    pub fn true_positives(&self, class: usize) -> usize {
        self.count(class, class)
    }

    /// False negatives of class k under the identity labeling.
    pub fn false_negatives(&self, class: usize) -> usize {
        self.row_total(class) - self.true_positives(class)
    }

    fn row_total(&self, class: usize) -> usize {
        (0..self.k).map(|e| self.count(class, e)).sum()
    }

    /// Classes that never occur in the truth; excluded from the BAC mean.
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.k).filter(|&c| self.row_total(c) == 0).collect()
    }

    /// Mean per-class recall over the classes present in the truth.
    pub fn balanced_accuracy(&self) -> Result<f64> {
        self.balanced_accuracy_under(&(0..self.k).collect::<Vec<_>>())
    }

    /// BAC after relabeling estimates by `perm` (estimated s becomes perm[s]).
    fn balanced_accuracy_under(&self, perm: &[usize]) -> Result<f64> {
        let mut inverse = vec![0usize; self.k];
        for (est, &new) in perm.iter().enumerate() {
            inverse[new] = est;
        }
        let mut sum = 0.0;
        let mut present = 0usize;
        for (class, &est) in inverse.iter().enumerate() {
            let row = self.row_total(class);
            if row == 0 {
                continue;
            }
            present += 1;
            sum += self.count(class, est) as f64 / row as f64;
        }
        if present == 0 {
            return Err(Error::EmptyTruth);
        }
        Ok(sum / present as f64)
    }
}

/// Permutation of estimated labels maximizing BAC against the truth, found by
/// exhaustive search over all K! relabelings; ties go to the lexicographically
/// smallest permutation.
pub fn align_labels(truth: &StateMatrix, est: &StateMatrix) -> Result<Vec<usize>> {
    let confusion = ConfusionTensor::from_states(truth, est)?;
    let k = confusion.k();
    if k > MAX_ALIGN_STATES {
        return Err(Error::TooManyStates {
            max: MAX_ALIGN_STATES,
            got: k,
        });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..k).permutations(k) {
        let bac = confusion.balanced_accuracy_under(&perm)?;
        let better = match &best {
            None => true,
            Some((_, b)) => bac > *b,
        };
        if better {
            best = Some((perm, bac));
        }
    }
    Ok(best.expect("at least one permutation").0)
}

/// Mean per-class recall between aligned labelings; classes absent from the
/// truth are excluded from the mean.
pub fn balanced_accuracy(truth: &StateMatrix, est: &StateMatrix) -> Result<f64> {
    ConfusionTensor::from_states(truth, est)?.balanced_accuracy()
}

/// Aligns the estimated labels first, then scores. The estimate may use fewer
/// states than the truth (the permutation spans the larger label set).
pub fn aligned_balanced_accuracy(truth: &StateMatrix, est: &StateMatrix) -> Result<f64> {
    let perm = align_labels(truth, est)?;
    let relabeled = StateMatrix::new(
        est.states().iter().map(|&s| perm[s]).collect(),
        est.n_times(),
        est.n_locations(),
        perm.len(),
    )?;
    balanced_accuracy(truth, &relabeled)
}

/// Clustering method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Stjm,
    Kprototypes,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Stjm => write!(f, "stjm"),
            Method::Kprototypes => write!(f, "kprot"),
        }
    }
}

/// Result of a hyperparameter grid search.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_lambda: f64,
    pub best_gamma: f64,
    pub best_bac: f64,
    /// BAC at every grid point: `surface[i][j]` scores `(lambda_grid[i], gamma_grid[j])`.
    pub surface: Vec<Vec<f64>>,
}

/// Fits the model at every (lambda, gamma) grid point and returns the pair
/// maximizing BAC against the truth; ties prefer smaller lambda, then smaller
/// gamma.
pub fn grid_search(
    panel: &PanelDataset,
    truth: &StateMatrix,
    lambda_grid: &[f64],
    gamma_grid: &[f64],
    cfg: &FitConfig,
) -> Result<GridSearchResult> {
    if lambda_grid.is_empty() || gamma_grid.is_empty() {
        return Err(Error::InvalidHyperparams(
            "empty hyperparameter grid".into(),
        ));
    }
    let n_gamma = gamma_grid.len();
    let scores = par::map_indexed(lambda_grid.len() * n_gamma, |idx| -> Result<f64> {
        let mut point = cfg.clone();
        point.hyperparams.lambda = lambda_grid[idx / n_gamma];
        point.hyperparams.gamma = gamma_grid[idx % n_gamma];
        let result = fit(panel, &point)?;
        aligned_balanced_accuracy(truth, &result.states)
    });

    let mut surface = vec![vec![0.0; n_gamma]; lambda_grid.len()];
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for (idx, score) in scores.into_iter().enumerate() {
        let (i, j) = (idx / n_gamma, idx % n_gamma);
        let bac = score?;
        surface[i][j] = bac;
        if bac > best.2 {
            best = (i, j, bac);
        }
    }
    Ok(GridSearchResult {
        best_lambda: lambda_grid[best.0],
        best_gamma: gamma_grid[best.1],
        best_bac: best.2,
        surface,
    })
}

/// One (scenario, method) aggregate of the Monte Carlo study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ReportRow {
    pub scenario: ScenarioSpec,
    pub method: Method,
    pub lambda: f64,
    pub gamma: f64,
    pub mean_bac: f64,
    pub sd_bac: f64,
    pub n_reps: usize,
    /// Per-replicate scores in replicate order.
    pub bac: Vec<f64>,
}

/// Monte Carlo study results: one row per (scenario, method).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub n_reps: usize,
    pub seed: u64,
}

impl ExperimentReport {
    /// Plot-ready CSV with one row per (scenario, method).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("scenario,method,lambda,gamma,mean_bac,sd_bac,n_reps\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                scenario_label(&row.scenario),
                row.method,
                row.lambda,
                row.gamma,
                row.mean_bac,
                row.sd_bac,
                row.n_reps
            ));
        }
        out
    }
}

/// Compact scenario descriptor used in report tables.
pub fn scenario_label(s: &ScenarioSpec) -> String {
    format!(
        "T={} M={} P={} gaps={:.2} missing={:.2}",
        s.t, s.m, s.p, s.gap_fraction, s.missing_fraction
    )
}

fn derived_seed(base: u64, scenario: usize, rep: usize, stream: u64) -> u64 {
    let mut z = base
        ^ (scenario as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rep as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (stream + 1).wrapping_mul(0x94D0_49BB_1331_11EB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `n_reps` replicates of every scenario: generates a panel with a
/// derived seed, fits each method on the same panel, aligns labels and scores
/// BAC. Replicates run in parallel; aggregation is ordered by (scenario,
/// method, replicate), so the report is deterministic given the seed. A failed
/// replicate aborts the run with its seed attached.
pub fn run_monte_carlo(
    scenarios: &[ScenarioSpec],
    methods: &[Method],
    n_reps: usize,
    lambda: f64,
    gamma: f64,
    fit_template: &FitConfig,
    seed: u64,
) -> Result<ExperimentReport> {
    if n_reps == 0 {
        return Err(Error::InvalidScenario("n_reps must be at least 1".into()));
    }
    let n_scenarios = scenarios.len();
    let replicate = |idx: usize| -> std::result::Result<Vec<f64>, (u64, Error)> {
        let (s_idx, rep) = (idx / n_reps, idx % n_reps);
        let data_seed = derived_seed(seed, s_idx, rep, 0);
        let fit_seed = derived_seed(seed, s_idx, rep, 1);
        let scenario = scenarios[s_idx].clone().with_seed(data_seed);
        let sim = generate_scenario(&scenario).map_err(|e| (data_seed, e))?;
        let mut scores = Vec::with_capacity(methods.len());
        for method in methods {
            let mut cfg = fit_template.clone();
            cfg.hyperparams.k = scenario.k;
            cfg.hyperparams.lambda = lambda;
            cfg.hyperparams.gamma = gamma;
            cfg.hyperparams.seed = fit_seed;
            let result = match method {
                Method::Stjm => fit(&sim.data, &cfg),
                Method::Kprototypes => kprototypes_fit(&sim.data, &cfg),
            }
            .map_err(|e| (fit_seed, e))?;
            scores.push(
                aligned_balanced_accuracy(&sim.truth, &result.states).map_err(|e| (fit_seed, e))?,
            );
        }
        Ok(scores)
    };

    let outcomes = par::map_indexed(n_scenarios * n_reps, replicate);
    let mut per_cell: Vec<Vec<f64>> = Vec::with_capacity(n_scenarios * n_reps);
    for outcome in outcomes {
        match outcome {
            Ok(scores) => per_cell.push(scores),
            Err((bad_seed, source)) => {
                return Err(Error::ReplicateFailed {
                    seed: bad_seed,
                    source: Box::new(source),
                })
            }
        }
    }

    let mut rows = Vec::with_capacity(n_scenarios * methods.len());
    for (s_idx, scenario) in scenarios.iter().enumerate() {
        for (m_idx, &method) in methods.iter().enumerate() {
            let bac: Vec<f64> = (0..n_reps)
                .map(|rep| per_cell[s_idx * n_reps + rep][m_idx])
                .collect();
            let mean = bac.iter().sum::<f64>() / n_reps as f64;
            let sd = if n_reps > 1 {
                (bac.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n_reps - 1) as f64).sqrt()
            } else {
                0.0
            };
            rows.push(ReportRow {
                scenario: scenario.clone(),
                method,
                lambda: if method == Method::Kprototypes {
                    0.0
                } else {
                    lambda
                },
                gamma: if method == Method::Kprototypes {
                    0.0
                } else {
                    gamma
                },
                mean_bac: mean,
                sd_bac: sd,
                n_reps,
                bac,
            });
        }
    }
    Ok(ExperimentReport { rows, n_reps, seed })
}

/// Default fitting configuration for simulation studies: penalties supplied
/// per call, Euclidean distances at unit scale.
pub fn simulation_fit_config() -> FitConfig {
    FitConfig {
        hyperparams: Hyperparams::default(),
        ..FitConfig::default()
    }
}
