//! Spatio-temporal jump model: unsupervised clustering of mixed-type,
//! geo-referenced time-series panels.
//!
//! The model assigns every (time, location) cell to one of K states by
//! minimizing Gower distance to state prototypes, penalizing temporal state
//! switches in inverse proportion to the elapsed time gap, and rewarding
//! agreement with nearby locations through an exponential-decay spatial
//! kernel. Missing cells are imputed iteratively with state prototypes.
//!
//! The crate also ships a synthetic-panel generator ([`simgen`]) and an
//! evaluation harness ([`eval`]) with balanced accuracy, label alignment,
//! grid search and a Monte Carlo runner.
//!
//! Multi-start fitting, Monte Carlo replicates and grid search run on rayon
//! when the default `parallel` feature is enabled; results are identical to
//! the sequential fallback. `STJM_THREADS` caps the worker count.

pub mod data;
pub mod error;
pub mod eval;
pub mod gower;
pub mod model;
pub mod objective;
mod par;
pub mod simgen;
pub mod spatial;

pub use data::{
    Coords, DistanceMetric, Feature, FeatureKind, FeatureSpec, Hyperparams, PanelDataset,
    PrototypeSet, StateMatrix, Value,
};
pub use error::{Error, Result};
pub use eval::{
    aligned_balanced_accuracy, balanced_accuracy, grid_search, run_monte_carlo, ExperimentReport,
    Method,
};
pub use gower::{feature_ranges, GowerMetric};
pub use model::{fit, kprototypes_fit, FitConfig, FitResult, PrototypeRule};
pub use objective::objective;
pub use simgen::{generate_scenario, ScenarioSpec, SimulatedPanel};
pub use spatial::SpatialWeights;
