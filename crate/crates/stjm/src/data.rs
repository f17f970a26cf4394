//! Panel data model: mixed-type observations indexed by (time, location, feature),
//! state assignments, prototypes and fitting hyperparameters.

use crate::error::{Error, Result};

/// A single cell of the panel: a continuous number, an index into the
/// feature's declared categorical levels, or missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Continuous(f64),
    Categorical(usize),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    /// Continuous payload, panics on other variants.
    pub fn as_continuous(&self) -> f64 {
        match self {
            Value::Continuous(x) => *x,
            other => panic!("expected continuous value, got {other:?}"),
        }
    }

    /// Categorical level index, panics on other variants.
    pub fn as_categorical(&self) -> usize {
        match self {
            Value::Categorical(l) => *l,
            other => panic!("expected categorical value, got {other:?}"),
        }
    }
}

/// Kind of one feature column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureKind {
    Continuous,
    /// Ordered list of admissible level names; cells store indices into it.
    Categorical {
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

impl Feature {
    pub fn continuous(name: impl Into<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Continuous,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Feature {
            name: name.into(),
            kind: FeatureKind::Categorical { levels },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous)
    }
}

/// Per-feature typing of a panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpec {
    features: Vec<Feature>,
}

impl FeatureSpec {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidPanel("feature spec is empty".into()));
        }
        for f in &features {
            if let FeatureKind::Categorical { levels } = &f.kind {
                if levels.is_empty() {
                    return Err(Error::InvalidPanel(format!(
                        "categorical feature `{}` declares no levels",
                        f.name
                    )));
                }
                let mut seen = levels.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != levels.len() {
                    return Err(Error::InvalidPanel(format!(
                        "categorical feature `{}` declares duplicate levels",
                        f.name
                    )));
                }
            }
        }
        Ok(FeatureSpec { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, p: usize) -> &Feature {
        &self.features[p]
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn n_continuous(&self) -> usize {
        self.features.iter().filter(|f| f.is_continuous()).count()
    }
}

/// Spatial coordinates of the panel's locations.
#[derive(Debug, Clone, PartialEq)]
pub enum Coords {
    /// (x, y) pairs in arbitrary planar units.
    Planar(Vec<[f64; 2]>),
    /// (latitude, longitude) pairs in degrees.
    Geographic(Vec<[f64; 2]>),
}

impl Coords {
    pub fn len(&self) -> usize {
        match self {
            Coords::Planar(v) | Coords::Geographic(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> &[[f64; 2]] {
        match self {
            Coords::Planar(v) | Coords::Geographic(v) => v,
        }
    }

    fn validate(&self) -> Result<()> {
        let pts = self.points();
        if pts.is_empty() {
            return Err(Error::InvalidCoordinates("no locations".into()));
        }
        for (i, c) in pts.iter().enumerate() {
            if !c[0].is_finite() || !c[1].is_finite() {
                return Err(Error::InvalidCoordinates(format!(
                    "location {i} has non-finite coordinates"
                )));
            }
        }
        if let Coords::Geographic(v) = self {
            for (i, c) in v.iter().enumerate() {
                if c[0].abs() > 90.0 || c[1].abs() > 180.0 {
                    return Err(Error::InvalidCoordinates(format!(
                        "location {i}: lat/lon ({}, {}) out of range",
                        c[0], c[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// T x M x P array of mixed-type observations with observation times and
/// location coordinates. Cell (t, m, p) is stored at `t * M * P + m * P + p`,
/// so the feature vector of one (time, location) cell is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    values: Vec<Value>,
    times: Vec<f64>,
    coords: Coords,
    spec: FeatureSpec,
    n_times: usize,
    n_locations: usize,
    n_features: usize,
}

impl PanelDataset {
    pub fn new(
        values: Vec<Value>,
        times: Vec<f64>,
        coords: Coords,
        spec: FeatureSpec,
    ) -> Result<Self> {
        let n_times = times.len();
        let n_locations = coords.len();
        let n_features = spec.len();
        if n_times == 0 {
            return Err(Error::InvalidPanel("no time points".into()));
        }
        if values.len() != n_times * n_locations * n_features {
            return Err(Error::InvalidPanel(format!(
                "value buffer has {} cells, expected {}x{}x{}",
                values.len(),
                n_times,
                n_locations,
                n_features
            )));
        }
        if times
            .windows(2)
            .any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less))
        {
            return Err(Error::InvalidPanel(
                "observation times must be strictly increasing".into(),
            ));
        }
        coords.validate()?;
        for (idx, v) in values.iter().enumerate() {
            let p = idx % n_features;
            match (v, &spec.feature(p).kind) {
                (Value::Continuous(x), FeatureKind::Continuous) => {
                    if !x.is_finite() {
                        return Err(Error::InvalidPanel(format!(
                            "non-finite value in feature `{}`",
                            spec.feature(p).name
                        )));
                    }
                }
                (Value::Categorical(l), FeatureKind::Categorical { levels }) => {
                    if *l >= levels.len() {
                        return Err(Error::InvalidPanel(format!(
                            "level index {l} out of range for feature `{}`",
                            spec.feature(p).name
                        )));
                    }
                }
                (Value::Missing, _) => {}
                _ => {
                    return Err(Error::InvalidPanel(format!(
                        "value kind does not match feature `{}`",
                        spec.feature(p).name
                    )));
                }
            }
        }
        Ok(PanelDataset {
            values,
            times,
            coords,
            spec,
            n_times,
            n_locations,
            n_features,
        })
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coords(&self) -> &Coords {
        &self.coords
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    #[inline]
    fn idx(&self, t: usize, m: usize, p: usize) -> usize {
        (t * self.n_locations + m) * self.n_features + p
    }

    #[inline]
    pub fn value(&self, t: usize, m: usize, p: usize) -> Value {
        self.values[self.idx(t, m, p)]
    }

    /// Feature vector of cell (t, m).
    #[inline]
    pub fn row(&self, t: usize, m: usize) -> &[Value] {
        let start = (t * self.n_locations + m) * self.n_features;
        &self.values[start..start + self.n_features]
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(Value::is_missing)
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_missing()).count()
    }

    /// Replaces the value buffer, revalidating against the existing shape.
    pub fn with_values(&self, values: Vec<Value>) -> Result<Self> {
        PanelDataset::new(
            values,
            self.times.clone(),
            self.coords.clone(),
            self.spec.clone(),
        )
    }

    pub(crate) fn set_value(&mut self, t: usize, m: usize, p: usize, v: Value) {
        let i = self.idx(t, m, p);
        self.values[i] = v;
    }
}

/// T x M assignment of each (time, location) cell to a state in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMatrix {
    states: Vec<usize>,
    n_times: usize,
    n_locations: usize,
    k: usize,
}

impl StateMatrix {
    pub fn new(states: Vec<usize>, n_times: usize, n_locations: usize, k: usize) -> Result<Self> {
        if states.len() != n_times * n_locations {
            return Err(Error::InvalidPanel(format!(
                "state buffer has {} cells, expected {}x{}",
                states.len(),
                n_times,
                n_locations
            )));
        }
        if k == 0 {
            return Err(Error::InvalidHyperparams("k must be at least 1".into()));
        }
        if states.iter().any(|&s| s >= k) {
            return Err(Error::InvalidPanel(format!("state out of range 0..{k}")));
        }
        Ok(StateMatrix {
            states,
            n_times,
            n_locations,
            k,
        })
    }

    pub fn filled(state: usize, n_times: usize, n_locations: usize, k: usize) -> Result<Self> {
        Self::new(vec![state; n_times * n_locations], n_times, n_locations, k)
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn n_locations(&self) -> usize {
        self.n_locations
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn state(&self, t: usize, m: usize) -> usize {
        self.states[t * self.n_locations + m]
    }

    #[inline]
    pub fn set_state(&mut self, t: usize, m: usize, s: usize) {
        debug_assert!(s < self.k);
        self.states[t * self.n_locations + m] = s;
    }

    /// State sequence of one location over time.
    pub fn location_sequence(&self, m: usize) -> Vec<usize> {
        (0..self.n_times).map(|t| self.state(t, m)).collect()
    }

    pub fn set_location_sequence(&mut self, m: usize, seq: &[usize]) {
        assert_eq!(seq.len(), self.n_times);
        for (t, &s) in seq.iter().enumerate() {
            self.set_state(t, m, s);
        }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    /// Applies a relabeling: state s becomes `perm[s]`.
    pub fn relabeled(&self, perm: &[usize]) -> StateMatrix {
        assert_eq!(perm.len(), self.k);
        StateMatrix {
            states: self.states.iter().map(|&s| perm[s]).collect(),
            n_times: self.n_times,
            n_locations: self.n_locations,
            k: self.k,
        }
    }

    /// Fraction of cells in each state.
    pub fn occupancy(&self) -> Vec<f64> {
        let mut counts = vec![0usize; self.k];
        for &s in &self.states {
            counts[s] += 1;
        }
        let total = self.states.len() as f64;
        counts.iter().map(|&c| c as f64 / total).collect()
    }
}

/// Distance metric for the spatial weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Euclidean,
    Haversine,
}

/// K rows of per-feature prototypes, typed like the features.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    values: Vec<Value>,
    k: usize,
    n_features: usize,
}

impl PrototypeSet {
    pub fn new(values: Vec<Value>, k: usize, spec: &FeatureSpec) -> Result<Self> {
        let n_features = spec.len();
        if values.len() != k * n_features {
            return Err(Error::InvalidPanel(format!(
                "prototype buffer has {} entries, expected {}x{}",
                values.len(),
                k,
                n_features
            )));
        }
        for (idx, v) in values.iter().enumerate() {
            let p = idx % n_features;
            match (v, &spec.feature(p).kind) {
                (Value::Continuous(x), FeatureKind::Continuous) if x.is_finite() => {}
                (Value::Categorical(l), FeatureKind::Categorical { levels })
                    if *l < levels.len() => {}
                _ => {
                    return Err(Error::InvalidPanel(format!(
                        "prototype entry for feature `{}` is missing or mistyped",
                        spec.feature(p).name
                    )));
                }
            }
        }
        Ok(PrototypeSet {
            values,
            k,
            n_features,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[Value] {
        &self.values[k * self.n_features..(k + 1) * self.n_features]
    }

    pub fn value(&self, k: usize, p: usize) -> Value {
        self.values[k * self.n_features + p]
    }

    /// Reorders rows: new row s is old row `perm[s]`.
    pub fn permuted(&self, perm: &[usize]) -> PrototypeSet {
        assert_eq!(perm.len(), self.k);
        let mut values = Vec::with_capacity(self.values.len());
        for &old in perm {
            values.extend_from_slice(self.row(old));
        }
        PrototypeSet {
            values,
            k: self.k,
            n_features: self.n_features,
        }
    }
}

/// Model hyperparameters and fitting controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Number of states.
    pub k: usize,
    /// Temporal jump penalty, divided by the elapsed time gap at each transition.
    pub lambda: f64,
    /// Spatial agreement reward per matching neighbor, weighted by exp(-distance/scale).
    pub gamma: f64,
    pub distance_metric: DistanceMetric,
    /// Divides spatial distances before exponentiation.
    pub distance_scale: f64,
    /// Optional neighborhood cutoff: weights for distances above it are zeroed.
    pub cutoff: Option<f64>,
    pub n_starts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Hyperparams {
    pub fn new(k: usize, lambda: f64, gamma: f64) -> Self {
        Hyperparams {
            k,
            lambda,
            gamma,
            ..Hyperparams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidHyperparams("k must be at least 1".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidHyperparams("lambda must be >= 0".into()));
        }
        if self.gamma.is_nan() || self.gamma < 0.0 {
            return Err(Error::InvalidHyperparams("gamma must be >= 0".into()));
        }
        if self.distance_scale.is_nan() || self.distance_scale <= 0.0 {
            return Err(Error::InvalidHyperparams(
                "distance_scale must be > 0".into(),
            ));
        }
        if self.n_starts == 0 || self.max_iter == 0 {
            return Err(Error::InvalidHyperparams(
                "n_starts and max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            k: 3,
            lambda: 0.05,
            gamma: 0.05,
            distance_metric: DistanceMetric::Euclidean,
            distance_scale: 1.0,
            cutoff: None,
            n_starts: 10,
            max_iter: 10,
            seed: 0,
        }
    }
}
