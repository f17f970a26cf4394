//! Gower dissimilarity for mixed-type feature vectors.
//!
//! Continuous features contribute `|x - y| / range`, clamped to [0, 1];
//! categorical features contribute a mismatch indicator. The result is the
//! unweighted mean over features, so it always lies in [0, 1].

use crate::data::{FeatureKind, FeatureSpec, PanelDataset, Value};
use crate::error::{Error, Result};

/// Per-feature normalization ranges computed from observed values only.
///
/// For continuous feature p the range is max - min over every observed cell;
/// a constant feature gets range 1 so it contributes 0 to every distance.
/// Categorical features record 1 (the range is unused for them).
pub fn feature_ranges(data: &PanelDataset) -> Result<Vec<f64>> {
    let spec = data.spec();
    let mut ranges = vec![1.0; spec.len()];
    for (p, feature) in spec.features().iter().enumerate() {
        if !feature.is_continuous() {
            continue;
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut observed = false;
        for t in 0..data.n_times() {
            for m in 0..data.n_locations() {
                if let Value::Continuous(x) = data.value(t, m, p) {
                    min = min.min(x);
                    max = max.max(x);
                    observed = true;
                }
            }
        }
        if !observed {
            return Err(Error::FullyMissingFeature(feature.name.clone()));
        }
        let range = max - min;
        ranges[p] = if range > 0.0 { range } else { 1.0 };
    }
    Ok(ranges)
}

/// Gower distance with normalization ranges frozen at construction.
#[derive(Debug, Clone)]
pub struct GowerMetric {
    kinds: Vec<GowerKind>,
    ranges: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GowerKind {
    Continuous,
    Categorical,
}

impl GowerMetric {
    /// Builds the metric from the observed values of `data`; missing cells are
    /// ignored when computing ranges.
    pub fn from_observed(data: &PanelDataset) -> Result<Self> {
        let ranges = feature_ranges(data)?;
        Ok(Self::with_ranges(data.spec(), ranges))
    }

    pub fn with_ranges(spec: &FeatureSpec, ranges: Vec<f64>) -> Self {
        assert_eq!(ranges.len(), spec.len());
        let kinds = spec
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Continuous => GowerKind::Continuous,
                FeatureKind::Categorical { .. } => GowerKind::Categorical,
            })
            .collect();
        GowerMetric { kinds, ranges }
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    /// Distance between two fully observed feature vectors.
    ///
    /// Panics if the vectors do not match the feature spec or contain missing
    /// cells; inside the fitting loop data is always imputed first.
    #[inline]
    pub fn distance(&self, x: &[Value], y: &[Value]) -> f64 {
        assert_eq!(x.len(), self.kinds.len(), "feature count mismatch");
        assert_eq!(y.len(), self.kinds.len(), "feature count mismatch");
        let mut total = 0.0;
        for p in 0..self.kinds.len() {
            total += self.feature_distance(p, x[p], y[p]);
        }
        total / self.kinds.len() as f64
    }

    /// Fallible variant of [`GowerMetric::distance`].
    pub fn try_distance(&self, x: &[Value], y: &[Value]) -> Result<f64> {
        if x.len() != self.kinds.len() || y.len() != self.kinds.len() {
            return Err(Error::FeatureCountMismatch {
                expected: self.kinds.len(),
                got: if x.len() != self.kinds.len() {
                    x.len()
                } else {
                    y.len()
                },
            });
        }
        Ok(self.distance(x, y))
    }

    #[inline]
    fn feature_distance(&self, p: usize, a: Value, b: Value) -> f64 {
        match self.kinds[p] {
            GowerKind::Continuous => {
                let d = (a.as_continuous() - b.as_continuous()).abs() / self.ranges[p];
                d.min(1.0)
            }
            GowerKind::Categorical => {
                if a.as_categorical() == b.as_categorical() {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Coords, Feature};
    use proptest::prelude::*;

    fn mixed_spec() -> FeatureSpec {
        FeatureSpec::new(vec![
            Feature::continuous("x"),
            Feature::categorical("c", vec!["a".into(), "b".into()]),
        ])
        .unwrap()
    }

    fn metric(ranges: Vec<f64>) -> GowerMetric {
        GowerMetric::with_ranges(&mixed_spec(), ranges)
    }

    #[test]
    fn ranges_from_observed_values() {
        let spec = FeatureSpec::new(vec![Feature::continuous("x")]).unwrap();
        let panel = PanelDataset::new(
            vec![
                Value::Continuous(2.0),
                Value::Continuous(7.0),
                Value::Continuous(4.0),
            ],
            vec![0.0, 1.0, 2.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        assert_eq!(feature_ranges(&panel).unwrap(), vec![5.0]);
    }

    #[test]
    fn constant_feature_contributes_zero() {
        let spec = FeatureSpec::new(vec![Feature::continuous("x")]).unwrap();
        let panel = PanelDataset::new(
            vec![
                Value::Continuous(3.0),
                Value::Continuous(3.0),
                Value::Continuous(3.0),
            ],
            vec![0.0, 1.0, 2.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        let m = GowerMetric::from_observed(&panel).unwrap();
        assert_eq!(m.ranges(), &[1.0]);
        assert_eq!(
            m.distance(&[Value::Continuous(3.0)], &[Value::Continuous(3.0)]),
            0.0
        );
    }

    #[test]
    fn fully_missing_feature_errors() {
        let spec = mixed_spec();
        let panel = PanelDataset::new(
            vec![Value::Missing, Value::Categorical(0)],
            vec![0.0],
            Coords::Planar(vec![[0.0, 0.0]]),
            spec,
        )
        .unwrap();
        assert!(matches!(
            feature_ranges(&panel),
            Err(Error::FullyMissingFeature(name)) if name == "x"
        ));
    }

    #[test]
    fn hand_computed_mixed_distance() {
        let m = metric(vec![10.0, 1.0]);
        let x = [Value::Continuous(2.0), Value::Categorical(0)];
        let y = [Value::Continuous(7.0), Value::Categorical(0)];
        assert_eq!(m.distance(&x, &y), 0.25);
    }

    #[test]
    fn maximal_disagreement_is_one() {
        let m = metric(vec![10.0, 1.0]);
        let x = [Value::Continuous(0.0), Value::Categorical(0)];
        let y = [Value::Continuous(10.0), Value::Categorical(1)];
        assert_eq!(m.distance(&x, &y), 1.0);
    }

    #[test]
    fn identical_vectors_have_zero_distance() {
        let m = metric(vec![10.0, 1.0]);
        let x = [Value::Continuous(4.2), Value::Categorical(1)];
        assert_eq!(m.distance(&x, &x), 0.0);
    }

    #[test]
    fn length_mismatch_errors() {
        let m = metric(vec![10.0, 1.0]);
        let x = [Value::Continuous(4.2)];
        let y = [Value::Continuous(4.2), Value::Categorical(1)];
        assert!(matches!(
            m.try_distance(&x, &y),
            Err(Error::FeatureCountMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn contribution_clamped_to_unit_interval() {
        // Values outside the observed range (e.g. transient imputations) are clamped.
        let m = metric(vec![1.0, 1.0]);
        let x = [Value::Continuous(0.0), Value::Categorical(0)];
        let y = [Value::Continuous(5.0), Value::Categorical(0)];
        assert_eq!(m.distance(&x, &y), 0.5);
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_zero_iff_equal(
            x0 in -50.0f64..50.0, y0 in -50.0f64..50.0,
            xc in 0usize..2, yc in 0usize..2,
            range in 0.5f64..20.0,
        ) {
            let m = metric(vec![range, 1.0]);
            let x = [Value::Continuous(x0), Value::Categorical(xc)];
            let y = [Value::Continuous(y0), Value::Categorical(yc)];
            let dxy = m.distance(&x, &y);
            let dyx = m.distance(&y, &x);
            prop_assert_eq!(dxy, dyx);
            prop_assert!((0.0..=1.0).contains(&dxy));
            let clamped_equal = ((x0 - y0).abs() / range).min(1.0) == 0.0 && xc == yc;
            prop_assert_eq!(dxy == 0.0, clamped_equal);
        }
    }
}
