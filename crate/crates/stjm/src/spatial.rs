//! Pairwise spatial distances and the exponential-decay weight matrix.

use crate::data::{Coords, DistanceMetric};
use crate::error::{Error, Result};

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Symmetric M x M weight matrix `w[i][m] = exp(-delta[i][m] / scale)` with a
/// zero diagonal, so a location never rewards itself. An optional cutoff zeroes
/// weights for pairs farther apart than the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialWeights {
    n: usize,
    distances: Vec<f64>,
    weights: Vec<f64>,
}

impl SpatialWeights {
    pub fn compute(
        coords: &Coords,
        metric: DistanceMetric,
        distance_scale: f64,
        cutoff: Option<f64>,
    ) -> Result<Self> {
        if distance_scale.is_nan() || distance_scale <= 0.0 {
            return Err(Error::InvalidHyperparams(
                "distance_scale must be > 0".into(),
            ));
        }
        if metric == DistanceMetric::Haversine && !matches!(coords, Coords::Geographic(_)) {
            return Err(Error::InvalidCoordinates(
                "haversine metric requires geographic (lat, lon) coordinates".into(),
            ));
        }
        let pts = coords.points();
        let n = pts.len();
        let mut distances = vec![0.0; n * n];
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = match metric {
                    DistanceMetric::Euclidean => euclidean(pts[i], pts[j]),
                    DistanceMetric::Haversine => haversine_km(pts[i], pts[j]),
                };
                let w = match cutoff {
                    Some(cut) if d > cut => 0.0,
                    _ => (-d / distance_scale).exp(),
                };
                distances[i * n + j] = d;
                distances[j * n + i] = d;
                weights[i * n + j] = w;
                weights[j * n + i] = w;
            }
        }
        Ok(SpatialWeights {
            n,
            distances,
            weights,
        })
    }

    pub fn n_locations(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n + j]
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Row of weights for location m (`w[m][i]`, zero at i == m).
    #[inline]
    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n..(m + 1) * self.n]
    }
}

fn euclidean(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Great-circle distance in kilometres between (lat, lon) points in degrees.
pub fn haversine_km(a: [f64; 2], b: [f64; 2]) -> f64 {
    let lat1 = a[0].to_radians();
    let lat2 = b[0].to_radians();
    let dlat = (b[0] - a[0]).to_radians();
    let dlon = (b[1] - a[1]).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn coincident_points_weight_one() {
        let coords = Coords::Planar(vec![[2.0, 2.0], [2.0, 2.0]]);
        let w = SpatialWeights::compute(&coords, DistanceMetric::Euclidean, 1.0, None).unwrap();
        assert_eq!(w.distance(0, 1), 0.0);
        assert_eq!(w.weight(0, 1), 1.0);
        assert_eq!(w.weight(0, 0), 0.0);
    }

    #[test]
    fn pythagorean_distance_and_decay() {
        let coords = Coords::Planar(vec![[0.0, 0.0], [3.0, 4.0]]);
        let w = SpatialWeights::compute(&coords, DistanceMetric::Euclidean, 1.0, None).unwrap();
        assert_eq!(w.distance(0, 1), 5.0);
        assert_relative_eq!(w.weight(0, 1), (-5.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(w.weight(0, 1), 6.737946999085467e-3, max_relative = 1e-12);
    }

    #[test]
    fn haversine_matches_law_of_cosines_oracle() {
        // Independent great-circle formula: spherical law of cosines.
        let a: [f64; 2] = [1.30, 103.80];
        let b: [f64; 2] = [1.35, 103.90];
        let (lat1, lon1) = (a[0].to_radians(), a[1].to_radians());
        let (lat2, lon2) = (b[0].to_radians(), b[1].to_radians());
        let oracle = 6371.0
            * (lat1.sin() * lat2.sin() + lat1.cos() * lat2.cos() * (lon2 - lon1).cos()).acos();

        let d = haversine_km(a, b);
        assert_relative_eq!(d, oracle, max_relative = 1e-9);

        let coords = Coords::Geographic(vec![a, b]);
        let w = SpatialWeights::compute(&coords, DistanceMetric::Haversine, 2.0, None).unwrap();
        assert_relative_eq!(w.weight(0, 1), (-d / 2.0).exp(), max_relative = 1e-12);
    }

    #[test]
    fn haversine_requires_geographic_coords() {
        let coords = Coords::Planar(vec![[0.0, 0.0], [1.0, 1.0]]);
        assert!(SpatialWeights::compute(&coords, DistanceMetric::Haversine, 1.0, None).is_err());
    }

    #[test]
    fn cutoff_zeroes_far_pairs() {
        let coords = Coords::Planar(vec![[0.0, 0.0], [3.0, 4.0], [0.1, 0.0]]);
        let w =
            SpatialWeights::compute(&coords, DistanceMetric::Euclidean, 1.0, Some(1.0)).unwrap();
        assert_eq!(w.weight(0, 1), 0.0);
        assert!(w.weight(0, 2) > 0.0);
    }

    proptest! {
        #[test]
        fn symmetric_zero_diagonal_and_scale_invariant(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..6),
            c in 0.5f64..4.0,
        ) {
            let base: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
            let scaled: Vec<[f64; 2]> = base.iter().map(|p| [p[0] * c, p[1] * c]).collect();
            let w1 = SpatialWeights::compute(&Coords::Planar(base), DistanceMetric::Euclidean, 1.0, None).unwrap();
            let w2 = SpatialWeights::compute(&Coords::Planar(scaled), DistanceMetric::Euclidean, c, None).unwrap();
            for i in 0..w1.n_locations() {
                prop_assert_eq!(w1.weight(i, i), 0.0);
                for j in 0..w1.n_locations() {
                    prop_assert_eq!(w1.weight(i, j), w1.weight(j, i));
                    if i != j {
                        prop_assert!(w1.weight(i, j) > 0.0 && w1.weight(i, j) <= 1.0);
                    }
                    prop_assert!((w1.weight(i, j) - w2.weight(i, j)).abs() < 1e-12);
                }
            }
        }
    }
}
