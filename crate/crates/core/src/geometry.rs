//! Treated-control distances and their standardization onto the
//! propensity-score scale.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{DapsmError, Result};

/// Mean earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A point in the study region. For the geodesic metric `x` is longitude and
/// `y` latitude, both in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Location { x, y }
    }

    fn validate(&self, metric: Metric) -> Result<()> {
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(DapsmError::input(format!(
                "non-finite coordinate ({}, {})",
                self.x, self.y
            )));
        }
        if metric == Metric::Geodesic
            && (!(-180.0..=180.0).contains(&self.x) || !(-90.0..=90.0).contains(&self.y))
        {
            return Err(DapsmError::input(format!(
                "longitude/latitude ({}, {}) out of range",
                self.x, self.y
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    /// Great-circle distance in km, haversine formula.
    Geodesic,
}

impl Metric {
    pub fn distance(self, a: Location, b: Location) -> f64 {
        match self {
            Metric::Euclidean => (a.x - b.x).hypot(a.y - b.y),
            Metric::Geodesic => haversine_km(a, b),
        }
    }

    pub fn unit_label(self) -> &'static str {
        match self {
            Metric::Euclidean => "distance",
            Metric::Geodesic => "distance_km",
        }
    }
}

/// Great-circle distance between two (longitude, latitude) points in km.
pub fn haversine_km(a: Location, b: Location) -> f64 {
    let (lat1, lat2) = (a.y.to_radians(), b.y.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.x - a.x).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Raw treated × control distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub values: DMatrix<f64>,
    pub metric: Metric,
}

impl DistanceMatrix {
    pub fn n_treated(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_control(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Empirical quantile (linear interpolation between order statistics)
    /// of all treated-control distances.
    pub fn quantile(&self, q: f64) -> f64 {
        crate::linalg::quantile(self.values.as_slice(), q)
    }
}

pub fn pairwise_distances(
    treated: &[Location],
    control: &[Location],
    metric: Metric,
) -> Result<DistanceMatrix> {
    if treated.is_empty() || control.is_empty() {
        return Err(DapsmError::input("distance matrix needs treated and control units"));
    }
    for loc in treated.iter().chain(control) {
        loc.validate(metric)?;
    }
    let values = DMatrix::from_fn(treated.len(), control.len(), |i, j| {
        metric.distance(treated[i], control[j])
    });
    Ok(DistanceMatrix { values, metric })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceScheme {
    /// `(d - min) / (max - min)` over all treated-control pairs.
    #[default]
    MinMax,
    /// Share of treated-control pairs at or below the given distance.
    Ecdf,
}

/// Distances mapped into [0, 1]. Pairs that must never be matched (for
/// instance units in different regions) may be set to `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedDistanceMatrix {
    pub values: DMatrix<f64>,
    pub scheme: DistanceScheme,
}

impl StandardizedDistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Forbid a pair by giving it infinite distance.
    pub fn exclude(&mut self, i: usize, j: usize) {
        self.values[(i, j)] = f64::INFINITY;
    }

    /// Forbid every pair whose regions differ.
    pub fn restrict_to_regions<R: PartialEq>(&mut self, treated: &[R], control: &[R]) {
        for (i, ri) in treated.iter().enumerate() {
            for (j, rj) in control.iter().enumerate() {
                if ri != rj {
                    self.exclude(i, j);
                }
            }
        }
    }
}

pub fn standardize(d: &DistanceMatrix, scheme: DistanceScheme) -> Result<StandardizedDistanceMatrix> {
    match scheme {
        DistanceScheme::MinMax => standardize_minmax(d),
        DistanceScheme::Ecdf => standardize_ecdf(d),
    }
}

pub fn standardize_minmax(d: &DistanceMatrix) -> Result<StandardizedDistanceMatrix> {
    if d.values.is_empty() {
        return Err(DapsmError::input("empty distance matrix"));
    }
    let min = d.values.min();
    let max = d.values.max();
    let range = max - min;
    if range <= 0.0 {
        return Err(DapsmError::DegenerateScale(min));
    }
    Ok(StandardizedDistanceMatrix {
        values: d.values.map(|v| ((v - min) / range).clamp(0.0, 1.0)),
        scheme: DistanceScheme::MinMax,
    })
}

pub fn standardize_ecdf(d: &DistanceMatrix) -> Result<StandardizedDistanceMatrix> {
    if d.values.is_empty() {
        return Err(DapsmError::input("empty distance matrix"));
    }
    let mut sorted: Vec<f64> = d.values.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len() as f64;
    Ok(StandardizedDistanceMatrix {
        values: d.values.map(|v| sorted.partition_point(|&s| s <= v) as f64 / total),
        scheme: DistanceScheme::Ecdf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(rows: usize, cols: usize, vals: &[f64]) -> DistanceMatrix {
        DistanceMatrix {
            values: DMatrix::from_row_slice(rows, cols, vals),
            metric: Metric::Euclidean,
        }
    }

    #[test]
    fn euclidean_identity_and_345() {
        let o = Location::new(0.0, 0.0);
        let d = pairwise_distances(&[o], &[o], Metric::Euclidean).unwrap();
        assert_eq!(d.get(0, 0), 0.0);
        let d = pairwise_distances(&[o], &[Location::new(3.0, 4.0)], Metric::Euclidean).unwrap();
        assert_eq!(d.get(0, 0), 5.0);
    }

    #[test]
    fn equator_to_pole() {
        let d = pairwise_distances(
            &[Location::new(0.0, 0.0)],
            &[Location::new(0.0, 90.0)],
            Metric::Geodesic,
        )
        .unwrap();
        // quarter meridian on a sphere of radius 6371.0088 km
        assert!((d.get(0, 0) - 10007.557).abs() < 1e-3, "{}", d.get(0, 0));
    }

    #[test]
    fn known_city_pair() {
        // JFK -> LAX on the mean-radius sphere, independent great-circle value
        // computed with the spherical law of cosines.
        let jfk = Location::new(-73.7781, 40.6413);
        let lax = Location::new(-118.4085, 33.9416);
        let (p1, p2) = (jfk.y.to_radians(), lax.y.to_radians());
        let dl = (lax.x - jfk.x).to_radians();
        let central = (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).acos();
        let expected = EARTH_RADIUS_KM * central;
        assert!((haversine_km(jfk, lax) - expected).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_geo_coordinates() {
        let bad = Location::new(200.0, 0.0);
        let ok = Location::new(0.0, 0.0);
        assert!(matches!(
            pairwise_distances(&[bad], &[ok], Metric::Geodesic),
            Err(DapsmError::Input(_))
        ));
        assert!(pairwise_distances(&[bad], &[ok], Metric::Euclidean).is_ok());
        assert!(pairwise_distances(&[], &[ok], Metric::Euclidean).is_err());
        let nan = Location::new(f64::NAN, 0.0);
        assert!(pairwise_distances(&[nan], &[ok], Metric::Euclidean).is_err());
    }

    #[test]
    fn minmax_examples() {
        let s = standardize_minmax(&raw(1, 2, &[0.0, 10.0])).unwrap();
        assert_eq!(s.values.as_slice(), &[0.0, 1.0]);
        let s = standardize_minmax(&raw(1, 3, &[0.0, 5.0, 10.0])).unwrap();
        assert_eq!(s.get(0, 1), 0.5);
        assert!(matches!(
            standardize_minmax(&raw(2, 2, &[2.0; 4])),
            Err(DapsmError::DegenerateScale(v)) if v == 2.0
        ));
    }

    #[test]
    fn ecdf_examples() {
        let s = standardize_ecdf(&raw(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        // brute force: #{d <= 3} = 3 of 4
        assert_eq!(s.get(1, 0), 0.75);
        assert_eq!(s.get(1, 1), 1.0);
        let s = standardize_ecdf(&raw(2, 2, &[7.0; 4])).unwrap();
        assert!(s.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ecdf_matches_brute_force_count() {
        let vals = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0];
        let d = raw(3, 3, &vals);
        let s = standardize_ecdf(&d).unwrap();
        for (k, &v) in d.values.iter().enumerate() {
            let count = vals.iter().filter(|&&o| o <= v).count();
            assert_eq!(s.values.as_slice()[k], count as f64 / 9.0);
        }
    }

    #[test]
    fn region_exclusion_sets_infinity() {
        let mut s = standardize_minmax(&raw(2, 2, &[0.0, 1.0, 2.0, 3.0])).unwrap();
        s.restrict_to_regions(&["a", "b"], &["a", "a"]);
        assert!(s.get(0, 0).is_finite() && s.get(0, 1).is_finite());
        assert!(s.get(1, 0).is_infinite() && s.get(1, 1).is_infinite());
    }

    #[test]
    fn quantile_interpolates() {
        let d = raw(1, 5, &[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!(d.quantile(0.5), 3.0);
        assert_eq!(d.quantile(0.1), 1.4);
        assert_eq!(d.quantile(1.0), 5.0);
    }

    fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            (Just(r), Just(c), proptest::collection::vec(0.0f64..100.0, r * c))
        })
    }

    proptest! {
        #[test]
        fn standardizations_monotone_bounded_scale_free(
            (r, c, vals) in matrix_strategy(),
            scale in 0.01f64..1000.0,
        ) {
            let d = raw(r, c, &vals);
            let scaled = raw(r, c, &vals.iter().map(|v| v * scale).collect::<Vec<_>>());
            for scheme in [DistanceScheme::MinMax, DistanceScheme::Ecdf] {
                let (s, s2) = match (standardize(&d, scheme), standardize(&scaled, scheme)) {
                    (Ok(a), Ok(b)) => (a, b),
                    (Err(DapsmError::DegenerateScale(_)), Err(DapsmError::DegenerateScale(_))) => continue,
                    other => panic!("inconsistent results {other:?}"),
                };
                let sv = s.values.as_slice();
                let dv = d.values.as_slice();
                for a in 0..dv.len() {
                    prop_assert!((0.0..=1.0).contains(&sv[a]));
                    prop_assert!((sv[a] - s2.values.as_slice()[a]).abs() < 1e-12);
                    for b in 0..dv.len() {
                        if dv[a] <= dv[b] {
                            prop_assert!(sv[a] <= sv[b]);
                        }
                    }
                }
                prop_assert_eq!(s.values.max(), 1.0);
                if scheme == DistanceScheme::MinMax {
                    prop_assert_eq!(s.values.min(), 0.0);
                }
            }
        }

        #[test]
        fn geodesic_symmetric_and_triangle(
            a in (-180.0f64..180.0, -90.0f64..90.0),
            b in (-180.0f64..180.0, -90.0f64..90.0),
            c in (-180.0f64..180.0, -90.0f64..90.0),
        ) {
            let (a, b, c) = (Location::new(a.0, a.1), Location::new(b.0, b.1), Location::new(c.0, c.1));
            let ab = haversine_km(a, b);
            prop_assert!((ab - haversine_km(b, a)).abs() < 1e-9);
            prop_assert_eq!(haversine_km(a, a), 0.0);
            let ac = haversine_km(a, c);
            let cb = haversine_km(c, b);
            prop_assert!(ab <= (ac + cb) * (1.0 + 1e-6) + 1e-9);
        }
    }
}
