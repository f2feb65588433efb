//! Baseline matching methods: plain propensity matching, propensity with
//! coordinates, matching inside a distance caliper, and the two oracle
//! methods that know the unmeasured confounder.
//!
//! Every matching comparator uses exact optimal 1-1 assignment on the
//! absolute propensity difference.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::balance::sample_sd;
use crate::daps::ps_difference_matrix;
use crate::dataset::Dataset;
use crate::error::{DapsmError, Result};
use crate::estimation::ols_coefficients;
use crate::geometry::{pairwise_distances, DistanceMatrix};
use crate::matching::{optimal_assignment, MatchedSet};
use crate::propensity::{augment_with_coordinates, fit_logistic, PropensityFit};
use crate::simulation::generate::{SimulatedDataset, OBSERVED_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorKind {
    GoldOutcome,
    GoldPs,
    Naive,
    NaiveCoords,
    DistanceCaliper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSpec {
    pub kind: ComparatorKind,
    #[serde(default)]
    pub distance_quantile: Option<f64>,
    /// In standard deviations of the propensity-score estimates.
    #[serde(default)]
    pub ps_caliper: Option<f64>,
}

impl ComparatorSpec {
    pub fn new(kind: ComparatorKind) -> Self {
        ComparatorSpec { kind, distance_quantile: None, ps_caliper: None }
    }

    pub fn distance_caliper(quantile: f64) -> Self {
        ComparatorSpec { kind: ComparatorKind::DistanceCaliper, distance_quantile: Some(quantile), ps_caliper: None }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.distance_quantile) {
            (ComparatorKind::DistanceCaliper, Some(q)) if q > 0.0 && q < 1.0 => {}
            (ComparatorKind::DistanceCaliper, Some(q)) => {
                return Err(DapsmError::input(format!("distance quantile {q} is outside (0, 1)")))
            }
            (ComparatorKind::DistanceCaliper, None) => {
                return Err(DapsmError::input("distance-caliper needs a distance quantile"))
            }
            (_, Some(_)) => return Err(DapsmError::input("distance quantile only applies to distance-caliper")),
            (_, None) => {}
        }
        if let Some(c) = self.ps_caliper {
            if !(c > 0.0) {
                return Err(DapsmError::input("propensity caliper must be positive"));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.kind {
            ComparatorKind::GoldOutcome => "gold-outcome".into(),
            ComparatorKind::GoldPs => "gold-ps".into(),
            ComparatorKind::Naive => "naive".into(),
            ComparatorKind::NaiveCoords => "naive-coords".into(),
            ComparatorKind::DistanceCaliper => {
                format!("distcal-{}", self.distance_quantile.map_or(0.0, |q| (q * 100.0).round()))
            }
        }
    }
}

/// Optimal 1-1 matching on `|ps_i - ps_j|`.
///
/// `ps_caliper` is in standard deviations of all units' scores; pairs farther
/// apart than `max_distance` (raw units) are excluded.
pub fn ps_match(dataset: &Dataset, ps: &[f64], ps_caliper: Option<f64>, max_distance: Option<f64>) -> Result<MatchedSet> {
    let (treated, control, distances) = split(dataset)?;
    ps_match_with(&treated, &control, &distances, ps, ps_caliper, max_distance)
}

fn split(dataset: &Dataset) -> Result<(Vec<usize>, Vec<usize>, DistanceMatrix)> {
    let treated = dataset.treated_indices();
    let control = dataset.control_indices();
    let loc = |ids: &[usize]| ids.iter().map(|&i| dataset.locations[i]).collect::<Vec<_>>();
    let distances = pairwise_distances(&loc(&treated), &loc(&control), dataset.metric)?;
    Ok((treated, control, distances))
}

fn ps_match_with(
    treated: &[usize],
    control: &[usize],
    distances: &DistanceMatrix,
    ps: &[f64],
    ps_caliper: Option<f64>,
    max_distance: Option<f64>,
) -> Result<MatchedSet> {
    let ps_t: Vec<f64> = treated.iter().map(|&i| ps[i]).collect();
    let ps_c: Vec<f64> = control.iter().map(|&i| ps[i]).collect();
    let cost = ps_difference_matrix(&ps_t, &ps_c);
    let mut feasible = DMatrix::from_element(cost.nrows(), cost.ncols(), true);
    if let Some(k) = ps_caliper {
        let all: Vec<usize> = (0..ps.len()).collect();
        let limit = k * sample_sd(ps, &all);
        feasible.zip_apply(&cost, |f, c| *f &= c <= limit);
    }
    if let Some(limit) = max_distance {
        feasible.zip_apply(&distances.values, |f, d| *f &= d <= limit);
    }
    let assignment = optimal_assignment(&cost, &feasible);
    Ok(MatchedSet::from_assignment(&assignment, treated, control, distances))
}

pub fn naive_fit(dataset: &Dataset) -> Result<PropensityFit> {
    fit_logistic(&dataset.design()?, &dataset.treatment)
}

/// Propensity score from the observed covariates only.
pub fn naive_match(dataset: &Dataset, ps_caliper: Option<f64>) -> Result<MatchedSet> {
    let fit = naive_fit(dataset)?;
    ps_match(dataset, &fit.fitted, ps_caliper, None)
}

pub fn naive_coords_fit(dataset: &Dataset) -> Result<PropensityFit> {
    let design = augment_with_coordinates(&dataset.design()?, &dataset.locations)?;
    fit_logistic(&design, &dataset.treatment)
}

/// Propensity score from the observed covariates plus raw coordinates.
pub fn naive_coords_match(dataset: &Dataset, ps_caliper: Option<f64>) -> Result<MatchedSet> {
    let fit = naive_coords_fit(dataset)?;
    ps_match(dataset, &fit.fitted, ps_caliper, None)
}

/// Propensity matching restricted to pairs no farther apart than the given
/// quantile of all treated-control distances.
pub fn distance_caliper_match(dataset: &Dataset, distance_quantile: f64, ps_caliper: Option<f64>) -> Result<MatchedSet> {
    let fit = naive_fit(dataset)?;
    distance_caliper_match_with(dataset, &fit.fitted, distance_quantile, ps_caliper).map(|(m, _)| m)
}

/// Returns the matched set and the distance threshold used.
pub fn distance_caliper_match_with(
    dataset: &Dataset,
    ps: &[f64],
    distance_quantile: f64,
    ps_caliper: Option<f64>,
) -> Result<(MatchedSet, f64)> {
    ComparatorSpec { kind: ComparatorKind::DistanceCaliper, distance_quantile: Some(distance_quantile), ps_caliper }
        .validate()?;
    let (treated, control, distances) = split(dataset)?;
    let threshold = distances.quantile(distance_quantile);
    let m = ps_match_with(&treated, &control, &distances, ps, ps_caliper, Some(threshold))?;
    Ok((m, threshold))
}

/// Propensity score from the observed covariates and the true hidden
/// confounder.
pub fn gold_ps_match(sim: &SimulatedDataset, ps_caliper: Option<f64>) -> Result<MatchedSet> {
    naive_match(&sim.with_hidden(), ps_caliper)
}

/// Treatment coefficient of the data-generating outcome regression,
/// `Y ~ Z + X1 + X2 + X3 + X4 + U` (no intercept).
pub fn gold_outcome_estimate(sim: &SimulatedDataset) -> Result<f64> {
    let z: Vec<f64> = sim.z.iter().map(|&t| f64::from(u8::from(t))).collect();
    let mut cols: Vec<&[f64]> = vec![&z];
    cols.extend(sim.x.iter().map(Vec::as_slice));
    cols.push(&sim.u);
    debug_assert_eq!(cols.len(), OBSERVED_NAMES.len() + 2);
    let coef = ols_coefficients(&cols, &sim.y).map_err(|e| match e {
        DapsmError::RankDeficient(m) => DapsmError::input(format!("outcome design is rank deficient ({m})")),
        other => other,
    })?;
    Ok(coef[0])
}
