//! Covariate balance: absolute standardized difference of means (ASDM)
//! before and after matching.
//!
//! Both the before and after values divide by the same denominator, the
//! sample standard deviation of the covariate among treated units in the
//! full data, so the two columns of a report are directly comparable.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{DapsmError, Result};
use crate::matching::MatchedSet;

fn mean_over(values: &[f64], ids: &[usize]) -> f64 {
    ids.iter().map(|&i| values[i]).sum::<f64>() / ids.len() as f64
}

/// Sample (n - 1) standard deviation of `values` restricted to `ids`.
pub fn sample_sd(values: &[f64], ids: &[usize]) -> f64 {
    if ids.len() < 2 {
        return 0.0;
    }
    let m = mean_over(values, ids);
    let ss: f64 = ids.iter().map(|&i| (values[i] - m).powi(2)).sum();
    (ss / (ids.len() - 1) as f64).sqrt()
}

/// `(mean(treated) - mean(control)) / scale_sd`
pub fn standardized_difference(
    values: &[f64],
    treated_ids: &[usize],
    control_ids: &[usize],
    scale_sd: f64,
) -> Result<f64> {
    if treated_ids.is_empty() || control_ids.is_empty() {
        return Err(DapsmError::input("balance needs nonempty treated and control groups"));
    }
    if !(scale_sd > 0.0) {
        return Err(DapsmError::DegenerateCovariate(format!("scale {scale_sd}")));
    }
    Ok((mean_over(values, treated_ids) - mean_over(values, control_ids)) / scale_sd)
}

pub fn asdm(values: &[f64], treated_ids: &[usize], control_ids: &[usize], scale_sd: f64) -> Result<f64> {
    standardized_difference(values, treated_ids, control_ids, scale_sd).map(f64::abs)
}

/// Per-covariate denominators fixed from the full data.
#[derive(Debug, Clone)]
pub struct BalanceScales {
    pub names: Vec<String>,
    pub sds: Vec<f64>,
}

impl BalanceScales {
    pub fn from_dataset(dataset: &Dataset) -> Result<Self> {
        let treated = dataset.treated_indices();
        let sds = dataset
            .covariates
            .iter()
            .zip(&dataset.covariate_names)
            .map(|(col, name)| {
                let sd = sample_sd(col, &treated);
                if sd > 0.0 {
                    Ok(sd)
                } else {
                    Err(DapsmError::DegenerateCovariate(name.clone()))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BalanceScales { names: dataset.covariate_names.clone(), sds })
    }

    /// Absolute standardized differences of every covariate on a matched set,
    /// `None` when the set is empty.
    pub fn matched_asdms(&self, dataset: &Dataset, matched: &MatchedSet) -> Option<Vec<f64>> {
        if matched.is_empty() {
            return None;
        }
        let t = matched.treated_units();
        let c = matched.control_units();
        Some(
            dataset
                .covariates
                .iter()
                .zip(&self.sds)
                .map(|(col, &sd)| ((mean_over(col, &t) - mean_over(col, &c)) / sd).abs())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateBalance {
    pub name: String,
    pub std_diff_before: f64,
    pub std_diff_after: Option<f64>,
    pub asdm_before: f64,
    pub asdm_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub per_covariate: Vec<CovariateBalance>,
    pub cutoff: f64,
    pub n_imbalanced_before: usize,
    /// `None` when the matched set is empty.
    pub n_imbalanced_after: Option<usize>,
    pub mean_asdm_after: Option<f64>,
    pub max_asdm_after: Option<f64>,
}

impl BalanceReport {
    pub fn all_balanced_after(&self) -> bool {
        self.n_imbalanced_after == Some(0)
    }
}

pub fn balance_report(dataset: &Dataset, matched: &MatchedSet, cutoff: f64) -> Result<BalanceReport> {
    let n = dataset.n_units();
    if let Some(&(t, c)) = matched.pairs.iter().find(|&&(t, c)| t >= n || c >= n) {
        return Err(DapsmError::input(format!("pair ({t}, {c}) references a unit outside the dataset")));
    }
    let scales = BalanceScales::from_dataset(dataset)?;
    let treated = dataset.treated_indices();
    let control = dataset.control_indices();
    let (mt, mc) = (matched.treated_units(), matched.control_units());

    let per_covariate = dataset
        .covariates
        .iter()
        .zip(&scales.names)
        .zip(&scales.sds)
        .map(|((col, name), &sd)| {
            let before = standardized_difference(col, &treated, &control, sd)?;
            let after = if matched.is_empty() {
                None
            } else {
                Some(standardized_difference(col, &mt, &mc, sd)?)
            };
            Ok(CovariateBalance {
                name: name.clone(),
                std_diff_before: before,
                std_diff_after: after,
                asdm_before: before.abs(),
                asdm_after: after.map(f64::abs),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_imbalanced_before = per_covariate.iter().filter(|c| c.asdm_before > cutoff).count();
    let after: Option<Vec<f64>> = per_covariate.iter().map(|c| c.asdm_after).collect();
    let (n_imbalanced_after, mean_asdm_after, max_asdm_after) = match after {
        Some(a) if !a.is_empty() => (
            Some(a.iter().filter(|&&v| v > cutoff).count()),
            Some(a.iter().sum::<f64>() / a.len() as f64),
            Some(a.iter().copied().fold(0.0, f64::max)),
        ),
        Some(_) => (Some(0), None, None),
        None => (None, None, None),
    };
    Ok(BalanceReport {
        per_covariate,
        cutoff,
        n_imbalanced_before,
        n_imbalanced_after,
        mean_asdm_after,
        max_asdm_after,
    })
}
