//! Treatment effect on the treated, estimated from a matched set.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::dataset::Dataset;
use crate::error::{DapsmError, Result};
use crate::linalg::least_squares;
use crate::matching::MatchedSet;

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    DiffMeans,
    LinearAdjusted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub level: f64,
    pub n_pairs: usize,
    pub method: EstimateMethod,
    /// Standard error is zero or not identified (e.g. a single pair), so the
    /// interval collapses to the point estimate.
    pub degenerate: bool,
}

fn matched_outcomes(dataset: &Dataset, matched: &MatchedSet) -> Result<(Vec<f64>, Vec<f64>)> {
    if matched.is_empty() {
        return Err(DapsmError::Estimation("matched set is empty".into()));
    }
    let y = dataset.outcome()?;
    Ok((
        matched.pairs.iter().map(|&(t, _)| y[t]).collect(),
        matched.pairs.iter().map(|&(_, c)| y[c]).collect(),
    ))
}

pub fn att_diff_means(dataset: &Dataset, matched: &MatchedSet) -> Result<EffectEstimate> {
    att_diff_means_at(dataset, matched, DEFAULT_LEVEL)
}

/// Mean treated outcome minus mean control outcome over matched pairs, with
/// a normal interval from the paired differences.
pub fn att_diff_means_at(dataset: &Dataset, matched: &MatchedSet, level: f64) -> Result<EffectEstimate> {
    let (yt, yc) = matched_outcomes(dataset, matched)?;
    let n = yt.len() as f64;
    let estimate = yt.iter().sum::<f64>() / n - yc.iter().sum::<f64>() / n;
    let diffs: Vec<f64> = yt.iter().zip(&yc).map(|(a, b)| a - b).collect();
    let se = if diffs.len() > 1 {
        let m = diffs.iter().sum::<f64>() / n;
        (diffs.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() / n.sqrt()
    } else {
        0.0
    };
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(EffectEstimate {
        estimate,
        standard_error: se,
        ci_lower: estimate - z * se,
        ci_upper: estimate + z * se,
        level,
        n_pairs: yt.len(),
        method: EstimateMethod::DiffMeans,
        degenerate: !(se > 0.0),
    })
}

pub fn att_linear_adjusted(dataset: &Dataset, matched: &MatchedSet, covariates: &[&str]) -> Result<EffectEstimate> {
    att_linear_adjusted_at(dataset, matched, covariates, DEFAULT_LEVEL)
}

/// Coefficient of treatment in an OLS fit of the outcome on intercept,
/// treatment and `covariates`, over matched units only. Classical standard
/// error and a t interval.
pub fn att_linear_adjusted_at(
    dataset: &Dataset,
    matched: &MatchedSet,
    covariates: &[&str],
    level: f64,
) -> Result<EffectEstimate> {
    if matched.is_empty() {
        return Err(DapsmError::Estimation("matched set is empty".into()));
    }
    let y = dataset.outcome()?;
    let columns = covariates
        .iter()
        .map(|name| {
            dataset
                .covariate(name)
                .ok_or_else(|| DapsmError::input(format!("unknown covariate `{name}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let units: Vec<(usize, f64)> = matched
        .pairs
        .iter()
        .flat_map(|&(t, c)| [(t, 1.0), (c, 0.0)])
        .collect();
    let (x, yv) = matched_design(&units, &columns, y);
    let fit = least_squares(&x, &yv).map_err(|e| match e {
        DapsmError::RankDeficient(m) => DapsmError::Estimation(format!("outcome model is rank deficient ({m})")),
        other => other,
    })?;
    let df = x.nrows() - x.ncols();
    let estimate = fit.coef[1];
    let (se, crit) = if df > 0 {
        let sigma2 = fit.rss / df as f64;
        let t = StudentsT::new(0.0, 1.0, df as f64)
            .map_err(|e| DapsmError::Numerical(e.to_string()))?
            .inverse_cdf(0.5 + level / 2.0);
        ((sigma2 * fit.xtx_inv[(1, 1)]).sqrt(), t)
    } else {
        (0.0, 0.0)
    };
    Ok(EffectEstimate {
        estimate,
        standard_error: se,
        ci_lower: estimate - crit * se,
        ci_upper: estimate + crit * se,
        level,
        n_pairs: matched.n_pairs(),
        method: EstimateMethod::LinearAdjusted,
        degenerate: !(se > 0.0),
    })
}

fn matched_design(units: &[(usize, f64)], columns: &[&[f64]], y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let p = 2 + columns.len();
    let x = DMatrix::from_fn(units.len(), p, |r, k| match k {
        0 => 1.0,
        1 => units[r].1,
        _ => columns[k - 2][units[r].0],
    });
    let yv = DVector::from_iterator(units.len(), units.iter().map(|&(u, _)| y[u]));
    (x, yv)
}

/// OLS coefficients of `y` on the given columns (no implicit intercept).
pub fn ols_coefficients(columns: &[&[f64]], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    let x = DMatrix::from_fn(n, columns.len(), |r, k| columns[k][r]);
    let fit = least_squares(&x, &DVector::from_column_slice(y))?;
    Ok(fit.coef.iter().copied().collect())
}
