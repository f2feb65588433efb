//! Logistic propensity-score model fitted by iteratively reweighted least
//! squares.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{DapsmError, Result};
use crate::geometry::Location;
use crate::linalg::least_squares;

pub const INTERCEPT: &str = "(intercept)";

pub const MAX_ITERATIONS: usize = 50;
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const STEP_TOLERANCE: f64 = 1e-10;
/// Any coefficient beyond this magnitude is treated as separation.
pub const SEPARATION_BOUND: f64 = 30.0;

/// Fitted probabilities are kept this far from 0 and 1.
const PROB_FLOOR: f64 = 1e-15;

/// Intercept column followed by named covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    data: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_columns<'a>(
        n_rows: usize,
        columns: impl IntoIterator<Item = (&'a str, &'a [f64])>,
    ) -> Result<Self> {
        let mut names = vec![INTERCEPT.to_string()];
        let mut values = vec![1.0; n_rows];
        for (name, col) in columns {
            if col.len() != n_rows {
                return Err(DapsmError::input(format!(
                    "column `{name}` has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            if let Some(bad) = col.iter().position(|v| !v.is_finite()) {
                return Err(DapsmError::input(format!(
                    "column `{name}` has a missing or non-finite value at row {bad}"
                )));
            }
            names.push(name.to_string());
            values.extend_from_slice(col);
        }
        let data = DMatrix::from_vec(n_rows, names.len(), values);
        Ok(DesignMatrix { names, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.data.column(k).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Appends the raw coordinates as two extra columns.
pub fn augment_with_coordinates(design: &DesignMatrix, locations: &[Location]) -> Result<DesignMatrix> {
    if locations.len() != design.n_rows() {
        return Err(DapsmError::input("location count differs from design rows"));
    }
    let n = design.n_rows();
    let p = design.n_cols();
    let mut data = design.data.clone().resize_horizontally(p + 2, 0.0);
    for (i, loc) in locations.iter().enumerate() {
        data[(i, p)] = loc.x;
        data[(i, p + 1)] = loc.y;
    }
    let mut names = design.names.clone();
    names.push("coord_x".into());
    names.push("coord_y".into());
    debug_assert_eq!(data.nrows(), n);
    Ok(DesignMatrix { names, data })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityFit {
    pub column_names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn probabilities(x: &DMatrix<f64>, beta: &DVector<f64>) -> DVector<f64> {
    (x * beta).map(|eta| expit(eta).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
}

pub fn log_likelihood(design: &DesignMatrix, z: &[bool], beta: &[f64]) -> f64 {
    let eta = &design.data * DVector::from_column_slice(beta);
    eta.iter()
        .zip(z)
        .map(|(&e, &zi)| if zi { e } else { 0.0 } - softplus(e))
        .sum()
}

/// Gradient of the log-likelihood, `X'(z - p)`.
pub fn score(design: &DesignMatrix, z: &[bool], beta: &[f64]) -> Vec<f64> {
    let p = probabilities(&design.data, &DVector::from_column_slice(beta));
    let resid = DVector::from_iterator(z.len(), z.iter().zip(p.iter()).map(|(&zi, pi)| f64::from(u8::from(zi)) - pi));
    (design.data.transpose() * resid).iter().copied().collect()
}

fn check_inputs(design: &DesignMatrix, z: &[bool]) -> Result<()> {
    let (n, p) = design.data.shape();
    if z.len() != n {
        return Err(DapsmError::input(format!("treatment has {} entries, design has {n} rows", z.len())));
    }
    if z.iter().all(|&t| t) || z.iter().all(|&t| !t) {
        return Err(DapsmError::input("treatment must contain both treated and control units"));
    }
    if n <= p {
        return Err(DapsmError::RankDeficient(format!("{n} units cannot identify {p} coefficients")));
    }
    for k in 1..p {
        let col = design.data.column(k);
        if col.iter().all(|&v| v == col[0]) {
            return Err(DapsmError::RankDeficient(format!(
                "column `{}` is constant",
                design.names[k]
            )));
        }
    }
    Ok(())
}

/// Maximum-likelihood logistic regression of `z` on the design.
pub fn fit_logistic(design: &DesignMatrix, z: &[bool]) -> Result<PropensityFit> {
    check_inputs(design, z)?;
    let x = &design.data;
    let (n, p) = x.shape();
    let zf = DVector::from_iterator(n, z.iter().map(|&t| f64::from(u8::from(t))));

    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(design, z, beta.as_slice());
    let mut last_step = f64::INFINITY;
    let mut gradient_norm = f64::INFINITY;

    for iteration in 0..=MAX_ITERATIONS {
        let prob = probabilities(x, &beta);
        let resid = &zf - &prob;
        gradient_norm = (x.transpose() * &resid).norm();
        if gradient_norm <= SCORE_TOLERANCE && last_step <= STEP_TOLERANCE {
            return Ok(PropensityFit {
                column_names: design.names.clone(),
                coefficients: beta.iter().copied().collect(),
                fitted: prob.iter().copied().collect(),
                converged: true,
                iterations: iteration,
                gradient_norm,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }

        // Newton step as a weighted least-squares problem.
        let sw = prob.map(|pi| (pi * (1.0 - pi)).sqrt());
        let mut xw = x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= sw[i];
        }
        let working = DVector::from_iterator(n, (0..n).map(|i| resid[i] / sw[i]));
        let delta = least_squares(&xw, &working)
            .map_err(|e| match e {
                DapsmError::RankDeficient(msg) => DapsmError::RankDeficient(column_message(design, &msg)),
                other => other,
            })?
            .coef;

        let mut factor = 1.0;
        let mut candidate = &beta + &delta;
        let mut cand_ll = log_likelihood(design, z, candidate.as_slice());
        let mut halvings = 0;
        while cand_ll < ll - 1e-12 * ll.abs().max(1.0) && halvings < 30 {
            factor *= 0.5;
            candidate = &beta + &delta * factor;
            cand_ll = log_likelihood(design, z, candidate.as_slice());
            halvings += 1;
        }
        last_step = (&delta * factor).norm();
        beta = candidate;
        ll = cand_ll;

        if let Some(k) = beta.iter().position(|b| b.abs() > SEPARATION_BOUND) {
            return Err(DapsmError::Separation {
                column: design.names[k].clone(),
                value: beta[k],
            });
        }
    }
    Err(DapsmError::Convergence {
        iterations: MAX_ITERATIONS,
        score_norm: gradient_norm,
    })
}

fn column_message(design: &DesignMatrix, msg: &str) -> String {
    msg.strip_prefix("column ")
        .and_then(|k| k.parse::<usize>().ok())
        .and_then(|k| design.names.get(k))
        .map(|name| format!("column `{name}` is collinear with earlier columns"))
        .unwrap_or_else(|| msg.to_string())
}

pub fn predict_ps(fit: &PropensityFit, design: &DesignMatrix) -> Result<Vec<f64>> {
    if design.names != fit.column_names {
        return Err(DapsmError::input(format!(
            "design columns {:?} do not match fitted columns {:?}",
            design.names, fit.column_names
        )));
    }
    Ok(probabilities(&design.data, &DVector::from_column_slice(&fit.coefficients))
        .iter()
        .copied()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(cols: &[(&str, Vec<f64>)], n: usize) -> DesignMatrix {
        DesignMatrix::from_columns(n, cols.iter().map(|(k, v)| (*k, v.as_slice()))).unwrap()
    }

    #[test]
    fn intercept_only_is_logit_of_mean() {
        let z: Vec<bool> = (0..100).map(|i| i % 10 < 3).collect();
        let fit = fit_logistic(&design(&[], 100), &z).unwrap();
        assert!(fit.converged);
        // logit(0.3) = ln(3/7)
        assert!((fit.coefficients[0] - (0.3f64 / 0.7).ln()).abs() < 1e-10);
        assert!((fit.coefficients[0] + 0.8473).abs() < 1e-4);
        assert!(fit.gradient_norm <= SCORE_TOLERANCE);
    }

    #[test]
    fn symmetric_covariate_gets_zero_coefficient() {
        // x = -2..2 repeated, z pattern identical for x and -x.
        let n = 40;
        let x: Vec<f64> = (0..n).map(|i| (i % 5) as f64 - 2.0).collect();
        let z: Vec<bool> = (0..n).map(|i| (i / 5) % 3 == 0).collect();
        let fit = fit_logistic(&design(&[("x", x)], n), &z).unwrap();
        assert!(fit.coefficients[1].abs() < 1e-6);
    }

    #[test]
    fn predictions() {
        let d = design(&[("x", vec![-1.0, 0.0, 1.0, 2.0])], 4);
        let zero = PropensityFit {
            column_names: d.names().to_vec(),
            coefficients: vec![0.0, 0.0],
            fitted: vec![],
            converged: true,
            iterations: 0,
            gradient_norm: 0.0,
        };
        assert!(predict_ps(&zero, &d).unwrap().iter().all(|&p| p == 0.5));

        let truth = PropensityFit { coefficients: vec![-0.85, 0.3], ..zero.clone() };
        let ps = predict_ps(&truth, &d).unwrap();
        assert!((ps[1] - 0.299_432_7).abs() < 1e-6, "{}", ps[1]);
        assert!(ps.windows(2).all(|w| w[1] > w[0]));

        let other = design(&[("y", vec![0.0; 4])], 4);
        assert!(predict_ps(&zero, &other).is_err());
    }

    #[test]
    fn augment_appends_coordinates() {
        let d = design(&[("a", vec![1.0, 2.0, 3.0])], 3);
        let locs = [Location::new(1.0, 2.0), Location::new(3.0, 4.0), Location::new(5.0, 7.0)];
        let aug = augment_with_coordinates(&d, &locs).unwrap();
        assert_eq!(aug.n_cols(), 4);
        assert_eq!(aug.column(2), vec![1.0, 3.0, 5.0]);
        assert_eq!(aug.column(3), vec![2.0, 4.0, 7.0]);
        assert!(augment_with_coordinates(&d, &locs[..2]).is_err());
    }

    #[test]
    fn constant_coordinates_are_rank_deficient() {
        let n = 20;
        let d = design(&[("a", (0..n).map(|i| i as f64).collect())], n);
        let locs = vec![Location::new(1.0, 1.0); n];
        let z: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let aug = augment_with_coordinates(&d, &locs).unwrap();
        assert!(matches!(fit_logistic(&aug, &z), Err(DapsmError::RankDeficient(m)) if m.contains("coord_x")));
    }

    #[test]
    fn collinear_columns_named() {
        let n = 30;
        let a: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let z: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let err = fit_logistic(&design(&[("a", a), ("b", b)], n), &z).unwrap_err();
        assert!(matches!(err, DapsmError::RankDeficient(m) if m.contains('b')));
    }

    #[test]
    fn separation_detected() {
        let n = 20;
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let z: Vec<bool> = (0..n).map(|i| i >= 10).collect();
        assert!(matches!(
            fit_logistic(&design(&[("x", x)], n), &z),
            Err(DapsmError::Separation { .. })
        ));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            fit_logistic(&design(&[], 5), &[true; 5]),
            Err(DapsmError::Input(_))
        ));
    }

    fn random_problem(seed: u64, n: usize, p: usize) -> (DesignMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<(String, Vec<f64>)> = (0..p)
            .map(|k| (format!("x{k}"), (0..n).map(|_| rng.sample(StandardNormal)).collect()))
            .collect();
        let d = DesignMatrix::from_columns(n, cols.iter().map(|(k, v)| (k.as_str(), v.as_slice()))).unwrap();
        let z = (0..n)
            .map(|i| {
                let eta = -0.5 + (1..d.n_cols()).map(|k| 0.7 * d.matrix()[(i, k)]).sum::<f64>();
                rng.random::<f64>() < expit(eta)
            })
            .collect();
        (d, z)
    }

    #[test]
    fn gradient_matches_finite_differences_and_likelihood_improves() {
        for seed in 0..5 {
            let (d, z) = random_problem(seed, 80, 3);
            let fit = fit_logistic(&d, &z).unwrap();
            assert!(log_likelihood(&d, &z, &fit.coefficients) >= log_likelihood(&d, &z, &[0.0; 4]));
            // check the analytic score at a point away from the optimum
            let probe: Vec<f64> = fit.coefficients.iter().map(|b| b + 0.3).collect();
            let analytic = score(&d, &z, &probe);
            for k in 0..probe.len() {
                let h = 1e-5;
                let mut up = probe.clone();
                let mut dn = probe.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (log_likelihood(&d, &z, &up) - log_likelihood(&d, &z, &dn)) / (2.0 * h);
                assert!((fd - analytic[k]).abs() <= 1e-5 * analytic[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn predictions_invariant_to_affine_recoding() {
        let (d, z) = random_problem(11, 100, 2);
        let fit = fit_logistic(&d, &z).unwrap();
        let recoded: Vec<f64> = d.column(1).iter().map(|v| 3.5 * v - 2.0).collect();
        let d2 = DesignMatrix::from_columns(100, [("x0", recoded.as_slice()), ("x1", d.column(2).as_slice())]).unwrap();
        let fit2 = fit_logistic(&d2, &z).unwrap();
        for (a, b) in fit.fitted.iter().zip(&fit2.fitted) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
