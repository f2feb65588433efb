//! Test oracles written independently of the library code paths.
#![allow(dead_code)]

use dapsm::geometry::{Location, Metric};
use dapsm::Dataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` units on the unit square, `p` standard normal covariates, treatment
/// from a logistic model with modest coefficients, outcome linear in
/// everything plus noise.
pub fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut r = rng(seed);
    let locations: Vec<Location> = (0..n).map(|_| Location::new(r.random(), r.random())).collect();
    let covariates: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| r.sample(StandardNormal)).collect()).collect();
    let beta: Vec<f64> = (0..p).map(|_| r.random_range(-0.6..0.6)).collect();
    let mut treatment: Vec<bool> = (0..n)
        .map(|i| {
            let eta = -0.5 + (0..p).map(|k| beta[k] * covariates[k][i]).sum::<f64>();
            r.random::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    // keep both groups nonempty with at least a few units each
    for i in 0..3 {
        treatment[i] = true;
        treatment[n - 1 - i] = false;
    }
    let outcome: Vec<f64> = (0..n)
        .map(|i| {
            f64::from(u8::from(treatment[i])) + covariates.iter().map(|c| 0.5 * c[i]).sum::<f64>()
                + r.sample::<f64, _>(StandardNormal)
        })
        .collect();
    Dataset::new(
        (0..n).map(|i| format!("u{i}")).collect(),
        locations,
        Metric::Euclidean,
        (0..p).map(|k| format!("x{k}")).collect(),
        covariates,
        treatment,
        Some(outcome),
    )
    .unwrap()
}

/// Nelder-Mead minimizer with restarts from the incumbent.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], step: f64) -> Vec<f64> {
    let mut best = start.to_vec();
    for round in 0..6 {
        let s = if round == 0 { step } else { step * 0.1f64.powi(round.min(3)) };
        best = nelder_mead_once(&f, &best, s);
    }
    best
}

fn nelder_mead_once<F: Fn(&[f64]) -> f64>(f: &F, start: &[f64], step: f64) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..n {
        let mut v = start.to_vec();
        v[k] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for _ in 0..50_000 {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if diameter < 1e-11 {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (simplex[n][k] - centroid[k])).collect() };

        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let x = along(-0.5);
                let v = f(&x);
                (x, v)
            } else {
                let x = along(0.5);
                let v = f(&x);
                (x, v)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|k| simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best].clone()
}

/// Negative Bernoulli log-likelihood written from the definition.
pub fn logistic_nll(x: &[Vec<f64>], z: &[bool], beta: &[f64]) -> f64 {
    x.iter()
        .zip(z)
        .map(|(row, &t)| {
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            // log(1 + e^eta) computed stably
            let log1pexp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            log1pexp - if t { eta } else { 0.0 }
        })
        .sum()
}

/// Best assignment by enumeration: most pairs first, then least total cost.
/// Returns `(pairs, cost)`.
pub fn enumerate_assignment(cost: &DMatrix<f64>, feasible: &DMatrix<bool>) -> (usize, f64) {
    fn go(
        row: usize,
        cost: &DMatrix<f64>,
        feasible: &DMatrix<bool>,
        used: &mut Vec<bool>,
        pairs: usize,
        total: f64,
        best: &mut (usize, f64),
    ) {
        if row == cost.nrows() {
            if pairs > best.0 || (pairs == best.0 && total < best.1) {
                *best = (pairs, total);
            }
            return;
        }
        go(row + 1, cost, feasible, used, pairs, total, best);
        for j in 0..cost.ncols() {
            if !used[j] && feasible[(row, j)] {
                used[j] = true;
                go(row + 1, cost, feasible, used, pairs + 1, total + cost[(row, j)], best);
                used[j] = false;
            }
        }
    }
    let mut best = (0, f64::INFINITY);
    go(0, cost, feasible, &mut vec![false; cost.ncols()], 0, 0.0, &mut best);
    if best.0 == 0 {
        best.1 = 0.0;
    }
    best
}

/// `(X'X)^-1 X'y` with an explicit inverse; also returns the classical
/// standard errors.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let xtx_inv = (x.transpose() * x).try_inverse().expect("invertible");
    let beta = &xtx_inv * x.transpose() * y;
    let resid = y - x * &beta;
    let sigma2 = resid.norm_squared() / (x.nrows() - x.ncols()) as f64;
    let se = DVector::from_iterator(x.ncols(), (0..x.ncols()).map(|k| (sigma2 * xtx_inv[(k, k)]).sqrt()));
    (beta, se)
}
