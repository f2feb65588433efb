mod common;

use common::{logistic_nll, nelder_mead, rng};
use dapsm::propensity::{fit_logistic, DesignMatrix};
use rand::Rng;
use rand_distr::StandardNormal;

fn instance(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>, DesignMatrix) {
    let mut r = rng(seed);
    let n = r.random_range(40..90);
    let p = r.random_range(1..4);
    let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| r.sample(StandardNormal)).collect()).collect();
    let beta: Vec<f64> = (0..=p).map(|_| r.random_range(-0.8..0.8)).collect();
    let z: Vec<bool> = (0..n)
        .map(|i| {
            let eta = beta[0] + (0..p).map(|k| beta[k + 1] * cols[k][i]).sum::<f64>();
            r.random::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    let names: Vec<String> = (0..p).map(|k| format!("c{k}")).collect();
    let design = DesignMatrix::from_columns(n, names.iter().map(String::as_str).zip(cols.iter().map(Vec::as_slice))).unwrap();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| std::iter::once(1.0).chain(cols.iter().map(|c| c[i])).collect()).collect();
    (rows, z, design)
}

#[test]
fn irls_matches_direct_likelihood_maximization() {
    for seed in 100..110 {
        let (rows, z, design) = instance(seed);
        let fit = fit_logistic(&design, &z).unwrap();
        let p = rows[0].len();
        let oracle = nelder_mead(|b| logistic_nll(&rows, &z, b), &vec![0.0; p], 0.5);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-4, "seed {seed}: {a} vs {b}");
        }
        assert!(logistic_nll(&rows, &z, &fit.coefficients) <= logistic_nll(&rows, &z, &oracle) + 1e-10);
    }
}

#[test]
fn score_vanishes_at_returned_fit() {
    for seed in 200..220 {
        let (rows, z, design) = instance(seed);
        let fit = fit_logistic(&design, &z).unwrap();
        let score: Vec<f64> = (0..rows[0].len())
            .map(|k| {
                rows.iter()
                    .zip(&z)
                    .zip(&fit.fitted)
                    .map(|((row, &t), &p)| row[k] * (f64::from(u8::from(t)) - p))
                    .sum()
            })
            .collect();
        let norm = score.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "seed {seed}: {norm}");
        assert!(fit.converged);
    }
}
