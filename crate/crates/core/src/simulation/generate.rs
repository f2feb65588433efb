//! Simulated observational data with one unmeasured spatial confounder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gp::GpSampler;
use super::matern::MaternParams;
use crate::dataset::Dataset;
use crate::error::{DapsmError, Result};
use crate::geometry::{Location, Metric};
use crate::propensity::expit;

pub const OBSERVED_NAMES: [&str; 4] = ["X1", "X2", "X3", "X4"];
pub const HIDDEN_NAME: &str = "U";
pub const TRUE_ATT: f64 = 1.0;

/// `logit P(Z = 1) = intercept + x . X + u * U`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentModel {
    pub intercept: f64,
    pub x: [f64; 4],
    pub u: f64,
}

impl Default for TreatmentModel {
    fn default() -> Self {
        TreatmentModel { intercept: -0.85, x: [0.1, 0.2, -0.1, -0.1], u: 0.3 }
    }
}

/// `Y = effect * Z + x . X + u * U + N(0, noise_sd^2)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub effect: f64,
    pub x: [f64; 4],
    pub u: f64,
    pub noise_sd: f64,
}

impl Default for OutcomeModel {
    fn default() -> Self {
        OutcomeModel { effect: TRUE_ATT, x: [0.55, 0.21, 1.17, -0.11], u: 3.0, noise_sd: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DataModel {
    #[serde(default)]
    pub treatment: TreatmentModel,
    #[serde(default)]
    pub outcome: OutcomeModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub locations: Vec<Location>,
    pub metric: Metric,
    pub u: Vec<f64>,
    pub x: [Vec<f64>; 4],
    pub z: Vec<bool>,
    pub y: Vec<f64>,
    pub true_ps: Vec<f64>,
    pub seed: u64,
}

impl SimulatedDataset {
    pub fn n_units(&self) -> usize {
        self.z.len()
    }

    pub fn treated_fraction(&self) -> f64 {
        self.z.iter().filter(|&&t| t).count() as f64 / self.n_units() as f64
    }

    /// What an analyst would see: X1..X4, treatment and outcome.
    pub fn observed(&self) -> Dataset {
        Dataset {
            ids: (0..self.n_units()).map(|i| format!("s{i}")).collect(),
            locations: self.locations.clone(),
            metric: self.metric,
            covariate_names: OBSERVED_NAMES.iter().map(|s| s.to_string()).collect(),
            covariates: self.x.to_vec(),
            treatment: self.z.clone(),
            outcome: Some(self.y.clone()),
        }
    }

    /// Observed data plus the unmeasured confounder as a fifth covariate.
    pub fn with_hidden(&self) -> Dataset {
        let mut d = self.observed();
        d.covariate_names.push(HIDDEN_NAME.to_string());
        d.covariates.push(self.u.clone());
        d
    }
}

/// Draws one dataset. Random numbers come from a single stream in the order
/// U, X1, X2, X3, X4, treatment uniforms, outcome noise.
pub fn generate_with(sampler: &GpSampler, locations: &[Location], metric: Metric, model: &DataModel, seed: u64) -> Result<SimulatedDataset> {
    let n = locations.len();
    if n < 2 {
        return Err(DapsmError::input("need at least two locations"));
    }
    if sampler.len() != n {
        return Err(DapsmError::input("sampler was built for a different location set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = sampler.draw(&mut rng);
    let x: [Vec<f64>; 4] = std::array::from_fn(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect());

    let TreatmentModel { intercept, x: bx, u: bu } = model.treatment;
    let true_ps: Vec<f64> = (0..n)
        .map(|i| expit(intercept + (0..4).map(|k| bx[k] * x[k][i]).sum::<f64>() + bu * u[i]))
        .collect();
    let z: Vec<bool> = true_ps.iter().map(|&p| rng.random::<f64>() < p).collect();

    let o = model.outcome;
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eps: f64 = rng.sample(StandardNormal);
            o.effect * f64::from(u8::from(z[i]))
                + (0..4).map(|k| o.x[k] * x[k][i]).sum::<f64>()
                + o.u * u[i]
                + o.noise_sd * eps
        })
        .collect();

    Ok(SimulatedDataset { locations: locations.to_vec(), metric, u, x, z, y, true_ps, seed })
}

pub fn generate_dataset(locations: &[Location], metric: Metric, params: MaternParams, seed: u64) -> Result<SimulatedDataset> {
    let sampler = GpSampler::new(locations, metric, params)?;
    generate_with(&sampler, locations, metric, &DataModel::default(), seed)
}

/// `n` points uniform on the unit square.
pub fn uniform_locations(n: usize, seed: u64) -> Vec<Location> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Location::new(rng.random(), rng.random())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structure_and_determinism() {
        let locs = uniform_locations(60, 1);
        let p = MaternParams::new(0.5, 0.3).unwrap();
        let a = generate_dataset(&locs, Metric::Euclidean, p, 9).unwrap();
        assert_eq!(a, generate_dataset(&locs, Metric::Euclidean, p, 9).unwrap());
        assert_eq!(a.observed().covariate_names, OBSERVED_NAMES);
        assert_eq!(a.with_hidden().covariates.len(), 5);
        assert!(a.true_ps.iter().all(|&p| p > 0.0 && p < 1.0));
        let mean_u = a.u.iter().sum::<f64>() / 60.0;
        assert!(mean_u.abs() < 1e-12);
    }

    #[test]
    fn intercept_only_treatment_rate() {
        let locs = uniform_locations(400, 3);
        let sampler = GpSampler::new(&locs, Metric::Euclidean, MaternParams::new(0.5, 0.2).unwrap()).unwrap();
        let model = DataModel {
            treatment: TreatmentModel { intercept: -0.85, x: [0.0; 4], u: 0.0 },
            ..Default::default()
        };
        let reps = 40;
        let frac: f64 = (0..reps)
            .map(|s| generate_with(&sampler, &locs, Metric::Euclidean, &model, s).unwrap().treated_fraction())
            .sum::<f64>()
            / reps as f64;
        // expit(-0.85) = 0.29943...; binomial sd of the mean ~ 0.0036
        assert!((frac - expit(-0.85)).abs() < 0.015, "{frac}");
        assert!((expit(-0.85) - 0.2994).abs() < 1e-4);
    }

    #[test]
    fn noiseless_outcome_is_exact() {
        let locs = uniform_locations(30, 5);
        let sampler = GpSampler::new(&locs, Metric::Euclidean, MaternParams::new(1.0, 0.5).unwrap()).unwrap();
        let model = DataModel { outcome: OutcomeModel { noise_sd: 0.0, ..Default::default() }, ..Default::default() };
        let d = generate_with(&sampler, &locs, Metric::Euclidean, &model, 11).unwrap();
        for i in 0..30 {
            let expected = f64::from(u8::from(d.z[i])) + 0.55 * d.x[0][i] + 0.21 * d.x[1][i] + 1.17 * d.x[2][i]
                - 0.11 * d.x[3][i]
                + 3.0 * d.u[i];
            assert!((d.y[i] - expected).abs() < 1e-12);
        }
    }
}
