//! Zero-mean Gaussian-process draws with Matérn correlation on fixed
//! locations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::matern::{matern_unchecked, MaternParams};
use crate::error::{DapsmError, Result};
use crate::geometry::{Location, Metric};

/// Diagonal jitter tried once when the plain factorization fails.
pub const JITTER: f64 = 1e-8;

/// Cholesky factor of the correlation matrix, reused across replicates that
/// share locations and parameters.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: Cholesky<f64, Dyn>,
    pub params: MaternParams,
    /// Jitter that was needed, 0 if none.
    pub jitter: f64,
}

impl GpSampler {
    pub fn new(locations: &[Location], metric: Metric, params: MaternParams) -> Result<Self> {
        params.validate()?;
        let n = locations.len();
        if n == 0 {
            return Err(DapsmError::input("no locations to sample on"));
        }
        let mut corr = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..i {
                let c = matern_unchecked(metric.distance(locations[i], locations[j]), params);
                corr[(i, j)] = c;
                corr[(j, i)] = c;
            }
        }
        if let Some(factor) = Cholesky::new(corr.clone()) {
            return Ok(GpSampler { factor, params, jitter: 0.0 });
        }
        for i in 0..n {
            corr[(i, i)] += JITTER;
        }
        Cholesky::new(corr)
            .map(|factor| GpSampler { factor, params, jitter: JITTER })
            .ok_or_else(|| {
                DapsmError::Numerical(format!(
                    "Matérn correlation (nu = {}, r = {}) is not positive definite even with jitter {JITTER}",
                    params.nu, params.r
                ))
            })
    }

    pub fn len(&self) -> usize {
        self.factor.l_dirty().nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One draw, standardized to empirical mean 0 and sample variance 1.
    /// Consumes exactly `len()` standard normals from `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        standardize(&self.draw_raw(rng))
    }

    /// One draw from the unit-variance process, before standardization.
    pub fn draw_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.len();
        let xi = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        (self.factor.l() * xi).data.into()
    }
}

fn standardize(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let centered: Vec<f64> = v.iter().map(|x| x - mean).collect();
    if v.len() < 2 {
        return centered;
    }
    let sd = (centered.iter().map(|x| x * x).sum::<f64>() / (n - 1.0)).sqrt();
    centered.iter().map(|x| x / sd).collect()
}

/// Convenience wrapper: factorize and draw once with a seeded generator.
pub fn sample_gp(locations: &[Location], metric: Metric, params: MaternParams, seed: u64) -> Result<Vec<f64>> {
    let sampler = GpSampler::new(locations, metric, params)?;
    Ok(sampler.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}
