//! Matérn correlation, `rho(d) = 2^(1-nu) / Gamma(nu) * (d/r)^nu * K_nu(d/r)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{DapsmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    /// Smoothness.
    pub nu: f64,
    /// Range, in location units.
    pub r: f64,
}

impl MaternParams {
    pub fn new(nu: f64, r: f64) -> Result<Self> {
        let p = MaternParams { nu, r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu > 0.0 && self.r > 0.0 && self.nu.is_finite() && self.r.is_finite() {
            Ok(())
        } else {
            Err(DapsmError::input(format!(
                "Matérn parameters must be positive (nu = {}, r = {})",
                self.nu, self.r
            )))
        }
    }
}

/// Trapezoid step for the integral representation of `K_nu`. The integrand
/// is entire and decays doubly exponentially, so the rule converges
/// geometrically and this step is far below double-precision error.
const STEP: f64 = 0.05;

/// Modified Bessel function of the second kind, `K_nu(x)` for `x > 0`,
/// from `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k needs x > 0");
    let term = |t: f64| (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
    let mut sum = 0.5 * term(0.0);
    let mut k = 1;
    loop {
        let t = k as f64 * STEP;
        let v = term(t);
        sum += v;
        // past the peak and negligible
        if x * t.sinh() > nu && v <= sum * 1e-18 {
            break;
        }
        k += 1;
    }
    sum * STEP
}

pub fn matern_correlation(d: f64, params: MaternParams) -> Result<f64> {
    params.validate()?;
    if !(d >= 0.0) {
        return Err(DapsmError::input(format!("distance {d} must be nonnegative")));
    }
    Ok(matern_unchecked(d, params))
}

pub(crate) fn matern_unchecked(d: f64, MaternParams { nu, r }: MaternParams) -> f64 {
    if d == 0.0 {
        return 1.0;
    }
    let x = d / r;
    if x > 700.0 {
        return 0.0;
    }
    let log_scale = (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu) + nu * x.ln();
    (log_scale.exp() * bessel_k(nu, x)).min(1.0)
}
