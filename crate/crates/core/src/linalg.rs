use nalgebra::{DMatrix, DVector};

use crate::error::{DapsmError, Result};

/// Relative pivot size below which a column counts as linearly dependent.
const RANK_TOL: f64 = 1e-10;

pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    /// `(X'X)^-1`
    pub xtx_inv: DMatrix<f64>,
    pub rss: f64,
}

/// Least squares through a Householder QR of the column-scaled design.
///
/// On rank deficiency returns `Err(RankDeficient)` naming the first
/// dependent column index, which callers map to a column name.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let (n, p) = x.shape();
    if n < p {
        return Err(DapsmError::RankDeficient(format!(
            "{n} rows cannot identify {p} coefficients"
        )));
    }
    let scale: Vec<f64> = x
        .column_iter()
        .map(|c| {
            let norm = c.norm();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = x.clone();
    for (k, mut col) in xs.column_iter_mut().enumerate() {
        col /= scale[k];
    }
    let qr = xs.qr();
    let r = qr.r();
    if let Some(k) = (0..p).find(|&k| r[(k, k)].abs() <= RANK_TOL) {
        return Err(DapsmError::RankDeficient(format!("column {k}")));
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let qty_head = qty.rows(0, p).into_owned();
    let coef_s = r
        .solve_upper_triangular(&qty_head)
        .ok_or_else(|| DapsmError::Numerical("triangular solve failed".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| DapsmError::Numerical("triangular inverse failed".into()))?;
    let mut xtx_inv = &r_inv * r_inv.transpose();
    for a in 0..p {
        for b in 0..p {
            xtx_inv[(a, b)] /= scale[a] * scale[b];
        }
    }
    let coef = DVector::from_iterator(p, coef_s.iter().zip(&scale).map(|(c, s)| c / s));
    let resid = y - x * &coef;
    Ok(LeastSquares {
        coef,
        xtx_inv,
        rss: resid.norm_squared(),
    })
}

/// Empirical quantile with linear interpolation between order statistics.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
