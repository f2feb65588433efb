//! Rectangular linear assignment (Hungarian method with potentials).
//!
//! Costs are [`Penalized`] values: an integer tier compared before the real
//! cost. Forbidden cells sit on tier 1, so the solver first minimizes how
//! many forbidden cells it is forced to use and only then the real cost.
//! This is the usual "big-M" trick with M exactly infinite, which keeps the
//! real-valued part free of the rounding a large finite M would introduce.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalized {
    pub tier: i64,
    pub cost: f64,
}

impl Penalized {
    pub const ZERO: Penalized = Penalized { tier: 0, cost: 0.0 };
    const INF: Penalized = Penalized { tier: i64::MAX / 4, cost: 0.0 };

    pub const fn allowed(cost: f64) -> Self {
        Penalized { tier: 0, cost }
    }

    pub const fn forbidden() -> Self {
        Penalized { tier: 1, cost: 0.0 }
    }
}

impl Add for Penalized {
    type Output = Penalized;
    fn add(self, rhs: Penalized) -> Penalized {
        Penalized { tier: self.tier + rhs.tier, cost: self.cost + rhs.cost }
    }
}

impl Sub for Penalized {
    type Output = Penalized;
    fn sub(self, rhs: Penalized) -> Penalized {
        Penalized { tier: self.tier - rhs.tier, cost: self.cost - rhs.cost }
    }
}

impl AddAssign for Penalized {
    fn add_assign(&mut self, rhs: Penalized) {
        *self = *self + rhs;
    }
}

impl SubAssign for Penalized {
    fn sub_assign(&mut self, rhs: Penalized) {
        *self = *self - rhs;
    }
}

impl PartialOrd for Penalized {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.tier.cmp(&other.tier) {
            Ordering::Equal => self.cost.partial_cmp(&other.cost),
            ord => Some(ord),
        }
    }
}

/// Minimum-cost assignment of every row to a distinct column.
///
/// Requires `n_rows <= n_cols`. Returns the column chosen for each row.
/// Among equal-cost candidates the lowest column index is explored first,
/// so results are deterministic.
pub fn solve<F>(n_rows: usize, n_cols: usize, cost: F) -> Vec<usize>
where
    F: Fn(usize, usize) -> Penalized,
{
    assert!(n_rows <= n_cols, "assignment needs at least as many columns as rows");
    if n_rows == 0 {
        return Vec::new();
    }
    let (n, m) = (n_rows, n_cols);
    let mut u = vec![Penalized::ZERO; n + 1];
    let mut v = vec![Penalized::ZERO; m + 1];
    // p[j]: row (1-based) currently assigned to column j; 0 = free.
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![Penalized::INF; m + 1];
    let mut used = vec![false; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(Penalized::INF);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = Penalized::INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
