//! 1-1 matching without replacement on a treated × control cost matrix with
//! a feasibility mask.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::geometry::DistanceMatrix;
use crate::lap::{self, Penalized};

/// Unit-level 1-1 matching: dataset indices of treated and control units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedSet {
    /// `(treated, control)` unit indices, sorted by treated index.
    pub pairs: Vec<(usize, usize)>,
    pub dropped_treated: Vec<usize>,
    pub total_cost: f64,
    /// Mean raw distance over pairs, in the distance matrix's units.
    pub mean_pair_distance: Option<f64>,
}

impl MatchedSet {
    /// Maps matrix rows/columns back to unit indices.
    pub fn from_assignment(
        assignment: &Assignment,
        treated: &[usize],
        control: &[usize],
        distances: &DistanceMatrix,
    ) -> Self {
        let mean_pair_distance = (!assignment.pairs.is_empty()).then(|| {
            assignment.pairs.iter().map(|&(i, j)| distances.get(i, j)).sum::<f64>()
                / assignment.pairs.len() as f64
        });
        MatchedSet {
            pairs: assignment.pairs.iter().map(|&(i, j)| (treated[i], control[j])).collect(),
            dropped_treated: assignment.unmatched_rows.iter().map(|&i| treated[i]).collect(),
            total_cost: assignment.total_cost,
            mean_pair_distance,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn treated_units(&self) -> Vec<usize> {
        self.pairs.iter().map(|&(t, _)| t).collect()
    }

    pub fn control_units(&self) -> Vec<usize> {
        self.pairs.iter().map(|&(_, c)| c).collect()
    }
}

/// Matrix-level matching result. Rows are treated units, columns controls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    /// `(row, column)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    /// Rows left without a control, ascending.
    pub unmatched_rows: Vec<usize>,
    pub total_cost: f64,
}

impl Assignment {
    fn from_pairs(mut pairs: Vec<(usize, usize)>, n_rows: usize, cost: &DMatrix<f64>) -> Self {
        pairs.sort_unstable();
        let matched: HashSet<usize> = pairs.iter().map(|&(i, _)| i).collect();
        let total_cost = pairs.iter().map(|&(i, j)| cost[(i, j)]).sum();
        Assignment {
            unmatched_rows: (0..n_rows).filter(|i| !matched.contains(i)).collect(),
            pairs,
            total_cost,
        }
    }
}

/// Exact min-cost matching: the largest achievable number of matched rows
/// first, then the smallest total cost among those.
pub fn optimal_assignment(cost: &DMatrix<f64>, feasible: &DMatrix<bool>) -> Assignment {
    assert_eq!(cost.shape(), feasible.shape());
    let (n_rows, n_cols) = cost.shape();
    let rows: Vec<usize> = (0..n_rows)
        .filter(|&i| (0..n_cols).any(|j| feasible[(i, j)]))
        .collect();
    let cols: Vec<usize> = (0..n_cols)
        .filter(|&j| rows.iter().any(|&i| feasible[(i, j)]))
        .collect();
    if rows.is_empty() {
        return Assignment::from_pairs(Vec::new(), n_rows, cost);
    }
    // Extra dummy columns absorb rows when controls run short.
    let width = cols.len().max(rows.len());
    let cell = |a: usize, b: usize| {
        if b < cols.len() && feasible[(rows[a], cols[b])] {
            Penalized::allowed(cost[(rows[a], cols[b])])
        } else {
            Penalized::forbidden()
        }
    };
    let chosen = lap::solve(rows.len(), width, cell);
    let pairs = chosen
        .iter()
        .enumerate()
        .filter(|&(a, &b)| b < cols.len() && feasible[(rows[a], cols[b])])
        .map(|(a, &b)| (rows[a], cols[b]))
        .collect();
    Assignment::from_pairs(pairs, n_rows, cost)
}

/// Greedy matching by repeated row minima.
///
/// Each pass takes the cheapest feasible control of every remaining row,
/// drops rows with none, orders rows by that minimum and accepts pairs in
/// order until a control repeats. Matched rows and controls are removed and
/// the pass repeats on what is left. Ties go to the lower index.
pub fn greedy_assignment(cost: &DMatrix<f64>, feasible: &DMatrix<bool>) -> Assignment {
    assert_eq!(cost.shape(), feasible.shape());
    let (n_rows, n_cols) = cost.shape();
    let mut rows: Vec<usize> = (0..n_rows).collect();
    let mut col_open = vec![true; n_cols];
    let mut pairs = Vec::with_capacity(n_rows.min(n_cols));

    while !rows.is_empty() {
        let mut minima: Vec<(f64, usize, usize)> = rows
            .iter()
            .filter_map(|&i| {
                (0..n_cols)
                    .filter(|&j| col_open[j] && feasible[(i, j)])
                    .map(|j| (cost[(i, j)], j))
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(c, j)| (c, i, j))
            })
            .collect();
        if minima.is_empty() {
            break;
        }
        minima.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut taken = HashSet::new();
        for &(_, i, j) in &minima {
            if !taken.insert(j) {
                break;
            }
            pairs.push((i, j));
            col_open[j] = false;
        }
        let still_open: HashSet<usize> = minima
            .iter()
            .map(|&(_, i, _)| i)
            .filter(|i| !pairs.iter().any(|&(pi, _)| pi == *i))
            .collect();
        rows.retain(|i| still_open.contains(i));
    }
    Assignment::from_pairs(pairs, n_rows, cost)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_feasible(c: &DMatrix<f64>) -> DMatrix<bool> {
        DMatrix::from_element(c.nrows(), c.ncols(), true)
    }

    #[test]
    fn greedy_without_conflict() {
        let c = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.6, 0.2]);
        let a = greedy_assignment(&c, &all_feasible(&c));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn greedy_resolves_conflict_by_iterating() {
        let c = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.2, 0.9]);
        let a = greedy_assignment(&c, &all_feasible(&c));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert!((a.total_cost - 1.0).abs() < 1e-15);
    }

    #[test]
    fn greedy_stops_at_first_repeat() {
        // minima: row0->c0 (0.1), row1->c0 (0.2), row2->c2 (0.3).
        // First pass matches only row0 even though row2 has a free control.
        let c = DMatrix::from_row_slice(3, 3, &[0.1, 0.9, 0.9, 0.2, 0.8, 0.9, 0.9, 0.9, 0.3]);
        let a = greedy_assignment(&c, &all_feasible(&c));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn greedy_drops_rows_without_feasible_controls() {
        let c = DMatrix::from_row_slice(2, 2, &[0.1, 0.5, 0.2, 0.9]);
        let mut f = all_feasible(&c);
        f[(1, 1)] = false;
        let a = greedy_assignment(&c, &f);
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.unmatched_rows, vec![1]);

        let none = DMatrix::from_element(2, 2, false);
        let a = greedy_assignment(&c, &none);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1]);
        let a = optimal_assignment(&c, &none);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn optimal_diagonal_and_greedy_counterexample() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let a = optimal_assignment(&c, &all_feasible(&c));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost, 2.0);

        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 10.0]);
        let opt = optimal_assignment(&c, &all_feasible(&c));
        assert_eq!(opt.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(opt.total_cost, 3.0);
        let greedy = greedy_assignment(&c, &all_feasible(&c));
        assert_eq!(greedy.total_cost, 11.0);
    }

    #[test]
    fn optimal_prefers_more_pairs_over_lower_cost() {
        // Using (0,0) alone is cheap, but it blocks row 1; two pairs win.
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 5.0, 5.0, 9.0]);
        let mut f = all_feasible(&c);
        f[(1, 1)] = false;
        let a = optimal_assignment(&c, &f);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn more_rows_than_columns() {
        let c = DMatrix::from_row_slice(3, 1, &[0.5, 0.1, 0.3]);
        let a = optimal_assignment(&c, &all_feasible(&c));
        assert_eq!(a.pairs, vec![(1, 0)]);
        assert_eq!(a.unmatched_rows, vec![0, 2]);
    }
}
