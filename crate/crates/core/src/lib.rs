//! Distance adjusted propensity score matching (DAPSm).
//!
//! Treated and control units are paired on a cost that mixes the absolute
//! propensity-score difference with standardized spatial distance:
//!
//! ```text
//! cost(i, j) = w * |ps_i - ps_j| + (1 - w) * dist(i, j)
//! ```
//!
//! Small `w` favours geographically close pairs, which helps balance
//! confounders that vary smoothly over space but were never measured.
//! The crate covers the whole workflow: propensity fitting, the cost matrix
//! and calipers, greedy and optimal 1-1 matching, balance-driven choice of
//! `w`, effect estimation, the baseline matching methods, and a seeded Monte
//! Carlo harness built on Matérn Gaussian-process confounders.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balance;
pub mod comparators;
pub mod daps;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod lap;
mod linalg;
pub mod matching;
pub mod propensity;
pub mod simulation;

pub use dataset::Dataset;
pub use error::{DapsmError, Result};
