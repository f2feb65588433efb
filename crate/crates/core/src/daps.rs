//! The DAPS cost matrix, calipers, matching and the balance-driven choice
//! of the weight `w`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::balance::BalanceScales;
use crate::dataset::Dataset;
use crate::error::{DapsmError, Result};
use crate::geometry::{pairwise_distances, standardize, DistanceMatrix, DistanceScheme, StandardizedDistanceMatrix};
use crate::matching::{greedy_assignment, optimal_assignment, Assignment, MatchedSet};
use crate::propensity::{fit_logistic, PropensityFit};

pub const DEFAULT_ASDM_CUTOFF: f64 = 0.1;
pub const DEFAULT_BISECTION_TOLERANCE: f64 = 0.001;

/// 0.00, 0.01, ..., 1.00
pub fn default_w_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaliperType {
    /// Threshold the combined DAPS value.
    Daps,
    /// Threshold only the propensity-score difference.
    PsComponent,
    /// Threshold only the standardized distance.
    DistanceComponent,
}

/// Width is in standard deviations of the thresholded quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caliper {
    pub width: f64,
    pub kind: CaliperType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchAlgorithm {
    Greedy,
    #[default]
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum WSearchMethod {
    Grid { grid: Vec<f64> },
    Bisection { tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WSearch {
    pub method: WSearchMethod,
    pub cutoff: f64,
    /// Grid search only: evaluate every grid point instead of stopping at
    /// the first balanced one.
    #[serde(default = "default_true")]
    pub full_trajectory: bool,
}

fn default_true() -> bool {
    true
}

impl Default for WSearch {
    fn default() -> Self {
        WSearch {
            method: WSearchMethod::Grid { grid: default_w_grid() },
            cutoff: DEFAULT_ASDM_CUTOFF,
            full_trajectory: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    Fixed(f64),
    Auto(WSearch),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DapsConfig {
    pub weight: Weight,
    #[serde(default)]
    pub caliper: Option<Caliper>,
    #[serde(default)]
    pub distance_scheme: DistanceScheme,
    #[serde(default)]
    pub algorithm: MatchAlgorithm,
}

impl Default for DapsConfig {
    fn default() -> Self {
        DapsConfig {
            weight: Weight::Auto(WSearch::default()),
            caliper: None,
            distance_scheme: DistanceScheme::MinMax,
            algorithm: MatchAlgorithm::Optimal,
        }
    }
}

impl DapsConfig {
    pub fn fixed(w: f64) -> Self {
        DapsConfig { weight: Weight::Fixed(w), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.weight {
            Weight::Fixed(w) => check_w(*w)?,
            Weight::Auto(search) => {
                if !(search.cutoff >= 0.0) {
                    return Err(DapsmError::input("ASDM cutoff must be nonnegative"));
                }
                match &search.method {
                    WSearchMethod::Grid { grid } => {
                        if grid.is_empty() {
                            return Err(DapsmError::input("w grid is empty"));
                        }
                        grid.iter().try_for_each(|&w| check_w(w))?;
                        if grid.windows(2).any(|p| p[1] < p[0]) {
                            return Err(DapsmError::input("w grid must be sorted ascending"));
                        }
                    }
                    WSearchMethod::Bisection { tolerance } => {
                        if !(*tolerance > 0.0) {
                            return Err(DapsmError::input("bisection tolerance must be positive"));
                        }
                    }
                }
            }
        }
        if let Some(c) = &self.caliper {
            if !(c.width > 0.0) {
                return Err(DapsmError::input("caliper width must be positive"));
            }
        }
        Ok(())
    }
}

fn check_w(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(DapsmError::input(format!("w = {w} is outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DapsMatrix {
    pub cost: DMatrix<f64>,
    pub feasible: DMatrix<bool>,
    pub w: f64,
    /// Population standard deviation of all finite pre-caliper costs.
    pub daps_sd: f64,
}

fn population_sd<'a>(values: impl Iterator<Item = &'a f64>) -> f64 {
    let finite: Vec<f64> = values.copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return 0.0;
    }
    let n = finite.len() as f64;
    let mean = finite.iter().sum::<f64>() / n;
    (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn ps_difference_matrix(ps_treated: &[f64], ps_control: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(ps_treated.len(), ps_control.len(), |i, j| (ps_treated[i] - ps_control[j]).abs())
}

/// `cost = w * |ps_i - ps_j| + (1 - w) * dist_ij`
///
/// Pairs with infinite distance start out infeasible whatever `w` is.
pub fn compute_daps(
    ps_treated: &[f64],
    ps_control: &[f64],
    std_dist: &StandardizedDistanceMatrix,
    w: f64,
) -> Result<DapsMatrix> {
    check_w(w)?;
    if std_dist.values.shape() != (ps_treated.len(), ps_control.len()) {
        return Err(DapsmError::input(format!(
            "distance matrix is {:?} but there are {} treated and {} control scores",
            std_dist.values.shape(),
            ps_treated.len(),
            ps_control.len()
        )));
    }
    let cost = DMatrix::from_fn(ps_treated.len(), ps_control.len(), |i, j| {
        let ps = (ps_treated[i] - ps_control[j]).abs();
        let dist = std_dist.get(i, j);
        if w == 1.0 {
            ps
        } else if w == 0.0 {
            dist
        } else {
            w * ps + (1.0 - w) * dist
        }
    });
    let feasible = std_dist.values.map(f64::is_finite);
    let daps_sd = population_sd(cost.iter());
    Ok(DapsMatrix { cost, feasible, w, daps_sd })
}

/// Marks cells above the caliper infeasible. `ps_diff` and `std_dist` are
/// only read for the component caliper types.
pub fn apply_caliper(
    mut m: DapsMatrix,
    caliper: &Caliper,
    ps_diff: &DMatrix<f64>,
    std_dist: &StandardizedDistanceMatrix,
) -> DapsMatrix {
    let component = match caliper.kind {
        CaliperType::Daps => &m.cost,
        CaliperType::PsComponent => ps_diff,
        CaliperType::DistanceComponent => &std_dist.values,
    };
    let sd = match caliper.kind {
        CaliperType::Daps => m.daps_sd,
        _ => population_sd(component.iter()),
    };
    let limit = caliper.width * sd;
    let over: Vec<bool> = component.iter().map(|&v| !(v <= limit)).collect();
    for (cell, too_far) in m.feasible.iter_mut().zip(over) {
        if too_far {
            *cell = false;
        }
    }
    m
}

pub fn greedy_match(m: &DapsMatrix) -> Assignment {
    greedy_assignment(&m.cost, &m.feasible)
}

pub fn optimal_match(m: &DapsMatrix) -> Assignment {
    optimal_assignment(&m.cost, &m.feasible)
}

pub fn run_matching(m: &DapsMatrix, algorithm: MatchAlgorithm) -> Assignment {
    match algorithm {
        MatchAlgorithm::Greedy => greedy_match(m),
        MatchAlgorithm::Optimal => optimal_match(m),
    }
}

/// Balance of the matched set at one value of `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalancePoint {
    pub w: f64,
    /// Largest covariate ASDM; infinite when nothing was matched.
    pub max_asdm: f64,
    pub balanced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchKind {
    Grid,
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WSelection {
    pub chosen_w: f64,
    /// Points in evaluation order.
    pub trajectory: Vec<BalancePoint>,
    pub cutoff: f64,
    pub method: SearchKind,
}

/// Smallest grid value whose matched set is balanced.
pub fn search_grid<F>(grid: &[f64], cutoff: f64, full_trajectory: bool, evaluate: F) -> Result<WSelection>
where
    F: Fn(f64) -> Result<BalancePoint> + Sync,
{
    let trajectory: Vec<BalancePoint> = if full_trajectory {
        grid.par_iter().map(|&w| evaluate(w)).collect::<Result<_>>()?
    } else {
        let mut points = Vec::new();
        for &w in grid {
            let p = evaluate(w)?;
            points.push(p);
            if p.balanced {
                break;
            }
        }
        points
    };
    let selection = |chosen_w| WSelection {
        chosen_w,
        trajectory: trajectory.clone(),
        cutoff,
        method: SearchKind::Grid,
    };
    match trajectory.iter().find(|p| p.balanced) {
        Some(p) => Ok(selection(p.w)),
        None => Err(DapsmError::NoBalancedW(Box::new(selection(f64::NAN)))),
    }
}

/// Bisection on `w` assuming balance worsens as `w` shrinks.
///
/// Starts at 0.5; after the k-th evaluation moves down by `2^-(k+1)` when
/// balanced and up otherwise. Stops after the first evaluation reached by
/// a move smaller than `tolerance`; returns the last balanced point visited.
pub fn search_bisection<F>(tolerance: f64, cutoff: f64, evaluate: F) -> Result<WSelection>
where
    F: Fn(f64) -> Result<BalancePoint>,
{
    if !(tolerance > 0.0) {
        return Err(DapsmError::input("bisection tolerance must be positive"));
    }
    let mut trajectory = Vec::new();
    let mut w = 0.5;
    let mut k = 1;
    let mut last_move = f64::INFINITY;
    loop {
        let point = evaluate(w)?;
        trajectory.push(point);
        if last_move < tolerance {
            break;
        }
        let step = 0.5f64.powi(k + 1);
        w = if point.balanced { w - step } else { w + step };
        last_move = step;
        k += 1;
    }
    let chosen = trajectory.iter().rev().find(|p| p.balanced).map(|p| p.w);
    let selection = WSelection {
        chosen_w: chosen.unwrap_or(f64::NAN),
        trajectory,
        cutoff,
        method: SearchKind::Bisection,
    };
    match chosen {
        Some(_) => Ok(selection),
        None => Err(DapsmError::NoBalancedW(Box::new(selection))),
    }
}

/// Everything about a dataset that does not depend on `w`: the propensity
/// fit, raw and standardized distances, and balance denominators.
#[derive(Debug, Clone)]
pub struct MatchingProblem<'a> {
    pub dataset: &'a Dataset,
    pub fit: PropensityFit,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    pub ps_treated: Vec<f64>,
    pub ps_control: Vec<f64>,
    pub ps_diff: DMatrix<f64>,
    pub distances: DistanceMatrix,
    /// `Err` holds the constant distance when min-max scaling is degenerate.
    std_dist: std::result::Result<StandardizedDistanceMatrix, f64>,
}

impl<'a> MatchingProblem<'a> {
    pub fn new(dataset: &'a Dataset, scheme: DistanceScheme) -> Result<Self> {
        let fit = fit_logistic(&dataset.design()?, &dataset.treatment)?;
        Self::with_scores(dataset, fit, scheme)
    }

    /// Uses an existing propensity fit whose `fitted` values cover every unit.
    pub fn with_scores(dataset: &'a Dataset, fit: PropensityFit, scheme: DistanceScheme) -> Result<Self> {
        if fit.fitted.len() != dataset.n_units() {
            return Err(DapsmError::input("propensity scores do not cover every unit"));
        }
        let treated = dataset.treated_indices();
        let control = dataset.control_indices();
        let ps_treated: Vec<f64> = treated.iter().map(|&i| fit.fitted[i]).collect();
        let ps_control: Vec<f64> = control.iter().map(|&i| fit.fitted[i]).collect();
        let loc = |ids: &[usize]| ids.iter().map(|&i| dataset.locations[i]).collect::<Vec<_>>();
        let distances = pairwise_distances(&loc(&treated), &loc(&control), dataset.metric)?;
        let std_dist = match standardize(&distances, scheme) {
            Ok(s) => Ok(s),
            Err(DapsmError::DegenerateScale(v)) => Err(v),
            Err(e) => return Err(e),
        };
        Ok(MatchingProblem {
            dataset,
            fit,
            ps_diff: ps_difference_matrix(&ps_treated, &ps_control),
            treated,
            control,
            ps_treated,
            ps_control,
            distances,
            std_dist,
        })
    }

    /// Standardized distances; when every pair is equidistant the result is
    /// usable only at `w = 1`, where it is ignored.
    fn std_dist_for(&self, w: f64) -> Result<std::borrow::Cow<'_, StandardizedDistanceMatrix>> {
        match &self.std_dist {
            Ok(s) => Ok(std::borrow::Cow::Borrowed(s)),
            Err(_) if w == 1.0 => Ok(std::borrow::Cow::Owned(StandardizedDistanceMatrix {
                values: DMatrix::zeros(self.treated.len(), self.control.len()),
                scheme: DistanceScheme::MinMax,
            })),
            Err(v) => Err(DapsmError::DegenerateScale(*v)),
        }
    }

    pub fn daps_matrix(&self, w: f64, caliper: Option<&Caliper>) -> Result<DapsMatrix> {
        let std_dist = self.std_dist_for(w)?;
        let m = compute_daps(&self.ps_treated, &self.ps_control, &std_dist, w)?;
        Ok(match caliper {
            Some(c) => apply_caliper(m, c, &self.ps_diff, &std_dist),
            None => m,
        })
    }

    pub fn match_at(&self, w: f64, config: &DapsConfig) -> Result<(DapsMatrix, MatchedSet)> {
        let m = self.daps_matrix(w, config.caliper.as_ref())?;
        let assignment = run_matching(&m, config.algorithm);
        let matched = MatchedSet::from_assignment(&assignment, &self.treated, &self.control, &self.distances);
        Ok((m, matched))
    }

    pub fn balance_at(&self, w: f64, config: &DapsConfig, scales: &BalanceScales, cutoff: f64) -> Result<BalancePoint> {
        let (_, matched) = self.match_at(w, config)?;
        Ok(match scales.matched_asdms(self.dataset, &matched) {
            Some(asdms) => {
                let max_asdm = asdms.iter().copied().fold(0.0, f64::max);
                BalancePoint { w, max_asdm, balanced: asdms.iter().all(|&a| a <= cutoff) }
            }
            None => BalancePoint { w, max_asdm: f64::INFINITY, balanced: false },
        })
    }

    pub fn select_w(&self, config: &DapsConfig, search: &WSearch) -> Result<WSelection> {
        let scales = BalanceScales::from_dataset(self.dataset)?;
        let eval = |w| self.balance_at(w, config, &scales, search.cutoff);
        match &search.method {
            WSearchMethod::Grid { grid } => search_grid(grid, search.cutoff, search.full_trajectory, eval),
            WSearchMethod::Bisection { tolerance } => search_bisection(*tolerance, search.cutoff, eval),
        }
    }
}

pub fn select_w_grid(dataset: &Dataset, config: &DapsConfig, w_grid: &[f64], asdm_cutoff: f64) -> Result<WSelection> {
    let search = WSearch {
        method: WSearchMethod::Grid { grid: w_grid.to_vec() },
        cutoff: asdm_cutoff,
        full_trajectory: true,
    };
    let cfg = DapsConfig { weight: Weight::Auto(search.clone()), ..config.clone() };
    cfg.validate()?;
    MatchingProblem::new(dataset, config.distance_scheme)?.select_w(&cfg, &search)
}

pub fn select_w_bisection(dataset: &Dataset, config: &DapsConfig, tolerance: f64, asdm_cutoff: f64) -> Result<WSelection> {
    let search = WSearch {
        method: WSearchMethod::Bisection { tolerance },
        cutoff: asdm_cutoff,
        full_trajectory: false,
    };
    let cfg = DapsConfig { weight: Weight::Auto(search.clone()), ..config.clone() };
    cfg.validate()?;
    MatchingProblem::new(dataset, config.distance_scheme)?.select_w(&cfg, &search)
}

#[derive(Debug, Clone)]
pub struct DapsmOutput {
    pub fit: PropensityFit,
    pub distances: DistanceMatrix,
    pub daps: DapsMatrix,
    pub matched: MatchedSet,
    pub w_selection: Option<WSelection>,
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
}

impl DapsmOutput {
    pub fn w(&self) -> f64 {
        self.daps.w
    }
}

/// Full pipeline: propensity fit, distances, optional choice of `w`, cost
/// matrix, caliper and matching.
pub fn dapsm(dataset: &Dataset, config: &DapsConfig) -> Result<DapsmOutput> {
    config.validate()?;
    let problem = MatchingProblem::new(dataset, config.distance_scheme)?;
    dapsm_with(&problem, config)
}

pub fn dapsm_with(problem: &MatchingProblem<'_>, config: &DapsConfig) -> Result<DapsmOutput> {
    let (w, w_selection) = match &config.weight {
        Weight::Fixed(w) => (*w, None),
        Weight::Auto(search) => {
            let sel = problem.select_w(config, search)?;
            (sel.chosen_w, Some(sel))
        }
    };
    let (daps, matched) = problem.match_at(w, config)?;
    Ok(DapsmOutput {
        fit: problem.fit.clone(),
        distances: problem.distances.clone(),
        daps,
        matched,
        w_selection,
        treated: problem.treated.clone(),
        control: problem.control.clone(),
    })
}
