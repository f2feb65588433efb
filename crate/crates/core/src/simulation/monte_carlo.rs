//! Seeded Monte Carlo comparison of DAPSm against the baseline methods over
//! a grid of Matérn smoothness and range values.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate_with, uniform_locations, DataModel, SimulatedDataset, HIDDEN_NAME, OBSERVED_NAMES};
use super::gp::GpSampler;
use super::matern::MaternParams;
use crate::balance::BalanceScales;
use crate::comparators::{self, distance_caliper_match_with, gold_outcome_estimate, ps_match};
use crate::daps::{dapsm_with, default_w_grid, DapsConfig, MatchingProblem, WSearch, WSearchMethod, Weight, DEFAULT_ASDM_CUTOFF};
use crate::error::{DapsmError, Result};
use crate::estimation::att_diff_means;
use crate::geometry::{Location, Metric};
use crate::linalg::quantile;
use crate::matching::MatchedSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodSpec {
    GoldOutcome,
    GoldPs {
        #[serde(default)]
        ps_caliper: Option<f64>,
    },
    Naive {
        #[serde(default)]
        ps_caliper: Option<f64>,
    },
    NaiveCoords {
        #[serde(default)]
        ps_caliper: Option<f64>,
    },
    DistanceCaliper {
        distance_quantile: f64,
        #[serde(default)]
        ps_caliper: Option<f64>,
    },
    Dapsm {
        #[serde(default = "simulation_daps_config")]
        config: DapsConfig,
    },
}

/// Automatic `w` on the 0.01 grid, stopping at the first balanced value.
pub fn simulation_daps_config() -> DapsConfig {
    DapsConfig {
        weight: Weight::Auto(WSearch {
            method: WSearchMethod::Grid { grid: default_w_grid() },
            cutoff: DEFAULT_ASDM_CUTOFF,
            full_trajectory: false,
        }),
        ..DapsConfig::default()
    }
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::GoldOutcome => "gold-outcome".into(),
            MethodSpec::GoldPs { .. } => "gold-ps".into(),
            MethodSpec::Naive { .. } => "naive".into(),
            MethodSpec::NaiveCoords { .. } => "naive-coords".into(),
            MethodSpec::DistanceCaliper { distance_quantile, .. } => {
                format!("distcal-{}", (distance_quantile * 100.0).round())
            }
            MethodSpec::Dapsm { .. } => "dapsm".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::GoldOutcome => Ok(()),
            MethodSpec::GoldPs { ps_caliper } | MethodSpec::Naive { ps_caliper } | MethodSpec::NaiveCoords { ps_caliper } => {
                comparators::ComparatorSpec { ps_caliper: *ps_caliper, ..comparators::ComparatorSpec::new(comparators::ComparatorKind::Naive) }
                    .validate()
            }
            MethodSpec::DistanceCaliper { distance_quantile, ps_caliper } => comparators::ComparatorSpec {
                ps_caliper: *ps_caliper,
                ..comparators::ComparatorSpec::distance_caliper(*distance_quantile)
            }
            .validate(),
            MethodSpec::Dapsm { config } => config.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum LocationSource {
    /// Uniform on the unit square, Euclidean distance.
    UniformRandom { seed: u64 },
    Fixed { metric: Metric, points: Vec<Location> },
}

/// Missing fields take their values from `SimulationConfig::default()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_units: usize,
    pub nu_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub n_replicates: usize,
    pub base_seed: u64,
    pub locations: LocationSource,
    pub methods: Vec<MethodSpec>,
    pub model: DataModel,
}

impl Default for SimulationConfig {
    /// Four corner cells, 400 units, 50 replicates.
    fn default() -> Self {
        SimulationConfig {
            n_units: 400,
            nu_grid: vec![0.1, 1.46],
            r_grid: vec![0.1, 1.0],
            n_replicates: 50,
            base_seed: 20_180_101,
            locations: LocationSource::UniformRandom { seed: 1 },
            methods: vec![
                MethodSpec::GoldOutcome,
                MethodSpec::GoldPs { ps_caliper: None },
                MethodSpec::Naive { ps_caliper: None },
                MethodSpec::NaiveCoords { ps_caliper: None },
                MethodSpec::DistanceCaliper { distance_quantile: 0.1, ps_caliper: None },
                MethodSpec::Dapsm { config: simulation_daps_config() },
            ],
            model: DataModel::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(DapsmError::input("n_replicates must be at least 1"));
        }
        if self.nu_grid.is_empty() || self.r_grid.is_empty() {
            return Err(DapsmError::input("nu_grid and r_grid must be nonempty"));
        }
        for &nu in &self.nu_grid {
            for &r in &self.r_grid {
                MaternParams::new(nu, r)?;
            }
        }
        if self.methods.is_empty() {
            return Err(DapsmError::input("no methods configured"));
        }
        self.methods.iter().try_for_each(MethodSpec::validate)?;
        match &self.locations {
            LocationSource::UniformRandom { .. } if self.n_units < 10 => {
                Err(DapsmError::input("n_units must be at least 10"))
            }
            LocationSource::Fixed { points, .. } if points.len() != self.n_units => Err(DapsmError::input(format!(
                "n_units = {} but {} fixed locations were given",
                self.n_units,
                points.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn cells(&self) -> Vec<MaternParams> {
        self.nu_grid
            .iter()
            .flat_map(|&nu| self.r_grid.iter().map(move |&r| MaternParams { nu, r }))
            .collect()
    }

    fn resolve_locations(&self) -> (Vec<Location>, Metric) {
        match &self.locations {
            LocationSource::UniformRandom { seed } => (uniform_locations(self.n_units, *seed), Metric::Euclidean),
            LocationSource::Fixed { metric, points } => (points.clone(), *metric),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one replicate's random stream.
pub fn replicate_seed(base_seed: u64, cell: usize, replicate: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ cell as u64) ^ replicate as u64)
}

/// Outcome of one method on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodRecord {
    pub method: String,
    pub success: bool,
    pub estimate: Option<f64>,
    pub n_pairs: usize,
    pub n_dropped: Option<usize>,
    pub mean_pair_distance: Option<f64>,
    /// Matched-set ASDM of X1..X4 and U.
    pub asdm: Option<Vec<f64>>,
    pub chosen_w: Option<f64>,
    pub error: Option<String>,
}

impl MethodRecord {
    fn failed(method: String, error: Option<String>) -> Self {
        MethodRecord {
            method,
            success: false,
            estimate: None,
            n_pairs: 0,
            n_dropped: None,
            mean_pair_distance: None,
            asdm: None,
            chosen_w: None,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub nu: f64,
    pub r: f64,
    pub replicate: usize,
    pub seed: u64,
    pub n_treated: usize,
    pub methods: Vec<MethodRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMethodSummary {
    pub nu: f64,
    pub r: f64,
    pub method: String,
    pub n_replicates: usize,
    pub n_success: usize,
    pub fail_pct: f64,
    /// MSE over replicates where both this method and gold-ps matched,
    /// divided by gold-ps MSE over the same replicates.
    pub relative_mse: Option<f64>,
    pub mse: Option<f64>,
    pub abs_bias: Option<f64>,
    pub mean_dropped: Option<f64>,
    pub dropped_q1: Option<f64>,
    pub dropped_q3: Option<f64>,
    pub mean_pair_distance: Option<f64>,
    /// Mean ASDM of X1..X4 and U over successful replicates.
    pub mean_asdm: Option<Vec<f64>>,
    pub median_abs_asdm_u: Option<f64>,
    pub mean_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub balance_covariates: Vec<String>,
    pub rows: Vec<CellMethodSummary>,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub summary: SimulationSummary,
    pub records: Vec<ReplicateRecord>,
}

fn record_from_match(
    method: String,
    matched: Result<MatchedSet>,
    observed: &crate::Dataset,
    hidden: &crate::Dataset,
    scales: Option<&BalanceScales>,
    chosen_w: Option<f64>,
) -> MethodRecord {
    let matched = match matched {
        Ok(m) => m,
        Err(e) => return MethodRecord::failed(method, Some(e.to_string())),
    };
    if matched.is_empty() {
        return MethodRecord::failed(method, None);
    }
    let estimate = match att_diff_means(observed, &matched) {
        Ok(e) => e.estimate,
        Err(e) => return MethodRecord::failed(method, Some(e.to_string())),
    };
    MethodRecord {
        method,
        success: true,
        estimate: Some(estimate),
        n_pairs: matched.n_pairs(),
        n_dropped: Some(matched.dropped_treated.len()),
        mean_pair_distance: matched.mean_pair_distance,
        asdm: scales.and_then(|s| s.matched_asdms(hidden, &matched)),
        chosen_w,
        error: None,
    }
}

/// Runs every configured method on one simulated dataset. Method failures
/// become unsuccessful records.
pub fn run_methods(sim: &SimulatedDataset, methods: &[MethodSpec]) -> Vec<MethodRecord> {
    let observed = sim.observed();
    let hidden = sim.with_hidden();
    let scales = BalanceScales::from_dataset(&hidden).ok();
    let naive = comparators::naive_fit(&observed);

    methods
        .iter()
        .map(|spec| {
            let label = spec.label();
            let from = |m: Result<MatchedSet>, w: Option<f64>| {
                record_from_match(label.clone(), m, &observed, &hidden, scales.as_ref(), w)
            };
            let naive_ps = || naive.as_ref().map(|f| f.fitted.as_slice()).map_err(|e| DapsmError::Estimation(e.to_string()));
            match spec {
                MethodSpec::GoldOutcome => match gold_outcome_estimate(sim) {
                    Ok(est) => MethodRecord {
                        method: label.clone(),
                        success: true,
                        estimate: Some(est),
                        ..MethodRecord::failed(label.clone(), None)
                    },
                    Err(e) => MethodRecord::failed(label.clone(), Some(e.to_string())),
                },
                MethodSpec::GoldPs { ps_caliper } => from(comparators::gold_ps_match(sim, *ps_caliper), None),
                MethodSpec::Naive { ps_caliper } => {
                    from(naive_ps().and_then(|ps| ps_match(&observed, ps, *ps_caliper, None)), None)
                }
                MethodSpec::NaiveCoords { ps_caliper } => from(comparators::naive_coords_match(&observed, *ps_caliper), None),
                MethodSpec::DistanceCaliper { distance_quantile, ps_caliper } => from(
                    naive_ps().and_then(|ps| {
                        distance_caliper_match_with(&observed, ps, *distance_quantile, *ps_caliper).map(|(m, _)| m)
                    }),
                    None,
                ),
                MethodSpec::Dapsm { config } => {
                    let out = naive
                        .as_ref()
                        .map_err(|e| DapsmError::Estimation(e.to_string()))
                        .and_then(|fit| MatchingProblem::with_scores(&observed, fit.clone(), config.distance_scheme))
                        .and_then(|problem| dapsm_with(&problem, config));
                    match out {
                        Ok(o) => {
                            let w = o.w();
                            from(Ok(o.matched), Some(w))
                        }
                        Err(e) => from(Err(e), None),
                    }
                }
            }
        })
        .collect()
}

pub fn run_monte_carlo(config: &SimulationConfig) -> Result<SimulationRun> {
    config.validate()?;
    let (locations, metric) = config.resolve_locations();
    let mut records = Vec::with_capacity(config.cells().len() * config.n_replicates);
    for (cell, params) in config.cells().into_iter().enumerate() {
        let sampler = GpSampler::new(&locations, metric, params)?;
        let cell_records = (0..config.n_replicates)
            .into_par_iter()
            .map(|rep| {
                let seed = replicate_seed(config.base_seed, cell, rep);
                let sim = generate_with(&sampler, &locations, metric, &config.model, seed)?;
                Ok(ReplicateRecord {
                    cell,
                    nu: params.nu,
                    r: params.r,
                    replicate: rep,
                    seed,
                    n_treated: sim.z.iter().filter(|&&t| t).count(),
                    methods: run_methods(&sim, &config.methods),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        records.extend(cell_records);
    }
    let summary = summarize(config, &records);
    Ok(SimulationRun { summary, records })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Aggregates per-replicate records into one row per cell and method.
pub fn summarize(config: &SimulationConfig, records: &[ReplicateRecord]) -> SimulationSummary {
    let labels: Vec<String> = config.methods.iter().map(MethodSpec::label).collect();
    let gold_ps = labels.iter().position(|l| l == "gold-ps");
    let effect = config.model.outcome.effect;
    let mut rows = Vec::new();
    for (cell, params) in config.cells().into_iter().enumerate() {
        let reps: Vec<&ReplicateRecord> = records.iter().filter(|r| r.cell == cell).collect();
        for (m, label) in labels.iter().enumerate() {
            let ok: Vec<&MethodRecord> = reps.iter().map(|r| &r.methods[m]).filter(|x| x.success).collect();
            let errors: Vec<f64> = ok.iter().filter_map(|x| x.estimate).map(|e| e - effect).collect();

            let relative_mse = gold_ps.and_then(|g| {
                let (num, den): (Vec<f64>, Vec<f64>) = reps
                    .iter()
                    .filter(|r| r.methods[m].success && r.methods[g].success)
                    .map(|r| {
                        let sq = |x: &MethodRecord| (x.estimate.unwrap_or(f64::NAN) - effect).powi(2);
                        (sq(&r.methods[m]), sq(&r.methods[g]))
                    })
                    .unzip();
                match (mean(&num), mean(&den)) {
                    (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                    _ => None,
                }
            });

            let dropped: Vec<f64> = ok.iter().filter_map(|x| x.n_dropped).map(|d| d as f64).collect();
            let distances: Vec<f64> = ok.iter().filter_map(|x| x.mean_pair_distance).collect();
            let asdms: Vec<&Vec<f64>> = ok.iter().filter_map(|x| x.asdm.as_ref()).collect();
            let mean_asdm = (!asdms.is_empty()).then(|| {
                (0..asdms[0].len())
                    .map(|k| asdms.iter().map(|a| a[k]).sum::<f64>() / asdms.len() as f64)
                    .collect::<Vec<f64>>()
            });
            let u_asdm: Vec<f64> = asdms.iter().filter_map(|a| a.last().copied()).collect();
            let ws: Vec<f64> = ok.iter().filter_map(|x| x.chosen_w).collect();

            rows.push(CellMethodSummary {
                nu: params.nu,
                r: params.r,
                method: label.clone(),
                n_replicates: reps.len(),
                n_success: ok.len(),
                fail_pct: 100.0 * (reps.len() - ok.len()) as f64 / reps.len().max(1) as f64,
                relative_mse,
                mse: mean(&errors.iter().map(|e| e * e).collect::<Vec<_>>()),
                abs_bias: mean(&errors).map(f64::abs),
                mean_dropped: mean(&dropped),
                dropped_q1: (!dropped.is_empty()).then(|| quantile(&dropped, 0.25)),
                dropped_q3: (!dropped.is_empty()).then(|| quantile(&dropped, 0.75)),
                mean_pair_distance: mean(&distances),
                mean_asdm,
                median_abs_asdm_u: (!u_asdm.is_empty()).then(|| quantile(&u_asdm, 0.5)),
                mean_w: mean(&ws),
            });
        }
    }
    let mut balance_covariates: Vec<String> = OBSERVED_NAMES.iter().map(|s| s.to_string()).collect();
    balance_covariates.push(HIDDEN_NAME.to_string());
    SimulationSummary { balance_covariates, rows }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl SimulationSummary {
    pub fn row(&self, nu: f64, r: f64, method: &str) -> Option<&CellMethodSummary> {
        self.rows.iter().find(|x| x.nu == nu && x.r == r && x.method == method)
    }

    /// One CSV row per cell and method.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "nu,r,method,n_replicates,n_success,fail_pct,relative_mse,mse,abs_bias,mean_dropped,dropped_q1,dropped_q3,mean_pair_distance",
        );
        for name in &self.balance_covariates {
            write!(out, ",asdm_{name}").unwrap();
        }
        out.push_str(",median_abs_asdm_U,mean_w\n");
        for row in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{:.6},{},{},{},{},{},{},{}",
                row.nu,
                row.r,
                row.method,
                row.n_replicates,
                row.n_success,
                row.fail_pct,
                opt(row.relative_mse),
                opt(row.mse),
                opt(row.abs_bias),
                opt(row.mean_dropped),
                opt(row.dropped_q1),
                opt(row.dropped_q3),
                opt(row.mean_pair_distance),
            )
            .unwrap();
            for k in 0..self.balance_covariates.len() {
                out.push(',');
                out.push_str(&opt(row.mean_asdm.as_ref().map(|a| a[k])));
            }
            writeln!(out, ",{},{}", opt(row.median_abs_asdm_u), opt(row.mean_w)).unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Per-replicate, per-method records as CSV, for auditing the summary.
pub fn records_to_table(records: &[ReplicateRecord]) -> String {
    let mut out = String::from(
        "cell,nu,r,replicate,seed,n_treated,method,success,estimate,n_pairs,n_dropped,mean_pair_distance,asdm_X1,asdm_X2,asdm_X3,asdm_X4,asdm_U,chosen_w,error\n",
    );
    for rec in records {
        for m in &rec.methods {
            write!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.cell,
                rec.nu,
                rec.r,
                rec.replicate,
                rec.seed,
                rec.n_treated,
                m.method,
                m.success,
                opt(m.estimate),
                m.n_pairs,
                m.n_dropped.map_or("NA".into(), |d| d.to_string()),
                opt(m.mean_pair_distance),
            )
            .unwrap();
            for k in 0..5 {
                out.push(',');
                out.push_str(&opt(m.asdm.as_ref().and_then(|a| a.get(k).copied())));
            }
            let err = m.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(out, ",{},{}", opt(m.chosen_w), err).unwrap();
        }
    }
    out
}
