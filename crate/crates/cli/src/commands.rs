use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dapsm::balance::{balance_report, BalanceReport};
use dapsm::comparators::{distance_caliper_match_with, naive_coords_fit, naive_fit, ps_match};
use dapsm::daps::{
    Caliper, CaliperType, DapsConfig, MatchAlgorithm, MatchingProblem, WSearch, WSearchMethod, WSelection, Weight,
};
use dapsm::estimation::{att_diff_means_at, att_linear_adjusted_at, EffectEstimate};
use dapsm::geometry::DistanceScheme;
use dapsm::matching::MatchedSet;
use dapsm::simulation::monte_carlo::{records_to_table, run_monte_carlo, LocationSource, SimulationConfig};
use dapsm::{DapsmError, Dataset};

use crate::data::{read_dataset, read_locations, COVARIATE_PREFIX};
use crate::error::CliError;
use crate::provenance::Provenance;

pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dapsm,
    Naive,
    NaiveCoords,
    DistanceCaliper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WMethod {
    Grid,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaliperKind {
    Daps,
    Ps,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scheme {
    Minmax,
    Ecdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algorithm {
    Greedy,
    Optimal,
}

fn name<T: ValueEnum>(v: T) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WArg {
    Auto,
    Fixed(f64),
}

impl std::str::FromStr for WArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(WArg::Auto);
        }
        match s.parse::<f64>() {
            Ok(w) if (0.0..=1.0).contains(&w) => Ok(WArg::Fixed(w)),
            _ => Err(format!("expected `auto` or a number in [0, 1], got `{s}`")),
        }
    }
}

impl std::fmt::Display for WArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WArg::Auto => f.write_str("auto"),
            WArg::Fixed(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateArg {
    None,
    Means,
    /// Linear model on intercept, treatment and these covariates.
    Linear(Vec<String>),
}

impl std::str::FromStr for EstimateArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(EstimateArg::None),
            "means" => Ok(EstimateArg::Means),
            "linear" => Ok(EstimateArg::Linear(Vec::new())),
            list => {
                let names: Vec<String> = list
                    .split(',')
                    .map(|n| n.trim())
                    .map(|n| n.strip_prefix(COVARIATE_PREFIX).unwrap_or(n).to_string())
                    .collect();
                if names.iter().any(String::is_empty) {
                    return Err(format!("bad covariate list `{list}`"));
                }
                Ok(EstimateArg::Linear(names))
            }
        }
    }
}

impl std::fmt::Display for EstimateArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimateArg::None => f.write_str("none"),
            EstimateArg::Means => f.write_str("means"),
            EstimateArg::Linear(v) if v.is_empty() => f.write_str("linear"),
            EstimateArg::Linear(v) => f.write_str(&v.join(",")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Unit-level CSV file
    pub input: PathBuf,
    /// Output directory (created if missing)
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Dapsm)]
    pub method: Method,
    /// `auto` or a fixed value in [0, 1]
    #[arg(long, default_value = "auto")]
    pub w: WArg,
    #[arg(long, value_enum, default_value_t = WMethod::Grid)]
    pub w_method: WMethod,
    /// Grid spacing; 1 / step must be a whole number
    #[arg(long, default_value_t = 0.01)]
    pub w_step: f64,
    /// Bisection stopping tolerance
    #[arg(long, default_value_t = 0.001)]
    pub tolerance: f64,
    /// Largest acceptable ASDM for every covariate
    #[arg(long, default_value_t = 0.15)]
    pub cutoff: f64,
    /// Caliper width in standard deviations
    #[arg(long)]
    pub caliper: Option<f64>,
    /// Defaults to `daps` for dapsm and `ps` for the other methods
    #[arg(long, value_enum)]
    pub caliper_type: Option<CaliperKind>,
    #[arg(long, value_enum, default_value_t = Scheme::Minmax)]
    pub distance_scheme: Scheme,
    #[arg(long, value_enum, default_value_t = Algorithm::Optimal)]
    pub algorithm: Algorithm,
    /// Distance quantile for the distance-caliper method
    #[arg(long, default_value_t = 0.1)]
    pub distance_quantile: f64,
    /// `none`, `means`, `linear`, or a comma-separated covariate list for the
    /// adjusted linear model
    #[arg(long, default_value = "none")]
    pub estimate: EstimateArg,
    /// Confidence level of the effect interval
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Recorded in output headers; matching itself is deterministic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl MatchArgs {
    fn caliper_kind(&self) -> CaliperKind {
        self.caliper_type.unwrap_or(match self.method {
            Method::Dapsm => CaliperKind::Daps,
            _ => CaliperKind::Ps,
        })
    }

    pub fn flags(&self) -> String {
        let mut s = format!(
            "{} --out {} --method {} --w {} --w-method {} --w-step {} --tolerance {} --cutoff {}",
            self.input.display(),
            self.out.display(),
            name(self.method),
            self.w,
            name(self.w_method),
            self.w_step,
            self.tolerance,
            self.cutoff,
        );
        if let Some(c) = self.caliper {
            write!(s, " --caliper {c}").unwrap();
        }
        write!(
            s,
            " --caliper-type {} --distance-scheme {} --algorithm {} --distance-quantile {} --estimate {} --level {} --seed {}",
            name(self.caliper_kind()),
            name(self.distance_scheme),
            name(self.algorithm),
            self.distance_quantile,
            self.estimate,
            self.level,
            self.seed
        )
        .unwrap();
        s
    }

    fn w_grid(&self) -> Result<Vec<f64>, CliError> {
        let steps = (1.0 / self.w_step).round();
        if !(self.w_step > 0.0 && self.w_step <= 1.0) || ((steps * self.w_step) - 1.0).abs() > 1e-9 {
            return Err(CliError::Usage(format!("--w-step {} does not divide [0, 1] evenly", self.w_step)));
        }
        let n = steps as usize;
        Ok((0..=n).map(|k| k as f64 / n as f64).collect())
    }

    pub fn daps_config(&self) -> Result<DapsConfig, CliError> {
        let weight = match self.w {
            WArg::Fixed(w) => Weight::Fixed(w),
            WArg::Auto => Weight::Auto(WSearch {
                method: match self.w_method {
                    WMethod::Grid => WSearchMethod::Grid { grid: self.w_grid()? },
                    WMethod::Bisection => WSearchMethod::Bisection { tolerance: self.tolerance },
                },
                cutoff: self.cutoff,
                full_trajectory: true,
            }),
        };
        let caliper = self.caliper.map(|width| Caliper {
            width,
            kind: match self.caliper_kind() {
                CaliperKind::Daps => CaliperType::Daps,
                CaliperKind::Ps => CaliperType::PsComponent,
                CaliperKind::Distance => CaliperType::DistanceComponent,
            },
        });
        let config = DapsConfig {
            weight,
            caliper,
            distance_scheme: match self.distance_scheme {
                Scheme::Minmax => DistanceScheme::MinMax,
                Scheme::Ecdf => DistanceScheme::Ecdf,
            },
            algorithm: match self.algorithm {
                Algorithm::Greedy => MatchAlgorithm::Greedy,
                Algorithm::Optimal => MatchAlgorithm::Optimal,
            },
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.cutoff >= 0.0) {
            return Err(CliError::Usage("--cutoff must be nonnegative".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Usage("--level must be in (0, 1)".into()));
        }
        if self.method != Method::Dapsm {
            if self.caliper_kind() != CaliperKind::Ps {
                return Err(CliError::Usage(format!("--method {} only supports --caliper-type ps", name(self.method))));
            }
            if self.algorithm != Algorithm::Optimal {
                return Err(CliError::Usage(format!("--method {} always uses optimal matching", name(self.method))));
            }
        }
        Ok(())
    }
}

/// One matched pair with the quantities written to `pairs.csv`.
struct PairRow {
    treated: usize,
    control: usize,
    cost: f64,
    ps_diff: f64,
    distance: f64,
}

struct MatchOutcome {
    matched: MatchedSet,
    rows: Vec<PairRow>,
    w: Option<f64>,
    selection: Option<WSelection>,
    trajectory_rows: Option<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

fn write_file(path: &Path, prov: &Provenance, body: &str) -> Result<(), CliError> {
    fs::write(path, format!("{}{}", prov.header(), body))?;
    Ok(())
}

fn positions(units: &[usize], n: usize) -> Vec<usize> {
    let mut pos = vec![usize::MAX; n];
    for (k, &u) in units.iter().enumerate() {
        pos[u] = k;
    }
    pos
}

fn trajectory_table(problem: &MatchingProblem<'_>, config: &DapsConfig, sel: &WSelection, args: &MatchArgs) -> String {
    let mut out = String::from("w,max_asdm,balanced,n_pairs,estimate\n");
    for p in &sel.trajectory {
        let (n_pairs, est) = match problem.match_at(p.w, config) {
            Ok((_, m)) => {
                let est = problem
                    .dataset
                    .outcome
                    .as_ref()
                    .and_then(|_| estimate(problem.dataset, &m, args).ok().flatten())
                    .map(|e| e.estimate);
                (m.n_pairs().to_string(), est)
            }
            Err(_) => ("NA".into(), None),
        };
        writeln!(out, "{:.6},{},{},{},{}", p.w, fmt_opt(Some(p.max_asdm)), p.balanced, n_pairs, fmt_opt(est)).unwrap();
    }
    out
}

fn run_dapsm(dataset: &Dataset, args: &MatchArgs, out_dir: &Path, prov: &Provenance) -> Result<MatchOutcome, CliError> {
    let config = args.daps_config()?;
    let problem = MatchingProblem::new(dataset, config.distance_scheme)?;
    let selection = match &config.weight {
        Weight::Fixed(_) => None,
        Weight::Auto(search) => match problem.select_w(&config, search) {
            Ok(sel) => Some(sel),
            Err(DapsmError::NoBalancedW(sel)) => {
                let table = trajectory_table(&problem, &config, &sel, args);
                write_file(&out_dir.join("trajectory.csv"), prov, &table)?;
                eprintln!("no w in the search balanced every covariate at cutoff {}:\n{table}", sel.cutoff);
                return Err(DapsmError::NoBalancedW(sel).into());
            }
            Err(e) => return Err(e.into()),
        },
    };
    let w = match (&config.weight, &selection) {
        (Weight::Fixed(w), _) => *w,
        (_, Some(sel)) => sel.chosen_w,
        _ => unreachable!(),
    };
    let (daps, matched) = problem.match_at(w, &config)?;
    let pos_t = positions(&problem.treated, dataset.n_units());
    let pos_c = positions(&problem.control, dataset.n_units());
    let rows = matched
        .pairs
        .iter()
        .map(|&(t, c)| {
            let (i, j) = (pos_t[t], pos_c[c]);
            PairRow {
                treated: t,
                control: c,
                cost: daps.cost[(i, j)],
                ps_diff: problem.ps_diff[(i, j)],
                distance: problem.distances.get(i, j),
            }
        })
        .collect();
    let trajectory_rows = selection.as_ref().map(|sel| trajectory_table(&problem, &config, sel, args));
    Ok(MatchOutcome { matched, rows, w: Some(w), selection, trajectory_rows })
}

fn run_comparator(dataset: &Dataset, args: &MatchArgs) -> Result<MatchOutcome, CliError> {
    let fit = match args.method {
        Method::NaiveCoords => naive_coords_fit(dataset)?,
        _ => naive_fit(dataset)?,
    };
    let ps = &fit.fitted;
    let matched = match args.method {
        Method::DistanceCaliper => distance_caliper_match_with(dataset, ps, args.distance_quantile, args.caliper)?.0,
        _ => ps_match(dataset, ps, args.caliper, None)?,
    };
    let rows = matched
        .pairs
        .iter()
        .map(|&(t, c)| {
            let d = (ps[t] - ps[c]).abs();
            PairRow {
                treated: t,
                control: c,
                cost: d,
                ps_diff: d,
                distance: dataset.metric.distance(dataset.locations[t], dataset.locations[c]),
            }
        })
        .collect();
    Ok(MatchOutcome { matched, rows, w: None, selection: None, trajectory_rows: None })
}

fn estimate(dataset: &Dataset, matched: &MatchedSet, args: &MatchArgs) -> Result<Option<EffectEstimate>, CliError> {
    Ok(match &args.estimate {
        EstimateArg::None => None,
        EstimateArg::Means => Some(att_diff_means_at(dataset, matched, args.level)?),
        EstimateArg::Linear(names) => {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            Some(att_linear_adjusted_at(dataset, matched, &names, args.level)?)
        }
    })
}

pub fn balance_table(report: &BalanceReport) -> String {
    let mut out = String::from("covariate,std_diff_before,asdm_before,std_diff_after,asdm_after,status_after\n");
    for c in &report.per_covariate {
        let status = match c.asdm_after {
            None => "unmatched",
            Some(a) if a > report.cutoff => "imbalanced",
            Some(_) => "ok",
        };
        writeln!(
            out,
            "{},{:.6},{:.6},{},{},{}",
            c.name,
            c.std_diff_before,
            c.asdm_before,
            fmt_opt(c.std_diff_after),
            fmt_opt(c.asdm_after),
            status
        )
        .unwrap();
    }
    out
}

fn estimate_table(e: &EffectEstimate) -> String {
    format!(
        "method,estimate,standard_error,ci_lower,ci_upper,level,n_pairs,degenerate\n{},{:.6},{:.6},{:.6},{:.6},{},{},{}\n",
        serde_json::to_value(e.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        e.estimate,
        e.standard_error,
        e.ci_lower,
        e.ci_upper,
        e.level,
        e.n_pairs,
        e.degenerate
    )
}

pub fn cmd_match(args: &MatchArgs) -> Result<(), CliError> {
    args.validate()?;
    let bytes = fs::read(&args.input)?;
    let dataset = read_dataset(bytes.as_slice())?;
    if !matches!(args.estimate, EstimateArg::None) && dataset.outcome.is_none() {
        return Err(CliError::Usage("--estimate needs an outcome column".into()));
    }
    fs::create_dir_all(&args.out)?;
    let prov = Provenance::new("match", args.flags(), &bytes, args.seed);

    let outcome = match args.method {
        Method::Dapsm => run_dapsm(&dataset, args, &args.out, &prov)?,
        _ => run_comparator(&dataset, args)?,
    };

    let mut pairs = format!("treated_id,control_id,daps,ps_diff,{}\n", dataset.metric.unit_label());
    for r in &outcome.rows {
        writeln!(
            pairs,
            "{},{},{:.6},{:.6},{:.6}",
            dataset.ids[r.treated], dataset.ids[r.control], r.cost, r.ps_diff, r.distance
        )
        .unwrap();
    }
    write_file(&args.out.join("pairs.csv"), &prov, &pairs)?;

    let mut dropped = String::from("treated_id\n");
    for &t in &outcome.matched.dropped_treated {
        writeln!(dropped, "{}", dataset.ids[t]).unwrap();
    }
    write_file(&args.out.join("dropped.csv"), &prov, &dropped)?;

    let report = balance_report(&dataset, &outcome.matched, args.cutoff)?;
    write_file(&args.out.join("balance.csv"), &prov, &balance_table(&report))?;

    if let Some(t) = &outcome.trajectory_rows {
        write_file(&args.out.join("trajectory.csv"), &prov, t)?;
    }

    let est = if outcome.matched.is_empty() { None } else { estimate(&dataset, &outcome.matched, args)? };
    if let Some(e) = &est {
        write_file(&args.out.join("estimate.csv"), &prov, &estimate_table(e))?;
    }

    println!("method: {}", name(args.method));
    if let Some(w) = outcome.w {
        let how = if outcome.selection.is_some() { " (selected)" } else { "" };
        println!("w: {w}{how}");
    }
    println!("pairs: {}", outcome.matched.n_pairs());
    println!("dropped treated: {}", outcome.matched.dropped_treated.len());
    if let Some(d) = outcome.matched.mean_pair_distance {
        println!("mean pair {}: {d:.6}", dataset.metric.unit_label());
    }
    match report.n_imbalanced_after {
        Some(k) => println!("covariates above cutoff {}: {k} of {}", args.cutoff, report.per_covariate.len()),
        None => println!("no pairs matched; balance after matching unavailable"),
    }
    if let Some(e) = est {
        println!(
            "estimate: {:.6} (se {:.6}, {}% ci {:.6} to {:.6})",
            e.estimate,
            e.standard_error,
            e.level * 100.0,
            e.ci_lower,
            e.ci_upper
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    /// Unit-level CSV file
    pub input: PathBuf,
    /// Pairs file with `treated_id` and `control_id` columns
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    pub cutoff: f64,
    /// Output file; stdout when omitted
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

/// Reads `treated_id,control_id` pairs; `#` lines are skipped and an empty
/// file means no pairs.
pub fn read_pairs(dataset: &Dataset, text: &[u8]) -> Result<MatchedSet, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(MatchedSet { pairs: vec![], dropped_treated: vec![], total_cost: 0.0, mean_pair_distance: None });
    }
    let col = |n: &str| {
        headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| CliError::Schema(format!("pairs file is missing column `{n}`")))
    };
    let (ct, cc) = (col("treated_id")?, col("control_id")?);
    let index: std::collections::HashMap<&str, usize> =
        dataset.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut pairs = Vec::new();
    let mut used = std::collections::HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line());
        let lookup = |k: usize, treated: bool| -> Result<usize, CliError> {
            let id = record.get(k).unwrap_or("");
            let &u = index
                .get(id)
                .ok_or_else(|| DapsmError::Input(format!("pairs row {row}: unknown id `{id}`")))?;
            if dataset.treatment[u] != treated {
                let role = if treated { "treated" } else { "control" };
                return Err(DapsmError::Input(format!("pairs row {row}: `{id}` is not a {role} unit")).into());
            }
            Ok(u)
        };
        let (t, c) = (lookup(ct, true)?, lookup(cc, false)?);
        if !used.insert(t) || !used.insert(c) {
            return Err(DapsmError::Input(format!("pairs row {row}: unit used in more than one pair")).into());
        }
        pairs.push((t, c));
    }
    let mean_pair_distance = (!pairs.is_empty()).then(|| {
        pairs
            .iter()
            .map(|&(t, c)| dataset.metric.distance(dataset.locations[t], dataset.locations[c]))
            .sum::<f64>()
            / pairs.len() as f64
    });
    Ok(MatchedSet { pairs, dropped_treated: vec![], total_cost: f64::NAN, mean_pair_distance })
}

pub fn cmd_balance(args: &BalanceArgs) -> Result<(), CliError> {
    if !(args.cutoff >= 0.0) {
        return Err(CliError::Usage("--cutoff must be nonnegative".into()));
    }
    let bytes = fs::read(&args.input)?;
    let dataset = read_dataset(bytes.as_slice())?;
    let pair_bytes = fs::read(&args.pairs)?;
    let matched = read_pairs(&dataset, &pair_bytes)?;
    let report = balance_report(&dataset, &matched, args.cutoff)?;
    let mut flags = format!("{} --pairs {} --cutoff {}", args.input.display(), args.pairs.display(), args.cutoff);
    if let Some(o) = &args.out {
        write!(flags, " --out {}", o.display()).unwrap();
    }
    let mut input = bytes;
    input.extend_from_slice(&pair_bytes);
    let prov = Provenance::new("balance", flags, &input, 0);
    let body = balance_table(&report);
    match &args.out {
        Some(path) => write_file(path, &prov, &body)?,
        None => print!("{}{}", prov.header(), body),
    }
    if report.n_imbalanced_after.is_none() {
        eprintln!("pairs file has no pairs; only before-matching balance is reported");
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// TOML configuration; the bundled default when omitted
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, short)]
    pub out: PathBuf,
    /// Overrides `base_seed`
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `n_replicates`
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Also write per-replicate records
    #[arg(long)]
    pub records: bool,
}

/// Parses a simulation config. A `[locations]` table with
/// `source = "file"` and a `path` is loaded relative to `base_dir`; when
/// `n_units` is absent it defaults to the number of locations read.
pub fn parse_sim_config(text: &str, base_dir: &Path) -> Result<SimulationConfig, CliError> {
    let mut table: toml::Table = toml::from_str(text)?;
    let mut file_locations = None;
    if let Some(toml::Value::Table(loc)) = table.get("locations") {
        if loc.get("source").and_then(toml::Value::as_str) == Some("file") {
            let path = loc
                .get("path")
                .and_then(toml::Value::as_str)
                .ok_or_else(|| CliError::Usage("locations source `file` needs a `path`".into()))?;
            let full = base_dir.join(path);
            let (points, metric) = read_locations(fs::File::open(&full)?)?;
            file_locations = Some((points, metric));
            table.remove("locations");
        }
    }
    if let Some((points, _)) = &file_locations {
        table.entry("n_units").or_insert(toml::Value::Integer(points.len() as i64));
    }
    let mut config: SimulationConfig = toml::Value::Table(table).try_into()?;
    if let Some((points, metric)) = file_locations {
        config.locations = LocationSource::Fixed { metric, points };
    }
    Ok(config)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (text, base_dir) = match &args.config {
        Some(p) => (fs::read_to_string(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (DEFAULT_CONFIG.to_string(), PathBuf::new()),
    };
    let mut config = parse_sim_config(&text, &base_dir)?;
    if let Some(s) = args.seed {
        config.base_seed = s;
    }
    if let Some(n) = args.replicates {
        config.n_replicates = n;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut flags = match &args.config {
        Some(p) => format!("--config {}", p.display()),
        None => "--config <bundled default>".to_string(),
    };
    write!(flags, " --out {} --seed {} --replicates {}", args.out.display(), config.base_seed, config.n_replicates)
        .unwrap();
    if args.records {
        flags.push_str(" --records");
    }
    let prov = Provenance::new("simulate", flags, text.as_bytes(), config.base_seed);

    let run = run_monte_carlo(&config)?;
    fs::create_dir_all(&args.out)?;
    let table = run.summary.to_table();
    write_file(&args.out.join("summary.csv"), &prov, &table)?;
    let json = serde_json::json!({ "provenance": prov, "config": config, "summary": run.summary });
    fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&json).expect("json") + "\n")?;
    if args.records {
        write_file(&args.out.join("records.csv"), &prov, &records_to_table(&run.records))?;
    }
    print!("{table}");
    Ok(())
}
