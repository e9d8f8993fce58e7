//! Command-line front end: argument parsing, JSON config merging and the four
//! subcommands. `parse_args` only parses; `run` does the work.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::bench::{self, Bench, BenchConfig};
use crate::data::{Dataset, Method, PenaltyPair, Truth};
use crate::error::{Error, Result};
use crate::estimators::SigmaFactor;
use crate::io::{self, json_f64, mat_to_json, save_matrix_csv, write_json, DatasetManifest};
use crate::pipeline::{estimate_all, PenaltySpec};
use crate::simgen::{SKind, Scenario, ScenarioSpec};
use crate::solver::{CvOptions, FitOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MTCOV_THREADS";

#[derive(Parser, Debug)]
#[command(name = "mtcov", version, about = "Noise covariance estimation for multi-task linear models")]
struct Cli {
    /// Log filter: error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Estimate the noise covariance of a dataset stored as CSV files
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset
    Simulate(SimulateArgs),
    /// Monte-Carlo comparison of the estimators on synthetic data
    Bench(BenchArgs),
    /// Mean loss of the proposed estimator for growing n at fixed p/n
    Scaling(ScalingArgs),
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct DataArgs {
    /// Design matrix, n×p CSV
    #[arg(long)]
    x: Option<PathBuf>,
    /// Responses, n×T CSV
    #[arg(long)]
    y: Option<PathBuf>,
    /// Design covariance, p×p CSV
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// True noise, n×T CSV (enables the oracle)
    #[arg(long)]
    e: Option<PathBuf>,
    /// JSON manifest listing the CSV files instead of --x/--y/--sigma/--e
    #[arg(long, conflicts_with_all = ["x", "y", "sigma", "e"])]
    manifest: Option<PathBuf>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct PenaltyArgs {
    /// Overall penalty level; λ = alpha·l1_ratio, τ = alpha·(1 − l1_ratio)
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    l1_ratio: Option<f64>,
    /// Group-lasso weight λ, given directly
    #[arg(long)]
    lambda: Option<f64>,
    /// Ridge weight τ, given directly
    #[arg(long)]
    tau: Option<f64>,
    /// Choose the penalty by K-fold cross-validation (the default without a penalty)
    #[arg(long)]
    cv: bool,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    n_alphas: Option<usize>,
    /// Relative coefficient-change tolerance of the final fit
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct ScenarioArgs {
    /// Noise covariance: full-rank or low-rank
    #[arg(long)]
    s_kind: Option<SKind>,
    /// Number of tasks
    #[arg(long = "T")]
    #[serde(rename = "T")]
    tasks: Option<usize>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct SizeArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct RunArgs {
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (default: all cores, capped by MTCOV_THREADS)
    #[arg(long)]
    parallelism: Option<usize>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct EstimateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    penalty: PenaltyArgs,
    /// proposed, naive, mm or oracle
    #[arg(long)]
    method: Option<Method>,
    /// Seed of the cross-validation fold shuffle
    #[arg(long)]
    seed: Option<u64>,
    /// Clip negative eigenvalues of the estimate to zero
    #[arg(long)]
    project_psd: bool,
    /// Also write each matrix as CSV (requires --out)
    #[arg(long)]
    csv: bool,
    /// Output directory; the JSON goes to stdout without it
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with default values for any of these flags
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    size: SizeArgs,
    /// Also write the ground truth: E, B* and S
    #[arg(long)]
    dump: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    size: SizeArgs,
    #[command(flatten)]
    #[serde(flatten)]
    penalty: PenaltyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Deserialize, Debug, Clone, Default)]
#[serde(default)]
struct ScalingArgs {
    #[command(flatten)]
    #[serde(flatten)]
    scenario: ScenarioArgs,
    #[command(flatten)]
    #[serde(flatten)]
    penalty: PenaltyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    /// Comma-separated sample sizes
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    /// p = round(p_ratio·n)
    #[arg(long)]
    p_ratio: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

/// Fills fields unset on the command line from the config file.
trait Merge {
    fn merge(self, file: Self) -> Self;
}

macro_rules! impl_merge {
    ($ty:ty; opt: $($o:ident),*; flag: $($f:ident),*; nested: $($n:ident),*) => {
        impl Merge for $ty {
            #[allow(unused_mut)]
            fn merge(mut self, file: Self) -> Self {
                $(self.$o = self.$o.or(file.$o);)*
                $(self.$f = self.$f || file.$f;)*
                $(self.$n = self.$n.merge(file.$n);)*
                self
            }
        }
    };
}

impl_merge!(DataArgs; opt: x, y, sigma, e, manifest; flag: ; nested: );
impl_merge!(PenaltyArgs; opt: alpha, l1_ratio, lambda, tau, cv_folds, n_alphas, tol, max_iter; flag: cv; nested: );
impl_merge!(ScenarioArgs; opt: s_kind, tasks, snr, seed; flag: ; nested: );
impl_merge!(SizeArgs; opt: n, p; flag: ; nested: );
impl_merge!(RunArgs; opt: reps, parallelism; flag: ; nested: );
impl_merge!(EstimateArgs; opt: method, seed, out; flag: project_psd, csv; nested: data, penalty);
impl_merge!(SimulateArgs; opt: out; flag: dump; nested: scenario, size);
impl_merge!(BenchArgs; opt: out; flag: ; nested: scenario, size, penalty, run);
impl_merge!(ScalingArgs; opt: n_values, p_ratio, out; flag: ; nested: scenario, penalty, run);

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { x: PathBuf, y: PathBuf, sigma: Option<PathBuf>, e: Option<PathBuf> },
    Manifest(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub source: DataSource,
    pub method: Method,
    pub penalty: PenaltySpec,
    pub fit: FitOptions,
    pub project_psd: bool,
    pub csv: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub spec: ScenarioSpec,
    pub dump: bool,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub config: BenchConfig,
    pub reps: usize,
    pub parallelism: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRun {
    pub config: BenchConfig,
    pub n_values: Vec<usize>,
    pub p_ratio: f64,
    pub reps: usize,
    pub parallelism: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Estimate(EstimateConfig),
    Simulate(SimulateConfig),
    Bench(BenchRun),
    Scaling(ScalingRun),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub log_level: String,
    pub command: Command,
}

const DEFAULT_REPS: usize = 100;
const DEFAULT_N_VALUES: [usize; 3] = [200, 400, 800];
const DEFAULT_P_RATIO: f64 = 1.5;

/// Parses `argv` (program name first). Errors carry clap's exit code: 2 for usage
/// problems, 0 for `--help` and `--version`.
pub fn parse_args<I, T>(argv: I) -> std::result::Result<CliConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let command = match cli.command {
        Sub::Estimate(a) => {
            let a = with_config(a.config.clone(), "estimate", a)?;
            Command::Estimate(resolve_estimate(a)?)
        }
        Sub::Simulate(a) => {
            let a = with_config(a.config.clone(), "simulate", a)?;
            let spec = resolve_spec(&a.scenario, &a.size, "simulate")?;
            Command::Simulate(SimulateConfig { spec, dump: a.dump, out: required(a.out, "--out", "simulate")? })
        }
        Sub::Bench(a) => {
            let a = with_config(a.config.clone(), "bench", a)?;
            let spec = resolve_spec(&a.scenario, &a.size, "bench")?;
            Command::Bench(BenchRun {
                config: bench_config(spec, &a.penalty)?,
                reps: positive(a.run.reps.unwrap_or(DEFAULT_REPS), "--reps")?,
                parallelism: effective_parallelism(a.run.parallelism),
                out: required(a.out, "--out", "bench")?,
            })
        }
        Sub::Scaling(a) => {
            let a = with_config(a.config.clone(), "scaling", a)?;
            let n_values = a.n_values.unwrap_or_else(|| DEFAULT_N_VALUES.to_vec());
            if n_values.len() < 2 {
                return Err(usage(ErrorKind::InvalidValue, "--n-values needs at least two sample sizes"));
            }
            let p_ratio = a.p_ratio.unwrap_or(DEFAULT_P_RATIO);
            if !(p_ratio > 0.0 && p_ratio.is_finite()) {
                return Err(usage(ErrorKind::InvalidValue, "--p-ratio must be positive"));
            }
            let size = SizeArgs { n: Some(n_values[0]), p: Some(((p_ratio * n_values[0] as f64).round() as usize).max(1)) };
            let spec = resolve_spec(&a.scenario, &size, "scaling")?;
            Command::Scaling(ScalingRun {
                config: bench_config(spec, &a.penalty)?,
                n_values,
                p_ratio,
                reps: positive(a.run.reps.unwrap_or(30), "--reps")?,
                parallelism: effective_parallelism(a.run.parallelism),
                out: required(a.out, "--out", "scaling")?,
            })
        }
    };
    Ok(CliConfig { log_level: cli.log_level, command })
}

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(kind, msg)
}

fn required<T>(v: Option<T>, flag: &str, sub: &str) -> std::result::Result<T, clap::Error> {
    v.ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, format!("{sub} requires {flag}")))
}

fn positive(v: usize, flag: &str) -> std::result::Result<usize, clap::Error> {
    if v == 0 {
        return Err(usage(ErrorKind::InvalidValue, format!("{flag} must be at least 1")));
    }
    Ok(v)
}

/// Long names accepted by a subcommand, as config keys (`-` becomes `_`).
fn known_keys(sub: &str) -> Vec<String> {
    let cmd = Cli::command();
    let Some(sc) = cmd.find_subcommand(sub) else { return Vec::new() };
    sc.get_arguments().filter_map(|a| a.get_long()).map(|l| l.replace('-', "_")).collect()
}

fn with_config<A>(path: Option<PathBuf>, sub: &str, args: A) -> std::result::Result<A, clap::Error>
where
    A: Merge + for<'de> Deserialize<'de>,
{
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| usage(ErrorKind::Io, format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| usage(ErrorKind::InvalidValue, format!("config {}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(usage(ErrorKind::InvalidValue, format!("config {} is not a JSON object", path.display())));
    };
    let known = known_keys(sub);
    if let Some(k) = map.keys().find(|k| k.as_str() == "config" || !known.contains(k)) {
        return Err(usage(ErrorKind::UnknownArgument, format!("config key {k:?} is not an option of {sub}")));
    }
    let file: A = serde_json::from_value(Value::Object(map))
        .map_err(|e| usage(ErrorKind::InvalidValue, format!("config {}: {e}", path.display())))?;
    Ok(args.merge(file))
}

fn resolve_estimate(a: EstimateArgs) -> std::result::Result<EstimateConfig, clap::Error> {
    let source = match a.data.manifest {
        Some(m) => DataSource::Manifest(m),
        None => DataSource::Files {
            x: required(a.data.x, "--x (or --manifest)", "estimate")?,
            y: required(a.data.y, "--y (or --manifest)", "estimate")?,
            sigma: a.data.sigma,
            e: a.data.e,
        },
    };
    if a.csv && a.out.is_none() {
        return Err(usage(ErrorKind::MissingRequiredArgument, "--csv requires --out"));
    }
    Ok(EstimateConfig {
        source,
        method: a.method.unwrap_or(Method::Proposed),
        penalty: penalty_spec(&a.penalty, a.seed)?,
        fit: fit_options(&a.penalty),
        project_psd: a.project_psd,
        csv: a.csv,
        out: a.out,
    })
}

fn fit_options(p: &PenaltyArgs) -> FitOptions {
    FitOptions {
        tol: p.tol.unwrap_or(DEFAULT_TOL),
        max_iter: p.max_iter.unwrap_or(DEFAULT_MAX_ITER),
        b_init: None,
        track_objective: false,
    }
}

/// Exactly one of: (λ, τ) given directly, (alpha, l1_ratio), or cross-validation.
fn penalty_spec(p: &PenaltyArgs, seed: Option<u64>) -> std::result::Result<PenaltySpec, clap::Error> {
    let direct = p.lambda.is_some() || p.tau.is_some();
    let alpha = p.alpha.is_some();
    let cv_flags = p.cv || p.cv_folds.is_some() || p.n_alphas.is_some();
    if [direct, alpha, cv_flags].iter().filter(|&&b| b).count() > 1 {
        return Err(usage(
            ErrorKind::ArgumentConflict,
            "choose one of --lambda/--tau, --alpha/--l1-ratio or --cv",
        ));
    }
    if direct && p.l1_ratio.is_some() {
        return Err(usage(ErrorKind::ArgumentConflict, "--l1-ratio cannot be combined with --lambda/--tau"));
    }
    let invalid = |e: Error| usage(ErrorKind::InvalidValue, e);
    if direct {
        let (lambda, tau) = (p.lambda.unwrap_or(0.0), p.tau.unwrap_or(0.0));
        PenaltyPair::new(lambda, tau).map_err(invalid)?;
        return Ok(PenaltySpec::Direct { lambda, tau });
    }
    if let Some(alpha) = p.alpha {
        let l1_ratio = p.l1_ratio.unwrap_or(0.5);
        PenaltyPair::from_alpha(alpha, l1_ratio).map_err(invalid)?;
        return Ok(PenaltySpec::Alpha { alpha, l1_ratio });
    }
    let mut cv = CvOptions::default();
    if let Some(r) = p.l1_ratio {
        if !(r > 0.0 && r <= 1.0) {
            return Err(usage(ErrorKind::InvalidValue, format!("--l1-ratio {r} outside (0, 1]")));
        }
        cv.l1_ratios = vec![r];
    }
    if let Some(k) = p.cv_folds {
        if k < 2 {
            return Err(usage(ErrorKind::InvalidValue, "--cv-folds must be at least 2"));
        }
        cv.folds = k;
    }
    if let Some(m) = p.n_alphas {
        cv.n_alphas = positive(m, "--n-alphas")?;
    }
    if let Some(s) = seed {
        cv.seed = s;
    }
    Ok(PenaltySpec::Cv(cv))
}

fn resolve_spec(s: &ScenarioArgs, size: &SizeArgs, sub: &str) -> std::result::Result<ScenarioSpec, clap::Error> {
    let n = required(size.n, "--n", sub)?;
    let p = required(size.p, "--p", sub)?;
    let tasks = required(s.tasks, "--T", sub)?;
    let mut spec = ScenarioSpec::new(n, p, tasks, s.s_kind.unwrap_or(SKind::FullRank), s.seed.unwrap_or(0));
    if let Some(snr) = s.snr {
        spec.snr = snr;
    }
    spec.validate().map_err(|e| usage(ErrorKind::InvalidValue, e))?;
    Ok(spec)
}

fn bench_config(spec: ScenarioSpec, p: &PenaltyArgs) -> std::result::Result<BenchConfig, clap::Error> {
    let penalty = penalty_spec(p, None)?;
    let fit = fit_options(p);
    let mut cfg = BenchConfig::new(spec, penalty);
    cfg.tol = fit.tol;
    cfg.max_iter = fit.max_iter;
    Ok(cfg)
}

/// Requested thread count (default: available cores), capped by `MTCOV_THREADS`.
pub fn effective_parallelism(requested: Option<usize>) -> usize {
    let base = requested.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(c) if c >= 1 => Some(c),
            _ => {
                log::warn!("ignoring {THREADS_ENV}={v:?}: not a positive integer");
                None
            }
        },
        Err(_) => None,
    };
    cap.map_or(base, |c| base.min(c)).max(1)
}

pub fn run(config: &CliConfig) -> Result<()> {
    match &config.command {
        Command::Estimate(c) => run_estimate(c),
        Command::Simulate(c) => run_simulate(c),
        Command::Bench(c) => run_bench(c),
        Command::Scaling(c) => run_scaling(c),
    }
}

fn load_source(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Manifest(path) => io::load_dataset(path),
        DataSource::Files { x, y, sigma, e } => {
            let opt = |p: &Option<PathBuf>| p.as_ref().map(io::load_matrix_csv).transpose();
            let truth = Truth { e: opt(e)?, b_star: None, s: None };
            Dataset::new(io::load_matrix_csv(x)?, io::load_matrix_csv(y)?, opt(sigma)?, truth)
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Builds the estimate JSON. Everything is computed before anything is written.
pub fn estimate_json(ds: &Dataset, c: &EstimateConfig) -> Result<(Value, Vec<(String, crate::Mat)>)> {
    let sigma = ds.sigma.as_ref().map(SigmaFactor::new).transpose()?;
    let est = estimate_all(ds, sigma.as_ref(), &[c.method], &c.penalty, &c.fit, None)?;
    let raw = &est.estimates[&c.method];
    let s_hat = if c.project_psd { raw.projected_psd().s_hat } else { raw.s_hat.clone() };
    let oos = est.oos_error.as_ref().map(|o| o.matrix.clone());
    let chosen = &est.chosen;
    let value = json!({
        "method": c.method.as_str(),
        "s_hat": mat_to_json(&s_hat),
        "a_hat": mat_to_json(&est.interaction.a_hat),
        "gen_error": json_f64(est.gen_error.value),
        "oos_error": oos.as_ref().map(mat_to_json),
        "s_hat_is_psd": raw.is_psd(),
        "psd_projected": c.project_psd,
        "penalty": {
            "lambda": json_f64(chosen.lambda),
            "tau": json_f64(chosen.tau),
            "alpha": chosen.alpha.map(json_f64),
            "l1_ratio": chosen.l1_ratio.map(json_f64),
            "selected_by_cv": est.cv.is_some(),
        },
        "n": ds.n(),
        "p": ds.p(),
        "T": ds.tasks(),
        "support_size": est.fit.support.len(),
        "converged": est.fit.converged,
        "iterations": est.fit.iterations,
    });
    let mut mats = vec![("s_hat".to_string(), s_hat), ("a_hat".to_string(), est.interaction.a_hat.clone())];
    if let Some(o) = oos {
        mats.push(("oos_error".to_string(), o));
    }
    Ok((value, mats))
}

fn run_estimate(c: &EstimateConfig) -> Result<()> {
    let ds = load_source(&c.source)?;
    let (value, mats) = estimate_json(&ds, c)?;
    match &c.out {
        None => println!("{}", io::to_json_string(&value)),
        Some(dir) => {
            create_dir(dir)?;
            write_json(dir.join("estimate.json"), &value)?;
            if c.csv {
                for (name, m) in &mats {
                    save_matrix_csv(dir.join(format!("{name}.csv")), m)?;
                }
            }
        }
    }
    Ok(())
}

fn run_simulate(c: &SimulateConfig) -> Result<()> {
    let scenario = Scenario::new(c.spec.clone())?;
    let ds = scenario.sample(0)?;
    create_dir(&c.out)?;
    let mut files: Vec<(&str, &crate::Mat)> = vec![("x", &ds.x), ("y", &ds.y), ("sigma", &scenario.sigma)];
    let (e, b_star) = (ds.truth.e.as_ref(), ds.truth.b_star.as_ref());
    if c.dump {
        files.extend([("e", e.expect("simulated noise")), ("b_star", b_star.expect("simulated B*")), ("s", &scenario.s)]);
    }
    for (name, m) in &files {
        save_matrix_csv(c.out.join(format!("{name}.csv")), m)?;
    }
    let path = |name: &str| PathBuf::from(format!("{name}.csv"));
    let manifest = DatasetManifest {
        x: path("x"),
        y: path("y"),
        sigma: Some(path("sigma")),
        e: c.dump.then(|| path("e")),
        b_star: c.dump.then(|| path("b_star")),
        s: c.dump.then(|| path("s")),
    };
    let Value::Object(mut map) = serde_json::to_value(&manifest)? else { unreachable!() };
    let echo = BenchConfig::new(c.spec.clone(), PenaltySpec::default()).to_json();
    for key in ["scenario", "sigma_kernel", "support_placement", "rng"] {
        map.insert(key.to_string(), echo[key].clone());
    }
    map.insert("replication".into(), json!(0));
    write_json(c.out.join("manifest.json"), &Value::Object(map))
}

fn run_bench(c: &BenchRun) -> Result<()> {
    let bench = Bench::new(c.config.clone())?;
    log::info!("bench: {} replications on {} threads", c.reps, c.parallelism);
    let (summary, records) = bench.run_experiment(c.reps, c.parallelism)?;
    create_dir(&c.out)?;
    bench::write_outputs(&c.out, &summary, &records)?;
    println!("{:<10} {:>12} {:>12}", "method", "mean_loss", "sd_loss");
    for (m, s) in &summary.methods {
        println!("{:<10} {:>12.4} {:>12.4}", m.as_str(), s.mean_loss, s.sd_loss);
    }
    if summary.n_unconverged > 0 {
        log::warn!("{} replications did not converge", summary.n_unconverged);
    }
    Ok(())
}

fn run_scaling(c: &ScalingRun) -> Result<()> {
    let table = bench::scaling_study(&c.config, &c.n_values, c.p_ratio, c.reps, c.parallelism, Method::Proposed)?;
    let mut map = Map::new();
    map.insert("method".into(), json!("proposed"));
    map.insert("rows".into(), serde_json::to_value(&table.rows)?);
    map.insert("slope".into(), json_f64(table.slope));
    map.insert("reps".into(), json!(c.reps));
    map.insert("p_ratio".into(), json_f64(c.p_ratio));
    map.insert("config".into(), c.config.to_json());
    create_dir(&c.out)?;
    write_json(c.out.join("scaling.json"), &Value::Object(map))?;
    println!("{:>6} {:>6} {:>12} {:>10}", "n", "p", "mean_loss", "se");
    for r in &table.rows {
        println!("{:>6} {:>6} {:>12.4} {:>10.4}", r.n, r.p, r.mean_loss, r.se_loss);
    }
    println!("log-log slope {:.3}", table.slope);
    Ok(())
}
