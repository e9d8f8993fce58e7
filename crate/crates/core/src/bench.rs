//! Monte-Carlo harness: replications, per-method losses, entrywise bias/sd and
//! scaling in n.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::Method;
use crate::error::{Error, Result};
use crate::estimators::SigmaFactor;
use crate::io::{json_f64, mat_to_json, save_matrix_csv, write_atomic, write_json};
use crate::linalg::Mat;
use crate::pipeline::{estimate_all, ChosenPenalty, PenaltySpec};
use crate::simgen::{Scenario, ScenarioSpec, SigmaKind};
use crate::solver::FitOptions;

/// `‖est − truth‖_F`.
pub fn frobenius_loss(est: &Mat, truth: &Mat) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimate is {}x{}, truth is {}x{}",
            est.nrows(),
            est.ncols(),
            truth.nrows(),
            truth.ncols()
        )));
    }
    Ok((est - truth).norm())
}

/// Replication settings beyond the scenario itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub scenario: ScenarioSpec,
    pub penalty: PenaltySpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl BenchConfig {
    pub fn new(scenario: ScenarioSpec, penalty: PenaltySpec) -> Self {
        BenchConfig { scenario, penalty, tol: crate::solver::DEFAULT_TOL, max_iter: crate::solver::DEFAULT_MAX_ITER }
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions { tol: self.tol, max_iter: self.max_iter, b_init: None, track_objective: false }
    }

    /// JSON echo including the generation choices that are not spec fields.
    pub fn to_json(&self) -> Value {
        let SigmaKind::ArDecay { rho } = self.scenario.sigma_kind;
        json!({
            "scenario": self.scenario,
            "penalty": self.penalty,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "sigma_kernel": format!("sigma_jk = {rho}^|j-k|"),
            "support_placement": "uniform without replacement",
            "cv_per_replication": matches!(self.penalty, PenaltySpec::Cv(_)),
            "rng": "ChaCha8, stream rep*3+role per replication",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep_index: u64,
    /// `‖Ŝ_method − S‖_F`.
    pub losses: BTreeMap<Method, f64>,
    pub chosen_penalty: ChosenPenalty,
    pub a_hat_trace: f64,
    pub support_size: usize,
    pub converged: bool,
    /// `‖(I − Â/n)⁻¹Fᵀ‖_F²/n` and its target `trace(S) + ‖Σ^{1/2}(B̂ − B*)‖_F²`.
    pub gen_error: f64,
    pub gen_error_target: f64,
    /// Trace of the out-of-sample error estimate and its target `‖Σ^{1/2}(B̂ − B*)‖_F²`.
    pub oos_trace: f64,
    pub oos_target: f64,
    pub s_hats: BTreeMap<Method, Mat>,
}

/// Shared, precomputed state of a benchmark.
pub struct Bench {
    pub config: BenchConfig,
    scenario: Scenario,
    sigma: SigmaFactor,
}

impl Bench {
    pub fn new(config: BenchConfig) -> Result<Self> {
        let scenario = Scenario::new(config.scenario.clone())?;
        Bench::with_scenario(config, scenario)
    }

    pub fn with_scenario(config: BenchConfig, scenario: Scenario) -> Result<Self> {
        let sigma = SigmaFactor::new(&scenario.sigma)?;
        Ok(Bench { config, scenario, sigma })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Generates replication `rep`, fits, and scores every estimator. Deterministic in
    /// `(config, rep)`.
    pub fn run_replication(&self, rep: u64) -> Result<ReplicationRecord> {
        let ds = self.scenario.sample(rep)?;
        let cv_seed = self.config.scenario.seed.wrapping_add(rep);
        let est = estimate_all(
            &ds,
            Some(&self.sigma),
            &Method::ALL,
            &self.config.penalty,
            &self.config.fit_options(),
            Some(cv_seed),
        )?;
        let s = &self.scenario.s;
        let mut losses = BTreeMap::new();
        let mut s_hats = BTreeMap::new();
        for (m, e) in &est.estimates {
            losses.insert(*m, frobenius_loss(&e.s_hat, s)?);
            s_hats.insert(*m, e.s_hat.clone());
        }
        let b_star = ds.truth.b_star.as_ref().expect("simulated data carries B*");
        let err_energy = self.sigma.energy(&(&est.fit.b_hat - b_star));
        Ok(ReplicationRecord {
            rep_index: rep,
            losses,
            chosen_penalty: est.chosen,
            a_hat_trace: est.interaction.trace(),
            support_size: est.fit.support.len(),
            converged: est.fit.converged,
            gen_error: est.gen_error.value,
            gen_error_target: s.trace() + err_energy,
            oos_trace: est.oos_error.as_ref().map(|o| o.matrix.trace()).unwrap_or(f64::NAN),
            oos_target: err_energy,
            s_hats,
        })
    }

    /// Runs `n_reps` replications on `parallelism` threads and aggregates them in
    /// replication order.
    pub fn run_experiment(&self, n_reps: usize, parallelism: usize) -> Result<(ExperimentSummary, Vec<ReplicationRecord>)> {
        if n_reps == 0 {
            return Err(Error::InvalidArgument("n_reps must be at least 1".into()));
        }
        let start = Instant::now();
        let records = run_parallel(n_reps, parallelism, |rep| self.run_replication(rep))?;
        let mut summary = summarize(&records, &self.scenario.s)?;
        summary.config = self.config.to_json();
        summary.wall_time_secs = start.elapsed().as_secs_f64();
        Ok((summary, records))
    }
}

fn run_parallel<T: Send>(
    n_reps: usize,
    parallelism: usize,
    job: impl Fn(u64) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| (0..n_reps as u64).into_par_iter().map(&job).collect());
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub mean_loss: f64,
    pub sd_loss: f64,
    /// Entrywise `mean(Ŝ) − S`.
    pub bias: Mat,
    /// Entrywise sample standard deviation of Ŝ.
    pub sd: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub n_reps: usize,
    pub methods: BTreeMap<Method, MethodSummary>,
    pub n_unconverged: usize,
    /// Mean of `gen_error / gen_error_target` over replications.
    pub mean_gen_error_ratio: f64,
    /// Mean of `oos_trace / oos_target` over replications.
    pub mean_oos_ratio: f64,
    pub mean_support_size: f64,
    pub config: Value,
    pub wall_time_secs: f64,
}

/// Sample mean and standard deviation with the `n − 1` denominator; the sd of a single
/// value is 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Aggregates records (in the order given) against the true S.
pub fn summarize(records: &[ReplicationRecord], s: &Mat) -> Result<ExperimentSummary> {
    let first = records
        .first()
        .ok_or_else(|| Error::InvalidArgument("no replications to summarize".into()))?;
    let t = s.nrows();
    let mut methods = BTreeMap::new();
    for &m in first.losses.keys() {
        let losses: Vec<f64> = records.iter().map(|r| r.losses[&m]).collect();
        let (mean_loss, sd_loss) = mean_sd(&losses);
        let mut bias = Mat::zeros(t, t);
        let mut sd = Mat::zeros(t, t);
        for i in 0..t {
            for j in 0..t {
                let entries: Vec<f64> = records.iter().map(|r| r.s_hats[&m][(i, j)]).collect();
                let (mu, sigma) = mean_sd(&entries);
                bias[(i, j)] = mu - s[(i, j)];
                sd[(i, j)] = sigma;
            }
        }
        methods.insert(m, MethodSummary { mean_loss, sd_loss, bias, sd });
    }
    let ratios: Vec<f64> = records.iter().map(|r| r.gen_error / r.gen_error_target).collect();
    let oos: Vec<f64> = records.iter().map(|r| r.oos_trace / r.oos_target).collect();
    let supports: Vec<f64> = records.iter().map(|r| r.support_size as f64).collect();
    Ok(ExperimentSummary {
        n_reps: records.len(),
        methods,
        n_unconverged: records.iter().filter(|r| !r.converged).count(),
        mean_gen_error_ratio: mean_sd(&ratios).0,
        mean_oos_ratio: mean_sd(&oos).0,
        mean_support_size: mean_sd(&supports).0,
        config: Value::Null,
        wall_time_secs: 0.0,
    })
}

impl ExperimentSummary {
    pub fn to_json(&self) -> Value {
        let methods: serde_json::Map<String, Value> = self
            .methods
            .iter()
            .map(|(m, s)| {
                (
                    m.to_string(),
                    json!({
                        "mean_loss": json_f64(s.mean_loss),
                        "sd_loss": json_f64(s.sd_loss),
                        "bias": mat_to_json(&s.bias),
                        "sd": mat_to_json(&s.sd),
                    }),
                )
            })
            .collect();
        json!({
            "n_reps": self.n_reps,
            "methods": methods,
            "n_unconverged": self.n_unconverged,
            "mean_gen_error_ratio": json_f64(self.mean_gen_error_ratio),
            "mean_oos_ratio": json_f64(self.mean_oos_ratio),
            "mean_support_size": json_f64(self.mean_support_size),
            "config": self.config,
            "wall_time_secs": json_f64(self.wall_time_secs),
        })
    }
}

/// `rep_index,method,loss` rows in replication order.
pub fn losses_csv(records: &[ReplicationRecord]) -> String {
    let mut out = String::from("rep_index,method,loss\n");
    for r in records {
        for (m, l) in &r.losses {
            out.push_str(&format!("{},{},{:.16e}\n", r.rep_index, m, l));
        }
    }
    out
}

/// Writes `summary.json`, `losses.csv`, `bias_<method>.csv` and `std_<method>.csv`.
pub fn write_outputs(dir: &Path, summary: &ExperimentSummary, records: &[ReplicationRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (m, s) in &summary.methods {
        save_matrix_csv(dir.join(format!("bias_{m}.csv")), &s.bias)?;
        save_matrix_csv(dir.join(format!("std_{m}.csv")), &s.sd)?;
    }
    write_atomic(dir.join("losses.csv"), losses_csv(records).as_bytes())?;
    write_json(dir.join("summary.json"), &summary.to_json())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub p: usize,
    pub mean_loss: f64,
    pub se_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log(mean_loss)` against `log(n)`.
    pub slope: f64,
}

/// Least-squares slope of `log y` on `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument("need at least two points for a slope".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all x values are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Mean loss of `method` for each `n`, with `p = round(p_ratio·n)`, and the log-log slope.
pub fn scaling_study(
    base: &BenchConfig,
    n_values: &[usize],
    p_ratio: f64,
    n_reps: usize,
    parallelism: usize,
    method: Method,
) -> Result<ScalingTable> {
    if n_values.len() < 2 {
        return Err(Error::InvalidArgument("scaling study needs at least two n values".into()));
    }
    let mut rows = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let mut cfg = base.clone();
        cfg.scenario.n = n;
        cfg.scenario.p = (p_ratio * n as f64).round() as usize;
        let bench = Bench::new(cfg)?;
        let records = run_parallel(n_reps, parallelism, |rep| bench.run_replication(rep))?;
        let losses: Vec<f64> = records.iter().map(|r| r.losses[&method]).collect();
        let (mean, sd) = mean_sd(&losses);
        rows.push(ScalingRow { n, p: bench.config.scenario.p, mean_loss: mean, se_loss: sd / (n_reps as f64).sqrt() });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mean_loss)).collect();
    Ok(ScalingTable { slope: loglog_slope(&points)?, rows })
}
