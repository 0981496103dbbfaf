//! Monte Carlo sweeps over `λ` with theory overlays.
//!
//! [`run_experiment`] computes the theory for every grid point first, then
//! hands `(λ, trial)` jobs to a pool of scoped worker threads. Each worker
//! samples one instance, runs every selected estimator on it, and sends the
//! rows through a channel. The collected rows are sorted before writing, so
//! the table does not depend on scheduling.

pub mod config;
pub mod csv;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::ArrayView2;

use crate::amp::amp_estimate;
use crate::error::{Error, Result};
use crate::estimators::{
    optimal_spectral, preprocess, vanilla_svd, whiten_svd, EstimateReport, EstimatorKind, PowerOptions,
};
use crate::linalg::symmetric_eigen;
use crate::model::sample_instance;
use crate::spectra::{measure_of, CovarianceModel, SpectralMeasure};
use crate::theory::{
    derived_scalars, mmse_limits, solve_fixed_point, weak_recovery_threshold, MmseLimits, TheoryParams,
};

pub use config::{CovSpec, ExperimentConfig, LambdaScale};
pub use csv::{format_g, Row, RowKind, HEADER};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HSPEC_THREADS";

/// Covariances, limiting measures, and threshold of one configuration.
pub struct Setting {
    pub xi: CovarianceModel,
    pub sigma: CovarianceModel,
    pub xi_measure: SpectralMeasure,
    pub sigma_measure: SpectralMeasure,
    pub delta: f64,
    pub threshold: f64,
}

impl Setting {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let xi = config.xi.build(config.n)?;
        let sigma = config.sigma.build(config.d)?;
        let xi_measure = measure_of(&xi, config.measure_resolution.min(config.n))?;
        let sigma_measure = measure_of(&sigma, config.measure_resolution.min(config.d))?;
        let delta = config.n as f64 / config.d as f64;
        let threshold = weak_recovery_threshold(&xi_measure, &sigma_measure, delta);
        Ok(Self { xi, sigma, xi_measure, sigma_measure, delta, threshold })
    }

    /// Grid values converted to absolute `λ`.
    pub fn lambdas(&self, config: &ExperimentConfig) -> Vec<f64> {
        match config.lambda_scale {
            LambdaScale::Absolute => config.lambda_grid.clone(),
            LambdaScale::Threshold => config.lambda_grid.iter().map(|m| m * self.threshold).collect(),
        }
    }
}

/// Theory at one grid point. A failed bulk-edge computation leaves
/// `sigma2_star` empty and is reported as a warning.
pub struct TheoryPoint {
    pub params: TheoryParams,
    pub mmse: MmseLimits,
    pub warning: Option<String>,
}

fn theory_point(setting: &Setting, lambda: f64) -> Result<TheoryPoint> {
    let (xi, sigma) = (&setting.xi_measure, &setting.sigma_measure);
    let (q_u, q_v) = if lambda > 0.0 {
        solve_fixed_point(xi, sigma, setting.delta, lambda, crate::theory::DEFAULT_TOL)?
    } else {
        (0.0, 0.0)
    };
    let mut params = derived_scalars(xi, sigma, setting.delta, lambda, q_u, q_v);
    let mut warning = None;
    if params.above_threshold {
        match crate::theory::bulk_edge(xi, sigma, setting.delta, &params) {
            Ok(edge) => {
                params.sigma2_star = Some(edge);
                if edge >= 1.0 {
                    warning = Some(format!(
                        "lambda={}: predicted bulk edge {edge:.6} is not below the outlier at 1",
                        format_g(lambda, 12)
                    ));
                }
            }
            Err(e) => warning = Some(format!("lambda={}: {e}", format_g(lambda, 12))),
        }
    }
    Ok(TheoryPoint { params, mmse: mmse_limits(xi, sigma, q_u, q_v), warning })
}

/// `base_seed ⊕ mix(λ, trial)`. Keyed on the value of `λ`, not its grid
/// position, so editing the grid leaves other points unchanged.
pub fn trial_seed(base_seed: u64, lambda: f64, trial: usize) -> u64 {
    base_seed ^ splitmix64(lambda.to_bits() ^ splitmix64(trial as u64))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Worker count: `HSPEC_THREADS` if set, else the available parallelism.
pub fn worker_count() -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => cap,
        _ => available,
    }
}

fn theory_row(lambda: f64, p: &TheoryParams) -> Row {
    Row {
        kind: RowKind::Theory,
        lambda,
        trial: None,
        estimator: None,
        overlap_u: Some(p.eta_u),
        overlap_v: Some(p.eta_v),
        mse_uu: Some(p.mse_uu()),
        mse_vv: Some(p.mse_vv()),
        mse_uv: Some(p.mse_uv()),
        sigma1: p.above_threshold.then_some(1.0),
        sigma2: p.sigma2_star,
        seed: None,
    }
}

fn sim_row(lambda: f64, trial: usize, seed: u64, kind: EstimatorKind, report: Option<&EstimateReport>) -> Row {
    Row {
        kind: RowKind::Sim,
        lambda,
        trial: Some(trial),
        estimator: Some(kind.name()),
        overlap_u: report.map(|r| r.overlap_u),
        overlap_v: report.map(|r| r.overlap_v),
        mse_uu: report.map(|r| r.mse_uu),
        mse_vv: report.map(|r| r.mse_vv),
        mse_uv: report.map(|r| r.mse_uv),
        sigma1: report.and_then(|r| r.sigma1_astar),
        sigma2: report.and_then(|r| r.sigma2_astar),
        seed: Some(seed),
    }
}

/// Mean and sample standard deviation of the metrics of one `(λ, estimator)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub lambda: f64,
    pub estimator: EstimatorKind,
    /// Trials that produced an estimate.
    pub count: usize,
    pub overlap_u: (f64, f64),
    pub overlap_v: (f64, f64),
    pub mse_uv: (f64, f64),
    pub sigma1: Option<(f64, f64)>,
    pub sigma2: Option<(f64, f64)>,
}

/// Result of [`run_experiment`].
pub struct Summary {
    pub threshold: f64,
    pub lambdas: Vec<f64>,
    pub theory: Vec<TheoryParams>,
    /// Theory rows followed by simulation rows for each `λ`, in grid order.
    pub rows: Vec<Row>,
    pub aggregates: Vec<Aggregate>,
    pub warnings: Vec<String>,
}

impl Summary {
    /// Writes the table with a timestamp line.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> Result<()> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        csv::write_table(out, &self.rows, now)
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(lambda: f64, kind: EstimatorKind, rows: &[&Row]) -> Aggregate {
    let done: Vec<&&Row> = rows.iter().filter(|r| r.overlap_u.is_some()).collect();
    let collect = |f: &dyn Fn(&Row) -> Option<f64>| -> Vec<f64> { done.iter().filter_map(|r| f(r)).collect() };
    let stat = |v: Vec<f64>| if v.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd(&v) };
    let optional = |v: Vec<f64>| (!v.is_empty()).then(|| mean_sd(&v));
    Aggregate {
        lambda,
        estimator: kind,
        count: done.len(),
        overlap_u: stat(collect(&|r| r.overlap_u)),
        overlap_v: stat(collect(&|r| r.overlap_v)),
        mse_uv: stat(collect(&|r| r.mse_uv)),
        sigma1: optional(collect(&|r| r.sigma1)),
        sigma2: optional(collect(&|r| r.sigma2)),
    }
}

struct JobOutput {
    lambda_index: usize,
    trial: usize,
    rows: Vec<Row>,
    warnings: Vec<String>,
}

fn run_job(
    config: &ExperimentConfig,
    setting: &Setting,
    lambda: f64,
    theory: &TheoryParams,
    trial: usize,
) -> Result<(Vec<Row>, Vec<String>)> {
    let seed = trial_seed(config.base_seed, lambda, trial);
    let inst = sample_instance(&setting.xi, &setting.sigma, lambda, config.prior, seed)?;
    let options = PowerOptions { tol: config.power_tol, ..PowerOptions::default() };
    let mut rows = Vec::with_capacity(config.estimators.len());
    let mut warnings = Vec::new();
    for &kind in &config.estimators {
        let result = match kind {
            EstimatorKind::OptimalSpectral => optimal_spectral(&inst, &setting.xi, &setting.sigma, theory, options),
            EstimatorKind::Vanilla => vanilla_svd(&inst, &setting.xi, &setting.sigma, options),
            EstimatorKind::Whiten => whiten_svd(&inst, &setting.xi, &setting.sigma, options),
            EstimatorKind::BayesAmp => amp_estimate(&inst, &setting.xi, &setting.sigma, theory, seed, config.amp_steps),
        };
        let report = match result {
            Ok(report) => Some(report),
            // Expected below threshold: the row stays empty.
            Err(Error::BelowThreshold { .. }) => None,
            Err(e @ (Error::NoConvergence { .. } | Error::Diverged { .. })) => {
                warnings.push(format!("lambda={} trial={trial} {kind}: {e}", format_g(lambda, 12)));
                None
            }
            Err(e) => return Err(e),
        };
        rows.push(sim_row(lambda, trial, seed, kind, report.as_ref()));
    }
    Ok((rows, warnings))
}

/// Runs the full sweep described by `config`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Summary> {
    config.validate()?;
    let setting = Setting::new(config)?;
    let lambdas = setting.lambdas(config);
    if lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("lambda grid must be strictly increasing".into()));
    }

    let mut warnings = Vec::new();
    let mut theory = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let point = theory_point(&setting, lambda)?;
        warnings.extend(point.warning);
        theory.push(point.params);
    }

    let jobs: Vec<(usize, usize)> =
        (0..lambdas.len()).flat_map(|li| (0..config.trials).map(move |t| (li, t))).collect();
    let next = AtomicUsize::new(0);
    let workers = worker_count().min(jobs.len()).max(1);
    let (tx, rx) = mpsc::channel::<Result<JobOutput>>();

    let mut outputs: Vec<JobOutput> = Vec::with_capacity(jobs.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, next, setting, theory, lambdas) = (&jobs, &next, &setting, &theory, &lambdas);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(li, trial)) = jobs.get(k) else { break };
                let result = run_job(config, setting, lambdas[li], &theory[li], trial)
                    .map(|(rows, warnings)| JobOutput { lambda_index: li, trial, rows, warnings });
                let failed = result.is_err();
                if tx.send(result).is_err() || failed {
                    // Stop handing out work once anything fails.
                    next.store(jobs.len(), Ordering::Relaxed);
                    break;
                }
            });
        }
        drop(tx);
        for result in rx {
            match result {
                Ok(out) => outputs.push(out),
                Err(e) => return Err(e),
            }
        }
        Ok(())
    })?;
    outputs.sort_by_key(|o| (o.lambda_index, o.trial));

    let mut rows = Vec::with_capacity(lambdas.len() * (1 + config.trials * config.estimators.len()));
    let mut by_lambda: BTreeMap<usize, Vec<Row>> = BTreeMap::new();
    for out in outputs {
        warnings.extend(out.warnings);
        by_lambda.entry(out.lambda_index).or_default().extend(out.rows);
    }
    let mut aggregates = Vec::new();
    for (li, &lambda) in lambdas.iter().enumerate() {
        rows.push(theory_row(lambda, &theory[li]));
        let sims = by_lambda.remove(&li).unwrap_or_default();
        for &kind in &config.estimators {
            let of_kind: Vec<&Row> = sims.iter().filter(|r| r.estimator == Some(kind.name())).collect();
            aggregates.push(aggregate(lambda, kind, &of_kind));
        }
        rows.extend(sims);
    }

    Ok(Summary { threshold: setting.threshold, lambdas, theory, rows, aggregates, warnings })
}

/// Column order of [`theory_table`].
pub const THEORY_HEADER: &str = "lambda,lambda_star,above_threshold,q_u,q_v,mu,nu,b,c,eta_u,eta_v,sigma2,\
edge_separated,mmse_matrix,mmse_u,mmse_v,trivial_matrix,trivial_u,trivial_v";

/// Theory-only table over the configured grid; no sampling.
pub fn theory_table(config: &ExperimentConfig, out: &mut impl std::io::Write) -> Result<Vec<String>> {
    if config.lambda_grid.is_empty() {
        return Err(Error::Config("lambda_grid is empty".into()));
    }
    let setting = Setting::new(config)?;
    let mut warnings = Vec::new();
    writeln!(out, "{THEORY_HEADER}")?;
    for lambda in setting.lambdas(config) {
        let point = theory_point(&setting, lambda)?;
        warnings.extend(point.warning);
        let p = point.params;
        let m = point.mmse;
        let g = |x: f64| format_g(x, 12);
        let cells = [
            g(lambda),
            g(setting.threshold),
            (p.above_threshold as u8).to_string(),
            g(p.q_u_star),
            g(p.q_v_star),
            g(p.mu_star),
            g(p.nu_star),
            g(p.b_star),
            g(p.c_star),
            g(p.eta_u),
            g(p.eta_v),
            p.sigma2_star.map(g).unwrap_or_default(),
            p.edge_separated().map(|s| (s as u8).to_string()).unwrap_or_default(),
            g(m.mmse_matrix),
            g(m.mmse_u),
            g(m.mmse_v),
            g(m.trivial_matrix),
            g(m.trivial_u),
            g(m.trivial_v),
        ];
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(warnings)
}

/// Column order of [`spectrum_table`].
pub const SPECTRUM_HEADER: &str = "matrix,lambda,trial,index,singular_value,seed";

fn singular_values(m: ArrayView2<f64>) -> Result<Vec<f64>> {
    let gram = if m.nrows() >= m.ncols() { m.t().dot(&m) } else { m.dot(&m.t()) };
    let (eigenvalues, _) = symmetric_eigen(gram.view())?;
    Ok(eigenvalues.iter().rev().map(|e| e.max(0.0).sqrt()).collect())
}

/// Full singular spectra of `A` and of the pre-processed `A*` at one `λ`.
///
/// `lambda` is read on the config's `lambda_scale`. Trial `t` uses the same
/// instance as trial `t` of [`run_experiment`] at that `λ`. Rows for `A*`
/// are omitted below the threshold, where it is not defined.
pub fn spectrum_table(config: &ExperimentConfig, lambda: f64, out: &mut impl std::io::Write) -> Result<()> {
    let setting = Setting::new(config)?;
    let lambda = match config.lambda_scale {
        LambdaScale::Absolute => lambda,
        LambdaScale::Threshold => lambda * setting.threshold,
    };
    let theory = theory_point(&setting, lambda)?.params;
    writeln!(out, "{SPECTRUM_HEADER}")?;
    for trial in 0..config.trials {
        let seed = trial_seed(config.base_seed, lambda, trial);
        let inst = sample_instance(&setting.xi, &setting.sigma, lambda, config.prior, seed)?;
        let mut spectra = vec![("A", singular_values(inst.frame())?)];
        if theory.above_threshold {
            let a_star = preprocess(&inst, &setting.xi, &setting.sigma, &theory)?;
            spectra.push(("Astar", singular_values(a_star.view())?));
        }
        for (name, values) in spectra {
            for (k, s) in values.iter().enumerate() {
                writeln!(out, "{name},{},{trial},{},{},{seed}", format_g(lambda, 12), k + 1, format_g(*s, 12))?;
            }
        }
    }
    Ok(())
}
