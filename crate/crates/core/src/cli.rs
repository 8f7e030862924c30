//! The `semple` command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use crate::config;
use crate::error::{Error, Result};
use crate::gllim::{select_k_bic, CovarianceConstraint, EmOptions};
use crate::io::{
    append_metric_rows, read_samples, samples_to_csv, InitialRecord, MetricRecord, MetricRow, ObservedData,
    ObservedHeader, RoundRecord, RunManifest,
};
use crate::metrics::{c2st, wasserstein2, C2stOptions, SamplePair, W2Options};
use crate::sequential::run_semple;
use crate::tasks::{
    by_name, make_reference_posterior, prior_predictive, simulate_observed, LotkaVolterraTask, LvScaler,
    ReferenceOptions, Task,
};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "SEMPLE_OUTPUT_DIR";

/// Prior-predictive draws used to build a Lotka-Volterra scaler.
pub const DEFAULT_SCALER_DRAWS: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "semple", version, about = "Sequential simulation-based inference with GLLiM surrogates")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded, byte-reproducible output (wall times are omitted).
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate observed data at a parameter (ground truth by default).
    Simulate(SimulateArgs),
    /// BIC curve over a grid of component counts on prior-predictive data.
    Bic(BicArgs),
    /// Run the sequential inference loop.
    Run(RunArgs),
    /// Exact-likelihood reference posterior sample.
    Reference(ReferenceArgs),
    /// Compare a sample with a reference sample.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct ScalerArgs {
    /// Lotka-Volterra scaler file; created when missing, reused otherwise.
    #[arg(long)]
    pub scaler: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SCALER_DRAWS)]
    pub scaler_draws: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub task: String,
    /// Comma-separated parameter vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub scaler: ScalerArgs,
}

#[derive(Debug, Args)]
pub struct BicArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long, default_value_t = 2500)]
    pub n: usize,
    /// Comma-separated component counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<usize>,
    #[arg(long, default_value = "full")]
    pub constraint: CovarianceConstraint,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub scaler: ScalerArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub task: String,
    /// Observed-data file written by `simulate`.
    #[arg(long)]
    pub observed: PathBuf,
    /// Row of the observed file to condition on.
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    /// Key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `semple.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReferenceArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub row: usize,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Metrics to compute: c2st, w2.
    #[arg(long, value_delimiter = ',', default_value = "c2st,w2")]
    pub which: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Long-format CSV to append to.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run manifest to record the results in.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Round the samples belong to.
    #[arg(long, default_value_t = 0)]
    pub round: usize,
    #[arg(long)]
    pub run_id: Option<String>,
}

/// Parses `args` and runs the command, returning the process exit code:
/// 0 on success, 1 for usage and configuration errors, 2 for failures while
/// running.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. }
        | Error::UnknownTask(_)
        | Error::InvalidArgument(_)
        | Error::FileFormat { .. }
        | Error::Json(_)
        | Error::Io(_) => 1,
        _ => 2,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(t) = threads {
        // The global pool can only be built once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bic(a) => cmd_bic(a),
        Command::Run(a) => cmd_run(a, cli.deterministic),
        Command::Reference(a) => cmd_reference(a),
        Command::Metrics(a) => cmd_metrics(a),
    }
}

fn output_dir() -> PathBuf {
    std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn is_lotka_volterra(name: &str) -> Result<bool> {
    Ok(by_name(name)?.name() == LotkaVolterraTask::default().name())
}

/// Reads the scaler at `path`, or fits and writes one.
pub fn load_or_fit_scaler(path: &Path, draws: usize, seed: u64) -> Result<LvScaler> {
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return LvScaler::from_csv(&text, &path.display().to_string());
    }
    let scaler = LotkaVolterraTask::default().fit_scaler(draws, seed)?;
    write(path, &scaler.to_csv())?;
    Ok(scaler)
}

/// The task, with a scaler attached for Lotka-Volterra.
fn task_with_scaler(name: &str, scaler: &ScalerArgs, seed: u64) -> Result<(Box<dyn Task>, Option<PathBuf>)> {
    if !is_lotka_volterra(name)? {
        return Ok((by_name(name)?, None));
    }
    let path = scaler
        .scaler
        .clone()
        .unwrap_or_else(|| output_dir().join(format!("lotka_volterra_scaler_{seed}.csv")));
    let s = load_or_fit_scaler(&path, scaler.scaler_draws, seed)?;
    Ok((Box::new(LotkaVolterraTask::with_scaler(s)), Some(path)))
}

/// The task for an observed file, restoring its scaler when it has one.
fn task_for_observed(name: &str, obs: &ObservedData, obs_path: &Path) -> Result<Box<dyn Task>> {
    let task = by_name(name)?;
    if task.name() != obs.header.task {
        return Err(Error::InvalidArgument(format!(
            "observed data were simulated from `{}`, not `{}`",
            obs.header.task,
            task.name()
        )));
    }
    if !is_lotka_volterra(name)? {
        return Ok(task);
    }
    let rel = obs
        .header
        .scaler
        .as_ref()
        .ok_or_else(|| Error::format(obs_path.display().to_string(), 1, "Lotka-Volterra data without a scaler"))?;
    let mut path = PathBuf::from(rel);
    if !path.exists() {
        if let Some(dir) = obs_path.parent() {
            path = dir.join(rel);
        }
    }
    let text = std::fs::read_to_string(&path)?;
    let scaler = LvScaler::from_csv(&text, &path.display().to_string())?;
    Ok(Box::new(LotkaVolterraTask::with_scaler(scaler)))
}

fn observation(obs: &ObservedData, row: usize, task: &dyn Task) -> Result<Vec<f64>> {
    if row >= obs.ys.nrows() {
        return Err(Error::InvalidArgument(format!("row {row} of a {}-row file", obs.ys.nrows())));
    }
    if obs.ys.ncols() != task.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "observed data have {} columns, task expects {}",
            obs.ys.ncols(),
            task.data_dim()
        )));
    }
    Ok(obs.observation(row))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let (task, scaler_path) = task_with_scaler(&a.task, &a.scaler, a.seed)?;
    let theta = match &a.theta {
        Some(t) => t.clone(),
        None => task
            .ground_truth()
            .ok_or_else(|| Error::InvalidArgument(format!("`{}` has no ground truth; pass --theta", task.name())))?,
    };
    if theta.len() != task.param_dim() {
        return Err(Error::InvalidArgument(format!(
            "theta has {} entries, `{}` expects {}",
            theta.len(),
            task.name(),
            task.param_dim()
        )));
    }
    let ys = simulate_observed(task.as_ref(), &theta, a.n, a.seed)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| output_dir().join(format!("observed_{}_{}.csv", task.name(), a.seed)));
    let scaler = scaler_path.map(|p| match (p.parent(), out.parent()) {
        (Some(sp), Some(op)) if sp == op => p.file_name().unwrap().to_string_lossy().into_owned(),
        _ => p.display().to_string(),
    });
    let obs = ObservedData {
        header: ObservedHeader {
            task: task.name().to_string(),
            theta_dim: task.param_dim(),
            data_dim: task.data_dim(),
            seed: a.seed,
            theta,
            rows: a.n,
            scaler,
        },
        ys,
    };
    write(&out, &obs.to_text())?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_bic(a: &BicArgs) -> Result<()> {
    let (task, _) = task_with_scaler(&a.task, &a.scaler, a.seed)?;
    if a.grid.is_empty() {
        return Err(Error::InvalidArgument("empty K grid".into()));
    }
    let (thetas, ys) = prior_predictive(task.as_ref(), a.n, a.seed)?;
    let data = crate::gllim::TrainingSet::new(thetas, ys)?;
    let opts = EmOptions {
        seed: a.seed,
        ..Default::default()
    };
    let curve = select_k_bic(&data, &a.grid, a.constraint, &opts)?;
    let mut text = String::from("k,bic\n");
    for (k, b) in &curve.points {
        text.push_str(&format!("{k},{b}\n"));
    }
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| output_dir().join(format!("bic_{}_{}.csv", task.name(), a.seed)));
    write(&out, &text)?;
    println!("best_k={}", curve.best_k);
    Ok(())
}

fn cmd_run(a: &RunArgs, deterministic: bool) -> Result<()> {
    let obs = ObservedData::read(&a.observed)?;
    let task = task_for_observed(&a.task, &obs, &a.observed)?;
    let y_o = observation(&obs, a.row, task.as_ref())?;
    let mut cfg = match &a.config {
        Some(p) => config::parse(&std::fs::read_to_string(p)?)?,
        None => Default::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let run = run_semple(task.as_ref(), &y_o, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| output_dir().join(format!("run_{}_{}", task.name(), cfg.seed)));
    std::fs::create_dir_all(&out)?;
    let time = |t: f64| if deterministic { None } else { Some(t) };
    let mut rounds = Vec::new();
    for r in &run.rounds {
        let name = format!("round_{}_samples.csv", r.round);
        write(&out.join(&name), &samples_to_csv(&r.theta_samples))?;
        rounds.push(RoundRecord {
            round: r.round,
            acceptance_rate: r.acceptance_rate,
            surviving_k: r.surviving_k,
            refitted: r.refitted,
            loglik_trace: r.loglik_trace.clone(),
            wall_time: time(r.wall_time),
            simulator_calls: r.simulator_calls,
            failed_simulations: r.failed_simulations,
            samples: name,
        });
    }
    let manifest = RunManifest {
        run_id: format!("{}-{}", task.name(), cfg.seed),
        task: task.name().to_string(),
        seed: cfg.seed,
        observed: a.observed.display().to_string(),
        observed_row: a.row,
        config: cfg,
        gamma: run.gamma,
        deterministic,
        total_simulations: run.total_simulations(),
        initial: InitialRecord {
            surviving_k: run.initial.fit.inverse.k(),
            loglik_trace: run.initial.fit.loglik_trace.clone(),
            wall_time: time(run.initial.wall_time),
            simulator_calls: run.initial.simulator_calls,
            failed_simulations: run.initial.failed_simulations,
        },
        rounds,
        metrics: Vec::new(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    write(&out.join("manifest.json"), &manifest.to_json())?;
    println!("{}", out.display());
    Ok(())
}

fn cmd_reference(a: &ReferenceArgs) -> Result<()> {
    let bare = by_name(&a.task)?;
    if !bare.has_exact_likelihood() {
        return Err(Error::MissingExactLikelihood(bare.name().to_string()));
    }
    let obs = ObservedData::read(&a.observed)?;
    let task = task_for_observed(&a.task, &obs, &a.observed)?;
    let y_o = observation(&obs, a.row, task.as_ref())?;
    let samples = make_reference_posterior(task.as_ref(), &y_o, a.n, &ReferenceOptions::default(), a.seed)?;
    let out = a
        .out
        .clone()
        .unwrap_or_else(|| output_dir().join(format!("reference_{}_{}.csv", task.name(), a.seed)));
    write(&out, &samples_to_csv(&samples))?;
    println!("{}", out.display());
    Ok(())
}

/// Computes the named metrics between two samples.
pub fn compute_metrics(a: &DMatrix<f64>, b: &DMatrix<f64>, which: &[String], seed: u64) -> Result<Vec<(String, f64)>> {
    let pair = SamplePair::new(a, b)?;
    which
        .iter()
        .map(|m| {
            let v = match m.as_str() {
                "c2st" => c2st(pair, &C2stOptions { seed, ..Default::default() })?,
                "w2" | "wasserstein" => {
                    let size = a.nrows().min(b.nrows()).min(W2Options::default().subsample);
                    wasserstein2(pair, &W2Options { seed, subsample: size, ..Default::default() })?
                }
                other => return Err(Error::InvalidArgument(format!("unknown metric `{other}`"))),
            };
            Ok((m.clone(), v))
        })
        .collect()
}

fn cmd_metrics(a: &MetricsArgs) -> Result<()> {
    let samples = read_samples(&a.samples)?;
    let reference = read_samples(&a.reference)?;
    let values = compute_metrics(&samples, &reference, &a.which, a.seed)?;
    let mut manifest = a.manifest.as_ref().map(|p| RunManifest::read(p)).transpose()?;
    let run_id = a
        .run_id
        .clone()
        .or_else(|| manifest.as_ref().map(|m| m.run_id.clone()))
        .unwrap_or_else(|| a.samples.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let rows: Vec<MetricRow> = values
        .iter()
        .map(|(m, v)| MetricRow {
            run_id: run_id.clone(),
            round: a.round,
            metric: m.clone(),
            value: *v,
        })
        .collect();
    let out = a.out.clone().unwrap_or_else(|| output_dir().join("metrics.csv"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    append_metric_rows(&out, &rows)?;
    if let (Some(m), Some(path)) = (manifest.as_mut(), a.manifest.as_ref()) {
        for (metric, value) in &values {
            m.metrics.push(MetricRecord {
                round: a.round,
                metric: metric.clone(),
                value: *value,
                reference: a.reference.display().to_string(),
                seed: a.seed,
            });
        }
        write(path, &m.to_json())?;
    }
    for (m, v) in values {
        println!("{m}={v}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run_cli(["semple", "frobnicate"]), 1);
        assert_eq!(run_cli(["semple", "bic", "--task", "two_moons"]), 1);
        assert_eq!(run_cli(["semple", "--help"]), 0);
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&Error::UnknownTask("x".into())), 1);
        assert_eq!(
            exit_code(&Error::Config { line: 1, key: "k".into(), message: String::new() }),
            1
        );
        assert_eq!(exit_code(&Error::InvalidInit), 2);
        assert_eq!(exit_code(&Error::MissingExactLikelihood("lotka_volterra".into())), 2);
    }
}
