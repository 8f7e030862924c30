//! The sequential driver: prior round, direct surrogate-posterior round,
//! then independence-MH rounds, refitting GLLiM after each batch of
//! simulations.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gllim::{
    fit_em, fit_em_from, prune_components, CovarianceConstraint, EmFit, EmOptions, GllimForwardParams,
    GllimInverseParams, TrainingSet,
};
use crate::mcmc::{IndependenceSampler, TargetDensity};
use crate::rng::{derive_key, purpose, rng_from_seed, substream};
use crate::tasks::{sample_prior_batch, simulate_batch, Task};

/// Density targeted by the MH rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `q(y_o | theta) p(theta)` with the latest surrogate likelihood.
    LikelihoodTarget,
    /// `p(theta) / p_prev(theta) * q(theta | y_o)`.
    CorrectedPosterior,
}

impl std::str::FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "likelihood" | "likelihood_target" => Ok(TargetMode::LikelihoodTarget),
            "corrected" | "corrected_posterior" => Ok(TargetMode::CorrectedPosterior),
            other => Err(Error::InvalidArgument(format!("unknown target mode `{other}`"))),
        }
    }
}

/// How the simulation budget is split over rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    /// `R N` simulations: rounds `0..R-1` simulate and refit, the last
    /// reported round only draws parameters.
    Paper,
    /// `(R + 1) N` simulations: every round simulates and refits.
    Full,
}

impl std::str::FromStr for BudgetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(BudgetMode::Paper),
            "full" => Ok(BudgetMode::Full),
            other => Err(Error::InvalidArgument(format!("unknown budget mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SempleConfig {
    /// Number of reported rounds `R`.
    pub rounds: usize,
    /// Simulations per round `N`.
    pub n_per_round: usize,
    pub k0: usize,
    pub constraint: CovarianceConstraint,
    /// Proposal inflation; `None` uses the task default.
    pub gamma: Option<f64>,
    pub prune_threshold: f64,
    pub burnin: usize,
    pub mode: TargetMode,
    pub budget_mode: BudgetMode,
    /// Draws in a final round that does not simulate; defaults to `N`.
    pub final_samples: Option<usize>,
    pub seed: u64,
    pub em: EmOptions,
}

impl Default for SempleConfig {
    fn default() -> Self {
        Self {
            rounds: 4,
            n_per_round: 2500,
            k0: 30,
            constraint: CovarianceConstraint::Full,
            gamma: None,
            prune_threshold: 0.0,
            burnin: 100,
            mode: TargetMode::LikelihoodTarget,
            budget_mode: BudgetMode::Paper,
            final_samples: None,
            seed: 0,
            em: EmOptions::default(),
        }
    }
}

impl SempleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("R must be at least 1".into()));
        }
        if self.n_per_round == 0 || self.k0 == 0 {
            return Err(Error::InvalidArgument("N and K0 must be positive".into()));
        }
        if let Some(g) = self.gamma {
            if !(g >= 1.0) {
                return Err(Error::InvalidArgument(format!("gamma {g} must be >= 1")));
            }
        }
        if !(0.0..0.5).contains(&self.prune_threshold) {
            return Err(Error::InvalidArgument(format!(
                "prune threshold {} outside [0, 0.5)",
                self.prune_threshold
            )));
        }
        if self.final_samples == Some(0) {
            return Err(Error::InvalidArgument("final_samples must be positive".into()));
        }
        self.em.validate()
    }

    /// Total simulations a run performs.
    pub fn budget(&self) -> usize {
        match self.budget_mode {
            BudgetMode::Paper => self.rounds * self.n_per_round,
            BudgetMode::Full => (self.rounds + 1) * self.n_per_round,
        }
    }

    fn simulates(&self, round: usize) -> bool {
        self.budget_mode == BudgetMode::Full || round < self.rounds
    }
}

/// A fitted surrogate and its EM diagnostics.
#[derive(Debug, Clone)]
pub struct RoundFit {
    pub inverse: GllimInverseParams,
    pub forward: GllimForwardParams,
    pub loglik_trace: Vec<f64>,
    pub em_iterations: usize,
    /// Components before pruning.
    pub fitted_k: usize,
}

/// The prior round `r = 0`.
#[derive(Debug, Clone)]
pub struct InitialRound {
    pub fit: RoundFit,
    pub simulator_calls: usize,
    pub failed_simulations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct RoundOutput {
    pub round: usize,
    pub theta_samples: DMatrix<f64>,
    /// The surrogate after this round. Equal to the previous one when the
    /// round did not refit.
    pub fitted_inverse: GllimInverseParams,
    pub fitted_forward: GllimForwardParams,
    pub refitted: bool,
    pub loglik_trace: Vec<f64>,
    /// 1 for the direct-sampling round.
    pub acceptance_rate: f64,
    pub surviving_k: usize,
    pub wall_time: f64,
    /// Successful simulations in this round.
    pub simulator_calls: usize,
    pub failed_simulations: usize,
    /// Record ids `(round << 32) | index` of the training set fitted here.
    pub training_ids: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct SempleRun {
    pub initial: InitialRound,
    pub rounds: Vec<RoundOutput>,
    pub gamma: f64,
}

impl SempleRun {
    pub fn total_simulations(&self) -> usize {
        self.initial.simulator_calls + self.rounds.iter().map(|r| r.simulator_calls).sum::<usize>()
    }

    pub fn final_round(&self) -> &RoundOutput {
        self.rounds.last().expect("a run has at least one round")
    }
}

/// Recursive description of a round target, kept so the corrected-posterior
/// mode can divide by the previous target.
#[derive(Debug, Clone)]
pub enum RoundTarget {
    /// `q(theta | y_o)` sampled directly in round 1.
    Surrogate(Arc<GllimForwardParams>),
    Likelihood(Arc<GllimInverseParams>),
    Corrected {
        previous: Arc<RoundTarget>,
        forward: Arc<GllimForwardParams>,
    },
}

impl RoundTarget {
    pub fn log_density(&self, task: &dyn Task, y_o: &[f64], theta: &[f64]) -> f64 {
        match self {
            RoundTarget::Surrogate(fwd) => fwd.surrogate_posterior_logpdf(theta, y_o).unwrap_or(f64::NAN),
            RoundTarget::Likelihood(inv) => {
                let lp = task.prior_logpdf(theta);
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
                lp + inv.surrogate_loglik(y_o, theta).unwrap_or(f64::NAN)
            }
            RoundTarget::Corrected { previous, forward } => {
                let lp = task.prior_logpdf(theta);
                if lp == f64::NEG_INFINITY {
                    return lp;
                }
                lp - previous.log_density(task, y_o, theta)
                    + forward.surrogate_posterior_logpdf(theta, y_o).unwrap_or(f64::NAN)
            }
        }
    }
}

/// The MH target for the next round.
pub fn build_target<'a>(
    mode: TargetMode,
    task: &'a dyn Task,
    inv_prev: &GllimInverseParams,
    fwd_prev: &GllimForwardParams,
    prev_target: Arc<RoundTarget>,
    y_o: &'a [f64],
) -> (Arc<RoundTarget>, TargetDensity<'a>) {
    let spec = Arc::new(match mode {
        TargetMode::LikelihoodTarget => RoundTarget::Likelihood(Arc::new(inv_prev.clone())),
        TargetMode::CorrectedPosterior => RoundTarget::Corrected {
            previous: prev_target,
            forward: Arc::new(fwd_prev.clone()),
        },
    });
    let inner = spec.clone();
    let density = TargetDensity::new(
        move |theta| inner.log_density(task, y_o, theta),
        move |theta| task.in_support(theta),
    );
    (spec, density)
}

fn record_id(round: usize, index: usize) -> u64 {
    ((round as u64) << 32) | index as u64
}

struct Batch {
    data: TrainingSet,
    ids: Vec<u64>,
    failures: usize,
}

/// Simulates every row of `thetas`; failed rows are replaced by `redraw`
/// until `100 n` failures have occurred.
fn simulate_round(
    task: &dyn Task,
    thetas: DMatrix<f64>,
    seed: u64,
    round: usize,
    mut redraw: impl FnMut() -> Result<Vec<f64>>,
) -> Result<Batch> {
    let n = thetas.nrows();
    let path = [purpose::SIMULATE, round as u64];
    let results = simulate_batch(task, &thetas, seed, &path, 0);
    let mut ys = DMatrix::zeros(n, task.data_dim());
    let mut out_thetas = thetas;
    let mut failures = 0;
    let mut next_index = n as u64;
    for (i, res) in results.into_iter().enumerate() {
        let mut res = res;
        loop {
            match res {
                Ok(y) => {
                    ys.row_mut(i).copy_from_slice(&y);
                    break;
                }
                Err(_) => {
                    failures += 1;
                    if failures > 100 * n {
                        return Err(Error::SimulatorFailure {
                            round,
                            attempts: failures,
                        });
                    }
                    let theta = redraw()?;
                    out_thetas.row_mut(i).copy_from_slice(&theta);
                    res = task.simulate(&theta, &mut substream(seed, &path, next_index));
                    next_index += 1;
                }
            }
        }
    }
    Ok(Batch {
        data: TrainingSet::new(out_thetas, ys)?,
        ids: (0..n).map(|i| record_id(round, i)).collect(),
        failures,
    })
}

fn finish_fit(fit: EmFit, threshold: f64) -> Result<RoundFit> {
    let fitted_k = fit.params.k();
    let inverse = prune_components(&fit.params, threshold)?;
    let forward = inverse.to_forward()?;
    Ok(RoundFit {
        inverse,
        forward,
        loglik_trace: fit.loglik_trace,
        em_iterations: fit.iterations,
        fitted_k,
    })
}

/// Warm start from the previous parameters plus one cold restart at the
/// current K; the higher final log-likelihood wins.
fn refit(data: &TrainingSet, prev: &GllimInverseParams, opts: &EmOptions, round: usize) -> Result<EmFit> {
    let warm = fit_em_from(data, prev, opts);
    let cold_opts = EmOptions {
        restarts: 1,
        seed: derive_key(opts.seed, &[purpose::FIT, round as u64]),
        ..opts.clone()
    };
    let cold = fit_em(data, prev.k(), prev.constraint(), &cold_opts);
    match (warm, cold) {
        (Ok(w), Ok(c)) => Ok(if c.final_loglik() > w.final_loglik() { c } else { w }),
        (Ok(w), Err(_)) => Ok(w),
        (Err(_), Ok(c)) => Ok(c),
        (Err(e), Err(_)) => Err(e),
    }
}

fn matrix_row(m: &DMatrix<f64>, i: usize) -> Vec<f64> {
    m.row(i).iter().copied().collect()
}

/// Runs the sequential algorithm on observation `y_o`.
pub fn run_semple(task: &dyn Task, y_o: &[f64], config: &SempleConfig) -> Result<SempleRun> {
    config.validate()?;
    if y_o.len() != task.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, task `{}` produces {}",
            y_o.len(),
            task.name(),
            task.data_dim()
        )));
    }
    let seed = config.seed;
    let n = config.n_per_round;
    let gamma = config.gamma.unwrap_or_else(|| task.default_gamma());
    let em = EmOptions {
        seed: derive_key(seed, &[purpose::FIT]),
        ..config.em.clone()
    };

    // Round 0: prior predictive.
    let start = Instant::now();
    let initial = (|| {
        let thetas = sample_prior_batch(task, n, seed, &[purpose::PRIOR]);
        let mut next = n as u64;
        let batch = simulate_round(task, thetas, seed, 0, || {
            let theta = task.sample_prior(&mut substream(seed, &[purpose::PRIOR], next));
            next += 1;
            Ok(theta)
        })?;
        let fit = fit_em(&batch.data, config.k0, config.constraint, &em)?;
        Ok::<_, Error>((finish_fit(fit, config.prune_threshold)?, batch.failures))
    })()
    .map_err(|e| e.in_round(0))?;
    let initial = InitialRound {
        fit: initial.0,
        simulator_calls: n,
        failed_simulations: initial.1,
        wall_time: start.elapsed().as_secs_f64(),
    };

    let mut inv = initial.fit.inverse.clone();
    let mut fwd = initial.fit.forward.clone();
    let mut target_spec = Arc::new(RoundTarget::Surrogate(Arc::new(fwd.clone())));
    let mut data: Option<TrainingSet> = None;
    let mut ids: Vec<u64> = Vec::new();
    let mut chain_state: Option<Vec<f64>> = None;
    let mut previous_draws: Option<DMatrix<f64>> = None;
    let mut rounds = Vec::with_capacity(config.rounds);

    for r in 1..=config.rounds {
        let start = Instant::now();
        let simulate = config.simulates(r);
        let draws = if simulate { n } else { config.final_samples.unwrap_or(n) };
        let mut rng = rng_from_seed(derive_key(seed, &[purpose::PROPOSE, r as u64]));

        let result = (|| -> Result<RoundOutput> {
            let (thetas, acceptance_rate, batch, next_state) = if r == 1 {
                let post = fwd.posterior(y_o, 1.0)?;
                let mut thetas = DMatrix::zeros(draws, task.param_dim());
                for i in 0..draws {
                    thetas.row_mut(i).copy_from_slice(&post.sample(&mut rng));
                }
                let batch = if simulate {
                    Some(simulate_round(task, thetas.clone(), seed, r, || Ok(post.sample(&mut rng)))?)
                } else {
                    None
                };
                (thetas, 1.0, batch, None)
            } else {
                let (spec, density) = build_target(config.mode, task, &inv, &fwd, target_spec.clone(), y_o);
                target_spec = spec;
                let proposal = fwd.posterior(y_o, gamma)?;
                let init = match &chain_state {
                    Some(s) => s.clone(),
                    None => best_start(&density, &fwd, y_o, previous_draws.as_ref().expect("round 1 ran"))?,
                };
                let mut sampler = IndependenceSampler::new(&density, proposal, &init)?;
                for _ in 0..config.burnin {
                    sampler.step(&mut rng)?;
                }
                let mut thetas = DMatrix::zeros(draws, task.param_dim());
                for i in 0..draws {
                    thetas.row_mut(i).copy_from_slice(sampler.step(&mut rng)?);
                }
                let batch = if simulate {
                    Some(simulate_round(task, thetas.clone(), seed, r, || {
                        Ok(sampler.step(&mut rng)?.to_vec())
                    })?)
                } else {
                    None
                };
                let rate = sampler.accepted() as f64 / sampler.proposed().max(1) as f64;
                (thetas, rate, batch, Some(sampler.state().to_vec()))
            };

            let (theta_samples, refit_out, calls, failures) = match batch {
                Some(batch) => {
                    let round_ids = batch.ids.clone();
                    let merged = match (&data, r) {
                        (Some(prev), r) if r >= 2 => {
                            ids.extend(round_ids);
                            prev.concat(&batch.data)?
                        }
                        _ => {
                            ids = round_ids;
                            batch.data.clone()
                        }
                    };
                    let fit = refit(&merged, &inv, &em, r)?;
                    let fit = finish_fit(fit, config.prune_threshold)?;
                    data = Some(merged);
                    (batch.data.thetas().clone(), Some(fit), n, batch.failures)
                }
                None => (thetas, None, 0, 0),
            };
            chain_state = next_state;
            previous_draws = Some(theta_samples.clone());

            let (refitted, loglik_trace) = match refit_out {
                Some(fit) => {
                    inv = fit.inverse;
                    fwd = fit.forward;
                    (true, fit.loglik_trace)
                }
                None => (false, Vec::new()),
            };
            Ok(RoundOutput {
                round: r,
                theta_samples,
                fitted_inverse: inv.clone(),
                fitted_forward: fwd.clone(),
                refitted,
                loglik_trace,
                acceptance_rate,
                surviving_k: inv.k(),
                wall_time: start.elapsed().as_secs_f64(),
                simulator_calls: calls,
                failed_simulations: failures,
                training_ids: if refitted { ids.clone() } else { Vec::new() },
            })
        })();
        rounds.push(result.map_err(|e| e.in_round(r))?);
    }

    Ok(SempleRun {
        initial,
        rounds,
        gamma,
    })
}

/// First MH state: the previous draw with the highest surrogate-posterior
/// density among those inside the target support.
fn best_start(
    target: &TargetDensity<'_>,
    fwd: &GllimForwardParams,
    y_o: &[f64],
    draws: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..draws.nrows() {
        let theta = matrix_row(draws, i);
        let lt = target.log_density(&theta);
        if !lt.is_finite() {
            continue;
        }
        let q = fwd.surrogate_posterior_logpdf(&theta, y_o)?;
        if best.as_ref().is_none_or(|(b, _)| q > *b) {
            best = Some((q, theta));
        }
    }
    best.map(|(_, t)| t).ok_or(Error::InvalidInit)
}
