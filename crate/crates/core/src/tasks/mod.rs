//! Benchmark simulators.
//!
//! Each task bundles a prior, a stochastic simulator and, when available,
//! its exact likelihood. Tasks are addressed by name through [`by_name`].

mod hyperboloid;
mod linear_gaussian;
pub mod lotka_volterra;
mod ou;
mod reference;
mod twisted;
mod two_moons;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result, SimulationError};
use crate::rng::{purpose, substream, SimRng};

pub use hyperboloid::{hyperboloid_f, HyperboloidTask, MICROPHONES_1, MICROPHONES_2};
pub use linear_gaussian::LinearGaussianTask;
pub use lotka_volterra::{LotkaVolterraTask, LvScaler, LvSeries};
pub use ou::OuTask;
pub use reference::{make_reference_posterior, ReferenceOptions};
pub use twisted::TwistedPriorTask;
pub use two_moons::TwoMoonsTask;

/// A simulator bundle.
pub trait Task: Send + Sync {
    fn name(&self) -> &str;

    /// Parameter dimension `l`.
    fn param_dim(&self) -> usize;

    /// Data dimension `d`.
    fn data_dim(&self) -> usize;

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64>;

    /// Prior log-density up to a constant; `-inf` off the support.
    fn prior_logpdf(&self, theta: &[f64]) -> f64;

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError>;

    /// `log p(y | theta)` when the likelihood is tractable.
    fn exact_loglik(&self, _y: &[f64], _theta: &[f64]) -> Option<f64> {
        None
    }

    fn has_exact_likelihood(&self) -> bool {
        false
    }

    fn ground_truth(&self) -> Option<Vec<f64>> {
        None
    }

    /// Proposal inflation used when none is configured.
    fn default_gamma(&self) -> f64 {
        1.15
    }

    fn in_support(&self, theta: &[f64]) -> bool {
        theta.len() == self.param_dim() && self.prior_logpdf(theta) > f64::NEG_INFINITY
    }
}

pub const TASK_NAMES: [&str; 6] = [
    "two_moons",
    "hyperboloid",
    "ou",
    "lotka_volterra",
    "twisted_prior",
    "linear_gaussian",
];

/// Looks a task up by name. Lotka-Volterra is returned without a summary
/// scaler; see [`LotkaVolterraTask::with_scaler`].
pub fn by_name(name: &str) -> Result<Box<dyn Task>> {
    let task: Box<dyn Task> = match name.to_ascii_lowercase().replace('-', "_").as_str() {
        "two_moons" | "twomoons" => Box::new(TwoMoonsTask),
        "hyperboloid" => Box::new(HyperboloidTask::default()),
        "ou" | "ornstein_uhlenbeck" => Box::new(OuTask::default()),
        "lotka_volterra" | "lv" => Box::new(LotkaVolterraTask::default()),
        "twisted_prior" | "twisted" => Box::new(TwistedPriorTask::default()),
        "linear_gaussian" => Box::new(LinearGaussianTask::default()),
        _ => return Err(Error::UnknownTask(name.to_string())),
    };
    Ok(task)
}

/// `n` prior draws, draw `i` taken from substream `(seed, path, i)`.
pub fn sample_prior_batch(task: &dyn Task, n: usize, seed: u64, path: &[u64]) -> DMatrix<f64> {
    let l = task.param_dim();
    let mut out = DMatrix::zeros(n, l);
    for i in 0..n {
        let mut rng = substream(seed, path, i as u64);
        let theta = task.sample_prior(&mut rng);
        out.row_mut(i).copy_from_slice(&theta);
    }
    out
}

/// Simulates every row of `thetas` in parallel. Row `i` uses substream
/// `(seed, path, first_index + i)`, so results do not depend on scheduling.
pub fn simulate_batch(
    task: &dyn Task,
    thetas: &DMatrix<f64>,
    seed: u64,
    path: &[u64],
    first_index: u64,
) -> Vec<Result<Vec<f64>, SimulationError>> {
    (0..thetas.nrows())
        .into_par_iter()
        .map(|i| {
            let theta: Vec<f64> = thetas.row(i).iter().copied().collect();
            let mut rng = substream(seed, path, first_index + i as u64);
            task.simulate(&theta, &mut rng)
        })
        .collect()
}

/// Draws `n` prior-predictive pairs, redrawing from the prior when the
/// simulator fails. Gives up after `100 n` failures.
pub fn prior_predictive(task: &dyn Task, n: usize, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (l, d) = (task.param_dim(), task.data_dim());
    let mut thetas = DMatrix::zeros(n, l);
    let mut ys = DMatrix::zeros(n, d);
    let prior_path = [purpose::PRIOR];
    let sim_path = [purpose::SIMULATE];
    let draws = sample_prior_batch(task, n, seed, &prior_path);
    let results = simulate_batch(task, &draws, seed, &sim_path, 0);
    let mut next = n as u64;
    let mut failures = 0;
    for (i, res) in results.into_iter().enumerate() {
        let mut theta: Vec<f64> = draws.row(i).iter().copied().collect();
        let mut res = res;
        loop {
            match res {
                Ok(y) => {
                    thetas.row_mut(i).copy_from_slice(&theta);
                    ys.row_mut(i).copy_from_slice(&y);
                    break;
                }
                Err(_) => {
                    failures += 1;
                    if failures > 100 * n {
                        return Err(Error::SimulatorFailure {
                            round: 0,
                            attempts: failures,
                        });
                    }
                    theta = task.sample_prior(&mut substream(seed, &prior_path, next));
                    res = task.simulate(&theta, &mut substream(seed, &sim_path, next));
                    next += 1;
                }
            }
        }
    }
    Ok((thetas, ys))
}

/// `n` independent simulations at a fixed `theta`, row `i` from substream
/// `(seed, OBSERVE, i)`. A failed call moves on to the next substream; more
/// than `100 n` failures is an error.
pub fn simulate_observed(task: &dyn Task, theta: &[f64], n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if !task.in_support(theta) {
        return Err(Error::InvalidArgument(format!(
            "theta {theta:?} is outside the support of `{}`",
            task.name()
        )));
    }
    let mut ys = DMatrix::zeros(n, task.data_dim());
    let (mut index, mut failures) = (0u64, 0usize);
    let mut row = 0;
    while row < n {
        match task.simulate(theta, &mut substream(seed, &[purpose::OBSERVE], index)) {
            Ok(y) => {
                ys.row_mut(row).copy_from_slice(&y);
                row += 1;
            }
            Err(_) => {
                failures += 1;
                if failures > 100 * n {
                    return Err(Error::SimulatorFailure { round: 0, attempts: failures });
                }
            }
        }
        index += 1;
    }
    Ok(ys)
}

/// Log-density of the uniform distribution on a box, or `-inf` outside it.
pub(crate) fn uniform_box_logpdf(theta: &[f64], bounds: &[(f64, f64)]) -> f64 {
    if theta.len() != bounds.len() {
        return f64::NEG_INFINITY;
    }
    let mut lp = 0.0;
    for (x, (lo, hi)) in theta.iter().zip(bounds) {
        if !(*x > *lo && *x < *hi) {
            return f64::NEG_INFINITY;
        }
        lp -= (hi - lo).ln();
    }
    lp
}

pub(crate) fn uniform_box_sample(rng: &mut SimRng, bounds: &[(f64, f64)]) -> Vec<f64> {
    use rand::Rng;
    bounds
        .iter()
        .map(|(lo, hi)| loop {
            let x = rng.random_range(*lo..*hi);
            if x > *lo {
                break x;
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_task_prior_draw_is_in_support() {
        for name in TASK_NAMES {
            let task = by_name(name).unwrap();
            let draws = sample_prior_batch(task.as_ref(), 10_000, 3, &[purpose::PRIOR]);
            for i in 0..draws.nrows() {
                let theta: Vec<f64> = draws.row(i).iter().copied().collect();
                assert!(task.prior_logpdf(&theta) > f64::NEG_INFINITY, "{name} draw {i}");
            }
        }
    }

    #[test]
    fn unknown_task_is_an_error() {
        assert!(matches!(by_name("nope"), Err(Error::UnknownTask(_))));
    }
}
