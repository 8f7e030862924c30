//! Exact-likelihood reference posteriors.
//!
//! Chains start from a sampling-importance-resampling (SIR) approximation
//! built from prior draws, so that every posterior mode receives chains in
//! proportion to its mass. A few pilot phases then tune a shared
//! random-walk covariance from the pooled within-chain spread, and the
//! production chains are pooled.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sample_prior_batch, Task};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, normalize_log_weights};
use crate::mcmc::{random_walk_with, TargetDensity};
use crate::rng::{derive_key, purpose, rng_from_seed, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub chains: usize,
    pub sir_draws: usize,
    pub burnin: usize,
    pub thin: usize,
    pub pilot_steps: usize,
    pub pilot_rounds: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            chains: 100,
            sir_draws: 200_000,
            burnin: 1000,
            thin: 5,
            pilot_steps: 500,
            pilot_rounds: 8,
        }
    }
}

/// `n` draws from `p(theta | y_o)` using the task's exact likelihood.
pub fn make_reference_posterior(
    task: &dyn Task,
    y_o: &[f64],
    n: usize,
    opts: &ReferenceOptions,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if !task.has_exact_likelihood() {
        return Err(Error::MissingExactLikelihood(task.name().to_string()));
    }
    if y_o.len() != task.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, task expects {}",
            y_o.len(),
            task.data_dim()
        )));
    }
    if n == 0 || opts.chains == 0 || opts.sir_draws == 0 || opts.thin == 0 {
        return Err(Error::InvalidArgument("reference sizes must be positive".into()));
    }
    let l = task.param_dim();
    let density = TargetDensity::new(
        |theta| {
            let lp = task.prior_logpdf(theta);
            if lp == f64::NEG_INFINITY {
                return lp;
            }
            lp + task.exact_loglik(y_o, theta).unwrap_or(f64::NEG_INFINITY)
        },
        |theta| task.in_support(theta),
    );

    // SIR on prior draws: the weights are the likelihood values.
    let draws = sample_prior_batch(task, opts.sir_draws, seed, &[purpose::REFERENCE, 0]);
    let mut logw: Vec<f64> = (0..draws.nrows())
        .map(|i| {
            let theta: Vec<f64> = draws.row(i).iter().copied().collect();
            task.exact_loglik(y_o, &theta).unwrap_or(f64::NEG_INFINITY)
        })
        .collect();
    if logw.iter().all(|w| !w.is_finite()) {
        return Err(Error::NonFinite("every prior draw has zero likelihood at y_o".into()));
    }
    normalize_log_weights(&mut logw);
    let w = logw;
    let ess = 1.0 / w.iter().map(|v| v * v).sum::<f64>();

    let mut rng = rng_from_seed(derive_key(seed, &[purpose::REFERENCE, 1]));
    let mut states: Vec<Vec<f64>> = systematic_resample(&w, opts.chains, rng.random())
        .into_iter()
        .map(|i| draws.row(i).iter().copied().collect())
        .collect();

    let scale = 2.38 * 2.38 / l as f64;
    let mut step = if ess >= 10.0 * l as f64 {
        weighted_cov(&draws, &w) * scale
    } else {
        let unif = vec![1.0 / draws.nrows() as f64; draws.nrows()];
        DMatrix::from_diagonal(&weighted_cov(&draws, &unif).diagonal()) * (scale * 0.01)
    };

    for round in 0..opts.pilot_rounds {
        let step_ok = regularize(&step);
        let mut pooled = DMatrix::zeros(l, l);
        let mut dof = 0usize;
        let (mut acc, mut prop) = (0usize, 0usize);
        for (c, state) in states.iter_mut().enumerate() {
            let chain_seed = derive_key(seed, &[purpose::REFERENCE, 2, round as u64, c as u64]);
            let mut crng = substream(seed, &[purpose::REFERENCE, 2, round as u64], c as u64);
            let chain = random_walk_with(&density, &step_ok, state, opts.pilot_steps, 0, 1, chain_seed, &mut crng)?;
            acc += chain.accepted;
            prop += chain.proposed;
            let s = &chain.samples;
            let mean = DVector::from_fn(l, |j, _| s.column(j).mean());
            let mut centred = s.clone();
            for j in 0..l {
                centred.column_mut(j).add_scalar_mut(-mean[j]);
            }
            pooled += centred.transpose() * &centred;
            dof += s.nrows().saturating_sub(1);
            *state = chain.last_state;
        }
        let rate = acc as f64 / prop.max(1) as f64;
        if rate < 0.05 {
            step *= 0.1;
        } else {
            let within = pooled / dof.max(1) as f64;
            let mut next = within * scale;
            // Keep the acceptance near the usual optimum for random walks.
            if rate < 0.15 {
                next *= 0.5;
            } else if rate > 0.5 {
                next *= 2.0;
            }
            step = next;
            if round + 1 >= 3 && (0.15..=0.5).contains(&rate) {
                break;
            }
        }
    }

    let step = regularize(&step);
    let mut out = DMatrix::zeros(n, l);
    let mut row = 0;
    for (c, state) in states.iter().enumerate() {
        let keep = n / opts.chains + usize::from(c < n % opts.chains);
        if keep == 0 {
            continue;
        }
        let chain_seed = derive_key(seed, &[purpose::REFERENCE, 3, c as u64]);
        let mut crng = substream(seed, &[purpose::REFERENCE, 3], c as u64);
        let chain = random_walk_with(&density, &step, state, keep, opts.burnin, opts.thin, chain_seed, &mut crng)?;
        out.rows_mut(row, keep).copy_from(&chain.samples);
        row += keep;
    }
    Ok(out)
}

fn regularize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    let l = out.nrows();
    let tr = (out.trace() / l as f64).max(f64::MIN_POSITIVE);
    let mut jitter = 1e-10 * tr;
    while cholesky_lower(&out).is_none() {
        for i in 0..l {
            out[(i, i)] += jitter;
        }
        jitter *= 10.0;
    }
    out
}

fn weighted_cov(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let l = x.ncols();
    let wv = DVector::from_column_slice(w);
    let mean = x.transpose() * &wv;
    let mut c = x.clone();
    for (i, wi) in w.iter().enumerate() {
        let s = wi.sqrt();
        for j in 0..l {
            c[(i, j)] = (c[(i, j)] - mean[j]) * s;
        }
    }
    c.transpose() * c
}

/// Indices drawn by systematic resampling with offset `u` in `[0, 1)`.
fn systematic_resample(w: &[f64], m: usize, u: f64) -> Vec<usize> {
    let mut out = Vec::with_capacity(m);
    let mut cum = w[0];
    let mut i = 0;
    for k in 0..m {
        let p = (k as f64 + u) / m as f64;
        while p > cum && i + 1 < w.len() {
            i += 1;
            cum += w[i];
        }
        out.push(i);
    }
    out
}
