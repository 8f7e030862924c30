//! Expectation-maximization for the joint GLLiM mixture.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mixture::{AffineComponent, AffineMixture};
use super::{CovarianceConstraint, GllimInverseParams, TrainingSet};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, regularized_cholesky, spd_inverse};
use crate::rng::{derive_key, purpose, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iterations: usize,
    pub loglik_rel_tolerance: f64,
    pub restarts: usize,
    /// Relative diagonal jitter, scaled by `trace(M) / dim`.
    pub jitter: f64,
    /// Weight floor `pi_k` below which a component is removed mid-run.
    /// `None` means `1 / (10 n)`.
    pub min_weight: Option<f64>,
    pub seed: u64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            loglik_rel_tolerance: 1e-6,
            restarts: 3,
            jitter: 1e-8,
            min_weight: None,
            seed: 0,
        }
    }
}

impl EmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.loglik_rel_tolerance > 0.0) {
            return Err(Error::InvalidArgument("loglik_rel_tolerance must be positive".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument("jitter must be non-negative".into()));
        }
        if let Some(w) = self.min_weight {
            if !(0.0..1.0).contains(&w) {
                return Err(Error::InvalidArgument("min_weight must lie in [0, 1)".into()));
            }
        }
        Ok(())
    }

    fn weight_floor(&self, n: usize) -> f64 {
        self.min_weight.unwrap_or(1.0 / (10.0 * n as f64))
    }
}

/// Result of an EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: GllimInverseParams,
    /// Joint log-likelihood after every E-step.
    pub loglik_trace: Vec<f64>,
    /// Indices into `loglik_trace` where a collapse removed components. The
    /// trace is non-decreasing within each segment.
    pub segment_starts: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmFit {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Per-dataset quantities used for covariance fallbacks.
struct Scales {
    theta: f64,
    y: f64,
}

impl Scales {
    fn of(data: &TrainingSet) -> Self {
        let avg_var = |m: &DMatrix<f64>| {
            let n = m.nrows() as f64;
            let mut total = 0.0;
            for col in m.column_iter() {
                let mean = col.sum() / n;
                total += col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            }
            let v = total / m.ncols() as f64;
            if v > 0.0 && v.is_finite() {
                v
            } else {
                1.0
            }
        };
        Self {
            theta: avg_var(data.thetas()),
            y: avg_var(data.ys()),
        }
    }
}

/// Fits a `k`-component GLLiM to `data`, keeping the best of `opts.restarts`
/// k-means++ initializations.
pub fn fit_em(
    data: &TrainingSet,
    k: usize,
    constraint: CovarianceConstraint,
    opts: &EmOptions,
) -> Result<EmFit> {
    opts.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let needed = k * (data.param_dim() + 1);
    if data.len() < needed {
        return Err(Error::InsufficientData(format!(
            "{} rows cannot support K={k} (need at least {needed})",
            data.len()
        )));
    }
    let scales = Scales::of(data);
    let mut best: Option<EmFit> = None;
    let mut first_err = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = rng_from_seed(derive_key(opts.seed, &[purpose::FIT, r as u64]));
        let resp = kmeans_responsibilities(data, k, &mut rng);
        match run(data, Start::Responsibilities(resp), constraint, opts, &scales) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.final_loglik() > b.final_loglik()) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one restart ran"))
}

/// Runs EM from existing parameters (a warm start).
pub fn fit_em_from(data: &TrainingSet, init: &GllimInverseParams, opts: &EmOptions) -> Result<EmFit> {
    opts.validate()?;
    init.check_data(data)?;
    let scales = Scales::of(data);
    run(data, Start::Params(init.clone()), init.constraint(), opts, &scales)
}

enum Start {
    Responsibilities(DMatrix<f64>),
    Params(GllimInverseParams),
}

fn run(
    data: &TrainingSet,
    start: Start,
    constraint: CovarianceConstraint,
    opts: &EmOptions,
    scales: &Scales,
) -> Result<EmFit> {
    let n = data.len();
    let floor = opts.weight_floor(n);
    let mut trace = Vec::new();
    let mut segment_starts = vec![0];
    let mut iterations = 0;
    let mut converged = false;

    let (mut params, mut resp) = match start {
        Start::Params(p) => {
            let (resp, ll) = e_step(&p, data)?;
            trace.push(ll);
            (p, resp)
        }
        Start::Responsibilities(resp) => {
            let (p, _) = m_step(data, &resp, constraint, opts, scales, floor)?;
            let (resp, ll) = e_step(&p, data)?;
            trace.push(ll);
            iterations = 1;
            (p, resp)
        }
    };

    while iterations < opts.max_iterations {
        let (next, collapsed) = m_step(data, &resp, constraint, opts, scales, floor)?;
        iterations += 1;
        let (next_resp, ll) = e_step(&next, data)?;
        if collapsed {
            segment_starts.push(trace.len());
        }
        let prev = *trace.last().unwrap();
        trace.push(ll);
        params = next;
        resp = next_resp;
        if !collapsed && (ll - prev) <= opts.loglik_rel_tolerance * prev.abs() {
            converged = true;
            break;
        }
    }

    Ok(EmFit {
        params,
        loglik_trace: trace,
        segment_starts,
        iterations,
        converged,
    })
}

/// Responsibilities and the joint log-likelihood under `params`.
fn e_step(params: &GllimInverseParams, data: &TrainingSet) -> Result<(DMatrix<f64>, f64)> {
    let mut terms = params.mixture().joint_log_terms(data.thetas(), data.ys());
    let k = terms.ncols();
    let mut total = 0.0;
    let mut row = vec![0.0; k];
    for i in 0..terms.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = terms[(i, j)];
        }
        let lse = log_sum_exp(&row);
        if !lse.is_finite() {
            return Err(Error::NonFinite(format!("joint log-density of row {i} is {lse}")));
        }
        total += lse;
        for j in 0..k {
            terms[(i, j)] = (row[j] - lse).exp();
        }
    }
    Ok((terms, total))
}

/// Closed-form maximization given responsibilities. Components whose weight
/// falls below `floor`, or whose effective count `s_k` is too small to give
/// a non-singular residual covariance, are dropped; the flag reports whether
/// any were.
fn m_step(
    data: &TrainingSet,
    resp: &DMatrix<f64>,
    constraint: CovarianceConstraint,
    opts: &EmOptions,
    scales: &Scales,
    floor: f64,
) -> Result<(GllimInverseParams, bool)> {
    let n = data.len() as f64;
    let min_count = data.param_dim() as f64
        + match constraint {
            CovarianceConstraint::Full => 1.0 + data.data_dim() as f64,
            CovarianceConstraint::Isotropic => 2.0,
        };
    let sums: Vec<f64> = resp.column_iter().map(|c| c.sum()).collect();
    let keep: Vec<usize> = (0..sums.len())
        .filter(|&k| sums[k] >= min_count && sums[k] / n >= floor)
        .collect();
    if keep.is_empty() {
        return Err(Error::InsufficientData("every component collapsed".into()));
    }
    let collapsed = keep.len() < sums.len();
    let total: f64 = keep.iter().map(|&k| sums[k]).sum();

    let components = keep
        .par_iter()
        .map(|&k| {
            let w = resp.column(k);
            update_component(data, w.as_slice(), sums[k], sums[k] / total, constraint, opts, scales)
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = AffineMixture::new(components)?;
    Ok((GllimInverseParams::from_mixture(mixture, constraint), collapsed))
}

fn update_component(
    data: &TrainingSet,
    w: &[f64],
    s: f64,
    weight: f64,
    constraint: CovarianceConstraint,
    opts: &EmOptions,
    scales: &Scales,
) -> Result<AffineComponent> {
    let thetas = data.thetas();
    let ys = data.ys();
    let (l, d) = (thetas.ncols(), ys.ncols());
    let wv = DVector::from_column_slice(w);
    let c = thetas.transpose() * &wv / s;
    let ybar = ys.transpose() * &wv / s;

    // Centred rows scaled by sqrt(w).
    let mut tw = thetas.clone();
    let mut yw = ys.clone();
    for (i, wi) in w.iter().enumerate() {
        let sw = wi.sqrt();
        for j in 0..l {
            tw[(i, j)] = (tw[(i, j)] - c[j]) * sw;
        }
        for j in 0..d {
            yw[(i, j)] = (yw[(i, j)] - ybar[j]) * sw;
        }
    }
    let gamma_raw = tw.transpose() * &tw / s;
    let (gamma, gamma_lower) = regularized_cholesky(&gamma_raw, opts.jitter, scales.theta)?;
    let cross = yw.transpose() * &tw / s;
    let map = cross * spd_inverse(&gamma_lower);
    let offset = &ybar - &map * &c;

    let resid = yw - tw * map.transpose();
    let noise_raw = match constraint {
        CovarianceConstraint::Full => resid.transpose() * &resid / s,
        CovarianceConstraint::Isotropic => {
            let v = resid.norm_squared() / (d as f64 * s);
            DMatrix::from_diagonal_element(d, d, v)
        }
    };
    let (noise_cov, _) = regularized_cholesky(&noise_raw, opts.jitter, scales.y)?;

    Ok(AffineComponent {
        weight,
        input_mean: c,
        input_cov: gamma,
        map,
        offset,
        noise_cov,
    })
}

/// Hard responsibilities from k-means++ seeding followed by Lloyd iterations
/// on jointly standardized rows.
fn kmeans_responsibilities<R: Rng + ?Sized>(data: &TrainingSet, k: usize, rng: &mut R) -> DMatrix<f64> {
    let n = data.len();
    let (l, d) = (data.param_dim(), data.data_dim());
    let mut z = DMatrix::zeros(n, l + d);
    z.columns_mut(0, l).copy_from(data.thetas());
    z.columns_mut(l, d).copy_from(data.ys());
    for mut col in z.column_iter_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        col.apply(|v| *v = (*v - mean) / sd);
    }
    let norms: Vec<f64> = z.row_iter().map(|r| r.norm_squared()).collect();

    let mut centers = DMatrix::zeros(k, l + d);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&z.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| (z.row(i) - z.row(first)).norm_squared()).collect();
    for j in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, v) in nearest.iter().enumerate() {
                if u < *v {
                    idx = i;
                    break;
                }
                u -= v;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(j).copy_from(&z.row(pick));
        for (i, v) in nearest.iter_mut().enumerate() {
            *v = v.min((z.row(i) - z.row(pick)).norm_squared());
        }
    }

    let mut labels = vec![0usize; n];
    for iter in 0..10 {
        let dots = &z * centers.transpose();
        let cnorm: Vec<f64> = centers.row_iter().map(|r| r.norm_squared()).collect();
        let mut changed = false;
        for i in 0..n {
            let mut best = (f64::INFINITY, 0);
            for j in 0..k {
                let dist = norms[i] - 2.0 * dots[(i, j)] + cnorm[j];
                if dist < best.0 {
                    best = (dist, j);
                }
            }
            changed |= labels[i] != best.1;
            labels[i] = best.1;
        }
        if iter > 0 && !changed {
            break;
        }
        let mut sums = DMatrix::zeros(k, l + d);
        let mut counts = vec![0usize; k];
        for (i, &j) in labels.iter().enumerate() {
            counts[j] += 1;
            let mut row = sums.row_mut(j);
            row += z.row(i);
        }
        for (j, &count) in counts.iter().enumerate() {
            if count > 0 {
                let mean = sums.row(j) / count as f64;
                centers.row_mut(j).copy_from(&mean);
            }
        }
    }

    let mut resp = DMatrix::zeros(n, k);
    for (i, &j) in labels.iter().enumerate() {
        resp[(i, j)] = 1.0;
    }
    resp
}
