//! Component pruning, parameter counting and BIC-based choice of K.

use serde::{Deserialize, Serialize};

use super::em::{fit_em, EmOptions};
use super::mixture::renormalized;
use super::{CovarianceConstraint, GllimInverseParams, TrainingSet};
use crate::error::{Error, Result};

/// Removes every component with `pi_k < threshold` and renormalizes. When
/// nothing would survive, the single heaviest component is kept.
pub fn prune_components(inv: &GllimInverseParams, threshold: f64) -> Result<GllimInverseParams> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("prune threshold {threshold} outside [0, 1)")));
    }
    let comps = inv.components();
    let mut kept: Vec<_> = comps.iter().filter(|c| c.weight >= threshold).cloned().collect();
    if kept.len() == comps.len() {
        return Ok(inv.clone());
    }
    if kept.is_empty() {
        let heaviest = comps
            .iter()
            .max_by(|a, b| a.weight.total_cmp(&b.weight))
            .expect("mixture is never empty");
        kept.push(heaviest.clone());
    }
    Ok(GllimInverseParams::from_mixture(renormalized(kept)?, inv.constraint()))
}

/// Number of free parameters of a K-component GLLiM with full `Gamma_k`.
pub fn param_count(k: usize, d: usize, l: usize, constraint: CovarianceConstraint) -> usize {
    let gamma = l * (l + 1) / 2;
    let sigma = match constraint {
        CovarianceConstraint::Isotropic => 1,
        CovarianceConstraint::Full => d * (d + 1) / 2,
    };
    (k - 1) + k * (d * l + d + l + sigma + gamma)
}

/// `-2 L + D log n`.
pub fn bic(inv: &GllimInverseParams, data: &TrainingSet) -> Result<f64> {
    let ll = inv.joint_loglik(data)?;
    let p = param_count(inv.k(), inv.data_dim(), inv.param_dim(), inv.constraint());
    Ok(-2.0 * ll + p as f64 * (data.len() as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BicCurve {
    /// `(K requested, BIC)`; failed fits carry `+inf`.
    pub points: Vec<(usize, f64)>,
    pub best_k: usize,
}

/// Fits every K in `k_grid` and returns the curve with its minimizer. Ties go
/// to the smaller K.
pub fn select_k_bic(
    data: &TrainingSet,
    k_grid: &[usize],
    constraint: CovarianceConstraint,
    opts: &EmOptions,
) -> Result<BicCurve> {
    if k_grid.is_empty() {
        return Err(Error::InvalidArgument("empty K grid".into()));
    }
    let mut points = Vec::with_capacity(k_grid.len());
    for &k in k_grid {
        let value = fit_em(data, k, constraint, opts)
            .and_then(|fit| bic(&fit.params, data))
            .unwrap_or(f64::INFINITY);
        points.push((k, value));
    }
    let mut best = points[0];
    for &(k, v) in &points[1..] {
        if v < best.1 || (v == best.1 && k < best.0) {
            best = (k, v);
        }
    }
    Ok(BicCurve {
        points,
        best_k: best.0,
    })
}
