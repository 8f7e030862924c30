//! Gaussian locally linear mapping (GLLiM).
//!
//! A GLLiM model is a joint mixture over parameters `theta` (dimension `l`)
//! and data `y` (dimension `d`). Its inverse parameterization
//! [`GllimInverseParams`] expresses every component as an affine map
//! `theta -> y`, which yields the surrogate likelihood `q(y | theta)`. The
//! equivalent forward parameterization [`GllimForwardParams`] maps
//! `y -> theta` and yields the surrogate posterior `q(theta | y)`.

mod em;
pub mod format;
mod mixture;
mod selection;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use em::{fit_em, fit_em_from, EmFit, EmOptions};
pub use mixture::{AffineComponent, AffineMixture, ConditionalMixture, WEIGHT_SUM_TOLERANCE};
pub use selection::{bic, param_count, prune_components, select_k_bic, BicCurve};

/// Structure imposed on every noise covariance of the inverse model. The
/// parameter-space covariances are always full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceConstraint {
    /// `Sigma_k = s_k I` with a distinct scalar per component.
    Isotropic,
    /// Unconstrained symmetric positive definite matrices.
    Full,
}

impl CovarianceConstraint {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceConstraint::Isotropic => "isotropic",
            CovarianceConstraint::Full => "full",
        }
    }
}

impl std::str::FromStr for CovarianceConstraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "isotropic" | "iso" | "i" => Ok(CovarianceConstraint::Isotropic),
            "full" | "unconstrained" => Ok(CovarianceConstraint::Full),
            other => Err(Error::InvalidArgument(format!("unknown covariance constraint `{other}`"))),
        }
    }
}

impl std::fmt::Display for CovarianceConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Paired parameter draws and simulated data, one pair per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    thetas: DMatrix<f64>,
    ys: DMatrix<f64>,
}

impl TrainingSet {
    pub fn new(thetas: DMatrix<f64>, ys: DMatrix<f64>) -> Result<Self> {
        if thetas.nrows() != ys.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameter rows but {} data rows",
                thetas.nrows(),
                ys.nrows()
            )));
        }
        if thetas.nrows() == 0 || thetas.ncols() == 0 || ys.ncols() == 0 {
            return Err(Error::InsufficientData("training set is empty".into()));
        }
        for (name, m) in [("parameter", &thetas), ("data", &ys)] {
            if let Some(idx) = m.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{name} row {} contains a non-finite value",
                    idx % m.nrows()
                )));
            }
        }
        Ok(Self { thetas, ys })
    }

    pub fn from_rows(thetas: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<Self> {
        let l = thetas.first().map_or(0, Vec::len);
        let d = ys.first().map_or(0, Vec::len);
        if thetas.iter().any(|r| r.len() != l) || ys.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let t = DMatrix::from_fn(thetas.len(), l, |i, j| thetas[i][j]);
        let y = DMatrix::from_fn(ys.len(), d, |i, j| ys[i][j]);
        Self::new(t, y)
    }

    pub fn len(&self) -> usize {
        self.thetas.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn param_dim(&self) -> usize {
        self.thetas.ncols()
    }

    pub fn data_dim(&self) -> usize {
        self.ys.ncols()
    }

    pub fn thetas(&self) -> &DMatrix<f64> {
        &self.thetas
    }

    pub fn ys(&self) -> &DMatrix<f64> {
        &self.ys
    }

    pub fn theta_row(&self, i: usize) -> Vec<f64> {
        self.thetas.row(i).iter().copied().collect()
    }

    pub fn y_row(&self, i: usize) -> Vec<f64> {
        self.ys.row(i).iter().copied().collect()
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &TrainingSet) -> Result<TrainingSet> {
        if self.param_dim() != other.param_dim() || self.data_dim() != other.data_dim() {
            return Err(Error::DimensionMismatch("cannot concatenate training sets".into()));
        }
        let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
            m.rows_mut(0, a.nrows()).copy_from(a);
            m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
            m
        };
        Ok(TrainingSet {
            thetas: stack(&self.thetas, &other.thetas),
            ys: stack(&self.ys, &other.ys),
        })
    }

    /// The rows with the given indices, in order.
    pub fn select(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            thetas: self.thetas.select_rows(rows),
            ys: self.ys.select_rows(rows),
        }
    }
}

fn check_isotropic(m: &DMatrix<f64>) -> Result<()> {
    let s = m[(0, 0)];
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { s } else { 0.0 };
            if m[(i, j)] != expect {
                return Err(Error::InvalidArgument(
                    "isotropic constraint requires Sigma = s I".into(),
                ));
            }
        }
    }
    Ok(())
}

/// The inverse (theta -> y) parameterization: weights `pi_k`, parameter-space
/// means `c_k` and covariances `Gamma_k`, affine maps `A_k theta + b_k` and
/// noise covariances `Sigma_k`.
#[derive(Debug, Clone)]
pub struct GllimInverseParams {
    mixture: AffineMixture,
    constraint: CovarianceConstraint,
}

impl GllimInverseParams {
    pub fn new(components: Vec<AffineComponent>, constraint: CovarianceConstraint) -> Result<Self> {
        if constraint == CovarianceConstraint::Isotropic {
            for c in &components {
                check_isotropic(&c.noise_cov)?;
            }
        }
        Ok(Self {
            mixture: AffineMixture::new(components)?,
            constraint,
        })
    }

    pub(crate) fn from_mixture(mixture: AffineMixture, constraint: CovarianceConstraint) -> Self {
        Self { mixture, constraint }
    }

    pub fn k(&self) -> usize {
        self.mixture.len()
    }

    pub fn param_dim(&self) -> usize {
        self.mixture.input_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.mixture.output_dim()
    }

    pub fn constraint(&self) -> CovarianceConstraint {
        self.constraint
    }

    pub fn components(&self) -> &[AffineComponent] {
        self.mixture.components()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.mixture.weights()
    }

    pub fn mixture(&self) -> &AffineMixture {
        &self.mixture
    }

    /// Gating weights `eta_k(theta)`.
    pub fn gating_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.mixture.gating(theta)
    }

    /// Surrogate log-likelihood `log q(y | theta)`.
    pub fn surrogate_loglik(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        self.mixture.conditional_log_density(theta, y)
    }

    /// Log-density of the parameter marginal `sum_k pi_k N(theta; c_k, Gamma_k)`.
    pub fn theta_marginal_logpdf(&self, theta: &[f64]) -> Result<f64> {
        self.mixture.input_log_density(theta)
    }

    /// Joint log-density `log q(y, theta)`.
    pub fn joint_logpdf(&self, y: &[f64], theta: &[f64]) -> Result<f64> {
        self.mixture.joint_log_density(theta, y)
    }

    /// `sum_n log q(y_n, theta_n)` over a training set.
    pub fn joint_loglik(&self, data: &TrainingSet) -> Result<f64> {
        self.check_data(data)?;
        let terms = self.mixture.joint_log_terms(data.thetas(), data.ys());
        Ok((0..terms.nrows())
            .map(|i| {
                let row: Vec<f64> = terms.row(i).iter().copied().collect();
                crate::linalg::log_sum_exp(&row)
            })
            .sum())
    }

    pub(crate) fn check_data(&self, data: &TrainingSet) -> Result<()> {
        if data.param_dim() != self.param_dim() || data.data_dim() != self.data_dim() {
            return Err(Error::DimensionMismatch(format!(
                "model is (l={}, d={}) but data is (l={}, d={})",
                self.param_dim(),
                self.data_dim(),
                data.param_dim(),
                data.data_dim()
            )));
        }
        Ok(())
    }

    /// Converts to the forward (y -> theta) parameterization.
    pub fn to_forward(&self) -> Result<GllimForwardParams> {
        Ok(GllimForwardParams {
            mixture: self.mixture.reverse()?,
        })
    }
}

/// Alias for [`GllimInverseParams::to_forward`].
pub fn inverse_to_forward(inv: &GllimInverseParams) -> Result<GllimForwardParams> {
    inv.to_forward()
}

/// The forward (y -> theta) parameterization, derived from an inverse model.
#[derive(Debug, Clone)]
pub struct GllimForwardParams {
    mixture: AffineMixture,
}

impl GllimForwardParams {
    pub fn new(components: Vec<AffineComponent>) -> Result<Self> {
        Ok(Self {
            mixture: AffineMixture::new(components)?,
        })
    }

    pub fn k(&self) -> usize {
        self.mixture.len()
    }

    pub fn param_dim(&self) -> usize {
        self.mixture.output_dim()
    }

    pub fn data_dim(&self) -> usize {
        self.mixture.input_dim()
    }

    pub fn components(&self) -> &[AffineComponent] {
        self.mixture.components()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.mixture.weights()
    }

    pub fn mixture(&self) -> &AffineMixture {
        &self.mixture
    }

    /// Gating weights `eta_k(y)`.
    pub fn gating_y(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.mixture.gating(y)
    }

    /// Surrogate posterior log-density `log q(theta | y)`.
    pub fn surrogate_posterior_logpdf(&self, theta: &[f64], y: &[f64]) -> Result<f64> {
        self.mixture.conditional_log_density(y, theta)
    }

    /// Log-density of the data marginal `sum_k pi_k N(y; c_k, Gamma_k)`.
    pub fn y_marginal_logpdf(&self, y: &[f64]) -> Result<f64> {
        self.mixture.input_log_density(y)
    }

    /// The surrogate posterior at `y` with expert covariances inflated by
    /// `gamma`. This is the distribution [`Self::sample_posterior`] draws from.
    pub fn posterior(&self, y: &[f64], gamma: f64) -> Result<ConditionalMixture> {
        if !(gamma >= 1.0) {
            return Err(Error::InvalidArgument(format!("inflation {gamma} must be >= 1")));
        }
        self.mixture.conditional(y, gamma)
    }

    /// Draws `n` rows from the (inflated) surrogate posterior at `y`.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        y: &[f64],
        n: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let post = self.posterior(y, gamma)?;
        let l = self.param_dim();
        let mut out = DMatrix::zeros(n, l);
        for i in 0..n {
            let x = post.sample(rng);
            out.row_mut(i).copy_from_slice(&x);
        }
        Ok(out)
    }

    /// Converts back to the inverse parameterization.
    pub fn to_inverse(&self, constraint: CovarianceConstraint) -> Result<GllimInverseParams> {
        Ok(GllimInverseParams {
            mixture: self.mixture.reverse()?,
            constraint,
        })
    }
}
