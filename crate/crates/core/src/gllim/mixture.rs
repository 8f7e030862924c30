//! Joint Gaussian mixtures whose components are affine experts.
//!
//! Component `k` places `x ~ N(input_mean_k, input_cov_k)` and
//! `u | x ~ N(map_k x + offset_k, noise_cov_k)`. The same type backs both the
//! inverse parameterization (`x = theta`, `u = y`) and the forward one
//! (`x = y`, `u = theta`); [`AffineMixture::reverse`] converts between them.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, normalize_log_weights, symmetrize, GaussianFactor};

/// Tolerance on `|sum(weights) - 1|` accepted at construction.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineComponent {
    pub weight: f64,
    pub input_mean: DVector<f64>,
    pub input_cov: DMatrix<f64>,
    pub map: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub noise_cov: DMatrix<f64>,
}

impl AffineComponent {
    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.offset.len()
    }

    fn check_dims(&self, input_dim: usize, output_dim: usize) -> Result<()> {
        let ok = self.input_mean.len() == input_dim
            && self.input_cov.shape() == (input_dim, input_dim)
            && self.map.shape() == (output_dim, input_dim)
            && self.offset.len() == output_dim
            && self.noise_cov.shape() == (output_dim, output_dim);
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "component does not match input dim {input_dim} / output dim {output_dim}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AffineMixture {
    input_dim: usize,
    output_dim: usize,
    components: Vec<AffineComponent>,
    log_weights: Vec<f64>,
    input_factors: Vec<GaussianFactor>,
    noise_factors: Vec<GaussianFactor>,
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::SingularCovariance(format!("{what} is not symmetric")));
    }
    Ok(())
}

impl AffineMixture {
    pub fn new(components: Vec<AffineComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let (input_dim, output_dim) = (first.input_dim(), first.output_dim());
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::DimensionMismatch("zero-dimensional mixture".into()));
        }
        let mut total = 0.0;
        for c in &components {
            c.check_dims(input_dim, output_dim)?;
            if !(c.weight > 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "mixture weight {} is not positive",
                    c.weight
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        let mut input_factors = Vec::with_capacity(components.len());
        let mut noise_factors = Vec::with_capacity(components.len());
        for c in &components {
            check_symmetric(&c.input_cov, "input covariance")?;
            check_symmetric(&c.noise_cov, "noise covariance")?;
            input_factors.push(GaussianFactor::new(&c.input_cov)?);
            noise_factors.push(GaussianFactor::new(&c.noise_cov)?);
        }
        let log_weights = components.iter().map(|c| c.weight.ln()).collect();
        Ok(Self {
            input_dim,
            output_dim,
            components,
            log_weights,
            input_factors,
            noise_factors,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn components(&self) -> &[AffineComponent] {
        &self.components
    }

    pub fn into_components(self) -> Vec<AffineComponent> {
        self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected input of length {}, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    fn check_output(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.output_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected output of length {}, got {}",
                self.output_dim,
                u.len()
            )));
        }
        Ok(())
    }

    /// Unnormalized gating log-weights `log pi_k + log N(x; c_k, Gamma_k)`.
    fn gating_log_terms(&self, x: &[f64]) -> Vec<f64> {
        let mut diff = vec![0.0; self.input_dim];
        self.components
            .iter()
            .zip(&self.input_factors)
            .zip(&self.log_weights)
            .map(|((c, f), lw)| {
                for (i, d) in diff.iter_mut().enumerate() {
                    *d = x[i] - c.input_mean[i];
                }
                lw + f.log_density(&diff)
            })
            .collect()
    }

    /// Input-dependent mixture weights, summing to one. Falls back to uniform
    /// weights when every term underflows.
    pub fn gating(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = self.gating_log_terms(x);
        normalize_log_weights(&mut g);
        Ok(g)
    }

    /// Log-density of the input marginal `sum_k pi_k N(x; c_k, Gamma_k)`.
    pub fn input_log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(log_sum_exp(&self.gating_log_terms(x)))
    }

    fn expert_log_density(&self, k: usize, x: &[f64], u: &[f64], diff: &mut [f64]) -> f64 {
        let c = &self.components[k];
        for (i, d) in diff.iter_mut().enumerate() {
            let mut mean = c.offset[i];
            for (j, xj) in x.iter().enumerate() {
                mean += c.map[(i, j)] * xj;
            }
            *d = u[i] - mean;
        }
        self.noise_factors[k].log_density(diff)
    }

    /// `log sum_k eta_k(x) N(u; A_k x + b_k, Sigma_k)`.
    pub fn conditional_log_density(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_output(u)?;
        let g = self.gating_log_terms(x);
        let g_norm = log_sum_exp(&g);
        let mut diff = vec![0.0; self.output_dim];
        let terms: Vec<f64> = if g_norm.is_finite() {
            g.iter()
                .enumerate()
                .map(|(k, gk)| gk - g_norm + self.expert_log_density(k, x, u, &mut diff))
                .collect()
        } else {
            let lu = -(self.len() as f64).ln();
            (0..self.len())
                .map(|k| lu + self.expert_log_density(k, x, u, &mut diff))
                .collect()
        };
        Ok(log_sum_exp(&terms))
    }

    /// `log sum_k pi_k N(x; c_k, Gamma_k) N(u; A_k x + b_k, Sigma_k)`.
    pub fn joint_log_density(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_output(u)?;
        let g = self.gating_log_terms(x);
        let mut diff = vec![0.0; self.output_dim];
        let terms: Vec<f64> = g
            .iter()
            .enumerate()
            .map(|(k, gk)| gk + self.expert_log_density(k, x, u, &mut diff))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Per-component joint log terms for every row: entry `(n, k)` is
    /// `log pi_k + log N(x_n; c_k, Gamma_k) + log N(u_n; A_k x_n + b_k, Sigma_k)`.
    pub fn joint_log_terms(&self, inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = inputs.nrows();
        let columns: Vec<Vec<f64>> = (0..self.len())
            .into_par_iter()
            .map(|k| {
                let c = &self.components[k];
                let mut col = vec![0.0; n];
                let mut dx = inputs.clone();
                for j in 0..self.input_dim {
                    dx.column_mut(j).add_scalar_mut(-c.input_mean[j]);
                }
                self.input_factors[k].log_density_rows(&dx, &mut col);
                let mut resid = outputs - inputs * c.map.transpose();
                for i in 0..self.output_dim {
                    resid.column_mut(i).add_scalar_mut(-c.offset[i]);
                }
                let mut noise = vec![0.0; n];
                self.noise_factors[k].log_density_rows(&resid, &mut noise);
                let lw = self.log_weights[k];
                for (v, e) in col.iter_mut().zip(noise) {
                    *v += lw + e;
                }
                col
            })
            .collect();
        let mut out = DMatrix::zeros(n, self.len());
        for (k, col) in columns.into_iter().enumerate() {
            out.column_mut(k).copy_from_slice(&col);
        }
        out
    }

    /// The algebraically equivalent mixture with the roles of input and
    /// output exchanged:
    /// `c' = A c + b`, `Gamma' = Sigma + A Gamma A^T`,
    /// `Sigma' = (Gamma^{-1} + A^T Sigma^{-1} A)^{-1}`,
    /// `A' = Sigma' A^T Sigma^{-1}`, `b' = Sigma' (Gamma^{-1} c - A^T Sigma^{-1} b)`.
    pub fn reverse(&self) -> Result<AffineMixture> {
        let mut out = Vec::with_capacity(self.len());
        for (k, c) in self.components.iter().enumerate() {
            let gamma_inv = crate::linalg::spd_inverse(self.input_factors[k].lower());
            let sigma_inv = crate::linalg::spd_inverse(self.noise_factors[k].lower());
            let at_sinv = c.map.transpose() * &sigma_inv;
            let mut precision = &gamma_inv + &at_sinv * &c.map;
            symmetrize(&mut precision);
            let prec_lower = crate::linalg::cholesky_lower(&precision).ok_or_else(|| {
                Error::SingularCovariance(format!("reversed noise precision of component {k}"))
            })?;
            let mut new_noise = crate::linalg::spd_inverse(&prec_lower);
            symmetrize(&mut new_noise);
            let new_map = &new_noise * &at_sinv;
            let new_offset = &new_noise * (&gamma_inv * &c.input_mean - &at_sinv * &c.offset);
            let new_mean = &c.map * &c.input_mean + &c.offset;
            let mut new_cov = &c.noise_cov + &c.map * &c.input_cov * c.map.transpose();
            symmetrize(&mut new_cov);
            out.push(AffineComponent {
                weight: c.weight,
                input_mean: new_mean,
                input_cov: new_cov,
                map: new_map,
                offset: new_offset,
                noise_cov: new_noise,
            });
        }
        AffineMixture::new(out)
    }

    /// The conditional law of the output given `x`, with every expert
    /// covariance multiplied by `inflation`.
    pub fn conditional(&self, x: &[f64], inflation: f64) -> Result<ConditionalMixture> {
        if !(inflation > 0.0) {
            return Err(Error::InvalidArgument(format!("inflation {inflation} must be positive")));
        }
        let weights = self.gating(x)?;
        let xv = DVector::from_column_slice(x);
        let means = self
            .components
            .iter()
            .map(|c| &c.map * &xv + &c.offset)
            .collect();
        let factors = self
            .noise_factors
            .iter()
            .map(|f| if inflation == 1.0 { f.clone() } else { f.scaled(inflation) })
            .collect();
        ConditionalMixture::new(weights, means, factors)
    }

    /// Drops the listed components and renormalizes the remaining weights.
    pub fn without(&self, drop: &[usize]) -> Result<AffineMixture> {
        let kept: Vec<AffineComponent> = self
            .components
            .iter()
            .enumerate()
            .filter(|(k, _)| !drop.contains(k))
            .map(|(_, c)| c.clone())
            .collect();
        renormalized(kept)
    }
}

/// Builds a mixture from components whose weights are rescaled to sum to one.
pub fn renormalized(mut components: Vec<AffineComponent>) -> Result<AffineMixture> {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    for c in components.iter_mut() {
        c.weight /= total;
    }
    AffineMixture::new(components)
}

/// A plain Gaussian mixture over one space, used for proposals.
#[derive(Debug, Clone)]
pub struct ConditionalMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    factors: Vec<GaussianFactor>,
    picker: WeightedIndex<f64>,
}

impl ConditionalMixture {
    pub fn new(weights: Vec<f64>, means: Vec<DVector<f64>>, factors: Vec<GaussianFactor>) -> Result<Self> {
        let picker = WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidArgument(format!("mixture weights: {e}")))?;
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self {
            weights,
            log_weights,
            means,
            factors,
            picker,
        })
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut diff = vec![0.0; self.dim()];
        let terms: Vec<f64> = self
            .means
            .iter()
            .zip(&self.factors)
            .zip(&self.log_weights)
            .map(|((m, f), lw)| {
                for (i, d) in diff.iter_mut().enumerate() {
                    *d = x[i] - m[i];
                }
                lw + f.log_density(&diff)
            })
            .collect();
        log_sum_exp(&terms)
    }

    /// Draws a component by weight, then a point from it.
    pub fn sample_with_component<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let k = self.picker.sample(rng);
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        let x = &self.means[k] + self.factors[k].colour(&z);
        (k, x.as_slice().to_vec())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_with_component(rng).1
    }
}
