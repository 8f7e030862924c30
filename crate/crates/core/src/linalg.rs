//! Dense linear-algebra helpers shared by the mixture code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Largest relative jitter tried before a matrix is declared singular.
pub const MAX_RELATIVE_JITTER: f64 = 1e-2;

/// Numerically stable `log(sum(exp(values)))`. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights in place into probabilities. Falls back to the
/// uniform vector when no entry is finite.
pub fn normalize_log_weights(log_w: &mut [f64]) {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        let u = 1.0 / log_w.len() as f64;
        log_w.iter_mut().for_each(|w| *w = u);
        return;
    }
    log_w.iter_mut().for_each(|w| *w = (*w - lse).exp());
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of `m`, or `None` when `m` is not numerically SPD.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    nalgebra::Cholesky::new(m.clone()).map(|c| c.unpack())
}

/// Factorizes `m` as is when it is SPD. Otherwise adds `jitter * trace(m) / dim`
/// to the diagonal, escalating the jitter by ten up to [`MAX_RELATIVE_JITTER`]. `fallback_scale` replaces
/// `trace(m) / dim` when the trace is zero (a component sitting on a single
/// point). Returns the regularized matrix together with its factor.
pub fn regularized_cholesky(
    m: &DMatrix<f64>,
    jitter: f64,
    fallback_scale: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let dim = m.nrows();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance("matrix has non-finite entries".into()));
    }
    if let Some(l) = cholesky_lower(m) {
        if (0..dim).all(|i| l[(i, i)] > 0.0) {
            return Ok((m.clone(), l));
        }
    }
    let mut scale = m.trace() / dim as f64;
    if !(scale > 0.0) {
        scale = fallback_scale;
    }
    let mut rel = jitter;
    loop {
        let mut reg = m.clone();
        for i in 0..dim {
            reg[(i, i)] += rel * scale;
        }
        if let Some(l) = cholesky_lower(&reg) {
            return Ok((reg, l));
        }
        if rel >= MAX_RELATIVE_JITTER {
            return Err(Error::SingularCovariance(format!(
                "Cholesky failed with relative jitter {rel:e}"
            )));
        }
        rel = if rel > 0.0 { (rel * 10.0).min(MAX_RELATIVE_JITTER) } else { 1e-12 };
    }
}

/// Inverse of an SPD matrix given its lower Cholesky factor.
pub fn spd_inverse(lower: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lower.nrows();
    let linv = lower_inverse(lower);
    let mut inv = linv.transpose() * &linv;
    debug_assert_eq!(inv.nrows(), n);
    symmetrize(&mut inv);
    inv
}

/// Inverse of a lower-triangular matrix.
pub fn lower_inverse(lower: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lower.nrows();
    let mut inv = DMatrix::<f64>::identity(n, n);
    lower.solve_lower_triangular_mut(&mut inv);
    inv
}

/// A multivariate normal density with a fixed covariance, stored through
/// its Cholesky factor. The mean is supplied at evaluation time.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    lower: DMatrix<f64>,
    /// `(L^{-1})^T`, so that whitened row vectors are `E * whiten_t`.
    whiten_t: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianFactor {
    /// Factorizes `cov` exactly (no jitter).
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let lower = cholesky_lower(cov).ok_or_else(|| {
            Error::SingularCovariance(format!("{}x{} covariance", cov.nrows(), cov.ncols()))
        })?;
        Ok(Self::from_lower(lower))
    }

    pub fn from_lower(lower: DMatrix<f64>) -> Self {
        let dim = lower.nrows();
        let log_det: f64 = 2.0 * (0..dim).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let whiten_t = lower_inverse(&lower).transpose();
        Self {
            lower,
            whiten_t,
            log_norm: -0.5 * (dim as f64 * LN_2PI + log_det),
        }
    }

    /// The same density with its covariance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let dim = self.dim() as f64;
        let s = factor.sqrt();
        Self {
            lower: &self.lower * s,
            whiten_t: &self.whiten_t / s,
            log_norm: self.log_norm - 0.5 * dim * factor.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    /// Squared Mahalanobis norm of a difference vector.
    pub fn mahalanobis_sq(&self, diff: &[f64]) -> f64 {
        let dim = self.dim();
        let mut total = 0.0;
        for j in 0..dim {
            // Column j of whiten_t is row j of L^{-1}, zero past the diagonal.
            let col = self.whiten_t.column(j);
            let z: f64 = (0..=j).map(|i| col[i] * diff[i]).sum();
            total += z * z;
        }
        total
    }

    pub fn log_density(&self, diff: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis_sq(diff)
    }

    /// Log-densities of every row of `diffs` (n x dim), written into `out`.
    pub fn log_density_rows(&self, diffs: &DMatrix<f64>, out: &mut [f64]) {
        let z = diffs * &self.whiten_t;
        for (i, o) in out.iter_mut().enumerate() {
            let q: f64 = z.row(i).iter().map(|v| v * v).sum();
            *o = self.log_norm - 0.5 * q;
        }
    }

    /// `L * z` for a standard normal vector `z`.
    pub fn colour(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.lower * z
    }
}
