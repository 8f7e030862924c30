use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::Task;
use crate::error::SimulationError;
use crate::linalg::LN_2PI;
use crate::rng::SimRng;

/// `y = theta + eps`, `eps ~ N(0, noise_sd^2 I)`, prior `N(0, I)`. The
/// posterior is Gaussian in closed form.
#[derive(Debug, Clone)]
pub struct LinearGaussianTask {
    pub dim: usize,
    pub noise_sd: f64,
}

impl Default for LinearGaussianTask {
    fn default() -> Self {
        Self { dim: 2, noise_sd: 0.5 }
    }
}

impl LinearGaussianTask {
    /// Posterior mean and covariance given `y`.
    pub fn posterior(&self, y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let s2 = self.noise_sd * self.noise_sd;
        let shrink = 1.0 / (1.0 + s2);
        let mean = DVector::from_iterator(self.dim, y.iter().map(|v| v * shrink));
        let cov = DMatrix::from_diagonal_element(self.dim, self.dim, s2 * shrink);
        (mean, cov)
    }
}

impl Task for LinearGaussianTask {
    fn name(&self) -> &str {
        "linear_gaussian"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn data_dim(&self) -> usize {
        self.dim
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        (0..self.dim).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        if theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        -0.5 * (self.dim as f64 * LN_2PI + theta.iter().map(|v| v * v).sum::<f64>())
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        Ok(theta
            .iter()
            .map(|t| {
                let z: f64 = StandardNormal.sample(rng);
                t + self.noise_sd * z
            })
            .collect())
    }

    fn exact_loglik(&self, y: &[f64], theta: &[f64]) -> Option<f64> {
        let s2 = self.noise_sd * self.noise_sd;
        let q: f64 = y.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum();
        Some(-0.5 * (self.dim as f64 * (LN_2PI + s2.ln()) + q / s2))
    }

    fn has_exact_likelihood(&self) -> bool {
        true
    }

    fn ground_truth(&self) -> Option<Vec<f64>> {
        Some(vec![0.5; self.dim])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_posterior() {
        let (m, c) = LinearGaussianTask::default().posterior(&[1.0, -2.0]);
        assert!((m[0] - 0.8).abs() < 1e-15 && (m[1] + 1.6).abs() < 1e-15);
        assert!((c[(0, 0)] - 0.2).abs() < 1e-15 && c[(0, 1)] == 0.0);
    }
}
