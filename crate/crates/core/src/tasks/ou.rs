use rand_distr::{Distribution, StandardNormal};

use super::{uniform_box_logpdf, uniform_box_sample, Task};
use crate::error::SimulationError;
use crate::linalg::LN_2PI;
use crate::rng::SimRng;

const BOUNDS: [(f64, f64); 3] = [(0.0, 10.0), (0.0, 5.0), (0.0, 2.0)];

/// Ornstein-Uhlenbeck path `dX = -beta (X - alpha) dt + sigma dW` observed
/// on an equally spaced grid; `theta = (alpha, beta, sigma)`.
#[derive(Debug, Clone)]
pub struct OuTask {
    pub x0: f64,
    /// Number of grid points including `x0`.
    pub points: usize,
    pub horizon: f64,
}

impl Default for OuTask {
    fn default() -> Self {
        Self {
            x0: 0.0,
            points: 51,
            horizon: 10.0,
        }
    }
}

impl OuTask {
    pub fn dt(&self) -> f64 {
        self.horizon / (self.points - 1) as f64
    }

    /// Mean and variance of `X_{t + dt}` given `X_t = prev`.
    pub fn transition(theta: &[f64], prev: f64, dt: f64) -> (f64, f64) {
        let (alpha, beta, sigma) = (theta[0], theta[1], theta[2]);
        let mean = alpha + (prev - alpha) * (-beta * dt).exp();
        let var = sigma * sigma * -(-2.0 * beta * dt).exp_m1() / (2.0 * beta);
        (mean, var)
    }
}

impl Task for OuTask {
    fn name(&self) -> &str {
        "ou"
    }

    fn param_dim(&self) -> usize {
        3
    }

    fn data_dim(&self) -> usize {
        self.points
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        uniform_box_sample(rng, &BOUNDS)
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        uniform_box_logpdf(theta, &BOUNDS)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        if !(theta[1] > 0.0 && theta[2] > 0.0) {
            return Err(SimulationError::InvalidParameter(format!("{theta:?}")));
        }
        let dt = self.dt();
        let mut path = Vec::with_capacity(self.points);
        path.push(self.x0);
        for i in 1..self.points {
            let (mean, var) = Self::transition(theta, path[i - 1], dt);
            let z: f64 = StandardNormal.sample(rng);
            path.push(mean + var.sqrt() * z);
        }
        Ok(path)
    }

    /// Sum of the transition log-densities; `x0` is treated as fixed.
    fn exact_loglik(&self, y: &[f64], theta: &[f64]) -> Option<f64> {
        if !(theta[1] > 0.0 && theta[2] > 0.0) {
            return Some(f64::NEG_INFINITY);
        }
        let dt = self.dt();
        let mut total = 0.0;
        for w in y.windows(2) {
            let (mean, var) = Self::transition(theta, w[0], dt);
            total += -0.5 * (LN_2PI + var.ln() + (w[1] - mean).powi(2) / var);
        }
        Some(total)
    }

    fn has_exact_likelihood(&self) -> bool {
        true
    }

    fn ground_truth(&self) -> Option<Vec<f64>> {
        Some(vec![3.0, 1.0, 0.5])
    }
}
