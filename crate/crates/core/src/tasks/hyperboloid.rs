use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::{uniform_box_logpdf, uniform_box_sample, Task};
use crate::error::SimulationError;
use crate::linalg::log_sum_exp;
use crate::rng::SimRng;

pub const MICROPHONES_1: [[f64; 2]; 2] = [[-0.5, 0.0], [0.5, 0.0]];
pub const MICROPHONES_2: [[f64; 2]; 2] = [[0.0, -0.5], [0.0, 0.5]];
const BOUNDS: [(f64, f64); 2] = [(-2.0, 2.0), (-2.0, 2.0)];

/// Difference of distances from `theta` to the two microphones of a pair.
pub fn hyperboloid_f(theta: &[f64], pair: &[[f64; 2]; 2]) -> f64 {
    let dist = |m: &[f64; 2]| (theta[0] - m[0]).hypot(theta[1] - m[1]);
    dist(&pair[0]) - dist(&pair[1])
}

/// Sound-source localization from two microphone pairs: the data are an
/// equal mixture of two multivariate Student-t vectors centred on the
/// distance differences.
#[derive(Debug, Clone)]
pub struct HyperboloidTask {
    pub dim: usize,
    pub nu: f64,
    /// Student-t scale; the scale matrix is `sigma^2 I`.
    pub sigma: f64,
}

impl Default for HyperboloidTask {
    fn default() -> Self {
        Self {
            dim: 10,
            nu: 3.0,
            sigma: 0.01,
        }
    }
}

impl HyperboloidTask {
    fn student_logpdf(&self, y: &[f64], loc: f64) -> f64 {
        let d = self.dim as f64;
        let q: f64 = y.iter().map(|v| (v - loc).powi(2)).sum::<f64>() / (self.sigma * self.sigma);
        ln_gamma(0.5 * (self.nu + d)) - ln_gamma(0.5 * self.nu) - 0.5 * d * (self.nu * std::f64::consts::PI).ln()
            - d * self.sigma.ln()
            - 0.5 * (self.nu + d) * (q / self.nu).ln_1p()
    }
}

impl Task for HyperboloidTask {
    fn name(&self) -> &str {
        "hyperboloid"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn data_dim(&self) -> usize {
        self.dim
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        uniform_box_sample(rng, &BOUNDS)
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        uniform_box_logpdf(theta, &BOUNDS)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        let pair = if rng.random::<bool>() { &MICROPHONES_1 } else { &MICROPHONES_2 };
        let loc = hyperboloid_f(theta, pair);
        if self.sigma == 0.0 {
            return Ok(vec![loc; self.dim]);
        }
        let w: f64 = ChiSquared::new(self.nu).unwrap().sample(rng);
        let scale = self.sigma * (self.nu / w).sqrt();
        Ok((0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                loc + scale * z
            })
            .collect())
    }

    fn exact_loglik(&self, y: &[f64], theta: &[f64]) -> Option<f64> {
        let a = self.student_logpdf(y, hyperboloid_f(theta, &MICROPHONES_1));
        let b = self.student_logpdf(y, hyperboloid_f(theta, &MICROPHONES_2));
        Some(log_sum_exp(&[a, b]) - std::f64::consts::LN_2)
    }

    fn has_exact_likelihood(&self) -> bool {
        true
    }

    fn ground_truth(&self) -> Option<Vec<f64>> {
        Some(vec![1.5, 1.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn distance_differences() {
        assert_eq!(hyperboloid_f(&[0.0, 0.0], &MICROPHONES_1), 0.0);
        let f1 = hyperboloid_f(&[1.5, 1.0], &MICROPHONES_1);
        let f2 = hyperboloid_f(&[1.5, 1.0], &MICROPHONES_2);
        assert!((f1 - (5f64.sqrt() - 2f64.sqrt())).abs() < 1e-15);
        assert!((f1 - 0.82186).abs() < 1e-5);
        assert!((f2 - (4.5f64.sqrt() - 2.5f64.sqrt())).abs() < 1e-15);
        assert!((f2 - 0.54018).abs() < 1e-5);
    }

    #[test]
    fn zero_scale_returns_constant_vector() {
        let task = HyperboloidTask {
            sigma: 0.0,
            ..Default::default()
        };
        let theta = [1.5, 1.0];
        let f1 = hyperboloid_f(&theta, &MICROPHONES_1);
        let f2 = hyperboloid_f(&theta, &MICROPHONES_2);
        let mut rng = rng_from_seed(4);
        for _ in 0..20 {
            let y = task.simulate(&theta, &mut rng).unwrap();
            assert!(y.iter().all(|v| *v == f1) || y.iter().all(|v| *v == f2));
        }
    }

    #[test]
    fn likelihood_invariant_under_coordinate_swap() {
        let task = HyperboloidTask::default();
        let mut rng = rng_from_seed(8);
        let y = task.simulate(&[1.5, 1.0], &mut rng).unwrap();
        for _ in 0..100 {
            let theta = task.sample_prior(&mut rng);
            let swapped = [theta[1], theta[0]];
            let a = task.exact_loglik(&y, &theta).unwrap();
            let b = task.exact_loglik(&y, &swapped).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn student_density_matches_one_dimensional_closed_form() {
        let task = HyperboloidTask {
            dim: 1,
            nu: 3.0,
            sigma: 0.5,
        };
        // t_3 density at x: 2 / (pi sqrt 3 (1 + x^2 / 3)^2) for unit scale.
        let x: f64 = 0.7 / 0.5;
        let expect = (2.0 / (std::f64::consts::PI * 3f64.sqrt() * (1.0 + x * x / 3.0).powi(2)) / 0.5).ln();
        assert!((task.student_logpdf(&[0.7], 0.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn simulated_mean_matches_mixture_mean() {
        let task = HyperboloidTask::default();
        let theta = [1.5, 1.0];
        let mut rng = rng_from_seed(12);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let v = task.simulate(&theta, &mut rng).unwrap()[0];
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 0.68102).abs() < 3.0 * se + 1e-5, "{mean} se {se}");
    }
}
