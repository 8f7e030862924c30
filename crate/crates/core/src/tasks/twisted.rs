use rand_distr::{Distribution, StandardNormal};

use super::Task;
use crate::error::SimulationError;
use crate::linalg::LN_2PI;
use crate::rng::SimRng;

/// Gaussian location model under a banana-shaped ("twisted-normal") prior.
#[derive(Debug, Clone)]
pub struct TwistedPriorTask {
    pub dim: usize,
    pub b: f64,
    /// Observation noise standard deviation.
    pub sigma0: f64,
}

impl Default for TwistedPriorTask {
    fn default() -> Self {
        Self {
            dim: 20,
            b: 0.1,
            sigma0: 1.0,
        }
    }
}

impl TwistedPriorTask {
    /// The usual observation `(10, 0, ..., 0)`.
    pub fn observed(&self) -> Vec<f64> {
        let mut y = vec![0.0; self.dim];
        y[0] = 10.0;
        y
    }
}

impl Task for TwistedPriorTask {
    fn name(&self) -> &str {
        "twisted_prior"
    }

    fn param_dim(&self) -> usize {
        self.dim
    }

    fn data_dim(&self) -> usize {
        self.dim
    }

    /// `N(0, diag(100, 1, ..., 1))` with `theta_2` replaced by
    /// `theta_2 + b theta_1^2 - 100 b`.
    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        let mut theta: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(rng)).collect();
        theta[0] *= 10.0;
        theta[1] += self.b * theta[0] * theta[0] - 100.0 * self.b;
        theta
    }

    /// Unnormalized: the maximum value is 0.
    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim || theta.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let twist = theta[1] - self.b * theta[0] * theta[0] + 100.0 * self.b;
        -theta[0] * theta[0] / 200.0 - twist * twist / 2.0 - theta[2..].iter().map(|v| v * v).sum::<f64>() / 2.0
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        Ok(theta
            .iter()
            .map(|t| {
                let z: f64 = StandardNormal.sample(rng);
                t + self.sigma0 * z
            })
            .collect())
    }

    fn exact_loglik(&self, y: &[f64], theta: &[f64]) -> Option<f64> {
        let s2 = self.sigma0 * self.sigma0;
        let q: f64 = y.iter().zip(theta).map(|(a, b)| (a - b).powi(2)).sum();
        Some(-0.5 * (self.dim as f64 * (LN_2PI + s2.ln()) + q / s2))
    }

    fn has_exact_likelihood(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn density_peak_is_zero() {
        let task = TwistedPriorTask::default();
        let mut theta = vec![0.0; 20];
        theta[1] = -10.0;
        assert_eq!(task.prior_logpdf(&theta), 0.0);
    }

    #[test]
    fn zero_twist_is_plain_gaussian() {
        let task = TwistedPriorTask {
            b: 0.0,
            ..Default::default()
        };
        let mut a = rng_from_seed(6);
        let mut b = rng_from_seed(6);
        let theta = task.sample_prior(&mut a);
        let mut z: Vec<f64> = (0..20).map(|_| StandardNormal.sample(&mut b)).collect();
        z[0] *= 10.0;
        assert_eq!(theta, z);
        let expect = -z[0] * z[0] / 200.0 - z[1..].iter().map(|v| v * v).sum::<f64>() / 2.0;
        assert!((task.prior_logpdf(&theta) - expect).abs() < 1e-12);
    }

    #[test]
    fn first_coordinate_marginal_is_n_0_100() {
        let task = TwistedPriorTask::default();
        let mut rng = rng_from_seed(10);
        let n = 100_000;
        let mut x: Vec<f64> = (0..n).map(|_| task.sample_prior(&mut rng)[0]).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * 10.0 / (n as f64).sqrt());
        assert!((var - 100.0).abs() < 4.0 * 100.0 * (2.0 / n as f64).sqrt());
        x.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, 10.0).unwrap();
        let ks = x
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = normal.cdf(*v);
                (c - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - c).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / (n as f64).sqrt());
    }

    #[test]
    fn sampler_matches_density_on_grid() {
        let task = TwistedPriorTask::default();
        let mut rng = rng_from_seed(13);
        let n = 1_000_000;
        // Bins in (theta_1, theta_2 - b theta_1^2) would be trivial; use raw
        // coordinates over the bulk of the banana.
        let (x0, x1, nx) = (-30.0, 30.0, 30usize);
        let (y0, y1, ny) = (-14.0, 86.0, 50usize);
        let (hx, hy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
        let mut counts = vec![0usize; nx * ny];
        for _ in 0..n {
            let t = task.sample_prior(&mut rng);
            let i = ((t[0] - x0) / hx).floor();
            let j = ((t[1] - y0) / hy).floor();
            if i >= 0.0 && j >= 0.0 && (i as usize) < nx && (j as usize) < ny {
                counts[i as usize * ny + j as usize] += 1;
            }
        }
        // The unnormalized density's integral over (theta_1, theta_2) is
        // sqrt(2 pi 100) * sqrt(2 pi), unit Jacobian for the shift.
        let norm = (2.0 * std::f64::consts::PI * 100.0).sqrt() * (2.0 * std::f64::consts::PI).sqrt();
        let sub = 8;
        let mut l1 = 0.0;
        let mut theta = vec![0.0; 20];
        for i in 0..nx {
            for j in 0..ny {
                let mut mass = 0.0;
                for a in 0..sub {
                    for b in 0..sub {
                        theta[0] = x0 + (i as f64 + (a as f64 + 0.5) / sub as f64) * hx;
                        theta[1] = y0 + (j as f64 + (b as f64 + 0.5) / sub as f64) * hy;
                        mass += task.prior_logpdf(&theta).exp();
                    }
                }
                mass *= hx * hy / (sub * sub) as f64 / norm;
                l1 += (mass - counts[i * ny + j] as f64 / n as f64).abs();
            }
        }
        assert!(l1 < 0.03, "L1 {l1}");
    }
}
