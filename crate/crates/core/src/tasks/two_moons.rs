use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{uniform_box_logpdf, uniform_box_sample, Task};
use crate::error::SimulationError;
use crate::linalg::LN_2PI;
use crate::rng::SimRng;

const BOUNDS: [(f64, f64); 2] = [(-1.0, 1.0), (-1.0, 1.0)];
const R_MEAN: f64 = 0.1;
const R_SD: f64 = 0.01;

/// Two crescent-shaped posterior modes in two dimensions.
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoMoonsTask;

impl TwoMoonsTask {
    /// The deterministic shift `(-|t1 + t2| / sqrt 2, (-t1 + t2) / sqrt 2)`.
    pub fn offset(theta: &[f64]) -> [f64; 2] {
        [
            -(theta[0] + theta[1]).abs() / SQRT_2,
            (-theta[0] + theta[1]) / SQRT_2,
        ]
    }

    /// The simulator output for fixed noise `(a, r)`.
    pub fn from_noise(theta: &[f64], a: f64, r: f64) -> [f64; 2] {
        let off = Self::offset(theta);
        [r * a.cos() + 0.25 + off[0], r * a.sin() + off[1]]
    }
}

impl Task for TwoMoonsTask {
    fn name(&self) -> &str {
        "two_moons"
    }

    fn param_dim(&self) -> usize {
        2
    }

    fn data_dim(&self) -> usize {
        2
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        uniform_box_sample(rng, &BOUNDS)
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        uniform_box_logpdf(theta, &BOUNDS)
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        let a = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
        let r = Normal::new(R_MEAN, R_SD).unwrap().sample(rng);
        Ok(Self::from_noise(theta, a, r).to_vec())
    }

    /// Change of variables from `(a, r)` to `y`; the Jacobian is `r`.
    fn exact_loglik(&self, y: &[f64], theta: &[f64]) -> Option<f64> {
        let off = Self::offset(theta);
        let q = [y[0] - off[0] - 0.25, y[1] - off[1]];
        let r = q[0].hypot(q[1]);
        let a = q[1].atan2(q[0]);
        if !(r > 0.0) || !(a > -FRAC_PI_2 && a < FRAC_PI_2) {
            return Some(f64::NEG_INFINITY);
        }
        let z = (r - R_MEAN) / R_SD;
        let log_normal = -0.5 * (LN_2PI + z * z) - R_SD.ln();
        Some(log_normal - PI.ln() - r.ln())
    }

    fn has_exact_likelihood(&self) -> bool {
        true
    }

    fn ground_truth(&self) -> Option<Vec<f64>> {
        Some(vec![0.0, 0.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn fixed_noise_outputs() {
        let y = TwoMoonsTask::from_noise(&[0.0, 0.0], 0.0, 0.1);
        assert!((y[0] - 0.35).abs() < 1e-15 && y[1] == 0.0);
        let y = TwoMoonsTask::from_noise(&[1.0, -1.0], 0.0, 0.1);
        assert!((y[0] - 0.35).abs() < 1e-15);
        assert!((y[1] + SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn likelihood_support_rules() {
        let t = TwoMoonsTask;
        let theta = [0.3, -0.1];
        let off = TwoMoonsTask::offset(&theta);
        let at_offset = [off[0] + 0.25, off[1]];
        assert_eq!(t.exact_loglik(&at_offset, &theta), Some(f64::NEG_INFINITY));
        let behind = [off[0] + 0.25 - 0.1, off[1]];
        assert_eq!(t.exact_loglik(&behind, &theta), Some(f64::NEG_INFINITY));
    }

    #[test]
    fn second_coordinate_mean_matches_offset() {
        let t = TwoMoonsTask;
        let theta = [0.4, -0.7];
        let mut rng = rng_from_seed(1);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| t.simulate(&theta, &mut rng).unwrap()[1]).sum::<f64>() / n as f64;
        // sd of r sin a is about 0.1 / sqrt 2
        let se = 0.0708 / (n as f64).sqrt();
        assert!((mean - TwoMoonsTask::offset(&theta)[1]).abs() < 4.0 * se);
    }

    #[test]
    fn likelihood_matches_simulation_histogram() {
        let t = TwoMoonsTask;
        let theta = [0.2, 0.5];
        let off = TwoMoonsTask::offset(&theta);
        let (cx, cy) = (off[0] + 0.25, off[1]);
        let mut rng = rng_from_seed(2);
        let n = 1_000_000;
        let (bins, half) = (20usize, 0.14);
        let h = 2.0 * half / bins as f64;
        let mut counts = vec![0usize; bins * bins];
        for _ in 0..n {
            let y = t.simulate(&theta, &mut rng).unwrap();
            let i = ((y[0] - cx + half) / h).floor();
            let j = ((y[1] - cy + half) / h).floor();
            if i >= 0.0 && j >= 0.0 && (i as usize) < bins && (j as usize) < bins {
                counts[i as usize * bins + j as usize] += 1;
            }
        }
        // Density averaged over each bin by 8x8 midpoint quadrature.
        let mut l1 = 0.0;
        let sub = 8;
        for i in 0..bins {
            for j in 0..bins {
                let mut mass = 0.0;
                for a in 0..sub {
                    for b in 0..sub {
                        let x = cx - half + (i as f64 + (a as f64 + 0.5) / sub as f64) * h;
                        let y = cy - half + (j as f64 + (b as f64 + 0.5) / sub as f64) * h;
                        mass += t.exact_loglik(&[x, y], &theta).unwrap().exp();
                    }
                }
                mass *= h * h / (sub * sub) as f64;
                l1 += (mass - counts[i * bins + j] as f64 / n as f64).abs();
            }
        }
        assert!(l1 < 0.02, "L1 {l1}");
    }
}
