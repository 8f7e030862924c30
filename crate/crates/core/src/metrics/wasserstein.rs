use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{solve_assignment, SamplePair};
use crate::error::{Error, Result};
use crate::rng::{purpose, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct W2Options {
    pub subsample: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for W2Options {
    fn default() -> Self {
        Self {
            subsample: 500,
            repeats: 5,
            seed: 0,
        }
    }
}

/// Exact 2-Wasserstein distance between two equally sized empirical
/// measures: the square root of the mean squared distance under the optimal
/// matching.
pub fn wasserstein2_exact(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let pair = SamplePair::new(a, b)?;
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch("exact W2 needs equal sample sizes".into()));
    }
    let n = a.nrows();
    let l = pair.dim();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = (0..l).map(|c| (a[(i, c)] - b[(j, c)]).powi(2)).sum();
        }
    }
    let p = solve_assignment(&cost, n);
    let total: f64 = p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total / n as f64).sqrt())
}

/// Exact W2 on `repeats` pairs of uniform subsamples of size `subsample`,
/// averaged.
pub fn wasserstein2(pair: SamplePair<'_>, opts: &W2Options) -> Result<f64> {
    let m = opts.subsample;
    if m == 0 || opts.repeats == 0 {
        return Err(Error::InvalidArgument("subsample and repeats must be positive".into()));
    }
    if pair.a.nrows() < m || pair.b.nrows() < m {
        return Err(Error::TooFewSamples(format!(
            "W2 needs at least {m} draws per sample, got {} and {}",
            pair.a.nrows(),
            pair.b.nrows()
        )));
    }
    let mut total = 0.0;
    for r in 0..opts.repeats {
        let mut rng = substream(opts.seed, &[purpose::METRIC, 2], r as u64);
        let ia = sample(&mut rng, pair.a.nrows(), m).into_vec();
        let ib = sample(&mut rng, pair.b.nrows(), m).into_vec();
        total += wasserstein2_exact(&pair.a.select_rows(&ia), &pair.b.select_rows(&ib))?;
    }
    Ok(total / opts.repeats as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_have_zero_distance() {
        let a = DMatrix::from_fn(40, 2, |i, j| (i * 3 + j) as f64 * 0.1);
        assert_eq!(wasserstein2_exact(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn point_masses() {
        let a = DMatrix::from_fn(30, 2, |_, j| [1.0, 2.0][j]);
        let b = DMatrix::from_fn(30, 2, |_, j| [4.0, 6.0][j]);
        assert!((wasserstein2_exact(&a, &b).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn shifted_grid() {
        let a = DMatrix::from_fn(10, 1, |i, _| i as f64 / 9.0);
        let b = a.add_scalar(0.5);
        assert!((wasserstein2_exact(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn subsampled_estimate_is_deterministic() {
        let a = DMatrix::from_fn(600, 2, |i, j| ((i * 7 + j * 3) % 13) as f64);
        let b = DMatrix::from_fn(700, 2, |i, j| ((i * 5 + j) % 11) as f64);
        let pair = SamplePair::new(&a, &b).unwrap();
        let o = W2Options::default();
        assert_eq!(wasserstein2(pair, &o).unwrap(), wasserstein2(pair, &o).unwrap());
        let small = DMatrix::from_fn(10, 2, |_, _| 0.0);
        assert!(matches!(
            wasserstein2(SamplePair::new(&small, &b).unwrap(), &o),
            Err(Error::TooFewSamples(_))
        ));
    }
}
