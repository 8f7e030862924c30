use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SamplePair;
use crate::error::{Error, Result};
use crate::rng::{purpose, substream};

/// Smallest sample size accepted by [`c2st`].
pub const MIN_SAMPLES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C2stOptions {
    pub folds: usize,
    pub seed: u64,
}

impl Default for C2stOptions {
    fn default() -> Self {
        Self { folds: 5, seed: 0 }
    }
}

/// Classifier two-sample test with a k-nearest-neighbour classifier,
/// `k = ceil(sqrt(n_train))`, on jointly standardized samples. The larger
/// sample is subsampled to the size of the smaller one. Returns the
/// cross-validated accuracy folded into `[0.5, 1]`.
pub fn c2st(pair: SamplePair<'_>, opts: &C2stOptions) -> Result<f64> {
    let (na, nb) = (pair.a.nrows(), pair.b.nrows());
    if na.min(nb) < MIN_SAMPLES {
        return Err(Error::TooFewSamples(format!(
            "C2ST needs at least {MIN_SAMPLES} draws per sample, got {na} and {nb}"
        )));
    }
    if opts.folds < 2 {
        return Err(Error::InvalidArgument("C2ST needs at least two folds".into()));
    }
    let l = pair.dim();
    let m = na.min(nb);
    let mut rng = substream(opts.seed, &[purpose::METRIC, 1], 0);
    let pick = |n: usize, rng: &mut _| {
        if n == m {
            (0..n).collect::<Vec<_>>()
        } else {
            let mut idx = sample(rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        }
    };
    let ia = pick(na, &mut rng);
    let ib = pick(nb, &mut rng);

    // Stack, then standardize each column jointly.
    let n = 2 * m;
    let mut x = DMatrix::zeros(n, l);
    for (r, &i) in ia.iter().enumerate() {
        x.row_mut(r).copy_from(&pair.a.row(i));
    }
    for (r, &i) in ib.iter().enumerate() {
        x.row_mut(m + r).copy_from(&pair.b.row(i));
    }
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        col.apply(|v| *v = (*v - mean) / sd);
    }
    let labels: Vec<bool> = (0..n).map(|i| i >= m).collect();

    // Stratified folds.
    let mut fold_of = vec![0usize; n];
    for class in [0..m, m..n] {
        let mut idx: Vec<usize> = class.collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % opts.folds;
        }
    }

    let mut correct = 0usize;
    for f in 0..opts.folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let k = ((train.len() as f64).sqrt().ceil() as usize).clamp(1, train.len());
        let hits: usize = test
            .par_iter()
            .map(|&t| {
                let mut dist: Vec<(f64, usize)> = train
                    .iter()
                    .map(|&j| {
                        let d: f64 = (0..l).map(|c| (x[(t, c)] - x[(j, c)]).powi(2)).sum();
                        (d, j)
                    })
                    .collect();
                let cmp = |p: &(f64, usize), q: &(f64, usize)| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1));
                if k < dist.len() {
                    dist.select_nth_unstable_by(k - 1, cmp);
                }
                let near = &mut dist[..k];
                let votes_b = near.iter().filter(|(_, j)| labels[*j]).count();
                let predict = match (2 * votes_b).cmp(&k) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => {
                        let nearest = near.iter().min_by(|p, q| cmp(p, q)).unwrap();
                        labels[nearest.1]
                    }
                };
                usize::from(predict == labels[t])
            })
            .sum();
        correct += hits;
    }
    let acc = correct as f64 / n as f64;
    Ok(acc.max(1.0 - acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, l: usize, shift: f64, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        DMatrix::from_fn(n, l, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + shift
        })
    }

    #[test]
    fn indistinguishable_samples_score_near_half() {
        let a = gaussian(2000, 2, 0.0, 1);
        let b = gaussian(2000, 2, 0.0, 2);
        let v = c2st(SamplePair::new(&a, &b).unwrap(), &C2stOptions::default()).unwrap();
        assert!((0.5..=0.56).contains(&v), "{v}");
    }

    #[test]
    fn separated_clusters_score_one() {
        let a = gaussian(500, 2, 0.0, 3);
        let b = gaussian(500, 2, 10.0, 4);
        let v = c2st(SamplePair::new(&a, &b).unwrap(), &C2stOptions::default()).unwrap();
        assert!(v >= 0.99);
    }

    #[test]
    fn too_few_samples() {
        let a = gaussian(20, 1, 0.0, 3);
        let b = gaussian(200, 1, 0.0, 4);
        assert!(matches!(
            c2st(SamplePair::new(&a, &b).unwrap(), &C2stOptions::default()),
            Err(Error::TooFewSamples(_))
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = gaussian(300, 2, 0.0, 5);
        let b = gaussian(400, 2, 0.3, 6);
        let p = SamplePair::new(&a, &b).unwrap();
        let o = C2stOptions { folds: 5, seed: 9 };
        assert_eq!(c2st(p, &o).unwrap(), c2st(p, &o).unwrap());
    }
}
