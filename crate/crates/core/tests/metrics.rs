use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use semple::mcmc::{random_walk_mh, TargetDensity};
use semple::metrics::{c2st, wasserstein2, wasserstein2_exact, C2stOptions, SamplePair, W2Options};
use semple::rng::SimRng;
use semple::tasks::{make_reference_posterior, LinearGaussianTask, ReferenceOptions, Task, TwoMoonsTask};
use statrs::distribution::{ContinuousCDF, Normal};

fn normals(n: usize, dim: usize, shift: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = SimRng::seed_from_u64(seed);
    DMatrix::from_fn(n, dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z + shift
    })
}

#[test]
fn c2st_matches_bayes_accuracy_for_shifted_gaussians() {
    // N(0, 1) against N(1, 1): the optimal classifier thresholds at 1/2.
    let bayes = Normal::standard().cdf(0.5);
    let a = normals(5000, 1, 0.0, 1);
    let b = normals(5000, 1, 1.0, 2);
    let acc = c2st(SamplePair::new(&a, &b).unwrap(), &C2stOptions::default()).unwrap();
    assert!((acc - bayes).abs() < 0.03, "{acc} vs {bayes}");
}

#[test]
fn w2_one_dimensional_equals_sorted_coupling() {
    let a = normals(200, 1, 0.0, 3);
    let b = normals(200, 1, 0.7, 4);
    let mut xs: Vec<f64> = a.iter().copied().collect();
    let mut ys: Vec<f64> = b.iter().copied().collect();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let sorted = (xs.iter().zip(&ys).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 200.0).sqrt();
    let exact = wasserstein2_exact(&a, &b).unwrap();
    assert!((exact - sorted).abs() < 1e-10, "{exact} vs {sorted}");
}

#[test]
fn w2_of_a_translation_is_the_shift_length() {
    let a = normals(300, 2, 0.0, 5);
    let mut b = a.clone();
    b.column_mut(0).add_scalar_mut(3.0);
    b.column_mut(1).add_scalar_mut(-4.0);
    assert!((wasserstein2_exact(&a, &b).unwrap() - 5.0).abs() < 1e-10);
}

#[test]
fn subsampled_w2_needs_enough_draws() {
    let a = normals(100, 2, 0.0, 6);
    let b = normals(600, 2, 0.0, 7);
    assert!(wasserstein2(SamplePair::new(&a, &b).unwrap(), &W2Options::default()).is_err());
    let w = wasserstein2(SamplePair::new(&b, &b).unwrap(), &W2Options { subsample: 100, ..Default::default() }).unwrap();
    assert!(w > 0.0 && w < 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn w2_is_a_metric(n in 2usize..12, dim in 1usize..4, seed in any::<u64>()) {
        let a = normals(n, dim, 0.0, seed);
        let b = normals(n, dim, 0.5, seed ^ 1);
        let c = normals(n, dim, -0.5, seed ^ 2);
        let ab = wasserstein2_exact(&a, &b).unwrap();
        let ba = wasserstein2_exact(&b, &a).unwrap();
        let ac = wasserstein2_exact(&a, &c).unwrap();
        let cb = wasserstein2_exact(&c, &b).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(wasserstein2_exact(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn c2st_is_in_range(seed in any::<u64>(), shift in 0.0f64..3.0) {
        let a = normals(80, 2, 0.0, seed);
        let b = normals(60, 2, shift, seed ^ 9);
        let acc = c2st(SamplePair::new(&a, &b).unwrap(), &C2stOptions { seed, ..Default::default() }).unwrap();
        prop_assert!((0.5..=1.0).contains(&acc));
    }
}

#[test]
fn random_walk_recovers_a_two_component_mixture() {
    let comps = [(0.3, -1.0, 0.5), (0.7, 1.0, 0.5)];
    let pdf = move |x: f64| -> f64 {
        comps
            .iter()
            .map(|(w, m, s)| w * (-(x - m) * (x - m) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()))
            .sum()
    };
    let target = TargetDensity::from_log_density(move |x: &[f64]| pdf(x[0]).ln());
    let chain = random_walk_mh(&target, &DMatrix::from_element(1, 1, 2.0), &[0.0], 50_000, 1000, 5, 17).unwrap();

    let (lo, hi, bins) = (-3.0, 3.0, 24);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for x in chain.samples.iter() {
        let b = ((x - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1.0;
        }
    }
    let cdf = |x: f64| -> f64 {
        comps.iter().map(|(w, m, s)| w * Normal::new(*m, *s).unwrap().cdf(x)).sum()
    };
    let mut tv = 0.0;
    for (i, c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        tv += (c / chain.samples.nrows() as f64 - (cdf(a + width) - cdf(a))).abs();
    }
    tv *= 0.5;
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn reference_matches_conjugate_posterior() {
    let task = LinearGaussianTask::default();
    let y_o = [1.0, -0.5];
    let (mean, cov) = task.posterior(&y_o);
    let refs = make_reference_posterior(&task, &y_o, 4000, &ReferenceOptions::default(), 3).unwrap();
    for j in 0..2 {
        let col = refs.column(j);
        let m = col.mean();
        let v = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64;
        assert!((m - mean[j]).abs() < 0.03, "mean {m}");
        assert!((v / cov[(j, j)] - 1.0).abs() < 0.1, "var {v}");
    }

    // Exact draws from the same posterior are indistinguishable from it.
    let mut rng = SimRng::seed_from_u64(8);
    let exact = DMatrix::from_fn(4000, 2, |_, j| {
        let z: f64 = StandardNormal.sample(&mut rng);
        mean[j] + cov[(j, j)].sqrt() * z
    });
    let acc = c2st(SamplePair::new(&refs, &exact).unwrap(), &C2stOptions::default()).unwrap();
    assert!(acc < 0.56, "{acc}");
}

#[test]
fn reference_stays_in_support_and_rejects_bad_input() {
    let task = TwoMoonsTask;
    let refs = make_reference_posterior(&task, &[0.0, 0.0], 1000, &ReferenceOptions::default(), 1).unwrap();
    for row in refs.row_iter() {
        assert!(task.in_support(&[row[0], row[1]]));
    }
    assert!(make_reference_posterior(&task, &[0.0], 10, &ReferenceOptions::default(), 1).is_err());
    let lv = semple::tasks::LotkaVolterraTask::default();
    assert!(matches!(
        make_reference_posterior(&lv, &vec![0.0; lv.data_dim()], 10, &ReferenceOptions::default(), 1),
        Err(semple::Error::MissingExactLikelihood(_))
    ));
}
