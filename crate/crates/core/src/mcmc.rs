//! Metropolis-Hastings samplers.
//!
//! [`IndependenceSampler`] proposes from a fixed Gaussian mixture (the
//! surrogate posterior) regardless of the current state. [`random_walk_mh`]
//! is a plain symmetric random walk used for exact-likelihood references.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gllim::{ConditionalMixture, GllimForwardParams};
use crate::linalg::{cholesky_lower, GaussianFactor};
use crate::rng::{rng_from_seed, SimRng};

type LogDensityFn<'a> = dyn Fn(&[f64]) -> f64 + Send + Sync + 'a;
type SupportFn<'a> = dyn Fn(&[f64]) -> bool + Send + Sync + 'a;

/// An unnormalized log-density together with its support.
pub struct TargetDensity<'a> {
    log_density: Box<LogDensityFn<'a>>,
    support: Box<SupportFn<'a>>,
}

impl<'a> TargetDensity<'a> {
    pub fn new(
        log_density: impl Fn(&[f64]) -> f64 + Send + Sync + 'a,
        support: impl Fn(&[f64]) -> bool + Send + Sync + 'a,
    ) -> Self {
        Self {
            log_density: Box::new(log_density),
            support: Box::new(support),
        }
    }

    /// Support is wherever `log_density` is above `-inf`.
    pub fn from_log_density(log_density: impl Fn(&[f64]) -> f64 + Send + Sync + Clone + 'a) -> Self {
        let support = log_density.clone();
        Self::new(log_density, move |x| support(x) > f64::NEG_INFINITY)
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        (self.support)(x)
    }

    /// `-inf` off the support, otherwise the log-density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        if self.in_support(x) {
            (self.log_density)(x)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Like [`Self::log_density`], but rejects NaN and `+inf`.
    pub fn checked(&self, x: &[f64]) -> Result<f64> {
        let v = self.log_density(x);
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteDensity(x.to_vec()));
        }
        Ok(v)
    }
}

impl std::fmt::Debug for TargetDensity<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("TargetDensity")
    }
}

/// Retained states and counters of a finished chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MhChain {
    pub samples: DMatrix<f64>,
    pub accepted: usize,
    pub proposed: usize,
    pub last_state: Vec<f64>,
    pub seed: u64,
}

impl MhChain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// An independence Metropolis-Hastings kernel that can be advanced one step
/// at a time.
pub struct IndependenceSampler<'a> {
    target: &'a TargetDensity<'a>,
    proposal: ConditionalMixture,
    state: Vec<f64>,
    log_target: f64,
    log_proposal: f64,
    accepted: usize,
    proposed: usize,
}

impl<'a> IndependenceSampler<'a> {
    /// `proposal` is the exact density that will be sampled from (inflation
    /// already applied).
    pub fn new(target: &'a TargetDensity<'a>, proposal: ConditionalMixture, init: &[f64]) -> Result<Self> {
        if init.len() != proposal.dim() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has length {}, proposal has dimension {}",
                init.len(),
                proposal.dim()
            )));
        }
        let log_target = target.checked(init)?;
        if log_target == f64::NEG_INFINITY {
            return Err(Error::InvalidInit);
        }
        let log_proposal = proposal.log_density(init);
        Ok(Self {
            target,
            proposal,
            state: init.to_vec(),
            log_target,
            log_proposal,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn proposed(&self) -> usize {
        self.proposed
    }

    /// One proposal and accept/reject decision.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&[f64]> {
        let candidate = self.proposal.sample(rng);
        let lp = self.target.checked(&candidate)?;
        let lq = self.proposal.log_density(&candidate);
        self.proposed += 1;
        let u: f64 = rng.random();
        if lp > f64::NEG_INFINITY && lq > f64::NEG_INFINITY {
            let log_alpha = (lp - lq) - (self.log_target - self.log_proposal);
            if u.ln() < log_alpha {
                self.state = candidate;
                self.log_target = lp;
                self.log_proposal = lq;
                self.accepted += 1;
            }
        }
        Ok(&self.state)
    }
}

/// Independence MH targeting `target` with the `gamma`-inflated surrogate
/// posterior `q(theta | y_o)` as proposal.
#[allow(clippy::too_many_arguments)]
pub fn independence_mh(
    target: &TargetDensity<'_>,
    proposal_fwd: &GllimForwardParams,
    y_o: &[f64],
    gamma: f64,
    init: &[f64],
    n_keep: usize,
    burnin: usize,
    seed: u64,
) -> Result<MhChain> {
    let proposal = proposal_fwd.posterior(y_o, gamma)?;
    let mut rng = rng_from_seed(seed);
    let mut sampler = IndependenceSampler::new(target, proposal, init)?;
    for _ in 0..burnin {
        sampler.step(&mut rng)?;
    }
    let mut samples = DMatrix::zeros(n_keep, init.len());
    for i in 0..n_keep {
        let s = sampler.step(&mut rng)?;
        samples.row_mut(i).copy_from_slice(s);
    }
    Ok(MhChain {
        samples,
        accepted: sampler.accepted,
        proposed: sampler.proposed,
        last_state: sampler.state,
        seed,
    })
}

/// Gaussian random-walk MH. Every `thin`-th post-burn-in state is kept until
/// `n_keep` states are retained.
#[allow(clippy::too_many_arguments)]
pub fn random_walk_mh(
    target: &TargetDensity<'_>,
    step_cov: &DMatrix<f64>,
    init: &[f64],
    n_keep: usize,
    burnin: usize,
    thin: usize,
    seed: u64,
) -> Result<MhChain> {
    let mut rng = rng_from_seed(seed);
    random_walk_with(target, step_cov, init, n_keep, burnin, thin, seed, &mut rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn random_walk_with(
    target: &TargetDensity<'_>,
    step_cov: &DMatrix<f64>,
    init: &[f64],
    n_keep: usize,
    burnin: usize,
    thin: usize,
    seed: u64,
    rng: &mut SimRng,
) -> Result<MhChain> {
    let l = init.len();
    if step_cov.shape() != (l, l) {
        return Err(Error::DimensionMismatch(format!(
            "step covariance is {}x{}, state has length {l}",
            step_cov.nrows(),
            step_cov.ncols()
        )));
    }
    if thin == 0 {
        return Err(Error::InvalidArgument("thin must be at least 1".into()));
    }
    let lower = cholesky_lower(step_cov)
        .ok_or_else(|| Error::SingularCovariance("random-walk step covariance".into()))?;
    let step = GaussianFactor::from_lower(lower);
    let mut state = DVector::from_column_slice(init);
    let mut lp = target.checked(init)?;
    if lp == f64::NEG_INFINITY {
        return Err(Error::InvalidInit);
    }
    let (mut accepted, mut proposed) = (0, 0);
    let mut samples = DMatrix::zeros(n_keep, l);
    let total = burnin + n_keep * thin;
    let mut kept = 0;
    for it in 0..total {
        let z = DVector::from_fn(l, |_, _| StandardNormal.sample(rng));
        let candidate = &state + step.colour(&z);
        let lc = target.checked(candidate.as_slice())?;
        proposed += 1;
        let u: f64 = rng.random();
        if lc > f64::NEG_INFINITY && u.ln() < lc - lp {
            state = candidate;
            lp = lc;
            accepted += 1;
        }
        if it >= burnin && (it - burnin + 1).is_multiple_of(thin) {
            samples.row_mut(kept).copy_from(&state.transpose());
            kept += 1;
        }
    }
    debug_assert_eq!(kept, n_keep);
    Ok(MhChain {
        samples,
        accepted,
        proposed,
        last_state: state.as_slice().to_vec(),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gllim::AffineComponent;

    fn one_d_forward(mean: f64, var: f64) -> GllimForwardParams {
        GllimForwardParams::new(vec![AffineComponent {
            weight: 1.0,
            input_mean: DVector::from_element(1, 0.0),
            input_cov: DMatrix::from_element(1, 1, 1.0),
            map: DMatrix::zeros(1, 1),
            offset: DVector::from_element(1, mean),
            noise_cov: DMatrix::from_element(1, 1, var),
        }])
        .unwrap()
    }

    fn normal_target(mean: f64, var: f64) -> TargetDensity<'static> {
        TargetDensity::new(move |x| -0.5 * (x[0] - mean).powi(2) / var, |x| x[0].is_finite())
    }

    #[test]
    fn self_proposal_always_accepts() {
        let fwd = one_d_forward(0.3, 2.0);
        let prop = fwd.posterior(&[0.0], 1.0).unwrap();
        let target = TargetDensity::new(move |x| prop.log_density(x), |_| true);
        let chain = independence_mh(&target, &fwd, &[0.0], 1.0, &[0.1], 2000, 100, 5).unwrap();
        assert_eq!(chain.accepted, chain.proposed);
        assert_eq!(chain.acceptance_rate(), 1.0);
    }

    #[test]
    fn independence_chain_recovers_normal_moments() {
        let fwd = one_d_forward(0.0, 2.0);
        let target = normal_target(0.0, 1.0);
        let chain = independence_mh(&target, &fwd, &[0.0], 1.0, &[0.0], 100_000, 100, 11).unwrap();
        let x = chain.samples.column(0);
        let mean = x.mean();
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn distant_point_mass_proposal_rarely_accepts() {
        let fwd = one_d_forward(8.0, 1e-4);
        let target = normal_target(0.0, 1.0);
        let chain = independence_mh(&target, &fwd, &[0.0], 1.0, &[0.0], 10_000, 0, 3).unwrap();
        assert!(chain.acceptance_rate() < 0.01);
    }

    #[test]
    fn off_support_init_is_rejected() {
        let fwd = one_d_forward(0.0, 1.0);
        let target = TargetDensity::new(|_| 0.0, |x| x[0] > 0.0);
        assert!(matches!(
            independence_mh(&target, &fwd, &[0.0], 1.0, &[-1.0], 10, 0, 1),
            Err(Error::InvalidInit)
        ));
    }

    #[test]
    fn nan_target_is_an_error() {
        let fwd = one_d_forward(0.0, 1.0);
        let target = TargetDensity::new(|x| if x[0] > 0.0 { f64::NAN } else { 0.0 }, |_| true);
        let res = independence_mh(&target, &fwd, &[0.0], 1.0, &[-1.0], 1000, 0, 1);
        assert!(matches!(res, Err(Error::NonFiniteDensity(_))));
    }

    #[test]
    fn random_walk_uniform_box_accepts_inside() {
        let target = TargetDensity::new(|_| 0.0, |x| x.iter().all(|v| v.abs() < 1.0));
        let step = DMatrix::from_diagonal_element(2, 2, 1e-6);
        let chain = random_walk_mh(&target, &step, &[0.0, 0.0], 1000, 0, 1, 9).unwrap();
        assert_eq!(chain.accepted, chain.proposed);
    }

    #[test]
    fn random_walk_normal_moments_and_thinning() {
        let target = normal_target(0.0, 1.0);
        let step = DMatrix::from_element(1, 1, 2.4f64.powi(2));
        let chain = random_walk_mh(&target, &step, &[0.0], 100_000, 1000, 1, 4).unwrap();
        let x = chain.samples.column(0);
        let mean = x.mean();
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");

        let thinned = random_walk_mh(&target, &step, &[0.0], 500, 10, 10, 4).unwrap();
        assert_eq!(thinned.samples.nrows(), 500);
        assert_eq!(thinned.proposed, 10 + 5000);
    }

    #[test]
    fn chains_are_reproducible() {
        let fwd = one_d_forward(0.5, 1.5);
        let target = normal_target(0.0, 1.0);
        let a = independence_mh(&target, &fwd, &[0.0], 1.1, &[0.0], 500, 10, 77).unwrap();
        let b = independence_mh(&target, &fwd, &[0.0], 1.1, &[0.0], 500, 10, 77).unwrap();
        assert_eq!(a, b);
    }
}
