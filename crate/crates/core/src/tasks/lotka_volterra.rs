//! Predator-prey Markov jump process observed with Gaussian noise.
//!
//! Reactions: prey birth `X1 -> 2 X1`, predation `X1 + X2 -> 2 X2` and
//! predator death `X2 -> 0`, with hazards `(t1 X1, t2 X1 X2, t3 X2)`. The
//! parameter vector is `(log t1, log t2, log t3, log sigma)` and the data are
//! nine (optionally standardized) summary statistics.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{prior_predictive, uniform_box_logpdf, uniform_box_sample, Task};
use crate::error::{Error, Result, SimulationError};
use crate::rng::SimRng;

pub const STOICHIOMETRY: [[i64; 3]; 2] = [[1, -1, 0], [0, 1, -1]];
pub const SUMMARY_NAMES: [&str; 9] = [
    "prey_mean",
    "prey_log_var",
    "prey_acf1",
    "prey_acf2",
    "predator_mean",
    "predator_log_var",
    "predator_acf1",
    "predator_acf2",
    "cross_corr",
];
pub const DEFAULT_EVENT_CAP: u64 = 10_000_000;
/// Floor applied to the variance before taking its logarithm.
pub const MIN_VARIANCE: f64 = 1e-12;
/// Fraction trimmed from each tail when building the scaler.
pub const TRIM_FRACTION: f64 = 0.0125;

fn bounds() -> [(f64, f64); 4] {
    [(-6.0, 2.0), (-6.0, 2.0), (-6.0, 2.0), (0.5f64.ln(), 50f64.ln())]
}

pub fn hazards(x: [i64; 2], rates: [f64; 3]) -> [f64; 3] {
    let (x1, x2) = (x[0] as f64, x[1] as f64);
    [rates[0] * x1, rates[1] * x1 * x2, rates[2] * x2]
}

/// Applies column `reaction` of the stoichiometry matrix.
pub fn apply_reaction(x: [i64; 2], reaction: usize) -> [i64; 2] {
    [x[0] + STOICHIOMETRY[0][reaction], x[1] + STOICHIOMETRY[1][reaction]]
}

/// Noise-free species counts on the observation grid, one row per species.
#[derive(Debug, Clone, PartialEq)]
pub struct LvSeries {
    pub times: Vec<f64>,
    pub prey: Vec<i64>,
    pub predator: Vec<i64>,
    pub events: u64,
}

/// Summary statistics standardization from prior-predictive draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvScaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub draws: usize,
    pub seed: u64,
    pub trim: f64,
}

#[derive(Debug, Clone)]
pub struct LotkaVolterraTask {
    pub x0: [i64; 2],
    pub step: f64,
    pub observations: usize,
    pub event_cap: u64,
    pub scaler: Option<LvScaler>,
}

impl Default for LotkaVolterraTask {
    fn default() -> Self {
        Self {
            x0: [50, 100],
            step: 0.2,
            observations: 150,
            event_cap: DEFAULT_EVENT_CAP,
            scaler: None,
        }
    }
}

impl LotkaVolterraTask {
    pub fn with_scaler(scaler: LvScaler) -> Self {
        Self {
            scaler: Some(scaler),
            ..Self::default()
        }
    }

    /// Exact Gillespie simulation recorded at `step * j`, `j = 1..=observations`.
    pub fn gillespie(&self, rates: [f64; 3], rng: &mut SimRng) -> Result<LvSeries, SimulationError> {
        let n = self.observations;
        let times: Vec<f64> = (1..=n).map(|j| j as f64 * self.step).collect();
        let mut prey = Vec::with_capacity(n);
        let mut predator = Vec::with_capacity(n);
        let mut x = self.x0;
        let mut t = 0.0;
        let mut events = 0u64;
        let mut next = 0;
        while next < n {
            let h = hazards(x, rates);
            let h0 = h[0] + h[1] + h[2];
            if !(h0 > 0.0) {
                break;
            }
            // 1 - u lies in (0, 1], so the logarithm is finite.
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / h0;
            while next < n && times[next] < t {
                prey.push(x[0]);
                predator.push(x[1]);
                next += 1;
            }
            if next == n {
                break;
            }
            let pick = rng.random::<f64>() * h0;
            let reaction = if pick < h[0] {
                0
            } else if pick < h[0] + h[1] {
                1
            } else {
                2
            };
            x = apply_reaction(x, reaction);
            events += 1;
            if events > self.event_cap {
                return Err(SimulationError::BudgetExceeded { cap: self.event_cap });
            }
        }
        while next < n {
            prey.push(x[0]);
            predator.push(x[1]);
            next += 1;
        }
        Ok(LvSeries {
            times,
            prey,
            predator,
            events,
        })
    }

    /// Unstandardized summaries of a noisy simulation at log-parameters `theta`.
    pub fn raw_summaries(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        let rates = [theta[0].exp(), theta[1].exp(), theta[2].exp()];
        let sigma = theta[3].exp();
        if !rates.iter().all(|r| r.is_finite()) || !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SimulationError::InvalidParameter(format!("{theta:?}")));
        }
        let series = self.gillespie(rates, rng)?;
        let noise = Normal::new(0.0, sigma).unwrap();
        let prey: Vec<f64> = series.prey.iter().map(|&v| v as f64 + noise.sample(rng)).collect();
        let predator: Vec<f64> = series.predator.iter().map(|&v| v as f64 + noise.sample(rng)).collect();
        Ok(summaries(&prey, &predator))
    }

    pub fn standardize(&self, summaries: &[f64]) -> Vec<f64> {
        match &self.scaler {
            Some(s) => s.apply(summaries),
            None => summaries.to_vec(),
        }
    }

    /// Builds the standardization scaler from `draws` prior-predictive
    /// simulations, trimming `TRIM_FRACTION` from each tail.
    pub fn fit_scaler(&self, draws: usize, seed: u64) -> Result<LvScaler> {
        let raw = Self {
            scaler: None,
            ..self.clone()
        };
        let (_, ys) = prior_predictive(&raw, draws, seed)?;
        let mut means = Vec::with_capacity(9);
        let mut sds = Vec::with_capacity(9);
        for col in ys.column_iter() {
            let (m, s) = trimmed_mean_sd(col.as_slice(), TRIM_FRACTION);
            means.push(m);
            sds.push(if s > 0.0 { s } else { 1.0 });
        }
        Ok(LvScaler {
            means,
            sds,
            draws,
            seed,
            trim: TRIM_FRACTION,
        })
    }
}

/// Mean, log variance, lag-1 and lag-2 autocorrelation for each series, then
/// their cross-correlation. A constant series gets log variance
/// `log(MIN_VARIANCE)` and zero correlations.
pub fn summaries(prey: &[f64], predator: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(9);
    for x in [prey, predator] {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        let var = ss / (n - 1.0);
        out.push(mean);
        out.push(var.max(MIN_VARIANCE).ln());
        for lag in [1, 2] {
            let acf = if ss > 0.0 {
                x.windows(lag + 1).map(|w| (w[0] - mean) * (w[lag] - mean)).sum::<f64>() / ss
            } else {
                0.0
            };
            out.push(acf);
        }
    }
    out.push(correlation(prey, predator));
    out
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa * sbb).sqrt()
    } else {
        0.0
    }
}

/// Mean and standard deviation after dropping `floor(trim n)` values from
/// each end of the sorted sample.
pub fn trimmed_mean_sd(values: &[f64], trim: f64) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let cut = (trim * v.len() as f64).floor() as usize;
    let kept = &v[cut..v.len() - cut];
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    let var = if kept.len() > 1 {
        kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl LvScaler {
    pub fn apply(&self, summaries: &[f64]) -> Vec<f64> {
        summaries
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// CSV with a one-line JSON header.
    pub fn to_csv(&self) -> String {
        let header = serde_json::json!({
            "kind": "lv_scaler",
            "draws": self.draws,
            "seed": self.seed,
            "trim": self.trim,
        });
        let mut out = format!("# {header}\nstatistic,mean,sd\n");
        for (i, name) in SUMMARY_NAMES.iter().enumerate() {
            writeln!(out, "{name},{},{}", self.means[i], self.sds[i]).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().unwrap_or("");
        let json = first
            .strip_prefix("# ")
            .ok_or_else(|| Error::format(origin, 1, "missing JSON header"))?;
        let meta: serde_json::Value =
            serde_json::from_str(json).map_err(|e| Error::format(origin, 1, e.to_string()))?;
        let field = |k: &str| meta.get(k).cloned().ok_or_else(|| Error::format(origin, 1, format!("missing `{k}`")));
        let draws = field("draws")?.as_u64().ok_or_else(|| Error::format(origin, 1, "bad `draws`"))? as usize;
        let seed = field("seed")?.as_u64().ok_or_else(|| Error::format(origin, 1, "bad `seed`"))?;
        let trim = field("trim")?.as_f64().ok_or_else(|| Error::format(origin, 1, "bad `trim`"))?;
        if lines.next() != Some("statistic,mean,sd") {
            return Err(Error::format(origin, 2, "expected `statistic,mean,sd`"));
        }
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 || parts[0] != SUMMARY_NAMES.get(i).copied().unwrap_or("") {
                return Err(Error::format(origin, lineno, "unexpected scaler row"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| Error::format(origin, lineno, format!("bad number `{s}`")));
            means.push(num(parts[1])?);
            sds.push(num(parts[2])?);
        }
        if means.len() != SUMMARY_NAMES.len() {
            return Err(Error::format(origin, means.len() + 3, "scaler needs nine rows"));
        }
        Ok(Self {
            means,
            sds,
            draws,
            seed,
            trim,
        })
    }
}

impl Task for LotkaVolterraTask {
    fn name(&self) -> &str {
        "lotka_volterra"
    }

    fn param_dim(&self) -> usize {
        4
    }

    fn data_dim(&self) -> usize {
        9
    }

    fn sample_prior(&self, rng: &mut SimRng) -> Vec<f64> {
        uniform_box_sample(rng, &bounds())
    }

    fn prior_logpdf(&self, theta: &[f64]) -> f64 {
        uniform_box_logpdf(theta, &bounds())
    }

    fn simulate(&self, theta: &[f64], rng: &mut SimRng) -> Result<Vec<f64>, SimulationError> {
        let raw = self.raw_summaries(theta, rng)?;
        Ok(self.standardize(&raw))
    }

    fn ground_truth(&self) -> Option<Vec<f64>> {
        Some(vec![0.0, 0.005f64.ln(), 0.6f64.ln(), 30f64.ln()])
    }

    fn default_gamma(&self) -> f64 {
        1.0
    }
}
