//! Flat `key = value` run configuration.
//!
//! ```text
//! # two moons
//! semple.R = 4
//! semple.N = 2500
//! semple.K0 = 30
//! em.max_iterations = 200
//! ```
//!
//! Keys live in the `semple.` and `em.` namespaces. Unknown or repeated keys
//! are errors so that a misspelled knob never falls back to its default.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sequential::SempleConfig;

/// Recognised keys, in the order [`to_text`] writes them.
pub const KEYS: &[&str] = &[
    "semple.R",
    "semple.N",
    "semple.K0",
    "semple.constraint",
    "semple.gamma",
    "semple.prune_threshold",
    "semple.burnin",
    "semple.mode",
    "semple.budget_mode",
    "semple.final_samples",
    "semple.seed",
    "em.max_iterations",
    "em.loglik_rel_tolerance",
    "em.restarts",
    "em.jitter",
    "em.min_weight",
    "em.seed",
];

fn canonical(key: &str) -> Option<&'static str> {
    let k = match key {
        "semple.rounds" => "semple.R",
        "semple.n_per_round" => "semple.N",
        "semple.k0" => "semple.K0",
        "em.tol" => "em.loglik_rel_tolerance",
        other => other,
    };
    KEYS.iter().copied().find(|c| *c == k)
}

/// Parses `text` on top of `SempleConfig::default()`.
pub fn parse(text: &str) -> Result<SempleConfig> {
    parse_onto(text, SempleConfig::default())
}

pub fn parse_onto(text: &str, mut cfg: SempleConfig) -> Result<SempleConfig> {
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |key: &str, message: String| Error::Config {
            line: line_no,
            key: key.to_string(),
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line, "expected `key = value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let name = canonical(key).ok_or_else(|| err(key, "unknown key".into()))?;
        if !seen.insert(name) {
            return Err(err(key, "key given twice".into()));
        }
        set(&mut cfg, name, value).map_err(|m| err(key, m))?;
    }
    Ok(cfg)
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn optional<T: FromStr>(v: &str) -> std::result::Result<Option<T>, String> {
    if v == "none" || v == "default" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn set(cfg: &mut SempleConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    match key {
        "semple.R" => cfg.rounds = num(v)?,
        "semple.N" => cfg.n_per_round = num(v)?,
        "semple.K0" => cfg.k0 = num(v)?,
        "semple.constraint" => cfg.constraint = v.parse().map_err(|e: Error| e.to_string())?,
        "semple.gamma" => cfg.gamma = optional(v)?,
        "semple.prune_threshold" => cfg.prune_threshold = num(v)?,
        "semple.burnin" => cfg.burnin = num(v)?,
        "semple.mode" => cfg.mode = v.parse().map_err(|e: Error| e.to_string())?,
        "semple.budget_mode" => cfg.budget_mode = v.parse().map_err(|e: Error| e.to_string())?,
        "semple.final_samples" => cfg.final_samples = optional(v)?,
        "semple.seed" => cfg.seed = num(v)?,
        "em.max_iterations" => cfg.em.max_iterations = num(v)?,
        "em.loglik_rel_tolerance" => cfg.em.loglik_rel_tolerance = num(v)?,
        "em.restarts" => cfg.em.restarts = num(v)?,
        "em.jitter" => cfg.em.jitter = num(v)?,
        "em.min_weight" => cfg.em.min_weight = optional(v)?,
        "em.seed" => cfg.em.seed = num(v)?,
        _ => unreachable!("key list and setter disagree on `{key}`"),
    }
    Ok(())
}

/// Writes every key; `parse(&to_text(c)) == c`.
pub fn to_text(cfg: &SempleConfig) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let mode = serde_json::to_value(cfg.mode).unwrap();
    let budget = serde_json::to_value(cfg.budget_mode).unwrap();
    let values = [
        cfg.rounds.to_string(),
        cfg.n_per_round.to_string(),
        cfg.k0.to_string(),
        cfg.constraint.to_string(),
        opt(cfg.gamma.map(|g| g.to_string())),
        cfg.prune_threshold.to_string(),
        cfg.burnin.to_string(),
        mode.as_str().unwrap().to_string(),
        budget.as_str().unwrap().to_string(),
        opt(cfg.final_samples.map(|n| n.to_string())),
        cfg.seed.to_string(),
        cfg.em.max_iterations.to_string(),
        cfg.em.loglik_rel_tolerance.to_string(),
        cfg.em.restarts.to_string(),
        cfg.em.jitter.to_string(),
        opt(cfg.em.min_weight.map(|w| w.to_string())),
        cfg.em.seed.to_string(),
    ];
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        writeln!(out, "{k} = {v}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gllim::CovarianceConstraint;
    use crate::sequential::{BudgetMode, TargetMode};

    #[test]
    fn parses_namespaced_keys() {
        let cfg = parse("# run\nsemple.R=2\nsemple.N = 100 # per round\nsemple.constraint=isotropic\nem.max_iterations=50\n\nsemple.gamma=1.2\n").unwrap();
        assert_eq!(cfg.rounds, 2);
        assert_eq!(cfg.n_per_round, 100);
        assert_eq!(cfg.constraint, CovarianceConstraint::Isotropic);
        assert_eq!(cfg.em.max_iterations, 50);
        assert_eq!(cfg.gamma, Some(1.2));
        assert_eq!(cfg.k0, SempleConfig::default().k0);
    }

    #[test]
    fn unknown_key_names_line_and_key() {
        match parse("semple.R=4\nsemple.KO=30\n") {
            Err(Error::Config { line, key, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "semple.KO");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_and_duplicates() {
        assert!(matches!(parse("em.restarts=three"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse("semple.R=1\nsemple.rounds=2"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse("semple.mode=posterior"), Err(Error::Config { .. })));
        assert!(matches!(parse("just text"), Err(Error::Config { .. })));
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = SempleConfig {
            rounds: 3,
            gamma: Some(1.15),
            mode: TargetMode::CorrectedPosterior,
            budget_mode: BudgetMode::Full,
            final_samples: Some(10_000),
            prune_threshold: 0.005,
            ..Default::default()
        };
        cfg.em.min_weight = Some(1e-4);
        assert_eq!(parse(&to_text(&cfg)).unwrap(), cfg);
        assert_eq!(parse(&to_text(&SempleConfig::default())).unwrap(), SempleConfig::default());
    }
}
