//! Plain-text artifacts: sample CSVs, observed-data files, run manifests and
//! long-format metric tables.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! file parses back to the exact same bits.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequential::SempleConfig;

/// Column prefix of parameter samples.
pub const THETA_PREFIX: &str = "theta";
/// Column prefix of observed data.
pub const DATA_PREFIX: &str = "y";

/// Shortest round-trip form; exponent notation for very small or large
/// magnitudes.
fn write_number(out: &mut String, v: f64) {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        write!(out, "{v:e}").unwrap();
    } else {
        write!(out, "{v}").unwrap();
    }
}

/// Writes a matrix as CSV with a `prefix_1,...,prefix_m` header.
pub fn matrix_to_csv(prefix: &str, m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=m.ncols()).map(|j| format!("{prefix}_{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.row_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write_number(&mut out, *v);
        }
        out.push('\n');
    }
    out
}

/// Parses CSV written by [`matrix_to_csv`]. Lines starting with `#` are
/// skipped; the header must use `prefix`.
pub fn matrix_from_csv(text: &str, prefix: &str, origin: &str) -> Result<DMatrix<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::format(origin, 1, "missing header"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for (j, c) in cols.iter().enumerate() {
        if *c != format!("{prefix}_{}", j + 1) {
            return Err(Error::format(
                origin,
                hline + 1,
                format!("expected column `{prefix}_{}`, found `{c}`", j + 1),
            ));
        }
    }
    let width = cols.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::format(
                origin,
                i + 1,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::format(origin, i + 1, format!("not a number: `{f}`")))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::format(origin, hline + 1, "no data rows"));
    }
    Ok(DMatrix::from_row_slice(rows, width, &values))
}

pub fn samples_to_csv(m: &DMatrix<f64>) -> String {
    matrix_to_csv(THETA_PREFIX, m)
}

pub fn samples_from_csv(text: &str, origin: &str) -> Result<DMatrix<f64>> {
    matrix_from_csv(text, THETA_PREFIX, origin)
}

pub fn read_samples(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    samples_from_csv(&text, &path.display().to_string())
}

/// Metadata stored on the first line of an observed-data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedHeader {
    pub task: String,
    pub theta_dim: usize,
    pub data_dim: usize,
    pub seed: u64,
    /// Parameter the data were simulated at.
    pub theta: Vec<f64>,
    pub rows: usize,
    /// Scaler file the summaries were standardized with, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedData {
    pub header: ObservedHeader,
    pub ys: DMatrix<f64>,
}

impl ObservedData {
    pub fn to_text(&self) -> String {
        let json = serde_json::to_string(&sorted(&self.header)).expect("header serializes");
        format!("# {json}\n{}", matrix_to_csv(DATA_PREFIX, &self.ys))
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let json = first
            .strip_prefix('#')
            .ok_or_else(|| Error::format(origin, 1, "missing `# {json}` header"))?;
        let header: ObservedHeader = serde_json::from_str(json.trim())
            .map_err(|e| Error::format(origin, 1, format!("bad header: {e}")))?;
        let ys = matrix_from_csv(text, DATA_PREFIX, origin)?;
        if ys.ncols() != header.data_dim || ys.nrows() != header.rows {
            return Err(Error::format(
                origin,
                1,
                format!(
                    "header says {}x{}, data is {}x{}",
                    header.rows,
                    header.data_dim,
                    ys.nrows(),
                    ys.ncols()
                ),
            ));
        }
        Ok(Self { header, ys })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    /// The `row`-th observation as a vector.
    pub fn observation(&self, row: usize) -> Vec<f64> {
        self.ys.row(row).iter().copied().collect()
    }
}

/// One reported round in a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub acceptance_rate: f64,
    pub surviving_k: usize,
    pub refitted: bool,
    pub loglik_trace: Vec<f64>,
    pub wall_time: Option<f64>,
    pub simulator_calls: usize,
    pub failed_simulations: usize,
    pub samples: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialRecord {
    pub surviving_k: usize,
    pub loglik_trace: Vec<f64>,
    pub wall_time: Option<f64>,
    pub simulator_calls: usize,
    pub failed_simulations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub round: usize,
    pub metric: String,
    pub value: f64,
    pub reference: String,
    pub seed: u64,
}

/// Everything needed to re-run and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub task: String,
    pub seed: u64,
    pub observed: String,
    pub observed_row: usize,
    pub config: SempleConfig,
    pub gamma: f64,
    pub deterministic: bool,
    pub total_simulations: usize,
    pub initial: InitialRecord,
    pub rounds: Vec<RoundRecord>,
    #[serde(default)]
    pub metrics: Vec<MetricRecord>,
    pub version: String,
}

impl RunManifest {
    /// Pretty JSON with keys sorted at every level.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&sorted(self)).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Round-trips through `serde_json::Value`, whose maps are ordered by key.
fn sorted<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("value serializes")
}

/// Header of the long-format metrics table.
pub const METRICS_HEADER: &str = "run_id,round,metric,value";

/// One row of the long-format table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub run_id: String,
    pub round: usize,
    pub metric: String,
    pub value: f64,
}

pub fn metric_rows_to_csv(rows: &[MetricRow], with_header: bool) -> String {
    let mut out = String::new();
    if with_header {
        out.push_str(METRICS_HEADER);
        out.push('\n');
    }
    for r in rows {
        write!(out, "{},{},{},", r.run_id, r.round, r.metric).unwrap();
        write_number(&mut out, r.value);
        out.push('\n');
    }
    out
}

pub fn metric_rows_from_csv(text: &str, origin: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_HEADER => {}
        _ => return Err(Error::format(origin, 1, format!("expected header `{METRICS_HEADER}`"))),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::format(origin, i + 1, "expected 4 fields"));
            }
            let bad = |what: &str| Error::format(origin, i + 1, format!("bad {what}"));
            Ok(MetricRow {
                run_id: f[0].to_string(),
                round: f[1].parse().map_err(|_| bad("round"))?,
                metric: f[2].to_string(),
                value: f[3].parse().map_err(|_| bad("value"))?,
            })
        })
        .collect()
}

/// Appends rows to `path`, writing the header when the file is new.
pub fn append_metric_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    use std::io::Write;
    let exists = path.exists() && std::fs::metadata(path)?.len() > 0;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(metric_rows_to_csv(rows, !exists).as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_csv_layout() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -2.0, 1e-300, 3.5]);
        let text = samples_to_csv(&m);
        assert_eq!(text, "theta_1,theta_2\n0.1,-2\n1e-300,3.5\n");
        assert_eq!(samples_from_csv(&text, "t").unwrap(), m);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = samples_from_csv("theta_1,theta_2\n1,2\n3\n", "f.csv").unwrap_err();
        assert!(matches!(err, Error::FileFormat { line: 3, .. }), "{err}");
        let err = samples_from_csv("theta_1,theta_3\n1,2\n", "f.csv").unwrap_err();
        assert!(matches!(err, Error::FileFormat { line: 1, .. }));
        let err = samples_from_csv("theta_1\nabc\n", "f.csv").unwrap_err();
        assert!(matches!(err, Error::FileFormat { line: 2, .. }));
    }

    #[test]
    fn observed_round_trip() {
        let obs = ObservedData {
            header: ObservedHeader {
                task: "ou".into(),
                theta_dim: 3,
                data_dim: 2,
                seed: 7,
                theta: vec![3.0, 1.0, 0.5],
                rows: 1,
                scaler: None,
            },
            ys: DMatrix::from_row_slice(1, 2, &[0.25, -1.0 / 3.0]),
        };
        let text = obs.to_text();
        assert!(text.starts_with("# {\"data_dim\":2,"));
        assert_eq!(ObservedData::parse(&text, "o").unwrap(), obs);
    }

    #[test]
    fn metric_rows_round_trip() {
        let rows = vec![
            MetricRow { run_id: "a".into(), round: 4, metric: "c2st".into(), value: 0.5625 },
            MetricRow { run_id: "a".into(), round: 4, metric: "w2".into(), value: 0.1 },
        ];
        let text = metric_rows_to_csv(&rows, true);
        assert_eq!(metric_rows_from_csv(&text, "m").unwrap(), rows);
    }

    proptest! {
        #[test]
        fn samples_round_trip_bit_exact(rows in 1usize..6, cols in 1usize..5, seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = crate::rng::rng_from_seed(seed);
            let m = DMatrix::from_fn(rows, cols, |_, _| {
                let e: i32 = rng.random_range(-300..300);
                rng.random_range(-1.0..1.0) * 10f64.powi(e)
            });
            let back = samples_from_csv(&samples_to_csv(&m), "p").unwrap();
            prop_assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
