//! Sample-based comparison of posterior approximations.

mod assignment;
mod c2st;
mod wasserstein;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use assignment::solve_assignment;
pub use c2st::{c2st, C2stOptions};
pub use wasserstein::{wasserstein2, wasserstein2_exact, W2Options};

/// Two samples over the same space, one row per draw.
#[derive(Debug, Clone, Copy)]
pub struct SamplePair<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
}

impl<'a> SamplePair<'a> {
    pub fn new(a: &'a DMatrix<f64>, b: &'a DMatrix<f64>) -> Result<Self> {
        if a.ncols() != b.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "samples have {} and {} columns",
                a.ncols(),
                b.ncols()
            )));
        }
        if a.nrows() == 0 || b.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::TooFewSamples("empty sample".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample contains a non-finite value".into()));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }
}
