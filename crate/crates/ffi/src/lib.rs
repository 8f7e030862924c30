//! C ABI for the `semple` crate.
//!
//! Every fallible function returns a [`SempleStatus`]; on failure the message
//! is available from [`semple_last_error_message`] on the same thread.
//! Matrices cross the boundary as row-major `double` buffers. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use semple::gllim::{self, CovarianceConstraint, EmOptions, GllimForwardParams, GllimInverseParams, TrainingSet};
use semple::metrics::{self, C2stOptions, SamplePair, W2Options};
use semple::rng::{purpose, substream};
use semple::sequential::run_semple;
use semple::tasks::{self, LotkaVolterraTask, LvScaler, Task};
use semple::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SempleStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Numerical = 4,
    UnknownTask = 5,
    MissingExactLikelihood = 6,
    Simulation = 7,
    Format = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// A fitted GLLiM model, kept in both parameterizations.
pub struct SempleGllim {
    inverse: GllimInverseParams,
    forward: GllimForwardParams,
}

/// A simulator bundle.
pub struct SempleTask {
    task: Box<dyn Task>,
}

/// A sample matrix returned by a run.
pub struct SempleSamples {
    data: DMatrix<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SempleStatus {
    match e {
        Error::DimensionMismatch(_) => SempleStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::InvalidInit | Error::TooFewSamples(_) | Error::Config { .. } => {
            SempleStatus::InvalidArgument
        }
        Error::UnknownTask(_) => SempleStatus::UnknownTask,
        Error::MissingExactLikelihood(_) => SempleStatus::MissingExactLikelihood,
        Error::Simulation(_) | Error::SimulatorFailure { .. } => SempleStatus::Simulation,
        Error::FileFormat { .. } | Error::Json(_) => SempleStatus::Format,
        Error::Io(_) => SempleStatus::Io,
        Error::Round { source, .. } => status_of(source),
        _ => SempleStatus::Numerical,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SempleStatus, String)>) -> SempleStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SempleStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SempleStatus::Panic
        }
    }
}

fn lib(e: Error) -> (SempleStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (SempleStatus, String) {
    (SempleStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> (SempleStatus, String) {
    (SempleStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SempleStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (SempleStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, (SempleStatus, String)> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| invalid(format!("`{what}` is too large")))?;
    Ok(DMatrix::from_row_slice(rows, cols, slice_arg(p, len, what)?))
}

unsafe fn write_matrix(m: &DMatrix<f64>, out: *mut f64, out_len: usize) -> Result<(), (SempleStatus, String)> {
    let need = m.nrows() * m.ncols();
    if out_len < need {
        return Err((
            SempleStatus::BufferTooSmall,
            format!("output buffer holds {out_len} values, {need} needed"),
        ));
    }
    if need > 0 && out.is_null() {
        return Err(null("out"));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for (i, row) in m.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            dst[i * m.ncols() + j] = *v;
        }
    }
    Ok(())
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), (SempleStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

/// Message of the last failure on this thread. The pointer stays valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn semple_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn semple_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn semple_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of free parameters of a GLLiM model; 0 if any size is 0.
#[no_mangle]
pub extern "C" fn semple_param_count(k: usize, d: usize, l: usize, isotropic: c_int) -> usize {
    if k == 0 || d == 0 || l == 0 {
        return 0;
    }
    let c = if isotropic != 0 {
        CovarianceConstraint::Isotropic
    } else {
        CovarianceConstraint::Full
    };
    gllim::param_count(k, d, l, c)
}

// ---- tasks ----

/// Looks a task up by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semple_task_new(name: *const c_char, out: *mut *mut SempleTask) -> SempleStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let task = tasks::by_name(name).map_err(lib)?;
        put(out, Box::into_raw(Box::new(SempleTask { task })))
    })
}

/// Lotka-Volterra with the summary scaler given as CSV text.
///
/// # Safety
/// `scaler_csv` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn semple_task_new_lotka_volterra(
    scaler_csv: *const c_char,
    out: *mut *mut SempleTask,
) -> SempleStatus {
    guard(|| {
        let text = str_arg(scaler_csv, "scaler_csv")?;
        let scaler = LvScaler::from_csv(text, "scaler").map_err(lib)?;
        let task: Box<dyn Task> = Box::new(LotkaVolterraTask::with_scaler(scaler));
        put(out, Box::into_raw(Box::new(SempleTask { task })))
    })
}

/// # Safety
/// `task` must come from a `semple_task_new*` call and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn semple_task_free(task: *mut SempleTask) {
    if !task.is_null() {
        drop(Box::from_raw(task));
    }
}

/// Parameter and data dimensions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn semple_task_dims(task: *const SempleTask, l: *mut usize, d: *mut usize) -> SempleStatus {
    guard(|| {
        let t = task.as_ref().ok_or_else(|| null("task"))?;
        put(l, t.task.param_dim())?;
        put(d, t.task.data_dim())
    })
}

/// Writes `n` prior draws (`n x l`, row-major) into `out`.
///
/// # Safety
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semple_task_sample_prior(
    task: *const SempleTask,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> SempleStatus {
    guard(|| {
        let t = task.as_ref().ok_or_else(|| null("task"))?;
        let draws = tasks::sample_prior_batch(t.task.as_ref(), n, seed, &[purpose::PRIOR]);
        write_matrix(&draws, out, out_len)
    })
}

/// Runs the simulator `n` times at `theta`; writes `n x d` values.
///
/// # Safety
/// `theta` must hold `l` doubles and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semple_task_simulate(
    task: *const SempleTask,
    theta: *const f64,
    l: usize,
    n: usize,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> SempleStatus {
    guard(|| {
        let t = task.as_ref().ok_or_else(|| null("task"))?;
        let theta = slice_arg(theta, l, "theta")?;
        if l != t.task.param_dim() {
            return Err((SempleStatus::DimensionMismatch, format!("theta has length {l}")));
        }
        let ys = tasks::simulate_observed(t.task.as_ref(), theta, n, seed).map_err(lib)?;
        write_matrix(&ys, out, out_len)
    })
}

/// Exact log-likelihood `log p(y | theta)`.
///
/// # Safety
/// `y` must hold `d` doubles, `theta` `l` doubles, `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn semple_task_loglik(
    task: *const SempleTask,
    y: *const f64,
    d: usize,
    theta: *const f64,
    l: usize,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let t = task.as_ref().ok_or_else(|| null("task"))?;
        if d != t.task.data_dim() || l != t.task.param_dim() {
            return Err((SempleStatus::DimensionMismatch, format!("got d={d}, l={l}")));
        }
        let (y, theta) = (slice_arg(y, d, "y")?, slice_arg(theta, l, "theta")?);
        let v = t
            .task
            .exact_loglik(y, theta)
            .ok_or_else(|| lib(Error::MissingExactLikelihood(t.task.name().to_string())))?;
        put(out, v)
    })
}

/// Runs the sequential algorithm on `y_o` and returns the final-round draws.
/// `config` is key = value text; pass null for the defaults.
///
/// # Safety
/// `y_o` must hold `d` doubles; `config` must be null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn semple_run(
    task: *const SempleTask,
    y_o: *const f64,
    d: usize,
    config: *const c_char,
    out: *mut *mut SempleSamples,
) -> SempleStatus {
    guard(|| {
        let t = task.as_ref().ok_or_else(|| null("task"))?;
        let y = slice_arg(y_o, d, "y_o")?;
        let cfg = if config.is_null() {
            Default::default()
        } else {
            semple::config::parse(str_arg(config, "config")?).map_err(lib)?
        };
        let run = run_semple(t.task.as_ref(), y, &cfg).map_err(lib)?;
        let data = run.final_round().theta_samples.clone();
        put(out, Box::into_raw(Box::new(SempleSamples { data })))
    })
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn semple_samples_shape(s: *const SempleSamples, rows: *mut usize, cols: *mut usize) -> SempleStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("samples"))?;
        put(rows, s.data.nrows())?;
        put(cols, s.data.ncols())
    })
}

/// Copies the samples, row-major, into `out`.
///
/// # Safety
/// `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn semple_samples_copy(s: *const SempleSamples, out: *mut f64, out_len: usize) -> SempleStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("samples"))?;
        write_matrix(&s.data, out, out_len)
    })
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn semple_samples_free(s: *mut SempleSamples) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

// ---- GLLiM ----

fn wrap(inverse: GllimInverseParams) -> Result<*mut SempleGllim, (SempleStatus, String)> {
    let forward = inverse.to_forward().map_err(lib)?;
    Ok(Box::into_raw(Box::new(SempleGllim { inverse, forward })))
}

/// Fits a `k`-component model by EM on `n` pairs. `isotropic` selects the
/// noise covariance structure.
///
/// # Safety
/// `thetas` must hold `n * l` doubles and `ys` `n * d` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn semple_gllim_fit(
    thetas: *const f64,
    ys: *const f64,
    n: usize,
    l: usize,
    d: usize,
    k: usize,
    isotropic: c_int,
    seed: u64,
    out: *mut *mut SempleGllim,
) -> SempleStatus {
    guard(|| {
        let data = TrainingSet::new(matrix_arg(thetas, n, l, "thetas")?, matrix_arg(ys, n, d, "ys")?).map_err(lib)?;
        let c = if isotropic != 0 {
            CovarianceConstraint::Isotropic
        } else {
            CovarianceConstraint::Full
        };
        let opts = EmOptions {
            seed,
            ..Default::default()
        };
        let fit = gllim::fit_em(&data, k, c, &opts).map_err(lib)?;
        put(out, wrap(fit.params)?)
    })
}

/// Parses a model in the text format written by [`semple_gllim_to_text`].
///
/// # Safety
/// `text` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_from_text(text: *const c_char, out: *mut *mut SempleGllim) -> SempleStatus {
    guard(|| {
        let inv = gllim::format::parse_inverse(str_arg(text, "text")?).map_err(lib)?;
        put(out, wrap(inv)?)
    })
}

/// Serializes the model. Release the string with [`semple_string_free`].
///
/// # Safety
/// `g` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_to_text(g: *const SempleGllim, out: *mut *mut c_char) -> SempleStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("gllim"))?;
        let text = CString::new(gllim::format::inverse_to_text(&g.inverse)).map_err(|e| invalid(e.to_string()))?;
        put(out, text.into_raw())
    })
}

/// # Safety
/// `g` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_free(g: *mut SempleGllim) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of components, parameter and data dimensions.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_shape(
    g: *const SempleGllim,
    k: *mut usize,
    l: *mut usize,
    d: *mut usize,
) -> SempleStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("gllim"))?;
        put(k, g.inverse.k())?;
        put(l, g.inverse.param_dim())?;
        put(d, g.inverse.data_dim())
    })
}

/// Drops components with weight below `threshold` and renormalizes, in place.
///
/// # Safety
/// `g` must be valid.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_prune(g: *mut SempleGllim, threshold: f64) -> SempleStatus {
    guard(|| {
        let g = g.as_mut().ok_or_else(|| null("gllim"))?;
        let inverse = gllim::prune_components(&g.inverse, threshold).map_err(lib)?;
        g.forward = inverse.to_forward().map_err(lib)?;
        g.inverse = inverse;
        Ok(())
    })
}

/// Surrogate log-likelihood `log q(y | theta)`.
///
/// # Safety
/// `y` must hold `d` doubles, `theta` `l` doubles.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_loglik(
    g: *const SempleGllim,
    y: *const f64,
    d: usize,
    theta: *const f64,
    l: usize,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("gllim"))?;
        let v = g
            .inverse
            .surrogate_loglik(slice_arg(y, d, "y")?, slice_arg(theta, l, "theta")?)
            .map_err(lib)?;
        put(out, v)
    })
}

/// Surrogate posterior log-density `log q(theta | y)`.
///
/// # Safety
/// `theta` must hold `l` doubles, `y` `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn semple_gllim_posterior_logpdf(
    g: *const SempleGllim,
    theta: *const f64,
    l: usize,
    y: *const f64,
    d: usize,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("gllim"))?;
        let v = g
            .forward
            .surrogate_posterior_logpdf(slice_arg(theta, l, "theta")?, slice_arg(y, d, "y")?)
            .map_err(lib)?;
        put(out, v)
    })
}

/// Draws `n` rows from the surrogate posterior at `y` with covariances
/// inflated by `gamma`.
///
/// # Safety
/// `y` must hold `d` doubles and `out` `out_len` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn semple_gllim_sample_posterior(
    g: *const SempleGllim,
    y: *const f64,
    d: usize,
    n: usize,
    gamma: f64,
    seed: u64,
    out: *mut f64,
    out_len: usize,
) -> SempleStatus {
    guard(|| {
        let g = g.as_ref().ok_or_else(|| null("gllim"))?;
        let mut rng = substream(seed, &[purpose::PROPOSE], 0);
        let draws = g
            .forward
            .sample_posterior(slice_arg(y, d, "y")?, n, gamma, &mut rng)
            .map_err(lib)?;
        write_matrix(&draws, out, out_len)
    })
}

// ---- metrics ----

/// Classifier two-sample test accuracy between `a` (`na x dim`) and `b`.
///
/// # Safety
/// `a` and `b` must hold `na * dim` and `nb * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn semple_c2st(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    dim: usize,
    seed: u64,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let (a, b) = (matrix_arg(a, na, dim, "a")?, matrix_arg(b, nb, dim, "b")?);
        let pair = SamplePair::new(&a, &b).map_err(lib)?;
        let v = metrics::c2st(pair, &C2stOptions { seed, ..Default::default() }).map_err(lib)?;
        put(out, v)
    })
}

/// Subsampled 2-Wasserstein distance. `subsample` and `repeats` of 0 pick
/// the defaults (500, capped by the sample sizes, and 5).
///
/// # Safety
/// `a` and `b` must hold `na * dim` and `nb * dim` doubles.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn semple_w2(
    a: *const f64,
    na: usize,
    b: *const f64,
    nb: usize,
    dim: usize,
    subsample: usize,
    repeats: usize,
    seed: u64,
    out: *mut f64,
) -> SempleStatus {
    guard(|| {
        let (a, b) = (matrix_arg(a, na, dim, "a")?, matrix_arg(b, nb, dim, "b")?);
        let pair = SamplePair::new(&a, &b).map_err(lib)?;
        let defaults = W2Options::default();
        let opts = W2Options {
            subsample: if subsample == 0 {
                defaults.subsample.min(na).min(nb)
            } else {
                subsample
            },
            repeats: if repeats == 0 { defaults.repeats } else { repeats },
            seed,
        };
        let v = metrics::wasserstein2(pair, &opts).map_err(lib)?;
        put(out, v)
    })
}
