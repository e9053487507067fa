//! C ABI for the pnmu library.
//!
//! Matrices and factorizations cross the boundary as opaque handles that the
//! caller releases with the matching `_free` function. Every fallible call
//! returns a [`PnmuStatus`]; on failure [`pnmu_last_error_message`] describes
//! the most recent error on the calling thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pnmu::experiments::{run_algorithm, Algorithm, RunSettings};
use pnmu::metrics;
use pnmu::synthetic::generate;
use pnmu::{DenseMatrix, FactorPair, GridShape, NeighborMatrix, PnmuError, SyntheticSpec};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmuStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    Parameter = 3,
    NonFinite = 4,
    UndefinedMetric = 5,
    Parse = 6,
    Io = 7,
    Panic = 8,
}

/// Algorithm selector for [`pnmu_factorize`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmuAlgorithm {
    Nmf = 0,
    Snmf = 1,
    Nmu = 2,
    Lnmu = 3,
    Snmu = 4,
    Pnmu = 5,
}

impl From<PnmuAlgorithm> for Algorithm {
    fn from(a: PnmuAlgorithm) -> Self {
        match a {
            PnmuAlgorithm::Nmf => Algorithm::Nmf,
            PnmuAlgorithm::Snmf => Algorithm::Snmf,
            PnmuAlgorithm::Nmu => Algorithm::Nmu,
            PnmuAlgorithm::Lnmu => Algorithm::Lnmu,
            PnmuAlgorithm::Snmu => Algorithm::Snmu,
            PnmuAlgorithm::Pnmu => Algorithm::Pnmu,
        }
    }
}

/// Solver parameters. Obtain defaults from [`pnmu_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnmuOptions {
    pub phi_prime: f64,
    pub mu_prime: f64,
    pub epsilon: f64,
    pub maxiter: usize,
    pub inner_iter: usize,
    pub init_iter: usize,
    pub seed: u64,
    /// Percentage of zeros for SNMF; negative means unset.
    pub target_sparsity: f64,
}

impl PnmuOptions {
    fn settings(&self) -> RunSettings {
        let mut s = RunSettings::default();
        s.pnmu.phi_prime = self.phi_prime;
        s.pnmu.mu_prime = self.mu_prime;
        s.pnmu.epsilon = self.epsilon;
        s.pnmu.maxiter = self.maxiter;
        s.pnmu.inner_iter = self.inner_iter;
        s.pnmu.init_iter = self.init_iter;
        s.pnmu.seed = self.seed;
        s.target_sparsity = (self.target_sparsity >= 0.0).then_some(self.target_sparsity);
        s
    }
}

/// Opaque dense row-major matrix.
pub struct PnmuMatrix(DenseMatrix);

/// Opaque factor pair `U` (n×r), `V` (r×m).
pub struct PnmuFactors(FactorPair);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &PnmuError) -> PnmuStatus {
    match e {
        PnmuError::Shape(_) => PnmuStatus::Shape,
        PnmuError::Parameter(_) => PnmuStatus::Parameter,
        PnmuError::NonFinite { .. } => PnmuStatus::NonFinite,
        PnmuError::UndefinedMetric(_) => PnmuStatus::UndefinedMetric,
        PnmuError::Parse { .. } => PnmuStatus::Parse,
        PnmuError::Io { .. } => PnmuStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Lib(PnmuError),
}

impl From<PnmuError> for Failure {
    fn from(e: PnmuError) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PnmuStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PnmuStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            PnmuStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            PnmuStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn store<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn check_out<T>(out: *mut *mut T, what: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pnmu_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn pnmu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Defaults tuned for the synthetic benchmark.
#[no_mangle]
pub extern "C" fn pnmu_options_default() -> PnmuOptions {
    let c = pnmu::PnmuConfig::default();
    PnmuOptions {
        phi_prime: c.phi_prime,
        mu_prime: c.mu_prime,
        epsilon: c.epsilon,
        maxiter: c.maxiter,
        inner_iter: c.inner_iter,
        init_iter: c.init_iter,
        seed: c.seed,
        target_sparsity: -1.0,
    }
}

/// Copies `n_rows * n_cols` row-major values into a new matrix.
#[no_mangle]
pub unsafe extern "C" fn pnmu_matrix_new(
    n_rows: usize,
    n_cols: usize,
    data: *const f64,
    out: *mut *mut PnmuMatrix,
) -> PnmuStatus {
    guard(|| {
        check_out(out, "out")?;
        if data.is_null() {
            return Err(Failure::Null("data"));
        }
        let len = n_rows
            .checked_mul(n_cols)
            .ok_or_else(|| PnmuError::Shape("matrix size overflows".into()))?;
        let values = std::slice::from_raw_parts(data, len).to_vec();
        store(
            out,
            PnmuMatrix(DenseMatrix::from_vec(n_rows, n_cols, values)?),
        );
        Ok(())
    })
}

/// Reads a headerless numeric CSV file.
#[no_mangle]
pub unsafe extern "C" fn pnmu_matrix_read_csv(
    path: *const c_char,
    out: *mut *mut PnmuMatrix,
) -> PnmuStatus {
    guard(|| {
        check_out(out, "out")?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| PnmuError::Parameter("path is not valid UTF-8".into()))?;
        store(out, PnmuMatrix(pnmu::io::read_matrix_csv(Path::new(path))?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pnmu_matrix_free(m: *mut PnmuMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of rows, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pnmu_matrix_rows(m: *const PnmuMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_rows())
}

/// Number of columns, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn pnmu_matrix_cols(m: *const PnmuMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.n_cols())
}

/// Copies the row-major entries into `buf`, which must hold `len` ≥ rows·cols values.
#[no_mangle]
pub unsafe extern "C" fn pnmu_matrix_copy_data(
    m: *const PnmuMatrix,
    buf: *mut f64,
    len: usize,
) -> PnmuStatus {
    guard(|| {
        let m = deref(m, "matrix")?;
        if buf.is_null() {
            return Err(Failure::Null("buf"));
        }
        let (r, c) = m.0.shape();
        if len < r * c {
            return Err(
                PnmuError::Shape(format!("buffer of {len} values for a {r}x{c} matrix")).into(),
            );
        }
        for (i, row) in (0..r).map(|i| (i, m.0.row(i))) {
            ptr::copy_nonoverlapping(row.as_ptr(), buf.add(i * c), c);
        }
        Ok(())
    })
}

/// Factorizes `m` (pixels × bands) of an `height × width` image with `rank` factors.
#[no_mangle]
pub unsafe extern "C" fn pnmu_factorize(
    m: *const PnmuMatrix,
    height: usize,
    width: usize,
    rank: usize,
    algorithm: PnmuAlgorithm,
    options: *const PnmuOptions,
    out: *mut *mut PnmuFactors,
) -> PnmuStatus {
    guard(|| {
        check_out(out, "out")?;
        let m = deref(m, "matrix")?;
        let options = deref(options, "options")?;
        let settings = options.settings();
        settings.pnmu.validate()?;
        let grid = GridShape::new(height, width)?;
        let factors = run_algorithm(algorithm.into(), &m.0, grid, rank, &settings)?;
        store(out, PnmuFactors(factors));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn pnmu_factors_free(f: *mut PnmuFactors) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Copy of the abundance matrix `U` as a new matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pnmu_factors_u(
    f: *const PnmuFactors,
    out: *mut *mut PnmuMatrix,
) -> PnmuStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = deref(f, "factors")?;
        store(out, PnmuMatrix(f.0.u().clone()));
        Ok(())
    })
}

/// Copy of the signature matrix `V` as a new matrix handle.
#[no_mangle]
pub unsafe extern "C" fn pnmu_factors_v(
    f: *const PnmuFactors,
    out: *mut *mut PnmuMatrix,
) -> PnmuStatus {
    guard(|| {
        check_out(out, "out")?;
        let f = deref(f, "factors")?;
        store(out, PnmuMatrix(f.0.v().clone()));
        Ok(())
    })
}

/// `100 ‖M − UV‖_F / ‖M‖_F`.
#[no_mangle]
pub unsafe extern "C" fn pnmu_relative_error(
    m: *const PnmuMatrix,
    f: *const PnmuFactors,
    out: *mut f64,
) -> PnmuStatus {
    guard(|| {
        let (m, f) = (deref(m, "matrix")?, deref(f, "factors")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = metrics::relative_error(&m.0, &f.0)?;
        Ok(())
    })
}

/// Percentage of zero entries of `U`.
#[no_mangle]
pub unsafe extern "C" fn pnmu_sparsity(f: *const PnmuFactors, out: *mut f64) -> PnmuStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = metrics::sparsity(f.0.u());
        Ok(())
    })
}

/// Average anisotropic total variation of the max-normalized columns of `U`.
#[no_mangle]
pub unsafe extern "C" fn pnmu_spatial_coherence(
    f: *const PnmuFactors,
    height: usize,
    width: usize,
    out: *mut f64,
) -> PnmuStatus {
    guard(|| {
        let f = deref(f, "factors")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let nm = NeighborMatrix::build(GridShape::new(height, width)?);
        *out = metrics::spatial_coherence(&nm, f.0.u())?;
        Ok(())
    })
}

/// Match score in percent between a ground-truth and an estimated abundance matrix.
#[no_mangle]
pub unsafe extern "C" fn pnmu_match_score(
    u_true: *const PnmuMatrix,
    u_est: *const PnmuMatrix,
    out: *mut f64,
) -> PnmuStatus {
    guard(|| {
        let (t, e) = (deref(u_true, "u_true")?, deref(u_est, "u_est")?);
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = metrics::match_score(&t.0, &e.0)?;
        Ok(())
    })
}

/// Generates the 10×14-pixel, 20-band synthetic scene. Any output pointer may be null.
#[no_mangle]
pub unsafe extern "C" fn pnmu_synthetic_generate(
    g: f64,
    p: f64,
    seed: u64,
    m_out: *mut *mut PnmuMatrix,
    u_true_out: *mut *mut PnmuMatrix,
    v_true_out: *mut *mut PnmuMatrix,
) -> PnmuStatus {
    guard(|| {
        let inst = generate(&SyntheticSpec::with_noise(g, p, seed))?;
        if !m_out.is_null() {
            store(m_out, PnmuMatrix(inst.m_noisy));
        }
        if !u_true_out.is_null() {
            store(u_true_out, PnmuMatrix(inst.u_true));
        }
        if !v_true_out.is_null() {
            store(v_true_out, PnmuMatrix(inst.v_true));
        }
        Ok(())
    })
}
