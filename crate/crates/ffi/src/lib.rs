//! C ABI over `ergodic_cat`.
//!
//! Every function returns an [`EcStatus`]. On failure the message is kept in a
//! thread-local slot readable through [`ec_last_error_message`]. Complex
//! matrices cross the boundary as row-major interleaved `(re, im)` doubles,
//! `2 * dim * dim` values long.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ergodic_cat::ensemble::{ensemble_mean, second_moment_expectation};
use ergodic_cat::experiment::{run_experiment, ExperimentConfig};
use ergodic_cat::spectral::{diagonalize, level_spacing_ratio, EigenSystem, SectorPartition};
use ergodic_cat::{CMatrix, DensityMatrix, Error, HermitianOperator, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

/// Opaque eigendecomposition handle.
pub struct EcSpectrum {
    eig: EigenSystem,
}

/// Ensemble prediction for one pair of observables.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct EcMoment {
    pub mean_a: f64,
    pub mean_b: f64,
    pub second_moment: f64,
    pub connected: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn classify(e: &Error) -> EcStatus {
    match e {
        Error::Stage { source, .. } => classify(source),
        Error::Io { .. } => EcStatus::Io,
        Error::NoConvergence { .. } | Error::NumericalIntegrity(_) => EcStatus::Numerical,
        _ => EcStatus::InvalidArgument,
    }
}

struct Failure(EcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(classify(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            EcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside ergodic_cat".into());
            EcStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn read_matrix(p: *const f64, dim: usize, what: &str) -> Result<CMatrix, Failure> {
    if dim == 0 {
        return Err(Failure(EcStatus::InvalidArgument, format!("{what}: dimension is zero")));
    }
    let v = slice(p, 2 * dim * dim, what)?;
    Ok(CMatrix::from_fn(dim, dim, |r, c| {
        let k = 2 * (r * dim + c);
        C64::new(v[k], v[k + 1])
    }))
}

fn write_matrix(m: &CMatrix, out: &mut [f64]) {
    let dim = m.nrows();
    for r in 0..dim {
        for c in 0..dim {
            let k = 2 * (r * dim + c);
            out[k] = m[(r, c)].re;
            out[k + 1] = m[(r, c)].im;
        }
    }
}

unsafe fn partition(degeneracies: *const usize, n_sectors: usize, dim: usize) -> Result<SectorPartition, Failure> {
    let p = SectorPartition::from_degeneracies(slice(degeneracies, n_sectors, "degeneracies")?)?;
    if p.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: p.dim() }.into());
    }
    Ok(p)
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EcStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length including the NUL,
/// or 0 if there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ec_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n - 1) = 0;
            }
            bytes.len()
        }
    })
}

/// Diagonalize a Hermitian matrix. Free the handle with [`ec_spectrum_free`].
///
/// # Safety
/// `matrix` must hold `2 * dim * dim` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_spectrum_new(matrix: *const f64, dim: usize, out: *mut *mut EcSpectrum) -> EcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let op = HermitianOperator::new(read_matrix(matrix, dim, "matrix")?)?;
        let eig = diagonalize(&op)?;
        *out = Box::into_raw(Box::new(EcSpectrum { eig }));
        Ok(())
    })
}

/// # Safety
/// `spectrum` must come from [`ec_spectrum_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ec_spectrum_free(spectrum: *mut EcSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// # Safety
/// `spectrum` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ec_spectrum_dim(spectrum: *const EcSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.eig.dim())
}

/// Ascending eigenvalues into `out` (`dim` doubles).
///
/// # Safety
/// `spectrum` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ec_spectrum_energies(spectrum: *const EcSpectrum, out: *mut f64, len: usize) -> EcStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let d = s.eig.dim();
        if len < d {
            return Err(Failure(EcStatus::InvalidArgument, format!("buffer holds {len} values, need {d}")));
        }
        slice_mut(out, d, "out")?.copy_from_slice(&s.eig.energies);
        Ok(())
    })
}

/// Eigenvector `k` as `2 * dim` interleaved doubles.
///
/// # Safety
/// `spectrum` must be a live handle; `out` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ec_spectrum_eigenvector(
    spectrum: *const EcSpectrum,
    k: usize,
    out: *mut f64,
    len: usize,
) -> EcStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let d = s.eig.dim();
        if k >= d {
            return Err(Failure(EcStatus::InvalidArgument, format!("eigenvector {k} out of range for dim {d}")));
        }
        if len < 2 * d {
            return Err(Failure(EcStatus::InvalidArgument, format!("buffer holds {len} values, need {}", 2 * d)));
        }
        let out = slice_mut(out, 2 * d, "out")?;
        for (i, z) in s.eig.vectors.column(k).iter().enumerate() {
            out[2 * i] = z.re;
            out[2 * i + 1] = z.im;
        }
        Ok(())
    })
}

/// Mean adjacent-gap ratio of a sorted spectrum.
///
/// # Safety
/// `energies` valid for `n` doubles; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_level_spacing_ratio(energies: *const f64, n: usize, out: *mut f64) -> EcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = level_spacing_ratio(slice(energies, n, "energies")?)?.mean_ratio;
        Ok(())
    })
}

/// Ensemble mean of `rho` for contiguous sectors of sizes `degeneracies`,
/// written to `out` (`2 * dim * dim` doubles). All matrices are in the
/// energy eigenbasis.
///
/// # Safety
/// Pointer lengths as described above.
#[no_mangle]
pub unsafe extern "C" fn ec_ensemble_mean(
    rho: *const f64,
    dim: usize,
    degeneracies: *const usize,
    n_sectors: usize,
    out: *mut f64,
) -> EcStatus {
    guard(|| {
        let rho = DensityMatrix::new(read_matrix(rho, dim, "rho")?)?;
        let p = partition(degeneracies, n_sectors, dim)?;
        let mean = ensemble_mean(&rho, &p)?;
        write_matrix(mean.entries(), slice_mut(out, 2 * dim * dim, "out")?);
        Ok(())
    })
}

/// First and second ensemble moments of observables `a`, `b`.
///
/// # Safety
/// `rho`, `a`, `b` hold `2 * dim * dim` doubles; `degeneracies` holds
/// `n_sectors` entries; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ec_second_moment(
    rho: *const f64,
    a: *const f64,
    b: *const f64,
    dim: usize,
    degeneracies: *const usize,
    n_sectors: usize,
    out: *mut EcMoment,
) -> EcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rho = DensityMatrix::new(read_matrix(rho, dim, "rho")?)?;
        let a = HermitianOperator::new(read_matrix(a, dim, "a")?)?;
        let b = HermitianOperator::new(read_matrix(b, dim, "b")?)?;
        let p = partition(degeneracies, n_sectors, dim)?;
        let m = second_moment_expectation(&rho, &p, &a, &b)?;
        *out = EcMoment { mean_a: m.mean_a, mean_b: m.mean_b, second_moment: m.second_moment, connected: m.connected };
        Ok(())
    })
}

/// Run the experiment described by `config_json`, writing outputs to
/// `out_dir`. On success `*report_json` receives the report, to be released
/// with [`ec_string_free`].
///
/// # Safety
/// `config_json`, `out_dir` are NUL-terminated strings; `report_json` is a
/// valid pointer or null.
#[no_mangle]
pub unsafe extern "C" fn ec_run_experiment(
    config_json: *const c_char,
    out_dir: *const c_char,
    report_json: *mut *mut c_char,
) -> EcStatus {
    guard(|| {
        let config = ExperimentConfig::from_json(c_str(config_json, "config_json")?)?;
        let dir = c_str(out_dir, "out_dir")?;
        let report = run_experiment(&config, Path::new(dir))?;
        if !report_json.is_null() {
            let text = serde_json::to_string(&report).map_err(Error::from)?;
            *report_json = CString::new(text).map_err(|e| Failure(EcStatus::Io, e.to_string()))?.into_raw();
        }
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ec_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
