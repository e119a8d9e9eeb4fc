//! Dense complex operators shared by every stage of the pipeline.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Absolute tolerance of the Hermiticity contract.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Trace tolerance of a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue a density matrix may have.
pub const PSD_TOL: f64 = 1e-10;
/// Allowed deviation of a state vector norm from one.
pub const NORM_TOL: f64 = 1e-10;

/// Largest `|m[a,b] - conj(m[b,a])|`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for b in 0..n {
        for a in b..n {
            worst = worst.max((m[(a, b)] - m[(b, a)].conj()).norm());
        }
    }
    worst
}

/// `(m + m†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    let n = m.nrows();
    CMatrix::from_fn(n, n, |a, b| (m[(a, b)] + m[(b, a)].conj()) * 0.5)
}

fn split(m: &CMatrix) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let re = m.map(|z| z.re);
    let im = if m.iter().any(|z| z.im != 0.0) { Some(m.map(|z| z.im)) } else { None };
    (re, im)
}

/// Complex matrix product routed through real GEMM; purely real factors skip
/// the imaginary work entirely.
pub fn cgemm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.nrows(), "cgemm: inner dimensions differ");
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let mut re = &ar * &br;
    let mut im = DMatrix::<f64>::zeros(a.nrows(), b.ncols());
    if let Some(ai) = &ai {
        im += ai * &br;
        if let Some(bi) = &bi {
            re -= ai * bi;
        }
    }
    if let Some(bi) = &bi {
        im += &ar * bi;
    }
    CMatrix::from_fn(a.nrows(), b.ncols(), |r, c| C64::new(re[(r, c)], im[(r, c)]))
}

/// `v† m v` for a column-unitary `v`, symmetrized so the result is exactly Hermitian.
pub fn rotate_into(v: &CMatrix, m: &CMatrix) -> CMatrix {
    let vd = v.adjoint();
    hermitian_part(&cgemm(&cgemm(&vd, m), v))
}

/// Dense Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), got: entries.ncols() });
        }
        let deviation = hermiticity_defect(&entries);
        if deviation > HERMITICITY_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Self { entries })
    }

    /// Takes the Hermitian part of `m`; used after basis changes whose rounding
    /// leaves a tiny anti-Hermitian residue.
    pub fn from_hermitian_part(m: &CMatrix) -> Self {
        Self { entries: hermitian_part(m) }
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: CMatrix::identity(dim, dim) }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        Self { entries: CMatrix::from_fn(n, n, |a, b| if a == b { C64::new(values[a], 0.0) } else { C64::new(0.0, 0.0) }) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|z| z.im == 0.0)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// `v† self v` for the column-unitary `v` (eigenvectors as columns).
    pub fn in_basis(&self, v: &CMatrix) -> Self {
        Self { entries: rotate_into(v, &self.entries) }
    }

    /// Real part of `tr(rho self)`.
    pub fn expectation(&self, rho: &DensityMatrix) -> f64 {
        trace_product(rho.entries(), &self.entries).re
    }
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Unit-trace positive semidefinite Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity. Positivity needs a
    /// full eigendecomposition, so prefer the pure/mixture constructors for
    /// large states.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let op = HermitianOperator::new(entries)?;
        let entries = op.into_entries();
        check_trace(&entries, TRACE_TOL)?;
        let min_eig = crate::spectral::eigenvalues(&HermitianOperator { entries: entries.clone() })?
            .first()
            .copied()
            .unwrap_or(0.0);
        if min_eig < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
        }
        Ok(Self { entries })
    }

    /// `|psi><psi|` for a unit-norm `psi`.
    pub fn pure(psi: &CVector) -> Result<Self> {
        check_normalized(psi)?;
        Ok(Self { entries: psi * psi.adjoint() })
    }

    /// `Σ w_k |psi_k><psi_k|` with non-negative weights summing to one.
    pub fn mixture(states: &[(f64, &CVector)]) -> Result<Self> {
        let dim = states.first().map(|(_, v)| v.len()).ok_or_else(|| Error::InvalidState("empty mixture".into()))?;
        let mut entries = CMatrix::zeros(dim, dim);
        let mut total = 0.0;
        for (w, psi) in states {
            if psi.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: psi.len() });
            }
            if *w < 0.0 {
                return Err(Error::InvalidState(format!("negative mixture weight {w}")));
            }
            check_normalized(psi)?;
            entries += (*psi * psi.adjoint()) * C64::new(*w, 0.0);
            total += w;
        }
        if (total - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("mixture weights sum to {total}")));
        }
        Ok(Self { entries })
    }

    /// Skips the positivity check; callers guarantee the matrix came from a
    /// unitary conjugation or a convex combination of valid states.
    pub(crate) fn from_trusted(entries: CMatrix) -> Self {
        Self { entries: hermitian_part(&entries) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// `v† rho v`.
    pub fn in_basis(&self, v: &CMatrix) -> Self {
        Self { entries: rotate_into(v, &self.entries) }
    }
}

pub(crate) fn check_trace(m: &CMatrix, tol: f64) -> Result<()> {
    let tr = m.trace();
    if (tr - C64::new(1.0, 0.0)).norm() > tol {
        return Err(Error::InvalidState(format!("trace {tr} deviates from 1")));
    }
    Ok(())
}

pub(crate) fn check_normalized(v: &CVector) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}
