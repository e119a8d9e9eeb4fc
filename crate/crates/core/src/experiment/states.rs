//! Product eigenstates of the cut chain and the two quench protocols built from them.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::operator::{check_normalized, CMatrix, CVector, DensityMatrix, C64};
use crate::spectral::{diagonalize, EigenSystem};
use crate::spin_chain::{build_basis, build_hamiltonian, ChainTerms, DisorderRealization, SpinBasis};

use super::config::Protocol;

/// One magnetization sector of a half chain.
#[derive(Clone, Debug)]
pub struct HalfSector {
    pub basis: SpinBasis,
    pub eig: EigenSystem,
}

/// Spectrum of an isolated run of sites, resolved by magnetization.
#[derive(Clone, Debug)]
pub struct HalfChainSpectrum {
    pub sites: Range<usize>,
    /// Indexed by number of up spins.
    pub sectors: Vec<HalfSector>,
}

/// Diagonalize the chain restricted to `sites` (open ends) in every
/// magnetization sector.
pub fn half_chain_spectrum(coupling: f64, disorder: &DisorderRealization, sites: Range<usize>) -> Result<HalfChainSpectrum> {
    let len = sites.len();
    if len == 0 {
        return Err(Error::Construction("empty half chain".into()));
    }
    let local = disorder.restrict(sites.clone())?;
    let mut sectors = Vec::with_capacity(len + 1);
    for n_up in 0..=len {
        let basis = build_basis(len, 2 * n_up as i32 - len as i32)?;
        let h = build_hamiltonian(&basis, coupling, &local, &ChainTerms::full(len))?;
        let eig = diagonalize(&h)?;
        sectors.push(HalfSector { basis, eig });
    }
    Ok(HalfChainSpectrum { sites, sectors })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeTarget {
    NearMin,
    NearMax,
}

/// Product `|E_L^a> ⊗ |E_R^b>` embedded in the full sector basis.
#[derive(Clone, Debug)]
pub struct ProductState {
    pub vector: CVector,
    /// `E_L^a + E_R^b`.
    pub energy: f64,
    /// `(n_up, eigen index)` in the left spectrum.
    pub left: (usize, usize),
    pub right: (usize, usize),
}

/// Among sector-compatible left/right eigenpairs, the product whose energy
/// sum is closest to the requested edge of `spectrum_bounds`. Ties go to the
/// smaller left index, then the smaller right index; left indices run over
/// the concatenated sector spectra in order of increasing magnetization.
pub fn find_product_eigenstates(
    left: &HalfChainSpectrum,
    right: &HalfChainSpectrum,
    basis: &SpinBasis,
    target: EdgeTarget,
    spectrum_bounds: (f64, f64),
) -> Result<ProductState> {
    if left.sites.start != 0 || left.sites.end != right.sites.start || right.sites.end != basis.sites() {
        return Err(Error::SectorMismatch(format!(
            "halves {:?} and {:?} do not tile a chain of {} sites",
            left.sites,
            right.sites,
            basis.sites()
        )));
    }
    let edge = match target {
        EdgeTarget::NearMin => spectrum_bounds.0,
        EdgeTarget::NearMax => spectrum_bounds.1,
    };
    let n_up = basis.n_up();
    let mut best: Option<(f64, (usize, usize), (usize, usize))> = None;
    for (nl, ls) in left.sectors.iter().enumerate() {
        if nl > n_up || n_up - nl >= right.sectors.len() {
            continue;
        }
        let nr = n_up - nl;
        let rs = &right.sectors[nr];
        for (a, ea) in ls.eig.energies.iter().enumerate() {
            for (b, eb) in rs.eig.energies.iter().enumerate() {
                let cost = (ea + eb - edge).abs();
                if best.is_none_or(|(c, _, _)| cost < c) {
                    best = Some((cost, (nl, a), (nr, b)));
                }
            }
        }
    }
    let (_, (nl, a), (nr, b)) =
        best.ok_or_else(|| Error::SectorMismatch(format!("no half-chain pair reaches {} up spins", n_up)))?;
    let ls = &left.sectors[nl];
    let rs = &right.sectors[nr];
    let shift = right.sites.start;
    let mut vector = CVector::zeros(basis.dim());
    for (x, &lcfg) in ls.basis.states().iter().enumerate() {
        let la = ls.eig.vectors[(x, a)];
        if la == C64::new(0.0, 0.0) {
            continue;
        }
        for (y, &rcfg) in rs.basis.states().iter().enumerate() {
            let idx = basis.index_of(lcfg | (rcfg << shift)).expect("product of sector states stays in sector");
            vector[idx] = la * rs.eig.vectors[(y, b)];
        }
    }
    let energy = ls.eig.energies[a] + rs.eig.energies[b];
    Ok(ProductState { vector, energy, left: (nl, a), right: (nr, b) })
}

/// Initial density matrix of a protocol, in whatever basis `phi1`, `phi2` are given.
pub fn prepare_protocol_state(phi1: &CVector, phi2: &CVector, protocol: Protocol) -> Result<DensityMatrix> {
    if phi1.len() != phi2.len() {
        return Err(Error::DimensionMismatch { expected: phi1.len(), got: phi2.len() });
    }
    check_normalized(phi1)?;
    check_normalized(phi2)?;
    match protocol {
        Protocol::Cat => {
            let sum = phi1 + phi2;
            let norm = sum.norm();
            if norm < 1e-12 {
                return Err(Error::DegenerateSuperposition);
            }
            DensityMatrix::pure(&(sum / C64::new(norm, 0.0)))
        }
        Protocol::Mixed => DensityMatrix::mixture(&[(0.5, phi1), (0.5, phi2)]),
    }
}

/// Reduced density matrix on the sites in `keep`, for a state expressed in
/// `basis`. Output is indexed by the kept bits, `2^|keep|` square.
pub fn reduced_density_matrix(rho: &DensityMatrix, basis: &SpinBasis, keep: Range<usize>) -> Result<CMatrix> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), got: rho.dim() });
    }
    if keep.end > basis.sites() {
        return Err(Error::OutOfRange(format!("sites {keep:?} outside chain of {}", basis.sites())));
    }
    let width = keep.len();
    let mask: u64 = ((1u64 << width) - 1) << keep.start;
    let sub = |cfg: u64| ((cfg & mask) >> keep.start) as usize;
    let mut out = CMatrix::zeros(1 << width, 1 << width);
    let m = rho.entries();
    for (a, &ca) in basis.states().iter().enumerate() {
        for (b, &cb) in basis.states().iter().enumerate() {
            if ca & !mask == cb & !mask {
                out[(sub(ca), sub(cb))] += m[(a, b)];
            }
        }
    }
    Ok(out)
}
