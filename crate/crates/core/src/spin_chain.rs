//! Open XXX chain with random longitudinal fields, restricted to a fixed
//! total-magnetization sector.
//!
//! Pauli convention throughout: `σ^z` has eigenvalues ±1 and each bond
//! contributes `J σ⃗_j·σ⃗_{j+1}`, which on two antiparallel spins is
//! `2 J (swap) - J`. Bit `j` of a configuration is site `j`, set bit = spin up.

use std::collections::HashMap;
use std::ops::Range;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::operator::{check_normalized, CMatrix, CVector, HermitianOperator, C64};

/// Basis of `L`-site configurations with fixed number of up spins, in
/// ascending integer order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinBasis {
    sites: usize,
    total_sz: i32,
    states: Vec<u64>,
    index_of: HashMap<u64, usize>,
}

/// Enumerate the sector of `sites` spins with `total_sz` = (#up - #down).
pub fn build_basis(sites: usize, total_sz: i32) -> Result<SpinBasis> {
    if sites == 0 || sites > 62 {
        return Err(Error::InvalidSector(format!("site count {sites} outside 1..=62")));
    }
    if total_sz.unsigned_abs() as usize > sites {
        return Err(Error::InvalidSector(format!("|total_sz| = {} exceeds L = {sites}", total_sz.abs())));
    }
    if (sites as i64 + total_sz as i64) % 2 != 0 {
        return Err(Error::InvalidSector(format!("L = {sites} and total_sz = {total_sz} have different parity")));
    }
    let n_up = ((sites as i64 + total_sz as i64) / 2) as u32;
    let states: Vec<u64> = (0u64..(1u64 << sites)).filter(|s| s.count_ones() == n_up).collect();
    let index_of = states.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Ok(SpinBasis { sites, total_sz, states, index_of })
}

impl SpinBasis {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn total_sz(&self) -> i32 {
        self.total_sz
    }

    pub fn n_up(&self) -> usize {
        ((self.sites as i32 + self.total_sz) / 2) as usize
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, index: usize) -> u64 {
        self.states[index]
    }

    pub fn index_of(&self, config: u64) -> Option<usize> {
        self.index_of.get(&config).copied()
    }
}

/// One draw of the local fields `h_j ∈ [-h, h]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderRealization {
    h_fields: Vec<f64>,
    seed: u64,
    h: f64,
}

impl DisorderRealization {
    /// Fields drawn uniformly on `[-h, h]` from a ChaCha8 stream seeded with `seed`.
    pub fn sample(sites: usize, h: f64, seed: u64) -> Result<Self> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("field bound h = {h} must be finite and >= 0")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-h, h).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let h_fields = (0..sites).map(|_| dist.sample(&mut rng)).collect();
        Ok(Self { h_fields, seed, h })
    }

    pub fn from_fields(h_fields: Vec<f64>, h: f64) -> Result<Self> {
        if let Some(bad) = h_fields.iter().find(|x| !(x.abs() <= h)) {
            return Err(Error::InvalidArgument(format!("field {bad} outside [-{h}, {h}]")));
        }
        Ok(Self { h_fields, seed: 0, h })
    }

    /// Fields on a contiguous run of sites, re-indexed from zero.
    pub fn restrict(&self, sites: Range<usize>) -> Result<Self> {
        if sites.end > self.h_fields.len() || sites.start > sites.end {
            return Err(Error::Construction(format!("site range {sites:?} outside chain of {}", self.h_fields.len())));
        }
        Ok(Self { h_fields: self.h_fields[sites].to_vec(), seed: self.seed, h: self.h })
    }

    pub fn fields(&self) -> &[f64] {
        &self.h_fields
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bound(&self) -> f64 {
        self.h
    }
}

/// Which bonds and which field sites enter a Hamiltonian. Bond `j` couples
/// sites `j` and `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainTerms {
    pub bonds: Range<usize>,
    pub field_sites: Range<usize>,
}

impl ChainTerms {
    /// Every bond and every field of an `sites`-site open chain.
    pub fn full(sites: usize) -> Self {
        Self { bonds: 0..sites.saturating_sub(1), field_sites: 0..sites }
    }

    /// Left half of an even chain, cut between `L/2 - 1` and `L/2`.
    pub fn left(sites: usize) -> Result<Self> {
        let half = half_of(sites)?;
        Ok(Self { bonds: 0..half - 1, field_sites: 0..half })
    }

    /// Right half of an even chain.
    pub fn right(sites: usize) -> Result<Self> {
        let half = half_of(sites)?;
        Ok(Self { bonds: half..sites - 1, field_sites: half..sites })
    }
}

fn half_of(sites: usize) -> Result<usize> {
    if sites < 2 || sites % 2 != 0 {
        return Err(Error::Construction(format!("split Hamiltonian needs an even chain, got L = {sites}")));
    }
    Ok(sites / 2)
}

/// `Σ_{j ∈ bonds} J σ⃗_j·σ⃗_{j+1} + Σ_{j ∈ field_sites} h_j σ^z_j` on the sector.
pub fn build_hamiltonian(
    basis: &SpinBasis,
    coupling: f64,
    disorder: &DisorderRealization,
    terms: &ChainTerms,
) -> Result<HermitianOperator> {
    let l = basis.sites();
    if disorder.fields().len() != l {
        return Err(Error::Construction(format!("{} fields for a chain of {l} sites", disorder.fields().len())));
    }
    if terms.bonds.end > l.saturating_sub(1) {
        return Err(Error::Construction(format!("bond range {:?} outside [0, {}]", terms.bonds, l as i64 - 2)));
    }
    if terms.field_sites.end > l {
        return Err(Error::Construction(format!("field sites {:?} outside [0, {}]", terms.field_sites, l - 1)));
    }
    let dim = basis.dim();
    let mut m = CMatrix::zeros(dim, dim);
    for (col, &cfg) in basis.states().iter().enumerate() {
        let mut diag = 0.0;
        for j in terms.field_sites.clone() {
            diag += disorder.fields()[j] * if cfg >> j & 1 == 1 { 1.0 } else { -1.0 };
        }
        for j in terms.bonds.clone() {
            let parallel = (cfg >> j & 1) == (cfg >> (j + 1) & 1);
            if parallel {
                diag += coupling;
            } else {
                diag -= coupling;
                let flipped = cfg ^ (0b11 << j);
                let row = basis.index_of(flipped).expect("bond flip preserves magnetization");
                m[(row, col)] += C64::new(2.0 * coupling, 0.0);
            }
        }
        m[(col, col)] += C64::new(diag, 0.0);
    }
    HermitianOperator::new(m)
}

/// Full, left and right Hamiltonians `(H, H_L, H_R)` on one sector basis.
pub fn quench_hamiltonians(
    basis: &SpinBasis,
    coupling: f64,
    disorder: &DisorderRealization,
) -> Result<(HermitianOperator, HermitianOperator, HermitianOperator)> {
    let l = basis.sites();
    let full = build_hamiltonian(basis, coupling, disorder, &ChainTerms::full(l))?;
    let left = build_hamiltonian(basis, coupling, disorder, &ChainTerms::left(l)?)?;
    let right = build_hamiltonian(basis, coupling, disorder, &ChainTerms::right(l)?)?;
    Ok((full, left, right))
}

/// `Q = |φ1><φ2| + |φ2><φ1|`.
pub fn build_projector_observable(phi1: &CVector, phi2: &CVector) -> Result<HermitianOperator> {
    if phi1.len() != phi2.len() {
        return Err(Error::DimensionMismatch { expected: phi1.len(), got: phi2.len() });
    }
    check_normalized(phi1)?;
    check_normalized(phi2)?;
    let m = phi1 * phi2.adjoint() + phi2 * phi1.adjoint();
    Ok(HermitianOperator::from_hermitian_part(&m))
}
