//! Diagonalization, level-spacing statistics and grouping of the spectrum
//! into degenerate sectors.

use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{cgemm, hermiticity_defect, CMatrix, HermitianOperator, C64};

/// Ascending spectrum with eigenvectors as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub energies: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Largest `‖H v_k - E_k v_k‖`.
    pub fn max_residual(&self, op: &HermitianOperator) -> f64 {
        let hv = cgemm(op.entries(), &self.vectors);
        (0..self.dim())
            .map(|k| {
                let r = hv.column(k) - self.vectors.column(k) * C64::new(self.energies[k], 0.0);
                r.norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |V†V - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = cgemm(&self.vectors.adjoint(), &self.vectors);
        let n = self.dim();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g[(a, b)] - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    /// `V diag(E) V†`.
    pub fn reconstruct(&self) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= C64::new(self.energies[k], 0.0);
        }
        cgemm(&scaled, &self.vectors.adjoint())
    }
}

fn max_iterations(dim: usize) -> usize {
    1000 * dim.max(1)
}

fn no_convergence(op: &HermitianOperator) -> Error {
    Error::NoConvergence { dim: op.dim(), max_abs: op.max_abs(), asymmetry: hermiticity_defect(op.entries()) }
}

fn sort_ascending(energies: Vec<f64>, vectors: CMatrix) -> EigenSystem {
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
    let sorted_e = order.iter().map(|&k| energies[k]).collect();
    let sorted_v = CMatrix::from_fn(vectors.nrows(), order.len(), |r, c| vectors[(r, order[c])]);
    EigenSystem { energies: sorted_e, vectors: sorted_v }
}

/// Full eigendecomposition of a Hermitian operator. Real symmetric input is
/// diagonalized in real arithmetic.
pub fn diagonalize(op: &HermitianOperator) -> Result<EigenSystem> {
    let n = op.dim();
    if n == 0 {
        return Ok(EigenSystem { energies: vec![], vectors: CMatrix::zeros(0, 0) });
    }
    if op.is_real() {
        let m: DMatrix<f64> = op.entries().map(|z| z.re);
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, max_iterations(n)).ok_or_else(|| no_convergence(op))?;
        let vectors = eig.eigenvectors.map(|x| C64::new(x, 0.0));
        Ok(sort_ascending(eig.eigenvalues.as_slice().to_vec(), vectors))
    } else {
        let eig = SymmetricEigen::try_new(op.entries().clone(), f64::EPSILON, max_iterations(n))
            .ok_or_else(|| no_convergence(op))?;
        Ok(sort_ascending(eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors))
    }
}

/// Ascending eigenvalues only.
pub fn eigenvalues(op: &HermitianOperator) -> Result<Vec<f64>> {
    let n = op.dim();
    let mut values: Vec<f64> = if op.is_real() {
        let m: DMatrix<f64> = op.entries().map(|z| z.re);
        SymmetricEigen::try_new(m, f64::EPSILON, max_iterations(n))
            .ok_or_else(|| no_convergence(op))?
            .eigenvalues
            .as_slice()
            .to_vec()
    } else {
        SymmetricEigen::try_new(op.entries().clone(), f64::EPSILON, max_iterations(n))
            .ok_or_else(|| no_convergence(op))?
            .eigenvalues
            .as_slice()
            .to_vec()
    };
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Mean of `min(s_n, s_{n+1}) / max(s_n, s_{n+1})` over consecutive spacings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSpacing {
    pub mean_ratio: f64,
    pub n_ratios: usize,
    /// Pairs skipped because both spacings vanished.
    pub degenerate_pairs: usize,
}

pub fn level_spacing_ratio(energies: &[f64]) -> Result<LevelSpacing> {
    if energies.len() < 3 {
        return Err(Error::InvalidArgument(format!("level spacing ratio needs >= 3 levels, got {}", energies.len())));
    }
    let mut sum = 0.0;
    let mut n_ratios = 0;
    let mut degenerate_pairs = 0;
    for w in energies.windows(3) {
        let s0 = w[1] - w[0];
        let s1 = w[2] - w[1];
        if s0 < 0.0 || s1 < 0.0 {
            return Err(Error::InvalidArgument("energies must be ascending".into()));
        }
        let hi = s0.max(s1);
        if hi == 0.0 {
            degenerate_pairs += 1;
            continue;
        }
        sum += s0.min(s1) / hi;
        n_ratios += 1;
    }
    if n_ratios == 0 {
        return Err(Error::InvalidArgument("every spacing pair is degenerate".into()));
    }
    Ok(LevelSpacing { mean_ratio: sum / n_ratios as f64, n_ratios, degenerate_pairs })
}

/// Contiguous index ranges into an ascending spectrum, one per sector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorPartition {
    sectors: Vec<Range<usize>>,
}

impl SectorPartition {
    /// Builds a partition from consecutive sector sizes.
    pub fn from_degeneracies(degeneracies: &[usize]) -> Result<Self> {
        let mut start = 0;
        let mut sectors = Vec::with_capacity(degeneracies.len());
        for &d in degeneracies {
            if d == 0 {
                return Err(Error::InvalidArgument("empty sector".into()));
            }
            sectors.push(start..start + d);
            start += d;
        }
        Ok(Self { sectors })
    }

    pub fn singletons(dim: usize) -> Self {
        Self { sectors: (0..dim).map(|k| k..k + 1).collect() }
    }

    pub fn whole(dim: usize) -> Self {
        Self { sectors: if dim == 0 { vec![] } else { vec![0..dim] } }
    }

    pub fn sectors(&self) -> &[Range<usize>] {
        &self.sectors
    }

    pub fn sector(&self, i: usize) -> Result<Range<usize>> {
        self.sectors
            .get(i)
            .cloned()
            .ok_or_else(|| Error::OutOfRange(format!("sector {i} of {}", self.sectors.len())))
    }

    pub fn len(&self) -> usize {
        self.sectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.is_empty()
    }

    pub fn degeneracies(&self) -> Vec<usize> {
        self.sectors.iter().map(|r| r.len()).collect()
    }

    pub fn dim(&self) -> usize {
        self.sectors.last().map_or(0, |r| r.end)
    }

    pub fn is_nondegenerate(&self) -> bool {
        self.sectors.iter().all(|r| r.len() == 1)
    }
}

/// `1e-8` times the spectral width.
pub fn default_degeneracy_tol(energies: &[f64]) -> f64 {
    match (energies.first(), energies.last()) {
        (Some(lo), Some(hi)) => 1e-8 * (hi - lo),
        _ => 0.0,
    }
}

/// Greedy left-to-right grouping: a level joins the current sector when its
/// gap to the previous level is at most `tol`. Chains of small gaps merge
/// even if their total width exceeds `tol`.
pub fn cluster_sectors(energies: &[f64], tol: f64) -> SectorPartition {
    let mut sectors = Vec::new();
    let mut start = 0;
    for k in 1..energies.len() {
        if energies[k] - energies[k - 1] > tol {
            sectors.push(start..k);
            start = k;
        }
    }
    if !energies.is_empty() {
        sectors.push(start..energies.len());
    }
    SectorPartition { sectors }
}

/// Closed energy interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyWindow {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyWindow {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn around(center: f64, half_width: f64) -> Self {
        Self { lo: center - half_width, hi: center + half_width }
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }
}

/// Merge every level inside a window into one sector; levels outside all
/// windows stay singletons.
pub fn coarsen_partition(energies: &[f64], windows: &[EnergyWindow]) -> Result<SectorPartition> {
    let mut sorted = windows.to_vec();
    if let Some(w) = sorted.iter().find(|w| !(w.lo <= w.hi)) {
        return Err(Error::InvalidArgument(format!("window [{}, {}] is empty", w.lo, w.hi)));
    }
    sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    if let Some(p) = sorted.windows(2).find(|p| p[1].lo <= p[0].hi) {
        return Err(Error::InvalidArgument(format!(
            "windows [{}, {}] and [{}, {}] overlap",
            p[0].lo, p[0].hi, p[1].lo, p[1].hi
        )));
    }
    let window_of = |e: f64| sorted.iter().position(|w| w.contains(e));
    let mut sectors = Vec::new();
    let mut k = 0;
    while k < energies.len() {
        let start = k;
        if let Some(w) = window_of(energies[k]) {
            while k + 1 < energies.len() && window_of(energies[k + 1]) == Some(w) {
                k += 1;
            }
        }
        k += 1;
        sectors.push(start..k);
    }
    Ok(SectorPartition { sectors })
}
