//! Moments of `U ρ U†` averaged over the commutant of `H`: independent Haar
//! unitaries on every degenerate sector.
//!
//! All inputs live in the eigenbasis of `H`, ordered like the partition.
//!
//! The second moment is consumed through `tr(E[ρ⊗ρ] A⊗B)`. Writing `P_i` for
//! the sector projector and `S` for the swap, the four identities reduce to
//!
//! * symmetric: `(P_i⊗P_i + S(P_i⊗P_i))/2` → `(trA_i trB_i + tr(A_i B_i))/2`
//! * antisymmetric: `(P_i⊗P_i - S(P_i⊗P_i))/2` → `(trA_i trB_i - tr(A_i B_i))/2`
//! * direct `P_i⊗P_j` → `trA_i trB_j`
//! * exchange `Σ|a,b><b,a|` → `tr(A^{(ji)} B^{(ij)})`
//!
//! so nothing of size `d²×d²` is ever formed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{check_trace, CMatrix, CVector, DensityMatrix, HermitianOperator, C64};
use crate::spectral::SectorPartition;

/// Trace deviation accepted by [`ensemble_mean`].
pub const ENSEMBLE_TRACE_TOL: f64 = 1e-8;
/// Largest dimension the dense second-moment reference accepts.
pub const DENSE_REFERENCE_MAX_DIM: usize = 64;
/// Default bound on `Σ_i |<i|Φ1><i|Φ2>|` for the quartic closed form.
pub const CLOSED_FORM_OVERLAP_THRESHOLD: f64 = 0.05;

fn check_dims(rho: &DensityMatrix, partition: &SectorPartition) -> Result<()> {
    if rho.dim() != partition.dim() {
        return Err(Error::DimensionMismatch { expected: partition.dim(), got: rho.dim() });
    }
    Ok(())
}

/// The `(i, j)` block of `rho`, `d_i × d_j`.
pub fn sector_block(rho: &DensityMatrix, partition: &SectorPartition, i: usize, j: usize) -> Result<CMatrix> {
    check_dims(rho, partition)?;
    let ri = partition.sector(i)?;
    let rj = partition.sector(j)?;
    Ok(rho.entries().view((ri.start, rj.start), (ri.len(), rj.len())).into_owned())
}

/// `E[ρ] = Σ_i tr(ρ^{(ii)}) / d_i · 1^{(ii)}`.
pub fn ensemble_mean(rho: &DensityMatrix, partition: &SectorPartition) -> Result<DensityMatrix> {
    check_dims(rho, partition)?;
    check_trace(rho.entries(), ENSEMBLE_TRACE_TOL)?;
    let m = rho.entries();
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for r in partition.sectors() {
        let weight: f64 = r.clone().map(|a| m[(a, a)].re).sum::<f64>() / r.len() as f64;
        for a in r.clone() {
            out[(a, a)] = C64::new(weight, 0.0);
        }
    }
    Ok(DensityMatrix::from_trusted(out))
}

/// Contribution of one sector (`i == j`) or one unordered sector pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub i: usize,
    pub j: usize,
    /// Symmetric-representation term (same sector) or direct term (cross pair).
    pub primary: f64,
    /// Antisymmetric term (same sector) or exchange term (cross pair).
    pub secondary: f64,
    /// Part of `primary + secondary` surviving after subtracting the product of means.
    pub connected: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub symmetric: f64,
    pub antisymmetric: f64,
    pub direct: f64,
    pub exchange: f64,
    /// Same-sector entries first (`i == j`), then cross pairs with `i < j`.
    pub pairs: Vec<PairTerm>,
}

/// Ensemble prediction for `tr(E[ρ]A)`, `tr(E[ρ]B)` and `tr(E[ρ⊗ρ] A⊗B)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub mean_a: f64,
    pub mean_b: f64,
    pub second_moment: f64,
    /// `second_moment - mean_a * mean_b`, accumulated directly from the terms.
    pub connected: f64,
    pub terms: TermBreakdown,
}

impl MomentPrediction {
    pub fn mean_value(&self) -> f64 {
        self.mean_a
    }

    /// `sqrt(max(connected, 0))`.
    pub fn sigma(&self) -> f64 {
        self.connected.max(0.0).sqrt()
    }
}

struct SectorTraces {
    rho: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

fn block_trace(m: &CMatrix, r: &std::ops::Range<usize>) -> f64 {
    r.clone().map(|k| m[(k, k)].re).sum()
}

/// `Σ_{x∈ri, y∈rj} |m[x,y]|²` = `tr(m^{(ij)} m^{(ji)})` for Hermitian `m`.
fn block_frobenius(m: &CMatrix, ri: &std::ops::Range<usize>, rj: &std::ops::Range<usize>) -> f64 {
    let mut acc = 0.0;
    for y in rj.clone() {
        for x in ri.clone() {
            acc += m[(x, y)].norm_sqr();
        }
    }
    acc
}

/// `tr(a^{(ji)} b^{(ij)}) = Σ_{x∈ri, y∈rj} a[y,x] b[x,y]`.
fn block_cross(a: &CMatrix, b: &CMatrix, ri: &std::ops::Range<usize>, rj: &std::ops::Range<usize>) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for y in rj.clone() {
        for x in ri.clone() {
            acc += a[(y, x)] * b[(x, y)];
        }
    }
    acc
}

/// Second moment of the ensemble contracted against `A⊗B`.
pub fn second_moment_expectation(
    rho: &DensityMatrix,
    partition: &SectorPartition,
    a: &HermitianOperator,
    b: &HermitianOperator,
) -> Result<MomentPrediction> {
    check_dims(rho, partition)?;
    for op in [a, b] {
        if op.dim() != rho.dim() {
            return Err(Error::DimensionMismatch { expected: rho.dim(), got: op.dim() });
        }
    }
    let (r, am, bm) = (rho.entries(), a.entries(), b.entries());
    let sectors = partition.sectors();
    let tr = SectorTraces {
        rho: sectors.iter().map(|s| block_trace(r, s)).collect(),
        a: sectors.iter().map(|s| block_trace(am, s)).collect(),
        b: sectors.iter().map(|s| block_trace(bm, s)).collect(),
    };

    let mut terms = TermBreakdown::default();
    let mut connected = 0.0;
    let mut mean_a = 0.0;
    let mut mean_b = 0.0;

    for (i, s) in sectors.iter().enumerate() {
        let d = s.len() as f64;
        mean_a += tr.rho[i] / d * tr.a[i];
        mean_b += tr.rho[i] / d * tr.b[i];

        let purity = block_frobenius(r, s, s);
        let tr_ab = block_cross(am, bm, s, s).re;
        let t2 = tr.rho[i] * tr.rho[i];
        let ab = tr.a[i] * tr.b[i];
        let symmetric = (t2 + purity) / (d * (d + 1.0)) * (ab + tr_ab) / 2.0;
        // the antisymmetric representation is empty for d = 1
        let antisymmetric =
            if s.len() > 1 { (t2 - purity) / (d * (d - 1.0)) * (ab - tr_ab) / 2.0 } else { 0.0 };
        // symmetric + antisymmetric - (t2/d²)·ab, collected in closed form:
        // (d·purity - t2) / (d(d²-1)) · (tr(AB) - trA·trB/d); vanishes for d = 1
        let own = if s.len() > 1 {
            (d * purity - t2) / (d * (d * d - 1.0)) * (tr_ab - ab / d)
        } else {
            0.0
        };
        connected += own;
        terms.symmetric += symmetric;
        terms.antisymmetric += antisymmetric;
        terms.pairs.push(PairTerm { i, j: i, primary: symmetric, secondary: antisymmetric, connected: own });
    }

    for (i, si) in sectors.iter().enumerate() {
        for (j, sj) in sectors.iter().enumerate().skip(i + 1) {
            let dd = (si.len() * sj.len()) as f64;
            let direct = tr.rho[i] * tr.rho[j] / dd * (tr.a[i] * tr.b[j] + tr.a[j] * tr.b[i]);
            let coherence = block_frobenius(r, si, sj);
            let exchange = if coherence == 0.0 {
                0.0
            } else {
                coherence / dd * 2.0 * block_cross(am, bm, si, sj).re
            };
            connected += exchange;
            terms.direct += direct;
            terms.exchange += exchange;
            terms.pairs.push(PairTerm { i, j, primary: direct, secondary: exchange, connected: exchange });
        }
    }

    Ok(MomentPrediction { mean_a, mean_b, second_moment: mean_a * mean_b + connected, connected, terms })
}

/// Literal `d²×d²` assembly of `E[ρ⊗ρ]` from the four identity operators.
/// Tensor index `(x, y)` maps to `x * d + y`. Test-scale only.
pub fn dense_second_moment_reference(rho: &DensityMatrix, partition: &SectorPartition) -> Result<CMatrix> {
    check_dims(rho, partition)?;
    let d = rho.dim();
    if d > DENSE_REFERENCE_MAX_DIM {
        return Err(Error::InvalidArgument(format!(
            "dense second moment refused for d = {d} > {DENSE_REFERENCE_MAX_DIM}"
        )));
    }
    let r = rho.entries();
    let sectors = partition.sectors();
    let idx = |x: usize, y: usize| x * d + y;
    let mut out = CMatrix::zeros(d * d, d * d);
    let trace_of = |s: &std::ops::Range<usize>| block_trace(r, s);

    for s in sectors {
        let di = s.len() as f64;
        let t = trace_of(s);
        let purity = block_frobenius(r, s, s);
        let w_sym = C64::new((t * t + purity) / (di * (di + 1.0)), 0.0);
        // ¼ Σ_{ν,ν'} (|νν'> + |ν'ν>)(<νν'| + <ν'ν|)
        for nu in s.clone() {
            for nup in s.clone() {
                let kets = [idx(nu, nup), idx(nup, nu)];
                for &k in &kets {
                    for &b in &kets {
                        out[(k, b)] += w_sym * 0.25;
                    }
                }
            }
        }
        if s.len() > 1 {
            let w_anti = C64::new((t * t - purity) / (di * (di - 1.0)), 0.0);
            // ¼ Σ_{ν≠ν'} (|νν'> - |ν'ν>)(<νν'| - <ν'ν|)
            for nu in s.clone() {
                for nup in s.clone().filter(|&x| x != nu) {
                    let kets = [(idx(nu, nup), 1.0), (idx(nup, nu), -1.0)];
                    for &(k, sk) in &kets {
                        for &(b, sb) in &kets {
                            out[(k, b)] += w_anti * (0.25 * sk * sb);
                        }
                    }
                }
            }
        }
    }

    for (i, si) in sectors.iter().enumerate() {
        for (j, sj) in sectors.iter().enumerate() {
            if i == j {
                continue;
            }
            let dd = (si.len() * sj.len()) as f64;
            let w_direct = C64::new(trace_of(si) * trace_of(sj) / dd, 0.0);
            // tr(ρ^{(ij)} ρ^{(ji)})
            let mut w_exchange = C64::new(0.0, 0.0);
            for x in si.clone() {
                for y in sj.clone() {
                    w_exchange += r[(x, y)] * r[(y, x)];
                }
            }
            w_exchange /= dd;
            for x in si.clone() {
                for y in sj.clone() {
                    // |E_i, E_j><E_i, E_j|
                    out[(idx(x, y), idx(x, y))] += w_direct;
                    // |E_i, E_j><E_j, E_i|
                    out[(idx(x, y), idx(y, x))] += w_exchange;
                }
            }
        }
    }
    Ok(out)
}

/// `Σ X_{(x,y),(x',y')} A_{x'x} B_{y'y}` = `tr(X (A⊗B))`.
pub fn contract_dense(x: &CMatrix, a: &HermitianOperator, b: &HermitianOperator) -> C64 {
    let d = a.dim();
    let (am, bm) = (a.entries(), b.entries());
    let mut acc = C64::new(0.0, 0.0);
    for xx in 0..d {
        for yy in 0..d {
            let row = xx * d + yy;
            for xp in 0..d {
                for yp in 0..d {
                    acc += x[(row, xp * d + yp)] * am[(xp, xx)] * bm[(yp, yy)];
                }
            }
        }
    }
    acc
}

/// Partial trace of a `d²×d²` operator over its second tensor factor.
pub fn partial_trace_second(x: &CMatrix, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |a, ap| (0..d).map(|y| x[(a * d + y, ap * d + y)]).sum())
}

/// Overlap profile `O(i) = |<i|Φ1><i|Φ2>|` of two states expanded in the eigenbasis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapDiagnostics {
    pub max: f64,
    pub sum: f64,
}

pub fn overlap_diagnostics(phi1: &CVector, phi2: &CVector) -> Result<OverlapDiagnostics> {
    if phi1.len() != phi2.len() {
        return Err(Error::DimensionMismatch { expected: phi1.len(), got: phi2.len() });
    }
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for (a, b) in phi1.iter().zip(phi2.iter()) {
        let o = (a * b).norm();
        max = max.max(o);
        sum += o;
    }
    Ok(OverlapDiagnostics { max, sum })
}

impl OverlapDiagnostics {
    /// Whether the quartic closed form for the cat-state `Q` variance applies.
    pub fn closed_form_applicable(&self, threshold: f64) -> bool {
        self.sum < threshold
    }
}

/// `¼ Σ_{i1≠i2} |<i1|Φ1><Φ2|i2> + <i1|Φ2><Φ1|i2>|⁴`, the small-overlap
/// approximation of the `Q` variance for the cat state on a non-degenerate
/// spectrum. Inputs are `<i|Φ1>` and `<i|Φ2>`.
pub fn cat_q_variance_closed_form(phi1_overlaps: &CVector, phi2_overlaps: &CVector) -> Result<f64> {
    if phi1_overlaps.len() != phi2_overlaps.len() {
        return Err(Error::DimensionMismatch { expected: phi1_overlaps.len(), got: phi2_overlaps.len() });
    }
    crate::operator::check_normalized(phi1_overlaps)?;
    crate::operator::check_normalized(phi2_overlaps)?;
    let (a, b) = (phi1_overlaps, phi2_overlaps);
    let n = a.len();
    let mut acc = 0.0;
    for i1 in 0..n {
        for i2 in 0..n {
            if i1 == i2 {
                continue;
            }
            let q = a[i1] * b[i2].conj() + b[i1] * a[i2].conj();
            acc += q.norm_sqr().powi(2);
        }
    }
    Ok(acc / 4.0)
}
