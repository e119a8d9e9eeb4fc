//! Monte-Carlo ground truth: block unitaries drawn Haar-uniformly from the
//! commutant of `H`, one independent `U(d_i)` per sector.
//!
//! Sample `k` draws from ChaCha8 stream `k` of the run seed, and samples are
//! accumulated in fixed-size chunks merged in chunk order, so estimates are
//! bit-identical for any thread count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{trace_product, CMatrix, DensityMatrix, HermitianOperator, C64};
use crate::spectral::SectorPartition;

pub const MIN_SAMPLES: usize = 100;
const CHUNK: usize = 512;

/// One unitary block per sector.
#[derive(Clone, Debug)]
pub struct BlockUnitary {
    partition: SectorPartition,
    blocks: Vec<CMatrix>,
}

/// Haar unitary of size `d` from the QR factorization of a complex Ginibre
/// matrix, with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let g = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..d {
        let rkk = r[(k, k)];
        let n = rkk.norm();
        let phase = if n > 0.0 { rkk / n } else { C64::new(1.0, 0.0) };
        for row in 0..d {
            q[(row, k)] *= phase;
        }
    }
    q
}

pub fn sample_block_unitary<R: Rng + ?Sized>(partition: &SectorPartition, rng: &mut R) -> BlockUnitary {
    let blocks = partition.sectors().iter().map(|s| haar_unitary(s.len(), rng)).collect();
    BlockUnitary { partition: partition.clone(), blocks }
}

impl BlockUnitary {
    pub fn partition(&self) -> &SectorPartition {
        &self.partition
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    /// Multiply every block by the same phase.
    pub fn with_global_phase(&self, phase: C64) -> Self {
        Self { partition: self.partition.clone(), blocks: self.blocks.iter().map(|b| b * phase).collect() }
    }

    /// Largest `|U_i†U_i - I|` over blocks.
    pub fn unitarity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let g = b.adjoint() * b;
                let n = g.nrows();
                (g - CMatrix::identity(n, n)).iter().fold(0.0f64, |m, z| m.max(z.norm()))
            })
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> CMatrix {
        let d = self.partition.dim();
        let mut u = CMatrix::zeros(d, d);
        for (s, b) in self.partition.sectors().iter().zip(&self.blocks) {
            u.view_mut((s.start, s.start), (s.len(), s.len())).copy_from(b);
        }
        u
    }

    /// `U m U†` evaluated block by block.
    pub fn conjugate(&self, m: &CMatrix) -> CMatrix {
        let sectors = self.partition.sectors();
        let d = m.nrows();
        if self.partition.is_nondegenerate() {
            let phases: Vec<C64> = self.blocks.iter().map(|b| b[(0, 0)]).collect();
            return CMatrix::from_fn(d, d, |a, b| phases[a] * m[(a, b)] * phases[b].conj());
        }
        let mut left = CMatrix::zeros(d, d);
        for (s, u) in sectors.iter().zip(&self.blocks) {
            let rows = m.rows(s.start, s.len());
            left.rows_mut(s.start, s.len()).copy_from(&(u * rows));
        }
        let mut out = CMatrix::zeros(d, d);
        for (s, u) in sectors.iter().zip(&self.blocks) {
            let cols = left.columns(s.start, s.len());
            out.columns_mut(s.start, s.len()).copy_from(&(cols * u.adjoint()));
        }
        out
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    /// Observable indices whose single-sample expectations are multiplied.
    pub indices: Vec<usize>,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// Mean and sum of squared deviations, mergeable across chunks.
#[derive(Clone, Copy, Debug, Default)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.n;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Running) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n / n;
        self.m2 += other.m2 + delta * delta * self.n * other.n / n;
        self.n = n;
    }

    fn std_error(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        (self.m2.max(0.0) / (self.n - 1.0)).sqrt() / self.n.sqrt()
    }
}

fn sample_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

/// Run `n_samples` conjugations and average the statistics `f` extracts
/// from each `U ρ U†`.
fn accumulate<F>(rho: &CMatrix, partition: &SectorPartition, n_samples: usize, seed: u64, width: usize, f: F) -> Vec<Running>
where
    F: Fn(&CMatrix, &mut [f64]) + Sync,
{
    let n_chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<Vec<Running>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Running::default(); width];
            let mut buf = vec![0.0; width];
            for k in c * CHUNK..((c + 1) * CHUNK).min(n_samples) {
                let mut rng = sample_rng(seed, k);
                let u = sample_block_unitary(partition, &mut rng);
                let x = u.conjugate(rho);
                f(&x, &mut buf);
                for (a, &v) in acc.iter_mut().zip(&buf) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Running::default(); width];
    for p in &partials {
        for (t, q) in total.iter_mut().zip(p) {
            t.merge(q);
        }
    }
    total
}

/// Non-decreasing index tuples of length `order` over `n` observables.
fn multisets(n: usize, order: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, order: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == order {
            out.push(cur.clone());
            return;
        }
        for k in start..n {
            cur.push(k);
            rec(n, order, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, order, 0, &mut Vec::new(), &mut out);
    out
}

fn check_inputs(rho: &DensityMatrix, partition: &SectorPartition, n_samples: usize) -> Result<()> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    if rho.dim() != partition.dim() {
        return Err(Error::DimensionMismatch { expected: partition.dim(), got: rho.dim() });
    }
    Ok(())
}

/// Estimates `E[Π_k tr(UρU† A_{i_k})]` for every non-decreasing index tuple
/// `(i_1 ≤ … ≤ i_order)` over `observables`.
pub fn estimate_moments(
    rho: &DensityMatrix,
    partition: &SectorPartition,
    observables: &[HermitianOperator],
    order: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<MomentEstimate>> {
    check_inputs(rho, partition, n_samples)?;
    if order == 0 {
        return Err(Error::InvalidArgument("moment order must be >= 1".into()));
    }
    if let Some(op) = observables.iter().find(|o| o.dim() != rho.dim()) {
        return Err(Error::DimensionMismatch { expected: rho.dim(), got: op.dim() });
    }
    let combos = multisets(observables.len(), order);
    let stats = accumulate(rho.entries(), partition, n_samples, seed, combos.len(), |x, out| {
        let single: Vec<f64> = observables.iter().map(|o| trace_product(x, o.entries()).re).collect();
        for (slot, combo) in out.iter_mut().zip(&combos) {
            *slot = combo.iter().map(|&k| single[k]).product();
        }
    });
    Ok(combos
        .into_iter()
        .zip(stats)
        .map(|(indices, s)| MomentEstimate { indices, value: s.mean, std_error: s.std_error(), n_samples })
        .collect())
}

/// Element-wise estimate of `E[UρU†]`.
#[derive(Clone, Debug)]
pub struct StateEstimate {
    pub mean: CMatrix,
    pub std_error_re: DMatrix<f64>,
    pub std_error_im: DMatrix<f64>,
    pub n_samples: usize,
}

pub fn estimate_mean_state(
    rho: &DensityMatrix,
    partition: &SectorPartition,
    n_samples: usize,
    seed: u64,
) -> Result<StateEstimate> {
    check_inputs(rho, partition, n_samples)?;
    let d = rho.dim();
    let stats = accumulate(rho.entries(), partition, n_samples, seed, 2 * d * d, |x, out| {
        for (k, z) in x.iter().enumerate() {
            out[2 * k] = z.re;
            out[2 * k + 1] = z.im;
        }
    });
    // nalgebra storage is column-major, matching the iteration order above
    let mean = CMatrix::from_iterator(d, d, (0..d * d).map(|k| C64::new(stats[2 * k].mean, stats[2 * k + 1].mean)));
    let std_error_re = DMatrix::from_iterator(d, d, (0..d * d).map(|k| stats[2 * k].std_error()));
    let std_error_im = DMatrix::from_iterator(d, d, (0..d * d).map(|k| stats[2 * k + 1].std_error()));
    Ok(StateEstimate { mean, std_error_re, std_error_im, n_samples })
}
