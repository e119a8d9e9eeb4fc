//! Exact quench dynamics of expectation values in the eigenbasis and the
//! time-window statistics used to compare them with ensemble predictions.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{DensityMatrix, HermitianOperator};

/// Tolerated imaginary residue of `tr(ρ_t O)`.
pub const IMAGINARY_RESIDUE_TOL: f64 = 1e-6;
/// Default relative pruning floor for `|ρ_mn O_nm|`.
pub const DEFAULT_PRUNE_FLOOR: f64 = 1e-14;
const TIME_CHUNK: usize = 64;

/// Uniform grid of `n_points` times on `[t_start, t_end]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_points: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { t_start: 3000.0, t_end: 13000.0, n_points: 20_000 }
    }
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_points: usize) -> Result<Self> {
        let grid = Self { t_start, t_end, n_points };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_end > self.t_start) {
            return Err(Error::InvalidArgument(format!("time window [{}, {}] is empty", self.t_start, self.t_end)));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidArgument("time grid needs at least 2 points".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_points - 1) as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k + 1 == self.n_points {
            self.t_end
        } else {
            self.t_start + k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_points).map(|k| self.time(k)).collect()
    }
}

/// Real signal on a uniform time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times.len() >= 2 {
            let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("times must be strictly increasing".into()));
            }
            let scale = times[0].abs().max(times[times.len() - 1].abs()).max(dt);
            for (k, t) in times.iter().enumerate() {
                let want = times[0] + k as f64 * dt;
                if (t - want).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!("time grid is not uniform at index {k}")));
                }
            }
        }
        Ok(Self { times, values })
    }

    pub fn from_grid(grid: &TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid.times(), values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `t,value`, shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    /// Terms with `|ρ_mn O_nm| < prune_floor · max|ρ_mn O_nm|` are dropped.
    pub prune_floor: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { prune_floor: DEFAULT_PRUNE_FLOOR }
    }
}

/// `O(t) = Σ_{m,n} ρ_mn O_nm e^{-i(E_m - E_n) t}` on `grid`, with `rho` and
/// `obs` given in the eigenbasis of the energies.
///
/// `C_mn = ρ_mn O_nm` is Hermitian, so with `u_m = e^{iE_m t} = c_m + i s_m`
/// the signal is the real quadratic form `cᵀRc + sᵀRs + 2 sᵀIc` where
/// `C = R + iI`. Chunks of time points are evaluated as one GEMM each.
pub fn evolve_expectation(
    rho: &DensityMatrix,
    obs: &HermitianOperator,
    energies: &[f64],
    grid: &TimeGrid,
    options: EvolveOptions,
) -> Result<TimeSeries> {
    grid.validate()?;
    let d = energies.len();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: rho.dim() });
    }
    if obs.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: obs.dim() });
    }
    let (r, o) = (rho.entries(), obs.entries());
    let weights = DMatrix::from_fn(d, d, |m, n| r[(m, n)] * o[(n, m)]);
    let max_term = weights.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));

    // residue of Im tr(ρ_t O) is bounded by half the anti-Hermitian part of C
    let mut residue = 0.0;
    for m in 0..d {
        for n in m..d {
            residue += (weights[(m, n)] - weights[(n, m)].conj()).norm();
        }
    }
    if residue > IMAGINARY_RESIDUE_TOL {
        return Err(Error::NumericalIntegrity(format!("imaginary residue bound {residue:e} exceeds {IMAGINARY_RESIDUE_TOL:e}")));
    }

    let floor = options.prune_floor * max_term;
    let keep = |m: usize, n: usize| weights[(m, n)].norm() >= floor && weights[(m, n)].norm() > 0.0;
    let active: Vec<usize> = (0..d).filter(|&m| (0..d).any(|n| keep(m, n) || keep(n, m))).collect();
    let k = active.len();
    if k == 0 {
        return TimeSeries::from_grid(grid, vec![0.0; grid.n_points]);
    }
    let sym = |m: usize, n: usize| {
        let z = if keep(m, n) { weights[(m, n)] } else { Default::default() };
        let w = if keep(n, m) { weights[(n, m)] } else { Default::default() };
        (z + w.conj()) * 0.5
    };
    let re = DMatrix::from_fn(k, k, |a, b| sym(active[a], active[b]).re);
    let im = DMatrix::from_fn(k, k, |a, b| sym(active[a], active[b]).im);
    let has_imag = im.iter().any(|&x| x != 0.0);
    let e: Vec<f64> = active.iter().map(|&m| energies[m]).collect();

    let n_chunks = grid.n_points.div_ceil(TIME_CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * TIME_CHUNK;
            let hi = (lo + TIME_CHUNK).min(grid.n_points);
            let nt = hi - lo;
            let mut trig = DMatrix::<f64>::zeros(k, 2 * nt);
            for j in 0..nt {
                let t = grid.time(lo + j);
                for (a, &ea) in e.iter().enumerate() {
                    let (s, cth) = (ea * t).sin_cos();
                    trig[(a, j)] = cth;
                    trig[(a, nt + j)] = s;
                }
            }
            let rt = &re * &trig;
            let it = if has_imag { Some(&im * trig.columns(0, nt)) } else { None };
            (0..nt)
                .map(|j| {
                    let mut v = trig.column(j).dot(&rt.column(j)) + trig.column(nt + j).dot(&rt.column(nt + j));
                    if let Some(it) = &it {
                        v += 2.0 * trig.column(nt + j).dot(&it.column(j));
                    }
                    v
                })
                .collect()
        })
        .collect();
    TimeSeries::from_grid(grid, chunks.concat())
}

/// Time-window mean and standard deviation with subinterval confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub mean: f64,
    pub sigma: f64,
    pub mean_ci: f64,
    pub sigma_ci: f64,
}

pub const DEFAULT_SUBINTERVALS: usize = 10;

/// Trapezoidal `(1/T)∫A` and `sqrt((1/T)∫(A - mean)²)` over points `[lo, hi]`.
fn window_moments(t: &[f64], v: &[f64]) -> (f64, f64) {
    let span = t[t.len() - 1] - t[0];
    let integral = |f: &dyn Fn(usize) -> f64| -> f64 {
        (0..t.len() - 1).map(|k| 0.5 * (f(k) + f(k + 1)) * (t[k + 1] - t[k])).sum::<f64>()
    };
    let mean = integral(&|k| v[k]) / span;
    let var = integral(&|k| (v[k] - mean).powi(2)) / span;
    (mean, var.max(0.0).sqrt())
}

/// Mean and σ over the whole window; each confidence is the RMS deviation
/// of the per-subinterval value from the full-window value.
pub fn time_stats(series: &TimeSeries, n_subintervals: usize) -> Result<TimeStats> {
    if n_subintervals == 0 {
        return Err(Error::InvalidArgument("need at least one subinterval".into()));
    }
    let n = series.len();
    if n < 10 * n_subintervals || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "{n} points are too few for {n_subintervals} subintervals (need >= {})",
            10 * n_subintervals
        )));
    }
    let (t, v) = (series.times(), series.values());
    let (mean, sigma) = window_moments(t, v);
    let intervals = n - 1;
    let mut dm = 0.0;
    let mut ds = 0.0;
    for k in 0..n_subintervals {
        let lo = k * intervals / n_subintervals;
        let hi = (k + 1) * intervals / n_subintervals;
        let (m, s) = window_moments(&t[lo..=hi], &v[lo..=hi]);
        dm += (m - mean).powi(2);
        ds += (s - sigma).powi(2);
    }
    let nf = n_subintervals as f64;
    Ok(TimeStats { mean, sigma, mean_ci: (dm / nf).sqrt(), sigma_ci: (ds / nf).sqrt() })
}

/// Pointwise product of two series on the same grid.
pub fn product_series(a: &TimeSeries, b: &TimeSeries) -> Result<TimeSeries> {
    if a.times() != b.times() {
        return Err(Error::InvalidArgument("time grids differ".into()));
    }
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
    Ok(TimeSeries { times: a.times.clone(), values })
}
