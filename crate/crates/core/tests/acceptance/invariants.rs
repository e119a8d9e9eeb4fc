//! Property suites, each run over 100 generated cases with a fixed runner seed.

use std::fs;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};

use crate::common::*;
use crate::Check;
use ergodic_cat::dynamics::{evolve_expectation, time_stats, EvolveOptions, TimeGrid};
use ergodic_cat::ensemble::{contract_dense, dense_second_moment_reference, ensemble_mean, second_moment_expectation};
use ergodic_cat::experiment::{run_experiment, run_in_memory, ExperimentConfig, Protocol};
use ergodic_cat::haar::{estimate_mean_state, estimate_moments, sample_block_unitary};
use ergodic_cat::operator::hermiticity_defect;
use ergodic_cat::spectral::{
    cluster_sectors, coarsen_partition, diagonalize, eigenvalues, level_spacing_ratio, EnergyWindow, SectorPartition,
};
use ergodic_cat::spin_chain::{
    build_basis, build_hamiltonian, build_projector_observable, quench_hamiltonians, ChainTerms, DisorderRealization,
};
use ergodic_cat::{CMatrix, HermitianOperator, C64};

const CASES: u32 = 100;

fn runner() -> TestRunner {
    let config = Config { cases: CASES, failure_persistence: None, max_shrink_iters: 0, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(label: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S::Value: std::fmt::Debug,
{
    match runner().run(&strategy, test) {
        Ok(()) => Check::new(label, true, format!("{CASES} cases")),
        Err(TestError::Fail(reason, value)) => Check::new(label, false, format!("{reason} at {value:?}")),
        Err(TestError::Abort(reason)) => Check::new(label, false, format!("aborted: {reason}")),
    }
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
}

fn random_partition(r: &mut rand_chacha::ChaCha8Rng, dim: usize) -> SectorPartition {
    use rand::Rng;
    let mut degs = Vec::new();
    let mut left = dim;
    while left > 0 {
        let d = r.random_range(1..=left.min(4));
        degs.push(d);
        left -= d;
    }
    SectorPartition::from_degeneracies(&degs).unwrap()
}

/// Chain Hamiltonian assembled from explicit Pauli actions on all `2^L` configurations.
fn pauli_hamiltonian(l: usize, j: f64, h: &[f64]) -> CMatrix {
    let n = 1usize << l;
    let z = |cfg: usize, s: usize| if cfg >> s & 1 == 1 { 1.0 } else { -1.0 };
    let mut m = CMatrix::zeros(n, n);
    for cfg in 0..n {
        for (s, hs) in h.iter().enumerate() {
            m[(cfg, cfg)] += C64::new(hs * z(cfg, s), 0.0);
        }
        for s in 0..l - 1 {
            let t = s + 1;
            m[(cfg, cfg)] += C64::new(j * z(cfg, s) * z(cfg, t), 0.0);
            let flipped = cfg ^ (1 << s) ^ (1 << t);
            // X_s X_t and Y_s Y_t; Y|b> = i z(b) |1-b>
            m[(flipped, cfg)] += C64::new(j, 0.0);
            let y_phase = C64::new(0.0, z(cfg, s)) * C64::new(0.0, z(cfg, t));
            m[(flipped, cfg)] += y_phase * j;
        }
    }
    m
}

fn spin_chain_suite() -> Vec<Check> {
    let chain = (1usize..=4, any::<u64>(), 0.1f64..2.0, 0.0f64..5.0);
    vec![
        check("spin_chain: constructed operators are Hermitian", chain.clone(), |(half, seed, j, h)| {
            let l = 2 * half;
            let basis = build_basis(l, 0).unwrap();
            let dis = DisorderRealization::sample(l, h, seed).unwrap();
            let (full, left, right) = quench_hamiltonians(&basis, j, &dis).unwrap();
            let mut r = rng(seed);
            let (a, b) = (random_state(basis.dim(), &mut r), random_state(basis.dim(), &mut r));
            let q = build_projector_observable(&a, &b).unwrap();
            for op in [&full, &left, &right, &q] {
                prop_assert!(hermiticity_defect(op.entries()) <= 1e-12);
            }
            Ok(())
        }),
        check("spin_chain: H - (H_L + H_R) is the cut bond", chain.clone(), |(half, seed, j, h)| {
            let l = 2 * half;
            let basis = build_basis(l, 0).unwrap();
            let dis = DisorderRealization::sample(l, h, seed).unwrap();
            let (full, left, right) = quench_hamiltonians(&basis, j, &dis).unwrap();
            let bond = build_hamiltonian(&basis, j, &dis, &ChainTerms { bonds: half - 1..half, field_sites: 0..0 }).unwrap();
            let dev = max_abs(&(full.entries() - left.entries() - right.entries() - bond.entries()));
            prop_assert!(dev <= 4.0 * f64::EPSILON * full.max_abs(), "deviation {dev:e}");
            Ok(())
        }),
        check("spin_chain: sector closure and Pauli oracle", (2usize..=7, any::<u64>(), 0.1f64..2.0, 0.0f64..5.0), |(l, seed, j, h)| {
            let dis = DisorderRealization::sample(l, h, seed).unwrap();
            let dense = pauli_hamiltonian(l, j, dis.fields());
            for r in 0..dense.nrows() {
                for c in 0..dense.ncols() {
                    if dense[(r, c)].norm() > 0.0 {
                        prop_assert_eq!(r.count_ones(), c.count_ones());
                    }
                }
            }
            for n_up in 0..=l {
                let basis = build_basis(l, 2 * n_up as i32 - l as i32).unwrap();
                let block = build_hamiltonian(&basis, j, &dis, &ChainTerms::full(l)).unwrap();
                for (a, &ca) in basis.states().iter().enumerate() {
                    for (b, &cb) in basis.states().iter().enumerate() {
                        let d = (block.entries()[(a, b)] - dense[(ca as usize, cb as usize)]).norm();
                        prop_assert!(d <= 1e-12, "n_up {n_up} ({a},{b}) off by {d:e}");
                    }
                }
            }
            Ok(())
        }),
        check("spin_chain: L=2 zero-field spectrum is {-3J, J}", 0.05f64..5.0, |j| {
            let basis = build_basis(2, 0).unwrap();
            let dis = DisorderRealization::from_fields(vec![0.0, 0.0], 0.0).unwrap();
            let e = eigenvalues(&build_hamiltonian(&basis, j, &dis, &ChainTerms::full(2)).unwrap()).unwrap();
            prop_assert!((e[0] + 3.0 * j).abs() <= 1e-12 * j && (e[1] - j).abs() <= 1e-12 * j, "{e:?}");
            Ok(())
        }),
    ]
}

fn spectral_suite() -> Vec<Check> {
    vec![
        check("spectral: V diag(E) V† reconstructs H", (1usize..=200, any::<u64>(), any::<bool>()), |(d, seed, real)| {
            let mut r = rng(seed);
            let h = random_hermitian(d, &mut r);
            let h = if real { HermitianOperator::from_hermitian_part(&h.entries().map(|z| C64::new(z.re, 0.0))) } else { h };
            let eig = diagonalize(&h).unwrap();
            let dev = max_abs(&(eig.reconstruct() - h.entries()));
            prop_assert!(dev <= 1e-9 * h.max_abs(), "dim {d}: {dev:e}");
            Ok(())
        }),
        check("spectral: spacing ratio is affine invariant", (3usize..500, any::<u64>(), 1e-3f64..1e3, -1e3f64..1e3), |(n, seed, a, b)| {
            use rand::Rng;
            let mut r = rng(seed);
            let mut e: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
            e.sort_by(f64::total_cmp);
            let mapped: Vec<f64> = e.iter().map(|x| a * x + b).collect();
            let (r0, r1) = (level_spacing_ratio(&e).unwrap(), level_spacing_ratio(&mapped).unwrap());
            prop_assert_eq!(r0.n_ratios, r1.n_ratios);
            // exact in real arithmetic; floating-point gaps carry relative error ~ |b| ε / gap
            prop_assert!((r0.mean_ratio - r1.mean_ratio).abs() <= 1e-9, "{} vs {}", r0.mean_ratio, r1.mean_ratio);
            Ok(())
        }),
        check("spectral: zero tolerance on distinct levels gives singletons", (1usize..300, any::<u64>()), |(n, seed)| {
            use rand::Rng;
            let mut r = rng(seed);
            let mut e: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
            e.sort_by(f64::total_cmp);
            e.dedup();
            let p = cluster_sectors(&e, 0.0);
            prop_assert!(p.degeneracies().iter().all(|&d| d == 1));
            prop_assert_eq!(p.len(), e.len());
            Ok(())
        }),
        check("spectral: degeneracies sum to the dimension", (1usize..300, any::<u64>(), 0.0f64..0.5), |(n, seed, tol)| {
            use rand::Rng;
            let mut r = rng(seed);
            let mut e: Vec<f64> = (0..n).map(|_| (r.random_range(-5.0f64..5.0) * 4.0).round() / 4.0).collect();
            e.sort_by(f64::total_cmp);
            let p = cluster_sectors(&e, tol);
            prop_assert_eq!(p.degeneracies().iter().sum::<usize>(), n);
            let c = r.random_range(-5.0..5.0);
            let windows = [EnergyWindow::around(c, tol), EnergyWindow::around(c + 2.0 * tol + 1.0, tol)];
            let q = coarsen_partition(&e, &windows).unwrap();
            prop_assert_eq!(q.degeneracies().iter().sum::<usize>(), n);
            Ok(())
        }),
    ]
}

fn ensemble_suite() -> Vec<Check> {
    let case = (1usize..=12, any::<u64>(), any::<bool>());
    let setup = |d: usize, seed: u64, pure: bool| {
        let mut r = rng(seed);
        let p = random_partition(&mut r, d);
        let rho = if pure { random_pure(d, &mut r) } else { random_mixed(d, &mut r) };
        (r, p, rho)
    };
    vec![
        check("ensemble: mean is idempotent", case.clone(), move |(d, seed, pure)| {
            let (_, p, rho) = setup(d, seed, pure);
            let once = ensemble_mean(&rho, &p).unwrap();
            let twice = ensemble_mean(&once, &p).unwrap();
            // a block average of d equal doubles is exact up to one rounding of the sum
            let dev = max_abs(&(once.entries() - twice.entries()));
            prop_assert!(dev <= 4.0 * f64::EPSILON, "{dev:e}");
            Ok(())
        }),
        check("ensemble: mean preserves trace and positivity", case.clone(), move |(d, seed, pure)| {
            let (_, p, rho) = setup(d, seed, pure);
            let m = ensemble_mean(&rho, &p).unwrap();
            prop_assert!((m.trace() - rho.trace()).norm() <= 4.0 * d as f64 * f64::EPSILON);
            let e = eigenvalues(&HermitianOperator::from_hermitian_part(m.entries())).unwrap();
            prop_assert!(e[0] >= -1e-10, "min eigenvalue {}", e[0]);
            Ok(())
        }),
        check("ensemble: mean invariant under block unitaries", case.clone(), move |(d, seed, pure)| {
            let (mut r, p, rho) = setup(d, seed, pure);
            let u = sample_block_unitary(&p, &mut r);
            let moved = ergodic_cat::DensityMatrix::new(u.conjugate(rho.entries())).unwrap();
            let dev = max_abs(&(ensemble_mean(&moved, &p).unwrap().entries() - ensemble_mean(&rho, &p).unwrap().entries()));
            prop_assert!(dev <= 1e-12, "{dev:e}");
            Ok(())
        }),
        check("ensemble: identity observables have mean 1 and no fluctuation", case.clone(), move |(d, seed, pure)| {
            let (_, p, rho) = setup(d, seed, pure);
            let id = HermitianOperator::identity(d);
            let m = second_moment_expectation(&rho, &p, &id, &id).unwrap();
            prop_assert!((m.mean_a - 1.0).abs() <= 1e-12, "mean {}", m.mean_a);
            prop_assert_eq!(m.connected, 0.0);
            Ok(())
        }),
        check("ensemble: contraction equals dense reference", case.clone(), move |(d, seed, pure)| {
            let (mut r, p, rho) = setup(d, seed, pure);
            let (a, b) = (random_hermitian(d, &mut r), random_hermitian(d, &mut r));
            let dense = contract_dense(&dense_second_moment_reference(&rho, &p).unwrap(), &a, &b);
            let m = second_moment_expectation(&rho, &p, &a, &b).unwrap().second_moment;
            let rel = (dense.re - m).abs() / dense.norm().max(f64::MIN_POSITIVE);
            prop_assert!(rel <= 1e-10, "{:?}: {m} vs {dense} (rel {rel:e})", p.degeneracies());
            Ok(())
        }),
        check("ensemble: conserved observables do not fluctuate", case, move |(d, seed, pure)| {
            use rand::Rng;
            let (mut r, p, rho) = setup(d, seed, pure);
            let mut diag = vec![0.0; d];
            for s in p.sectors() {
                let v = r.random_range(-3.0..3.0);
                diag[s.clone()].fill(v);
            }
            let a = HermitianOperator::diagonal(&diag);
            let m = second_moment_expectation(&rho, &p, &a, &a).unwrap();
            prop_assert!(m.connected.abs() <= 1e-12, "{:e}", m.connected);
            Ok(())
        }),
    ]
}

fn haar_suite() -> Vec<Check> {
    vec![
        check("haar: global phase leaves UρU† unchanged", (1usize..=10, any::<u64>(), 0.0f64..6.3), |(d, seed, phi)| {
            let mut r = rng(seed);
            let p = random_partition(&mut r, d);
            let rho = random_mixed(d, &mut r);
            let u = sample_block_unitary(&p, &mut r);
            let v = u.with_global_phase(C64::from_polar(1.0, phi));
            let dev = max_abs(&(u.conjugate(rho.entries()) - v.conjugate(rho.entries())));
            prop_assert!(dev <= 1e-14, "{dev:e}");
            Ok(())
        }),
        check("haar: standard error falls as 1/sqrt(n)", (2usize..=5, any::<u64>()), |(d, seed)| {
            let mut r = rng(seed);
            let p = random_partition(&mut r, d);
            let rho = random_pure(d, &mut r);
            let a = random_hermitian(d, &mut r);
            let small = &estimate_moments(&rho, &p, std::slice::from_ref(&a), 1, 4000, seed).unwrap()[0];
            let large = &estimate_moments(&rho, &p, std::slice::from_ref(&a), 1, 8000, seed ^ 1).unwrap()[0];
            if small.std_error < 1e-12 {
                // the observable is fixed by the ensemble
                prop_assert!(large.std_error < 1e-12);
                return Ok(());
            }
            let ratio = small.std_error / large.std_error / std::f64::consts::SQRT_2;
            prop_assert!((0.8..=1.2).contains(&ratio), "ratio/√2 = {ratio}");
            Ok(())
        }),
        check("haar: singleton sectors dephase off-diagonals", (2usize..=5, any::<u64>()), |(d, seed)| {
            let mut r = rng(seed);
            let rho = random_pure(d, &mut r);
            let est = estimate_mean_state(&rho, &SectorPartition::singletons(d), 4000, seed).unwrap();
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        let m = est.mean[(i, j)];
                        prop_assert!(m.re.abs() <= 4.0 * est.std_error_re[(i, j)], "({i},{j}) re");
                        prop_assert!(m.im.abs() <= 4.0 * est.std_error_im[(i, j)], "({i},{j}) im");
                    }
                }
            }
            Ok(())
        }),
    ]
}

fn dynamics_suite() -> Vec<Check> {
    // disordered L = 8 chain spectrum, random state and observable in its eigenbasis
    let setup = |seed: u64, h: f64| {
        let basis = build_basis(8, 0).unwrap();
        let dis = DisorderRealization::sample(8, h, seed).unwrap();
        let e = eigenvalues(&build_hamiltonian(&basis, 1.0, &dis, &ChainTerms::full(8)).unwrap()).unwrap();
        let mut r = rng(seed);
        let rho = random_pure(e.len(), &mut r);
        let obs = random_hermitian(e.len(), &mut r);
        (e, rho, obs)
    };
    // Δt below π / (E_max - E_min) so no Bohr frequency aliases
    let grid = |e: &[f64]| {
        let (t0, t1) = (1000.0, 3000.0);
        let n = ((t1 - t0) * 2.0 * (e[e.len() - 1] - e[0]) / std::f64::consts::PI).ceil() as usize + 1;
        TimeGrid::new(t0, t1, n).unwrap()
    };
    let chain = (any::<u64>(), 0.5f64..2.0);
    vec![
        check("dynamics: time mean equals diagonal ensemble", chain.clone(), move |(seed, h)| {
            let (e, rho, obs) = setup(seed, h);
            let s = evolve_expectation(&rho, &obs, &e, &grid(&e), EvolveOptions::default()).unwrap();
            let st = time_stats(&s, 10).unwrap();
            let de = obs.expectation(&ensemble_mean(&rho, &SectorPartition::singletons(e.len())).unwrap());
            prop_assert!((st.mean - de).abs() <= 3.0 * st.mean_ci, "{} vs {de} (ci {:e})", st.mean, st.mean_ci);
            Ok(())
        }),
        check("dynamics: time variance equals ensemble connected part", chain, move |(seed, h)| {
            let (e, rho, obs) = setup(seed, h);
            let s = evolve_expectation(&rho, &obs, &e, &grid(&e), EvolveOptions::default()).unwrap();
            let st = time_stats(&s, 10).unwrap();
            let c = second_moment_expectation(&rho, &SectorPartition::singletons(e.len()), &obs, &obs).unwrap().connected;
            let var = st.sigma * st.sigma;
            prop_assert!((var - c).abs() <= 0.1 * c, "{var} vs {c}");
            Ok(())
        }),
        check("dynamics: t = 0 gives tr(ρ O)", (1usize..=64, any::<u64>()), |(d, seed)| {
            use rand::Rng;
            let mut r = rng(seed);
            let rho = random_mixed(d, &mut r);
            let obs = random_hermitian(d, &mut r);
            let e: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
            let s = evolve_expectation(&rho, &obs, &e, &TimeGrid::new(0.0, 1.0, 100).unwrap(), EvolveOptions { prune_floor: 0.0 }).unwrap();
            let want = obs.expectation(&rho);
            prop_assert!((s.values()[0] - want).abs() <= 1e-12 * obs.max_abs().max(1.0) * d as f64);
            Ok(())
        }),
        check("dynamics: zero prune floor reproduces the full sum", (1usize..=64, any::<u64>()), |(d, seed)| {
            use rand::Rng;
            let mut r = rng(seed);
            let rho = random_mixed(d, &mut r);
            let obs = random_hermitian(d, &mut r);
            let e: Vec<f64> = (0..d).map(|_| r.random_range(-5.0..5.0)).collect();
            let grid = TimeGrid::new(0.0, 20.0, 100).unwrap();
            let s = evolve_expectation(&rho, &obs, &e, &grid, EvolveOptions { prune_floor: 0.0 }).unwrap();
            let (rm, om) = (rho.entries(), obs.entries());
            for (k, &t) in s.times().iter().enumerate() {
                let mut want = C64::new(0.0, 0.0);
                for m in 0..d {
                    for n in 0..d {
                        want += rm[(m, n)] * om[(n, m)] * C64::from_polar(1.0, -(e[m] - e[n]) * t);
                    }
                }
                prop_assert!((s.values()[k] - want.re).abs() <= 1e-12 * obs.max_abs().max(1.0) * d as f64, "t = {t}");
            }
            Ok(())
        }),
    ]
}

fn experiment_suite() -> Vec<Check> {
    let l10 = |seed: u64| ExperimentConfig { sites: 10, disorder_seed: seed, ..Default::default() };
    // Δt = 0.05 keeps every Bohr frequency of an L = 10 chain below Nyquist
    let l10_fine = |seed: u64| ExperimentConfig { time_window: TimeGrid::new(3000.0, 4000.0, 20_001).unwrap(), ..l10(seed) };
    vec![
        check("experiment: H_R agrees across protocols", any::<u64>(), move |seed| {
            let (report, _, _) = run_in_memory(&l10(seed)).unwrap();
            let c = report.protocol(Protocol::Cat).unwrap().observable("H_R").unwrap().clone();
            let m = report.protocol(Protocol::Mixed).unwrap().observable("H_R").unwrap().clone();
            let (mean_ci, sigma_ci) = (c.numeric_mean_ci + m.numeric_mean_ci, c.numeric_sigma_ci + m.numeric_sigma_ci);
            prop_assert!((c.theory_mean - m.theory_mean).abs() <= mean_ci, "theory mean");
            prop_assert!((c.theory_sigma - m.theory_sigma).abs() <= sigma_ci, "theory σ");
            prop_assert!((c.numeric_mean - m.numeric_mean).abs() <= mean_ci, "numeric mean");
            prop_assert!((c.numeric_sigma - m.numeric_sigma).abs() <= sigma_ci, "numeric σ");
            Ok(())
        }),
        check("experiment: Q mean vanishes within 3 CIs", any::<u64>(), move |seed| {
            let (report, _, _) = run_in_memory(&l10_fine(seed)).unwrap();
            for p in &report.protocols {
                let q = p.observable("Q").unwrap();
                prop_assert!(
                    q.numeric_mean.abs() <= 3.0 * q.numeric_mean_ci,
                    "{}: mean {:e}, ci {:e}, ensemble mean {:e}",
                    p.protocol.name(),
                    q.numeric_mean,
                    q.numeric_mean_ci,
                    q.theory_mean
                );
            }
            Ok(())
        }),
        check("experiment: Q mean equals its ensemble value within 3 CIs", any::<u64>(), move |seed| {
            let (report, _, _) = run_in_memory(&l10_fine(seed)).unwrap();
            for p in &report.protocols {
                let q = p.observable("Q").unwrap();
                prop_assert!(
                    (q.numeric_mean - q.theory_mean).abs() <= 3.0 * q.numeric_mean_ci,
                    "{}: {:e} vs {:e} (ci {:e})",
                    p.protocol.name(),
                    q.numeric_mean,
                    q.theory_mean,
                    q.numeric_mean_ci
                );
                prop_assert!(q.theory_mean.abs() <= 2.0 * report.states.max_overlap);
            }
            Ok(())
        }),
        check("experiment: report.json is deterministic", (1usize..=4, any::<u64>()), |(half, seed)| {
            let cfg = ExperimentConfig {
                sites: 2 * half,
                disorder_seed: seed,
                time_window: TimeGrid::new(0.0, 200.0, 400).unwrap(),
                ..Default::default()
            };
            let dir = tempfile::tempdir().unwrap();
            let read = |sub: &str| {
                let out = dir.path().join(sub);
                run_experiment(&cfg, &out).unwrap();
                fs::read_to_string(out.join("report.json"))
                    .unwrap()
                    .lines()
                    .filter(|l| !l.contains("generated_unix_secs"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            prop_assert_eq!(read("a"), read("b"));
            Ok(())
        }),
        check("experiment: closed form reported only when applicable", (1usize..=5, any::<u64>()), |(half, seed)| {
            let cfg = ExperimentConfig {
                sites: 2 * half,
                disorder_seed: seed,
                time_window: TimeGrid::new(0.0, 200.0, 400).unwrap(),
                ..Default::default()
            };
            let (report, _, _) = run_in_memory(&cfg).unwrap();
            let s = &report.states;
            prop_assert!(s.max_overlap.is_finite() && s.overlap_sum.is_finite());
            prop_assert_eq!(s.closed_form_applicable, s.overlap_sum < 0.05);
            prop_assert_eq!(s.cat_q_variance_closed_form.is_some(), s.closed_form_applicable);
            Ok(())
        }),
    ]
}

pub fn all() -> Vec<Check> {
    let mut checks = spin_chain_suite();
    checks.extend(spectral_suite());
    checks.extend(ensemble_suite());
    checks.extend(haar_suite());
    checks.extend(dynamics_suite());
    checks.extend(experiment_suite());
    checks
}
