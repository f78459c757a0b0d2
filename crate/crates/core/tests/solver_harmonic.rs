//! Sector solves, symmetric extension, continuation and harmonic extensions.

use polygrowth_core::geometry::{geometric_radii, harmonic_polynomial, laplacian, NodeTag, PolarGrid, ScalarField, SectorDomain};
use polygrowth_core::harmonic::{harmonic_extension, lemma31_check, HarmonicExtension};
use polygrowth_core::potential::{PeriodicPotential, PotentialSpec};
use polygrowth_core::run::{solve, RunConfig};
use polygrowth_core::solver::{continuation, discrete_force, extend_by_symmetry, solve_sector, ContinuationGrid, SolveOptions};
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

fn grids(d: u32, r: f64, nr: usize, nt: usize) -> (Arc<PolarGrid>, Arc<PolarGrid>) {
    let disk = Arc::new(PolarGrid::symmetric_disk(d, geometric_radii(r * 1e-3, r, nr).unwrap(), nt).unwrap());
    let sector = Arc::new(disk.matching_sector(d).unwrap());
    (disk, sector)
}

/// sup|u − φ| measured on the 256×128 grid.
const BASELINE_SUP_DEV: f64 = 0.45667807661334336;

#[test]
fn sine_gordon_d2_r50() {
    let (disk, sector) = grids(2, 50.0, 256, 128);
    let opts = SolveOptions::default();
    let sg = PeriodicPotential::sine_gordon();
    let (u, report) = solve_sector(&sg, &SectorDomain::new(2, 50.0).unwrap(), sector.clone(), &opts).unwrap();
    assert!(report.converged && report.final_residual <= opts.newton_tol);
    assert!(report.energy <= report.initial_energy);
    assert!(report.energy_history.windows(2).all(|w| w[1] <= w[0]));

    // residual certificate with the discrete force
    let force = discrete_force(&sg, &u, opts.quadrature);
    let lap = laplacian(&u).unwrap();
    let mut worst = 0.0f64;
    for i in sector.interior_radii() {
        for k in sector.interior_angles() {
            worst = worst.max((lap.at(i, k) + force.at(i, k)).abs() - report.residual_floor);
        }
    }
    assert!(worst <= opts.newton_tol, "{worst}");

    // positivity away from the boundary
    let half = PI / 4.0;
    for (i, &r) in sector.radii().iter().enumerate() {
        for (k, &th) in sector.angles().iter().enumerate() {
            assert!(u.at(i, k) >= 0.0);
            if r > 0.5 && th.abs() < half - 2.0 * sector.dtheta() && u.grid().tag(i, k) == NodeTag::Interior {
                assert!(u.at(i, k) > 0.0);
            }
        }
    }

    // boundary data carried exactly
    let phi = harmonic_polynomial(2, sector.clone());
    let last = sector.n_radii() - 1;
    for k in 1..sector.n_angles() - 1 {
        assert_eq!(u.at(last, k), phi.at(last, k));
    }
    for i in 0..sector.n_radii() {
        assert_eq!(u.at(i, 0), 0.0);
        assert_eq!(u.at(i, sector.n_angles() - 1), 0.0);
    }

    let dev = u.sub(&phi).unwrap().max_abs();
    assert!(dev > 0.0 && dev.is_finite());

    let ud = extend_by_symmetry(&u, 2, disk.clone()).unwrap();
    let map = disk.rotation_map(2).unwrap();
    for (n, &m) in map.iter().enumerate() {
        assert_eq!(ud.values()[m], -ud.values()[n]);
    }
    assert!((dev - BASELINE_SUP_DEV).abs() <= 1e-6 * BASELINE_SUP_DEV, "{dev:e}");
}

#[test]
fn zero_potential_returns_the_discrete_harmonic_function() {
    let (_, sector) = grids(3, 20.0, 64, 48);
    let opts = SolveOptions::default();
    let (u, report) = solve_sector(&PeriodicPotential::zero(), &SectorDomain::new(3, 20.0).unwrap(), sector, &opts).unwrap();
    assert!(report.converged);
    let lap = laplacian(&u).unwrap();
    let g = u.grid();
    let scale = u.max_abs();
    for i in g.interior_radii() {
        for k in g.interior_angles() {
            assert!(lap.at(i, k).abs() <= opts.newton_tol + 1e-13 * scale);
        }
    }
}

#[test]
fn perturbed_initial_guess_reaches_the_same_minimiser() {
    let mut config = RunConfig::new(PotentialSpec::SineGordon, 2, 50.0, 256, 128);
    let plain = solve(&config).unwrap();
    config.initial_perturbation = 0.5;
    config.seed = 3;
    let bumped = solve(&config).unwrap();
    let diff = bumped.sector.sub(&plain.sector).unwrap().max_abs();
    assert!(diff <= 10.0 * config.solver.newton_tol, "{diff}");
}

#[test]
fn symmetric_extension_of_phi_is_phi() {
    let (disk, sector) = grids(4, 5.0, 16, 64);
    let ext = extend_by_symmetry(&harmonic_polynomial(4, sector), 4, disk.clone()).unwrap();
    let phi = harmonic_polynomial(4, disk.clone());
    let tol = 1e-12 * phi.max_abs();
    for (a, b) in ext.values().iter().zip(phi.values()) {
        assert!((a - b).abs() <= tol);
    }
    let wrong = Arc::new(PolarGrid::symmetric_disk(4, disk.radii().to_vec(), 32).unwrap());
    let (_, sector) = grids(4, 5.0, 16, 64);
    assert!(extend_by_symmetry(&harmonic_polynomial(4, sector), 4, wrong).is_err());
}

struct Deltas {
    raw: Vec<f64>,
    /// Same differences taken on `u^R − φ_h^R`, with `φ_h^R` the zero-potential
    /// solve on the same grid.
    referenced: Vec<f64>,
}

fn ball_sup(a: &ScalarField, b: &ScalarField, ball: f64) -> f64 {
    let g = a.grid();
    let mut sup = 0.0f64;
    for (i, &r) in g.radii().iter().take_while(|&&r| r <= ball).enumerate() {
        assert!((b.grid().radii()[i] - r).abs() <= 1e-12 * r);
        for k in 0..g.n_angles() {
            sup = sup.max((a.at(i, k) - b.at(i, k)).abs());
        }
    }
    sup
}

fn deltas(d: u32, nr: usize, per_degree: usize) -> Deltas {
    let radii = [25.0, 50.0, 100.0];
    let grid = ContinuationGrid::for_first_radius(25.0, nr, per_degree * d as usize);
    let opts = SolveOptions::default();
    let sg = continuation(&PeriodicPotential::sine_gordon(), d, &radii, &grid, &opts).unwrap();
    let zero = continuation(&PeriodicPotential::zero(), d, &radii, &grid, &opts).unwrap();
    assert_eq!(sg.stages.len(), 3);
    let w: Vec<ScalarField> = sg
        .stages
        .iter()
        .zip(&zero.stages)
        .map(|(a, b)| a.disk.sub(&b.disk).unwrap())
        .collect();
    let referenced = w.windows(2).map(|p| ball_sup(&p[0], &p[1], 12.5)).collect();
    for (m, delta) in sg.cauchy.deltas.iter().enumerate() {
        let recomputed = ball_sup(&sg.stages[m].disk, &sg.stages[m + 1].disk, sg.cauchy.ball_radius);
        assert_eq!(*delta, recomputed);
    }
    Deltas {
        raw: sg.cauchy.deltas,
        referenced,
    }
}

fn close(measured: &[f64], baseline: &[f64]) -> bool {
    measured.iter().zip(baseline).all(|(m, b)| (m - b).abs() <= 1e-6 * b)
}

#[test]
fn continuation_d2_cauchy_table() {
    let d2 = deltas(2, 160, 32);
    assert!(d2.raw[1] <= d2.raw[0] && d2.raw.iter().all(|x| x.is_finite()), "{:?}", d2.raw);
    assert!(close(&d2.raw, &[0.368356495211259, 0.3615596510749981]), "{:?}", d2.raw);
}

#[test]
fn continuation_d4_locks_the_interior() {
    // The raw differences on this grid are the discretisation error of φ
    // itself, which grows with R; they are pinned as a regression only.
    let coarse = deltas(4, 160, 32);
    assert!(close(&coarse.raw, &[161.89645004240447, 163.33562095376692]), "{:?}", coarse.raw);
    // Referenced to φ_h the locking shows once the grid is fine enough.
    let fine = deltas(4, 320, 64);
    let r = &fine.referenced;
    assert!(r[1] < 0.5 * r[0], "{r:?}");
}

#[test]
fn continuation_of_zero_potential_is_stationary() {
    let grid = ContinuationGrid::for_first_radius(4.0, 80, 128);
    let result = continuation(&PeriodicPotential::zero(), 2, &[4.0, 8.0], &grid, &SolveOptions::default()).unwrap();
    // both stages approximate φ; they differ by the grid error only
    assert!(result.cauchy.deltas[0] < 1e-2, "{:?}", result.cauchy.deltas);
}

#[test]
fn green_identity_on_a_converged_field() {
    let (disk, sector) = grids(2, 20.0, 256, 192);
    let sg = PeriodicPotential::sine_gordon();
    let (u, _) = solve_sector(&sg, &SectorDomain::new(2, 20.0).unwrap(), sector, &SolveOptions::default()).unwrap();
    let ud = extend_by_symmetry(&u, 2, disk).unwrap();
    for r in [4.0, 8.0] {
        let ext = harmonic_extension(&ud, r, 47).unwrap();
        let c = lemma31_check(&ud, &ext, &sg, r).unwrap();
        assert!(c.lhs >= 0.0 && c.lhs <= c.bound);
        assert!((c.lhs - c.rhs_identity).abs() <= 1e-3 * c.lhs.max(r * r));
        // selection rule on the symmetric trace
        for (j, a) in ext.cosine_coefficients().iter().enumerate() {
            if j % 4 != 2 {
                assert!(a.abs() <= 1e-12 * ext.cosine_coefficients()[2].abs(), "j = {j}");
            }
        }
    }
}

proptest! {
    #[test]
    fn parseval_and_mean_value(coeffs in proptest::collection::vec(-1.0f64..1.0, 1..12)) {
        let n = 64;
        let trace: Vec<f64> = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                coeffs.iter().enumerate().map(|(j, c)| c * (j as f64 * th).cos()).sum()
            })
            .collect();
        let ext = HarmonicExtension::from_trace(2.0, &trace, 31).unwrap();
        let a = ext.cosine_coefficients();
        let mean_square = trace.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let parseval = a[0] * a[0] + 0.5 * a[1..].iter().map(|c| c * c).sum::<f64>();
        prop_assert!((mean_square - parseval).abs() <= 1e-10 * mean_square.max(1e-300));
        prop_assert_eq!(ext.value(0.0, 0.0), a[0]);
    }
}

#[test]
fn extension_of_a_harmonic_field_is_the_field() {
    let grid = Arc::new(PolarGrid::disk(geometric_radii(0.01, 3.0, 40).unwrap(), 64).unwrap());
    let field = ScalarField::from_fn(grid, |r, th| r * r * (2.0 * th).cos() + 0.5 * r.powi(3) * (3.0 * th).sin());
    let ext = harmonic_extension(&field, 3.0, 31).unwrap();
    let (rho, th) = (1.3, 0.4);
    let exact = rho * rho * (2.0f64 * th).cos() + 0.5 * rho.powi(3) * (3.0 * th).sin();
    assert!((ext.value(rho, th) - exact).abs() < 1e-12);
}
