//! Rotating one-dimensional solutions `u(x) = v(a·x)` with linear growth.
//!
//! With `κ = 1/|a|²` the profile solves `v″ = −κ f(v)`, and in the rotation
//! regime `E > κ max F` the first integral `½v′² + κF(v) = E` gives `v` by
//! the quadrature `s(v) = ∫ dv / √(2(E − κF(v)))`.

use crate::error::{Error, Result};
use crate::geometry::{laplacian, PolarGrid, ScalarField};
use crate::potential::PeriodicPotential;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Periods of `v` covered by the samples.
const PERIODS: usize = 4;
const QUADRATURE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RotatingSolution {
    potential: PeriodicPotential,
    energy: f64,
    stiffness: f64,
    s: Vec<f64>,
    v: Vec<f64>,
    period: f64,
    mean_slope: f64,
    offset: f64,
    deviation: f64,
}

impl RotatingSolution {
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.s, &self.v)
    }

    /// `P` with `v(s + P) = v(s) + T`.
    pub fn period(&self) -> f64 {
        self.period
    }

    /// `T / P`
    pub fn mean_slope(&self) -> f64 {
        self.mean_slope
    }

    /// Offset `c*` minimising `sup |v(s) − ᾱs − c|`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `sup |v(s) − ᾱs − c*|`
    pub fn deviation(&self) -> f64 {
        self.deviation
    }

    fn speed(&self, v: f64) -> f64 {
        (2.0 * (self.energy - self.stiffness * self.potential.value(v))).sqrt()
    }

    /// `v(s)` for any real `s`: cubic Hermite interpolation on the samples,
    /// with exact slopes from the first integral, extended by `v(s + P) =
    /// v(s) + T`.
    pub fn value_at(&self, s: f64) -> f64 {
        let t = self.potential.period();
        let shift = ((s - self.s[0]) / self.period).floor();
        let local = s - shift * self.period;
        // samples cover several periods; the first one suffices
        let n = self.s.partition_point(|&x| x <= local).clamp(1, self.s.len() - 1);
        let (s0, s1) = (self.s[n - 1], self.s[n]);
        let (v0, v1) = (self.v[n - 1], self.v[n]);
        let h = s1 - s0;
        let (m0, m1) = (self.speed(v0) * h, self.speed(v1) * h);
        let x = (local - s0) / h;
        let (x2, x3) = (x * x, x * x * x);
        let value = (2.0 * x3 - 3.0 * x2 + 1.0) * v0
            + (x3 - 2.0 * x2 + x) * m0
            + (-2.0 * x3 + 3.0 * x2) * v1
            + (x3 - x2) * m1;
        value + shift * t
    }
}

/// Integrates the rotating profile at energy `E` and stiffness `κ`.
pub fn quadrature_solution(
    potential: &PeriodicPotential,
    energy: f64,
    stiffness: f64,
    samples_per_period: usize,
) -> Result<RotatingSolution> {
    if !(stiffness > 0.0) || samples_per_period < 4 {
        return Err(Error::Validation(
            "stiffness must be positive and a period needs at least four samples".into(),
        ));
    }
    let threshold = stiffness * potential.max_value();
    if !(energy > threshold + 1e-9) {
        return Err(Error::NonRotating { energy, threshold });
    }
    let t = potential.period();
    let inverse_speed = |v: f64| 1.0 / (2.0 * (energy - stiffness * potential.value(v))).sqrt();
    let n = samples_per_period * PERIODS;
    let dv = t / samples_per_period as f64;
    let mut v = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    v.push(0.0);
    s.push(0.0);
    // one period of increments, repeated: keeps v(s + P) = v(s) + T exact
    let increments: Vec<f64> = (0..samples_per_period)
        .map(|i| adaptive_kronrod(&inverse_speed, i as f64 * dv, (i + 1) as f64 * dv, QUADRATURE_RTOL))
        .collect();
    let mut prefix = Vec::with_capacity(samples_per_period);
    for inc in &increments {
        acc += inc;
        prefix.push(acc);
    }
    let period = acc;
    for i in 0..n {
        let (whole, part) = (i / samples_per_period, i % samples_per_period);
        // whole periods added last so rounding does not accumulate along s
        s.push(whole as f64 * period + prefix[part]);
        v.push((i + 1) as f64 * dv);
    }
    let mean_slope = t / period;
    let mut solution = RotatingSolution {
        potential: potential.clone(),
        energy,
        stiffness,
        s,
        v,
        period,
        mean_slope,
        offset: 0.0,
        deviation: 0.0,
    };
    // v − ᾱs is periodic; its extremes sit between samples, so scan the
    // interpolant on one period at a finer spacing
    let fine = 8 * samples_per_period;
    let (lo, hi) = (0..=fine)
        .map(|m| {
            let x = period * m as f64 / fine as f64;
            solution.value_at(x) - mean_slope * x
        })
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    solution.offset = 0.5 * (lo + hi);
    solution.deviation = 0.5 * (hi - lo);
    Ok(solution)
}

/// `max |v″ + κ f(v)|` over interior samples, with the three-point second
/// difference on the non-uniform `s` samples.
pub fn verify_ode(solution: &RotatingSolution) -> f64 {
    let (s, v) = (&solution.s, &solution.v);
    (1..s.len() - 1)
        .map(|i| {
            let (hm, hp) = (s[i] - s[i - 1], s[i + 1] - s[i]);
            let second = 2.0 * ((v[i + 1] - v[i]) / hp - (v[i] - v[i - 1]) / hm) / (hm + hp);
            (second + solution.stiffness * solution.potential.force(v[i])).abs()
        })
        .fold(0.0, f64::max)
}

/// `max |½(Δv/Δs)² − (E − κF(v̄))|` over sample intervals, `v̄` the interval
/// midpoint.
pub fn first_integral_defect(solution: &RotatingSolution) -> f64 {
    let (s, v) = (&solution.s, &solution.v);
    s.windows(2)
        .zip(v.windows(2))
        .map(|(s, v)| {
            let slope = (v[1] - v[0]) / (s[1] - s[0]);
            let mid = 0.5 * (v[0] + v[1]);
            (0.5 * slope * slope - (solution.energy - solution.stiffness * solution.potential.value(mid))).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarCheck {
    /// `max |Δ_h u + f(u)|` over interior nodes.
    pub pde_residual: f64,
    /// `sup |u(x) − ᾱ a·x − c*|` over nodes.
    pub linear_bound: f64,
    /// Smallest centred difference of `u` along `e` over nodes and sampled
    /// `e` with `e·a > 0`.
    pub monotonicity_min: f64,
    /// Largest `|e·∇u|` for `e ⊥ a`.
    pub orthogonal_max: f64,
}

/// Samples `u(x) = v(a·x)` with `a = direction/√κ` on a disk grid and
/// checks the equation, the linear bound and the sign of directional
/// derivatives.
pub fn planar_extension_check(
    solution: &RotatingSolution,
    direction: [f64; 2],
    grid: &Arc<PolarGrid>,
) -> Result<PlanarCheck> {
    let norm = direction[0].hypot(direction[1]);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("direction has length {norm}, expected 1")));
    }
    let scale = 1.0 / solution.stiffness.sqrt();
    let a = [direction[0] * scale, direction[1] * scale];
    let along = |r: f64, th: f64| r * (a[0] * th.cos() + a[1] * th.sin());
    let u = ScalarField::from_fn(grid.clone(), |r, th| solution.value_at(along(r, th)));
    let lap = laplacian(&u)?;
    let mut pde_residual = 0.0f64;
    for i in grid.interior_radii() {
        for k in grid.interior_angles() {
            let idx = grid.index(i, k);
            pde_residual = pde_residual.max((lap.values()[idx] + solution.potential.force(u.values()[idx])).abs());
        }
    }
    let mut linear_bound = 0.0f64;
    for (i, &r) in grid.radii().iter().enumerate() {
        for (k, &th) in grid.angles().iter().enumerate() {
            let line = solution.mean_slope * along(r, th) + solution.offset;
            linear_bound = linear_bound.max((u.at(i, k) - line).abs());
        }
    }
    let base = direction[1].atan2(direction[0]);
    // directions strictly inside the half plane e·a > 0
    let tilts: Vec<f64> = (0..17).map(|m| (m as f64 / 8.0 - 1.0) * 1.5).collect();
    let u_at = |x: f64, y: f64| solution.value_at(a[0] * x + a[1] * y);
    let dtheta = grid.dtheta();
    let mut monotonicity_min = f64::INFINITY;
    let mut orthogonal_max = 0.0f64;
    for &r in grid.radii() {
        // centred differences along e with the local node spacing
        let h = r * dtheta;
        for &th in grid.angles() {
            let (x, y) = (r * th.cos(), r * th.sin());
            let derivative = |e: f64| {
                let (ex, ey) = (h * e.cos(), h * e.sin());
                (u_at(x + ex, y + ey) - u_at(x - ex, y - ey)) / (2.0 * h)
            };
            for &tilt in &tilts {
                monotonicity_min = monotonicity_min.min(derivative(base + tilt));
            }
            orthogonal_max = orthogonal_max.max(derivative(base + std::f64::consts::FRAC_PI_2).abs());
        }
    }
    Ok(PlanarCheck {
        pde_residual,
        linear_bound,
        monotonicity_min,
        orthogonal_max,
    })
}

// Gauss–Kronrod 7/15 nodes and weights on [−1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and `|Kronrod − Gauss|` on `[a, b]`.
fn kronrod15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let centre = f(mid);
    let mut kronrod = WGK[7] * centre;
    let mut gauss = WG[3] * centre;
    for j in 0..7 {
        let x = half * XGK[j];
        let pair = f(mid - x) + f(mid + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    let (value, error) = kronrod15(f, a, b);
    refine(f, a, b, value, error, rtol, 0)
}

fn refine(f: &impl Fn(f64) -> f64, a: f64, b: f64, value: f64, error: f64, rtol: f64, depth: u32) -> f64 {
    if error <= rtol * value.abs() || depth >= 40 {
        return value;
    }
    let m = 0.5 * (a + b);
    let (left, el) = kronrod15(f, a, m);
    let (right, er) = kronrod15(f, m, b);
    refine(f, a, m, left, el, rtol, depth + 1) + refine(f, m, b, right, er, rtol, depth + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geometric_radii;
    use std::f64::consts::PI;

    fn disk(r: f64, nr: usize, nt: usize) -> Arc<PolarGrid> {
        Arc::new(PolarGrid::disk(geometric_radii(r * 1e-2, r, nr).unwrap(), nt).unwrap())
    }

    #[test]
    fn kronrod_integrates_smooth_functions() {
        let v = adaptive_kronrod(&|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-14);
        let v = adaptive_kronrod(&|x: f64| 1.0 / (1.0 + 100.0 * x * x), -1.0, 1.0, 1e-13);
        assert!((v - 0.2 * 10f64.atan()).abs() < 1e-13);
    }

    #[test]
    fn free_profile_is_linear() {
        let sol = quadrature_solution(&PeriodicPotential::zero(), 0.5, 1.0, 64).unwrap();
        let (s, v) = sol.samples();
        for (s, v) in s.iter().zip(v) {
            assert!((s - v).abs() < 1e-12 * (1.0 + v));
        }
        assert!((sol.mean_slope() - 1.0).abs() < 1e-13);
        assert!(sol.deviation() < 1e-12);
        assert!(verify_ode(&sol) < 1e-9);
    }

    #[test]
    fn below_separatrix_is_rejected() {
        let sg = PeriodicPotential::sine_gordon();
        assert!(matches!(
            quadrature_solution(&sg, 2.0, 1.0, 100),
            Err(Error::NonRotating { .. })
        ));
        assert!(matches!(
            quadrature_solution(&sg, 1.0, 1.0, 100),
            Err(Error::NonRotating { .. })
        ));
    }

    #[test]
    fn mean_slope_matches_independent_quadrature() {
        // oracle: composite Simpson on one period with many panels
        let e = 2.5;
        let n = 200_000;
        let h = 2.0 * PI / n as f64;
        let g = |v: f64| 1.0 / (2.0 * (e - (1.0 - v.cos()))).sqrt();
        let mut simpson = g(0.0) + g(2.0 * PI);
        for i in 1..n {
            simpson += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
        }
        let period = simpson * h / 3.0;
        let sol = quadrature_solution(&PeriodicPotential::sine_gordon(), e, 1.0, 256).unwrap();
        assert!((sol.period() - period).abs() < 1e-11 * period);
        assert!((sol.mean_slope() - 2.0 * PI / period).abs() < 1e-11);
    }

    #[test]
    fn high_energy_approaches_free_motion() {
        let e = 1e3;
        let sol = quadrature_solution(&PeriodicPotential::sine_gordon(), e, 1.0, 256).unwrap();
        let free = (2.0 * e).sqrt();
        assert!((sol.mean_slope() - free).abs() < 0.01 * free);
        let low = quadrature_solution(&PeriodicPotential::sine_gordon(), 2.5, 1.0, 256).unwrap();
        assert!(sol.deviation() < low.deviation());
    }

    #[test]
    fn profile_properties_in_rotation_regime() {
        let sg = PeriodicPotential::sine_gordon();
        let sol = quadrature_solution(&sg, 2.5, 1.0, 10_000).unwrap();
        assert!(verify_ode(&sol) <= 1e-6, "{}", verify_ode(&sol));
        assert!(first_integral_defect(&sol) <= 1e-6);
        assert!(sol.deviation() < PI);
        let (s, v) = sol.samples();
        assert!(v.windows(2).all(|w| w[1] > w[0]) && s.windows(2).all(|w| w[1] > w[0]));
        // periodicity in value
        let p = sol.period();
        for x in [0.1, 1.7, 3.3] {
            assert!((sol.value_at(x + p) - sol.value_at(x) - 2.0 * PI).abs() < 1e-10);
        }
    }

    #[test]
    fn corrupted_sample_is_detected() {
        let mut sol = quadrature_solution(&PeriodicPotential::sine_gordon(), 2.5, 1.0, 10_000).unwrap();
        sol.v[5000] += 1e-3;
        assert!(verify_ode(&sol) > 1e-2);
    }

    #[test]
    fn interpolation_reproduces_samples() {
        let sol = quadrature_solution(&PeriodicPotential::sine_gordon(), 3.0, 0.5, 500).unwrap();
        let (s, v) = sol.samples();
        for i in (0..s.len()).step_by(37) {
            assert!((sol.value_at(s[i]) - v[i]).abs() < 1e-12 * (1.0 + v[i].abs()));
        }
        assert!((sol.value_at(-sol.period()) + 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn planar_extension_of_free_profile() {
        let sol = quadrature_solution(&PeriodicPotential::zero(), 0.5, 1.0, 64).unwrap();
        let c = planar_extension_check(&sol, [0.6, 0.8], &disk(2.0, 64, 64)).unwrap();
        assert!(c.linear_bound < 1e-12 && c.monotonicity_min >= 0.0, "{c:?}");
        assert!(c.orthogonal_max < 1e-12);
        // angular truncation of the five-point operator, second order
        let fine = planar_extension_check(&sol, [0.6, 0.8], &disk(2.0, 128, 128)).unwrap();
        let ratio = c.pde_residual / fine.pde_residual;
        assert!((ratio - 4.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn planar_extension_of_rotating_profile() {
        let sol = quadrature_solution(&PeriodicPotential::sine_gordon(), 2.5, 1.0, 2_000).unwrap();
        let coarse = planar_extension_check(&sol, [1.0, 0.0], &disk(2.0, 96, 128)).unwrap();
        let fine = planar_extension_check(&sol, [1.0, 0.0], &disk(2.0, 192, 256)).unwrap();
        assert!(coarse.monotonicity_min > 0.0, "{coarse:?}");
        assert!(coarse.linear_bound <= sol.deviation() + 1e-8, "{coarse:?} {}", sol.deviation());
        assert!(coarse.orthogonal_max < 1e-9);
        // second-order stencils
        let ratio = coarse.pde_residual / fine.pde_residual;
        assert!((ratio - 4.0).abs() < 1.2, "{ratio}");
        assert!(planar_extension_check(&sol, [1.0, 1.0], &disk(1.0, 8, 8)).is_err());
    }

    proptest::proptest! {
        #[test]
        fn mean_slope_increases_with_energy(e in 2.05f64..20.0, de in 0.01f64..5.0) {
            let sg = PeriodicPotential::sine_gordon();
            let a = quadrature_solution(&sg, e, 1.0, 32).unwrap();
            let b = quadrature_solution(&sg, e + de, 1.0, 32).unwrap();
            proptest::prop_assert!(b.mean_slope() > a.mean_slope());
            proptest::prop_assert!(a.deviation() < PI);
        }
    }
}
