//! Periodic potentials `F` and their derivatives.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Serializable description of a catalog potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    SineGordon,
    Zero,
    CosineSeries { coefficients: Vec<f64> },
}

impl PotentialSpec {
    pub fn build(&self) -> PeriodicPotential {
        match self {
            PotentialSpec::SineGordon => PeriodicPotential::sine_gordon(),
            PotentialSpec::Zero => PeriodicPotential::zero(),
            PotentialSpec::CosineSeries { coefficients } => {
                PeriodicPotential::cosine_series(coefficients)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PotentialSpec::SineGordon => "sine_gordon",
            PotentialSpec::Zero => "zero",
            PotentialSpec::CosineSeries { .. } => "cosine_series",
        }
    }
}

/// A smooth 2π-periodic potential `F(u) = Σ a_k (1 − cos k u) + Σ b_k sin k u`.
/// Every catalog entry is even (`b ≡ 0`); the sine part exists only for the
/// experimental uneven path.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPotential {
    coefficients: Vec<f64>,
    odd: Vec<f64>,
    period: f64,
    even: bool,
    osc: f64,
}

impl PeriodicPotential {
    /// `F(u) = 1 − cos u`.
    pub fn sine_gordon() -> Self {
        Self {
            coefficients: vec![1.0],
            odd: Vec::new(),
            period: 2.0 * PI,
            even: true,
            osc: 2.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            coefficients: Vec::new(),
            odd: Vec::new(),
            period: 2.0 * PI,
            even: true,
            osc: 0.0,
        }
    }

    /// `F(u) = Σ_k a_k (1 − cos k u)`, k = 1, 2, ...
    pub fn cosine_series(coefficients: &[f64]) -> Self {
        if coefficients.iter().all(|&a| a == 0.0) {
            return Self::zero();
        }
        let mut p = Self {
            coefficients: coefficients.to_vec(),
            odd: Vec::new(),
            period: 2.0 * PI,
            even: true,
            osc: 0.0,
        };
        p.osc = p.sampled_osc();
        p
    }

    /// Adds `Σ_k b_k sin k u` to `F`. The result is not even; the 2D
    /// construction refuses it unless explicitly allowed.
    pub fn with_sine_terms(mut self, sine: &[f64]) -> Self {
        self.odd = sine.to_vec();
        self.even = sine.iter().all(|&b| b == 0.0);
        self.osc = self.sampled_osc();
        self
    }

    fn sampled_osc(&self) -> f64 {
        const SAMPLES: usize = 4096;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in 0..=SAMPLES {
            let v = self.value(self.period * s as f64 / SAMPLES as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    /// `max F − min F` over one period.
    pub fn osc(&self) -> f64 {
        self.osc
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.is_empty() && self.odd.is_empty()
    }

    /// `F(u)`
    pub fn value(&self, u: f64) -> f64 {
        let even: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, a)| a * (1.0 - ((k + 1) as f64 * u).cos()))
            .sum();
        let odd: f64 = self
            .odd
            .iter()
            .enumerate()
            .map(|(k, b)| b * ((k + 1) as f64 * u).sin())
            .sum();
        even + odd
    }

    /// `F(u + δ) − F(u)` without cancellation when `δ` is small.
    pub fn value_difference(&self, u: f64, delta: f64) -> f64 {
        let mid = u + 0.5 * delta;
        let even: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let k = (k + 1) as f64;
                2.0 * a * (k * mid).sin() * (0.5 * k * delta).sin()
            })
            .sum();
        let odd: f64 = self
            .odd
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let k = (k + 1) as f64;
                2.0 * b * (k * mid).cos() * (0.5 * k * delta).sin()
            })
            .sum();
        even + odd
    }

    /// `f(u) = F'(u)`
    pub fn force(&self, u: f64) -> f64 {
        let even: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let k = (k + 1) as f64;
                a * k * (k * u).sin()
            })
            .sum();
        let odd: f64 = self
            .odd
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let k = (k + 1) as f64;
                b * k * (k * u).cos()
            })
            .sum();
        even + odd
    }

    /// `f'(u) = F''(u)`
    pub fn force_derivative(&self, u: f64) -> f64 {
        let even: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let k = (k + 1) as f64;
                a * k * k * (k * u).cos()
            })
            .sum();
        let odd: f64 = self
            .odd
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let k = (k + 1) as f64;
                -b * k * k * (k * u).sin()
            })
            .sum();
        even + odd
    }

    /// Terms `(k, a_k cos ku − b_k sin ku)` and their `u`-derivative, the
    /// oscillating part of `F` that cell averaging damps.
    fn modes(&self, u: f64) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let len = self.coefficients.len().max(self.odd.len());
        (0..len).map(move |m| {
            let a = self.coefficients.get(m).copied().unwrap_or(0.0);
            let b = self.odd.get(m).copied().unwrap_or(0.0);
            let k = (m + 1) as f64;
            let (s, c) = (k * u).sin_cos();
            (k, a * c - b * s, -k * (a * s + b * c))
        })
    }

    /// Mean of `F` over a cell on which `u` is affine in two cell
    /// coordinates, with centre value `u` and half-increments `a`, `b`.
    pub fn cell_average(&self, u: f64, a: f64, b: f64) -> f64 {
        let constant: f64 = self.coefficients.iter().sum();
        let wave: f64 = self
            .modes(u)
            .map(|(k, p, _)| sinc(k * a).0 * sinc(k * b).0 * p)
            .sum();
        constant - wave
    }

    /// `cell_average(u + du, a + da, b + db) − cell_average(u, a, b)`
    /// without cancellation when the increments are small.
    pub fn cell_average_difference(&self, u: f64, a: f64, b: f64, du: f64, da: f64, db: f64) -> f64 {
        let len = self.coefficients.len().max(self.odd.len());
        let mid = u + 0.5 * du;
        (0..len)
            .map(|m| {
                let ca = self.coefficients.get(m).copied().unwrap_or(0.0);
                let cb = self.odd.get(m).copied().unwrap_or(0.0);
                let k = (m + 1) as f64;
                let (x0, dx) = (sinc(k * a).0, sinc_difference(k * a, k * da));
                let (y0, dy) = (sinc(k * b).0, sinc_difference(k * b, k * db));
                let (s, c) = (k * u).sin_cos();
                let z0 = ca * c - cb * s;
                let (sm, cm) = (k * mid).sin_cos();
                let half = (0.5 * k * du).sin();
                let dz = -2.0 * half * (ca * sm + cb * cm);
                // x1 y1 z1 − x0 y0 z0 split into single differences
                dx * (y0 + dy) * (z0 + dz) + x0 * dy * (z0 + dz) + x0 * y0 * dz
            })
            .map(|term| -term)
            .sum()
    }

    /// [`cell_average`](Self::cell_average) with its gradient and Hessian
    /// in `(u, a, b)`.
    pub fn cell_average_derivatives(&self, u: f64, a: f64, b: f64) -> CellAverage {
        let mut out = CellAverage {
            value: self.coefficients.iter().sum(),
            grad: [0.0; 3],
            hess: [[0.0; 3]; 3],
        };
        for (k, p, dp) in self.modes(u) {
            let (sa, da, dda) = sinc(k * a);
            let (sb, db, ddb) = sinc(k * b);
            let (da, dda, db, ddb) = (k * da, k * k * dda, k * db, k * k * ddb);
            let ddp = -k * k * p;
            out.value -= sa * sb * p;
            out.grad[0] -= sa * sb * dp;
            out.grad[1] -= da * sb * p;
            out.grad[2] -= sa * db * p;
            let h = [
                [sa * sb * ddp, da * sb * dp, sa * db * dp],
                [da * sb * dp, dda * sb * p, da * db * p],
                [sa * db * dp, da * db * p, sa * ddb * p],
            ];
            for (row, hrow) in out.hess.iter_mut().zip(h) {
                for (x, y) in row.iter_mut().zip(hrow) {
                    *x -= y;
                }
            }
        }
        out
    }

    /// Upper bound on `|f|`.
    pub fn force_bound(&self) -> f64 {
        let weighted = |c: &[f64]| -> f64 {
            c.iter()
                .enumerate()
                .map(|(k, a)| a.abs() * (k + 1) as f64)
                .sum()
        };
        weighted(&self.coefficients) + weighted(&self.odd)
    }

    pub fn max_value(&self) -> f64 {
        const SAMPLES: usize = 4096;
        (0..=SAMPLES)
            .map(|s| self.value(self.period * s as f64 / SAMPLES as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Cell mean of `F` with derivatives, see
/// [`PeriodicPotential::cell_average_derivatives`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellAverage {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

/// `sin x / x` with its first two derivatives, by series near zero.
fn sinc(x: f64) -> (f64, f64, f64) {
    let x2 = x * x;
    if x.abs() < 0.05 {
        (
            1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0)),
            -x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0)),
            -1.0 / 3.0 + x2 / 10.0 * (1.0 - x2 / 16.8),
        )
    } else {
        let (s, c) = x.sin_cos();
        (
            s / x,
            (x * c - s) / x2,
            ((2.0 - x2) * s - 2.0 * x * c) / (x2 * x),
        )
    }
}

/// `sinc(x + dx) − sinc(x)` without cancellation.
fn sinc_difference(x: f64, dx: f64) -> f64 {
    let y = x + dx;
    if x.abs() < 0.05 && y.abs() < 0.05 {
        // difference of the even series, factoring y² − x²
        let d2 = dx * (x + y);
        let (x2, y2) = (x * x, y * y);
        d2 * (-1.0 / 6.0 + (x2 + y2) / 120.0 - (x2 * x2 + x2 * y2 + y2 * y2) / 5040.0)
    } else if x == 0.0 {
        sinc(y).0 - 1.0
    } else if y == 0.0 {
        1.0 - sinc(x).0
    } else {
        let mid = x + 0.5 * dx;
        2.0 * mid.cos() * (0.5 * dx).sin() / y - x.sin() * dx / (x * y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sine_gordon_values() {
        let p = PeriodicPotential::sine_gordon();
        assert_eq!(p.value(0.0), 0.0);
        assert!((p.force(PI / 2.0) - 1.0).abs() < 1e-15);
        assert!((p.value(PI) - 2.0).abs() < 1e-15);
        assert_eq!(p.osc(), 2.0);
        assert_eq!(p.period(), 2.0 * PI);
        assert!(p.is_even());
    }

    #[test]
    fn zero_potential() {
        let p = PeriodicPotential::zero();
        assert_eq!(p.value(3.7), 0.0);
        assert_eq!(p.force(-1.2), 0.0);
        assert_eq!(p.osc(), 0.0);
        assert!(p.is_even());
        assert_eq!(PeriodicPotential::cosine_series(&[]), p);
    }

    #[test]
    fn cosine_series_matches_catalog() {
        let sg = PeriodicPotential::sine_gordon();
        let cs = PeriodicPotential::cosine_series(&[1.0]);
        for u in [0.0, PI / 2.0, PI] {
            assert!((sg.value(u) - cs.value(u)).abs() < 1e-15);
            assert!((sg.force(u) - cs.force(u)).abs() < 1e-15);
        }
        assert!((cs.osc() - 2.0).abs() < 1e-12);
        assert_eq!(PeriodicPotential::cosine_series(&[0.5, 0.25]).value(0.0), 0.0);
        assert!(PeriodicPotential::cosine_series(&[1.0, 1.0]).force(PI).abs() < 1e-14);
    }

    #[test]
    fn uneven_flag() {
        let p = PeriodicPotential::sine_gordon().with_sine_terms(&[0.3]);
        assert!(!p.is_even());
        assert!(p.osc() > 0.0);
    }

    #[test]
    fn cell_average_reduces_to_value_without_increments() {
        for p in catalog() {
            for u in [-2.0, 0.3, 7.0] {
                assert!((p.cell_average(u, 0.0, 0.0) - p.value(u)).abs() < 1e-14);
                let d = p.cell_average_derivatives(u, 0.0, 0.0);
                assert!((d.grad[0] - p.force(u)).abs() < 1e-14);
                assert!((d.hess[0][0] - p.force_derivative(u)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cell_average_matches_quadrature() {
        // Gauss–Legendre on [−1, 1]² of F(u + a s + b t) / 4
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189),
            (-0.538_469_310_105_683, 0.478_628_670_499_366),
            (0.0, 0.568_888_888_888_889),
            (0.538_469_310_105_683, 0.478_628_670_499_366),
            (0.906_179_845_938_664, 0.236_926_885_056_189),
        ];
        let p = PeriodicPotential::cosine_series(&[1.0, 0.3]).with_sine_terms(&[0.2]);
        let (u, a, b) = (0.7, 0.15, -0.1);
        let mut q = 0.0;
        for &(s, ws) in &nodes {
            for &(t, wt) in &nodes {
                q += ws * wt * p.value(u + a * s + b * t) / 4.0;
            }
        }
        assert!((p.cell_average(u, a, b) - q).abs() < 1e-9, "{q}");
    }

    #[test]
    fn cell_difference_is_accurate() {
        let p = PeriodicPotential::cosine_series(&[1.0, 0.3]).with_sine_terms(&[0.2]);
        for &(u, a, b) in &[(0.7, 0.01, 0.02), (3.0, 0.3, -2.0), (1e6, 40.0, 0.0), (0.2, 0.0, 0.0)] {
            for &d in &[1e-9, 1e-4, 0.3] {
                let direct = p.cell_average(u + d, a + 0.5 * d, b - d) - p.cell_average(u, a, b);
                let diff = p.cell_average_difference(u, a, b, d, 0.5 * d, -d);
                assert!((direct - diff).abs() < 1e-12, "{u} {a} {b} {d}: {direct} {diff}");
            }
            // small increments: compare with the directional derivative
            let g = p.cell_average_derivatives(u, a, b).grad;
            let h = 1e-12;
            let diff = p.cell_average_difference(u, a, b, h, 0.5 * h, -h);
            let lin = h * (g[0] + 0.5 * g[1] - g[2]);
            assert!((diff - lin).abs() < 1e-6 * h.max(lin.abs()), "{diff} {lin}");
        }
    }

    #[test]
    fn sinc_branches_agree() {
        for x in [0.049_999, 0.05] {
            let lo = sinc(x * (1.0 - 1e-12));
            let hi = sinc(x * (1.0 + 1e-12));
            assert!((lo.0 - hi.0).abs() < 1e-13);
            assert!((lo.1 - hi.1).abs() < 1e-12);
            assert!((lo.2 - hi.2).abs() < 1e-9);
        }
    }

    fn catalog() -> Vec<PeriodicPotential> {
        vec![
            PeriodicPotential::sine_gordon(),
            PeriodicPotential::zero(),
            PeriodicPotential::cosine_series(&[0.5, 0.25, -0.1]),
        ]
    }

    proptest! {
        #[test]
        fn periodic(u in -50.0f64..50.0) {
            for p in catalog() {
                let t = p.period();
                prop_assert!((p.value(u + t) - p.value(u)).abs() < 1e-12);
                prop_assert!((p.force(u + t) - p.force(u)).abs() < 1e-12);
            }
        }

        #[test]
        fn derivatives_consistent(u in -10.0f64..10.0) {
            let h = 1e-5;
            for p in catalog() {
                let df = (p.value(u + h) - p.value(u - h)) / (2.0 * h);
                prop_assert!((df - p.force(u)).abs() < 1e-8);
                let ddf = (p.force(u + h) - p.force(u - h)) / (2.0 * h);
                prop_assert!((ddf - p.force_derivative(u)).abs() < 1e-8);
            }
        }

        #[test]
        fn value_difference_matches(u in -10.0f64..10.0, delta in -3.0f64..3.0) {
            let p = PeriodicPotential::cosine_series(&[0.5, 0.25]).with_sine_terms(&[0.2]);
            let direct = p.value(u + delta) - p.value(u);
            prop_assert!((p.value_difference(u, delta) - direct).abs() < 1e-12);
        }

        #[test]
        fn cell_derivatives_match_differences(
            u in -6.0f64..6.0, a in -3.0f64..3.0, b in -3.0f64..3.0,
        ) {
            let p = PeriodicPotential::cosine_series(&[1.0, -0.4]).with_sine_terms(&[0.0, 0.3]);
            let d = p.cell_average_derivatives(u, a, b);
            prop_assert!((d.value - p.cell_average(u, a, b)).abs() < 1e-13);
            let h = 1e-6;
            let x = [u, a, b];
            for i in 0..3 {
                let shifted = |s: f64| {
                    let mut y = x;
                    y[i] += s;
                    p.cell_average_derivatives(y[0], y[1], y[2])
                };
                let (up, dn) = (shifted(h), shifted(-h));
                let g = (up.value - dn.value) / (2.0 * h);
                prop_assert!((g - d.grad[i]).abs() < 1e-7, "grad {i}: {g} vs {}", d.grad[i]);
                for j in 0..3 {
                    let hj = (up.grad[j] - dn.grad[j]) / (2.0 * h);
                    prop_assert!((hj - d.hess[i][j]).abs() < 1e-6, "hess {i}{j}");
                }
            }
        }

        #[test]
        fn even_potentials(u in -10.0f64..10.0) {
            for p in catalog() {
                prop_assert!(p.force(0.0).abs() < 1e-14);
                prop_assert!((p.value(u) - p.value(-u)).abs() < 1e-12);
                prop_assert!((p.force(u) + p.force(-u)).abs() < 1e-12);
            }
        }
    }
}
