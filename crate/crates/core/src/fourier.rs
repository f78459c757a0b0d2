//! Real trigonometric coefficients of uniformly sampled periodic data.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Forward and inverse transforms of one ring length, planned once.
pub struct RingTransform {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RingTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RingTransform").field("n", &self.n).finish()
    }
}

impl RingTransform {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Highest index whose coefficient is not aliased.
    pub fn max_index(&self) -> usize {
        (self.n / 2).saturating_sub(1)
    }

    /// `(a, b)` with `v(θ_k) = a_0 + Σ_{j=1}^{J} a_j cos jθ_k + b_j sin jθ_k`
    /// for `θ_k = 2πk/n`, truncated at `J = j_max`.
    pub fn coefficients(&self, values: &[f64], j_max: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        assert_eq!(values.len(), self.n, "ring length");
        if j_max > self.max_index() {
            return Err(Error::Aliasing { j: j_max, n_theta: self.n });
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 2.0 / self.n as f64;
        let mut a: Vec<f64> = buf[..=j_max].iter().map(|z| scale * z.re).collect();
        let mut b: Vec<f64> = buf[..=j_max].iter().map(|z| -scale * z.im).collect();
        a[0] *= 0.5;
        b[0] = 0.0;
        Ok((a, b))
    }

    /// Samples of `Σ_j s_j (a_j cos jθ_k + b_j sin jθ_k)` at the ring nodes.
    pub fn synthesize(&self, a: &[f64], b: &[f64], scale: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for j in 0..a.len().min(self.n / 2) {
            let s = scale(j);
            let c = if j == 0 {
                Complex64::new(s * a[0], 0.0)
            } else {
                0.5 * s * Complex64::new(a[j], -b[j])
            };
            buf[j] += c;
            if j > 0 {
                buf[self.n - j] += c.conj();
            }
        }
        self.inverse.process(&mut buf);
        buf.iter().map(|z| z.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn recovers_trigonometric_polynomial() {
        let n = 64;
        let t = RingTransform::new(n);
        let v: Vec<f64> = (0..n)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / n as f64;
                1.5 + 2.0 * (3.0 * th).cos() - 0.25 * (5.0 * th).sin()
            })
            .collect();
        let (a, b) = t.coefficients(&v, 31).unwrap();
        assert!((a[0] - 1.5).abs() < 1e-14);
        assert!((a[3] - 2.0).abs() < 1e-14);
        assert!((b[5] + 0.25).abs() < 1e-14);
        let back = t.synthesize(&a, &b, |_| 1.0);
        for (x, y) in v.iter().zip(&back) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_aliased_index() {
        let t = RingTransform::new(16);
        assert!(matches!(
            t.coefficients(&[0.0; 16], 8),
            Err(Error::Aliasing { j: 8, n_theta: 16 })
        ));
    }
}
