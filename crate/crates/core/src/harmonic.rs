//! Harmonic extension of circle traces and the comparison estimates between
//! a solution and the harmonic function sharing its trace.

use crate::error::{Error, Result};
use crate::fourier::RingTransform;
use crate::geometry::{dirichlet_form, GridMode, ScalarField};
use crate::potential::PeriodicPotential;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The harmonic function on `B_r` whose trace on `∂B_r` is a truncated
/// Fourier series:
/// `value(ρ, θ) = a_0 + Σ_{j≥1} (ρ/r)^j (a_j cos jθ + b_j sin jθ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicExtension {
    radius: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl HarmonicExtension {
    pub fn from_coefficients(radius: f64, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if !(radius > 0.0) || a.is_empty() || a.len() != b.len() {
            return Err(Error::Validation(
                "extension needs a positive radius and matching coefficient lists".into(),
            ));
        }
        Ok(Self { radius, a, b })
    }

    /// Extension of a trace sampled at `θ_k = 2πk/n`.
    pub fn from_trace(radius: f64, trace: &[f64], j_max: usize) -> Result<Self> {
        let (a, b) = RingTransform::new(trace.len()).coefficients(trace, j_max)?;
        Self::from_coefficients(radius, a, b)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Cosine coefficients `a_0..=a_J` of the trace.
    pub fn cosine_coefficients(&self) -> &[f64] {
        &self.a
    }

    /// Sine coefficients `b_0..=b_J` of the trace (`b_0 = 0`).
    pub fn sine_coefficients(&self) -> &[f64] {
        &self.b
    }

    pub fn truncation(&self) -> usize {
        self.a.len() - 1
    }

    /// `h(z)` and its first two complex derivatives, where the extension is
    /// `Re h` with `h(z) = Σ (a_j − i b_j)(z/r)^j`.
    fn series(&self, rho: f64, theta: f64) -> [Complex64; 3] {
        let w = Complex64::from_polar(rho / self.radius, theta);
        let inv_r = 1.0 / self.radius;
        let mut h = [Complex64::new(0.0, 0.0); 3];
        // Horner in w for h, h'·r and h''·r²
        for j in (0..self.a.len()).rev() {
            let c = Complex64::new(self.a[j], -self.b[j]);
            h[2] = h[2] * w + 2.0 * h[1];
            h[1] = h[1] * w + h[0];
            h[0] = h[0] * w + c;
        }
        [h[0], h[1] * inv_r, h[2] * inv_r * inv_r]
    }

    pub fn value(&self, rho: f64, theta: f64) -> f64 {
        self.series(rho, theta)[0].re
    }

    /// Cartesian gradient `(∂_x, ∂_y)`.
    pub fn gradient(&self, rho: f64, theta: f64) -> [f64; 2] {
        let d = self.series(rho, theta)[1];
        [d.re, -d.im]
    }

    /// Cartesian Hessian `[[∂_xx, ∂_xy], [∂_xy, ∂_yy]]`.
    pub fn hessian(&self, rho: f64, theta: f64) -> [[f64; 2]; 2] {
        let d = self.series(rho, theta)[2];
        [[d.re, -d.im], [-d.im, -d.re]]
    }

    /// Values on ring `i` of a disk grid, `ρ ≤ r` assumed.
    fn ring_values(&self, transform: &RingTransform, rho: f64) -> Vec<f64> {
        let q = rho / self.radius;
        transform.synthesize(&self.a, &self.b, |j| q.powi(j as i32))
    }

    /// `field` with rings of radius ≤ the extension radius replaced by the
    /// extension's values.
    pub fn sample_inside(&self, field: &ScalarField) -> Result<ScalarField> {
        let grid = field.grid();
        disk_only(field)?;
        let transform = RingTransform::new(grid.n_angles());
        let mut out = field.clone();
        for (i, &rho) in grid.radii().iter().enumerate() {
            if rho > self.radius * (1.0 + 1e-12) {
                break;
            }
            let ring = self.ring_values(&transform, rho);
            for (k, v) in ring.into_iter().enumerate() {
                out.values_mut()[grid.index(i, k)] = v;
            }
        }
        Ok(out)
    }
}

fn disk_only(field: &ScalarField) -> Result<()> {
    if field.grid().mode() != GridMode::Disk {
        return Err(Error::GridMismatch("harmonic extension needs a disk field".into()));
    }
    Ok(())
}

/// Extension of the trace of `field` on the grid circle nearest `r`, keeping
/// modes `0..=j_max` (at most `n_θ/2 − 1`).
pub fn harmonic_extension(field: &ScalarField, r: f64, j_max: usize) -> Result<HarmonicExtension> {
    disk_only(field)?;
    let grid = field.grid();
    let i = grid.nearest_ring(r)?;
    HarmonicExtension::from_trace(grid.radii()[i], field.ring(i), j_max)
}

/// Energy comparison on `B_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyComparison {
    /// Radius of the grid circle carrying the trace.
    pub radius: f64,
    /// `∫_{B_r} |∇φ^r − ∇u|²`
    pub lhs: f64,
    /// `∫_{B_r} |∇u|² − |∇φ^r|²`
    pub rhs_identity: f64,
    /// `2 osc(F) π r²`
    pub bound: f64,
}

/// Compares the Dirichlet integrals of `u` and of its harmonic extension.
///
/// Both integrals use the solver's edge form, so `lhs − rhs_identity` is
/// `−2∫∇φ^r·∇(u − φ^r)`, which vanishes up to the truncation error of the
/// discrete Laplacian applied to `φ^r`.
pub fn lemma31_check(
    u: &ScalarField,
    extension: &HarmonicExtension,
    potential: &PeriodicPotential,
    r: f64,
) -> Result<EnergyComparison> {
    disk_only(u)?;
    let grid = u.grid();
    let ring = grid.nearest_ring(r)?;
    let radius = grid.radii()[ring];
    if (radius - extension.radius()).abs() > 1e-12 * radius {
        return Err(Error::GridMismatch(format!(
            "extension lives on r = {} but the check uses the circle r = {radius}",
            extension.radius()
        )));
    }
    let h = extension.sample_inside(u)?;
    let diff = h.sub(u)?;
    let lhs = dirichlet_form(&diff, &diff, ring)?;
    let rhs_identity = dirichlet_form(u, u, ring)? - dirichlet_form(&h, &h, ring)?;
    Ok(EnergyComparison {
        radius,
        lhs,
        rhs_identity,
        bound: 2.0 * potential.osc() * PI * radius * radius,
    })
}

/// `sup |φ^r − u|` over grid nodes in `B_{r/2}`.
pub fn lemma32_check(u: &ScalarField, extension: &HarmonicExtension, r: f64) -> Result<f64> {
    disk_only(u)?;
    let grid = u.grid();
    grid.check_range(r)?;
    let transform = RingTransform::new(grid.n_angles());
    let mut sup = 0.0f64;
    for (i, &rho) in grid.radii().iter().enumerate() {
        if rho > 0.5 * r {
            break;
        }
        let ring = extension.ring_values(&transform, rho);
        for (e, v) in ring.iter().zip(u.ring(i)) {
            sup = sup.max((e - v).abs());
        }
    }
    Ok(sup)
}

/// Distance between the extension and `φ = Re z^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolynomialComparison {
    /// `sup_{B_{r/2}} |φ^r − φ|`
    pub sup_diff: f64,
    /// `sup_{B_{r/2}} ‖∇²φ^r − ∇²φ‖` in the spectral norm.
    pub hessian_diff: f64,
}

/// Both differences are harmonic (the Hessian norm subharmonic), so their
/// suprema over the ball are attained on its boundary circle, which is
/// sampled densely. The ball is `B_{r/2}`, shrunk to half the extension
/// radius when the trace circle lies inside `r`.
pub fn phi_r_vs_phi_check(extension: &HarmonicExtension, d: u32, r: f64) -> Result<PolynomialComparison> {
    if !(r > 0.0) {
        return Err(Error::Validation(format!("ball radius {r} must be positive")));
    }
    let mut a = extension.a.clone();
    let d = d as usize;
    if a.len() <= d {
        a.resize(d + 1, 0.0);
    }
    let mut b = extension.b.clone();
    b.resize(a.len(), 0.0);
    a[d] -= extension.radius.powi(d as i32);
    let diff = HarmonicExtension {
        radius: extension.radius,
        a,
        b,
    };
    let samples = (16 * diff.truncation()).max(1024);
    let rho = 0.5 * r.min(extension.radius);
    let mut out = PolynomialComparison {
        sup_diff: 0.0,
        hessian_diff: 0.0,
    };
    for k in 0..samples {
        let theta = 2.0 * PI * k as f64 / samples as f64;
        let [h, _, h2] = diff.series(rho, theta);
        out.sup_diff = out.sup_diff.max(h.re.abs());
        // eigenvalues of [[p, q], [q, −p]] are ±|h''|
        out.hessian_diff = out.hessian_diff.max(h2.norm());
    }
    Ok(out)
}
