//! Polar grids on sectors and disks, nodal fields, finite-difference
//! operators and quadrature.

use crate::error::{Error, Result};
use crate::potential::PeriodicPotential;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

/// The nodal sector `{0 < r < R, |θ| < π/(2d)}` of `Re(z^d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorDomain {
    degree: u32,
    radius: f64,
}

impl SectorDomain {
    pub fn new(degree: u32, radius: f64) -> Result<Self> {
        if degree < 2 {
            return Err(Error::Validation(format!("degree {degree} < 2")));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Validation(format!("radius {radius} must be positive")));
        }
        Ok(Self { degree, radius })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn half_angle(&self) -> f64 {
        PI / (2.0 * self.degree as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GridMode {
    /// `|θ| ≤ π/(2d)`, both rays included.
    Sector { degree: u32 },
    /// `θ ∈ [0, 2π)`, periodic.
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTag {
    Interior,
    Ray,
    Arc,
    /// Innermost ring, the stand-in for the origin.
    Origin,
}

/// Geometric radial grading `r_i = r_min q^i`, capped at `r_max`.
///
/// With `nr` given, `q` is chosen so that the last node lands on `r_max`.
pub fn geometric_radii(r_min: f64, r_max: f64, nr: usize) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_max > r_min) {
        return Err(Error::InvalidGrid(format!(
            "need 0 < r_min < r_max, got {r_min}, {r_max}"
        )));
    }
    if nr < 2 {
        return Err(Error::InvalidGrid(format!("nr = {nr} < 2")));
    }
    let log_ratio = (r_max / r_min).ln() / nr as f64;
    let mut radii: Vec<f64> = (0..=nr)
        .map(|i| r_min * (log_ratio * i as f64).exp())
        .collect();
    radii[nr] = r_max;
    Ok(radii)
}

/// Radii `r_min q^i` while below `r_max`, then `r_max` itself. A final
/// interval shorter than half a step is merged into its neighbour.
pub fn capped_radii(r_min: f64, ratio: f64, r_max: f64) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_max > r_min && ratio > 1.0) {
        return Err(Error::InvalidGrid(format!(
            "need 0 < r_min < r_max and ratio > 1, got {r_min}, {r_max}, {ratio}"
        )));
    }
    let log_q = ratio.ln();
    let steps = (r_max / r_min).ln() / log_q;
    let mut n = steps.floor() as usize;
    if steps - n as f64 > 1.0 - 1e-9 {
        n += 1;
    }
    let mut radii: Vec<f64> = (0..=n).map(|i| r_min * (log_q * i as f64).exp()).collect();
    let last = *radii.last().unwrap();
    let remainder = (r_max / last).ln() / log_q;
    // a short last interval is absorbed by stretching the previous one
    if remainder < 1e-9 || (remainder < 0.5 && radii.len() > 2) {
        *radii.last_mut().unwrap() = r_max;
    } else {
        radii.push(r_max);
    }
    Ok(radii)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    radii: Vec<f64>,
    angles: Vec<f64>,
    dtheta: f64,
    mode: GridMode,
}

impl PolarGrid {
    /// Sector grid with `n_theta` angular intervals (even, so `θ = 0` is a node).
    pub fn sector(degree: u32, radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidGrid(format!("degree {degree} < 2")));
        }
        if n_theta < 2 || !n_theta.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "sector n_theta must be even and ≥ 2, got {n_theta}"
            )));
        }
        check_radii(&radii)?;
        let dtheta = PI / (degree as f64 * n_theta as f64);
        let half = (n_theta / 2) as i64;
        let angles = (0..=n_theta as i64)
            .map(|k| (k - half) as f64 * dtheta)
            .collect();
        Ok(Self {
            radii,
            angles,
            dtheta,
            mode: GridMode::Sector { degree },
        })
    }

    /// Periodic full-disk grid with `n_theta` angles `2πk/n_theta`.
    pub fn disk(radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        if n_theta < 3 {
            return Err(Error::InvalidGrid(format!("disk n_theta = {n_theta} < 3")));
        }
        check_radii(&radii)?;
        let dtheta = 2.0 * PI / n_theta as f64;
        let angles = (0..n_theta).map(|k| k as f64 * dtheta).collect();
        Ok(Self {
            radii,
            angles,
            dtheta,
            mode: GridMode::Disk,
        })
    }

    /// Disk grid compatible with the symmetry group of `Re(z^d)`.
    pub fn symmetric_disk(degree: u32, radii: Vec<f64>, n_theta: usize) -> Result<Self> {
        if !n_theta.is_multiple_of(4 * degree as usize) {
            return Err(Error::InvalidGrid(format!(
                "disk n_theta = {n_theta} is not a multiple of 4d = {}",
                4 * degree
            )));
        }
        Self::disk(radii, n_theta)
    }

    /// The sector grid whose nodes are exactly the principal-sector nodes of
    /// a symmetric disk grid with the same radii.
    pub fn matching_sector(&self, degree: u32) -> Result<Self> {
        if self.mode != GridMode::Disk || !self.n_angles().is_multiple_of(4 * degree as usize) {
            return Err(Error::GridMismatch(format!(
                "{} angles cannot host a degree-{degree} sector",
                self.n_angles()
            )));
        }
        Self::sector(degree, self.radii.clone(), self.n_angles() / (2 * degree as usize))
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn n_radii(&self) -> usize {
        self.radii.len()
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn len(&self) -> usize {
        self.n_radii() * self.n_angles()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn r_min(&self) -> f64 {
        self.radii[0]
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    #[inline]
    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.n_angles() + k
    }

    pub fn is_periodic(&self) -> bool {
        self.mode == GridMode::Disk
    }

    pub fn tag(&self, i: usize, k: usize) -> NodeTag {
        if let GridMode::Sector { .. } = self.mode {
            if k == 0 || k + 1 == self.n_angles() {
                return NodeTag::Ray;
            }
        }
        if i == 0 {
            NodeTag::Origin
        } else if i + 1 == self.n_radii() {
            NodeTag::Arc
        } else {
            NodeTag::Interior
        }
    }

    /// Angular index range of interior nodes.
    pub fn interior_angles(&self) -> std::ops::Range<usize> {
        match self.mode {
            GridMode::Disk => 0..self.n_angles(),
            GridMode::Sector { .. } => 1..self.n_angles() - 1,
        }
    }

    pub fn interior_radii(&self) -> std::ops::Range<usize> {
        1..self.n_radii() - 1
    }

    /// Angular neighbours `(k−1, k+1)` of an interior angle, wrapping in disk mode.
    #[inline]
    pub fn angular_neighbours(&self, k: usize) -> (usize, usize) {
        let n = self.n_angles();
        match self.mode {
            GridMode::Disk => ((k + n - 1) % n, (k + 1) % n),
            GridMode::Sector { .. } => (k - 1, k + 1),
        }
    }

    /// Index of the ring closest to `r`.
    pub fn nearest_ring(&self, r: f64) -> Result<usize> {
        self.check_range(r)?;
        let mut best = 0;
        for (i, &ri) in self.radii.iter().enumerate() {
            if (ri - r).abs() < (self.radii[best] - r).abs() {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn check_range(&self, r: f64) -> Result<()> {
        let (lo, hi) = (self.r_min(), self.r_max());
        // the disk includes the hole r < r_min
        let lo_allowed = 0.0;
        if !(r >= lo_allowed && r <= hi * (1.0 + 1e-12)) {
            return Err(Error::Range { r, lo, hi });
        }
        Ok(())
    }

    /// Ratio `r_{i+1}/r_i` if the grading is geometric except possibly for
    /// the last interval; returns the ratio and the number of uniformly
    /// graded rings.
    pub fn geometric_ratio(&self) -> Result<(f64, usize)> {
        let r = &self.radii;
        if r.len() < 3 {
            return Err(Error::Grading("fewer than three rings".into()));
        }
        let log_q = (r[1] / r[0]).ln();
        let regular = |i: usize| ((r[i + 1] / r[i]).ln() - log_q).abs() <= 1e-10 * log_q.max(1.0);
        let n = r.len();
        let mut rings = n;
        for i in 1..n - 1 {
            if !regular(i) {
                if i == n - 2 {
                    rings = n - 1;
                } else {
                    return Err(Error::Grading(format!(
                        "interval {i} has ratio {} but the first has {}",
                        r[i + 1] / r[i],
                        r[1] / r[0]
                    )));
                }
            }
        }
        Ok((log_q.exp(), rings))
    }

    /// Map of the rotation by `π/d` on a symmetric disk grid.
    pub fn rotation_map(&self, degree: u32) -> Result<Vec<usize>> {
        let n = self.n_angles();
        if self.mode != GridMode::Disk || !n.is_multiple_of(2 * degree as usize) {
            return Err(Error::GridMismatch(
                "rotation by π/d requires a disk grid with n_theta divisible by 2d".into(),
            ));
        }
        let shift = n / (2 * degree as usize);
        let mut map = Vec::with_capacity(self.len());
        for i in 0..self.n_radii() {
            for k in 0..n {
                map.push(self.index(i, (k + shift) % n));
            }
        }
        Ok(map)
    }

    /// Trapezoid weights (with Jacobian `r`) for the region between rings
    /// `i_lo` and `i_hi`, over the grid's full angular span.
    pub fn quadrature_weights(&self, i_lo: usize, i_hi: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        let na = self.n_angles();
        for i in i_lo..=i_hi {
            let mut dr = 0.0;
            if i > i_lo {
                dr += 0.5 * (self.radii[i] - self.radii[i - 1]);
            }
            if i < i_hi {
                dr += 0.5 * (self.radii[i + 1] - self.radii[i]);
            }
            for k in 0..na {
                let dth = match self.mode {
                    GridMode::Disk => self.dtheta,
                    GridMode::Sector { .. } if k == 0 || k + 1 == na => 0.5 * self.dtheta,
                    GridMode::Sector { .. } => self.dtheta,
                };
                w[self.index(i, k)] = self.radii[i] * dr * dth;
            }
        }
        w
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 {
        return Err(Error::InvalidGrid(format!(
            "need at least 3 radii, got {}",
            radii.len()
        )));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("radii must be positive and increasing".into()));
    }
    Ok(())
}

/// Nodal values on a [`PolarGrid`], row-major over `(ring, angle)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<PolarGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<PolarGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<PolarGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<PolarGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &r in grid.radii() {
            for &th in grid.angles() {
                values.push(f(r, th));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<PolarGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, k)]
    }

    pub fn ring(&self, i: usize) -> &[f64] {
        let na = self.grid.n_angles();
        &self.values[i * na..(i + 1) * na]
    }

    pub fn tag(&self, i: usize, k: usize) -> NodeTag {
        self.grid.tag(i, k)
    }

    /// Pointwise `self − other` on the same grid.
    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("fields live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ScalarField {
            grid: self.grid.clone(),
            values,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV with header `r,theta,value`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 72);
        out.push_str("r,theta,value\n");
        for (i, &r) in self.grid.radii().iter().enumerate() {
            for (k, &th) in self.grid.angles().iter().enumerate() {
                let _ = writeln!(out, "{r:.16e},{th:.16e},{:.16e}", self.at(i, k));
            }
        }
        out
    }
}

/// `r^d cos(dθ)` at every node.
pub fn harmonic_polynomial(degree: u32, grid: Arc<PolarGrid>) -> ScalarField {
    let d = degree as f64;
    ScalarField::from_fn(grid, |r, th| r.powi(degree as i32) * (d * th).cos())
}

/// Radial coefficients of the conservative three-point stencil at ring `i`:
/// `(c_minus, c_plus, area)` where `r_i Δr_i (Δu)_rad = c_plus (u_{i+1} − u_i) − c_minus (u_i − u_{i−1})`
/// and `area = r_i (h_- + h_+)/2`.
#[inline]
pub(crate) fn radial_stencil(radii: &[f64], i: usize) -> (f64, f64, f64) {
    let (rm, r0, rp) = (radii[i - 1], radii[i], radii[i + 1]);
    let (hm, hp) = (r0 - rm, rp - r0);
    let c_minus = 0.5 * (r0 + rm) / hm;
    let c_plus = 0.5 * (rp + r0) / hp;
    (c_minus, c_plus, r0 * 0.5 * (hm + hp))
}

fn require_stencil_room(grid: &PolarGrid) -> Result<()> {
    let na = grid.n_angles();
    if grid.n_radii() < 3 || na < 3 {
        return Err(Error::InvalidGrid(format!(
            "{}×{} nodes leave no interior stencil",
            grid.n_radii(),
            na
        )));
    }
    Ok(())
}

/// Discrete `Δu = u_rr + u_r/r + u_θθ/r²` on interior nodes (zero elsewhere).
///
/// Radially the conservative three-point form `(1/r)(r u_r)_r` on the
/// non-uniform grid; angularly the standard three-point stencil.
pub fn laplacian(field: &ScalarField) -> Result<ScalarField> {
    let grid = field.grid();
    require_stencil_room(grid)?;
    let mut out = vec![0.0; grid.len()];
    let radii = grid.radii();
    let inv_dth2 = 1.0 / (grid.dtheta() * grid.dtheta());
    for i in grid.interior_radii() {
        let (cm, cp, area) = radial_stencil(radii, i);
        let r2 = radii[i] * radii[i];
        for k in grid.interior_angles() {
            let (km, kp) = grid.angular_neighbours(k);
            let u = field.at(i, k);
            let radial = (cp * (field.at(i + 1, k) - u) - cm * (u - field.at(i - 1, k))) / area;
            let angular = (field.at(i, kp) - 2.0 * u + field.at(i, km)) * inv_dth2 / r2;
            out[grid.index(i, k)] = radial + angular;
        }
    }
    ScalarField::new(grid.clone(), out)
}

/// Nodal gradient `(∂_r u, r⁻¹ ∂_θ u)`: centred differences inside,
/// second-order one-sided differences at the edges.
pub fn gradient(field: &ScalarField) -> (Vec<f64>, Vec<f64>) {
    let grid = field.grid();
    let (nr, na) = (grid.n_radii(), grid.n_angles());
    let radii = grid.radii();
    let dth = grid.dtheta();
    let mut ur = vec![0.0; grid.len()];
    let mut ut = vec![0.0; grid.len()];
    for i in 0..nr {
        for k in 0..na {
            let idx = grid.index(i, k);
            ur[idx] = if i == 0 {
                one_sided(radii[0], radii[1], radii[2], field.at(0, k), field.at(1, k), field.at(2, k))
            } else if i + 1 == nr {
                -one_sided(
                    -radii[nr - 1],
                    -radii[nr - 2],
                    -radii[nr - 3],
                    field.at(nr - 1, k),
                    field.at(nr - 2, k),
                    field.at(nr - 3, k),
                )
            } else {
                let hm = radii[i] - radii[i - 1];
                let hp = radii[i + 1] - radii[i];
                (hm * hm * field.at(i + 1, k) + (hp * hp - hm * hm) * field.at(i, k)
                    - hp * hp * field.at(i - 1, k))
                    / (hp * hm * (hp + hm))
            };
            let dudth = match grid.mode() {
                GridMode::Disk => {
                    let (km, kp) = grid.angular_neighbours(k);
                    (field.at(i, kp) - field.at(i, km)) / (2.0 * dth)
                }
                GridMode::Sector { .. } => {
                    if k == 0 {
                        (-3.0 * field.at(i, 0) + 4.0 * field.at(i, 1) - field.at(i, 2)) / (2.0 * dth)
                    } else if k + 1 == na {
                        (3.0 * field.at(i, na - 1) - 4.0 * field.at(i, na - 2)
                            + field.at(i, na - 3))
                            / (2.0 * dth)
                    } else {
                        (field.at(i, k + 1) - field.at(i, k - 1)) / (2.0 * dth)
                    }
                }
            };
            ut[idx] = dudth / radii[i];
        }
    }
    (ur, ut)
}

/// Second-order one-sided derivative at `x0` from samples at `x0 < x1 < x2`
/// (or the mirrored decreasing configuration).
fn one_sided(x0: f64, x1: f64, x2: f64, u0: f64, u1: f64, u2: f64) -> f64 {
    let (h1, h2) = (x1 - x0, x2 - x0);
    // derivative of the quadratic interpolant at x0
    let a1 = h2 / (h1 * (h2 - h1));
    let a2 = -h1 / (h2 * (h2 - h1));
    a1 * (u1 - u0) + a2 * (u2 - u0)
}

fn ring_range(grid: &PolarGrid, r_in: f64, r_out: f64) -> Result<(usize, usize)> {
    if r_in >= r_out {
        return Err(Error::Range {
            r: r_in,
            lo: grid.r_min(),
            hi: r_out,
        });
    }
    let lo = if r_in <= grid.r_min() {
        grid.check_range(r_in)?;
        0
    } else {
        grid.nearest_ring(r_in)?
    };
    let hi = grid.nearest_ring(r_out)?;
    if hi <= lo {
        return Err(Error::Range {
            r: r_out,
            lo: grid.radii()[lo],
            hi: grid.r_max(),
        });
    }
    Ok((lo, hi))
}

/// Trapezoid quadrature of `∫ (½|∇u|² + F(u)) r dr dθ` between the rings
/// nearest `r_in` and `r_out`, over the field's angular span.
pub fn dirichlet_energy_annulus(
    field: &ScalarField,
    potential: &PeriodicPotential,
    r_in: f64,
    r_out: f64,
) -> Result<f64> {
    let grid = field.grid();
    let (lo, hi) = ring_range(grid, r_in, r_out)?;
    let (ur, ut) = gradient(field);
    let w = grid.quadrature_weights(lo, hi);
    let mut sum = KahanSum::default();
    for i in lo..=hi {
        for k in 0..grid.n_angles() {
            let idx = grid.index(i, k);
            let density =
                0.5 * (ur[idx] * ur[idx] + ut[idx] * ut[idx]) + potential.value(field.values[idx]);
            sum.add(w[idx] * density);
        }
    }
    Ok(sum.total())
}

/// `max |field|` on the grid circle nearest `r`; returns `(value, radius used)`.
pub fn sup_on_circle(field: &ScalarField, r: f64) -> Result<(f64, f64)> {
    let grid = field.grid();
    let i = grid.nearest_ring(r)?;
    let value = field.ring(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((value, grid.radii()[i]))
}

/// Edge form `Σ_e c_e (a_p − a_q)(b_p − b_q)` of the discrete Dirichlet
/// integral over rings `0..=ring`, the same couplings the solver's
/// functional uses. With `a = b` it approximates `∫ |∇a|²` over the disk
/// (or sector) of that radius.
pub fn dirichlet_form(a: &ScalarField, b: &ScalarField, ring: usize) -> Result<f64> {
    let grid = a.grid();
    if grid != b.grid() {
        return Err(Error::GridMismatch("fields live on different grids".into()));
    }
    if ring >= grid.n_radii() {
        return Err(Error::Range {
            r: f64::NAN,
            lo: grid.r_min(),
            hi: grid.r_max(),
        });
    }
    let radii = grid.radii();
    let dth = grid.dtheta();
    let na = grid.n_angles();
    let mut sum = KahanSum::default();
    for i in 0..=ring {
        // angular edges carry the ring's share of the radial cell
        let hm = if i > 0 { radii[i] - radii[i - 1] } else { 0.0 };
        let hp = if i < ring { radii[i + 1] - radii[i] } else { 0.0 };
        let ca = 0.5 * (hm + hp) / (radii[i] * dth);
        for k in 0..na {
            if i < ring {
                let c = 0.5 * (radii[i] + radii[i + 1]) * dth / (radii[i + 1] - radii[i]);
                let (ia, ib) = (grid.index(i, k), grid.index(i + 1, k));
                sum.add(c * (a.values[ia] - a.values[ib]) * (b.values[ia] - b.values[ib]));
            }
            let kn = match grid.mode() {
                GridMode::Disk => (k + 1) % na,
                GridMode::Sector { .. } if k + 1 < na => k + 1,
                _ => continue,
            };
            let (ia, ib) = (grid.index(i, k), grid.index(i, kn));
            sum.add(ca * (a.values[ia] - a.values[ib]) * (b.values[ia] - b.values[ib]));
        }
    }
    Ok(sum.total())
}

/// Compensated summation, deterministic in the order of `add` calls.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum
    }
}
