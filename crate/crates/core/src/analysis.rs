//! Exponential polar coordinates and the mode-by-mode description of a
//! solution: Fourier profiles `c_j(t)`, their forcing, decay fits and the
//! mode ODE.

use crate::error::{Error, Result};
use crate::fourier::RingTransform;
use crate::geometry::{GridMode, ScalarField};
use crate::potential::PeriodicPotential;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `v(t, θ) = e^{−dt} u(e^t, θ)` on a uniform `t` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarProfile {
    degree: u32,
    t: Vec<f64>,
    theta: Vec<f64>,
    /// row-major over `(t, θ)`
    values: Vec<f64>,
}

impl PolarProfile {
    /// Profile sampled from `v(t, θ)` on `n_theta` uniform angles in
    /// `[0, 2π)`; `t` must be uniformly spaced.
    pub fn from_fn(degree: u32, t: Vec<f64>, n_theta: usize, v: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if t.len() < 2 || n_theta < 4 {
            return Err(Error::Validation("a profile needs two t samples and four angles".into()));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.abs()) || !(dt > 0.0) {
            return Err(Error::Validation("profile t samples must be increasing and uniform".into()));
        }
        let theta: Vec<f64> = (0..n_theta).map(|k| 2.0 * PI * k as f64 / n_theta as f64).collect();
        let values = t.iter().flat_map(|&ti| theta.iter().map(move |&th| (ti, th))).map(|(ti, th)| v(ti, th)).collect();
        Ok(Self { degree, t, theta, values })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn n_t(&self) -> usize {
        self.t.len()
    }

    pub fn n_theta(&self) -> usize {
        self.theta.len()
    }

    pub fn dt(&self) -> f64 {
        self.t[1] - self.t[0]
    }

    pub fn ring(&self, i: usize) -> &[f64] {
        let n = self.theta.len();
        &self.values[i * n..(i + 1) * n]
    }

    /// `sup_θ |v(t_i, ·) − w(t_i, ·)|` per sample.
    pub fn sup_difference(&self, other: &PolarProfile) -> Result<Vec<f64>> {
        if self.t != other.t || self.theta != other.theta {
            return Err(Error::GridMismatch("profiles are sampled differently".into()));
        }
        Ok((0..self.n_t())
            .map(|i| {
                self.ring(i)
                    .iter()
                    .zip(other.ring(i))
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .collect())
    }
}

/// Rescales a disk field to exponential polar coordinates. A capped last
/// ring that breaks the geometric grading is dropped.
pub fn to_polar_profile(u: &ScalarField, d: u32) -> Result<PolarProfile> {
    let grid = u.grid();
    if grid.mode() != GridMode::Disk {
        return Err(Error::GridMismatch("polar profiles need a disk field".into()));
    }
    let (_, rings) = grid.geometric_ratio()?;
    let t: Vec<f64> = grid.radii()[..rings].iter().map(|r| r.ln()).collect();
    let dt = (t[rings - 1] - t[0]) / (rings - 1) as f64;
    // uniform sampling in t is what the mode ODE stencils rely on
    let t: Vec<f64> = (0..rings).map(|i| t[0] + i as f64 * dt).collect();
    let mut values = Vec::with_capacity(rings * grid.n_angles());
    for (i, &ti) in t.iter().enumerate() {
        let scale = (-(d as f64) * ti).exp();
        values.extend(u.ring(i).iter().map(|v| scale * v));
    }
    Ok(PolarProfile {
        degree: d,
        t,
        theta: grid.angles().to_vec(),
        values,
    })
}

/// Samples of one Fourier mode `c_j(t) = (1/π)∫ v cos jθ dθ` (`1/2π` for
/// `j = 0`), optionally with the forcing `g_j(t) = e^{(2−d)t} I_j(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSeries {
    pub j: usize,
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    /// `I_j(t) = ∫ f(e^{dt} v) cos jθ dθ`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integral: Option<Vec<f64>>,
    /// Samples where `v(t, ·)` has a degenerate critical point; excluded
    /// from fits of the forcing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<bool>,
}

/// Cosine coefficients of the profile for `j = 0..=j_max`.
///
/// The sine coefficients must vanish (evenness in `θ`); anything above
/// `1e−10` times the largest amplitude is a validation error.
pub fn fourier_modes(profile: &PolarProfile, j_max: usize) -> Result<Vec<ModeSeries>> {
    let transform = RingTransform::new(profile.n_theta());
    let mut modes: Vec<ModeSeries> = (0..=j_max)
        .map(|j| ModeSeries {
            j,
            t: profile.t.clone(),
            c: Vec::with_capacity(profile.n_t()),
            g: None,
            integral: None,
            degenerate: Vec::new(),
        })
        .collect();
    let (mut amplitude, mut odd) = (0.0f64, 0.0f64);
    for i in 0..profile.n_t() {
        let (a, b) = transform.coefficients(profile.ring(i), j_max)?;
        for (m, c) in modes.iter_mut().zip(&a) {
            m.c.push(*c);
        }
        amplitude = a.iter().fold(amplitude, |m, c| m.max(c.abs()));
        odd = b.iter().fold(odd, |m, c| m.max(c.abs()));
    }
    if odd > 1e-10 * amplitude {
        return Err(Error::Validation(format!(
            "profile is not even in θ: sine coefficient {odd:e} against amplitude {amplitude:e}"
        )));
    }
    Ok(modes)
}

/// `max_{j forbidden, t} |c_j(t)| / max_t |c_d(t)|`, the forbidden modes
/// being those `j` that are not odd multiples of `d`.
pub fn selection_rule_check(modes: &[ModeSeries], d: u32) -> Result<f64> {
    let d = d as usize;
    let find = |j: usize| modes.iter().find(|m| m.j == j);
    let top = modes.iter().map(|m| m.j).max().unwrap_or(0);
    if top < 3 * d {
        return Err(Error::Precondition(format!("modes reach j = {top}, need at least {}", 3 * d)));
    }
    let principal = find(d).ok_or_else(|| Error::Precondition(format!("mode {d} missing")))?;
    let scale = principal.c.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let forbidden = modes
        .iter()
        .filter(|m| m.j % (2 * d) != d)
        .flat_map(|m| m.c.iter())
        .fold(0.0f64, |m, c| m.max(c.abs()));
    Ok(forbidden / scale)
}

/// Least-squares fit of `log|value| ≈ log_constant + exponent · t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub exponent: f64,
    pub log_constant: f64,
    /// Root mean square of the log deviations.
    pub residual: f64,
    /// Largest noise floor among the samples used.
    pub noise_floor: f64,
    pub samples: usize,
}

const MIN_SAMPLES: usize = 5;

/// Fits samples inside `window` whose magnitude exceeds ten times the noise
/// floor.
pub fn decay_fit(t: &[f64], values: &[f64], window: (f64, f64), noise_floor: f64) -> Result<DecayFit> {
    decay_fit_with_floors(t, values, window, &vec![noise_floor; t.len()])
}

/// [`decay_fit`] with a floor per sample.
pub fn decay_fit_with_floors(
    t: &[f64],
    values: &[f64],
    window: (f64, f64),
    floors: &[f64],
) -> Result<DecayFit> {
    if !(window.0 < window.1) {
        return Err(Error::Validation(format!("empty fit window {window:?}")));
    }
    if t.len() != values.len() || t.len() != floors.len() {
        return Err(Error::Validation("fit inputs differ in length".into()));
    }
    let tol = 1e-9 * (window.1 - window.0);
    let used: Vec<(f64, f64, f64)> = (0..t.len())
        .filter(|&i| t[i] >= window.0 - tol && t[i] <= window.1 + tol)
        .filter(|&i| values[i].is_finite() && values[i].abs() > 10.0 * floors[i] && values[i] != 0.0)
        .map(|i| (t[i], values[i].abs().ln(), floors[i]))
        .collect();
    if used.len() < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            usable: used.len(),
            needed: MIN_SAMPLES,
        });
    }
    let n = used.len() as f64;
    let mt = used.iter().map(|p| p.0).sum::<f64>() / n;
    let my = used.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = used.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = used.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let log_constant = my - exponent * mt;
    let residual = (used
        .iter()
        .map(|p| (p.1 - log_constant - exponent * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(DecayFit {
        window,
        exponent,
        log_constant,
        residual,
        noise_floor: used.iter().fold(0.0f64, |m, p| m.max(p.2)),
        samples: used.len(),
    })
}

/// Fit of the tail envelope `sup_{s ≥ t, s in window} |value(s)|`, for
/// quantities that oscillate through zero under a decaying bound.
pub fn decay_fit_envelope(t: &[f64], values: &[f64], window: (f64, f64), floors: &[f64]) -> Result<DecayFit> {
    let mut envelope = vec![0.0; values.len()];
    let mut running = 0.0f64;
    for i in (0..values.len()).rev() {
        if t[i] <= window.1 {
            running = running.max(values[i].abs());
        }
        envelope[i] = running;
    }
    decay_fit_with_floors(t, &envelope, window, floors)
}

/// `c_j` and the forcing `g_j` of the potential evaluated pointwise,
/// `I_j(t) = ∫ f(e^{dt} v) cos jθ dθ` by the rectangle rule on the grid.
pub fn oscillatory_integral(profile: &PolarProfile, potential: &PeriodicPotential, j: usize) -> Result<ModeSeries> {
    let d = profile.degree as f64;
    let forces: Vec<Vec<f64>> = (0..profile.n_t())
        .map(|i| {
            let scale = (d * profile.t[i]).exp();
            profile.ring(i).iter().map(|v| potential.force(scale * v)).collect()
        })
        .collect();
    forcing_series(profile, j, |i| forces[i].clone())
}

/// Same as [`oscillatory_integral`] with a given force field on the disk,
/// such as the discrete solver's cell-averaged force, so that the mode ODE
/// sees exactly the forcing the discrete equation balances.
pub fn oscillatory_integral_of_force(profile: &PolarProfile, force: &ScalarField, j: usize) -> Result<ModeSeries> {
    let grid = force.grid();
    if grid.mode() != GridMode::Disk
        || grid.n_angles() != profile.n_theta()
        || grid.n_radii() < profile.n_t()
        || (grid.radii()[0].ln() - profile.t[0]).abs() > 1e-12 * profile.t[0].abs().max(1.0)
    {
        return Err(Error::GridMismatch("force field does not match the profile".into()));
    }
    forcing_series(profile, j, |i| force.ring(i).to_vec())
}

fn forcing_series(profile: &PolarProfile, j: usize, forces: impl Fn(usize) -> Vec<f64>) -> Result<ModeSeries> {
    let n = profile.n_theta();
    if j > n / 2 - 1 {
        return Err(Error::Aliasing { j, n_theta: n });
    }
    let d = profile.degree as f64;
    let dth = 2.0 * PI / n as f64;
    let cos_j: Vec<f64> = profile.theta.iter().map(|th| (j as f64 * th).cos()).collect();
    let norm = if j == 0 { 1.0 / (2.0 * PI) } else { 1.0 / PI };
    let mut out = ModeSeries {
        j,
        t: profile.t.clone(),
        c: Vec::with_capacity(profile.n_t()),
        g: Some(Vec::with_capacity(profile.n_t())),
        integral: Some(Vec::with_capacity(profile.n_t())),
        degenerate: Vec::with_capacity(profile.n_t()),
    };
    for i in 0..profile.n_t() {
        let ring = profile.ring(i);
        let c = norm * dth * ring.iter().zip(&cos_j).map(|(v, c)| v * c).sum::<f64>();
        let integral = dth * forces(i).iter().zip(&cos_j).map(|(f, c)| f * c).sum::<f64>();
        out.c.push(c);
        out.integral.as_mut().unwrap().push(integral);
        out.g.as_mut().unwrap().push(((2.0 - d) * profile.t[i]).exp() * integral);
        out.degenerate.push(!nondegenerate_critical_points(ring, dth, d));
    }
    Ok(out)
}

/// Every grid-detected critical point of `v(t, ·)` has `|∂²_θ v| > 0.1 d²`.
fn nondegenerate_critical_points(ring: &[f64], dth: f64, d: f64) -> bool {
    let n = ring.len();
    let at = |k: isize| ring[k.rem_euclid(n as isize) as usize];
    let slope = |k: isize| at(k + 1) - at(k);
    (0..n as isize).all(|k| {
        // the derivative changes sign between the half-steps around k
        if slope(k - 1) * slope(k) > 0.0 {
            return true;
        }
        let second = (at(k + 1) - 2.0 * at(k) + at(k - 1)) / (dth * dth);
        second.abs() > 0.1 * d * d
    })
}

/// Per interior sample, `c_j″ + 2d c_j′ + (d² − j²) c_j + g_j/π` with centred
/// differences in `t` (`g_0/2π` for `j = 0`); the ODE the modes of a
/// solution obey once the `θ` integral is normalised like `c_j`.
pub fn mode_ode_residuals(mode: &ModeSeries, d: u32) -> Result<Vec<f64>> {
    let g = mode
        .g
        .as_ref()
        .ok_or_else(|| Error::Precondition("mode carries no forcing samples".into()))?;
    let n = mode.t.len();
    if n < 3 {
        return Err(Error::Precondition("mode needs at least three samples".into()));
    }
    let dt = (mode.t[n - 1] - mode.t[0]) / (n - 1) as f64;
    let d = d as f64;
    let j = mode.j as f64;
    let norm = if mode.j == 0 { 0.5 / PI } else { 1.0 / PI };
    let c = &mode.c;
    Ok((1..n - 1)
        .map(|i| {
            let c2 = (c[i + 1] - 2.0 * c[i] + c[i - 1]) / (dt * dt);
            let c1 = (c[i + 1] - c[i - 1]) / (2.0 * dt);
            c2 + 2.0 * d * c1 + (d * d - j * j) * c[i] + norm * g[i]
        })
        .collect())
}

/// `max |mode ODE residual|` over interior samples with `t` in `window`
/// (all interior samples when `None`).
pub fn mode_ode_residual(mode: &ModeSeries, d: u32, window: Option<(f64, f64)>) -> Result<f64> {
    let res = mode_ode_residuals(mode, d)?;
    Ok(res
        .iter()
        .enumerate()
        .filter(|(i, _)| window.is_none_or(|(a, b)| mode.t[i + 1] >= a && mode.t[i + 1] <= b))
        .fold(0.0f64, |m, (_, r)| m.max(r.abs())))
}

/// Samples of `sup_{|z|=r} |u − reference|` per ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCurve {
    pub r: Vec<f64>,
    pub sup_err: Vec<f64>,
    pub floor: Vec<f64>,
}

/// Per-ring sup of `|u − reference|` with a noise floor per ring: the
/// caller's floor (for instance the solver's correction size) plus the
/// rounding of the values themselves.
pub fn growth_curve(u: &ScalarField, reference: &ScalarField, floors: Option<&[f64]>) -> Result<GrowthCurve> {
    let diff = u.sub(reference)?;
    let grid = u.grid();
    let mut out = GrowthCurve {
        r: grid.radii().to_vec(),
        sup_err: Vec::with_capacity(grid.n_radii()),
        floor: Vec::with_capacity(grid.n_radii()),
    };
    for i in 0..grid.n_radii() {
        out.sup_err.push(diff.ring(i).iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let size = u.ring(i).iter().chain(reference.ring(i)).fold(0.0f64, |m, v| m.max(v.abs()));
        let given = floors.map_or(0.0, |f| f[i]);
        out.floor.push(given + 16.0 * f64::EPSILON * size);
    }
    Ok(out)
}

/// Exponent of `sup_{|z|=r} |u − reference|` against `log r` over radii in
/// `window`; `reference` is `φ` for the literal quantity.
pub fn growth_exponent(curve: &GrowthCurve, window: (f64, f64)) -> Result<DecayFit> {
    let t: Vec<f64> = curve.r.iter().map(|r| r.ln()).collect();
    let above = curve
        .r
        .iter()
        .zip(curve.sup_err.iter().zip(&curve.floor))
        .filter(|(r, _)| **r >= window.0 && **r <= window.1)
        .any(|(_, (e, f))| *e > 10.0 * f);
    if !above {
        return Err(Error::SignalBelowFloor(format!(
            "sup |u − reference| never exceeds ten times its floor on r in {window:?}"
        )));
    }
    decay_fit_with_floors(&t, &curve.sup_err, (window.0.ln(), window.1.ln()), &curve.floor)
}
