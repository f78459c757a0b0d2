//! Run configuration, run directories and the diagnostics computed from a
//! stored solution.
//!
//! A run directory holds `config.json` (the validated configuration),
//! `solution_sector.csv`, `solution_disk.csv` and `report.json`. Analyses
//! add new files next to them and never touch the solution files.

use crate::analysis::{
    decay_fit_envelope, decay_fit_with_floors, fourier_modes, growth_curve, growth_exponent,
    mode_ode_residual, oscillatory_integral_of_force, selection_rule_check, to_polar_profile,
    DecayFit, GrowthCurve, ModeSeries,
};
use crate::error::{Error, Result};
use crate::geometry::{harmonic_polynomial, laplacian, NodeTag, PolarGrid, ScalarField, SectorDomain};
use crate::harmonic::{harmonic_extension, lemma31_check, lemma32_check, phi_r_vs_phi_check};
use crate::potential::{PeriodicPotential, PotentialSpec};
use crate::solver::{
    continuation, correction_size, discrete_force, extend_by_symmetry, solve_sector, solve_sector_from,
    CauchyTable, ContinuationGrid, SolveOptions, SolveReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const SECTOR_FILE: &str = "solution_sector.csv";
pub const DISK_FILE: &str = "solution_disk.csv";
pub const FITS_FILE: &str = "fits.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct AnalysisOptions {
    /// Highest Fourier mode; `None` means `min(3d + 2, Nθ/2 − 1)`.
    pub j_max: Option<usize>,
    /// Fit window in `r`; `None` means `[R/20, R/2]`.
    pub window: Option<(f64, f64)>,
    /// Radii for the energy and extension checks; empty means
    /// `R·(1/20, 1/10, 1/5, 2/5)`.
    pub lemma_radii: Vec<f64>,
}


/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialSpec,
    #[serde(rename = "d")]
    pub degree: u32,
    #[serde(rename = "R")]
    pub radius: f64,
    /// Continuation radii ending at `R`; empty for a single solve.
    #[serde(default)]
    pub radii: Vec<f64>,
    /// Geometric intervals on `[r_min, R]`.
    pub nr: usize,
    /// Angular intervals of the full disk.
    pub ntheta: usize,
    /// `r_min / R`
    #[serde(default = "default_r_min_factor")]
    pub r_min_factor: f64,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub analysis: AnalysisOptions,
    /// Amplitude of the random bump added to the initial guess.
    #[serde(default)]
    pub initial_perturbation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_r_min_factor() -> f64 {
    1e-3
}

impl RunConfig {
    pub fn new(potential: PotentialSpec, degree: u32, radius: f64, nr: usize, ntheta: usize) -> Self {
        Self {
            potential,
            degree,
            radius,
            radii: Vec::new(),
            nr,
            ntheta,
            r_min_factor: default_r_min_factor(),
            solver: SolveOptions::default(),
            analysis: AnalysisOptions::default(),
            initial_perturbation: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(msg));
        if self.degree < 2 {
            return fail(format!("d = {} must be at least 2", self.degree));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return fail(format!("R = {} must be positive", self.radius));
        }
        if self.nr < 4 {
            return fail(format!("nr = {} must be at least 4", self.nr));
        }
        if self.ntheta == 0 || !self.ntheta.is_multiple_of(4 * self.degree as usize) {
            return fail(format!("ntheta = {} is not a positive multiple of 4d = {}", self.ntheta, 4 * self.degree));
        }
        if !(self.r_min_factor > 0.0 && self.r_min_factor < 1.0) {
            return fail(format!("r_min_factor = {} must lie in (0, 1)", self.r_min_factor));
        }
        if !self.radii.is_empty() {
            if self.radii.len() < 2 || self.radii.windows(2).any(|w| !(w[1] > w[0])) {
                return fail("radii must be strictly increasing with at least two entries".into());
            }
            if *self.radii.last().unwrap() != self.radius {
                return fail(format!("the last continuation radius must equal R = {}", self.radius));
            }
            if self.radii[0] <= self.radius * self.r_min_factor {
                return fail("the first continuation radius lies inside r_min".into());
            }
        }
        let r_min = self.radius * self.r_min_factor;
        if let Some((a, b)) = self.analysis.window {
            if !(r_min < a && a < b && b <= self.radius) {
                return fail(format!("fit window ({a}, {b}) is not inside ({r_min}, {}]", self.radius));
            }
        }
        if let Some(&bad) = self.analysis.lemma_radii.iter().find(|&&r| !(r > r_min && r <= self.radius)) {
            return fail(format!("lemma radius {bad} is outside ({r_min}, {}]", self.radius));
        }
        if let Some(j) = self.analysis.j_max {
            if j > self.ntheta / 2 - 1 {
                return fail(format!("j_max = {j} aliases on {} angles", self.ntheta));
            }
        }
        if !(self.initial_perturbation.is_finite()) {
            return fail("initial_perturbation must be finite".into());
        }
        if let PotentialSpec::CosineSeries { coefficients } = &self.potential {
            if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                return fail("cosine_series needs finite coefficients".into());
            }
        }
        self.solver.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn potential(&self) -> PeriodicPotential {
        self.potential.build()
    }

    pub fn grids(&self) -> ContinuationGrid {
        let r_min = self.radius * self.r_min_factor;
        ContinuationGrid {
            r_min,
            ratio: (self.radius / r_min).powf(1.0 / self.nr as f64),
            n_theta: self.ntheta,
        }
    }

    /// Disk grid of the final radius.
    pub fn disk_grid(&self) -> Result<Arc<PolarGrid>> {
        Ok(Arc::new(self.grids().disk_grid(self.degree, self.radius)?))
    }

    /// Fit window in `r`.
    pub fn window(&self) -> (f64, f64) {
        self.analysis.window.unwrap_or((self.radius / 20.0, self.radius / 2.0))
    }

    pub fn lemma_radii(&self) -> Vec<f64> {
        if self.analysis.lemma_radii.is_empty() {
            [20.0, 10.0, 5.0, 2.5].iter().map(|q| self.radius / q).collect()
        } else {
            self.analysis.lemma_radii.clone()
        }
    }

    pub fn j_max(&self) -> usize {
        self.analysis
            .j_max
            .unwrap_or((3 * self.degree as usize + 2).min(self.ntheta / 2 - 1))
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub energy: f64,
    pub converged: bool,
    pub min_value_interior: f64,
    pub raw_residual: f64,
    pub initial_energy: f64,
    pub flow_steps: usize,
    /// `sup |u − φ|` over the disk.
    pub sup_u_minus_phi: f64,
    /// `‖Δ_h φ‖_∞ R²/4`: the largest `sup |u − φ|` the grid alone can cause
    /// for the zero potential.
    pub phi_discretization_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cauchy: Option<CauchyTable>,
}

impl RunReport {
    fn new(report: &SolveReport, sector: &ScalarField, disk: &ScalarField, degree: u32, cauchy: Option<CauchyTable>) -> Result<Self> {
        let phi = harmonic_polynomial(degree, disk.grid().clone());
        Ok(Self {
            iterations: report.iterations,
            final_residual: report.final_residual,
            energy: report.energy,
            converged: report.converged,
            min_value_interior: report.min_value_interior,
            raw_residual: report.raw_residual,
            initial_energy: report.initial_energy,
            flow_steps: report.flow_steps,
            sup_u_minus_phi: disk.sub(&phi)?.max_abs(),
            phi_discretization_bound: maximum_principle_bound(sector.grid().clone(), degree)?,
            cauchy,
        })
    }
}

/// `max_interior |Δ_h φ| · R²/4`. The discrete operator satisfies
/// `L_h r² ≥ 4` on interior nodes, so the discrete maximum principle bounds
/// the error of the zero-potential solve by this.
pub fn maximum_principle_bound(grid: Arc<PolarGrid>, degree: u32) -> Result<f64> {
    let phi = harmonic_polynomial(degree, grid.clone());
    let lap = laplacian(&phi)?;
    let mut sup = 0.0f64;
    for i in grid.interior_radii() {
        for k in grid.interior_angles() {
            sup = sup.max(lap.at(i, k).abs());
        }
    }
    Ok(sup * grid.r_max() * grid.r_max() / 4.0)
}

fn initial_guess(config: &RunConfig, grid: Arc<PolarGrid>) -> ScalarField {
    let mut u = harmonic_polynomial(config.degree, grid.clone());
    if config.initial_perturbation != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, r_max) = (config.degree as f64, grid.r_max());
        for (i, &r) in grid.radii().iter().enumerate() {
            for (k, &th) in grid.angles().iter().enumerate() {
                let xi: f64 = rng.gen();
                if grid.tag(i, k) == NodeTag::Interior {
                    let bump = (PI * r / r_max).sin() * (d * th).cos();
                    u.values_mut()[grid.index(i, k)] += config.initial_perturbation * bump * xi;
                }
            }
        }
    }
    u
}

/// Result of a construction.
#[derive(Debug, Clone)]
pub struct Construction {
    pub sector: ScalarField,
    pub disk: ScalarField,
    pub report: RunReport,
}

/// Solves the configured problem without touching the filesystem.
pub fn solve(config: &RunConfig) -> Result<Construction> {
    config.validate()?;
    let potential = config.potential();
    if config.radii.is_empty() {
        let disk_grid = config.disk_grid()?;
        let sector_grid = Arc::new(disk_grid.matching_sector(config.degree)?);
        let domain = SectorDomain::new(config.degree, config.radius)?;
        let initial = initial_guess(config, sector_grid);
        let (sector, report) = solve_sector_from(&potential, &domain, initial, &config.solver)?;
        let disk = extend_by_symmetry(&sector, config.degree, disk_grid)?;
        let report = RunReport::new(&report, &sector, &disk, config.degree, None)?;
        Ok(Construction { sector, disk, report })
    } else {
        let result = continuation(&potential, config.degree, &config.radii, &config.grids(), &config.solver)?;
        let last = result.stages.last().expect("at least two stages");
        let report = RunReport::new(&last.report, &last.sector, &last.disk, config.degree, Some(result.cauchy.clone()))?;
        Ok(Construction {
            sector: last.sector.clone(),
            disk: last.disk.clone(),
            report,
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Solves and writes the run directory. A failed solve still leaves its
/// best iterate and report behind before the error is returned.
pub fn construct(config: &RunConfig, out: &Path) -> Result<RunReport> {
    config.validate()?;
    fs::create_dir_all(out)?;
    write_json(&out.join(CONFIG_FILE), config)?;
    match solve(config) {
        Ok(c) => {
            fs::write(out.join(SECTOR_FILE), c.sector.to_csv())?;
            fs::write(out.join(DISK_FILE), c.disk.to_csv())?;
            write_json(&out.join(REPORT_FILE), &c.report)?;
            Ok(c.report)
        }
        Err(e) => {
            let best = match &e {
                Error::Convergence { best, .. } => Some((best.field.clone(), best.report.clone(), None)),
                Error::Continuation { partial, source, .. } => match source.as_ref() {
                    Error::Convergence { best, .. } => {
                        Some((best.field.clone(), best.report.clone(), Some(partial.cauchy.clone())))
                    }
                    _ => None,
                },
                _ => None,
            };
            if let Some((sector, report, cauchy)) = best {
                fs::write(out.join(SECTOR_FILE), sector.to_csv())?;
                // a failed continuation stage may sit on a smaller radius
                let radii = sector.grid().radii().to_vec();
                let disk_grid = Arc::new(PolarGrid::symmetric_disk(config.degree, radii, config.ntheta)?);
                let disk = extend_by_symmetry(&sector, config.degree, disk_grid)?;
                fs::write(out.join(DISK_FILE), disk.to_csv())?;
                write_json(&out.join(REPORT_FILE), &RunReport::new(&report, &sector, &disk, config.degree, cauchy)?)?;
            }
            Err(e)
        }
    }
}

/// Reads a field written by [`ScalarField::to_csv`] back onto `grid`,
/// checking that the stored coordinates are the grid's.
pub fn read_field(path: &Path, grid: Arc<PolarGrid>) -> Result<ScalarField> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(grid.len());
    let radii = grid.radii();
    let angles = grid.angles();
    for (n, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let parse = |c: usize| -> Result<f64> {
            row.get(c)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Config(format!("{}: bad row {}", path.display(), n + 2)))
        };
        let (r, th, v) = (parse(0)?, parse(1)?, parse(2)?);
        let (i, k) = (n / angles.len(), n % angles.len());
        if i >= radii.len() || (r - radii[i]).abs() > 1e-14 * radii[i] || (th - angles[k]).abs() > 1e-14 * angles[k].abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "{}: row {} does not sit on the configured grid",
                path.display(),
                n + 2
            )));
        }
        values.push(v);
    }
    ScalarField::new(grid, values)
}

/// A stored run.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub sector: ScalarField,
    pub disk: ScalarField,
}

impl Run {
    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(CONFIG_FILE))
            .map_err(|e| Error::Config(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
        let config = RunConfig::from_json(&text)?;
        let disk_grid = config.disk_grid()?;
        let sector_grid = Arc::new(disk_grid.matching_sector(config.degree)?);
        let sector = read_field(&dir.join(SECTOR_FILE), sector_grid)?;
        let disk = extend_by_symmetry(&sector, config.degree, disk_grid)?;
        Ok(Self { config, sector, disk })
    }

    pub fn from_construction(config: RunConfig, c: &Construction) -> Self {
        Self {
            config,
            sector: c.sector.clone(),
            disk: c.disk.clone(),
        }
    }
}

/// The zero-potential solve on the run's grid and the per-ring noise floors
/// derived from it.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Discrete harmonic function with the data `φ`, on the disk.
    pub harmonic: ScalarField,
    /// Per ring: one more Newton correction of the run plus one of the
    /// reference, an estimate of how far either is from its discrete
    /// solution.
    pub floors: Vec<f64>,
}

impl Reference {
    pub fn compute(run: &Run) -> Result<Self> {
        let config = &run.config;
        let sector_grid = run.sector.grid().clone();
        let domain = SectorDomain::new(config.degree, config.radius)?;
        let zero = PeriodicPotential::zero();
        let (h, _) = solve_sector(&zero, &domain, sector_grid, &config.solver)?;
        let cu = correction_size(&config.potential(), &run.sector, &config.solver)?;
        let ch = correction_size(&zero, &h, &config.solver)?;
        Ok(Self {
            harmonic: extend_by_symmetry(&h, config.degree, run.disk.grid().clone())?,
            floors: cu.iter().zip(&ch).map(|(a, b)| a + b).collect(),
        })
    }
}

/// One row of `lemmas.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaRow {
    /// Grid circle carrying the trace.
    pub r: f64,
    pub lhs: f64,
    pub rhs_identity: f64,
    pub bound: f64,
    /// `sup_{B_{r/2}} |φ^r − u|` with both sides taken relative to the
    /// discrete harmonic reference, so the grid error of `φ` drops out.
    pub lemma32_sup: f64,
    pub phi_diff_sup: f64,
    pub hessian_diff: f64,
}

pub fn lemma_table(run: &Run, reference: &Reference, radii: &[f64]) -> Result<Vec<LemmaRow>> {
    let u = &run.disk;
    let j_max = run.config.ntheta / 2 - 1;
    let potential = run.config.potential();
    let w = u.sub(&reference.harmonic)?;
    radii
        .iter()
        .map(|&r| {
            let ext = harmonic_extension(u, r, j_max)?;
            let energy = lemma31_check(u, &ext, &potential, r)?;
            let ext_w = harmonic_extension(&w, r, j_max)?;
            let poly = phi_r_vs_phi_check(&ext, run.config.degree, r)?;
            Ok(LemmaRow {
                r: energy.radius,
                lhs: energy.lhs,
                rhs_identity: energy.rhs_identity,
                bound: energy.bound,
                lemma32_sup: lemma32_check(&w, &ext_w, r)?,
                phi_diff_sup: poly.sup_diff,
                hessian_diff: poly.hessian_diff,
            })
        })
        .collect()
}

/// A fit, or the reason none was possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FitOutcome {
    Fit(DecayFit),
    Unavailable { unavailable: String },
}

impl FitOutcome {
    pub fn from_result(result: Result<DecayFit>) -> Self {
        match result {
            Ok(f) => FitOutcome::Fit(f),
            Err(e) => FitOutcome::Unavailable { unavailable: e.to_string() },
        }
    }

    pub fn fit(&self) -> Option<&DecayFit> {
        match self {
            FitOutcome::Fit(f) => Some(f),
            FitOutcome::Unavailable { .. } => None,
        }
    }
}

/// Fits over `log r` of the lemma rows' `lemma32_sup`.
pub fn lemma32_exponent(rows: &[LemmaRow]) -> FitOutcome {
    let n = rows.len() as f64;
    if rows.len() < 2 || rows.iter().any(|r| !(r.lemma32_sup > 0.0)) {
        return FitOutcome::Unavailable {
            unavailable: "needs two radii with a positive supremum".into(),
        };
    }
    let x: Vec<f64> = rows.iter().map(|r| r.r.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.lemma32_sup.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let exponent = sxy / sxx;
    let log_constant = my - exponent * mx;
    let residual = (x.iter().zip(&y).map(|(a, b)| (b - log_constant - exponent * a).powi(2)).sum::<f64>() / n).sqrt();
    FitOutcome::Fit(DecayFit {
        window: (rows[0].r, rows[rows.len() - 1].r),
        exponent,
        log_constant,
        residual,
        noise_floor: 0.0,
        samples: rows.len(),
    })
}

/// Mode diagnostics written to `fits.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeFits {
    /// Largest forbidden coefficient over the largest `|c_d|`.
    pub selection_ratio: f64,
    /// `sup_θ |v − v_h|` against `t`.
    pub decay1: FitOutcome,
    /// `|c_d − c_d^h|` against `t`.
    pub decay4: FitOutcome,
    /// Mean of `c_d` over the upper half of the window: the observable
    /// limit `lim c_d(t)`.
    pub limit_c_d: f64,
    /// Envelope of `g_d` against `t`.
    pub forcing: FitOutcome,
    /// `max |mode ODE residual|` of mode `d` over the window.
    pub ode_residual: f64,
    /// Same for the zero-potential reference: the discretisation floor.
    pub ode_floor: f64,
    /// Fit window in `t`.
    pub window: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct ModeAnalysis {
    pub modes: Vec<ModeSeries>,
    pub fits: ModeFits,
}

pub fn mode_analysis(run: &Run, reference: &Reference, j_max: usize) -> Result<ModeAnalysis> {
    let config = &run.config;
    let d = config.degree;
    let du = d as usize;
    let potential = config.potential();
    let profile = to_polar_profile(&run.disk, d)?;
    let reference_profile = to_polar_profile(&reference.harmonic, d)?;
    let t = profile.t().to_vec();
    let window = config.window();
    let window = (window.0.ln(), window.1.ln());

    let force = discrete_force(&potential, &run.disk, config.solver.quadrature);
    let mut modes = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        modes.push(oscillatory_integral_of_force(&profile, &force, j)?);
    }
    let plain = fourier_modes(&profile, j_max.max(3 * du).min(config.ntheta / 2 - 1))?;
    let selection_ratio = selection_rule_check(&plain, d)?;
    let reference_modes = fourier_modes(&reference_profile, du)?;

    // floors of v, c_d and g_d from the per-ring floor of u − u_h
    let floor_u: Vec<f64> = reference.floors[..t.len()].to_vec();
    let floor_v: Vec<f64> = t.iter().zip(&floor_u).map(|(t, f)| (-(d as f64) * t).exp() * f).collect();
    let floor_c: Vec<f64> = floor_v.iter().map(|f| 2.0 * f).collect();
    let floor_g: Vec<f64> = t
        .iter()
        .zip(&floor_u)
        .map(|(t, f)| ((2.0 - d as f64) * t).exp() * 2.0 * PI * f)
        .collect();

    let deviation = profile.sup_difference(&reference_profile)?;
    let c_d = &plain[du].c;
    let shift: Vec<f64> = c_d.iter().zip(&reference_modes[du].c).map(|(a, b)| a - b).collect();
    let upper: Vec<f64> = t
        .iter()
        .zip(c_d)
        .filter(|(t, _)| **t >= 0.5 * (window.0 + window.1) && **t <= window.1)
        .map(|(_, c)| *c)
        .collect();
    let limit_c_d = upper.iter().sum::<f64>() / upper.len().max(1) as f64;

    let g_d = modes[du].g.clone().expect("forcing attached");
    let zero_force = ScalarField::zeros(run.disk.grid().clone());
    let reference_mode = oscillatory_integral_of_force(&reference_profile, &zero_force, du)?;
    Ok(ModeAnalysis {
        fits: ModeFits {
            selection_ratio,
            decay1: FitOutcome::from_result(decay_fit_with_floors(&t, &deviation, window, &floor_v)),
            decay4: FitOutcome::from_result(decay_fit_with_floors(&t, &shift, window, &floor_c)),
            limit_c_d,
            forcing: FitOutcome::from_result(decay_fit_envelope(&t, &g_d, window, &floor_g)),
            ode_residual: mode_ode_residual(&modes[du], d, Some(window))?,
            ode_floor: mode_ode_residual(&reference_mode, d, Some(window))?,
            window,
        },
        modes,
    })
}

/// `sup_{|z|=r} |u − u_h|` per ring and its fitted exponent over the window.
pub fn growth_analysis(run: &Run, reference: &Reference) -> Result<(GrowthCurve, FitOutcome)> {
    let curve = growth_curve(&run.disk, &reference.harmonic, Some(&reference.floors))?;
    let fit = FitOutcome::from_result(growth_exponent(&curve, run.config.window()));
    Ok((curve, fit))
}

/// Which analysis to run on a stored run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Lemmas,
    Modes,
    Growth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOptions {
    pub lemma_radii: Option<Vec<f64>>,
    pub j_max: Option<usize>,
    pub svg: bool,
}

/// Runs one analysis on the run directory and writes its outputs there.
pub fn analyze(dir: &Path, which: Analysis, opts: &AnalyzeOptions) -> Result<serde_json::Value> {
    let run = Run::load(dir)?;
    let reference = Reference::compute(&run)?;
    let mut fits = match fs::read_to_string(dir.join(FITS_FILE)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => serde_json::Map::new(),
    };
    let entry = match which {
        Analysis::Lemmas => {
            let radii = opts.lemma_radii.clone().unwrap_or_else(|| run.config.lemma_radii());
            let rows = lemma_table(&run, &reference, &radii)?;
            let mut csv = String::from("r,lhs,rhs_identity,bound,lemma32_sup,phi_diff_sup,hessian_diff\n");
            for row in &rows {
                csv.push_str(&crate::io::csv_row(&[
                    row.r,
                    row.lhs,
                    row.rhs_identity,
                    row.bound,
                    row.lemma32_sup,
                    row.phi_diff_sup,
                    row.hessian_diff,
                ]));
            }
            fs::write(dir.join("lemmas.csv"), csv)?;
            if opts.svg {
                let r: Vec<f64> = rows.iter().map(|x| x.r).collect();
                let sup: Vec<f64> = rows.iter().map(|x| x.lemma32_sup).collect();
                let lhs: Vec<f64> = rows.iter().map(|x| x.lhs).collect();
                let svg = crate::plot::loglog("lemma checks", "r", &[("lemma32_sup", &r, &sup), ("lhs", &r, &lhs)]);
                fs::write(dir.join("lemmas.svg"), svg)?;
            }
            let value = serde_json::to_value(lemma32_exponent(&rows))?;
            fits.insert("lemma32".into(), value.clone());
            value
        }
        Analysis::Modes => {
            let j_max = opts.j_max.unwrap_or_else(|| run.config.j_max());
            let analysis = mode_analysis(&run, &reference, j_max)?;
            let mut csv = String::from("t,j,c_j,g_j\n");
            let n_t = analysis.modes[0].t.len();
            for i in 0..n_t {
                for m in &analysis.modes {
                    let g = m.g.as_ref().map_or(f64::NAN, |g| g[i]);
                    csv.push_str(&format!("{},{},{},{}\n", crate::io::fmt(m.t[i]), m.j, crate::io::fmt(m.c[i]), crate::io::fmt(g)));
                }
            }
            fs::write(dir.join("modes.csv"), csv)?;
            if opts.svg {
                let d = run.config.degree as usize;
                let m = &analysis.modes[d];
                let r: Vec<f64> = m.t.iter().map(|t| t.exp()).collect();
                let g: Vec<f64> = m.g.as_ref().unwrap().iter().map(|g| g.abs()).collect();
                let svg = crate::plot::loglog("forcing of mode d", "r", &[("|g_d|", &r, &g)]);
                fs::write(dir.join("modes.svg"), svg)?;
            }
            let value = serde_json::to_value(&analysis.fits)?;
            fits.insert("modes".into(), value.clone());
            value
        }
        Analysis::Growth => {
            let (curve, fit) = growth_analysis(&run, &reference)?;
            let mut csv = String::from("r,sup_err\n");
            for (r, e) in curve.r.iter().zip(&curve.sup_err) {
                csv.push_str(&crate::io::csv_row(&[*r, *e]));
            }
            fs::write(dir.join("growth.csv"), csv)?;
            if opts.svg {
                let svg = crate::plot::loglog(
                    "sup |u - u_h| on circles",
                    "r",
                    &[("sup_err", &curve.r, &curve.sup_err), ("floor", &curve.r, &curve.floor)],
                );
                fs::write(dir.join("growth.svg"), svg)?;
            }
            let value = serde_json::to_value(&fit)?;
            fits.insert("growth".into(), value.clone());
            value
        }
    };
    write_json(&dir.join(FITS_FILE), &fits)?;
    Ok(entry)
}
