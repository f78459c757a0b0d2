//! Sector minimizer `u^R`, its odd-symmetric extension to the disk, and
//! continuation in `R`.
//!
//! The discrete problem is the critical-point equation of
//!
//! ```text
//! E_h(u) = ½ Σ_edges c_e (u_a − u_b)² − Σ_nodes w_n F(u_n)
//! ```
//!
//! whose gradient is `−w_n (Δ_h u + f(u))_n`, so Newton on `Δ_h u + f(u) = 0`
//! and descent on `E_h` share one symmetric Hessian `K − W f'(u)`.

use crate::error::{Error, Result};
use crate::geometry::{
    capped_radii, harmonic_polynomial, radial_stencil, GridMode, KahanSum, PolarGrid,
    ScalarField, SectorDomain,
};
use crate::linalg::{conjugate_gradient, dot, CgStatus, CsrMatrix};
use crate::potential::{CellAverage, PeriodicPotential};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Max-norm tolerance on `Δ_h u + f(u)` over interior nodes.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub line_search: bool,
    pub flow_fallback: bool,
    pub flow_step: f64,
    pub positivity_projection: bool,
    /// Skip the evenness check on the potential. Experimental.
    pub allow_uneven: bool,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
    pub quadrature: PotentialQuadrature,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-9,
            max_newton_iters: 3000,
            line_search: true,
            flow_fallback: true,
            flow_step: 1.0,
            positivity_projection: true,
            allow_uneven: false,
            cg_tol: 1e-10,
            cg_max_iters: 20_000,
            quadrature: PotentialQuadrature::default(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::Validation("newton_tol must be positive".into()));
        }
        if !(self.flow_step > 0.0) {
            return Err(Error::Validation("flow_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Max over interior nodes of the residual in excess of its own
    /// floating-point evaluation floor.
    pub final_residual: f64,
    /// Plain `max |Δ_h u + f(u)|` over interior nodes.
    pub raw_residual: f64,
    /// Largest per-node rounding floor of the residual evaluation.
    pub residual_floor: f64,
    /// Discrete functional `E_h` at return.
    pub energy: f64,
    /// `E_h(φ)` for the same boundary data.
    pub initial_energy: f64,
    pub converged: bool,
    pub min_value_interior: f64,
    /// Energy after every accepted step, starting from the initial guess.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub energy_history: Vec<f64>,
    pub flow_steps: usize,
}

/// Best iterate of a failed solve.
#[derive(Debug, Clone)]
pub struct SolveFailure {
    pub field: ScalarField,
    pub report: SolveReport,
}

/// How the potential term of `E_h` is integrated over the cell of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialQuadrature {
    /// `w_n F(u_n)`: the potential sampled at the node.
    Nodal,
    /// `w_n` times the mean of `F` over the cell, with `u` affine across the
    /// cell through the centred differences. Agrees with `Nodal` to O(h²)
    /// where `u` is resolved and stops aliasing where the phase of `F(u)`
    /// turns faster than the grid.
    #[default]
    CellAverage,
}

/// One quadrature cell of the potential term.
struct Cell {
    weight: f64,
    centre: usize,
    /// (grid index, sign) of the inner and outer radial neighbours
    radial: [(usize, f64); 2],
    /// (grid index, sign) of the lower and upper angular neighbours
    angular: [(usize, f64); 2],
    /// unknowns the cell depends on, with their column of `∂(u, a, b)/∂u_m`
    columns: Vec<(usize, [f64; 3])>,
    /// Hessian slots of all column pairs, row-major
    slots: Vec<usize>,
}

/// Assembled interior system of a polar grid: the Dirichlet form on edges
/// and the potential term on cells.
struct DiscreteSystem<'a> {
    potential: &'a PeriodicPotential,
    quadrature: PotentialQuadrature,
    /// grid index of each unknown
    nodes: Vec<usize>,
    /// unknown index of each grid node (usize::MAX on the boundary)
    unknown: Vec<usize>,
    /// lumped area weight per unknown
    weight: Vec<f64>,
    /// per unknown: four neighbours (grid index, coupling)
    neighbours: Vec<[(usize, f64); 4]>,
    coupling_sum: Vec<f64>,
    /// edges with at least one interior endpoint
    edges: Vec<(usize, usize, f64)>,
    cells: Vec<Cell>,
    node_edges: Vec<Vec<usize>>,
    node_cells: Vec<Vec<usize>>,
    /// `K` on the pattern shared with the Hessian
    stiffness: CsrMatrix,
    /// unknowns relaxed together, mirror pairs when symmetry is kept
    groups: Vec<Vec<usize>>,
}

impl<'a> DiscreteSystem<'a> {
    fn new(
        grid: &PolarGrid,
        potential: &'a PeriodicPotential,
        quadrature: PotentialQuadrature,
        mirror_groups: bool,
    ) -> Self {
        let radii = grid.radii();
        let dth = grid.dtheta();
        let na = grid.n_angles();
        let mut unknown = vec![usize::MAX; grid.len()];
        let mut nodes = Vec::new();
        let mut weight = Vec::new();
        let mut neighbours = Vec::new();
        let mut coupling_sum = Vec::new();
        for i in grid.interior_radii() {
            let (cm, cp, area) = radial_stencil(radii, i);
            let ca = area / (radii[i] * radii[i] * dth);
            for k in grid.interior_angles() {
                let (km, kp) = grid.angular_neighbours(k);
                unknown[grid.index(i, k)] = nodes.len();
                nodes.push(grid.index(i, k));
                weight.push(area * dth);
                neighbours.push([
                    (grid.index(i - 1, k), cm * dth),
                    (grid.index(i + 1, k), cp * dth),
                    (grid.index(i, km), ca),
                    (grid.index(i, kp), ca),
                ]);
                coupling_sum.push((cm + cp) * dth + 2.0 * ca);
            }
        }
        let n = nodes.len();

        let mut edges = Vec::new();
        let interior = |idx: usize| unknown[idx] != usize::MAX;
        for i in 0..grid.n_radii() {
            for k in 0..na {
                let a = grid.index(i, k);
                if i + 1 < grid.n_radii() {
                    let b = grid.index(i + 1, k);
                    if interior(a) || interior(b) {
                        let h = radii[i + 1] - radii[i];
                        edges.push((a, b, 0.5 * (radii[i] + radii[i + 1]) * dth / h));
                    }
                }
                let next = match grid.mode() {
                    GridMode::Disk => Some((k + 1) % na),
                    GridMode::Sector { .. } if k + 1 < na => Some(k + 1),
                    _ => None,
                };
                if let Some(kn) = next {
                    let b = grid.index(i, kn);
                    if interior(a) || interior(b) {
                        let (_, _, area) = radial_stencil(radii, i);
                        edges.push((a, b, area / (radii[i] * radii[i] * dth)));
                    }
                }
            }
        }

        let mut cells = Vec::new();
        for (m, &idx) in nodes.iter().enumerate() {
            let [rm, rp, km, kp] = neighbours[m];
            cells.push((weight[m], idx, [(rm.0, 1.0), (rp.0, 1.0)], [(km.0, 1.0), (kp.0, 1.0)]));
        }
        if quadrature == PotentialQuadrature::CellAverage {
            if let GridMode::Sector { .. } = grid.mode() {
                // half cells straddling the nodal rays; across a ray u is odd
                for i in grid.interior_radii() {
                    let (_, _, area) = radial_stencil(radii, i);
                    for (k, inner) in [(0, 1), (na - 1, na - 2)] {
                        let next = grid.index(i, inner);
                        let (lo, hi) = if k == 0 {
                            ((next, -1.0), (next, 1.0))
                        } else {
                            ((next, 1.0), (next, -1.0))
                        };
                        cells.push((
                            0.5 * area * dth,
                            grid.index(i, k),
                            [(grid.index(i - 1, k), 1.0), (grid.index(i + 1, k), 1.0)],
                            [lo, hi],
                        ));
                    }
                }
            }
        }
        let cells: Vec<Cell> = cells
            .into_iter()
            .map(|(weight, centre, radial, angular)| {
                let mut columns: Vec<(usize, [f64; 3])> = Vec::new();
                let mut add = |idx: usize, col: [f64; 3]| {
                    let m = unknown[idx];
                    if m == usize::MAX {
                        return;
                    }
                    match columns.iter_mut().find(|(c, _)| *c == m) {
                        Some((_, acc)) => acc.iter_mut().zip(col).for_each(|(a, b)| *a += b),
                        None => columns.push((m, col)),
                    }
                };
                add(centre, [1.0, 0.0, 0.0]);
                if quadrature == PotentialQuadrature::CellAverage {
                    add(radial[0].0, [0.0, -0.25 * radial[0].1, 0.0]);
                    add(radial[1].0, [0.0, 0.25 * radial[1].1, 0.0]);
                    add(angular[0].0, [0.0, 0.0, -0.25 * angular[0].1]);
                    add(angular[1].0, [0.0, 0.0, 0.25 * angular[1].1]);
                }
                Cell {
                    weight,
                    centre,
                    radial,
                    angular,
                    columns,
                    slots: Vec::new(),
                }
            })
            .collect();

        let mut pattern: Vec<Vec<usize>> = (0..n).map(|m| vec![m]).collect();
        let mut node_edges = vec![Vec::new(); n];
        for (e, &(a, b, _)) in edges.iter().enumerate() {
            let (ma, mb) = (unknown[a], unknown[b]);
            for (x, y) in [(ma, mb), (mb, ma)] {
                if x != usize::MAX {
                    node_edges[x].push(e);
                    if y != usize::MAX {
                        pattern[x].push(y);
                    }
                }
            }
        }
        let mut node_cells = vec![Vec::new(); n];
        for (c, cell) in cells.iter().enumerate() {
            for &(m, _) in &cell.columns {
                node_cells[m].push(c);
                pattern[m].extend(cell.columns.iter().map(|&(q, _)| q));
            }
        }
        let mut stiffness = CsrMatrix::with_pattern(pattern);
        let mut cells = cells;
        for cell in &mut cells {
            for &(p, _) in &cell.columns {
                for &(q, _) in &cell.columns {
                    cell.slots.push(stiffness.position(p, q).expect("cell pair in pattern"));
                }
            }
        }
        {
            let mut entries = Vec::new();
            for (m, nb) in neighbours.iter().enumerate() {
                entries.push((m, m, coupling_sum[m]));
                for &(idx, c) in nb {
                    if unknown[idx] != usize::MAX {
                        entries.push((m, unknown[idx], -c));
                    }
                }
            }
            for (r, col, v) in entries {
                let p = stiffness.position(r, col).expect("edge in pattern");
                stiffness.values_mut()[p] += v;
            }
        }

        let mut groups = Vec::new();
        match grid.mode() {
            GridMode::Sector { .. } if mirror_groups => {
                for i in grid.interior_radii() {
                    for k in 1..=(na - 1) / 2 {
                        let mut g = vec![unknown[grid.index(i, k)]];
                        let mirror = na - 1 - k;
                        if mirror != k {
                            g.push(unknown[grid.index(i, mirror)]);
                        }
                        groups.push(g);
                    }
                }
            }
            _ => groups.extend((0..n).map(|m| vec![m])),
        }

        Self {
            potential,
            quadrature,
            nodes,
            unknown,
            weight,
            neighbours,
            coupling_sum,
            edges,
            cells,
            node_edges,
            node_cells,
            stiffness,
            groups,
        }
    }

    fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Cell coordinates `(u, a, b)` with node values read through `get`.
    fn cell_coordinates(&self, cell: &Cell, get: impl Fn(usize) -> f64) -> (f64, f64, f64) {
        match self.quadrature {
            PotentialQuadrature::Nodal => (get(cell.centre), 0.0, 0.0),
            PotentialQuadrature::CellAverage => {
                let [(r0, s0), (r1, s1)] = cell.radial;
                let [(a0, t0), (a1, t1)] = cell.angular;
                (
                    get(cell.centre),
                    0.25 * (s1 * get(r1) - s0 * get(r0)),
                    0.25 * (t1 * get(a1) - t0 * get(a0)),
                )
            }
        }
    }

    fn cell_value(&self, cell: &Cell, u: &[f64]) -> f64 {
        let (c, a, b) = self.cell_coordinates(cell, |i| u[i]);
        match self.quadrature {
            PotentialQuadrature::Nodal => self.potential.value(c),
            PotentialQuadrature::CellAverage => self.potential.cell_average(c, a, b),
        }
    }

    fn cell_derivatives(&self, cell: &Cell, u: &[f64]) -> CellAverage {
        let (c, a, b) = self.cell_coordinates(cell, |i| u[i]);
        match self.quadrature {
            PotentialQuadrature::Nodal => CellAverage {
                value: self.potential.value(c),
                grad: [self.potential.force(c), 0.0, 0.0],
                hess: [[self.potential.force_derivative(c), 0.0, 0.0], [0.0; 3], [0.0; 3]],
            },
            PotentialQuadrature::CellAverage => self.potential.cell_average_derivatives(c, a, b),
        }
    }

    /// Weighted cell change `w (F̄(u + δ) − F̄(u))`.
    fn cell_change(&self, cell: &Cell, u: &[f64], delta: impl Fn(usize) -> f64) -> f64 {
        let w = cell.weight;
        match self.quadrature {
            PotentialQuadrature::Nodal => {
                w * self.potential.value_difference(u[cell.centre], delta(cell.centre))
            }
            PotentialQuadrature::CellAverage => {
                let (c, a, b) = self.cell_coordinates(cell, |i| u[i]);
                let (dc, da, db) = self.cell_coordinates(cell, delta);
                w * self.potential.cell_average_difference(c, a, b, dc, da, db)
            }
        }
    }

    /// `∂/∂u_m Σ_cells w F̄` per unknown.
    fn potential_gradient(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for cell in &self.cells {
            let d = self.cell_derivatives(cell, u);
            for &(m, col) in &cell.columns {
                out[m] += cell.weight * dot3(&d.grad, &col);
            }
        }
        out
    }

    /// Residual `Δ_h u + f̄(u)` per unknown and its rounding floor, where
    /// `f̄ = W⁻¹ ∇(Σ_cells w F̄)` is the force the quadrature actually exerts.
    fn residual(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let eps = f64::EPSILON;
        let force = self.potential_gradient(u);
        let mut res = Vec::with_capacity(self.len());
        let mut floor = Vec::with_capacity(self.len());
        for (n, &idx) in self.nodes.iter().enumerate() {
            let mut acc = -self.coupling_sum[n] * u[idx];
            let mut mag = self.coupling_sum[n] * u[idx].abs();
            let mut big = u[idx].abs();
            for &(nb, c) in &self.neighbours[n] {
                acc += c * u[nb];
                mag += c * u[nb].abs();
                big = big.max(u[nb].abs());
            }
            res.push(acc / self.weight[n] + force[n] / self.weight[n]);
            // rounding of the stencil sum and of the phases fed to sin/cos
            floor.push(16.0 * eps * (mag / self.weight[n] + big + 1.0));
        }
        (res, floor)
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let mut sum = KahanSum::default();
        for &(a, b, c) in &self.edges {
            let du = u[a] - u[b];
            sum.add(0.5 * c * du * du);
        }
        for cell in &self.cells {
            sum.add(-cell.weight * self.cell_value(cell, u));
        }
        sum.total()
    }

    /// `E_h(u + step) − E_h(u)` evaluated without cancellation; `step` is
    /// indexed by unknown.
    fn energy_change(&self, u: &[f64], step: &[f64]) -> f64 {
        let delta = |idx: usize| {
            let n = self.unknown[idx];
            if n == usize::MAX {
                0.0
            } else {
                step[n]
            }
        };
        let mut sum = KahanSum::default();
        for &(a, b, c) in &self.edges {
            let du = u[a] - u[b];
            let dd = delta(a) - delta(b);
            sum.add(c * (du * dd + 0.5 * dd * dd));
        }
        for cell in &self.cells {
            sum.add(-self.cell_change(cell, u, delta));
        }
        sum.total()
    }

    /// Hessian of `E_h`; with `saddle_free` each cell's curvature block is
    /// replaced by its absolute value, which makes the matrix positive
    /// definite.
    fn hessian(&self, u: &[f64], saddle_free: bool) -> CsrMatrix {
        let mut h = self.stiffness.clone();
        let values = h.values_mut();
        for cell in &self.cells {
            let d = self.cell_derivatives(cell, u);
            let (local, sign) = if saddle_free {
                (abs_symmetric3(d.hess), 1.0)
            } else {
                (d.hess, -1.0)
            };
            let len = cell.columns.len();
            for (p, (_, cp)) in cell.columns.iter().enumerate() {
                let hp = mat3_vec(&local, cp);
                for (q, (_, cq)) in cell.columns.iter().enumerate() {
                    values[cell.slots[p * len + q]] += sign * cell.weight * dot3(&hp, cq);
                }
            }
        }
        h
    }

    /// One nonlinear Gauss–Seidel pass over the relaxation groups; each group
    /// moves to a local minimiser of `E_h` along its own direction, so `E_h`
    /// never increases. Mirror pairs move together, which keeps symmetric
    /// data symmetric.
    fn relaxation_sweep(&self, u: &mut [f64]) {
        for g in &self.groups {
            self.settle_group(g, u);
        }
    }

    fn settle_group(&self, group: &[usize], u: &mut [f64]) {
        let ids: Vec<usize> = group.iter().map(|&m| self.nodes[m]).collect();
        let chi = |idx: usize| if ids.contains(&idx) { 1.0 } else { 0.0 };
        let mut edges: Vec<usize> = group.iter().flat_map(|&m| self.node_edges[m].iter().copied()).collect();
        edges.sort_unstable();
        edges.dedup();
        let mut cells: Vec<usize> = group.iter().flat_map(|&m| self.node_cells[m].iter().copied()).collect();
        cells.sort_unstable();
        cells.dedup();
        // direction of the group in each cell's (u, a, b) coordinates
        let dirs: Vec<[f64; 3]> = cells
            .iter()
            .map(|&c| {
                let mut d = [0.0; 3];
                for (m, col) in &self.cells[c].columns {
                    if group.contains(m) {
                        d.iter_mut().zip(col).for_each(|(a, b)| *a += b);
                    }
                }
                d
            })
            .collect();
        let stiffness: f64 = edges
            .iter()
            .map(|&e| {
                let (a, b, c) = self.edges[e];
                let t = chi(a) - chi(b);
                c * t * t
            })
            .sum();

        let x0 = u[ids[0]];
        let set = |u: &mut [f64], x: f64| ids.iter().for_each(|&i| u[i] = x);
        let slope_curv = |u: &mut [f64], x: f64| -> (f64, f64) {
            set(u, x);
            let mut slope = 0.0;
            for &e in &edges {
                let (a, b, c) = self.edges[e];
                slope += c * (u[a] - u[b]) * (chi(a) - chi(b));
            }
            let mut curv = stiffness;
            for (&c, dir) in cells.iter().zip(&dirs) {
                let cell = &self.cells[c];
                let d = self.cell_derivatives(cell, u);
                slope -= cell.weight * dot3(&d.grad, dir);
                curv -= cell.weight * dot3(&mat3_vec(&d.hess, dir), dir);
            }
            (slope, curv)
        };

        let (g0, c0) = slope_curv(u, x0);
        if g0 == 0.0 || !g0.is_finite() {
            set(u, x0);
            return;
        }
        let tiny = 4.0 * f64::EPSILON * (1.0 + x0.abs());
        let dir = -g0.signum();
        let mut h = g0.abs() / c0.abs().max(stiffness);
        let mut near = x0;
        let mut far;
        loop {
            let y = x0 + dir * h;
            if slope_curv(u, y).0 * dir >= 0.0 {
                far = y;
                break;
            }
            near = y;
            h *= 2.0;
            if !h.is_finite() {
                set(u, x0);
                return;
            }
        }
        // walking direction: slope < 0 at `near`, ≥ 0 at `far`
        let mut y = 0.5 * (near + far);
        for _ in 0..200 {
            if (far - near).abs() <= tiny {
                break;
            }
            let (g, curv) = slope_curv(u, y);
            if g == 0.0 {
                break;
            }
            if g * dir < 0.0 {
                near = y;
            } else {
                far = y;
            }
            let newton = y - g / curv;
            let inside = (newton - near) * (newton - far) < 0.0;
            y = if curv > 0.0 && inside {
                newton
            } else {
                0.5 * (near + far)
            };
        }

        set(u, x0);
        let step = y - x0;
        let mut change = 0.0;
        for &e in &edges {
            let (a, b, c) = self.edges[e];
            let dd = (chi(a) - chi(b)) * step;
            change += c * ((u[a] - u[b]) * dd + 0.5 * dd * dd);
        }
        for &c in &cells {
            change -= self.cell_change(&self.cells[c], u, |i| chi(i) * step);
        }
        if change < 0.0 {
            set(u, y);
        }
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn mat3_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
}

/// `|A| = Q |Λ| Qᵀ` for symmetric 3×3 `A`, by cyclic Jacobi rotations.
fn abs_symmetric3(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = a;
    let mut q = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..30 {
        let off = m[0][1].abs() + m[0][2].abs() + m[1][2].abs();
        let scale = m[0][0].abs() + m[1][1].abs() + m[2][2].abs();
        if off <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for (p, r) in [(0, 1), (0, 2), (1, 2)] {
            if m[p][r] == 0.0 {
                continue;
            }
            let theta = 0.5 * (m[r][r] - m[p][p]) / m[p][r];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // m ← Jᵀ m J with J the rotation in the (p, r) plane
            for row in m.iter_mut() {
                let (mkp, mkr) = (row[p], row[r]);
                row[p] = c * mkp - s * mkr;
                row[r] = s * mkp + c * mkr;
            }
            #[allow(clippy::needless_range_loop)]
            for k in 0..3 {
                let (mpk, mrk) = (m[p][k], m[r][k]);
                m[p][k] = c * mpk - s * mrk;
                m[r][k] = s * mpk + c * mrk;
            }
            for row in q.iter_mut() {
                let (qp, qr) = (row[p], row[r]);
                row[p] = c * qp - s * qr;
                row[r] = s * qp + c * qr;
            }
        }
    }
    let lam = [m[0][0].abs(), m[1][1].abs(), m[2][2].abs()];
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = (0..3).map(|k| q[i][k] * lam[k] * q[j][k]).sum();
        }
    }
    out
}

fn validate_sector(
    potential: &PeriodicPotential,
    domain: &SectorDomain,
    grid: &PolarGrid,
    opts: &SolveOptions,
) -> Result<()> {
    opts.validate()?;
    if !potential.is_even() && !opts.allow_uneven {
        return Err(Error::Validation(
            "potential is not even; pass allow_uneven to experiment anyway".into(),
        ));
    }
    match grid.mode() {
        GridMode::Sector { degree } if degree == domain.degree() => {}
        _ => {
            return Err(Error::GridMismatch(format!(
                "grid is not a degree-{} sector grid",
                domain.degree()
            )))
        }
    }
    if (grid.r_max() - domain.radius()).abs() > 1e-12 * domain.radius() {
        return Err(Error::GridMismatch(format!(
            "grid outer radius {} differs from R = {}",
            grid.r_max(),
            domain.radius()
        )));
    }
    Ok(())
}

/// Imposes the Dirichlet data: `φ` on the arc and the inner ring, 0 on rays.
fn impose_boundary(u: &mut [f64], phi: &ScalarField) {
    let grid = phi.grid();
    for i in 0..grid.n_radii() {
        for k in 0..grid.n_angles() {
            let idx = grid.index(i, k);
            match grid.tag(i, k) {
                crate::geometry::NodeTag::Ray => u[idx] = 0.0,
                crate::geometry::NodeTag::Interior => {}
                _ => u[idx] = phi.values()[idx],
            }
        }
    }
}

/// Even reflection about `θ = 0` and, optionally, `u ↦ |u|`.
fn project(u: &mut [f64], grid: &PolarGrid, positivity: bool, even: bool) {
    let na = grid.n_angles();
    if even {
        for i in grid.interior_radii() {
            for k in 1..na / 2 {
                let (a, b) = (grid.index(i, k), grid.index(i, na - 1 - k));
                let m = 0.5 * (u[a] + u[b]);
                u[a] = m;
                u[b] = m;
            }
        }
    }
    if positivity {
        for i in grid.interior_radii() {
            for k in grid.interior_angles() {
                let idx = grid.index(i, k);
                u[idx] = u[idx].abs();
            }
        }
    }
}

/// Minimizes the sector functional starting from `φ`.
pub fn solve_sector(
    potential: &PeriodicPotential,
    domain: &SectorDomain,
    grid: Arc<PolarGrid>,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    let phi = harmonic_polynomial(domain.degree(), grid.clone());
    solve_sector_from(potential, domain, phi, opts)
}

/// Minimizes the sector functional from an arbitrary initial guess; the
/// guess's boundary values are overwritten with the Dirichlet data.
pub fn solve_sector_from(
    potential: &PeriodicPotential,
    domain: &SectorDomain,
    initial: ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    let grid = initial.grid().clone();
    validate_sector(potential, domain, &grid, opts)?;
    let phi = harmonic_polynomial(domain.degree(), grid.clone());
    let even = potential.is_even();
    let system = DiscreteSystem::new(&grid, potential, opts.quadrature, even);
    let project_positive = opts.positivity_projection && even;

    let mut phi_values = phi.values().to_vec();
    impose_boundary(&mut phi_values, &phi);
    let initial_energy = system.energy(&phi_values);

    let mut u = initial.into_values();
    impose_boundary(&mut u, &phi);
    project(&mut u, &grid, project_positive, even);

    let mut energy = system.energy(&u);
    let mut history = vec![energy];
    let mut flow_steps = 0;
    let mut flow_step = opts.flow_step;
    let mut iterations = 0;
    let n = system.len();

    loop {
        let (res, floor) = system.residual(&u);
        let excess = res
            .iter()
            .zip(&floor)
            .map(|(r, f)| (r.abs() - f).max(0.0))
            .fold(0.0, f64::max);
        if excess <= opts.newton_tol || iterations >= opts.max_newton_iters {
            let converged = excess <= opts.newton_tol;
            let report = SolveReport {
                iterations,
                final_residual: excess,
                raw_residual: res.iter().fold(0.0, |m, r| m.max(r.abs())),
                residual_floor: floor.iter().cloned().fold(0.0, f64::max),
                energy,
                initial_energy,
                converged,
                min_value_interior: system
                    .nodes
                    .iter()
                    .map(|&idx| u[idx])
                    .fold(f64::INFINITY, f64::min),
                energy_history: history,
                flow_steps,
            };
            let field = ScalarField::new(grid.clone(), u)?;
            if converged {
                return Ok((field, report));
            }
            return Err(Error::Convergence {
                iterations,
                residual: report.final_residual,
                best: Box::new(SolveFailure { field, report }),
            });
        }
        iterations += 1;

        // gradient of E_h is −w·res; Newton solves H δ = w·res
        let rhs: Vec<f64> = res.iter().zip(&system.weight).map(|(r, w)| r * w).collect();
        let mut step = newton_direction(&system, &u, &rhs, opts);
        let slope = -dot(&rhs, &step);

        let mut accepted = false;
        let mut alpha = 1.0;
        if slope < 0.0 {
            if opts.line_search {
                for _ in 0..40 {
                    let trial: Vec<f64> = step.iter().map(|s| alpha * s).collect();
                    let change = system.energy_change(&u, &trial);
                    if change <= 1e-4 * alpha * slope {
                        step = trial;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
            } else {
                accepted = true;
            }
        }

        if !accepted && slope < 0.0 {
            // Near a solution the energy change drops below its own
            // rounding noise; fall back to the residual as merit function.
            let mut trial = u.clone();
            for (m, &idx) in system.nodes.iter().enumerate() {
                trial[idx] += step[m];
            }
            project(&mut trial, &grid, project_positive, even);
            let (tres, tfloor) = system.residual(&trial);
            let texcess = tres
                .iter()
                .zip(&tfloor)
                .map(|(r, f)| (r.abs() - f).max(0.0))
                .fold(0.0, f64::max);
            if texcess < 0.5 * excess {
                accepted = true;
            }
        }

        if !accepted && opts.flow_fallback {
            // semi-implicit gradient flow: (W/τ + K) δ = −∇E_h
            for _ in 0..60 {
                let shift: Vec<f64> = system.weight.iter().map(|w| w / flow_step).collect();
                let diag: Vec<f64> = (0..n).map(|m| system.coupling_sum[m] + shift[m]).collect();
                let out = conjugate_gradient(
                    |x, y| {
                        system.stiffness.apply(x, y);
                        y.iter_mut().zip(&shift).zip(x).for_each(|((y, s), x)| *y += s * x);
                    },
                    &diag,
                    &rhs,
                    opts.cg_tol,
                    opts.cg_max_iters,
                );
                let change = system.energy_change(&u, &out.solution);
                if change < 0.0 {
                    step = out.solution;
                    accepted = true;
                    flow_steps += 1;
                    break;
                }
                flow_step *= 0.5;
            }
        }

        if !accepted {
            // no descent possible at this precision
            iterations = opts.max_newton_iters;
            continue;
        }

        for (m, &idx) in system.nodes.iter().enumerate() {
            u[idx] += step[m];
        }
        // strongly nonlinear nodes: let each settle into its own well
        project(&mut u, &grid, project_positive, even);
        system.relaxation_sweep(&mut u);
        project(&mut u, &grid, project_positive, even);
        energy = system.energy(&u);
        history.push(energy);
    }
}

/// Newton step on the true Hessian; where that is indefinite, on the
/// saddle-free Hessian.
fn newton_direction(
    system: &DiscreteSystem<'_>,
    u: &[f64],
    rhs: &[f64],
    opts: &SolveOptions,
) -> Vec<f64> {
    let exact = system.hessian(u, false);
    let diag = exact.diagonal();
    if diag.iter().all(|&d| d > 0.0) {
        let out = conjugate_gradient(|x, y| exact.apply(x, y), &diag, rhs, opts.cg_tol, opts.cg_max_iters);
        if out.status != CgStatus::NegativeCurvature {
            return out.solution;
        }
    }
    let modified = system.hessian(u, true);
    let diag = modified.diagonal();
    conjugate_gradient(|x, y| modified.apply(x, y), &diag, rhs, opts.cg_tol, opts.cg_max_iters)
        .solution
}

/// The force `f̄ = W⁻¹ ∂_u Σ_cells w F̄` the discrete functional exerts at
/// each interior node of `field`; zero on the innermost and outermost rings
/// (and on sector rays). With it `Δ_h u + f̄ = 0` is the discrete equation.
pub fn discrete_force(
    potential: &PeriodicPotential,
    field: &ScalarField,
    quadrature: PotentialQuadrature,
) -> ScalarField {
    let grid = field.grid();
    let system = DiscreteSystem::new(grid, potential, quadrature, false);
    let grad = system.potential_gradient(field.values());
    let mut values = vec![0.0; grid.len()];
    for (m, &idx) in system.nodes.iter().enumerate() {
        values[idx] = grad[m] / system.weight[m];
    }
    ScalarField::new(grid.clone(), values).expect("sizes match")
}

/// Per ring, `sup |δ|` of one more Newton correction `δ` at a sector field:
/// an a-posteriori estimate of its distance to the exact discrete solution.
pub fn correction_size(
    potential: &PeriodicPotential,
    field: &ScalarField,
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let grid = field.grid();
    if !matches!(grid.mode(), GridMode::Sector { .. }) {
        return Err(Error::GridMismatch("correction_size needs a sector field".into()));
    }
    let system = DiscreteSystem::new(grid, potential, opts.quadrature, potential.is_even());
    let u = field.values();
    let (res, _) = system.residual(u);
    let rhs: Vec<f64> = res.iter().zip(&system.weight).map(|(r, w)| r * w).collect();
    let step = newton_direction(&system, u, &rhs, opts);
    let na = grid.n_angles();
    let mut out = vec![0.0f64; grid.n_radii()];
    for (m, &idx) in system.nodes.iter().enumerate() {
        let ring = idx / na;
        out[ring] = out[ring].max(step[m].abs());
    }
    Ok(out)
}

/// Copies a sector solution to the symmetric disk grid using `u(Gz) = −u(z)`
/// with `G` the rotation by `π/d`.
pub fn extend_by_symmetry(
    sector_field: &ScalarField,
    degree: u32,
    disk_grid: Arc<PolarGrid>,
) -> Result<ScalarField> {
    let sector = sector_field.grid();
    let nt = disk_grid.n_angles();
    let per_sector = nt / (2 * degree as usize);
    if disk_grid.mode() != GridMode::Disk
        || !nt.is_multiple_of(4 * degree as usize)
        || sector.mode() != (GridMode::Sector { degree })
        || sector.n_angles() != per_sector + 1
    {
        return Err(Error::GridMismatch(format!(
            "sector with {} angles does not tile a disk with {} angles for d = {degree}",
            sector.n_angles(),
            nt
        )));
    }
    if sector.radii() != disk_grid.radii() {
        return Err(Error::GridMismatch("sector and disk radii differ".into()));
    }
    let half = per_sector / 2;
    let mut values = vec![0.0; disk_grid.len()];
    for i in 0..disk_grid.n_radii() {
        for k in 0..nt {
            // shift so the principal sector is centred on k = 0
            let shifted = (k + half) % nt;
            let copy = shifted / per_sector;
            let offset = shifted % per_sector;
            let v = if offset == 0 {
                0.0
            } else {
                sector_field.at(i, offset)
            };
            values[disk_grid.index(i, k)] = if copy.is_multiple_of(2) { v } else { -v };
        }
    }
    ScalarField::new(disk_grid, values)
}

/// Grid family for continuation: fixed inner radius, grading ratio and
/// angular resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationGrid {
    pub r_min: f64,
    pub ratio: f64,
    /// Angular intervals of the full disk (multiple of 4d).
    pub n_theta: usize,
}

impl ContinuationGrid {
    /// `nr` geometric intervals on `[R·10⁻³, R]` for the first radius.
    pub fn for_first_radius(radius: f64, nr: usize, n_theta: usize) -> Self {
        let r_min = radius * 1e-3;
        Self {
            r_min,
            ratio: (radius / r_min).powf(1.0 / nr as f64),
            n_theta,
        }
    }

    pub fn disk_grid(&self, degree: u32, radius: f64) -> Result<PolarGrid> {
        PolarGrid::symmetric_disk(degree, capped_radii(self.r_min, self.ratio, radius)?, self.n_theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauchyTable {
    /// Radius of the comparison ball (half the first radius).
    pub ball_radius: f64,
    /// `δ_m = sup_{B} |u^{R_{m+1}} − u^{R_m}|`
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ContinuationStage {
    pub radius: f64,
    pub sector: ScalarField,
    pub disk: ScalarField,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub stages: Vec<ContinuationStage>,
    pub cauchy: CauchyTable,
}

/// Linear-in-`log r` interpolation of `u − φ` from `prev` onto `grid`,
/// zero beyond the previous outer radius, plus `φ`.
fn warm_start(prev: &ScalarField, degree: u32, grid: Arc<PolarGrid>) -> ScalarField {
    let prev_grid = prev.grid();
    let phi_prev = harmonic_polynomial(degree, prev_grid.clone());
    let dev = prev.sub(&phi_prev).expect("same grid");
    let phi = harmonic_polynomial(degree, grid.clone());
    let pr = prev_grid.radii();
    let mut values = phi.values().to_vec();
    for (i, &r) in grid.radii().iter().enumerate() {
        if r >= prev_grid.r_max() {
            continue;
        }
        let j = pr.partition_point(|&x| x <= r).clamp(1, pr.len() - 1);
        let (a, b) = (pr[j - 1], pr[j]);
        let s = ((r / a).ln() / (b / a).ln()).clamp(0.0, 1.0);
        for k in 0..grid.n_angles() {
            values[grid.index(i, k)] += (1.0 - s) * dev.at(j - 1, k) + s * dev.at(j, k);
        }
    }
    ScalarField::new(grid, values).expect("sizes match")
}

/// Solves at each radius, warm-starting from the previous stage.
pub fn continuation(
    potential: &PeriodicPotential,
    degree: u32,
    radii: &[f64],
    grids: &ContinuationGrid,
    opts: &SolveOptions,
) -> Result<ContinuationResult> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation(
            "continuation radii must be strictly increasing with at least two entries".into(),
        ));
    }
    let ball_radius = 0.5 * radii[0];
    let mut result = ContinuationResult {
        stages: Vec::new(),
        cauchy: CauchyTable {
            ball_radius,
            deltas: Vec::new(),
        },
    };
    for (stage, &radius) in radii.iter().enumerate() {
        let attempt = (|| -> Result<ContinuationStage> {
            let domain = SectorDomain::new(degree, radius)?;
            let disk = Arc::new(grids.disk_grid(degree, radius)?);
            let sector_grid = Arc::new(disk.matching_sector(degree)?);
            let initial = match result.stages.last() {
                Some(prev) => warm_start(&prev.sector, degree, sector_grid.clone()),
                None => harmonic_polynomial(degree, sector_grid.clone()),
            };
            let (sector, report) = solve_sector_from(potential, &domain, initial, opts)?;
            let disk_field = extend_by_symmetry(&sector, degree, disk)?;
            Ok(ContinuationStage {
                radius,
                sector,
                disk: disk_field,
                report,
            })
        })();
        match attempt {
            Ok(st) => {
                if let Some(prev) = result.stages.last() {
                    result.cauchy.deltas.push(ball_difference(&prev.disk, &st.disk, ball_radius));
                }
                result.stages.push(st);
            }
            Err(e) => {
                return Err(Error::Continuation {
                    stage,
                    partial: Box::new(result),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok(result)
}

/// `sup |a − b|` over shared rings with `r ≤ ball`.
fn ball_difference(a: &ScalarField, b: &ScalarField, ball: f64) -> f64 {
    let (ga, gb) = (a.grid(), b.grid());
    let mut sup = 0.0f64;
    for (i, &r) in ga.radii().iter().enumerate() {
        if r > ball || i >= gb.n_radii() {
            break;
        }
        debug_assert!((gb.radii()[i] - r).abs() <= 1e-12 * r);
        for k in 0..ga.n_angles() {
            sup = sup.max((a.at(i, k) - b.at(i, k)).abs());
        }
    }
    sup
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{geometric_radii, laplacian, NodeTag};

    fn sector_grid(d: u32, r: f64, nr: usize, n_disk: usize) -> Arc<PolarGrid> {
        let disk = PolarGrid::symmetric_disk(d, geometric_radii(r * 1e-3, r, nr).unwrap(), n_disk)
            .unwrap();
        Arc::new(disk.matching_sector(d).unwrap())
    }

    #[test]
    fn zero_potential_reproduces_discrete_harmonic_function() {
        let d = 3;
        let grid = sector_grid(d, 5.0, 48, 48);
        let domain = SectorDomain::new(d, 5.0).unwrap();
        let (u, report) =
            solve_sector(&PeriodicPotential::zero(), &domain, grid.clone(), &SolveOptions::default())
                .unwrap();
        assert!(report.converged);
        assert!(report.final_residual <= 1e-9);
        // the discrete Laplacian vanishes on interior nodes
        let lap = laplacian(&u).unwrap();
        for i in grid.interior_radii() {
            for k in grid.interior_angles() {
                assert!(lap.at(i, k).abs() <= 1e-9 + report.residual_floor);
            }
        }
        let phi = harmonic_polynomial(d, grid.clone());
        let err = u.sub(&phi).unwrap().max_abs();
        assert!(err > 0.0 && err < 1e-2 * 125.0, "{err}");
    }

    #[test]
    fn sine_gordon_sector_solution_properties() {
        let d = 2;
        let r = 10.0;
        let grid = sector_grid(d, r, 96, 64);
        let domain = SectorDomain::new(d, r).unwrap();
        let opts = SolveOptions::default();
        let (u, report) =
            solve_sector(&PeriodicPotential::sine_gordon(), &domain, grid.clone(), &opts).unwrap();
        assert!(report.converged, "{report:?}");
        assert!(report.energy <= report.initial_energy);
        for w in report.energy_history.windows(2) {
            assert!(w[1] <= w[0], "energy increased: {} -> {}", w[0], w[1]);
        }
        let phi = harmonic_polynomial(d, grid.clone());
        for i in 0..grid.n_radii() {
            for k in 0..grid.n_angles() {
                match grid.tag(i, k) {
                    NodeTag::Ray => assert_eq!(u.at(i, k), 0.0),
                    NodeTag::Arc => assert_eq!(u.at(i, k), phi.at(i, k)),
                    _ => {}
                }
            }
        }
        assert!(report.min_value_interior >= 0.0);
        let dev = u.sub(&phi).unwrap().max_abs();
        assert!(dev > 0.0 && dev.is_finite());
        // strict positivity away from the boundary
        let na = grid.n_angles();
        for i in grid.interior_radii() {
            if grid.radii()[i] > r / 100.0 {
                for k in 2..na - 2 {
                    assert!(u.at(i, k) > 0.0);
                }
            }
        }
    }

    #[test]
    fn uneven_potential_needs_flag() {
        let d = 2;
        let grid = sector_grid(d, 3.0, 24, 16);
        let domain = SectorDomain::new(d, 3.0).unwrap();
        let p = PeriodicPotential::sine_gordon().with_sine_terms(&[0.2]);
        let err = solve_sector(&p, &domain, grid.clone(), &SolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let opts = SolveOptions {
            allow_uneven: true,
            ..SolveOptions::default()
        };
        assert!(solve_sector(&p, &domain, grid, &opts).is_ok());
    }

    #[test]
    fn extension_of_phi_is_phi() {
        let d = 3;
        let disk = Arc::new(
            PolarGrid::symmetric_disk(d, geometric_radii(0.01, 2.0, 12).unwrap(), 36).unwrap(),
        );
        let sector = Arc::new(disk.matching_sector(d).unwrap());
        let mut phi_s = harmonic_polynomial(d, sector.clone()).into_values();
        impose_boundary(&mut phi_s, &harmonic_polynomial(d, sector.clone()));
        let phi_s = ScalarField::new(sector, phi_s).unwrap();
        let ext = extend_by_symmetry(&phi_s, d, disk.clone()).unwrap();
        let phi = harmonic_polynomial(d, disk.clone());
        for (a, b) in ext.values().iter().zip(phi.values()) {
            assert!((a - b).abs() <= 1e-13 * b.abs().max(1.0));
        }
        let map = disk.rotation_map(d).unwrap();
        for (idx, &rot) in map.iter().enumerate() {
            assert_eq!(ext.values()[idx] + ext.values()[rot], 0.0);
        }
    }

    #[test]
    fn extension_rejects_mismatched_resolution() {
        let d = 2;
        let radii = geometric_radii(0.01, 2.0, 12).unwrap();
        let sector = Arc::new(PolarGrid::sector(d, radii.clone(), 6).unwrap());
        let disk = Arc::new(PolarGrid::symmetric_disk(d, radii, 16).unwrap());
        let f = ScalarField::zeros(sector);
        assert!(matches!(
            extend_by_symmetry(&f, d, disk),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn continuation_validates_radii() {
        let grids = ContinuationGrid::for_first_radius(5.0, 32, 16);
        let opts = SolveOptions::default();
        let p = PeriodicPotential::zero();
        assert!(continuation(&p, 2, &[5.0], &grids, &opts).is_err());
        assert!(continuation(&p, 2, &[5.0, 4.0], &grids, &opts).is_err());
    }

    #[test]
    fn continuation_zero_potential_is_stationary_inside() {
        let grids = ContinuationGrid::for_first_radius(4.0, 80, 128);
        let out = continuation(
            &PeriodicPotential::zero(),
            2,
            &[4.0, 8.0],
            &grids,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(out.cauchy.deltas.len(), 1);
        // the discrete harmonic solutions differ only by discretisation error
        assert!(out.cauchy.deltas[0] < 1e-2, "{:?}", out.cauchy);
        assert!(out.cauchy.deltas[0] > 0.0);
    }

    fn bumpy_state(grid: &Arc<PolarGrid>, d: u32) -> Vec<f64> {
        let phi = harmonic_polynomial(d, grid.clone());
        let mut u = phi.into_values();
        for i in grid.interior_radii() {
            for k in grid.interior_angles() {
                let x = (i * 7 + k * 13) as f64;
                u[grid.index(i, k)] += 0.8 * x.sin() + 0.3 * (0.37 * x).cos();
            }
        }
        u
    }

    #[test]
    fn residual_is_the_energy_gradient() {
        let p = PeriodicPotential::sine_gordon();
        for quad in [PotentialQuadrature::Nodal, PotentialQuadrature::CellAverage] {
            let grid = sector_grid(3, 4.0, 20, 24);
            let sys = DiscreteSystem::new(&grid, &p, quad, true);
            let u = bumpy_state(&grid, 3);
            let (res, _) = sys.residual(&u);
            for n in (0..sys.len()).step_by(5) {
                let h = 1e-6;
                let mut step = vec![0.0; sys.len()];
                step[n] = h;
                let plus = sys.energy_change(&u, &step);
                step[n] = -h;
                let minus = sys.energy_change(&u, &step);
                let fd = (plus - minus) / (2.0 * h);
                let exact = -sys.weight[n] * res[n];
                assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "{quad:?} {n}: {fd} {exact}");
            }
        }
    }

    #[test]
    fn hessian_is_the_gradient_jacobian() {
        let p = PeriodicPotential::sine_gordon();
        for quad in [PotentialQuadrature::Nodal, PotentialQuadrature::CellAverage] {
            let grid = sector_grid(2, 4.0, 16, 16);
            let sys = DiscreteSystem::new(&grid, &p, quad, true);
            let u = bumpy_state(&grid, 2);
            let hess = sys.hessian(&u, false);
            let grad = |u: &[f64]| -> Vec<f64> {
                let (res, _) = sys.residual(u);
                res.iter().zip(&sys.weight).map(|(r, w)| -r * w).collect()
            };
            let v: Vec<f64> = (0..sys.len()).map(|n| ((n * 31 % 17) as f64 - 8.0) / 8.0).collect();
            let h = 1e-6;
            let shifted = |s: f64| {
                let mut w = u.clone();
                for (n, &idx) in sys.nodes.iter().enumerate() {
                    w[idx] += s * v[n];
                }
                grad(&w)
            };
            let (gp, gm) = (shifted(h), shifted(-h));
            let mut hv = vec![0.0; sys.len()];
            hess.apply(&v, &mut hv);
            for n in 0..sys.len() {
                let fd = (gp[n] - gm[n]) / (2.0 * h);
                assert!((fd - hv[n]).abs() < 1e-5 * (1.0 + hv[n].abs()), "{quad:?} {n}: {fd} {}", hv[n]);
            }
        }
    }

    #[test]
    fn saddle_free_hessian_is_positive_definite() {
        let p = PeriodicPotential::sine_gordon();
        let grid = sector_grid(2, 6.0, 16, 16);
        let sys = DiscreteSystem::new(&grid, &p, PotentialQuadrature::CellAverage, true);
        let u = bumpy_state(&grid, 2);
        let hess = sys.hessian(&u, true);
        let mut hv = vec![0.0; sys.len()];
        for seed in 0..20usize {
            let v: Vec<f64> = (0..sys.len()).map(|n| (((n + 3) * (seed + 5)) as f64).sin()).collect();
            hess.apply(&v, &mut hv);
            assert!(dot(&v, &hv) > 0.0);
        }
    }

    #[test]
    fn absolute_value_of_symmetric_matrix() {
        let a = [[2.0, 1.0, 0.0], [1.0, -3.0, 0.5], [0.0, 0.5, 0.25]];
        let m = abs_symmetric3(a);
        // |A|² = A²
        for i in 0..3 {
            for j in 0..3 {
                let sq: f64 = (0..3).map(|k| m[i][k] * m[k][j]).sum();
                let a2: f64 = (0..3).map(|k| a[i][k] * a[k][j]).sum();
                assert!((sq - a2).abs() < 1e-12, "{i}{j}");
                assert!((m[i][j] - m[j][i]).abs() < 1e-14);
            }
        }
        let id = abs_symmetric3([[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]);
        assert_eq!(id, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn quadratures_agree_where_resolved() {
        let d = 2;
        let r = 3.0;
        let grid = sector_grid(d, r, 96, 96);
        let domain = SectorDomain::new(d, r).unwrap();
        let solve = |q| {
            let opts = SolveOptions { quadrature: q, ..SolveOptions::default() };
            solve_sector(&PeriodicPotential::sine_gordon(), &domain, grid.clone(), &opts).unwrap().0
        };
        let diff = solve(PotentialQuadrature::Nodal)
            .sub(&solve(PotentialQuadrature::CellAverage))
            .unwrap()
            .max_abs();
        assert!(diff < 1e-2, "{diff}");
    }
}
