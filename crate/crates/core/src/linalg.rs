//! Preconditioned conjugate gradients for the symmetric Newton and flow systems.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    Converged,
    /// `pᵀAp ≤ 0` was met; the operator is not positive definite.
    NegativeCurvature,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub status: CgStatus,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric `A` given as a matvec, with Jacobi
/// preconditioner `diag`. Stops at `‖r‖₂ ≤ tol ‖b‖₂`.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return CgOutcome {
            solution: x,
            iterations: 0,
            relative_residual: 0.0,
            status: CgStatus::Converged,
        };
    }
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        apply(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
                status: CgStatus::NegativeCurvature,
            };
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel <= tol {
            return CgOutcome {
                solution: x,
                iterations: it + 1,
                relative_residual: rel,
                status: CgStatus::Converged,
            };
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        solution: x,
        iterations: max_iter,
        relative_residual: rel,
        status: CgStatus::MaxIterations,
    }
}

/// Square sparse matrix in compressed rows with a pattern fixed at
/// construction; values are refilled in place.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    row_start: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Pattern from per-row column lists; duplicates are merged.
    pub fn with_pattern(rows: Vec<Vec<usize>>) -> Self {
        let mut row_start = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        row_start.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            cols.extend(row);
            row_start.push(cols.len());
        }
        let values = vec![0.0; cols.len()];
        Self {
            row_start,
            cols,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_start.len() - 1
    }

    /// Storage slot of `(row, col)`, if it is in the pattern.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_start[row];
        let hi = self.row_start[row + 1];
        self.cols[lo..hi].binary_search(&col).ok().map(|p| lo + p)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let span = self.row_start[r]..self.row_start[r + 1];
            *out = self.cols[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, v)| v * x[c])
                .sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|r| self.position(r, r).map_or(0.0, |p| self.values[p]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], y: &mut [f64], shift: f64) {
        let n = x.len();
        for i in 0..n {
            let mut v = (2.0 + shift) * x[i];
            if i > 0 {
                v -= x[i - 1];
            }
            if i + 1 < n {
                v -= x[i + 1];
            }
            y[i] = v;
        }
    }

    #[test]
    fn solves_spd_tridiagonal() {
        let n = 200;
        let b: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin()).collect();
        let out = conjugate_gradient(|x, y| tridiag(x, y, 0.01), &vec![2.01; n], &b, 1e-12, 1000);
        assert_eq!(out.status, CgStatus::Converged);
        let mut check = vec![0.0; n];
        tridiag(&out.solution, &mut check, 0.01);
        let err = check.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn detects_indefinite_operator() {
        let n = 50;
        let b = vec![1.0; n];
        let out = conjugate_gradient(|x, y| tridiag(x, y, -3.0), &vec![1.0; n], &b, 1e-12, 1000);
        assert_eq!(out.status, CgStatus::NegativeCurvature);
    }

    #[test]
    fn csr_matches_dense() {
        let mut a = CsrMatrix::with_pattern(vec![vec![1, 0, 0], vec![0, 1, 2], vec![1]]);
        for (slot, v) in [((0, 0), 4.0), ((0, 1), -1.0), ((1, 0), -1.0), ((1, 1), 4.0)] {
            let p = a.position(slot.0, slot.1).unwrap();
            a.values_mut()[p] = v;
        }
        let p = a.position(1, 2).unwrap();
        a.values_mut()[p] = -2.0;
        let p = a.position(2, 1).unwrap();
        a.values_mut()[p] = -2.0;
        assert!(a.position(2, 2).is_none());
        let mut y = vec![0.0; 3];
        a.apply(&[1.0, 2.0, 3.0], &mut y);
        assert_eq!(y, vec![2.0, 1.0, -4.0]);
        assert_eq!(a.diagonal(), vec![4.0, 4.0, 0.0]);
    }

    #[test]
    fn zero_rhs() {
        let out = conjugate_gradient(|x, y| tridiag(x, y, 0.0), &[2.0; 4], &[0.0; 4], 1e-12, 10);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.solution, vec![0.0; 4]);
    }
}
