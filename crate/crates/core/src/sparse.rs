//! Minimal CSR matrix and a Jacobi-preconditioned conjugate gradient solver.
//! Everything here is sized for desk-scale micro cells (a few thousand
//! unknowns at most), so no attention is paid to cache blocking or the like.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Build a square CSR matrix from (row, col, value) triplets. Duplicate
    /// entries are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for &(c, v) in row.iter() {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        Csr { n, indptr, indices, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for r in 0..self.n {
            let mut acc = 0.0;
            for idx in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[idx] * x[self.indices[idx]];
            }
            y[r] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                if self.indices[idx] == r {
                    d[r] = self.values[idx];
                }
            }
        }
        d
    }

    /// Quadratic form x'Ax.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.n {
            let mut row = 0.0;
            for idx in self.indptr[r]..self.indptr[r + 1] {
                row += self.values[idx] * x[self.indices[idx]];
            }
            acc += x[r] * row;
        }
        acc
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for idx in self.indptr[r]..self.indptr[r + 1] {
                m[r][self.indices[idx]] = self.values[idx];
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iters: usize,
    pub rel_residual: f64,
}

/// Jacobi-preconditioned CG for SPD systems. Convergence is declared when
/// ||b - Ax|| <= tol * min(||b||, ||r0||); the min keeps the test meaningful
/// both for cold starts and for time stepping, where the initial guess is
/// already close and the right-hand side carries a large steady component.
pub fn cg(a: &Csr, b: &[f64], x0: &[f64], tol: f64, max_iter: usize) -> Result<CgSolution> {
    let n = a.n;
    assert_eq!(b.len(), n);
    assert_eq!(x0.len(), n);

    let norm_b = norm2(b);
    if norm_b == 0.0 {
        // SPD system with zero right-hand side: the solution is zero.
        return Ok(CgSolution { x: vec![0.0; n], iters: 0, rel_residual: 0.0 });
    }

    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| 1.0 / d).collect();

    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    a.matvec(&x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let norm_r0 = norm2(&r);
    let scale = norm_b.min(norm_r0);
    if norm_r0 == 0.0 {
        return Ok(CgSolution { x, iters: 0, rel_residual: 0.0 });
    }
    let threshold = tol * scale;

    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];

    for iter in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let norm_r = norm2(&r);
        if norm_r <= threshold {
            return Ok(CgSolution { x, iters: iter, rel_residual: norm_r / scale });
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

    let norm_r = norm2(&r);
    Err(Error::LinearSolve { residual: norm_r / scale, iters: max_iter })
}

/// Thomas algorithm for a tridiagonal system. `lower` and `upper` have
/// length n-1. Panics on a zero pivot (the callers' systems are SPD or
/// strictly diagonally dominant).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert_eq!(lower.len(), n - 1);
    assert_eq!(upper.len(), n - 1);
    assert_eq!(rhs.len(), n);

    let mut c = vec![0.0; n - 1];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c.get(i - 1).copied().unwrap_or(0.0);
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}
