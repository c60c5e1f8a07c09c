//! One-sided (Hestenes) Jacobi SVD for the small observation matrices.

use nalgebra::DMatrix;

use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// `h = u * diag(singular_values) * v^T`, with `u` square `M x M`, `v` square
/// `N x N` and `N` singular values sorted non-increasing (zeros included when
/// `M < N` or `h` is rank deficient).
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        let mut sigma = DMatrix::zeros(m, n);
        for (i, &s) in self.singular_values.iter().enumerate().take(m.min(n)) {
            sigma[(i, i)] = s;
        }
        &self.u * sigma * self.v.transpose()
    }
}

pub fn svd(h: &DMatrix<f64>) -> Result<Svd> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let (m, n) = h.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput(format!("empty {m}x{n} matrix")));
    }
    let mut a = h.clone();
    let mut v = DMatrix::<f64>::identity(n, n);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let singular_values: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let v = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    let tol = rank_tolerance(&singular_values);

    let mut u = DMatrix::<f64>::zeros(m, m);
    let mut filled = 0;
    for (c, &j) in order.iter().enumerate().take(m) {
        if singular_values[c] > tol {
            u.set_column(c, &(a.column(j) / singular_values[c]));
            filled += 1;
        } else {
            break;
        }
    }
    complete_basis(&mut u, filled);

    let mut out = Svd {
        u,
        singular_values,
        v,
    };
    fix_signs(&mut out);
    Ok(out)
}

/// Singular values at or below this are treated as zero.
pub fn rank_tolerance(singular_values: &[f64]) -> f64 {
    let largest = singular_values.iter().copied().fold(0.0, f64::max);
    1e-9 * largest
}

fn rotate_columns(x: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..x.nrows() {
        let xp = x[(r, p)];
        let xq = x[(r, q)];
        x[(r, p)] = c * xp - s * xq;
        x[(r, q)] = s * xp + c * xq;
    }
}

/// Fills columns `filled..M` of `u` with an orthonormal completion drawn from
/// the standard basis.
fn complete_basis(u: &mut DMatrix<f64>, mut filled: usize) {
    let m = u.nrows();
    for e in 0..m {
        if filled == m {
            break;
        }
        let mut cand = nalgebra::DVector::<f64>::zeros(m);
        cand[e] = 1.0;
        // Two Gram-Schmidt passes keep the completion orthogonal to rounding.
        for _ in 0..2 {
            for c in 0..filled {
                let proj = u.column(c).dot(&cand);
                cand -= u.column(c) * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-6 {
            u.set_column(filled, &(cand / norm));
            filled += 1;
        }
    }
}

/// Makes the largest-magnitude entry of each right singular vector positive
/// (first such entry on ties), flipping the paired left vector with it.
fn fix_signs(svd: &mut Svd) {
    let n = svd.v.ncols();
    let m = svd.u.ncols();
    for j in 0..n {
        let col = svd.v.column(j);
        let max = col.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let pivot = col
            .iter()
            .find(|v| v.abs() >= max - 1e-12)
            .copied()
            .unwrap_or(0.0);
        if pivot < 0.0 {
            svd.v.column_mut(j).neg_mut();
            if j < m {
                svd.u.column_mut(j).neg_mut();
            }
        }
    }
}
