//! Symmetric eigendecomposition by the cyclic Jacobi method.

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub struct SymEig {
    /// Eigenvalues sorted descending.
    pub values: Vec<f64>,
    /// Matching eigenvectors as columns; each column's largest-magnitude
    /// component is nonnegative (first such index on ties).
    pub vectors: Matrix,
}

const SYMMETRY_TOL: f64 = 1e-10;

/// Eigendecomposition of a symmetric matrix: `M v_i = values[i] * v_i`.
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    m.check_finite("sym_eig input")?;
    if m.rows() != m.cols() {
        return Err(Error::contract(format!(
            "sym_eig requires a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::contract(format!(
            "sym_eig requires symmetry within {SYMMETRY_TOL}"
        )));
    }
    let n = m.rows();
    if n == 0 {
        return Ok(SymEig {
            values: vec![],
            vectors: Matrix::zeros(0, 0),
        });
    }

    // Work on the symmetrized matrix so tiny input asymmetry cannot leak
    // through the rotations.
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m.get(i, j) + m.get(j, i)));
    let mut v = Matrix::identity(n);
    let scale = a.frob_norm().max(1.0);
    let tol = 1e-13 * scale;

    let max_sweeps = 100;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut off_max = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off_max = off_max.max(a.get(p, q).abs());
            }
        }
        if off_max <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let (c, s) = jacobi_rotation(a.get(p, p), a.get(q, q), apq);
                apply_two_sided(&mut a, p, q, c, s);
                apply_right(&mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(Error::Numerical {
            op: "sym_eig",
            rows: n,
            cols: n,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap().then(i.cmp(&j)));

    let mut values = vec![0.0; n];
    let mut vectors = Matrix::zeros(n, n);
    for (slot, &j) in order.iter().enumerate() {
        values[slot] = diag[j];
        let mut col = v.col(j);
        fix_sign(&mut col);
        vectors.set_col(slot, &col);
    }

    Ok(SymEig { values, vectors })
}

fn jacobi_rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, c * t)
}

/// A <- J^T A J for the Givens rotation J acting on plane (p, q).
fn apply_two_sided(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, c * akp - s * akq);
        a.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, c * apk - s * aqk);
        a.set(q, k, s * apk + c * aqk);
    }
}

fn apply_right(v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = v.rows();
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// Deterministic sign convention: the largest-magnitude component (first on
/// ties) is made nonnegative.
fn fix_sign(col: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (i, &x) in col.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if col[best] < 0.0 {
        for x in col.iter_mut() {
            *x = -*x;
        }
    }
}
