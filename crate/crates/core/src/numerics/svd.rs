//! Singular value decomposition by one-sided Jacobi rotations.
//!
//! Accurate to near machine precision for the dense sizes this crate works
//! with (n up to a few thousand). The sweep cap is 100·max(rows, cols); a
//! matrix that has not converged by then is reported as a numerical failure.

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub struct Svd {
    /// Left singular vectors, rows×min(rows,cols), orthonormal columns.
    pub u: Matrix,
    /// Singular values, nonnegative, sorted descending.
    pub sigma: Vec<f64>,
    /// Right singular vectors, cols×min(rows,cols), orthonormal columns.
    pub v: Matrix,
}

/// Thin SVD: `M = U · diag(sigma) · V^T`.
pub fn svd(m: &Matrix) -> Result<Svd> {
    m.check_finite("svd input")?;
    if m.rows() >= m.cols() {
        svd_tall(m)
    } else {
        let t = svd_tall(&m.transpose())?;
        Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        })
    }
}

fn svd_tall(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    if cols == 0 || rows == 0 {
        return Ok(Svd {
            u: Matrix::zeros(rows, cols),
            sigma: vec![],
            v: Matrix::zeros(cols, cols),
        });
    }

    // Column-major working copy: columns are rotated in place.
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    let max_sweeps = 100 * rows.max(cols);
    let tol = 1e-14;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (app, aqq, apq) = column_moments(&a[p], &a[q]);
                if apq.abs() <= tol * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut a, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical {
            op: "svd",
            rows,
            cols,
        });
    }

    // Column norms are the singular values; normalized columns form U.
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = a.iter().map(|col| col_norm(col)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u = Matrix::zeros(rows, cols);
    let mut v_out = Matrix::zeros(cols, cols);
    let mut sigma = vec![0.0; cols];
    let scale = norms.iter().fold(0.0f64, |m, &x| m.max(x));
    let rank_tol = scale * f64::EPSILON;

    for (slot, &j) in order.iter().enumerate() {
        sigma[slot] = norms[j];
        v_out.set_col(slot, &v[j]);
        if norms[j] > rank_tol {
            let inv = 1.0 / norms[j];
            let col: Vec<f64> = a[j].iter().map(|&x| x * inv).collect();
            u.set_col(slot, &col);
        }
        // Columns with (numerically) zero norm are filled in below.
    }
    complete_orthonormal(&mut u, &sigma, rank_tol);

    Ok(Svd {
        u,
        sigma,
        v: v_out,
    })
}

fn column_moments(p: &[f64], q: &[f64]) -> (f64, f64, f64) {
    let mut app = 0.0;
    let mut aqq = 0.0;
    let mut apq = 0.0;
    for (&x, &y) in p.iter().zip(q.iter()) {
        app += x * x;
        aqq += y * y;
        apq += x * y;
    }
    (app, aqq, apq)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    let (head, tail) = cols.split_at_mut(hi);
    let (cp, cq) = (&mut head[lo], &mut tail[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn col_norm(col: &[f64]) -> f64 {
    col.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Replace zero-norm U columns by unit vectors orthogonal to the rest, so U
/// always has orthonormal columns even for rank-deficient input.
fn complete_orthonormal(u: &mut Matrix, sigma: &[f64], rank_tol: f64) {
    let (rows, cols) = u.shape();
    for j in 0..cols {
        if sigma[j] > rank_tol {
            continue;
        }
        let mut candidate = None;
        for basis in 0..rows {
            let mut col = vec![0.0; rows];
            col[basis] = 1.0;
            // Two Gram-Schmidt passes against the columns already in place.
            for _ in 0..2 {
                for k in 0..cols {
                    if k == j || (sigma[k] <= rank_tol && k > j) {
                        continue;
                    }
                    let dot: f64 = (0..rows).map(|i| col[i] * u.get(i, k)).sum();
                    for (i, c) in col.iter_mut().enumerate() {
                        *c -= dot * u.get(i, k);
                    }
                }
            }
            let norm = col_norm(&col);
            if norm > 0.5 {
                for c in col.iter_mut() {
                    *c /= norm;
                }
                candidate = Some(col);
                break;
            }
        }
        if let Some(col) = candidate {
            u.set_col(j, &col);
        }
    }
}
