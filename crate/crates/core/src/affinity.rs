//! Conversion of the learned relation matrix into the affinity fed to
//! spectral clustering: symmetrize, truncated SVD, row-normalized outer
//! product, elementwise power.

use crate::error::{Error, Result};
use crate::numerics::{svd, Matrix};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityConfig {
    /// Number of clusters k.
    pub clusters: usize,
    /// Assumed intrinsic dimension of each subspace; the SVD keeps
    /// m = k·d_sub + 1 components.
    #[serde(default = "default_subspace_dim")]
    pub subspace_dim: usize,
    /// Elementwise exponent applied to the normalized product; chosen per
    /// dataset according to noise level.
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_subspace_dim() -> usize {
    3
}

fn default_rho() -> f64 {
    1.0
}

impl AffinityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters < 2 {
            return Err(Error::config("affinity: need at least 2 clusters"));
        }
        if self.subspace_dim == 0 {
            return Err(Error::config("affinity: subspace dimension must be >= 1"));
        }
        if self.rho <= 0.0 || self.rho.is_nan() {
            return Err(Error::config("affinity: rho must be positive"));
        }
        Ok(())
    }

    pub fn kept_components(&self) -> usize {
        self.clusters * self.subspace_dim + 1
    }
}

#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    /// Symmetric, entries in [0, 1], diagonal retained.
    pub a: Matrix,
    /// Set when the relation matrix carried (numerically) no energy and the
    /// affinity is all-near-zero.
    pub degenerate: bool,
}

/// Build the affinity matrix from a zero-diagonal relation matrix:
/// S = (|C|+|C|ᵀ)/2; S = UΣVᵀ; Z = U_m Σ_m^{1/2} with m = k·d_sub+1; rows of
/// Z normalized to unit length; A = |Z Zᵀ|^rho entrywise.
pub fn build_affinity(c: &Matrix, cfg: &AffinityConfig) -> Result<AffinityMatrix> {
    cfg.validate()?;
    if c.rows() != c.cols() {
        return Err(Error::contract(format!(
            "relation matrix must be square, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    for i in 0..c.rows() {
        if c.get(i, i) != 0.0 {
            return Err(Error::contract(format!(
                "relation matrix has nonzero diagonal entry at {i}"
            )));
        }
    }
    let n = c.rows();
    let m = cfg.kept_components();
    if m > n {
        return Err(Error::config(format!(
            "affinity keeps m = k*d_sub+1 = {m} components but the relation matrix is only {n}x{n}"
        )));
    }

    let s = Matrix::from_fn(n, n, |i, j| 0.5 * (c.get(i, j).abs() + c.get(j, i).abs()));
    let decomposition = svd(&s)?;

    let degenerate = decomposition.sigma.first().copied().unwrap_or(0.0) <= 1e-12;

    // Z = U_m Σ_m^{1/2}, rows normalized to unit length (zero rows stay
    // zero). Unit rows put |Z Zᵀ| inside [0, 1] by Cauchy-Schwarz, so the
    // elementwise power is well-defined.
    let mut z = Matrix::from_fn(n, m, |i, j| {
        decomposition.u.get(i, j) * decomposition.sigma[j].sqrt()
    });
    for i in 0..n {
        let norm: f64 = z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in z.row_mut(i) {
                *v /= norm;
            }
        }
    }

    // Compute the upper triangle and mirror so A = Aᵀ holds exactly.
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut dot = 0.0;
            for k in 0..m {
                dot += z.get(i, k) * z.get(j, k);
            }
            let v = dot.abs().min(1.0).powf(cfg.rho);
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }

    Ok(AffinityMatrix { a, degenerate })
}

/// 8-bit binary portable graymap of a nonnegative matrix, scaled by its
/// maximum entry.
pub fn write_pgm(path: &Path, m: &Matrix) -> Result<()> {
    let name = path.display().to_string();
    let max = m.max_abs();
    let mut bytes = Vec::with_capacity(64 + m.rows() * m.cols());
    bytes.extend_from_slice(format!("P5\n{} {}\n255\n", m.cols(), m.rows()).as_bytes());
    for i in 0..m.rows() {
        for &v in m.row(i) {
            let scaled = if max > 0.0 {
                (255.0 * v.abs() / max + 0.5).floor().clamp(0.0, 255.0)
            } else {
                0.0
            };
            bytes.push(scaled as u8);
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(&name, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(&name, e))
}
