//! Central-difference gradient verification.

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Compare analytic gradients against central finite differences of `loss`.
///
/// Returns the worst relative error over all coordinates:
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(loss: F, params: &[Matrix], analytic: &[Matrix], epsilon: f64) -> Result<f64>
where
    F: Fn(&[Matrix]) -> f64,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::contract(format!(
            "grad_check epsilon {epsilon} outside (1e-7, 1e-3)"
        )));
    }
    if params.len() != analytic.len() {
        return Err(Error::contract(
            "grad_check: analytic gradient count differs from parameter count".to_string(),
        ));
    }
    for (p, g) in params.iter().zip(analytic.iter()) {
        if p.shape() != g.shape() {
            return Err(Error::contract(format!(
                "grad_check: gradient shape {:?} differs from parameter shape {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        let (rows, cols) = params[t].shape();
        for i in 0..rows {
            for j in 0..cols {
                let original = work[t].get(i, j);
                work[t].set(i, j, original + epsilon);
                let plus = loss(&work);
                work[t].set(i, j, original - epsilon);
                let minus = loss(&work);
                work[t].set(i, j, original);

                let numeric = (plus - minus) / (2.0 * epsilon);
                let exact = analytic[t].get(i, j);
                let rel = (exact - numeric).abs() / 1.0f64.max(exact.abs()).max(numeric.abs());
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
