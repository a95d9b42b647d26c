//! Similarity graph built from a relation matrix, its Laplacians, and the
//! locality-preserving loss terms.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Degrees below this are clamped before inversion; near-zero relation rows
/// show up routinely early in training.
pub const DEGREE_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    /// S = (|C| + |C|ᵀ)/2, symmetric and nonnegative.
    pub s: Matrix,
    /// Row sums of S.
    pub degrees: Vec<f64>,
    /// L = D − S.
    pub laplacian: Matrix,
    /// L_n = D⁻¹ᐟ² L D⁻¹ᐟ² with the ε-clamped degrees.
    pub normalized_laplacian: Matrix,
}

/// Build S, D, L, and L_n from a square zero-diagonal relation matrix.
pub fn similarity_from_relation(c: &Matrix) -> Result<SimilarityGraph> {
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
    // Symmetric by construction: each unordered pair is computed once.
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = 0.5 * (c.get(i, j).abs() + c.get(j, i).abs());
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }

    let degrees: Vec<f64> = (0..n).map(|i| s.row(i).iter().sum()).collect();

    let mut laplacian = s.scale(-1.0);
    for i in 0..n {
        laplacian.set(i, i, degrees[i] - s.get(i, i));
    }

    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.max(DEGREE_EPS).sqrt()).collect();
    let normalized_laplacian =
        Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * laplacian.get(i, j) * inv_sqrt[j]);

    Ok(SimilarityGraph {
        s,
        degrees,
        laplacian,
        normalized_laplacian,
    })
}

/// Both sides of the weighted-reconstruction trace identity, for testing:
/// lhs = Σᵢⱼ Sᵢⱼ‖Xᵢ − X̂ⱼ‖², rhs = Tr[(X−X̂)D(X−X̂)ᵀ] + 2·Tr(X L X̂ᵀ).
pub fn locality_identity_check(x: &Matrix, xhat: &Matrix, s: &Matrix) -> Result<(f64, f64)> {
    if x.shape() != xhat.shape() {
        return Err(Error::contract("locality_identity_check: X and X̂ shapes differ"));
    }
    if s.rows() != s.cols() || s.rows() != x.cols() {
        return Err(Error::contract(
            "locality_identity_check: S must be n×n for n samples",
        ));
    }
    if !s.is_symmetric(1e-10) {
        return Err(Error::contract("locality_identity_check: S must be symmetric"));
    }

    let n = x.cols();
    let d = x.rows();

    // Direct double loop over sample pairs.
    let mut lhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = s.get(i, j);
            if w == 0.0 {
                continue;
            }
            let mut dist = 0.0;
            for r in 0..d {
                let diff = x.get(r, i) - xhat.get(r, j);
                dist += diff * diff;
            }
            lhs += w * dist;
        }
    }

    let degrees: Vec<f64> = (0..n).map(|i| s.row(i).iter().sum()).collect();
    let diff = x.sub(xhat);
    let mut weighted = 0.0;
    for j in 0..n {
        let mut col_sq = 0.0;
        for r in 0..d {
            col_sq += diff.get(r, j) * diff.get(r, j);
        }
        weighted += degrees[j] * col_sq;
    }

    let mut laplacian = s.scale(-1.0);
    for i in 0..n {
        laplacian.set(i, i, degrees[i] - s.get(i, i));
    }
    let rhs = weighted + 2.0 * trace_x_l_yt(x, &laplacian, xhat);

    Ok((lhs, rhs))
}

/// Locality loss used in the joint objective:
/// `‖X − X̂‖²_F + 2·Tr(X L_n X̂ᵀ)`.
pub fn locality_loss(x: &Matrix, xhat: &Matrix, l_n: &Matrix) -> Result<f64> {
    if x.shape() != xhat.shape() {
        return Err(Error::contract("locality_loss: X and X̂ shapes differ"));
    }
    if l_n.rows() != l_n.cols() || l_n.rows() != x.cols() {
        return Err(Error::contract("locality_loss: L_n must be n×n for n samples"));
    }
    Ok(x.sub(xhat).frob_norm_sq() + 2.0 * trace_x_l_yt(x, l_n, xhat))
}

/// Gradient of `locality_loss` with respect to X̂: `2(X̂ − X) + 2·X·L_n`.
pub fn locality_grad_xhat(x: &Matrix, xhat: &Matrix, l_n: &Matrix) -> Matrix {
    let mut g = xhat.sub(x).scale(2.0);
    g.axpy(2.0, &x.matmul(l_n));
    g
}

/// `Tr(X · L · Yᵀ) = Σᵢⱼ Lᵢⱼ ⟨Xᵢ, Yⱼ⟩` for column-sample matrices.
fn trace_x_l_yt(x: &Matrix, l: &Matrix, y: &Matrix) -> f64 {
    x.matmul(l).frob_inner(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{seeded, uniform_matrix};
    use proptest::prelude::*;

    fn random_zero_diag(seed: u64, n: usize) -> Matrix {
        let mut rng = seeded(seed);
        let mut c = uniform_matrix(&mut rng, n, n, -1.0, 1.0);
        for i in 0..n {
            c.set(i, i, 0.0);
        }
        c
    }

    #[test]
    fn forced_2x2_example() {
        let c = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let g = similarity_from_relation(&c).unwrap();
        assert_eq!(g.s, Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        assert_eq!(g.degrees, vec![1.0, 1.0]);
        assert_eq!(
            g.laplacian,
            Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()
        );
    }

    #[test]
    fn zero_relation_gives_zero_normalized_laplacian() {
        let g = similarity_from_relation(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(g.s, Matrix::zeros(3, 3));
        assert_eq!(g.normalized_laplacian, Matrix::zeros(3, 3));
    }

    #[test]
    fn nonzero_diagonal_rejected() {
        let c = Matrix::from_rows(&[vec![0.5, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(similarity_from_relation(&c), Err(Error::Contract(_))));
    }

    #[test]
    fn normalized_laplacian_matches_direct_recomputation() {
        let c = random_zero_diag(21, 6);
        let g = similarity_from_relation(&c).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let di = g.degrees[i].max(DEGREE_EPS);
                let dj = g.degrees[j].max(DEGREE_EPS);
                let want = g.laplacian.get(i, j) / (di * dj).sqrt();
                assert!((g.normalized_laplacian.get(i, j) - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn identity_check_on_random_instance() {
        let mut rng = seeded(4);
        let x = uniform_matrix(&mut rng, 5, 8, -1.0, 1.0);
        let xhat = uniform_matrix(&mut rng, 5, 8, -1.0, 1.0);
        let raw = uniform_matrix(&mut rng, 8, 8, 0.0, 1.0);
        let s = Matrix::from_fn(8, 8, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)));
        let (lhs, rhs) = locality_identity_check(&x, &xhat, &s).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn identity_check_with_equal_matrices() {
        // X = X̂ kills the degree term; both sides equal 2·Tr(X L Xᵀ).
        let mut rng = seeded(5);
        let x = uniform_matrix(&mut rng, 4, 6, -1.0, 1.0);
        let raw = uniform_matrix(&mut rng, 6, 6, 0.0, 1.0);
        let s = Matrix::from_fn(6, 6, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)));
        let (lhs, rhs) = locality_identity_check(&x, &x, &s).unwrap();
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        let degrees: Vec<f64> = (0..6).map(|i| s.row(i).iter().sum()).collect();
        let mut lap = s.scale(-1.0);
        for i in 0..6 {
            lap.set(i, i, degrees[i] - s.get(i, i));
        }
        let expected = 2.0 * x.matmul(&lap).frob_inner(&x);
        assert!((lhs - expected).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn identity_check_zero_similarity() {
        let mut rng = seeded(6);
        let x = uniform_matrix(&mut rng, 3, 4, -1.0, 1.0);
        let xhat = uniform_matrix(&mut rng, 3, 4, -1.0, 1.0);
        let (lhs, rhs) = locality_identity_check(&x, &xhat, &Matrix::zeros(4, 4)).unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn asymmetric_s_rejected() {
        let x = Matrix::zeros(2, 2);
        let s = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(locality_identity_check(&x, &x, &s).is_err());
    }

    #[test]
    fn locality_loss_reduces_to_reconstruction_for_zero_laplacian() {
        let mut rng = seeded(7);
        let x = uniform_matrix(&mut rng, 4, 5, -1.0, 1.0);
        let xhat = uniform_matrix(&mut rng, 4, 5, -1.0, 1.0);
        let loss = locality_loss(&x, &xhat, &Matrix::zeros(5, 5)).unwrap();
        assert!((loss - x.sub(&xhat).frob_norm_sq()).abs() < 1e-14);
    }

    #[test]
    fn locality_loss_equal_matrices_is_pure_trace() {
        let mut rng = seeded(8);
        let x = uniform_matrix(&mut rng, 4, 5, -1.0, 1.0);
        let raw = uniform_matrix(&mut rng, 5, 5, -1.0, 1.0);
        let l_n = Matrix::from_fn(5, 5, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)));
        let loss = locality_loss(&x, &x, &l_n).unwrap();
        let want = 2.0 * x.matmul(&l_n).frob_inner(&x);
        assert!((loss - want).abs() < 1e-12);
    }

    #[test]
    fn locality_loss_matches_termwise_recomputation() {
        let mut rng = seeded(9);
        let x = uniform_matrix(&mut rng, 5, 6, -1.0, 1.0);
        let xhat = uniform_matrix(&mut rng, 5, 6, -1.0, 1.0);
        let c = random_zero_diag(10, 6);
        let l_n = similarity_from_relation(&c).unwrap().normalized_laplacian;
        let loss = locality_loss(&x, &xhat, &l_n).unwrap();

        let mut recon = 0.0;
        for i in 0..5 {
            for j in 0..6 {
                let diff = x.get(i, j) - xhat.get(i, j);
                recon += diff * diff;
            }
        }
        let mut trace = 0.0;
        for i in 0..6 {
            for j in 0..6 {
                let mut dot = 0.0;
                for r in 0..5 {
                    dot += x.get(r, i) * xhat.get(r, j);
                }
                trace += l_n.get(i, j) * dot;
            }
        }
        assert!((loss - (recon + 2.0 * trace)).abs() < 1e-10);
    }

    #[test]
    fn connected_graph_normalized_laplacian_spectrum() {
        // Complete-ish graph: eigenvalues of L_n in [0, 2] and D^{1/2}·1 in
        // the null space.
        let mut rng = seeded(13);
        let raw = uniform_matrix(&mut rng, 7, 7, 0.1, 1.0);
        let mut c = Matrix::from_fn(7, 7, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)));
        for i in 0..7 {
            c.set(i, i, 0.0);
        }
        let g = similarity_from_relation(&c).unwrap();
        let eig = crate::numerics::sym_eig(&g.normalized_laplacian).unwrap();
        for &l in &eig.values {
            assert!(l >= -1e-10, "eigenvalue {l} below 0");
            assert!(l <= 2.0 + 1e-10, "eigenvalue {l} above 2");
        }
        let null_vec: Vec<f64> = g.degrees.iter().map(|&d| d.sqrt()).collect();
        let v = Matrix::from_vec(7, 1, null_vec).unwrap();
        let residual = g.normalized_laplacian.matmul(&v).frob_norm();
        assert!(residual < 1e-10 * v.frob_norm());
    }

    proptest! {
        #[test]
        fn sign_pattern_of_c_is_irrelevant(seed in 0u64..200, flip_row in 0usize..5, flip_col in 0usize..5) {
            let c = random_zero_diag(seed, 5);
            let mut flipped = c.clone();
            if flip_row != flip_col {
                flipped.set(flip_row, flip_col, -c.get(flip_row, flip_col));
            }
            let a = similarity_from_relation(&c).unwrap();
            let b = similarity_from_relation(&flipped).unwrap();
            prop_assert_eq!(a.s.data(), b.s.data());
        }

        #[test]
        fn identity_holds_for_random_nonnegative_s(seed in 0u64..200) {
            let mut rng = seeded(seed);
            let x = uniform_matrix(&mut rng, 5, 8, -2.0, 2.0);
            let xhat = uniform_matrix(&mut rng, 5, 8, -2.0, 2.0);
            let raw = uniform_matrix(&mut rng, 8, 8, 0.0, 1.0);
            let s = Matrix::from_fn(8, 8, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)));
            let (lhs, rhs) = locality_identity_check(&x, &xhat, &s).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn laplacian_rows_sum_to_zero(seed in 0u64..200) {
            let c = random_zero_diag(seed, 6);
            let g = similarity_from_relation(&c).unwrap();
            for i in 0..6 {
                let sum: f64 = g.laplacian.row(i).iter().sum();
                prop_assert!(sum.abs() < 1e-10);
            }
        }
    }
}
