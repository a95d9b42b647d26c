//! Spectral clustering of an affinity matrix, and the k-means routine it
//! needs (k-means++ seeding, Lloyd iterations, restarts).

use crate::error::{Error, Result};
use crate::graph::DEGREE_EPS;
use crate::numerics::rng::{child, seeded, Rng};
use crate::numerics::{sym_eig, Matrix};
use serde::{Deserialize, Serialize};

pub const DEFAULT_RESTARTS: usize = 20;
const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// One cluster id in [0, k) per sample.
    pub labels: Vec<usize>,
    pub k: usize,
    /// k-means objective at convergence.
    pub inertia: f64,
    /// Set when the result carries no usable structure: an empty cluster
    /// survived repair, or the spectral gap at k is numerically zero.
    pub degenerate: bool,
}

/// Normalized spectral clustering: scale the affinity to
/// D^{-1/2} A D^{-1/2}, embed with the top-k eigenvectors, row-normalize,
/// and run seeded k-means on the rows.
pub fn spectral_cluster(a: &Matrix, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::contract("spectral_cluster: affinity must be square"));
    }
    if !a.is_symmetric(1e-10) {
        return Err(Error::contract("spectral_cluster: affinity must be symmetric"));
    }
    if a.data().iter().any(|&v| v < 0.0) {
        return Err(Error::contract("spectral_cluster: affinity must be nonnegative"));
    }
    if k < 2 || k >= n {
        return Err(Error::config(format!(
            "spectral_cluster: need 2 <= k < n, got k={k}, n={n}"
        )));
    }

    let degrees: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> = degrees
        .iter()
        .map(|&d| 1.0 / d.max(DEGREE_EPS).sqrt())
        .collect();
    let normalized = Matrix::from_fn(n, n, |i, j| inv_sqrt[i] * a.get(i, j) * inv_sqrt[j]);

    let eig = sym_eig(&normalized)?;
    // No separation between the kept and discarded eigenspaces means the
    // embedding is arbitrary within a rotation.
    let gap = eig.values[k - 1] - eig.values[k];
    let spectral_degenerate = gap <= 1e-12 * eig.values[0].abs().max(1.0);

    let mut embedding = Matrix::from_fn(n, k, |i, j| eig.vectors.get(i, j));
    for i in 0..n {
        let norm: f64 = embedding.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in embedding.row_mut(i) {
                *v /= norm;
            }
        }
        // Zero rows keep their zeros and fall to the nearest centroid.
    }

    let mut assignment = kmeans(&embedding, k, seed, DEFAULT_RESTARTS)?;
    assignment.degenerate |= spectral_degenerate;
    Ok(assignment)
}

/// Seeded k-means over the rows of `points` (n×dim), best of `restarts`
/// runs by inertia (ties keep the earliest restart).
pub fn kmeans(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::config(format!("kmeans: need 1 <= k <= n, got k={k}, n={n}")));
    }
    let restarts = restarts.max(1);

    let mut master = seeded(seed);
    let mut best: Option<ClusterAssignment> = None;
    for _ in 0..restarts {
        let mut stream = child(&mut master);
        let run = kmeans_once(points, k, &mut stream);
        let better = match &best {
            None => true,
            Some(b) => run.inertia < b.inertia,
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

fn kmeans_once(points: &Matrix, k: usize, rng: &mut Rng) -> ClusterAssignment {
    let n = points.rows();
    let dim = points.cols();
    let mut centroids = plus_plus_seeding(points, k, rng);

    let mut labels = vec![0usize; n];
    let mut degenerate = false;
    for _ in 0..MAX_LLOYD_ITERS {
        // Assignment step.
        let mut changed = false;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(points.row(i), centroid);
                if d < best_d {
                    best_d = d;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
        }

        // Update step.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, &v) in sums[labels[i]].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        degenerate = false;
        for c in 0..k {
            if counts[c] == 0 {
                // Repair: reseed from the point farthest from its centroid.
                let far = farthest_point(points, &labels, &centroids);
                if labels[far] == c || counts[labels[far]] <= 1 {
                    degenerate = true;
                } else {
                    centroids[c] = points.row(far).to_vec();
                    changed = true;
                    degenerate = true; // cleared next iteration if repair works
                }
                continue;
            }
            for (s, sum) in centroids[c].iter_mut().zip(sums[c].iter()) {
                *s = sum / counts[c] as f64;
            }
        }
        if !changed {
            degenerate = counts.contains(&0);
            break;
        }
    }

    let inertia: f64 = (0..n)
        .map(|i| sq_dist(points.row(i), &centroids[labels[i]]))
        .sum();
    ClusterAssignment {
        labels,
        k,
        inertia,
        degenerate,
    }
}

/// k-means++: first centroid uniform, then proportional to squared distance
/// from the chosen set.
fn plus_plus_seeding(points: &Matrix, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let first = rand::Rng::gen_range(rng, 0..n);
    let mut centroids: Vec<Vec<f64>> = vec![points.row(first).to_vec()];
    let mut dist_sq: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), &centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let pick = if total > 0.0 {
            let mut threshold = rand::Rng::gen_range(rng, 0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dist_sq.iter().enumerate() {
                if threshold < d {
                    chosen = i;
                    break;
                }
                threshold -= d;
            }
            chosen
        } else {
            // All points coincide with existing centroids.
            rand::Rng::gen_range(rng, 0..n)
        };
        centroids.push(points.row(pick).to_vec());
        for i in 0..n {
            let d = sq_dist(points.row(i), centroids.last().unwrap());
            if d < dist_sq[i] {
                dist_sq[i] = d;
            }
        }
    }
    centroids
}

fn farthest_point(points: &Matrix, labels: &[usize], centroids: &[Vec<f64>]) -> usize {
    let mut far = 0;
    let mut far_d = -1.0;
    for i in 0..points.rows() {
        let d = sq_dist(points.row(i), &centroids[labels[i]]);
        if d > far_d {
            far_d = d;
            far = i;
        }
    }
    far
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
