//! Clustering evaluation: accuracy under optimal label matching
//! (Kuhn-Munkres), normalized mutual information, and purity.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct ContingencyTable {
    /// counts[i][j] = |class i ∩ cluster j|.
    pub counts: Vec<Vec<usize>>,
    pub row_totals: Vec<usize>,
    pub col_totals: Vec<usize>,
    pub n: usize,
}

impl ContingencyTable {
    pub fn build(y_true: &[usize], y_pred: &[usize]) -> Result<ContingencyTable> {
        if y_true.len() != y_pred.len() {
            return Err(Error::contract(format!(
                "label length mismatch: {} vs {}",
                y_true.len(),
                y_pred.len()
            )));
        }
        if y_true.is_empty() {
            return Err(Error::contract("empty labelings"));
        }
        let (true_ids, k_true) = compact(y_true);
        let (pred_ids, k_pred) = compact(y_pred);
        let mut counts = vec![vec![0usize; k_pred]; k_true];
        for (&t, &p) in true_ids.iter().zip(pred_ids.iter()) {
            counts[t][p] += 1;
        }
        let row_totals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
        let col_totals: Vec<usize> = (0..k_pred).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            row_totals,
            col_totals,
            n: y_true.len(),
        })
    }

    /// True when the two partitions are identical up to relabeling: each
    /// class meets exactly one cluster and vice versa.
    fn is_relabeling(&self) -> bool {
        self.counts
            .iter()
            .all(|row| row.iter().filter(|&&c| c > 0).count() == 1)
            && (0..self.col_totals.len())
                .all(|j| self.counts.iter().filter(|row| row[j] > 0).count() == 1)
    }
}

/// Map arbitrary label values to dense ids in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(labels.len());
    for &l in labels {
        let id = match seen.iter().position(|&s| s == l) {
            Some(id) => id,
            None => {
                seen.push(l);
                seen.len() - 1
            }
        };
        out.push(id);
    }
    (out, seen.len())
}

/// Fraction of samples correctly labeled under the best bijection between
/// predicted clusters and true classes, found by the Hungarian algorithm on
/// the (padded, max-to-min converted) contingency table.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::build(y_true, y_pred)?;
    let k = table.counts.len().max(table.col_totals.len());
    let max_count = table
        .counts
        .iter()
        .flat_map(|r| r.iter())
        .copied()
        .max()
        .unwrap_or(0) as f64;
    // Square cost matrix: padding rows/columns carry zero counts.
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    let count = table
                        .counts
                        .get(i)
                        .and_then(|row| row.get(j))
                        .copied()
                        .unwrap_or(0) as f64;
                    max_count - count
                })
                .collect()
        })
        .collect();
    let assignment = hungarian_min_cost(&cost);
    let matched: usize = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            table
                .counts
                .get(i)
                .and_then(|row| row.get(j))
                .copied()
                .unwrap_or(0)
        })
        .sum();
    Ok(matched as f64 / table.n as f64)
}

/// I(Y;L) / sqrt(H(Y)·H(L)) with natural logarithms. Identical partitions
/// give exactly 1.0; when either entropy is 0 and the partitions differ,
/// the value is 0 by convention (the formula is 0/0 there).
pub fn nmi(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::build(y_true, y_pred)?;
    if table.is_relabeling() {
        return Ok(1.0);
    }
    let n = table.n as f64;
    let h_true = entropy(&table.row_totals, n);
    let h_pred = entropy(&table.col_totals, n);
    if h_true == 0.0 || h_pred == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let p_ij = c as f64 / n;
            let p_i = table.row_totals[i] as f64 / n;
            let p_j = table.col_totals[j] as f64 / n;
            mi += p_ij * (p_ij / (p_i * p_j)).ln();
        }
    }
    Ok((mi / (h_true * h_pred).sqrt()).clamp(0.0, 1.0))
}

fn entropy(totals: &[usize], n: f64) -> f64 {
    totals
        .iter()
        .filter(|&&t| t > 0)
        .map(|&t| {
            let p = t as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// (Σ over clusters of the dominant class count) / n.
pub fn purity(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let table = ContingencyTable::build(y_true, y_pred)?;
    let dominant: usize = (0..table.col_totals.len())
        .map(|j| table.counts.iter().map(|row| row[j]).max().unwrap_or(0))
        .sum();
    Ok(dominant as f64 / table.n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
}

pub fn evaluate(y_true: &[usize], y_pred: &[usize]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        acc: accuracy(y_true, y_pred)?,
        nmi: nmi(y_true, y_pred)?,
        purity: purity(y_true, y_pred)?,
    })
}

/// Minimum-cost perfect assignment on a square cost matrix (Kuhn-Munkres
/// with potentials, O(n³)); returns the column matched to each row.
fn hungarian_min_cost(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // matched_row[j] = row assigned to column j
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let current = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if current < min_slack[j] {
                    min_slack[j] = current;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Exhaustive maximum matched fraction over all bijections; only viable
    /// for small k.
    fn brute_force_accuracy(y_true: &[usize], y_pred: &[usize]) -> f64 {
        let table = ContingencyTable::build(y_true, y_pred).unwrap();
        let k = table.counts.len().max(table.col_totals.len());
        let mut perm: Vec<usize> = (0..k).collect();
        let mut best = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let matched: usize = p
                .iter()
                .enumerate()
                .map(|(i, &j)| {
                    table
                        .counts
                        .get(i)
                        .and_then(|row| row.get(j))
                        .copied()
                        .unwrap_or(0)
                })
                .sum();
            if matched > best {
                best = matched;
            }
        });
        best as f64 / table.n as f64
    }

    fn permute(items: &mut Vec<usize>, start: usize, visit: &mut impl FnMut(&[usize])) {
        if start == items.len() {
            visit(items);
            return;
        }
        for i in start..items.len() {
            items.swap(start, i);
            permute(items, start + 1, visit);
            items.swap(start, i);
        }
    }

    fn random_labels(rng: &mut crate::numerics::rng::Rng, n: usize, k: usize) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..k)).collect()
    }

    #[test]
    fn identical_labelings_score_one() {
        let y = vec![0, 1, 2, 1, 0, 2];
        assert_eq!(accuracy(&y, &y).unwrap(), 1.0);
        assert_eq!(nmi(&y, &y).unwrap(), 1.0);
        assert_eq!(purity(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn relabeled_partition_scores_one() {
        let y_true = vec![0, 0, 1, 1, 2, 2];
        let y_pred = vec![2, 2, 0, 0, 1, 1];
        assert_eq!(accuracy(&y_true, &y_pred).unwrap(), 1.0);
        assert_eq!(nmi(&y_true, &y_pred).unwrap(), 1.0);
        assert_eq!(purity(&y_true, &y_pred).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_matches_brute_force_on_small_instance() {
        let y_true = vec![0, 0, 0, 1, 1, 1, 2, 2, 2];
        let y_pred = vec![1, 1, 2, 2, 2, 0, 0, 0, 1];
        let got = accuracy(&y_true, &y_pred).unwrap();
        let want = brute_force_accuracy(&y_true, &y_pred);
        assert_eq!(got, want);
    }

    #[test]
    fn accuracy_handles_unequal_cluster_counts() {
        // 2 true classes, 4 predicted clusters (and the reverse).
        let y_true = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let y_pred = vec![0, 0, 1, 1, 2, 2, 3, 3];
        let got = accuracy(&y_true, &y_pred).unwrap();
        assert_eq!(got, brute_force_accuracy(&y_true, &y_pred));
        let got_rev = accuracy(&y_pred, &y_true).unwrap();
        assert_eq!(got_rev, brute_force_accuracy(&y_pred, &y_true));
    }

    #[test]
    fn nmi_constant_prediction_is_zero() {
        let y_true = vec![0, 0, 1, 1];
        let y_pred = vec![3, 3, 3, 3];
        assert_eq!(nmi(&y_true, &y_pred).unwrap(), 0.0);
    }

    #[test]
    fn nmi_single_cluster_both_sides_is_one() {
        let y = vec![5, 5, 5];
        assert_eq!(nmi(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn nmi_matches_direct_formula_on_2x2() {
        // Contingency [[3,1],[1,3]].
        let y_true = vec![0, 0, 0, 0, 1, 1, 1, 1];
        let y_pred = vec![0, 0, 0, 1, 0, 1, 1, 1];
        let got = nmi(&y_true, &y_pred).unwrap();

        let n = 8.0f64;
        let p = |c: f64| c / n;
        let mi = p(3.0) * (p(3.0) / (0.5 * 0.5)).ln() * 2.0
            + p(1.0) * (p(1.0) / (0.5 * 0.5)).ln() * 2.0;
        let h = -(0.5f64.ln()); // entropy of a balanced 2-class partition
        let want = mi / (h * h).sqrt();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn purity_even_split_is_half() {
        // Each predicted cluster contains two classes evenly.
        let y_true = vec![0, 1, 0, 1];
        let y_pred = vec![0, 0, 1, 1];
        assert_eq!(purity(&y_true, &y_pred).unwrap(), 0.5);
    }

    #[test]
    fn purity_matches_counting_oracle() {
        let mut rng = seeded(3);
        let y_true = random_labels(&mut rng, 20, 4);
        let y_pred = random_labels(&mut rng, 20, 3);
        let got = purity(&y_true, &y_pred).unwrap();

        let mut total = 0usize;
        for cluster in 0..3 {
            let mut best = 0usize;
            for class in 0..4 {
                let count = y_true
                    .iter()
                    .zip(y_pred.iter())
                    .filter(|(&t, &p)| t == class && p == cluster)
                    .count();
                best = best.max(count);
            }
            total += best;
        }
        assert_eq!(got, total as f64 / 20.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(purity(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_equals_brute_force(seed in 0u64..300) {
            let mut rng = seeded(seed);
            let k = rng.gen_range(2..=5usize);
            let n = rng.gen_range(4..=30usize);
            let y_true = random_labels(&mut rng, n, k);
            let y_pred = random_labels(&mut rng, n, k);
            let got = accuracy(&y_true, &y_pred).unwrap();
            let want = brute_force_accuracy(&y_true, &y_pred);
            prop_assert_eq!(got, want);
        }

        #[test]
        fn metrics_invariant_under_relabeling(seed in 0u64..200) {
            let mut rng = seeded(seed);
            let k = rng.gen_range(2..=4usize);
            let n = rng.gen_range(4..=24usize);
            let y_true = random_labels(&mut rng, n, k);
            let y_pred = random_labels(&mut rng, n, k);
            // Relabel predictions through a fixed bijection.
            let relabeled: Vec<usize> = y_pred.iter().map(|&l| (l + 1) % k + 100).collect();
            prop_assert_eq!(accuracy(&y_true, &y_pred).unwrap(), accuracy(&y_true, &relabeled).unwrap());
            prop_assert!((nmi(&y_true, &y_pred).unwrap() - nmi(&y_true, &relabeled).unwrap()).abs() < 1e-12);
            prop_assert_eq!(purity(&y_true, &y_pred).unwrap(), purity(&y_true, &relabeled).unwrap());
        }

        #[test]
        fn nmi_is_symmetric(seed in 0u64..200) {
            let mut rng = seeded(seed);
            let n = rng.gen_range(4..=24usize);
            let a = random_labels(&mut rng, n, 3);
            let b = random_labels(&mut rng, n, 4);
            prop_assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn purity_dominates_accuracy_for_equal_k(seed in 0u64..200) {
            // The Hungarian matching restricts each cluster to a distinct
            // class, so per-cluster maxima can only do better.
            let mut rng = seeded(seed);
            let k = rng.gen_range(2..=4usize);
            let n = rng.gen_range(2 * k..=30usize);
            // Force both labelings to use exactly k distinct values.
            let mut y_true: Vec<usize> = (0..n).map(|i| i % k).collect();
            let mut y_pred: Vec<usize> = (0..n).map(|i| (i / 2) % k).collect();
            for i in 0..n {
                if rng.gen_range(0..4) == 0 {
                    y_true[i] = rng.gen_range(0..k);
                    y_pred[i] = rng.gen_range(0..k);
                }
            }
            let acc = accuracy(&y_true, &y_pred).unwrap();
            let pur = purity(&y_true, &y_pred).unwrap();
            prop_assert!(pur >= acc - 1e-12, "purity {pur} < accuracy {acc}");
        }
    }
}
