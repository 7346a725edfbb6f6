//! Entropy and divergence primitives, plus conversion of cluster counts
//! into topic distributions.
//!
//! All internal arithmetic uses natural logarithms; `0 * log 0` is taken as 0.

use crate::config::Units;
use crate::error::{Error, Result};
use crate::model::{TopicDistribution, TransitionMatrix};

/// `-sum p log p` in nats over a raw slice.
pub(crate) fn entropy_nats(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Shannon entropy of `p` in the requested units.
pub fn shannon_entropy(p: &TopicDistribution, units: Units) -> f64 {
    units.from_nats(entropy_nats(p.probs()))
}

/// Conditional KL divergence `sum_i p_c[i] sum_j A[i][j] log(A[i][j] / Q[i][j])` in nats.
///
/// Rows with zero context mass contribute nothing. Fails when some
/// `p_c[i] * A[i][j] > 0` meets `Q[i][j] = 0`.
pub fn kl_conditional(
    a: &TransitionMatrix,
    q: &TransitionMatrix,
    p_c: &TopicDistribution,
) -> Result<f64> {
    kl_conditional_raw(a, q, p_c.probs())
}

pub(crate) fn kl_conditional_raw(
    a: &TransitionMatrix,
    q: &TransitionMatrix,
    p_c: &[f64],
) -> Result<f64> {
    let n = p_c.len();
    for m in [a, q] {
        if m.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.n(),
            });
        }
    }
    let (a, q) = (a.as_array(), q.as_array());
    let mut total = 0.0;
    for (i, &w) in p_c.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            let aij = a[[i, j]];
            if aij == 0.0 {
                continue;
            }
            let qij = q[[i, j]];
            if qij == 0.0 {
                return Err(Error::AbsoluteContinuityViolation { row: i, col: j });
            }
            row += aij * (aij / qij).ln();
        }
        total += w * row;
    }
    Ok(total)
}

/// Normalizes sentence cluster-assignment counts into a topic distribution.
pub fn from_cluster_counts(counts: &[u64], n_topics: usize) -> Result<TopicDistribution> {
    if counts.len() != n_topics {
        return Err(Error::DimensionMismatch {
            expected: n_topics,
            found: counts.len(),
        });
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyText);
    }
    TopicDistribution::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> TopicDistribution {
        TopicDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert_relative_eq!(
            shannon_entropy(&TopicDistribution::uniform(2), Units::Bits),
            1.0
        );
        assert_relative_eq!(
            shannon_entropy(&TopicDistribution::uniform(8), Units::Bits),
            3.0,
            epsilon = 1e-15
        );
        assert_eq!(shannon_entropy(&dist(&[1.0, 0.0, 0.0]), Units::Bits), 0.0);
        assert_eq!(shannon_entropy(&dist(&[1.0, 0.0, 0.0]), Units::Nats), 0.0);
    }

    #[test]
    fn kl_of_identical_matrices_is_zero() {
        let m = TransitionMatrix::from_rows(vec![vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        assert_eq!(kl_conditional(&m, &m, &dist(&[0.3, 0.7])).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_scalar_sum() {
        // 0.7 ln(0.7/0.5) + 0.3 ln(0.3/0.5)
        const EXPECTED: f64 = 0.08228287850505178;
        let a = TransitionMatrix::rank_one(&[0.7, 0.3]).unwrap();
        let q = TransitionMatrix::rank_one(&[0.5, 0.5]).unwrap();
        let d = kl_conditional(&a, &q, &dist(&[0.5, 0.5])).unwrap();
        assert_relative_eq!(d, EXPECTED, max_relative = 1e-14);
    }

    #[test]
    fn zero_mass_rows_are_ignored() {
        let a = TransitionMatrix::from_rows(vec![vec![0.4, 0.6], vec![1.0, 0.0]]).unwrap();
        let q = TransitionMatrix::from_rows(vec![vec![0.4, 0.6], vec![0.0, 1.0]]).unwrap();
        assert_eq!(kl_conditional(&a, &q, &dist(&[1.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn kl_detects_absolute_continuity_violation() {
        let a = TransitionMatrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let q = TransitionMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let err = kl_conditional(&a, &q, &dist(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(
            err,
            Error::AbsoluteContinuityViolation { row: 0, col: 1 }
        ));
    }

    #[test]
    fn cluster_counts_examples() {
        assert_eq!(
            from_cluster_counts(&[2, 0, 2], 3).unwrap().probs(),
            &[0.5, 0.0, 0.5]
        );
        assert_eq!(from_cluster_counts(&[5], 1).unwrap().probs(), &[1.0]);
        assert_eq!(
            from_cluster_counts(&[1, 1, 1, 1], 4).unwrap(),
            TopicDistribution::uniform(4)
        );
        assert!(matches!(
            from_cluster_counts(&[0, 0], 2),
            Err(Error::EmptyText)
        ));
        assert!(matches!(
            from_cluster_counts(&[1, 2], 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    fn prob_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    fn stochastic(n: usize) -> impl Strategy<Value = TransitionMatrix> {
        prop::collection::vec(prob_vec(n), n)
            .prop_map(|rows| TransitionMatrix::from_rows(rows).unwrap())
    }

    proptest! {
        #[test]
        fn bits_are_rescaled_nats(p in prob_vec(6)) {
            let d = dist(&p);
            let bits = shannon_entropy(&d, Units::Bits);
            let nats = shannon_entropy(&d, Units::Nats);
            prop_assert!(bits >= 0.0);
            prop_assert!((bits - nats / std::f64::consts::LN_2).abs() <= 1e-12 * bits.max(1e-300));
        }

        #[test]
        fn kl_vanishes_only_on_agreeing_rows(
            a in stochastic(4),
            q in stochastic(4),
            mut pc in prob_vec(4),
            zero_row in 0usize..4,
        ) {
            pc[zero_row] = 0.0;
            let s: f64 = pc.iter().sum();
            prop_assume!(s > 1e-3);
            let pc = dist(&pc.iter().map(|x| x / s).collect::<Vec<_>>());
            // Q differs from A only on the zero-mass row.
            let mut rows = a.to_rows();
            rows[zero_row] = q.to_rows()[zero_row].clone();
            let q_same = TransitionMatrix::from_rows(rows).unwrap();
            prop_assert!(kl_conditional(&a, &q_same, &pc).unwrap().abs() <= 1e-12);
            let supported_differ = (0..4).any(|i| pc.probs()[i] > 0.0
                && (0..4).any(|j| (a.get(i, j) - q.get(i, j)).abs() > 1e-6));
            if supported_differ {
                if let Ok(d) = kl_conditional(&a, &q, &pc) {
                    prop_assert!(d > 1e-12);
                }
            }
        }

        #[test]
        fn kl_is_permutation_invariant(
            a in stochastic(5),
            q in stochastic(5),
            pc in prob_vec(5),
            perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let pc = dist(&pc);
            let q = TransitionMatrix::from_rows(
                q.to_rows().into_iter().map(|r| r.iter().map(|x| (x + 0.01) / 1.05).collect()).collect()
            ).unwrap();
            let d0 = kl_conditional(&a, &q, &pc).unwrap();
            let d1 = kl_conditional(&a.permuted(&perm), &q.permuted(&perm), &pc.permuted(&perm)).unwrap();
            prop_assert!((d0 - d1).abs() <= 1e-12 * d0.max(1.0));
        }

        #[test]
        fn counts_always_give_valid_distributions(counts in prop::collection::vec(0u64..1000, 1..30)) {
            prop_assume!(counts.iter().any(|&c| c > 0));
            let d = from_cluster_counts(&counts, counts.len()).unwrap();
            prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
            prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}
