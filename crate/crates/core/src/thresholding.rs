//! Index selection `L_k`, `S_k` and the hard-thresholding operator `H_k`.
//!
//! Ties are broken toward the smaller index. Two entries tie only when their
//! keys compare exactly equal; there is no epsilon.

use std::cmp::Ordering;

use crate::error::{ensure, Result};
use crate::linalg::IndexSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdResult {
    pub indices: IndexSet,
    pub vector: Vec<f64>,
}

/// Selects the `k` positions that come first under `cmp`, a total order on
/// `(key, index)` pairs. Runs a linear-time partial selection and then
/// sorts the chosen positions.
fn select_by<F>(len: usize, k: usize, mut cmp: F) -> IndexSet
where
    F: FnMut(usize, usize) -> Ordering,
{
    let mut idx: Vec<usize> = (0..len).collect();
    if k < len {
        idx.select_nth_unstable_by(k - 1, |&a, &b| cmp(a, b));
        idx.truncate(k);
    }
    IndexSet::from_unsorted(idx)
}

fn check_k(len: usize, k: usize) -> Result<()> {
    ensure!(k >= 1 && k <= len, "k = {k} must lie in 1..={len}");
    Ok(())
}

/// `L_k(z)`: indices of the `k` largest magnitudes.
pub fn top_k_indices(z: &[f64], k: usize) -> Result<IndexSet> {
    check_k(z.len(), k)?;
    Ok(select_by(z.len(), k, |a, b| {
        z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b))
    }))
}

/// `S_k(z)`: indices of the `k` smallest signed entries.
pub fn bottom_k_indices(z: &[f64], k: usize) -> Result<IndexSet> {
    check_k(z.len(), k)?;
    Ok(select_by(z.len(), k, |a, b| z[a].total_cmp(&z[b]).then(a.cmp(&b))))
}

/// `H_k(z)`: keeps the `k` largest magnitudes and zeroes the rest.
pub fn hard_threshold(z: &[f64], k: usize) -> Result<ThresholdResult> {
    let indices = top_k_indices(z, k)?;
    let mut vector = vec![0.0; z.len()];
    for i in indices.iter() {
        vector[i] = z[i];
    }
    Ok(ThresholdResult { indices, vector })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::NtkError;
    use crate::linalg::dist2;
    use crate::rng::NtkRng;
    use proptest::prelude::*;

    fn sort_oracle_top(z: &[f64], k: usize) -> Vec<usize> {
        let mut keyed: Vec<(f64, usize)> = z.iter().enumerate().map(|(i, v)| (-v.abs(), i)).collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut out: Vec<usize> = keyed[..k].iter().map(|p| p.1).collect();
        out.sort_unstable();
        out
    }

    fn sort_oracle_bottom(z: &[f64], k: usize) -> Vec<usize> {
        let mut keyed: Vec<(f64, usize)> = z.iter().copied().zip(0..).collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut out: Vec<usize> = keyed[..k].iter().map(|p| p.1).collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn top_k_examples() {
        assert_eq!(top_k_indices(&[3.0, -4.0, 1.0], 2).unwrap().as_slice(), &[0, 1]);
        assert_eq!(top_k_indices(&[2.0, -2.0, 1.0], 1).unwrap().as_slice(), &[0]);
    }

    #[test]
    fn bottom_k_examples() {
        assert_eq!(bottom_k_indices(&[0.3, -1.2, 0.0, 5.0], 2).unwrap().as_slice(), &[1, 2]);
        assert_eq!(bottom_k_indices(&[1.0, 1.0], 1).unwrap().as_slice(), &[0]);
    }

    #[test]
    fn k_out_of_range() {
        assert!(matches!(top_k_indices(&[1.0, 2.0], 0), Err(NtkError::Contract(_))));
        assert!(matches!(bottom_k_indices(&[1.0, 2.0], 3), Err(NtkError::Contract(_))));
        assert!(hard_threshold(&[], 1).is_err());
    }

    #[test]
    fn hard_threshold_examples() {
        let r = hard_threshold(&[3.0, -1.0, 0.0, 2.0], 2).unwrap();
        assert_eq!(r.vector, vec![3.0, 0.0, 0.0, 2.0]);
        assert_eq!(r.indices.as_slice(), &[0, 3]);
        let z = [1.0, -5.0, 0.5];
        assert_eq!(hard_threshold(&z, 3).unwrap().vector, z.to_vec());
    }

    #[test]
    fn hard_threshold_is_best_k_term() {
        let mut rng = NtkRng::new(3);
        let z = rng.normal_vec(30);
        let k = 6;
        let best = dist2(&z, &hard_threshold(&z, k).unwrap().vector);
        for _ in 0..1000 {
            let support = rng.subset(30, k);
            let mut h = vec![0.0; 30];
            for &i in &support {
                h[i] = z[i] + 0.3 * rng.normal();
            }
            assert!(best <= dist2(&z, &h));
        }
    }

    #[test]
    fn tied_magnitudes_with_duplicates() {
        let z = [1.0, -1.0, 1.0, 0.5, -1.0];
        assert_eq!(top_k_indices(&z, 3).unwrap().as_slice(), &[0, 1, 2]);
        assert_eq!(bottom_k_indices(&z, 2).unwrap().as_slice(), &[1, 4]);
    }

    fn small_vec() -> impl Strategy<Value = Vec<f64>> {
        // A coarse value grid makes exact ties common.
        prop::collection::vec((-4i32..=4).prop_map(|v| v as f64 * 0.5), 1..25)
    }

    proptest! {
        #[test]
        fn top_k_matches_sort_oracle(z in small_vec(), kk in 0usize..100) {
            let k = 1 + kk % z.len();
            prop_assert_eq!(top_k_indices(&z, k).unwrap().into_vec(), sort_oracle_top(&z, k));
        }

        #[test]
        fn bottom_k_matches_sort_oracle(z in small_vec(), kk in 0usize..100) {
            let k = 1 + kk % z.len();
            prop_assert_eq!(bottom_k_indices(&z, k).unwrap().into_vec(), sort_oracle_bottom(&z, k));
        }

        #[test]
        fn top_k_is_bottom_k_of_negated_magnitudes(z in small_vec(), kk in 0usize..100) {
            let k = 1 + kk % z.len();
            let neg: Vec<f64> = z.iter().map(|v| -v.abs()).collect();
            let top = top_k_indices(&z, k).unwrap();
            prop_assert_eq!(top.len(), k);
            prop_assert_eq!(top, bottom_k_indices(&neg, k).unwrap());
        }

        #[test]
        fn hard_threshold_idempotent(z in prop::collection::vec(-10.0f64..10.0, 1..40), kk in 0usize..100) {
            let k = 1 + kk % z.len();
            let once = hard_threshold(&z, k).unwrap().vector;
            let twice = hard_threshold(&once, k).unwrap().vector;
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn hard_threshold_permutation_equivariant(seed in any::<u64>(), len in 2usize..30, kk in 0usize..100) {
            let mut rng = NtkRng::new(seed);
            let z = rng.normal_vec(len);
            let k = 1 + kk % len;
            let mut perm: Vec<usize> = (0..len).collect();
            for i in (1..len).rev() {
                perm.swap(i, rng.below(i + 1));
            }
            let permuted: Vec<f64> = perm.iter().map(|&p| z[p]).collect();
            let h = hard_threshold(&z, k).unwrap().vector;
            let h_perm = hard_threshold(&permuted, k).unwrap().vector;
            let expected: Vec<f64> = perm.iter().map(|&p| h[p]).collect();
            prop_assert_eq!(h_perm, expected);
        }
    }
}
