//! Property tests for the structural invariants.

use std::collections::BTreeSet;

use oscnn_core::autograd::Tape;
use oscnn_core::kernel_config::{coverage_set, goldbach_decompose};
use oscnn_core::stats::{holm_adjust, pairwise_wins};
use oscnn_core::tensor::{softmax_rows, Tensor};
use proptest::prelude::*;

proptest! {
    #[test]
    fn conv_same_padding_preserves_length(
        len in 1usize..40,
        kernel in 1usize..=50,
        batch in 1usize..3,
        channels in 1usize..3,
    ) {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::new(
            vec![batch, channels, len],
            (0..batch * channels * len).map(|i| (i as f64).sin()).collect(),
        ).unwrap());
        let w = tape.input(Tensor::new(
            vec![2, channels, kernel],
            (0..2 * channels * kernel).map(|i| (i as f64 * 0.37).cos()).collect(),
        ).unwrap());
        let y = tape.conv1d(x, w).unwrap();
        prop_assert_eq!(tape.value(y).shape(), &[batch, 2, len]);
        prop_assert!(tape.value(y).all_finite());
    }

    #[test]
    fn softmax_rows_stay_on_the_simplex(
        rows in 1usize..5,
        cols in 1usize..6,
        scale in 0.1f64..100.0,
    ) {
        let data: Vec<f64> = (0..rows * cols)
            .map(|i| ((i as f64 * 0.91).sin() - 0.2) * scale)
            .collect();
        let t = Tensor::new(vec![rows, cols], data).unwrap();
        let p = softmax_rows(&t).unwrap();
        for r in 0..rows {
            let row = &p.data()[r * cols..(r + 1) * cols];
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn win_counts_partition_the_datasets(
        pairs in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..40)
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (wa, wb, ties) = pairwise_wins(&a, &b).unwrap();
        prop_assert_eq!(wa + wb + ties, pairs.len());
        let swapped = pairwise_wins(&b, &a).unwrap();
        prop_assert_eq!(swapped, (wb, wa, ties));
    }

    #[test]
    fn holm_never_lowers_a_p_value(
        p_values in proptest::collection::vec(0.0f64..=1.0, 1..12)
    ) {
        let adj = holm_adjust(&p_values);
        for (raw, a) in p_values.iter().zip(&adj) {
            prop_assert!(a >= raw);
            prop_assert!(*a <= 1.0);
        }
    }

    #[test]
    fn coverage_matches_recursive_enumeration(
        lists in proptest::collection::vec(
            proptest::collection::btree_set(1usize..20, 1..5),
            1..4,
        )
    ) {
        let lists: Vec<Vec<usize>> = lists
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect();
        fn walk(lists: &[Vec<usize>], extent: usize, out: &mut BTreeSet<usize>) {
            match lists.split_first() {
                None => {
                    out.insert(1 + extent);
                }
                Some((first, rest)) => {
                    for &k in first {
                        walk(rest, extent + k - 1, out);
                    }
                }
            }
        }
        let mut expected = BTreeSet::new();
        walk(&lists, 0, &mut expected);
        prop_assert_eq!(coverage_set(&lists).unwrap(), expected);
    }

    #[test]
    fn goldbach_parts_verified_by_trial_division(e in 2u64..100_000) {
        let e = e * 2;
        let (p, q) = goldbach_decompose(e).unwrap();
        prop_assert_eq!(p + q, e);
        let by_division =
            |n: u64| n >= 2 && (2..n).take_while(|d| d * d <= n).all(|d| n % d != 0);
        prop_assert!(by_division(p));
        prop_assert!(by_division(q));
    }
}
