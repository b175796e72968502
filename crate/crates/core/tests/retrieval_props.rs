use proptest::prelude::*;

use llmda::retrieval_math::{
    contrastive_loss, contrastive_loss_t2v, contrastive_loss_v2t, image_to_text_probabilities, loss_gradient,
    mean_average_precision, rank_k, text_to_image_probabilities, GroundTruth, SimilarityMatrix,
};
use llmda::testkit::oracle::{finite_difference_gradient, oracle_loss, oracle_map, oracle_rank_k};

fn matrix(max_n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), n))
}

fn tau() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.05), Just(0.5), Just(1.0)]
}

/// Scores plus identity-style multi-relevance. `coarse` puts scores on an
/// eight-level grid so ties are common.
fn ranking_instance(coarse: bool) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<usize>>)> {
    (1..=20usize).prop_flat_map(move |n| {
        let score = if coarse {
            (0..8u8).prop_map(|v| v as f64 / 8.0).boxed()
        } else {
            (-1.0f64..1.0).boxed()
        };
        (
            prop::collection::vec(prop::collection::vec(score, n), n),
            prop::collection::vec(0..4usize, n),
            prop::collection::vec(0..4usize, n),
        )
            .prop_map(|(rows, query_ids, gallery_ids)| {
                let relevant = query_ids
                    .iter()
                    .enumerate()
                    .map(|(q, id)| {
                        let mut r: Vec<usize> = (0..gallery_ids.len()).filter(|j| gallery_ids[*j] == *id).collect();
                        if r.is_empty() {
                            r.push(q);
                        }
                        r
                    })
                    .collect();
                (rows, relevant)
            })
    })
}

fn permute(rows: &[Vec<f64>], perm: &[usize]) -> Vec<Vec<f64>> {
    perm.iter().map(|&i| perm.iter().map(|&j| rows[i][j]).collect()).collect()
}

proptest! {
    #[test]
    fn gradient_matches_finite_differences(rows in matrix(8), tau in tau()) {
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let g = loss_gradient(&s, tau).unwrap();
        let fd = finite_difference_gradient(&rows, 1e-5, |m| oracle_loss(m, tau));
        let n = rows.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((g[i * n + j] - fd[i][j]).abs() <= 1e-6, "({i},{j}) {} vs {}", g[i * n + j], fd[i][j]);
            }
        }
    }

    #[test]
    fn softmax_axes_are_normalized(rows in matrix(8), tau in tau()) {
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let n = rows.len();
        let v2t = image_to_text_probabilities(&s, tau).unwrap();
        let t2v = text_to_image_probabilities(&s, tau).unwrap();
        for k in 0..n {
            let col: f64 = (0..n).map(|t| v2t[t * n + k]).sum();
            let row: f64 = (0..n).map(|i| t2v[k * n + i]).sum();
            prop_assert!((col - 1.0).abs() <= 1e-12);
            prop_assert!((row - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn losses_match_oracle_and_are_non_negative(rows in matrix(8), tau in tau()) {
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let total = contrastive_loss(&s, tau).unwrap();
        let oracle = oracle_loss(&rows, tau);
        prop_assert!(total >= 0.0);
        prop_assert!((total - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
        prop_assert_eq!(contrastive_loss_t2v(&s, tau).unwrap(), contrastive_loss_v2t(&s.transpose(), tau).unwrap());
    }

    #[test]
    fn permutation_leaves_everything_unchanged(
        (rows, relevant) in ranking_instance(false),
        shuffle in prop::collection::vec(any::<u32>(), 20),
        tau in tau(),
    ) {
        let n = rows.len();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by_key(|i| shuffle[*i]);
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let gt = GroundTruth::new(relevant).unwrap();
        let ps = s.permuted(&perm);
        let expected = SimilarityMatrix::from_rows(&permute(&rows, &perm)).unwrap();
        prop_assert_eq!(ps.values(), expected.values());
        let pgt = gt.permuted(&perm);

        let l = contrastive_loss(&s, tau).unwrap();
        prop_assert!((l - contrastive_loss(&ps, tau).unwrap()).abs() <= 1e-9 * l.max(1.0));
        // Index tie-breaking is not permutation invariant; skip the rare tied draw.
        let distinct = rows.iter().all(|r| {
            let mut r = r.clone();
            r.sort_by(f64::total_cmp);
            r.windows(2).all(|w| w[0] != w[1])
        });
        if distinct {
            for k in 1..=n {
                prop_assert_eq!(rank_k(&s, &gt, k).unwrap(), rank_k(&ps, &pgt, k).unwrap());
            }
            let a = mean_average_precision(&s, &gt).unwrap();
            prop_assert!((a - mean_average_precision(&ps, &pgt).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn metrics_match_oracle((rows, relevant) in ranking_instance(true), k in 1usize..=20) {
        let n = rows.len();
        let k = k.min(n);
        let s = SimilarityMatrix::from_rows(&rows).unwrap();
        let gt = GroundTruth::new(relevant.clone()).unwrap();
        prop_assert!((rank_k(&s, &gt, k).unwrap() - oracle_rank_k(&rows, &relevant, k)).abs() <= 1e-9);
        prop_assert!((mean_average_precision(&s, &gt).unwrap() - oracle_map(&rows, &relevant)).abs() <= 1e-9);
    }
}

#[test]
fn diagonal_dominance_drives_loss_to_zero() {
    let mut last = f64::INFINITY;
    for scale in [1.0, 5.0, 20.0, 80.0] {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| if i == j { scale } else { 0.0 }).collect()).collect();
        let l = contrastive_loss(&SimilarityMatrix::from_rows(&rows).unwrap(), 1.0).unwrap();
        assert!(l < last);
        last = l;
    }
    assert!(last < 1e-30);
}

#[test]
fn average_precision_by_hand() {
    let rows = vec![vec![0.9, 0.8, 0.7, 0.1], vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]];
    let relevant = vec![vec![0, 2], vec![0], vec![0], vec![0]];
    let s = SimilarityMatrix::from_rows(&rows).unwrap();
    let gt = GroundTruth::new(relevant).unwrap();
    // Query 0: relevant at ranks 1 and 3.
    let map = mean_average_precision(&s, &gt).unwrap();
    let expected = (100.0 * (1.0 + 2.0 / 3.0) / 2.0 + 3.0 * 100.0) / 4.0;
    assert!((map - expected).abs() < 1e-9);
}

#[test]
fn rank_k_counts_the_kth_position() {
    let s = SimilarityMatrix::from_rows(&[vec![0.9, 0.8, 0.7], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
    let gt = GroundTruth::new(vec![vec![2], vec![1], vec![2]]).unwrap();
    assert!((rank_k(&s, &gt, 3).unwrap() - 100.0).abs() < 1e-12);
    assert!((rank_k(&s, &gt, 2).unwrap() - 200.0 / 3.0).abs() < 1e-12);
}
