use jeap_core::eval::knn::{class_ranking, knn_classify, KnnConfig, Voting};
use jeap_core::eval::motion::{mpjpe, mpjve, MotionEvalSpec};
use jeap_core::eval::retrieval::{retrieval_eval, ExclusionRule, Features, RetrievalSpec};
use proptest::prelude::*;

fn rows(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n)
}

fn retrieval_case() -> impl Strategy<Value = (RetrievalSpec, Vec<usize>)> {
    (2usize..20, 1usize..6, 1usize..15)
        .prop_flat_map(|(gallery, dim, queries)| {
            (
                rows(gallery, dim),
                rows(queries, dim),
                prop::collection::vec(0..gallery, queries),
                prop::collection::vec(0..gallery, queries),
                Just((0..gallery).collect::<Vec<usize>>()).prop_shuffle(),
                any::<bool>(),
            )
        })
        .prop_map(|(g, q, truth, current, perm, exclude)| {
            let spec = RetrievalSpec {
                queries: Features::from_rows(&q).unwrap(),
                gallery: Features::from_rows(&g).unwrap(),
                ground_truth: truth,
                current,
                rule: if exclude { ExclusionRule::ExcludeCurrent } else { ExclusionRule::KeepCurrent },
            };
            (spec, perm)
        })
}

fn permuted(spec: &RetrievalSpec, perm: &[usize]) -> RetrievalSpec {
    // Item `i` moves to position `perm[i]`.
    let mut rows = vec![Vec::new(); perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        rows[p] = spec.gallery.row(i).to_vec();
    }
    RetrievalSpec {
        queries: spec.queries.clone(),
        gallery: Features::from_rows(&rows).unwrap(),
        ground_truth: spec.ground_truth.iter().map(|&t| perm[t]).collect(),
        current: spec.current.iter().map(|&c| perm[c]).collect(),
        rule: spec.rule,
    }
}

proptest! {
    #[test]
    fn retrieval_ignores_gallery_order((spec, perm) in retrieval_case()) {
        // Exclusion of the ground truth itself is not a meaningful query.
        prop_assume!(spec.rule == ExclusionRule::KeepCurrent || spec.ground_truth.iter().zip(&spec.current).all(|(t, c)| t != c));
        let a = retrieval_eval(&spec).unwrap();
        let b = retrieval_eval(&permuted(&spec, &perm)).unwrap();
        prop_assert!((a.top1 - b.top1).abs() < 1e-12);
        prop_assert!((a.map - b.map).abs() < 1e-12);
    }

    #[test]
    fn map_bounds_top1((spec, _) in retrieval_case()) {
        prop_assume!(spec.rule == ExclusionRule::KeepCurrent || spec.ground_truth.iter().zip(&spec.current).all(|(t, c)| t != c));
        let s = retrieval_eval(&spec).unwrap();
        prop_assert!(s.map >= s.top1 - 1e-12);
        prop_assert!(s.map <= 1.0 + 1e-12 && s.top1 >= 0.0);
    }

    #[test]
    fn knn_with_every_neighbour_votes_the_majority(
        train in rows(12, 3),
        labels in prop::collection::vec(0u32..4, 12),
        query in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let train = Features::from_rows(&train).unwrap();
        let cfg = KnnConfig { k: 12, voting: Voting::Uniform };
        let ranking = class_ranking(&query, &train, &labels, 4, &cfg);
        let mut counts = [0usize; 4];
        labels.iter().for_each(|&l| counts[l as usize] += 1);
        let best = *counts.iter().max().unwrap();
        let majority = counts.iter().position(|&c| c == best).unwrap() as u32;
        prop_assert_eq!(ranking[0], majority);
        let test = Features::from_rows(&[query]).unwrap();
        let score = knn_classify(&train, &labels, &test, &[majority], &cfg).unwrap();
        prop_assert_eq!(score.top1, 1.0);
    }

    #[test]
    fn motion_errors_are_rigidly_invariant(
        frames in 2usize..8,
        seed_points in prop::collection::vec(-1.0f64..1.0, 2 * 8 * 5 * 3),
        angle in -3.1f64..3.1,
        shift in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let joints = 5;
        let take = |offset: usize| -> Vec<Vec<[f64; 3]>> {
            (0..frames)
                .map(|f| (0..joints).map(|j| {
                    let i = offset + 3 * (f * joints + j);
                    [seed_points[i], seed_points[i + 1], seed_points[i + 2]]
                }).collect())
                .collect()
        };
        let (s, c) = angle.sin_cos();
        let move_point = |p: [f64; 3]| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1], p[2] + shift[2]];
        let moved = |seq: &Vec<Vec<[f64; 3]>>| seq.iter().map(|f| f.iter().map(|&p| move_point(p)).collect()).collect();
        let spec = MotionEvalSpec { predicted: take(0), ground_truth: take(8 * 5 * 3), visible: None, fps: 30.0 };
        let rigid = MotionEvalSpec { predicted: moved(&spec.predicted), ground_truth: moved(&spec.ground_truth), visible: None, fps: 30.0 };
        prop_assert!((mpjpe(&spec).unwrap() - mpjpe(&rigid).unwrap()).abs() < 1e-9);
        prop_assert!((mpjve(&spec).unwrap() - mpjve(&rigid).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn exact_match_scores_one() {
    let g = Features::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.8]]).unwrap();
    let spec = RetrievalSpec {
        queries: Features::from_rows(&[vec![0.6, 0.8]]).unwrap(),
        gallery: g,
        ground_truth: vec![2],
        current: vec![0],
        rule: ExclusionRule::KeepCurrent,
    };
    let s = retrieval_eval(&spec).unwrap();
    assert_eq!((s.top1, s.map), (1.0, 1.0));
}
