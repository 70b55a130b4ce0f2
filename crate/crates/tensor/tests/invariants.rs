use std::sync::Arc;

use jeap_tensor::kernels::{rope, softmax_axis};
use jeap_tensor::{AttentionLayout, Graph, MaskRule, Segment, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in prop::collection::vec(-30.0f64..30.0, 12), split in 0usize..3) {
        let (outer, len, inner) = [(1, 12, 1), (3, 4, 1), (2, 3, 2)][split];
        let y = softmax_axis(&vals, outer, len, inner);
        for o in 0..outer {
            for i in 0..inner {
                let s: f64 = (0..len).map(|l| y[o * len * inner + l * inner + i]).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
            }
        }
        prop_assert!(y.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn matmul_is_associative(seed in 0u64..1000, m in 1usize..6, k in 1usize..6, n in 1usize..6, p in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f64>::randn([m, k], 1.0, &mut rng);
        let b = Tensor::<f64>::randn([k, n], 1.0, &mut rng);
        let c = Tensor::<f64>::randn([n, p], 1.0, &mut rng);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-10);
    }

    #[test]
    fn rope_preserves_pair_norms(seed in 0u64..1000, pos in 0usize..5000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f64>::randn([1, 8], 1.0, &mut rng);
        let y = rope(x.data(), &[pos], 2, 4, 10000.0, 1.0);
        for pair in 0..4 {
            let a = x.data()[2 * pair].hypot(x.data()[2 * pair + 1]);
            let b = y[2 * pair].hypot(y[2 * pair + 1]);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_attention_ignores_future_tokens(seed in 0u64..1000, cut in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = Arc::new(AttentionLayout {
            n_heads: 2,
            segments: vec![Segment { start: 0, len: 6 }],
            mask: MaskRule::Causal,
        });
        let q = Tensor::<f64>::randn([6, 4], 1.0, &mut rng);
        let k = Tensor::<f64>::randn([6, 4], 1.0, &mut rng);
        let v = Tensor::<f64>::randn([6, 4], 1.0, &mut rng);
        let run = |k: &Tensor<f64>, v: &Tensor<f64>| {
            let mut g = Graph::new();
            let (qv, kv, vv) = (g.constant(q.clone()).unwrap(), g.constant(k.clone()).unwrap(), g.constant(v.clone()).unwrap());
            let o = g.attention(qv, kv, vv, layout.clone()).unwrap();
            g.value(o).clone()
        };
        let base = run(&k, &v);
        let mut k2 = k.clone();
        let mut v2 = v.clone();
        for r in cut + 1..6 {
            for c in 0..4 {
                k2.data_mut()[r * 4 + c] += 3.0;
                v2.data_mut()[r * 4 + c] -= 2.0;
            }
        }
        let moved = run(&k2, &v2);
        for r in 0..=cut {
            prop_assert_eq!(base.row(r), moved.row(r));
        }
    }

    #[test]
    fn backward_is_linear_in_seed_scale(seed in 0u64..1000, s in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::<f64>::randn([3, 3], 1.0, &mut rng);
        let grad = |scale: f64| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone()).unwrap();
            let y = g.silu(xv).unwrap();
            let y = g.sum(y).unwrap();
            let y = g.scale(y, scale).unwrap();
            g.backward(y).unwrap();
            g.grad(xv).unwrap().clone()
        };
        let g1 = grad(1.0);
        let gs = grad(s);
        for (a, b) in g1.data().iter().zip(gs.data()) {
            prop_assert!((a * s - b).abs() < 1e-12);
        }
    }
}
