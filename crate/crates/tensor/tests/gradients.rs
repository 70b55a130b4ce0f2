use jeap_tensor::gradcheck::{check_builder, primitive_suite};
use jeap_tensor::{GeluApprox, Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_primitive_matches_finite_differences_f64() {
    for seed in 0..20 {
        for report in primitive_suite(seed, 1e-5).unwrap() {
            assert!(
                report.max_rel_err < 1e-5,
                "seed {seed} {}: {:.3e}",
                report.name,
                report.max_rel_err
            );
        }
    }
}

#[test]
fn f32_composite_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inputs = vec![
        Tensor::<f32>::randn([3, 4], 1.0, &mut rng),
        Tensor::<f32>::randn([4, 4], 0.5, &mut rng),
        Tensor::<f32>::ones([4]),
    ];
    let errs = check_builder(
        &inputs,
        |g: &mut Graph<f32>, v| {
            let h = g.matmul(v[0], v[1])?;
            let h = g.rmsnorm(h, v[2], 1e-6)?;
            let h = g.gelu(h, GeluApprox::Tanh)?;
            let p = g.log_softmax(h)?;
            let w = Tensor::from_fn([3, 4], |i| if i % 5 == 0 { 1.0 } else { 0.1 });
            g.dot_const(p, &w)
        },
        1e-3,
    )
    .unwrap();
    for e in errs {
        assert!(e < 1e-3, "{e:.3e}");
    }
}
