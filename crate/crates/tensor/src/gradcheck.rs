//! Numerical gradient oracles.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand::rngs::StdRng;

use crate::error::{Result, TensorError};
use crate::graph::{Graph, Var};
use crate::kernels::{AttentionLayout, GeluApprox, MaskRule, Segment, NO_GROUP};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function.
pub fn finite_diff_grad<T: Scalar>(
    mut f: impl FnMut(&Tensor<T>) -> Result<T>,
    x: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    let two_eps = T::lit(2.0 * eps);
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + T::lit(eps);
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - T::lit(eps);
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(TensorError::FiniteDiff(i));
        }
        grad.push((plus - minus) / two_eps);
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, with the denominator floored at 1e-12.
pub fn relative_error<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> f64 {
    let diff: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.as_f64() - y.as_f64()).powi(2))
        .sum::<f64>()
        .sqrt();
    let na = a.sq_norm().as_f64().sqrt();
    let nb = b.sq_norm().as_f64().sqrt();
    diff / na.max(nb).max(1e-12)
}

/// Compares tape gradients against finite differences for every input of a
/// scalar-valued graph builder. Returns one relative error per input.
pub fn check_builder<T: Scalar>(
    inputs: &[Tensor<T>],
    build: impl Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
    eps: f64,
) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let mut errors = Vec::with_capacity(inputs.len());
    for (slot, &var) in vars.iter().enumerate() {
        let analytic = g
            .grad(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[slot].shape().to_vec()));
        let numeric = finite_diff_grad(
            |probe| {
                let mut h = Graph::new();
                let vs = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| h.constant(if j == slot { probe.clone() } else { t.clone() }))
                    .collect::<Result<Vec<_>>>()?;
                let o = build(&mut h, &vs)?;
                h.value(o).item()
            },
            &inputs[slot],
            eps,
        )?;
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}

/// Result of one named gradient check.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub max_rel_err: f64,
}

type Builder = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

fn randn(rng: &mut StdRng, shape: &[usize]) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, rng)
}

/// Projects a tensor node onto a fixed random direction so every output
/// element contributes to the checked scalar.
fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> Result<Var> {
    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e37_79b9);
    let w = Tensor::randn(g.shape(v).to_vec(), 1.0, &mut rng);
    g.dot_const(v, &w)
}

/// Checks every differentiable primitive on random `f64` inputs derived
/// from `seed`, with central differences at step `eps`.
pub fn primitive_suite(seed: u64, eps: f64) -> Result<Vec<CheckReport>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut cases: Vec<(&str, Vec<Tensor<f64>>, Builder)> = Vec::new();
    let s = seed;

    cases.push((
        "matmul",
        vec![randn(&mut rng, &[3, 4]), randn(&mut rng, &[4, 5])],
        Box::new(move |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y, s)
        }),
    ));
    cases.push((
        "add_sub_mul",
        vec![randn(&mut rng, &[2, 3]), randn(&mut rng, &[2, 3])],
        Box::new(move |g, v| {
            let a = g.add(v[0], v[1])?;
            let b = g.sub(v[0], v[1])?;
            let c = g.mul(a, b)?;
            let d = g.scale(c, 0.7)?;
            project(g, d, s)
        }),
    ));
    cases.push((
        "add_bias",
        vec![randn(&mut rng, &[4, 3]), randn(&mut rng, &[3])],
        Box::new(move |g, v| {
            let y = g.add_bias(v[0], v[1])?;
            project(g, y, s)
        }),
    ));
    cases.push((
        "sum_mean",
        vec![randn(&mut rng, &[3, 3])],
        Box::new(|g, v| {
            let sq = g.mul(v[0], v[0])?;
            let a = g.sum(sq)?;
            let b = g.mean(v[0])?;
            g.add(a, b)
        }),
    ));
    for (name, approx) in [("gelu_tanh", GeluApprox::Tanh), ("gelu_erf", GeluApprox::Erf)] {
        cases.push((
            name,
            vec![randn(&mut rng, &[2, 5])],
            Box::new(move |g, v| {
                let y = g.gelu(v[0], approx)?;
                project(g, y, s)
            }),
        ));
    }
    cases.push((
        "silu",
        vec![randn(&mut rng, &[2, 5])],
        Box::new(move |g, v| {
            let y = g.silu(v[0])?;
            project(g, y, s)
        }),
    ));
    // Keep inputs away from the kink at zero.
    let mut abs_in = randn(&mut rng, &[2, 4]);
    for x in abs_in.data_mut() {
        *x += 0.2 * x.signum();
    }
    cases.push((
        "abs",
        vec![abs_in],
        Box::new(move |g, v| {
            let y = g.abs(v[0])?;
            project(g, y, s)
        }),
    ));
    for axis in 0..3 {
        cases.push((
            ["softmax_axis0", "softmax_axis1", "softmax_axis2"][axis],
            vec![randn(&mut rng, &[2, 3, 4])],
            Box::new(move |g, v| {
                let y = g.softmax(v[0], axis)?;
                project(g, y, s)
            }),
        ));
    }
    cases.push((
        "log_softmax",
        vec![randn(&mut rng, &[3, 6])],
        Box::new(move |g, v| {
            let y = g.log_softmax(v[0])?;
            project(g, y, s)
        }),
    ));
    cases.push((
        "rmsnorm",
        vec![randn(&mut rng, &[3, 6]), randn(&mut rng, &[6])],
        Box::new(move |g, v| {
            let y = g.rmsnorm(v[0], v[1], 1e-6)?;
            project(g, y, s)
        }),
    ));
    cases.push((
        "layernorm",
        vec![randn(&mut rng, &[3, 6]), randn(&mut rng, &[6]), randn(&mut rng, &[6])],
        Box::new(move |g, v| {
            let y = g.layernorm(v[0], v[1], v[2], 1e-5)?;
            project(g, y, s)
        }),
    ));
    cases.push((
        "rope",
        vec![randn(&mut rng, &[4, 8])],
        Box::new(move |g, v| {
            let y = g.rope(v[0], &[0, 3, 7, 11], 2, 10000.0)?;
            project(g, y, s)
        }),
    ));
    let causal = Arc::new(AttentionLayout {
        n_heads: 2,
        segments: vec![Segment { start: 0, len: 3 }, Segment { start: 3, len: 4 }],
        mask: MaskRule::Causal,
    });
    cases.push((
        "attention_causal",
        vec![randn(&mut rng, &[7, 4]), randn(&mut rng, &[7, 4]), randn(&mut rng, &[7, 4])],
        Box::new(move |g, v| {
            let y = g.attention(v[0], v[1], v[2], causal.clone())?;
            project(g, y, s)
        }),
    ));
    let block = Arc::new(AttentionLayout {
        n_heads: 2,
        segments: vec![Segment { start: 0, len: 5 }],
        mask: MaskRule::BlockCausal(vec![0, 0, NO_GROUP, 1, 1]),
    });
    cases.push((
        "attention_block_causal",
        vec![randn(&mut rng, &[5, 4]), randn(&mut rng, &[5, 4]), randn(&mut rng, &[5, 4])],
        Box::new(move |g, v| {
            let y = g.attention(v[0], v[1], v[2], block.clone())?;
            project(g, y, s)
        }),
    ));
    let picks: Vec<usize> = (0..6).map(|_| rng.gen_range(0..4)).collect();
    cases.push((
        "gather_concat_reshape",
        vec![randn(&mut rng, &[4, 3]), randn(&mut rng, &[2, 3])],
        Box::new(move |g, v| {
            let r = g.gather_rows(v[0], &picks)?;
            let c = g.concat_rows(&[r, v[1]])?;
            let y = g.reshape(c, [4, 6])?;
            let z = g.gelu(y, GeluApprox::Tanh)?;
            project(g, z, s)
        }),
    ));

    cases
        .into_iter()
        .map(|(name, inputs, build)| {
            let errs = check_builder(&inputs, build, eps)?;
            Ok(CheckReport {
                name: name.to_string(),
                max_rel_err: errs.into_iter().fold(0.0, f64::max),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_diff_of_cubic() {
        let x = Tensor::<f64>::from_f64([2], &[1.5, -0.5]).unwrap();
        let g = finite_diff_grad(|t| Ok(t.data().iter().map(|v| v * v * v).sum()), &x, 1e-5).unwrap();
        assert!((g.data()[0] - 3.0 * 2.25).abs() < 1e-8);
        assert!((g.data()[1] - 0.75).abs() < 1e-8);
    }

    #[test]
    fn relative_error_zero_for_identical() {
        let a = Tensor::<f64>::from_f64([3], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(relative_error(&a, &a), 0.0);
    }
}
