//! Forward and backward kernels for the non-trivial primitives. Everything
//! here works on flat row-major slices; shape checking happens in `graph`.

use crate::scalar::Scalar;

/// Group id marking a token that shares no bidirectional block.
pub const NO_GROUP: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GeluApprox {
    Tanh,
    Erf,
}

#[inline]
pub fn gelu<T: Scalar>(x: T, approx: GeluApprox) -> T {
    let half = T::lit(0.5);
    match approx {
        GeluApprox::Tanh => {
            let c = T::lit(0.797_884_560_802_865_4); // sqrt(2/pi)
            let u = c * (x + T::lit(0.044715) * x * x * x);
            half * x * (T::one() + u.tanh())
        }
        GeluApprox::Erf => half * x * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf()),
    }
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T, approx: GeluApprox) -> T {
    let half = T::lit(0.5);
    match approx {
        GeluApprox::Tanh => {
            let c = T::lit(0.797_884_560_802_865_4);
            let a = T::lit(0.044715);
            let u = c * (x + a * x * x * x);
            let t = u.tanh();
            let du = c * (T::one() + T::lit(3.0) * a * x * x);
            half * (T::one() + t) + half * x * (T::one() - t * t) * du
        }
        GeluApprox::Erf => {
            let cdf = half * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf());
            let pdf = (-(x * x) * half).exp() * T::lit(0.398_942_280_401_432_7);
            cdf + x * pdf
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn silu<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
pub fn silu_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// Softmax along an axis described as `[outer, len, inner]`.
pub fn softmax_axis<T: Scalar>(x: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut max = T::neg_infinity();
            for l in 0..len {
                max = max.max(x[base + l * inner]);
            }
            let mut sum = T::zero();
            for l in 0..len {
                let e = (x[base + l * inner] - max).exp();
                y[base + l * inner] = e;
                sum += e;
            }
            for l in 0..len {
                y[base + l * inner] /= sum;
            }
        }
    }
    y
}

pub fn softmax_axis_backward<T: Scalar>(y: &[T], dy: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut dot = T::zero();
            for l in 0..len {
                dot += y[base + l * inner] * dy[base + l * inner];
            }
            for l in 0..len {
                let k = base + l * inner;
                dx[k] = y[k] * (dy[k] - dot);
            }
        }
    }
    dx
}

pub fn log_softmax_rows<T: Scalar>(x: &[T], cols: usize) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for (xr, yr) in x.chunks(cols).zip(y.chunks_mut(cols)) {
        let max = xr.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = xr.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        for (o, &v) in yr.iter_mut().zip(xr) {
            *o = v - lse;
        }
    }
    y
}

pub fn log_softmax_rows_backward<T: Scalar>(y: &[T], dy: &[T], cols: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); y.len()];
    for ((yr, dyr), dxr) in y.chunks(cols).zip(dy.chunks(cols)).zip(dx.chunks_mut(cols)) {
        let total: T = dyr.iter().copied().sum();
        for ((o, &yv), &g) in dxr.iter_mut().zip(yr).zip(dyr) {
            *o = g - yv.exp() * total;
        }
    }
    dx
}

/// Returns `(y, inv_rms)` with `y = x * inv_rms * gamma` per row.
pub fn rmsnorm_rows<T: Scalar>(x: &[T], gamma: &[T], eps: T) -> (Vec<T>, Vec<T>) {
    let d = gamma.len();
    let mut y = vec![T::zero(); x.len()];
    let mut inv = Vec::with_capacity(x.len() / d.max(1));
    for (xr, yr) in x.chunks(d).zip(y.chunks_mut(d)) {
        let ms = xr.iter().map(|&v| v * v).sum::<T>() / T::lit(d as f64);
        let r = T::one() / (ms + eps).sqrt();
        for ((o, &v), &g) in yr.iter_mut().zip(xr).zip(gamma) {
            *o = v * r * g;
        }
        inv.push(r);
    }
    (y, inv)
}

/// Returns `(dx, dgamma)`.
pub fn rmsnorm_rows_backward<T: Scalar>(x: &[T], gamma: &[T], inv: &[T], dy: &[T]) -> (Vec<T>, Vec<T>) {
    let d = gamma.len();
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); d];
    let dn = T::lit(d as f64);
    for (((xr, dyr), dxr), &r) in x.chunks(d).zip(dy.chunks(d)).zip(dx.chunks_mut(d)).zip(inv) {
        let mut dot = T::zero();
        for j in 0..d {
            dgamma[j] += dyr[j] * xr[j] * r;
            dot += dyr[j] * gamma[j] * xr[j];
        }
        let coef = r * r * r * dot / dn;
        for j in 0..d {
            dxr[j] = dyr[j] * gamma[j] * r - xr[j] * coef;
        }
    }
    (dx, dgamma)
}

/// Returns `(y, normalized, inv_std)`.
pub fn layernorm_rows<T: Scalar>(x: &[T], gamma: &[T], beta: &[T], eps: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let d = gamma.len();
    let dn = T::lit(d as f64);
    let mut y = vec![T::zero(); x.len()];
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv = Vec::with_capacity(x.len() / d.max(1));
    for ((xr, yr), hr) in x.chunks(d).zip(y.chunks_mut(d)).zip(xhat.chunks_mut(d)) {
        let mean = xr.iter().copied().sum::<T>() / dn;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let r = T::one() / (var + eps).sqrt();
        for j in 0..d {
            hr[j] = (xr[j] - mean) * r;
            yr[j] = hr[j] * gamma[j] + beta[j];
        }
        inv.push(r);
    }
    (y, xhat, inv)
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layernorm_rows_backward<T: Scalar>(
    xhat: &[T],
    gamma: &[T],
    inv: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let d = gamma.len();
    let dn = T::lit(d as f64);
    let mut dx = vec![T::zero(); xhat.len()];
    let mut dgamma = vec![T::zero(); d];
    let mut dbeta = vec![T::zero(); d];
    for (((hr, dyr), dxr), &r) in xhat.chunks(d).zip(dy.chunks(d)).zip(dx.chunks_mut(d)).zip(inv) {
        let mut sum_g = T::zero();
        let mut sum_gh = T::zero();
        for j in 0..d {
            dgamma[j] += dyr[j] * hr[j];
            dbeta[j] += dyr[j];
            let g = dyr[j] * gamma[j];
            sum_g += g;
            sum_gh += g * hr[j];
        }
        for j in 0..d {
            let g = dyr[j] * gamma[j];
            dxr[j] = r / dn * (dn * g - sum_g - hr[j] * sum_gh);
        }
    }
    (dx, dgamma, dbeta)
}

/// Rotates consecutive (even, odd) coordinate pairs of every head by
/// `sign * position * base^(-2j/head_dim)`.
pub fn rope<T: Scalar>(x: &[T], positions: &[usize], n_heads: usize, head_dim: usize, base: f64, sign: f64) -> Vec<T> {
    let width = n_heads * head_dim;
    let half = head_dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|j| base.powf(-2.0 * j as f64 / head_dim as f64))
        .collect();
    let mut y = vec![T::zero(); x.len()];
    for (row, (xr, yr)) in x.chunks(width).zip(y.chunks_mut(width)).enumerate() {
        let p = positions[row] as f64;
        for (j, &f) in freqs.iter().enumerate() {
            let angle = sign * p * f;
            let (s, c) = (T::lit(angle.sin()), T::lit(angle.cos()));
            for h in 0..n_heads {
                let i = h * head_dim + 2 * j;
                let (a, b) = (xr[i], xr[i + 1]);
                yr[i] = a * c - b * s;
                yr[i + 1] = a * s + b * c;
            }
        }
    }
    y
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskRule {
    /// Token `i` sees tokens `j <= i` of its own segment.
    Causal,
    /// As `Causal`, plus bidirectional visibility between tokens that share a
    /// group id (one id per token, [`NO_GROUP`] for none).
    BlockCausal(Vec<u32>),
}

/// Packing of several independent sequences into one token matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayout {
    pub n_heads: usize,
    pub segments: Vec<Segment>,
    pub mask: MaskRule,
}

impl AttentionLayout {
    pub fn single(len: usize, n_heads: usize) -> Self {
        Self {
            n_heads,
            segments: vec![Segment { start: 0, len }],
            mask: MaskRule::Causal,
        }
    }

    pub fn total_tokens(&self) -> usize {
        self.segments.iter().map(|s| s.start + s.len).max().unwrap_or(0)
    }

    /// Whether local position `i` may attend to local position `j` within `seg`.
    #[inline]
    pub fn admits(&self, seg: &Segment, i: usize, j: usize) -> bool {
        if j <= i {
            return true;
        }
        match &self.mask {
            MaskRule::Causal => false,
            MaskRule::BlockCausal(groups) => {
                let gi = groups[seg.start + i];
                gi != NO_GROUP && gi == groups[seg.start + j]
            }
        }
    }

    /// Offset of the `(segment, head)` probability block in the flat buffer.
    pub fn prob_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.segments.len() + 1);
        let mut acc = 0;
        for s in &self.segments {
            offsets.push(acc);
            acc += s.len * s.len * self.n_heads;
        }
        offsets.push(acc);
        offsets
    }
}

/// Multi-head attention over packed segments. `q`, `k`, `v` are
/// `[tokens, n_heads * head_dim]`. Returns the output and the full
/// probability tensor (`len × len` per segment and head, zeros where masked).
pub fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    width: usize,
    layout: &AttentionLayout,
) -> (Vec<T>, Vec<T>) {
    let h = layout.n_heads;
    let hd = width / h;
    let scale = T::one() / T::lit(hd as f64).sqrt();
    let offsets = layout.prob_offsets();
    let mut out = vec![T::zero(); q.len()];
    let mut probs = vec![T::zero(); *offsets.last().unwrap()];
    let mut scores = Vec::new();
    for (si, seg) in layout.segments.iter().enumerate() {
        let l = seg.len;
        for head in 0..h {
            let pbase = offsets[si] + head * l * l;
            for i in 0..l {
                let qi = &q[(seg.start + i) * width + head * hd..][..hd];
                scores.clear();
                let mut max = T::neg_infinity();
                for j in 0..l {
                    if layout.admits(seg, i, j) {
                        let kj = &k[(seg.start + j) * width + head * hd..][..hd];
                        let s = dot(qi, kj) * scale;
                        max = max.max(s);
                        scores.push((j, s));
                    }
                }
                let mut sum = T::zero();
                for (_, s) in scores.iter_mut() {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let orow = &mut out[(seg.start + i) * width + head * hd..][..hd];
                for &(j, e) in scores.iter() {
                    let p = e / sum;
                    probs[pbase + i * l + j] = p;
                    let vj = &v[(seg.start + j) * width + head * hd..][..hd];
                    for (o, &vv) in orow.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
        }
    }
    (out, probs)
}

/// Returns `(dq, dk, dv)`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    dout: &[T],
    width: usize,
    layout: &AttentionLayout,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let h = layout.n_heads;
    let hd = width / h;
    let scale = T::one() / T::lit(hd as f64).sqrt();
    let offsets = layout.prob_offsets();
    let mut dq = vec![T::zero(); q.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let mut dp = Vec::new();
    for (si, seg) in layout.segments.iter().enumerate() {
        let l = seg.len;
        for head in 0..h {
            let pbase = offsets[si] + head * l * l;
            for i in 0..l {
                let gi = (seg.start + i) * width + head * hd;
                let doi = &dout[gi..gi + hd];
                let prow = &probs[pbase + i * l..pbase + (i + 1) * l];
                dp.clear();
                let mut weighted = T::zero();
                for j in 0..l {
                    if layout.admits(seg, i, j) {
                        let gj = (seg.start + j) * width + head * hd;
                        let d = dot(doi, &v[gj..gj + hd]);
                        weighted += prow[j] * d;
                        dp.push((j, d));
                        for (o, &g) in dv[gj..gj + hd].iter_mut().zip(doi) {
                            *o += prow[j] * g;
                        }
                    }
                }
                for &(j, d) in dp.iter() {
                    let ds = prow[j] * (d - weighted) * scale;
                    let gj = (seg.start + j) * width + head * hd;
                    for t in 0..hd {
                        dq[gi + t] += ds * k[gj + t];
                        dk[gj + t] += ds * q[gi + t];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_and_stable() {
        let y = softmax_axis(&[0.0f64; 4], 1, 4, 1);
        assert!(y.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let y = softmax_axis(&[1000.0f32, 0.0], 1, 2, 1);
        assert!((y[0] - 1.0).abs() < 1e-6 && y[1] >= 0.0 && y[1] < 1e-6);
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gelu_reference_points() {
        for approx in [GeluApprox::Tanh, GeluApprox::Erf] {
            assert_eq!(gelu(0.0f64, approx), 0.0);
            assert!((gelu(10.0f64, approx) - 10.0).abs() < 1e-6);
            assert!((gelu_grad(0.0f64, approx) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rope_quarter_turn() {
        // head_dim 2 has one pair with frequency base^0 = 1: position p turns it by p radians.
        let y = rope(&[1.0f64, 0.0], &[1], 1, 2, 10000.0, 1.0);
        assert!((y[0] - 1f64.cos()).abs() < 1e-15 && (y[1] - 1f64.sin()).abs() < 1e-15);
        let back = rope(&y, &[1], 1, 2, 10000.0, -1.0);
        assert!((back[0] - 1.0).abs() < 1e-15 && back[1].abs() < 1e-15);
    }

    #[test]
    fn single_token_attention_returns_value() {
        let q = [0.3f64, -0.2];
        let k = [1.5f64, 0.1];
        let v = [4.0f64, -7.0];
        let (out, probs) = attention_forward(&q, &k, &v, 2, &AttentionLayout::single(1, 1));
        assert_eq!(out, v.to_vec());
        assert_eq!(probs, vec![1.0]);
    }

    #[test]
    fn block_mask_admits_group_peers() {
        let layout = AttentionLayout {
            n_heads: 1,
            segments: vec![Segment { start: 0, len: 4 }],
            mask: MaskRule::BlockCausal(vec![0, 0, NO_GROUP, NO_GROUP]),
        };
        let seg = layout.segments[0];
        assert!(layout.admits(&seg, 0, 1));
        assert!(!layout.admits(&seg, 2, 3));
        assert!(layout.admits(&seg, 3, 0));
    }
}
