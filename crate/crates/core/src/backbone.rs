//! Causal transformer trunk: pre-norm blocks of RMSNorm, rotary multi-head
//! attention and a SiLU-gated feed-forward layer, followed by a final RMSNorm.

use std::sync::Arc;

use jeap_tensor::{AttentionLayout, Graph, MaskRule, Scalar, Segment, Var, NO_GROUP};

use crate::error::{config_err, Result};
use crate::params::ParamRegistry;

/// Which key positions a query may attend to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskKind {
    /// Token-level lower-triangular mask, also among one frame's patches.
    Causal,
    /// Causal across tokens, bidirectional among the patch tokens of one frame.
    BlockCausal,
}

/// Rotary position assignment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PositionScheme {
    /// Flattened token index within the sequence.
    Flat,
    /// Index within the current time step's block; restarts every step.
    WithinStep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneConfig {
    pub depth: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    /// Feed-forward expansion as numerator/denominator (8/3 by default).
    pub mlp_ratio: (usize, usize),
    pub ffn_granule: usize,
    pub norm_eps: f64,
    pub rope_base: f64,
    pub max_seq_len: usize,
    pub mask: MaskKind,
    pub positions: PositionScheme,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            embed_dim: 64,
            n_heads: 4,
            mlp_ratio: (8, 3),
            ffn_granule: 8,
            norm_eps: 1e-6,
            rope_base: 10000.0,
            max_seq_len: 1024,
            mask: MaskKind::Causal,
            positions: PositionScheme::Flat,
        }
    }
}

impl BackboneConfig {
    pub fn with_size(depth: usize, embed_dim: usize, n_heads: usize) -> Self {
        Self {
            depth,
            embed_dim,
            n_heads,
            ..Self::default()
        }
    }

    /// Structural checks. `depth = 0` is accepted here (an empty trunk is
    /// just the final norm); run configs require at least one layer.
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.n_heads == 0 {
            return Err(config_err("embed_dim and n_heads must be positive"));
        }
        if self.embed_dim % self.n_heads != 0 {
            return Err(config_err(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.head_dim() % 2 != 0 {
            return Err(config_err(format!("head_dim {} must be even for rotary embedding", self.head_dim())));
        }
        if !(self.norm_eps > 0.0) {
            return Err(config_err("norm_eps must be positive"));
        }
        if !(self.rope_base > 1.0) {
            return Err(config_err("rope_base must exceed 1"));
        }
        if self.mlp_ratio.0 == 0 || self.mlp_ratio.1 == 0 || self.ffn_granule == 0 {
            return Err(config_err("mlp ratio and ffn granule must be positive"));
        }
        if self.max_seq_len == 0 {
            return Err(config_err("max_seq_len must be positive"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }

    /// `round(embed_dim · ratio)`, then rounded to the nearest multiple of the
    /// granule (ties upward), never below one granule.
    pub fn ffn_hidden(&self) -> usize {
        let (num, den) = self.mlp_ratio;
        let exact = (self.embed_dim * num * 2 + den) / (2 * den);
        let g = self.ffn_granule;
        (((exact + g / 2) / g) * g).max(g)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerIndices {
    pub attn_norm: usize,
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub ffn_norm: usize,
    pub w_gate: usize,
    pub w_up: usize,
    pub w_down: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BackboneIndices {
    pub layers: Vec<LayerIndices>,
    pub final_norm: usize,
}

impl BackboneIndices {
    pub fn register(reg: &mut ParamRegistry, prefix: &str, cfg: &BackboneConfig, std: f64) -> Self {
        let d = cfg.embed_dim;
        let hidden = cfg.ffn_hidden();
        // Residual output projections are scaled down with depth.
        let out_std = std / (2.0 * cfg.depth.max(1) as f64).sqrt();
        let layers = (0..cfg.depth)
            .map(|i| {
                let p = format!("{prefix}.layers.{i}");
                LayerIndices {
                    attn_norm: reg.gain(format!("{p}.attn_norm"), d),
                    wq: reg.weight(format!("{p}.wq"), vec![d, d], std),
                    wk: reg.weight(format!("{p}.wk"), vec![d, d], std),
                    wv: reg.weight(format!("{p}.wv"), vec![d, d], std),
                    wo: reg.weight(format!("{p}.wo"), vec![d, d], out_std),
                    ffn_norm: reg.gain(format!("{p}.ffn_norm"), d),
                    w_gate: reg.weight(format!("{p}.w_gate"), vec![d, hidden], std),
                    w_up: reg.weight(format!("{p}.w_up"), vec![d, hidden], std),
                    w_down: reg.weight(format!("{p}.w_down"), vec![hidden, d], out_std),
                }
            })
            .collect();
        Self {
            layers,
            final_norm: reg.gain(format!("{prefix}.final_norm"), d),
        }
    }
}

/// Several independent sequences packed row-wise into one token matrix.
#[derive(Clone, Debug)]
pub struct Packing {
    pub positions: Vec<usize>,
    pub layout: Arc<AttentionLayout>,
}

impl Packing {
    /// One causal sequence of `len` tokens at positions `0..len`.
    pub fn single(len: usize, n_heads: usize) -> Self {
        Self {
            positions: (0..len).collect(),
            layout: Arc::new(AttentionLayout::single(len, n_heads)),
        }
    }

    /// Packs sequences described by per-token `(position, group)` lists.
    /// `group` identifies the frame a patch token belongs to (or `None`); it
    /// only matters under [`MaskKind::BlockCausal`].
    pub fn from_sequences(seqs: &[Vec<(usize, Option<u32>)>], n_heads: usize, mask: MaskKind) -> Self {
        let mut positions = Vec::new();
        let mut groups = Vec::new();
        let mut segments = Vec::with_capacity(seqs.len());
        for s in seqs {
            segments.push(Segment {
                start: positions.len(),
                len: s.len(),
            });
            for &(p, grp) in s {
                positions.push(p);
                groups.push(grp.unwrap_or(NO_GROUP));
            }
        }
        let mask = match mask {
            MaskKind::Causal => MaskRule::Causal,
            MaskKind::BlockCausal => MaskRule::BlockCausal(groups),
        };
        Self {
            positions,
            layout: Arc::new(AttentionLayout {
                n_heads,
                segments,
                mask,
            }),
        }
    }

    pub fn total_tokens(&self) -> usize {
        self.positions.len()
    }
}

pub struct BackboneOutput {
    pub hidden: Var,
    /// Attention node of each layer; probabilities via `Graph::attention_probs`.
    pub attention: Vec<Var>,
}

pub fn rmsnorm<T: Scalar>(g: &mut Graph<T>, x: Var, gamma: Var, eps: f64) -> Result<Var> {
    Ok(g.rmsnorm(x, gamma, eps)?)
}

/// `down(silu(x·gate) ⊙ (x·up))`.
pub fn gated_ffn<T: Scalar>(g: &mut Graph<T>, x: Var, w_gate: Var, w_up: Var, w_down: Var) -> Result<Var> {
    let gate = g.matmul(x, w_gate)?;
    let gate = g.silu(gate)?;
    let up = g.matmul(x, w_up)?;
    let h = g.mul(gate, up)?;
    Ok(g.matmul(h, w_down)?)
}

pub fn backbone_forward<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &BackboneConfig,
    idx: &BackboneIndices,
    params: &[Var],
    tokens: Var,
    packing: &Packing,
) -> Result<BackboneOutput> {
    let shape = g.shape(tokens).to_vec();
    if shape.len() != 2 || shape[1] != cfg.embed_dim || shape[0] != packing.total_tokens() {
        return Err(config_err(format!(
            "tokens {shape:?} do not match packing of {} tokens × {}",
            packing.total_tokens(),
            cfg.embed_dim
        )));
    }
    if let Some(seg) = packing.layout.segments.iter().find(|s| s.len > cfg.max_seq_len) {
        return Err(config_err(format!(
            "sequence of {} tokens exceeds max_seq_len {}",
            seg.len, cfg.max_seq_len
        )));
    }
    let mut x = tokens;
    let mut attention = Vec::with_capacity(cfg.depth);
    for layer in &idx.layers {
        let h = g.rmsnorm(x, params[layer.attn_norm], cfg.norm_eps)?;
        let q = g.matmul(h, params[layer.wq])?;
        let k = g.matmul(h, params[layer.wk])?;
        let v = g.matmul(h, params[layer.wv])?;
        let q = g.rope(q, &packing.positions, cfg.n_heads, cfg.rope_base)?;
        let k = g.rope(k, &packing.positions, cfg.n_heads, cfg.rope_base)?;
        let a = g.attention(q, k, v, packing.layout.clone())?;
        attention.push(a);
        let a = g.matmul(a, params[layer.wo])?;
        x = g.add(x, a)?;
        let h = g.rmsnorm(x, params[layer.ffn_norm], cfg.norm_eps)?;
        let f = gated_ffn(g, h, params[layer.w_gate], params[layer.w_up], params[layer.w_down])?;
        x = g.add(x, f)?;
    }
    let hidden = g.rmsnorm(x, params[idx.final_norm], cfg.norm_eps)?;
    Ok(BackboneOutput { hidden, attention })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ffn_hidden_rounding() {
        assert_eq!(BackboneConfig::with_size(2, 64, 4).ffn_hidden(), 168);
        assert_eq!(BackboneConfig::with_size(22, 1024, 8).ffn_hidden(), 2728);
        assert_eq!(BackboneConfig::with_size(22, 2048, 16).ffn_hidden(), 5464);
    }

    #[test]
    fn validation() {
        assert!(BackboneConfig::with_size(1, 30, 4).validate().is_err());
        assert!(BackboneConfig::with_size(1, 12, 4).validate().is_err()); // odd head_dim
        assert!(BackboneConfig::with_size(0, 16, 2).validate().is_ok());
        let mut c = BackboneConfig::default();
        c.norm_eps = 0.0;
        assert!(c.validate().is_err());
    }
}
