//! Attention weights of the query tokens, for inspection.

use jeap_tensor::{Graph, Scalar};

use crate::error::{input_err, Result};
use crate::model::{AgentModel, AgentParams, Clip};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryToken {
    Action,
    State,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    /// Full `len × len` probability matrix of the selected layer and head.
    pub matrix: Vec<f64>,
    pub len: usize,
    /// Sequence position of the inspected query token.
    pub query_index: usize,
    /// Weights of the query row over the sequence; zero past the causal prefix.
    pub row: Vec<f64>,
    /// The query row restricted to the current step's image patches.
    pub patch_weights: Vec<f64>,
    pub grid: (usize, usize),
}

impl AttentionMap {
    /// Entries the query may attend to: the prefix up to and including itself.
    pub fn admissible(&self) -> usize {
        self.query_index + 1
    }
}

pub fn attention_map<T: Scalar>(
    model: &AgentModel,
    params: &AgentParams<T>,
    clip: Clip<'_>,
    layer: usize,
    head: usize,
    step: usize,
    token: QueryToken,
) -> Result<AttentionMap> {
    let cfg = model.config();
    if layer >= cfg.backbone.depth || head >= cfg.backbone.n_heads {
        return Err(input_err(format!(
            "layer {layer} / head {head} outside a {}-layer, {}-head backbone",
            cfg.backbone.depth, cfg.backbone.n_heads
        )));
    }
    if step >= clip.frames.len() {
        return Err(input_err(format!("step {step} outside a {}-step clip", clip.frames.len())));
    }
    model.check_params(params)?;
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false)?;
    let out = model.predictor_forward(&mut g, &vars, &[clip])?;
    let (layout, probs) = g
        .attention_probs(out.pass.attention[layer])
        .ok_or_else(|| input_err("attention probabilities were not recorded"))?;
    let len = layout.segments[0].len;
    let base = head * len * len;
    let matrix: Vec<f64> = probs[base..base + len * len].iter().map(|p| p.as_f64()).collect();
    let seq = model.sequence_layout(clip.frames.len());
    let query_index = match token {
        QueryToken::Action => seq.action_query(step),
        QueryToken::State => seq.state_query(step),
    };
    let row = matrix[query_index * len..(query_index + 1) * len].to_vec();
    let start = seq.block_start(step);
    let patch_weights = row[start..start + seq.patches].to_vec();
    let side = cfg.image_size / cfg.patch_size;
    Ok(AttentionMap {
        matrix,
        len,
        query_index,
        row,
        patch_weights,
        grid: (side, side),
    })
}
