//! Projectors, heads, interleaved sequence assembly and the two forward paths
//! (predictor over image+action sequences, observer over single images).

use std::sync::Arc;

use jeap_tensor::{GeluApprox, Graph, Scalar, Tensor, Var};
use rand::Rng;

use crate::backbone::{backbone_forward, BackboneConfig, BackboneIndices, MaskKind, Packing, PositionScheme};
use crate::data::{ImageFrame, PoseWindow};
use crate::error::{config_err, input_err, CoreError, Result};
use crate::params::{Init, ParamRegistry, ParamSet, ParamSpec};

pub type AgentParams<T> = ParamSet<T>;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub channels: usize,
    pub image_size: usize,
    pub patch_size: usize,
    pub pose_frames: usize,
    pub joints: usize,
    pub head_hidden: usize,
    pub head_bottleneck: usize,
    pub prototypes: usize,
    pub gelu: GeluApprox,
    pub action_ln_eps: f64,
    pub init_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Laptop-sized model trained by default.
    pub fn desk() -> Self {
        Self {
            backbone: BackboneConfig::with_size(2, 64, 4),
            channels: 3,
            image_size: 32,
            patch_size: 8,
            pose_frames: 5,
            joints: 17,
            head_hidden: 128,
            head_bottleneck: 32,
            prototypes: 256,
            gelu: GeluApprox::Tanh,
            action_ln_eps: 1e-5,
            init_std: 0.02,
        }
    }

    /// Smallest useful model, used by the gradient oracle.
    pub fn tiny() -> Self {
        Self {
            backbone: BackboneConfig::with_size(1, 16, 2),
            image_size: 16,
            head_hidden: 16,
            head_bottleneck: 8,
            prototypes: 8,
            init_std: 0.2,
            ..Self::desk()
        }
    }

    fn large(depth: usize, dim: usize, heads: usize) -> Self {
        Self {
            backbone: BackboneConfig::with_size(depth, dim, heads),
            image_size: 224,
            patch_size: 16,
            head_hidden: 2048,
            head_bottleneck: 256,
            prototypes: 65536,
            ..Self::desk()
        }
    }

    /// Named presets: `tiny`, `desk`, `300m`, `1b`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "desk" => Ok(Self::desk()),
            "300m" => Ok(Self::large(22, 1024, 8)),
            "1b" => Ok(Self::large(22, 2048, 16)),
            other => Err(config_err(format!("unknown preset `{other}` (expected tiny, desk, 300m or 1b)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(config_err(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.channels == 0 || self.pose_frames == 0 || self.joints == 0 {
            return Err(config_err("channels, pose_frames and joints must be positive"));
        }
        if self.head_hidden == 0 || self.head_bottleneck == 0 || self.prototypes == 0 {
            return Err(config_err("head widths must be positive"));
        }
        if !(self.action_ln_eps > 0.0) || !(self.init_std > 0.0) {
            return Err(config_err("action_ln_eps and init_std must be positive"));
        }
        Ok(())
    }

    pub fn patches(&self) -> usize {
        (self.image_size / self.patch_size).pow(2)
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn action_dim(&self) -> usize {
        PoseWindow::CHANNELS * self.pose_frames * self.joints
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone.embed_dim
    }
}

/// Index arithmetic of one interleaved sequence `[i_t, q_a, a_t, q_s] × T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SequenceLayout {
    pub steps: usize,
    pub patches: usize,
}

impl SequenceLayout {
    pub fn block_len(&self) -> usize {
        self.patches + 3
    }

    pub fn len(&self) -> usize {
        self.steps * self.block_len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn block_start(&self, step: usize) -> usize {
        step * self.block_len()
    }

    pub fn action_query(&self, step: usize) -> usize {
        self.block_start(step) + self.patches
    }

    pub fn action_token(&self, step: usize) -> usize {
        self.block_start(step) + self.patches + 1
    }

    pub fn state_query(&self, step: usize) -> usize {
        self.block_start(step) + self.patches + 2
    }

    pub fn action_query_indices(&self) -> Vec<usize> {
        (0..self.steps).map(|t| self.action_query(t)).collect()
    }

    pub fn state_query_indices(&self) -> Vec<usize> {
        (0..self.steps).map(|t| self.state_query(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadIndices {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub w3: usize,
    pub b3: usize,
    pub prototypes: usize,
}

impl HeadIndices {
    fn register(reg: &mut ParamRegistry, prefix: &str, cfg: &ModelConfig) -> Self {
        let (d, h, b, k) = (cfg.embed_dim(), cfg.head_hidden, cfg.head_bottleneck, cfg.prototypes);
        let std = cfg.init_std;
        Self {
            w1: reg.weight(format!("{prefix}.l1.w"), vec![d, h], std),
            b1: reg.bias(format!("{prefix}.l1.b"), h),
            w2: reg.weight(format!("{prefix}.l2.w"), vec![h, h], std),
            b2: reg.bias(format!("{prefix}.l2.b"), h),
            w3: reg.weight(format!("{prefix}.l3.w"), vec![h, b], std),
            b3: reg.bias(format!("{prefix}.l3.b"), b),
            // Unit expected column norm, so logits start as cosine-like scores.
            prototypes: reg.weight(format!("{prefix}.prototypes"), vec![b, k], 1.0 / (b as f64).sqrt()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentLayout {
    pub image_w: usize,
    pub image_b: usize,
    pub action_w: usize,
    pub action_b: usize,
    pub action_ln_g: usize,
    pub action_ln_b: usize,
    pub query_action: usize,
    pub query_state: usize,
    pub backbone: BackboneIndices,
    pub rep_head: HeadIndices,
    pub state_head: HeadIndices,
    pub action_head_w: usize,
    pub action_head_b: usize,
}

/// Parameter totals grouped by component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub image_projector: usize,
    pub action_projector: usize,
    pub queries: usize,
    pub backbone: usize,
    pub rep_head_mlp: usize,
    pub rep_head_prototypes: usize,
    pub state_head_mlp: usize,
    pub state_head_prototypes: usize,
    pub action_head: usize,
}

impl ParamBreakdown {
    pub fn prototypes(&self) -> usize {
        self.rep_head_prototypes + self.state_head_prototypes
    }

    /// Everything, including both prototype layers.
    pub fn total(&self) -> usize {
        self.image_projector
            + self.action_projector
            + self.queries
            + self.backbone
            + self.rep_head_mlp
            + self.state_head_mlp
            + self.action_head
            + self.prototypes()
    }

    /// Total without the two wide prototype layers, which only exist to
    /// score the self-distillation loss.
    pub fn without_prototypes(&self) -> usize {
        self.total() - self.prototypes()
    }
}

/// One clip as predictor input: `T` frames and `T` pose windows.
#[derive(Clone, Copy, Debug)]
pub struct Clip<'a> {
    pub frames: &'a [ImageFrame],
    pub windows: &'a [PoseWindow],
}

/// A sequence to be packed into a backbone pass.
#[derive(Clone, Copy, Debug)]
pub enum SequenceSpec<'a> {
    Interleaved(Clip<'a>),
    /// `[patch tokens, q_s]` for a single frame.
    Image(&'a ImageFrame),
}

pub struct PackedPass {
    pub hidden: Var,
    pub attention: Vec<Var>,
    pub packing: Packing,
    /// `(start row, length)` of every packed sequence.
    pub spans: Vec<(usize, usize)>,
    /// Rows of action queries, interleaved sequences only, in (sequence, step) order.
    pub action_rows: Vec<usize>,
    /// Rows of state queries in sequence order (one per step, or one per image).
    pub state_rows: Vec<usize>,
}

pub struct PredictorOutput {
    /// `[clips·T, 4·F·J]`
    pub actions: Var,
    /// `[clips·T, K]`
    pub state_logits: Var,
    /// `[clips·T, d]`
    pub state_embeddings: Var,
    pub pass: PackedPass,
}

pub struct ObserverOutput {
    /// `[frames, d]`
    pub embeddings: Var,
    /// `[frames, K]` via the representation head.
    pub logits: Var,
    pub pass: PackedPass,
}

#[derive(Clone, Debug)]
pub struct AgentModel {
    config: ModelConfig,
    layout: AgentLayout,
    specs: Arc<[ParamSpec]>,
}

impl AgentModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut reg = ParamRegistry::default();
        let d = config.embed_dim();
        let std = config.init_std;
        let image_w = reg.weight("image_proj.w", vec![config.patch_dim(), d], std);
        let image_b = reg.bias("image_proj.b", d);
        let action_w = reg.weight("action_proj.w", vec![config.action_dim(), d], std);
        let action_b = reg.bias("action_proj.b", d);
        let action_ln_g = reg.gain("action_proj.ln.g", d);
        let action_ln_b = reg.bias("action_proj.ln.b", d);
        let query_action = reg.add("query.action", vec![1, d], Init::Normal(std), false);
        let query_state = reg.add("query.state", vec![1, d], Init::Normal(std), false);
        let backbone = BackboneIndices::register(&mut reg, "backbone", &config.backbone, std);
        let rep_head = HeadIndices::register(&mut reg, "rep_head", &config);
        let state_head = HeadIndices::register(&mut reg, "state_head", &config);
        let action_head_w = reg.weight("action_head.w", vec![d, config.action_dim()], std);
        let action_head_b = reg.bias("action_head.b", config.action_dim());
        let layout = AgentLayout {
            image_w,
            image_b,
            action_w,
            action_b,
            action_ln_g,
            action_ln_b,
            query_action,
            query_state,
            backbone,
            rep_head,
            state_head,
            action_head_w,
            action_head_b,
        };
        Ok(Self {
            config,
            layout,
            specs: reg.into_specs(),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    pub fn specs(&self) -> Arc<[ParamSpec]> {
        self.specs.clone()
    }

    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> AgentParams<T> {
        ParamSet::init(self.specs.clone(), rng)
    }

    pub fn check_params<T: Scalar>(&self, params: &AgentParams<T>) -> Result<()> {
        let ok = params.specs().len() == self.specs.len()
            && params
                .specs()
                .iter()
                .zip(self.specs.iter())
                .all(|(a, b)| a.name == b.name && a.shape == b.shape);
        if ok {
            Ok(())
        } else {
            Err(config_err("parameter set does not match the model configuration"))
        }
    }

    pub fn param_breakdown(&self) -> ParamBreakdown {
        let mut b = ParamBreakdown::default();
        for s in self.specs.iter() {
            let n = s.numel();
            let name = s.name.as_str();
            let slot = if name.starts_with("image_proj.") {
                &mut b.image_projector
            } else if name.starts_with("action_proj.") {
                &mut b.action_projector
            } else if name.starts_with("query.") {
                &mut b.queries
            } else if name.starts_with("backbone.") {
                &mut b.backbone
            } else if name == "rep_head.prototypes" {
                &mut b.rep_head_prototypes
            } else if name.starts_with("rep_head.") {
                &mut b.rep_head_mlp
            } else if name == "state_head.prototypes" {
                &mut b.state_head_prototypes
            } else if name.starts_with("state_head.") {
                &mut b.state_head_mlp
            } else {
                &mut b.action_head
            };
            *slot += n;
        }
        b
    }

    pub fn sequence_layout(&self, steps: usize) -> SequenceLayout {
        SequenceLayout {
            steps,
            patches: self.config.patches(),
        }
    }

    fn check_frame(&self, f: &ImageFrame) -> Result<()> {
        let c = &self.config;
        if f.channels() != c.channels || f.height() != c.image_size || f.width() != c.image_size {
            return Err(input_err(format!(
                "frame {}×{}×{} does not match model input {}×{}×{}",
                f.channels(),
                f.height(),
                f.width(),
                c.channels,
                c.image_size,
                c.image_size
            )));
        }
        Ok(())
    }

    fn check_window(&self, w: &PoseWindow) -> Result<()> {
        if w.frames() != self.config.pose_frames || w.joints() != self.config.joints {
            return Err(input_err(format!(
                "pose window 4×{}×{} does not match model 4×{}×{}",
                w.frames(),
                w.joints(),
                self.config.pose_frames,
                self.config.joints
            )));
        }
        Ok(())
    }

    /// Patch-embeds images: `[n·P, d]`.
    pub fn project_images<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], frames: &[&ImageFrame]) -> Result<Var> {
        let mut rows = Vec::with_capacity(frames.len() * self.config.patches() * self.config.patch_dim());
        for f in frames {
            self.check_frame(f)?;
            f.patchify(self.config.patch_size, &mut rows)?;
        }
        let n = frames.len() * self.config.patches();
        let x = g.constant(Tensor::from_f64([n, self.config.patch_dim()], &rows)?)?;
        let y = g.matmul(x, params[self.layout.image_w])?;
        Ok(g.add_bias(y, params[self.layout.image_b])?)
    }

    /// Full-extent convolution over each window, then LayerNorm and GELU: `[n, d]`.
    pub fn project_actions<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], windows: &[&PoseWindow]) -> Result<Var> {
        let mut rows = Vec::with_capacity(windows.len() * self.config.action_dim());
        for w in windows {
            self.check_window(w)?;
            rows.extend(w.values().iter().map(|&v| v as f64));
        }
        let x = g.constant(Tensor::from_f64([windows.len(), self.config.action_dim()], &rows)?)?;
        let y = g.matmul(x, params[self.layout.action_w])?;
        let y = g.add_bias(y, params[self.layout.action_b])?;
        let y = g.layernorm(
            y,
            params[self.layout.action_ln_g],
            params[self.layout.action_ln_b],
            self.config.action_ln_eps,
        )?;
        Ok(g.gelu(y, self.config.gelu)?)
    }

    /// `d → h → h → b → K`, GELU after the first two layers; the bottleneck
    /// is L2-normalized before the prototype layer.
    pub fn mlp_head<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], head: &HeadIndices, x: Var) -> Result<Var> {
        let h = g.matmul(x, params[head.w1])?;
        let h = g.add_bias(h, params[head.b1])?;
        let h = g.gelu(h, self.config.gelu)?;
        let h = g.matmul(h, params[head.w2])?;
        let h = g.add_bias(h, params[head.b2])?;
        let h = g.gelu(h, self.config.gelu)?;
        let h = g.matmul(h, params[head.w3])?;
        let h = g.add_bias(h, params[head.b3])?;
        let b = self.config.head_bottleneck;
        let unit_gain = g.constant(Tensor::ones([b]))?;
        let h = g.rmsnorm(h, unit_gain, BOTTLENECK_EPS)?;
        let h = g.scale(h, T::lit(1.0 / (b as f64).sqrt()))?;
        Ok(g.matmul(h, params[head.prototypes])?)
    }

    pub fn rep_head<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], x: Var) -> Result<Var> {
        self.mlp_head(g, params, &self.layout.rep_head, x)
    }

    pub fn state_head<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], x: Var) -> Result<Var> {
        self.mlp_head(g, params, &self.layout.state_head, x)
    }

    /// Single linear map to a flattened pose window.
    pub fn action_head<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, params[self.layout.action_head_w])?;
        Ok(g.add_bias(y, params[self.layout.action_head_b])?)
    }

    /// Assembles and runs every sequence in `seqs` through one backbone pass.
    pub fn forward_packed<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], seqs: &[SequenceSpec<'_>]) -> Result<PackedPass> {
        if seqs.is_empty() {
            return Err(input_err("no sequences to run"));
        }
        let p = self.config.patches();
        let mut images: Vec<&ImageFrame> = Vec::new();
        let mut windows: Vec<&PoseWindow> = Vec::new();
        for s in seqs {
            match s {
                SequenceSpec::Interleaved(clip) => {
                    if clip.frames.len() != clip.windows.len() {
                        return Err(input_err(format!(
                            "{} frames but {} pose windows",
                            clip.frames.len(),
                            clip.windows.len()
                        )));
                    }
                    if clip.frames.is_empty() {
                        return Err(input_err("clip has no steps"));
                    }
                    images.extend(clip.frames.iter());
                    windows.extend(clip.windows.iter());
                }
                SequenceSpec::Image(f) => images.push(f),
            }
        }
        let image_tokens = self.project_images(g, params, &images)?;
        let mut parts = vec![image_tokens];
        let action_base = images.len() * p;
        if !windows.is_empty() {
            parts.push(self.project_actions(g, params, &windows)?);
        }
        parts.push(params[self.layout.query_action]);
        parts.push(params[self.layout.query_state]);
        let qa_row = action_base + windows.len();
        let qs_row = qa_row + 1;
        let source = g.concat_rows(&parts)?;

        let mut order = Vec::new();
        let mut token_meta = Vec::with_capacity(seqs.len());
        let mut spans = Vec::with_capacity(seqs.len());
        let mut action_rows = Vec::new();
        let mut state_rows = Vec::new();
        let (mut next_image, mut next_window) = (0usize, 0usize);
        for s in seqs {
            let start = order.len();
            let mut meta = Vec::new();
            match s {
                SequenceSpec::Interleaved(clip) => {
                    let lay = self.sequence_layout(clip.frames.len());
                    for t in 0..lay.steps {
                        let img = next_image + t;
                        order.extend((0..p).map(|i| img * p + i));
                        order.push(qa_row);
                        order.push(action_base + next_window + t);
                        order.push(qs_row);
                        for i in 0..lay.block_len() {
                            let pos = match self.config.backbone.positions {
                                PositionScheme::Flat => lay.block_start(t) + i,
                                PositionScheme::WithinStep => i,
                            };
                            meta.push((pos, (i < p).then_some(t as u32)));
                        }
                        action_rows.push(start + lay.action_query(t));
                        state_rows.push(start + lay.state_query(t));
                    }
                    next_image += lay.steps;
                    next_window += lay.steps;
                }
                SequenceSpec::Image(_) => {
                    order.extend((0..p).map(|i| next_image * p + i));
                    order.push(qs_row);
                    meta.extend((0..p).map(|i| (i, Some(0))));
                    meta.push((p, None));
                    state_rows.push(start + p);
                    next_image += 1;
                }
            }
            spans.push((start, order.len() - start));
            token_meta.push(meta);
        }
        let tokens = g.gather_rows(source, &order)?;
        let packing = Packing::from_sequences(&token_meta, self.config.backbone.n_heads, self.config.backbone.mask);
        let out = backbone_forward(g, &self.config.backbone, &self.layout.backbone, params, tokens, &packing)?;
        Ok(PackedPass {
            hidden: out.hidden,
            attention: out.attention,
            packing,
            spans,
            action_rows,
            state_rows,
        })
    }

    /// Predicted actions at every `q_a` and next-state logits/embeddings at every `q_s`.
    pub fn predictor_forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], clips: &[Clip<'_>]) -> Result<PredictorOutput> {
        let seqs: Vec<SequenceSpec> = clips.iter().map(|c| SequenceSpec::Interleaved(*c)).collect();
        let pass = self.forward_packed(g, params, &seqs)?;
        let qa = g.gather_rows(pass.hidden, &pass.action_rows)?;
        let state_embeddings = g.gather_rows(pass.hidden, &pass.state_rows)?;
        let actions = self.action_head(g, params, qa)?;
        let state_logits = self.state_head(g, params, state_embeddings)?;
        Ok(PredictorOutput {
            actions,
            state_logits,
            state_embeddings,
            pass,
        })
    }

    /// `[i, q_s]` per frame; embedding at `q_s` and representation-head logits.
    pub fn observer_forward<T: Scalar>(&self, g: &mut Graph<T>, params: &[Var], frames: &[&ImageFrame]) -> Result<ObserverOutput> {
        let seqs: Vec<SequenceSpec> = frames.iter().map(|f| SequenceSpec::Image(f)).collect();
        let pass = self.forward_packed(g, params, &seqs)?;
        let embeddings = g.gather_rows(pass.hidden, &pass.state_rows)?;
        let logits = self.rep_head(g, params, embeddings)?;
        Ok(ObserverOutput {
            embeddings,
            logits,
            pass,
        })
    }

    /// L2-normalized `q_s` embeddings of single frames, `[n, d]`.
    pub fn represent<T: Scalar>(&self, params: &AgentParams<T>, frames: &[&ImageFrame]) -> Result<Tensor<T>> {
        self.check_params(params)?;
        let d = self.config.embed_dim();
        let mut out = Vec::with_capacity(frames.len() * d);
        for chunk in frames.chunks(REPRESENT_CHUNK) {
            let mut g = Graph::new();
            let vars = params.bind(&mut g, false)?;
            let obs = self.observer_forward(&mut g, &vars, chunk)?;
            let emb = g.value(obs.embeddings);
            for r in 0..emb.rows() {
                out.extend(normalize(emb.row(r))?);
            }
        }
        Ok(Tensor::new([frames.len(), d], out)?)
    }
}

const REPRESENT_CHUNK: usize = 128;

/// Keeps the bottleneck normalization finite at zero input.
const BOTTLENECK_EPS: f64 = 1e-12;

/// Unit-norm copy of `v`; a zero vector is a degenerate feature.
pub fn normalize<T: Scalar>(v: &[T]) -> Result<Vec<T>> {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if !(norm.as_f64() > 1e-12) || !norm.is_finite() {
        return Err(CoreError::Degenerate("zero-norm embedding cannot be normalized".into()));
    }
    Ok(v.iter().map(|&x| x / norm).collect())
}

/// Splits a `[n, 4·F·J]` prediction into windows.
pub fn windows_from_rows(values: &Tensor<f32>, frames: usize, joints: usize) -> Result<Vec<PoseWindow>> {
    (0..values.rows())
        .map(|r| PoseWindow::from_prediction(frames, joints, values.row(r).to_vec()))
        .collect()
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Causal => "causal",
            MaskKind::BlockCausal => "block_causal",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_arithmetic() {
        let one = SequenceLayout { steps: 1, patches: 16 };
        assert_eq!((one.len(), one.action_query(0), one.action_token(0), one.state_query(0)), (19, 16, 17, 18));
        assert_eq!(SequenceLayout { steps: 4, patches: 196 }.len(), 796);
    }

    #[test]
    fn presets_validate() {
        for name in ["tiny", "desk", "300m", "1b"] {
            AgentModel::new(ModelConfig::preset(name).unwrap()).unwrap();
        }
        assert!(ModelConfig::preset("7b").is_err());
        assert_eq!(ModelConfig::preset("300m").unwrap().patches(), 196);
        assert_eq!(ModelConfig::desk().patches(), 16);
    }

    #[test]
    fn full_scale_head_dims() {
        let m = AgentModel::new(ModelConfig::preset("300m").unwrap()).unwrap();
        let shapes: Vec<_> = m
            .specs()
            .iter()
            .filter(|s| s.name.starts_with("state_head.") && s.name.ends_with('w') || s.name == "state_head.prototypes")
            .map(|s| s.shape[1])
            .collect();
        assert_eq!(shapes, vec![2048, 2048, 256, 65536]);
    }
}
