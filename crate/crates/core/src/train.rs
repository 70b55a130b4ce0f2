//! AdamW with cosine schedules, gradient clipping and the training loop.

use std::f64::consts::PI;
use std::io::Write;

use jeap_tensor::{Graph, Scalar, Tensor, TensorError, Var};
use rand::Rng;

use crate::data::{ImageFrame, PoseWindow};
use crate::error::{config_err, input_err, CoreError, Result};
use crate::model::{AgentModel, AgentParams, Clip, ModelConfig, SequenceSpec};
use crate::objectives::{
    combine_losses, dino_loss, ema_update, l1_action_loss, representation_loss, total_loss, DinoConfig, DinoState,
    EmaConfig, LossWeights,
};
use crate::params::ParamSet;
use crate::rng::{stream_rng, Stream};
use crate::world::augment::{multicrop, MultiCropConfig};
use crate::world::clips::{training_batch_seed, training_clips, ClipItem};
use crate::world::WorldConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub final_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub wd_start: f64,
    pub wd_end: f64,
    pub total_iters: u64,
    pub warmup_iters: u64,
    pub clip_norm: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
}

impl OptimConfig {
    /// Large-scale schedule.
    pub fn full_scale() -> Self {
        Self {
            total_iters: 72_000,
            warmup_iters: 1_800,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_iters >= self.total_iters {
            return Err(config_err(format!(
                "warmup_iters {} must be below total_iters {}",
                self.warmup_iters, self.total_iters
            )));
        }
        let positive = [self.base_lr, self.clip_norm, self.adam_eps];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || self.batch_size == 0 {
            return Err(config_err("base_lr, clip_norm, adam_eps and batch_size must be positive"));
        }
        if !(self.final_lr >= 0.0 && self.final_lr <= self.base_lr) {
            return Err(config_err("final_lr must lie in [0, base_lr]"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(config_err("adam betas must lie in [0, 1)"));
        }
        if !(self.wd_start >= 0.0 && self.wd_end >= 0.0) {
            return Err(config_err("weight decay must be non-negative"));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        cosine_schedule(step, self.base_lr, self.final_lr, self.total_iters, self.warmup_iters).unwrap_or(self.final_lr)
    }

    /// Cosine from `wd_start` to `wd_end` over the whole run, no warmup.
    pub fn wd_at(&self, step: u64) -> f64 {
        cosine_schedule(step, self.wd_start, self.wd_end, self.total_iters, 0).unwrap_or(self.wd_end)
    }
}

impl Default for OptimConfig {
    /// Desk-scale run.
    fn default() -> Self {
        Self {
            base_lr: 6e-4,
            final_lr: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            wd_start: 0.04,
            wd_end: 0.4,
            total_iters: 3000,
            warmup_iters: 150,
            clip_norm: 1.0,
            adam_eps: 1e-8,
            batch_size: 16,
        }
    }
}

/// Linear warmup from 0 to `base`, then cosine decay to `final_value` at `total`.
pub fn cosine_schedule(step: u64, base: f64, final_value: f64, total: u64, warmup: u64) -> Result<f64> {
    if total <= warmup {
        return Err(config_err(format!("schedule total {total} must exceed warmup {warmup}")));
    }
    if step > total {
        return Err(input_err(format!("step {step} is past the end of a {total}-step schedule")));
    }
    if step < warmup {
        return Ok(base * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(final_value + (base - final_value) * (1.0 + (PI * progress).cos()) / 2.0)
}

/// Global L2 norm over every gradient tensor.
pub fn global_norm<T: Scalar>(grads: &[Tensor<T>]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let factor = T::lit(max_norm / norm);
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
    norm
}

/// First and second moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub first: ParamSet<T>,
    pub second: ParamSet<T>,
    /// Number of updates applied so far.
    pub updates: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        Self {
            first: ParamSet::zeros(params.shared_specs()),
            second: ParamSet::zeros(params.shared_specs()),
            updates: 0,
        }
    }
}

/// Decoupled weight decay on parameters flagged for decay, then a
/// bias-corrected Adam update.
pub fn adamw_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &OptimConfig,
    lr: f64,
    wd: f64,
) -> Result<()> {
    if grads.len() != params.len() || !params.same_structure(&state.first) {
        return Err(input_err("gradients, parameters and moments differ in structure"));
    }
    state.updates += 1;
    let step = state.updates as i32;
    let correct1 = 1.0 - cfg.beta1.powi(step);
    let correct2 = 1.0 - cfg.beta2.powi(step);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let (c1, c2) = (T::lit(correct1), T::lit(correct2));
    let eps = T::lit(cfg.adam_eps);
    let lr_t = T::lit(lr);
    let decay = T::lit(1.0 - lr * wd);
    let decays: Vec<bool> = params.specs().iter().map(|s| s.decay).collect();
    let first = state.first.tensors_mut();
    let second = state.second.tensors_mut();
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let grad = &grads[i];
        if grad.shape() != p.shape() {
            return Err(input_err(format!("gradient {i} has shape {:?}, parameter {:?}", grad.shape(), p.shape())));
        }
        let (m, v) = (first[i].data_mut(), second[i].data_mut());
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            let gr = grad.data()[j];
            m[j] = b1 * m[j] + one_b1 * gr;
            v[j] = b2 * v[j] + one_b2 * gr * gr;
            if decays[i] {
                *theta *= decay;
            }
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *theta -= lr_t * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub weights: LossWeights,
    pub dino: DinoConfig,
    pub ema: EmaConfig,
    pub world: WorldConfig,
    pub crops: MultiCropConfig,
    pub mask_invisible: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            optim: OptimConfig::default(),
            weights: LossWeights::default(),
            dino: DinoConfig::default(),
            ema: EmaConfig::default(),
            world: WorldConfig::default(),
            crops: MultiCropConfig::default(),
            mask_invisible: true,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.model.backbone.depth == 0 {
            return Err(config_err("depth must be at least 1"));
        }
        self.optim.validate()?;
        self.weights.validate()?;
        self.dino.validate()?;
        self.ema.validate()?;
        self.world.validate()?;
        self.crops.validate()?;
        if self.world.view.image_size != self.model.image_size {
            return Err(config_err(format!(
                "world renders {} px frames but the model expects {}",
                self.world.view.image_size, self.model.image_size
            )));
        }
        if self.world.pose_frames != self.model.pose_frames || self.model.joints != crate::world::body::JOINTS {
            return Err(config_err("pose window shape of the world and the model differ"));
        }
        if self.world.steps() < 2 {
            return Err(config_err("clips need at least two steps so a next state exists"));
        }
        Ok(())
    }
}

/// Everything that changes during training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub step: u64,
    pub predictor: AgentParams<T>,
    pub observer: AgentParams<T>,
    pub adam: AdamState<T>,
    pub dino: DinoState,
}

impl<T: Scalar> TrainState<T> {
    /// Fresh predictor from the init stream; the observer starts as an exact copy.
    pub fn new(model: &AgentModel, cfg: &TrainConfig) -> Result<Self> {
        let mut rng = stream_rng(cfg.seed, Stream::Init, 0);
        let predictor: AgentParams<T> = model.init_params(&mut rng);
        Ok(Self {
            step: 0,
            observer: predictor.clone(),
            adam: AdamState::new(&predictor),
            predictor,
            dino: DinoState::new(model.config().prototypes, cfg.dino.clone())?,
        })
    }
}

/// Inputs of one optimizer step.
#[derive(Clone, Debug)]
pub struct Batch {
    pub seed: u64,
    pub clips: Vec<ClipItem>,
    /// `clips·T` groups of `G + L` views, global first, in (clip, step) order.
    pub views: Vec<Vec<ImageFrame>>,
}

impl Batch {
    pub fn build(cfg: &TrainConfig, step: u64) -> Result<Self> {
        let clips = training_clips(&cfg.world, cfg.seed, step, cfg.optim.batch_size)?;
        Self::from_clips(cfg, clips, &mut stream_rng(cfg.seed, Stream::Augment, step), training_batch_seed(cfg.seed, step))
    }

    pub fn from_clips<R: Rng + ?Sized>(cfg: &TrainConfig, clips: Vec<ClipItem>, rng: &mut R, seed: u64) -> Result<Self> {
        if clips.is_empty() {
            return Err(input_err("empty batch"));
        }
        let steps = clips[0].steps();
        if steps < 2 || clips.iter().any(|c| c.steps() != steps) {
            return Err(input_err("batch clips need equal step counts of at least two"));
        }
        let views = clips
            .iter()
            .flat_map(|c| c.frames.iter())
            .map(|f| multicrop(f, &cfg.crops, cfg.model.image_size, rng))
            .collect();
        Ok(Self { seed, clips, views })
    }

    pub fn steps(&self) -> usize {
        self.clips[0].steps()
    }

    /// Next-state ground truth frames of steps `0..T−1`, in (clip, step) order.
    pub fn next_frames(&self) -> Vec<&ImageFrame> {
        self.clips.iter().flat_map(|c| c.frames[1..].iter()).collect()
    }

    pub fn global_views(&self, n_global: usize) -> Vec<&ImageFrame> {
        self.views.iter().flat_map(|v| v[..n_global].iter()).collect()
    }

    pub fn all_views(&self) -> Vec<&ImageFrame> {
        self.views.iter().flat_map(|v| v.iter()).collect()
    }

    pub fn windows(&self) -> Vec<&PoseWindow> {
        self.clips.iter().flat_map(|c| c.windows.iter()).collect()
    }
}

/// Observer outputs used as fixed targets.
#[derive(Clone, Debug)]
pub struct TeacherTargets<T> {
    /// `[clips·(T−1), K]`
    pub next: Tensor<T>,
    /// `[clips·T·G, K]`
    pub global: Tensor<T>,
}

impl<T: Scalar> TeacherTargets<T> {
    /// Every teacher row, for the center update.
    pub fn all_rows(&self) -> Result<Tensor<T>> {
        let k = self.next.last_dim();
        let mut data = self.next.data().to_vec();
        data.extend_from_slice(self.global.data());
        Ok(Tensor::new([self.next.rows() + self.global.rows(), k], data)?)
    }
}

/// Observer pass with constant parameters: next frames and global views share one packing.
pub fn teacher_targets<T: Scalar>(model: &AgentModel, observer: &AgentParams<T>, batch: &Batch, n_global: usize) -> Result<TeacherTargets<T>> {
    let mut g = Graph::new();
    let vars = observer.bind(&mut g, false)?;
    let next = batch.next_frames();
    let mut frames = next.clone();
    frames.extend(batch.global_views(n_global));
    let out = model.observer_forward(&mut g, &vars, &frames)?;
    let logits = g.value(out.logits);
    let k = logits.last_dim();
    let split = next.len() * k;
    Ok(TeacherTargets {
        next: Tensor::new([next.len(), k], logits.data()[..split].to_vec())?,
        global: Tensor::new([frames.len() - next.len(), k], logits.data()[split..].to_vec())?,
    })
}

/// Loss terms of one step, each already averaged.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub rep: Var,
    pub pred: Var,
    pub act: Var,
}

/// The weighted objective on the predictor: representation loss over
/// multi-crop views, next-state prediction against the observer and L1 on
/// the pose windows. Interleaved clips and views share one backbone pass.
#[allow(clippy::too_many_arguments)]
pub fn loss_graph<T: Scalar>(
    model: &AgentModel,
    g: &mut Graph<T>,
    params: &[Var],
    batch: &Batch,
    teacher: &TeacherTargets<T>,
    dino: &DinoState,
    cfg: &TrainConfig,
) -> Result<LossVars> {
    let steps = batch.steps();
    let mut seqs: Vec<SequenceSpec> = batch
        .clips
        .iter()
        .map(|c| {
            SequenceSpec::Interleaved(Clip {
                frames: &c.frames,
                windows: &c.windows,
            })
        })
        .collect();
    let views = batch.all_views();
    seqs.extend(views.iter().map(|v| SequenceSpec::Image(v)));
    let pass = model.forward_packed(g, params, &seqs)?;

    let qa = g.gather_rows(pass.hidden, &pass.action_rows)?;
    let actions = model.action_head(g, params, qa)?;
    let n_state = batch.clips.len() * steps;
    // Next-state predictions exist for every step but the last.
    let pred_rows: Vec<usize> = (0..batch.clips.len())
        .flat_map(|c| (0..steps - 1).map(move |t| c * steps + t))
        .map(|i| pass.state_rows[i])
        .collect();
    let qs = g.gather_rows(pass.hidden, &pred_rows)?;
    let state_logits = model.state_head(g, params, qs)?;
    let view_emb = g.gather_rows(pass.hidden, &pass.state_rows[n_state..])?;
    let view_logits = model.rep_head(g, params, view_emb)?;

    let rep = representation_loss(g, view_logits, &teacher.global, dino, cfg.crops.n_global, cfg.crops.n_local)?;
    let pred = dino_loss(g, state_logits, &teacher.next, dino)?;
    let act = l1_action_loss(g, actions, &batch.windows(), cfg.mask_invisible)?;
    let total = combine_losses(g, rep, Some(pred), act, &cfg.weights)?;
    Ok(LossVars { total, rep, pred, act })
}

/// One logged row of the metrics CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss_total: f64,
    pub loss_rep: f64,
    pub loss_pred: f64,
    pub loss_act: f64,
    pub lr: f64,
    pub wd: f64,
    pub ema_m: f64,
}

pub const METRICS_HEADER: &str = "step,loss_total,loss_rep,loss_pred,loss_act,lr,wd,ema_m";

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.step, self.loss_total, self.loss_rep, self.loss_pred, self.loss_act, self.lr, self.wd, self.ema_m
        )
    }
}

fn non_finite(err: CoreError, step: u64, batch_seed: u64) -> CoreError {
    match err {
        CoreError::Tensor(TensorError::NonFinite { .. }) => CoreError::NonFiniteLoss { step, batch_seed },
        other => other,
    }
}

pub struct Trainer<T: Scalar> {
    pub model: AgentModel,
    pub config: TrainConfig,
    pub state: TrainState<T>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = AgentModel::new(config.model.clone())?;
        let state = TrainState::new(&model, &config)?;
        Ok(Self { model, config, state })
    }

    /// Resumes from a saved state; the schedule continues at `state.step`.
    pub fn from_state(config: TrainConfig, state: TrainState<T>) -> Result<Self> {
        config.validate()?;
        let model = AgentModel::new(config.model.clone())?;
        model.check_params(&state.predictor)?;
        model.check_params(&state.observer)?;
        Ok(Self { model, config, state })
    }

    pub fn is_done(&self) -> bool {
        self.state.step >= self.config.optim.total_iters
    }

    /// One full optimizer step on the batch of the current step index.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let step = self.state.step;
        let batch = Batch::build(&self.config, step)?;
        self.step_on(&batch).map_err(|e| non_finite(e, step, batch.seed))
    }

    pub fn step_on(&mut self, batch: &Batch) -> Result<StepMetrics> {
        let cfg = &self.config;
        let step = self.state.step;
        let lr = cfg.optim.lr_at(step);
        let wd = cfg.optim.wd_at(step);
        let ema_m = cfg.ema.momentum_at(step, cfg.optim.total_iters);

        let teacher = teacher_targets(&self.model, &self.state.observer, batch, cfg.crops.n_global)?;
        let mut g = Graph::new();
        let vars = self.state.predictor.bind(&mut g, true)?;
        let losses = loss_graph(&self.model, &mut g, &vars, batch, &teacher, &self.state.dino, cfg)?;
        let rep = g.value(losses.rep).item()?.as_f64();
        let pred = g.value(losses.pred).item()?.as_f64();
        let act = g.value(losses.act).item()?.as_f64();
        let loss_total = total_loss(&[rep], &[Some(pred)], &[act], &cfg.weights)
            .map_err(|_| CoreError::NonFiniteLoss { step, batch_seed: batch.seed })?;
        g.backward(losses.total)?;
        let mut grads: Vec<Tensor<T>> = vars
            .iter()
            .zip(self.state.predictor.tensors())
            .map(|(&v, p)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec())))
            .collect();
        drop(g);
        if grads.iter().any(|t| !t.all_finite()) {
            return Err(CoreError::NonFiniteLoss { step, batch_seed: batch.seed });
        }
        clip_global_norm(&mut grads, cfg.optim.clip_norm);
        adamw_step(&mut self.state.predictor, &grads, &mut self.state.adam, &cfg.optim, lr, wd)?;
        ema_update(&self.state.predictor, &mut self.state.observer, ema_m)?;
        self.state.dino.update_center(&teacher.all_rows()?)?;
        self.state.step += 1;
        Ok(StepMetrics {
            step,
            loss_total,
            loss_rep: rep,
            loss_pred: pred,
            loss_act: act,
            lr,
            wd,
            ema_m,
        })
    }

    /// Runs until `total_iters`, writing the CSV header and one row per step.
    pub fn run(&mut self, metrics: &mut dyn Write, mut on_step: impl FnMut(&StepMetrics)) -> Result<()> {
        writeln!(metrics, "{METRICS_HEADER}")?;
        while !self.is_done() {
            let row = self.step()?;
            writeln!(metrics, "{}", row.csv_row())?;
            on_step(&row);
        }
        metrics.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_landmarks() {
        let (base, fin) = (6e-4, 1e-6);
        assert_eq!(cosine_schedule(0, base, fin, 100, 10).unwrap(), 0.0);
        assert_eq!(cosine_schedule(10, base, fin, 100, 10).unwrap(), base);
        let mid = cosine_schedule(55, base, fin, 100, 10).unwrap();
        assert!((mid - (base + fin) / 2.0).abs() < 1e-15);
        assert!((cosine_schedule(100, base, fin, 100, 10).unwrap() - fin).abs() < 1e-18);
        assert!(cosine_schedule(0, base, fin, 10, 10).is_err());
    }

    #[test]
    fn clipping_halves_at_twice_the_limit() {
        let mut grads = vec![Tensor::<f64>::new([2], vec![2.0f64.sqrt(), 0.0]).unwrap(), Tensor::new([1], vec![2.0f64.sqrt()]).unwrap()];
        let before = clip_global_norm(&mut grads, 1.0);
        assert!((before - 2.0).abs() < 1e-12);
        assert!((grads[0].data()[0] - 2.0f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((global_norm(&grads) - 1.0).abs() < 1e-6);
        let snapshot = grads.clone();
        clip_global_norm(&mut grads, 5.0);
        assert_eq!(grads, snapshot);
    }
}
