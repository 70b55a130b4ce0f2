//! Losses (self-distillation over prototypes, L1 on pose windows), their
//! weighted combination, teacher centering and the EMA observer update.

use jeap_tensor::kernels::softmax_axis;
use jeap_tensor::{Graph, Scalar, Tensor, Var};

use crate::data::PoseWindow;
use crate::error::{config_err, input_err, CoreError, Result};
use crate::params::ParamSet;

#[derive(Clone, Debug, PartialEq)]
pub struct DinoConfig {
    pub tau_student: f64,
    pub tau_teacher: f64,
    pub center_momentum: f64,
}

impl Default for DinoConfig {
    fn default() -> Self {
        Self {
            tau_student: 0.1,
            tau_teacher: 0.04,
            center_momentum: 0.9,
        }
    }
}

impl DinoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_teacher > 0.0 && self.tau_student > self.tau_teacher) {
            return Err(config_err("temperatures must satisfy tau_student > tau_teacher > 0"));
        }
        if !(0.0..=1.0).contains(&self.center_momentum) {
            return Err(config_err("center_momentum must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Temperatures plus the running teacher center.
#[derive(Clone, Debug, PartialEq)]
pub struct DinoState {
    pub center: Vec<f64>,
    pub config: DinoConfig,
}

impl DinoState {
    pub fn new(prototypes: usize, config: DinoConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            center: vec![0.0; prototypes],
            config,
        })
    }

    /// `softmax((teacher − center) / τ_t)` per row; constant w.r.t. any graph.
    pub fn teacher_probs<T: Scalar>(&self, teacher_logits: &Tensor<T>) -> Result<Tensor<T>> {
        let k = teacher_logits.last_dim();
        if k != self.center.len() {
            return Err(input_err(format!("teacher has {k} prototypes, center has {}", self.center.len())));
        }
        let tau = self.config.tau_teacher;
        let shifted: Vec<T> = teacher_logits
            .data()
            .chunks(k)
            .flat_map(|row| row.iter().zip(&self.center).map(|(&t, &c)| T::lit((t.as_f64() - c) / tau)))
            .collect();
        let probs = softmax_axis(&shifted, teacher_logits.rows(), k, 1);
        Ok(Tensor::new(teacher_logits.shape().to_vec(), probs)?)
    }

    /// `center ← m·center + (1 − m)·mean_rows(teacher)`.
    pub fn update_center<T: Scalar>(&mut self, teacher_batch: &Tensor<T>) -> Result<()> {
        let k = self.center.len();
        if teacher_batch.last_dim() != k || teacher_batch.rows() == 0 {
            return Err(input_err("teacher batch must be a non-empty [B, K] matrix"));
        }
        let b = teacher_batch.rows();
        let mut mean = vec![0.0f64; k];
        for row in teacher_batch.data().chunks(k) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        let m = self.config.center_momentum;
        for (c, s) in self.center.iter_mut().zip(mean) {
            *c = m * *c + (1.0 - m) * (s / b as f64);
        }
        Ok(())
    }
}

/// `Σ_rows Σ_k −targets[r,k] · log_softmax(student[r] / τ_s)[k]`.
/// Row weights are folded into `targets`.
pub fn cross_entropy_to_targets<T: Scalar>(g: &mut Graph<T>, student_logits: Var, targets: &Tensor<T>, tau_student: f64) -> Result<Var> {
    if g.shape(student_logits) != targets.shape() {
        return Err(input_err(format!(
            "student {:?} and targets {:?} differ",
            g.shape(student_logits),
            targets.shape()
        )));
    }
    let scaled = g.scale(student_logits, T::lit(1.0 / tau_student))?;
    let logp = g.log_softmax(scaled)?;
    let neg = targets.map(|v| -v);
    Ok(g.dot_const(logp, &neg)?)
}

/// Mean over rows of `H(softmax((teacher − c)/τ_t), softmax(student/τ_s))`.
pub fn dino_loss<T: Scalar>(g: &mut Graph<T>, student_logits: Var, teacher_logits: &Tensor<T>, state: &DinoState) -> Result<Var> {
    let rows = teacher_logits.rows();
    if rows == 0 {
        return Err(input_err("empty teacher batch"));
    }
    let inv = T::lit(1.0 / rows as f64);
    let targets = state.teacher_probs(teacher_logits)?.map(|p| p * inv);
    cross_entropy_to_targets(g, student_logits, &targets, state.config.tau_student)
}

/// Plain `f64` evaluation of the self-distillation loss for one row.
pub fn dino_loss_value(student: &[f64], teacher: &[f64], center: &[f64], tau_student: f64, tau_teacher: f64) -> f64 {
    let t: Vec<f64> = teacher.iter().zip(center).map(|(t, c)| (t - c) / tau_teacher).collect();
    let pt = softmax_axis(&t, 1, t.len(), 1);
    let s: Vec<f64> = student.iter().map(|v| v / tau_student).collect();
    let lp = jeap_tensor::kernels::log_softmax_rows(&s, s.len());
    -pt.iter().zip(lp).map(|(p, l)| p * l).sum::<f64>()
}

/// `(student view, teacher view)` pairs for multi-crop distillation: views
/// `0..n_global` are global crops (the only ones the teacher sees), the rest
/// local. A global view is never paired with itself.
pub fn multicrop_pairs(n_global: usize, n_local: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for s in 0..n_global + n_local {
        for t in 0..n_global {
            if s != t {
                pairs.push((s, t));
            }
        }
    }
    pairs
}

/// Representation loss averaged over items and multi-crop pairs.
///
/// `student_logits`: `[items·(G+L), K]`, views of one item contiguous, global first.
/// `teacher_logits`: `[items·G, K]`, same item order.
pub fn representation_loss<T: Scalar>(
    g: &mut Graph<T>,
    student_logits: Var,
    teacher_logits: &Tensor<T>,
    state: &DinoState,
    n_global: usize,
    n_local: usize,
) -> Result<Var> {
    let views = n_global + n_local;
    let pairs = multicrop_pairs(n_global, n_local);
    if pairs.is_empty() {
        return Err(config_err("multi-crop needs at least one valid (student, teacher) pair"));
    }
    let k = teacher_logits.last_dim();
    let items = teacher_logits.rows() / n_global.max(1);
    if teacher_logits.rows() != items * n_global || g.shape(student_logits) != [items * views, k] {
        return Err(input_err("student/teacher view counts do not match the crop configuration"));
    }
    let probs = state.teacher_probs(teacher_logits)?;
    let coef = 1.0 / (items * pairs.len()) as f64;
    let mut targets = vec![T::zero(); items * views * k];
    for item in 0..items {
        for &(s, t) in &pairs {
            let src = probs.row(item * n_global + t);
            let dst = &mut targets[(item * views + s) * k..][..k];
            for (o, &p) in dst.iter_mut().zip(src) {
                *o += p * T::lit(coef);
            }
        }
    }
    let targets = Tensor::new([items * views, k], targets)?;
    cross_entropy_to_targets(g, student_logits, &targets, state.config.tau_student)
}

/// Per-entry inclusion weights for the L1 action loss of one window.
pub fn action_loss_mask(gt: &PoseWindow, mask_invisible: bool) -> Result<Vec<f64>> {
    let (f, j) = (gt.frames(), gt.joints());
    let mut mask = vec![1.0; PoseWindow::CHANNELS * f * j];
    if mask_invisible {
        if gt.visibility().iter().all(|&v| v == 0.0) {
            return Err(CoreError::Degenerate("every joint is invisible in the target window".into()));
        }
        for fr in 0..f {
            for jt in 0..j {
                if !gt.visible(fr, jt) {
                    for c in 0..3 {
                        mask[(c * f + fr) * j + jt] = 0.0;
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Mean over windows of the (masked) mean absolute error; `pred` is `[n, 4·F·J]`.
pub fn l1_action_loss<T: Scalar>(g: &mut Graph<T>, pred: Var, gt: &[&PoseWindow], mask_invisible: bool) -> Result<Var> {
    let Some(first) = gt.first() else {
        return Err(input_err("no target windows"));
    };
    let width = PoseWindow::CHANNELS * first.frames() * first.joints();
    if g.shape(pred) != [gt.len(), width] {
        return Err(input_err(format!("prediction {:?} vs {} windows of {width}", g.shape(pred), gt.len())));
    }
    let mut targets = Vec::with_capacity(gt.len() * width);
    let mut weights = Vec::with_capacity(gt.len() * width);
    for w in gt {
        if w.values().len() != width {
            return Err(input_err("target windows differ in shape"));
        }
        let mask = action_loss_mask(w, mask_invisible)?;
        let count: f64 = mask.iter().sum();
        targets.extend(w.values().iter().map(|&v| v as f64));
        weights.extend(mask.iter().map(|m| m / count / gt.len() as f64));
    }
    let target = g.constant(Tensor::from_f64([gt.len(), width], &targets)?)?;
    let diff = g.sub(pred, target)?;
    let abs = g.abs(diff)?;
    Ok(g.dot_const(abs, &Tensor::from_f64([gt.len(), width], &weights)?)?)
}

/// Plain `f64` L1 loss for one window.
pub fn l1_action_loss_value(pred: &[f64], gt: &PoseWindow, mask_invisible: bool) -> Result<f64> {
    let mask = action_loss_mask(gt, mask_invisible)?;
    if pred.len() != mask.len() {
        return Err(input_err("prediction and target differ in shape"));
    }
    let count: f64 = mask.iter().sum();
    Ok(pred
        .iter()
        .zip(gt.values())
        .zip(&mask)
        .map(|((&p, &t), &m)| m * (p - t as f64).abs())
        .sum::<f64>()
        / count)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossWeights {
    pub rep: f64,
    pub pred: f64,
    pub act: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rep: 2.0,
            pred: 1.0,
            act: 3.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.rep, self.pred, self.act].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(config_err("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Weighted combination of per-step components. Steps whose next frame is
/// unknown carry `None` in `pred` and are left out of that term's mean.
pub fn total_loss(rep: &[f64], pred: &[Option<f64>], act: &[f64], w: &LossWeights) -> Result<f64> {
    let all = rep.iter().chain(act).chain(pred.iter().flatten());
    if all.clone().any(|v| !v.is_finite()) {
        return Err(input_err("loss components must be finite"));
    }
    let pred: Vec<f64> = pred.iter().flatten().copied().collect();
    Ok(w.rep * mean(rep) + w.pred * mean(&pred) + w.act * mean(act))
}

/// Graph version of [`total_loss`] on already averaged components.
pub fn combine_losses<T: Scalar>(g: &mut Graph<T>, rep: Var, pred: Option<Var>, act: Var, w: &LossWeights) -> Result<Var> {
    let r = g.scale(rep, T::lit(w.rep))?;
    let a = g.scale(act, T::lit(w.act))?;
    let mut total = g.add(r, a)?;
    if let Some(p) = pred {
        let p = g.scale(p, T::lit(w.pred))?;
        total = g.add(total, p)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EmaSchedule {
    Fixed,
    /// Cosine ramp from the base momentum to 1 over training.
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmaConfig {
    pub momentum: f64,
    pub schedule: EmaSchedule,
}

impl Default for EmaConfig {
    fn default() -> Self {
        Self {
            momentum: 0.996,
            schedule: EmaSchedule::Fixed,
        }
    }
}

impl EmaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(config_err("ema momentum must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn momentum_at(&self, step: u64, total: u64) -> f64 {
        match self.schedule {
            EmaSchedule::Fixed => self.momentum,
            EmaSchedule::Cosine => {
                let frac = if total == 0 { 1.0 } else { (step as f64 / total as f64).min(1.0) };
                1.0 - (1.0 - self.momentum) * ((std::f64::consts::PI * frac).cos() + 1.0) / 2.0
            }
        }
    }
}

/// `θ_obs ← m·θ_obs + (1 − m)·θ_pred` for every parameter.
pub fn ema_update<T: Scalar>(pred: &ParamSet<T>, obs: &mut ParamSet<T>, momentum: f64) -> Result<()> {
    if !pred.same_structure(obs) {
        return Err(config_err("predictor and observer parameter sets differ in structure"));
    }
    if !(0.0..=1.0).contains(&momentum) {
        return Err(config_err("ema momentum must lie in [0, 1]"));
    }
    let m = T::lit(momentum);
    let rest = T::lit(1.0 - momentum);
    for (o, p) in obs.tensors_mut().iter_mut().zip(pred.tensors()) {
        for (ov, &pv) in o.data_mut().iter_mut().zip(p.data()) {
            *ov = m * *ov + rest * pv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_count_for_two_global_two_local() {
        assert_eq!(multicrop_pairs(2, 2).len(), 6);
        assert_eq!(multicrop_pairs(2, 6).len(), 14);
        assert!(!multicrop_pairs(2, 2).contains(&(0, 0)));
    }

    #[test]
    fn uniform_distributions_give_log_k() {
        let l = dino_loss_value(&[0.0; 4], &[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0], 0.1, 0.04);
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn total_loss_example() {
        let w = LossWeights::default();
        assert_eq!(total_loss(&[1.0], &[Some(2.0)], &[3.0], &w).unwrap(), 13.0);
        assert_eq!(total_loss(&[0.0], &[Some(0.0)], &[0.0], &w).unwrap(), 0.0);
    }

    #[test]
    fn ema_first_step() {
        use crate::params::ParamRegistry;
        let mut reg = ParamRegistry::default();
        reg.bias("b", 3);
        let specs = reg.into_specs();
        let mut obs = ParamSet::<f64>::zeros(specs.clone());
        let mut pred = ParamSet::<f64>::zeros(specs);
        pred.tensors_mut()[0] = Tensor::ones([3]);
        ema_update(&pred, &mut obs, 0.996).unwrap();
        assert!(obs.tensors()[0].data().iter().all(|&v| (v - 0.004).abs() < 1e-15));
    }
}
