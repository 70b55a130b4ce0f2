//! Run configuration in a flat `key = value` text format.
//!
//! Blank lines and `#` comments are ignored. A `preset` line selects the
//! model size first; every other key then overrides single fields, in any
//! order. Unknown keys and malformed values are rejected with their line.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use jeap_tensor::GeluApprox;

use crate::backbone::{MaskKind, PositionScheme};
use crate::error::{CoreError, Result};
use crate::eval::knn::Voting;
use crate::eval::retrieval::ExclusionRule;
use crate::eval::{EvalConfig, FeatureKind};
use crate::model::ModelConfig;
use crate::objectives::EmaSchedule;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.validate(&self.train.world)
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.train.seed = seed;
    }
}

fn line_err(line: usize, msg: impl Into<String>) -> CoreError {
    CoreError::Config {
        line: Some(line),
        msg: msg.into(),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("`{key}`: cannot parse `{value}`"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(format!("`{key}`: expected true or false, got `{value}`")),
    }
}

fn parse_list(key: &str, value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn positive<T: PartialOrd + Default + Copy>(key: &str, v: T) -> std::result::Result<T, String> {
    if v > T::default() {
        Ok(v)
    } else {
        Err(format!("`{key}` must be positive"))
    }
}

fn unit_interval(key: &str, v: f64) -> std::result::Result<f64, String> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("`{key}` must lie in [0, 1]"))
    }
}

/// Applies one assignment; returns an error message for the caller to attach a line to.
fn apply(cfg: &mut RunConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    let t = &mut cfg.train;
    let m = &mut t.model;
    let b = &mut m.backbone;
    let o = &mut t.optim;
    let w = &mut t.world;
    let c = &mut t.crops;
    let e = &mut cfg.eval;
    let f = |v: &str| parse_num::<f64>(key, v);
    let u = |v: &str| parse_num::<usize>(key, v);
    match key {
        "preset" => {
            *m = ModelConfig::preset(value).map_err(|e| e.to_string())?;
            w.view.image_size = m.image_size;
            w.pose_frames = m.pose_frames;
        }
        "depth" => b.depth = positive(key, u(value)?)?,
        "embed_dim" => b.embed_dim = positive(key, u(value)?)?,
        "n_heads" => b.n_heads = positive(key, u(value)?)?,
        "mlp_ratio" => {
            let (num, den) = value
                .split_once('/')
                .ok_or_else(|| format!("`mlp_ratio`: expected `numerator/denominator`, got `{value}`"))?;
            b.mlp_ratio = (positive(key, u(num.trim())?)?, positive(key, u(den.trim())?)?);
        }
        "ffn_granule" => b.ffn_granule = positive(key, u(value)?)?,
        "norm_eps" => b.norm_eps = positive(key, f(value)?)?,
        "rope_base" => b.rope_base = f(value)?,
        "max_seq_len" => b.max_seq_len = positive(key, u(value)?)?,
        "mask" => {
            b.mask = match value {
                "causal" => MaskKind::Causal,
                "block_causal" => MaskKind::BlockCausal,
                _ => return Err(format!("`mask`: expected causal or block_causal, got `{value}`")),
            }
        }
        "positions" => {
            b.positions = match value {
                "flat" => PositionScheme::Flat,
                "within_step" => PositionScheme::WithinStep,
                _ => return Err(format!("`positions`: expected flat or within_step, got `{value}`")),
            }
        }
        "image_size" => {
            m.image_size = positive(key, u(value)?)?;
            w.view.image_size = m.image_size;
        }
        "patch_size" => m.patch_size = positive(key, u(value)?)?,
        "head_hidden" => m.head_hidden = positive(key, u(value)?)?,
        "head_bottleneck" => m.head_bottleneck = positive(key, u(value)?)?,
        "prototypes" => m.prototypes = positive(key, u(value)?)?,
        "action_ln_eps" => m.action_ln_eps = positive(key, f(value)?)?,
        "init_std" => m.init_std = positive(key, f(value)?)?,
        "gelu" => {
            m.gelu = match value {
                "tanh" => GeluApprox::Tanh,
                "erf" => GeluApprox::Erf,
                _ => return Err(format!("`gelu`: expected tanh or erf, got `{value}`")),
            }
        }
        "base_lr" => o.base_lr = positive(key, f(value)?)?,
        "final_lr" => o.final_lr = f(value)?,
        "beta1" => o.beta1 = f(value)?,
        "beta2" => o.beta2 = f(value)?,
        "wd_start" => o.wd_start = f(value)?,
        "wd_end" => o.wd_end = f(value)?,
        "total_iters" => o.total_iters = positive(key, parse_num::<u64>(key, value)?)?,
        "warmup_iters" => o.warmup_iters = parse_num(key, value)?,
        "clip_norm" => o.clip_norm = positive(key, f(value)?)?,
        "adam_eps" => o.adam_eps = positive(key, f(value)?)?,
        "batch_size" => o.batch_size = positive(key, u(value)?)?,
        "lambda_rep" => t.weights.rep = f(value)?,
        "lambda_pred" => t.weights.pred = f(value)?,
        "lambda_act" => t.weights.act = f(value)?,
        "mask_invisible" => {
            t.mask_invisible = parse_bool(key, value)?;
            e.mask_invisible = t.mask_invisible;
        }
        "tau_student" => t.dino.tau_student = positive(key, f(value)?)?,
        "tau_teacher" => t.dino.tau_teacher = positive(key, f(value)?)?,
        "center_momentum" => t.dino.center_momentum = unit_interval(key, f(value)?)?,
        "ema_momentum" => t.ema.momentum = unit_interval(key, f(value)?)?,
        "ema_schedule" => {
            t.ema.schedule = match value {
                "fixed" => EmaSchedule::Fixed,
                "cosine" => EmaSchedule::Cosine,
                _ => return Err(format!("`ema_schedule`: expected fixed or cosine, got `{value}`")),
            }
        }
        "n_global" => c.n_global = positive(key, u(value)?)?,
        "n_local" => c.n_local = u(value)?,
        "global_scale_min" => c.global_scale.0 = f(value)?,
        "global_scale_max" => c.global_scale.1 = f(value)?,
        "local_scale_min" => c.local_scale.0 = f(value)?,
        "local_scale_max" => c.local_scale.1 = f(value)?,
        "flip_prob" => c.flip_prob = unit_interval(key, f(value)?)?,
        "jitter_prob" => c.jitter_prob = unit_interval(key, f(value)?)?,
        "jitter_strength" => c.jitter_strength = f(value)?,
        "arena_size" => w.arena_size = positive(key, f(value)?)?,
        "landmarks" => w.landmarks = positive(key, u(value)?)?,
        "landmark_radius_min" => w.landmark_radius.0 = positive(key, f(value)?)?,
        "landmark_radius_max" => w.landmark_radius.1 = positive(key, f(value)?)?,
        "ground_tint" => w.ground_tint = f(value)?,
        "view_width" => w.view.width = positive(key, f(value)?)?,
        "view_ahead" => w.view.ahead = f(value)?,
        "view_behind" => w.view.behind = f(value)?,
        "supersample" => w.view.supersample = positive(key, u(value)?)?,
        "step_distances" => w.step_distances = parse_list(key, value)?,
        "step_turns_deg" => w.step_turns_deg = parse_list(key, value)?,
        "action_persistence" => w.action_persistence = unit_interval(key, f(value)?)?,
        "fps" => w.fps = positive(key, f(value)?)?,
        "pose_frames" => {
            w.pose_frames = positive(key, u(value)?)?;
            m.pose_frames = w.pose_frames;
        }
        "clip_frames" => w.clip_frames = positive(key, u(value)?)?,
        "camera_pitch_deg" => w.camera_pitch_deg = f(value)?,
        "camera_fov_deg" => w.camera_fov_deg = f(value)?,
        "eval_episodes" => e.episodes = positive(key, u(value)?)?,
        "eval_episode_frames" => e.episode_frames = positive(key, u(value)?)?,
        "eval_stride" => e.stride = positive(key, u(value)?)?,
        "knn_train_episodes" => e.knn_train_episodes = positive(key, u(value)?)?,
        "knn_test_episodes" => e.knn_test_episodes = positive(key, u(value)?)?,
        "knn_k" => e.knn.k = positive(key, u(value)?)?,
        "knn_voting" => {
            e.knn.voting = match value {
                "uniform" => Voting::Uniform,
                "exp" => Voting::Exponential { temperature: 0.07 },
                _ => return Err(format!("`knn_voting`: expected uniform or exp, got `{value}`")),
            }
        }
        "knn_temperature" => match &mut e.knn.voting {
            Voting::Exponential { temperature } => *temperature = positive(key, f(value)?)?,
            Voting::Uniform => return Err("`knn_temperature` needs `knn_voting = exp`".into()),
        },
        "retrieval_feature" => {
            e.feature = FeatureKind::parse(value).ok_or_else(|| format!("`retrieval_feature`: expected embedding or logits, got `{value}`"))?
        }
        "retrieval_rule" => {
            e.rule = match value {
                "keep_current" => ExclusionRule::KeepCurrent,
                "exclude_current" => ExclusionRule::ExcludeCurrent,
                _ => return Err(format!("`retrieval_rule`: expected keep_current or exclude_current, got `{value}`")),
            }
        }
        "seed" => t.seed = parse_num(key, value)?,
        "out_dir" => cfg.out_dir = PathBuf::from(value),
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// `(line number, key, value)` of every assignment.
fn assignments(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| line_err(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(line_err(line, "empty key or value"));
        }
        if out.iter().any(|(_, k, _): &(usize, String, String)| k == key) {
            return Err(line_err(line, format!("`{key}` is set twice")));
        }
        out.push((line, key.to_string(), value.to_string()));
    }
    Ok(out)
}

fn build(items: &[(usize, String, String)], skip: Option<usize>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    // The preset replaces the whole model, so it goes first.
    let ordered = items
        .iter()
        .filter(|(_, k, _)| k == "preset")
        .chain(items.iter().filter(|(_, k, _)| k != "preset"));
    for (line, key, value) in ordered {
        if Some(*line) == skip {
            continue;
        }
        apply(&mut cfg, key, value).map_err(|msg| line_err(*line, msg))?;
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let items = assignments(text)?;
    let cfg = build(&items, None)?;
    if let Err(err) = cfg.validate() {
        // Blame the last line whose removal makes the configuration valid.
        let blamed = items
            .iter()
            .rev()
            .map(|(line, _, _)| *line)
            .find(|&line| build(&items, Some(line)).is_ok_and(|c| c.validate().is_ok()));
        let msg = match err {
            CoreError::Config { msg, .. } => msg,
            other => other.to_string(),
        };
        return Err(CoreError::Config { line: blamed, msg });
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// Every field as an explicit assignment; parsing the result gives back an equal config.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let t = &cfg.train;
    let m = &t.model;
    let b = &m.backbone;
    let o = &t.optim;
    let w = &t.world;
    let c = &t.crops;
    let e = &cfg.eval;
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    put("seed", t.seed.to_string());
    put("out_dir", cfg.out_dir.display().to_string());
    put("depth", b.depth.to_string());
    put("embed_dim", b.embed_dim.to_string());
    put("n_heads", b.n_heads.to_string());
    put("mlp_ratio", format!("{}/{}", b.mlp_ratio.0, b.mlp_ratio.1));
    put("ffn_granule", b.ffn_granule.to_string());
    put("norm_eps", b.norm_eps.to_string());
    put("rope_base", b.rope_base.to_string());
    put("max_seq_len", b.max_seq_len.to_string());
    put("mask", b.mask.name().into());
    put(
        "positions",
        match b.positions {
            PositionScheme::Flat => "flat",
            PositionScheme::WithinStep => "within_step",
        }
        .into(),
    );
    put("image_size", m.image_size.to_string());
    put("patch_size", m.patch_size.to_string());
    put("head_hidden", m.head_hidden.to_string());
    put("head_bottleneck", m.head_bottleneck.to_string());
    put("prototypes", m.prototypes.to_string());
    put("action_ln_eps", m.action_ln_eps.to_string());
    put("init_std", m.init_std.to_string());
    put(
        "gelu",
        match m.gelu {
            GeluApprox::Tanh => "tanh",
            GeluApprox::Erf => "erf",
        }
        .into(),
    );
    put("base_lr", o.base_lr.to_string());
    put("final_lr", o.final_lr.to_string());
    put("beta1", o.beta1.to_string());
    put("beta2", o.beta2.to_string());
    put("wd_start", o.wd_start.to_string());
    put("wd_end", o.wd_end.to_string());
    put("total_iters", o.total_iters.to_string());
    put("warmup_iters", o.warmup_iters.to_string());
    put("clip_norm", o.clip_norm.to_string());
    put("adam_eps", o.adam_eps.to_string());
    put("batch_size", o.batch_size.to_string());
    put("lambda_rep", t.weights.rep.to_string());
    put("lambda_pred", t.weights.pred.to_string());
    put("lambda_act", t.weights.act.to_string());
    put("mask_invisible", t.mask_invisible.to_string());
    put("tau_student", t.dino.tau_student.to_string());
    put("tau_teacher", t.dino.tau_teacher.to_string());
    put("center_momentum", t.dino.center_momentum.to_string());
    put("ema_momentum", t.ema.momentum.to_string());
    put(
        "ema_schedule",
        match t.ema.schedule {
            EmaSchedule::Fixed => "fixed",
            EmaSchedule::Cosine => "cosine",
        }
        .into(),
    );
    put("n_global", c.n_global.to_string());
    put("n_local", c.n_local.to_string());
    put("global_scale_min", c.global_scale.0.to_string());
    put("global_scale_max", c.global_scale.1.to_string());
    put("local_scale_min", c.local_scale.0.to_string());
    put("local_scale_max", c.local_scale.1.to_string());
    put("flip_prob", c.flip_prob.to_string());
    put("jitter_prob", c.jitter_prob.to_string());
    put("jitter_strength", c.jitter_strength.to_string());
    put("arena_size", w.arena_size.to_string());
    put("landmarks", w.landmarks.to_string());
    put("landmark_radius_min", w.landmark_radius.0.to_string());
    put("landmark_radius_max", w.landmark_radius.1.to_string());
    put("ground_tint", w.ground_tint.to_string());
    put("view_width", w.view.width.to_string());
    put("view_ahead", w.view.ahead.to_string());
    put("view_behind", w.view.behind.to_string());
    put("supersample", w.view.supersample.to_string());
    put("step_distances", list(&w.step_distances));
    put("step_turns_deg", list(&w.step_turns_deg));
    put("action_persistence", w.action_persistence.to_string());
    put("fps", w.fps.to_string());
    put("pose_frames", w.pose_frames.to_string());
    put("clip_frames", w.clip_frames.to_string());
    put("camera_pitch_deg", w.camera_pitch_deg.to_string());
    put("camera_fov_deg", w.camera_fov_deg.to_string());
    put("eval_episodes", e.episodes.to_string());
    put("eval_episode_frames", e.episode_frames.to_string());
    put("eval_stride", e.stride.to_string());
    put("knn_train_episodes", e.knn_train_episodes.to_string());
    put("knn_test_episodes", e.knn_test_episodes.to_string());
    put("knn_k", e.knn.k.to_string());
    match e.knn.voting {
        Voting::Uniform => put("knn_voting", "uniform".into()),
        Voting::Exponential { temperature } => {
            put("knn_voting", "exp".into());
            put("knn_temperature", temperature.to_string());
        }
    }
    put("retrieval_feature", e.feature.name().into());
    put(
        "retrieval_rule",
        match e.rule {
            ExclusionRule::KeepCurrent => "keep_current",
            ExclusionRule::ExcludeCurrent => "exclude_current",
        }
        .into(),
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn ema_momentum_parses() {
        let cfg = parse_config("ema_momentum = 0.996\n").unwrap();
        assert_eq!(cfg.train.ema.momentum, 0.996);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_config("seed = 3\ndepth = -1\n").unwrap_err();
        assert!(matches!(err, CoreError::Config { line: Some(2), .. }), "{err}");
        let err = parse_config("seed = 3\n\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, CoreError::Config { line: Some(3), .. }), "{err}");
        let err = parse_config("total_iters = 1000\nwarmup_iters = 5000\n").unwrap_err();
        assert!(matches!(err, CoreError::Config { line: Some(2), .. }), "{err}");
    }

    #[test]
    fn serialization_round_trips() {
        let mut cfg = parse_config("preset = tiny\nbase_lr = 0.001\nstep_distances = 0.5, 1\nknn_voting = uniform\n").unwrap();
        cfg.out_dir = PathBuf::from("runs/x");
        assert_eq!(parse_config(&serialize_config(&cfg)).unwrap(), cfg);
    }
}
