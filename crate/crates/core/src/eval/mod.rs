//! Evaluation protocols on held-out synthetic episodes: next-state
//! retrieval, k-NN scene classification and pose rollout error.

pub mod attention;
pub mod knn;
pub mod motion;
pub mod retrieval;

use jeap_tensor::{Graph, Scalar};

use crate::data::PoseWindow;
use crate::error::{input_err, Result};
use crate::model::{AgentModel, AgentParams, Clip};
use crate::rng::Stream;
use crate::world::camera::Vec3;
use crate::world::clips::{track_clips, ClipItem};
use crate::world::{episode_seed, generate_track, WorldConfig};
use knn::{knn_classify, KnnConfig, KnnScore};
use motion::{mpjpe, mpjve, MotionEvalSpec};
use retrieval::{retrieval_eval, ExclusionRule, Features, RetrievalScore, RetrievalSpec};

/// Which vectors are compared in retrieval and k-NN.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// Backbone output at the state query.
    Embedding,
    /// Head output (prototype scores), centred per row.
    Logits,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Embedding => "embedding",
            FeatureKind::Logits => "logits",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "embedding" => Some(FeatureKind::Embedding),
            "logits" => Some(FeatureKind::Logits),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub episodes: usize,
    pub episode_frames: usize,
    pub stride: usize,
    pub knn_train_episodes: usize,
    pub knn_test_episodes: usize,
    pub knn: KnnConfig,
    pub feature: FeatureKind,
    pub rule: ExclusionRule,
    pub mask_invisible: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 100,
            episode_frames: 40,
            stride: 20,
            knn_train_episodes: 200,
            knn_test_episodes: 100,
            knn: KnnConfig::default(),
            feature: FeatureKind::Embedding,
            rule: ExclusionRule::KeepCurrent,
            mask_invisible: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self, world: &WorldConfig) -> Result<()> {
        if self.episodes == 0 || self.stride == 0 || self.episode_frames < world.clip_frames {
            return Err(input_err("evaluation needs episodes at least one clip long and a positive stride"));
        }
        if self.knn_train_episodes == 0 || self.knn_test_episodes == 0 {
            return Err(input_err("k-NN splits must be non-empty"));
        }
        Ok(())
    }
}

/// Held-out clips of `count` episodes drawn from `stream`, in episode order.
pub fn split_clips(world: &WorldConfig, seed: u64, stream: Stream, count: usize, frames: usize, stride: usize) -> Result<Vec<ClipItem>> {
    let mut clips = Vec::new();
    for e in 0..count {
        let track = generate_track(world, episode_seed(seed, stream, e as u64), frames)?;
        clips.extend(track_clips(&track, world, world.clip_frames, stride)?);
    }
    Ok(clips)
}

/// The retrieval and motion split.
pub fn eval_clips(world: &WorldConfig, seed: u64, cfg: &EvalConfig) -> Result<Vec<ClipItem>> {
    split_clips(world, seed, Stream::EvalData, cfg.episodes, cfg.episode_frames, cfg.stride)
}

const CHUNK: usize = 32;

fn centred(row: &[f64]) -> Vec<f64> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    row.iter().map(|v| v - mean).collect()
}

/// Observer features of every frame of every clip, in (clip, step) order.
pub fn gallery_features<T: Scalar>(model: &AgentModel, observer: &AgentParams<T>, clips: &[ClipItem], kind: FeatureKind) -> Result<Features> {
    let frames: Vec<_> = clips.iter().flat_map(|c| c.frames.iter()).collect();
    frame_features(model, observer, &frames, kind)
}

pub fn frame_features<T: Scalar>(
    model: &AgentModel,
    params: &AgentParams<T>,
    frames: &[&crate::data::ImageFrame],
    kind: FeatureKind,
) -> Result<Features> {
    model.check_params(params)?;
    let mut rows = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(CHUNK * 4) {
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false)?;
        let out = model.observer_forward(&mut g, &vars, chunk)?;
        let values = g.value(match kind {
            FeatureKind::Embedding => out.embeddings,
            FeatureKind::Logits => out.logits,
        });
        for r in 0..values.rows() {
            let row: Vec<f64> = values.row(r).iter().map(|v| v.as_f64()).collect();
            rows.push(match kind {
                FeatureKind::Embedding => row,
                FeatureKind::Logits => centred(&row),
            });
        }
    }
    Features::from_rows(&rows)?.normalized()
}

/// Predicted next-state features for steps `0..T−1` of every clip.
pub fn predicted_features<T: Scalar>(model: &AgentModel, predictor: &AgentParams<T>, clips: &[ClipItem], kind: FeatureKind) -> Result<Features> {
    model.check_params(predictor)?;
    let mut rows = Vec::new();
    for chunk in clips.chunks(CHUNK) {
        let mut g = Graph::new();
        let vars = predictor.bind(&mut g, false)?;
        let inputs: Vec<Clip> = chunk.iter().map(ClipItem::as_clip).collect();
        let out = model.predictor_forward(&mut g, &vars, &inputs)?;
        let values = g.value(match kind {
            FeatureKind::Embedding => out.state_embeddings,
            FeatureKind::Logits => out.state_logits,
        });
        let mut r = 0;
        for clip in chunk {
            for t in 0..clip.steps() {
                if t + 1 < clip.steps() {
                    let row: Vec<f64> = values.row(r).iter().map(|v| v.as_f64()).collect();
                    rows.push(match kind {
                        FeatureKind::Embedding => row,
                        FeatureKind::Logits => centred(&row),
                    });
                }
                r += 1;
            }
        }
    }
    Features::from_rows(&rows)?.normalized()
}

/// Retrieval of each step's true next frame among every frame of the split.
pub fn retrieval_protocol<T: Scalar>(
    model: &AgentModel,
    predictor: &AgentParams<T>,
    observer: &AgentParams<T>,
    clips: &[ClipItem],
    kind: FeatureKind,
    rule: ExclusionRule,
) -> Result<RetrievalScore> {
    let gallery = gallery_features(model, observer, clips, kind)?;
    let queries = predicted_features(model, predictor, clips, kind)?;
    let (mut ground_truth, mut current) = (Vec::new(), Vec::new());
    let mut base = 0;
    for clip in clips {
        for t in 0..clip.steps().saturating_sub(1) {
            current.push(base + t);
            ground_truth.push(base + t + 1);
        }
        base += clip.steps();
    }
    retrieval_eval(&RetrievalSpec {
        queries,
        gallery,
        ground_truth,
        current,
        rule,
    })
}

/// Scene-class k-NN on observer features of two disjoint episode splits.
pub fn knn_protocol<T: Scalar>(model: &AgentModel, observer: &AgentParams<T>, world: &WorldConfig, seed: u64, cfg: &EvalConfig) -> Result<KnnScore> {
    let frames = world.clip_frames;
    let train = split_clips(world, seed, Stream::KnnData, cfg.knn_train_episodes, frames, frames)?;
    let test: Vec<ClipItem> = (0..cfg.knn_test_episodes)
        .map(|e| {
            let index = (cfg.knn_train_episodes + e) as u64;
            let track = generate_track(world, episode_seed(seed, Stream::KnnData, index), frames)?;
            Ok(track_clips(&track, world, frames, frames)?.remove(0))
        })
        .collect::<Result<_>>()?;
    let labels = |clips: &[ClipItem]| -> Vec<u32> { clips.iter().flat_map(|c| std::iter::repeat_n(c.label, c.steps())).collect() };
    let train_feats = gallery_features(model, observer, &train, cfg.feature)?;
    let test_feats = gallery_features(model, observer, &test, cfg.feature)?;
    knn_classify(&train_feats, &labels(&train), &test_feats, &labels(&test), &cfg.knn)
}

/// Autoregressive action rollout: the first window is given, every later
/// window is predicted from the frames so far and the previous predictions.
pub fn rollout_actions<T: Scalar>(model: &AgentModel, predictor: &AgentParams<T>, clips: &[ClipItem]) -> Result<Vec<Vec<PoseWindow>>> {
    model.check_params(predictor)?;
    let cfg = model.config();
    let mut out = Vec::with_capacity(clips.len());
    for chunk in clips.chunks(CHUNK) {
        let mut windows: Vec<Vec<PoseWindow>> = chunk.iter().map(|c| vec![c.windows[0].clone()]).collect();
        let steps = chunk[0].steps();
        if chunk.iter().any(|c| c.steps() != steps) {
            return Err(input_err("rollout clips differ in length"));
        }
        for t in 1..steps {
            // Step t's own action token is a placeholder: q_a precedes it.
            let inputs: Vec<Vec<PoseWindow>> = windows
                .iter()
                .map(|w| {
                    let mut w = w.clone();
                    w.push(w[t - 1].clone());
                    w
                })
                .collect();
            let clip_refs: Vec<Clip> = chunk
                .iter()
                .zip(&inputs)
                .map(|(c, w)| Clip {
                    frames: &c.frames[..=t],
                    windows: w,
                })
                .collect();
            let mut g = Graph::new();
            let vars = predictor.bind(&mut g, false)?;
            let pred = model.predictor_forward(&mut g, &vars, &clip_refs)?;
            let values = g.value(pred.actions);
            for (i, w) in windows.iter_mut().enumerate() {
                let row: Vec<f32> = values.row(i * (t + 1) + t).iter().map(|v| v.as_f64() as f32).collect();
                w.push(PoseWindow::from_prediction(cfg.pose_frames, cfg.joints, row)?);
            }
        }
        out.extend(windows);
    }
    Ok(out)
}

/// Joint positions of windows `1..T`, re-expressed in the camera frame of
/// the clip's first window.
pub fn target_sequence(clip: &ClipItem, windows: &[PoseWindow]) -> Result<Vec<Vec<Vec3>>> {
    let reference = clip.cameras[0];
    let mut frames = Vec::new();
    for (t, w) in windows.iter().enumerate().skip(1) {
        let back = clip.cameras[t].inverse();
        for f in 0..w.frames() {
            frames.push(
                (0..w.joints())
                    .map(|j| {
                        let p = w.xyz(f, j);
                        reference.apply(back.apply([p[0] as f64, p[1] as f64, p[2] as f64]))
                    })
                    .collect(),
            );
        }
    }
    if frames.is_empty() {
        return Err(input_err("motion evaluation needs at least two windows"));
    }
    Ok(frames)
}

fn target_visibility(clip: &ClipItem) -> Vec<Vec<bool>> {
    clip.windows[1..]
        .iter()
        .flat_map(|w| (0..w.frames()).map(move |f| (0..w.joints()).map(|j| w.visible(f, j)).collect()))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionScore {
    pub mpjpe_cm: f64,
    pub mpjve_cm_s: f64,
    pub mpjpe_cm_10fps: f64,
    pub mpjve_cm_s_10fps: f64,
}

fn average(scores: &[MotionScore]) -> MotionScore {
    let n = scores.len() as f64;
    let mean = |f: fn(&MotionScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
    MotionScore {
        mpjpe_cm: mean(|s| s.mpjpe_cm),
        mpjve_cm_s: mean(|s| s.mpjve_cm_s),
        mpjpe_cm_10fps: mean(|s| s.mpjpe_cm_10fps),
        mpjve_cm_s_10fps: mean(|s| s.mpjve_cm_s_10fps),
    }
}

fn score_sequences(predicted: Vec<Vec<Vec3>>, clip: &ClipItem, fps: f64, mask: bool) -> Result<MotionScore> {
    let spec = MotionEvalSpec {
        predicted,
        ground_truth: target_sequence(clip, &clip.windows)?,
        visible: mask.then(|| target_visibility(clip)),
        fps,
    };
    let slow = spec.subsample(3)?;
    Ok(MotionScore {
        mpjpe_cm: mpjpe(&spec)?,
        mpjve_cm_s: mpjve(&spec)?,
        mpjpe_cm_10fps: mpjpe(&slow)?,
        mpjve_cm_s_10fps: mpjve(&slow)?,
    })
}

/// Rollout error averaged over clips.
pub fn motion_protocol<T: Scalar>(model: &AgentModel, predictor: &AgentParams<T>, clips: &[ClipItem], fps: f64, mask: bool) -> Result<MotionScore> {
    if clips.is_empty() {
        return Err(input_err("no clips to evaluate"));
    }
    let predicted = rollout_actions(model, predictor, clips)?;
    let scores = clips
        .iter()
        .zip(predicted)
        .map(|(clip, windows)| score_sequences(target_sequence(clip, &windows)?, clip, fps, mask))
        .collect::<Result<Vec<_>>>()?;
    Ok(average(&scores))
}

/// Holding the last observed pose for every target frame.
pub fn static_baseline(clips: &[ClipItem], fps: f64, mask: bool) -> Result<MotionScore> {
    if clips.is_empty() {
        return Err(input_err("no clips to evaluate"));
    }
    let scores = clips
        .iter()
        .map(|clip| {
            let first = &clip.windows[0];
            let last = first.frames() - 1;
            let pose: Vec<Vec3> = (0..first.joints())
                .map(|j| {
                    let p = first.xyz(last, j);
                    [p[0] as f64, p[1] as f64, p[2] as f64]
                })
                .collect();
            let targets = (clip.steps() - 1) * first.frames();
            score_sequences(vec![pose; targets], clip, fps, mask)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(average(&scores))
}

/// Every metric of one model, as written to results files.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub retrieval: Option<RetrievalScore>,
    pub knn: Option<KnnScore>,
    pub motion: Option<MotionScore>,
    pub static_motion: Option<MotionScore>,
    pub gallery_size: usize,
    pub queries: usize,
}

impl EvalReport {
    /// `key=value` lines.
    pub fn key_values(&self) -> Vec<(String, f64)> {
        let mut kv = Vec::new();
        if let Some(r) = self.retrieval {
            kv.push(("top1".into(), r.top1));
            kv.push(("map".into(), r.map));
            kv.push(("gallery_size".into(), self.gallery_size as f64));
            kv.push(("queries".into(), self.queries as f64));
            kv.push(("chance_top1".into(), 1.0 / self.gallery_size.max(1) as f64));
        }
        if let Some(k) = self.knn {
            kv.push(("knn_top1".into(), k.top1));
            kv.push(("knn_top5".into(), k.top5));
        }
        let motion = |kv: &mut Vec<(String, f64)>, prefix: &str, m: &MotionScore| {
            kv.push((format!("{prefix}mpjpe_cm"), m.mpjpe_cm));
            kv.push((format!("{prefix}mpjve_cm_s"), m.mpjve_cm_s));
            kv.push((format!("{prefix}mpjpe_cm_10fps"), m.mpjpe_cm_10fps));
            kv.push((format!("{prefix}mpjve_cm_s_10fps"), m.mpjve_cm_s_10fps));
        };
        if let Some(m) = &self.motion {
            motion(&mut kv, "", m);
        }
        if let Some(m) = &self.static_motion {
            motion(&mut kv, "static_", m);
        }
        kv
    }

    pub fn to_key_value_text(&self) -> String {
        self.key_values().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(r) = self.retrieval {
            s += &format!(
                "next-state retrieval: top1 {:.4}  mAP {:.4}  ({} queries, gallery {})\n",
                r.top1, r.map, self.queries, self.gallery_size
            );
        }
        if let Some(k) = self.knn {
            s += &format!("k-NN scene class: top1 {:.4}  top5 {:.4}\n", k.top1, k.top5);
        }
        for (name, m) in [("rollout", &self.motion), ("static", &self.static_motion)] {
            if let Some(m) = m {
                s += &format!(
                    "{name}: MPJPE {:.2} cm  MPJVE {:.2} cm/s  (10 fps: {:.2} cm, {:.2} cm/s)\n",
                    m.mpjpe_cm, m.mpjve_cm_s, m.mpjpe_cm_10fps, m.mpjve_cm_s_10fps
                );
            }
        }
        s
    }
}
