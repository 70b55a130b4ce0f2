//! Sliding-window clip extraction and batch sampling.

use super::camera::Rigid;
use super::{generate_track, Episode, Track, WorldConfig};
use crate::data::{ImageFrame, PoseWindow};
use crate::error::{input_err, Result};
use crate::model::Clip;
use crate::rng::{derive_seed, Stream};

/// One clip: `T` sampled frames (one every `F` frames) and the `T` pose
/// windows starting at those frames. The ground-truth next frame of step `t`
/// is `frames[t + 1]`; the last step has none.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipItem {
    pub frames: Vec<ImageFrame>,
    pub windows: Vec<PoseWindow>,
    /// Head camera at the first frame of every window, the frame its xyz are expressed in.
    pub cameras: Vec<Rigid>,
    pub label: u32,
    /// First frame of the clip within its episode.
    pub start: usize,
}

impl ClipItem {
    pub fn steps(&self) -> usize {
        self.frames.len()
    }

    pub fn as_clip(&self) -> Clip<'_> {
        Clip {
            frames: &self.frames,
            windows: &self.windows,
        }
    }

    pub fn next_frame(&self, step: usize) -> Option<&ImageFrame> {
        self.frames.get(step + 1)
    }
}

fn clip_at(
    cfg: &WorldConfig,
    window: usize,
    start: usize,
    label: u32,
    frame_at: impl Fn(usize) -> ImageFrame,
    window_at: impl Fn(usize) -> Result<PoseWindow>,
    camera_at: impl Fn(usize) -> Rigid,
) -> Result<ClipItem> {
    let f = cfg.pose_frames;
    let steps = window / f;
    let mut frames = Vec::with_capacity(steps);
    let mut windows = Vec::with_capacity(steps);
    let mut cameras = Vec::with_capacity(steps);
    for t in 0..steps {
        frames.push(frame_at(start + t * f));
        windows.push(window_at(start + t * f)?);
        cameras.push(camera_at(start + t * f));
    }
    Ok(ClipItem {
        frames,
        windows,
        cameras,
        label,
        start,
    })
}

fn check_window(cfg: &WorldConfig, window: usize, stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(input_err("stride must be at least 1"));
    }
    if window == 0 || window % cfg.pose_frames != 0 {
        return Err(input_err(format!(
            "window {window} must be a positive multiple of {} pose frames",
            cfg.pose_frames
        )));
    }
    Ok(())
}

fn clip_starts(len: usize, window: usize, stride: usize) -> impl Iterator<Item = usize> {
    let count = if len < window { 0 } else { (len - window) / stride + 1 };
    (0..count).map(move |i| i * stride)
}

/// `floor((len − window)/stride) + 1` clips; none if the episode is shorter
/// than the window.
pub fn window_clips(episode: &Episode, cfg: &WorldConfig, window: usize, stride: usize) -> Result<Vec<ClipItem>> {
    check_window(cfg, window, stride)?;
    clip_starts(episode.len(), window, stride)
        .map(|start| {
            clip_at(
                cfg,
                window,
                start,
                episode.scene_label,
                |i| episode.frames[i].clone(),
                |i| episode.track.pose_window(cfg, i),
                |i| episode.track.extrinsics[i],
            )
        })
        .collect()
}

/// Like [`window_clips`] but renders only the sampled frames of a track.
pub fn track_clips(track: &Track, cfg: &WorldConfig, window: usize, stride: usize) -> Result<Vec<ClipItem>> {
    check_window(cfg, window, stride)?;
    clip_starts(track.len(), window, stride)
        .map(|start| {
            clip_at(
                cfg,
                window,
                start,
                track.label(),
                |i| track.render_frame(cfg, i),
                |i| track.pose_window(cfg, i),
                |i| track.extrinsics[i],
            )
        })
        .collect()
}

/// Seed identifying the training batch of `step`; every item derives from it.
pub fn training_batch_seed(run_seed: u64, step: u64) -> u64 {
    derive_seed(run_seed, Stream::TrainData, step)
}

/// Training clips for one optimizer step: every item is a fresh episode
/// of exactly one clip.
pub fn training_clips(cfg: &WorldConfig, run_seed: u64, step: u64, batch: usize) -> Result<Vec<ClipItem>> {
    let batch_seed = training_batch_seed(run_seed, step);
    (0..batch)
        .map(|i| {
            let track = generate_track(cfg, derive_seed(batch_seed, Stream::TrainData, i as u64), cfg.clip_frames)?;
            let mut clips = track_clips(&track, cfg, cfg.clip_frames, cfg.clip_frames)?;
            Ok(clips.remove(0))
        })
        .collect()
}
