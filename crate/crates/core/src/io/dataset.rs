//! Generated dataset splits: one container per split plus a text manifest.
//!
//! Record names per episode `e` (zero-padded to five digits):
//! `episode_e/frames` (f32, `len×C×H×W`), `episode_e/poses` (f64,
//! `len×J×3`, world frame), `episode_e/visible` (u8, `len×J`),
//! `episode_e/extrinsics` (f64, `len×12`, rotation row-major then
//! translation), `episode_e/actions` (u8 per step), `episode_e/meta`
//! (seed and scene label, little-endian u64 each).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use twox_hash::XxHash64;

use super::config::RunConfig;
use super::container::{Container, Payload};
use crate::error::{input_err, Result};
use crate::rng::Stream;
use crate::world::body::JOINTS;
use crate::world::{episode_seed, generate_episode, Episode, WorldConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
    Knn,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Eval, Split::Knn];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
            Split::Knn => "knn",
        }
    }

    pub fn stream(self) -> Stream {
        match self {
            Split::Train => Stream::TrainData,
            Split::Eval => Stream::EvalData,
            Split::Knn => Stream::KnnData,
        }
    }

    /// Episode count and length the evaluation protocols use; the training
    /// split has no fixed size, so `train_episodes` of one clip each are written.
    pub fn extent(self, cfg: &RunConfig, train_episodes: usize) -> (usize, usize) {
        let clip = cfg.train.world.clip_frames;
        match self {
            Split::Train => (train_episodes, clip),
            Split::Eval => (cfg.eval.episodes, cfg.eval.episode_frames),
            Split::Knn => (cfg.eval.knn_train_episodes + cfg.eval.knn_test_episodes, clip),
        }
    }
}

/// Hash of the world configuration as printed by `Debug`.
pub fn world_hash(world: &WorldConfig) -> u64 {
    XxHash64::oneshot(0, format!("{world:?}").as_bytes())
}

fn push_episode(c: &mut Container, index: usize, seed: u64, ep: &Episode) -> Result<()> {
    let p = format!("episode_{index:05}");
    let len = ep.len() as u64;
    let frame = &ep.frames[0];
    let pixels: Vec<f32> = ep.frames.iter().flat_map(|f| f.pixels().iter().copied()).collect();
    c.push(
        format!("{p}/frames"),
        vec![len, frame.channels() as u64, frame.height() as u64, frame.width() as u64],
        Payload::F32(pixels),
    )?;
    let t = &ep.track;
    let poses = t.poses_world.iter().flat_map(|f| f.iter().flat_map(|j| j.iter().copied())).collect();
    c.push(format!("{p}/poses"), vec![len, JOINTS as u64, 3], Payload::F64(poses))?;
    let visible = t.visibility.iter().flat_map(|f| f.iter().map(|&v| v as u8)).collect();
    c.push(format!("{p}/visible"), vec![len, JOINTS as u64], Payload::Bytes(visible))?;
    let extrinsics = t
        .extrinsics
        .iter()
        .flat_map(|r| r.rotation.iter().flat_map(|row| row.iter().copied()).chain(r.translation))
        .collect();
    c.push(format!("{p}/extrinsics"), vec![len, 12], Payload::F64(extrinsics))?;
    let actions: Vec<u8> = t.actions.iter().map(|&a| u8::try_from(a).unwrap_or(u8::MAX)).collect();
    c.push_bytes(format!("{p}/actions"), actions)?;
    let mut meta = seed.to_le_bytes().to_vec();
    meta.extend_from_slice(&(ep.scene_label as u64).to_le_bytes());
    c.push_bytes(format!("{p}/meta"), meta)?;
    Ok(())
}

/// Container and manifest text of one split.
pub fn build_split(cfg: &RunConfig, split: Split, train_episodes: usize) -> Result<(Container, String)> {
    let world = &cfg.train.world;
    if world.action_count() > u8::MAX as usize {
        return Err(input_err("more than 255 action classes cannot be stored"));
    }
    let (count, frames) = split.extent(cfg, train_episodes);
    let mut c = Container::new();
    let mut manifest = String::new();
    let _ = writeln!(manifest, "split = {}", split.name());
    let _ = writeln!(manifest, "run_seed = {}", cfg.seed());
    let _ = writeln!(manifest, "world_hash = {:016x}", world_hash(world));
    let _ = writeln!(manifest, "episodes = {count}");
    let _ = writeln!(manifest, "frames_per_episode = {frames}");
    for e in 0..count {
        let seed = episode_seed(cfg.seed(), split.stream(), e as u64);
        let ep = generate_episode(world, seed, frames)?;
        push_episode(&mut c, e, seed, &ep)?;
        let _ = writeln!(manifest, "episode {e:05} seed {seed:016x} label {}", ep.scene_label);
    }
    Ok((c, manifest))
}

/// Writes `<split>.jeap` and `<split>.manifest.txt` into `dir` and returns both paths.
pub fn write_split(dir: &Path, cfg: &RunConfig, split: Split, train_episodes: usize) -> Result<(PathBuf, PathBuf)> {
    let (container, manifest) = build_split(cfg, split, train_episodes)?;
    let data = dir.join(format!("{}.jeap", split.name()));
    let text = dir.join(format!("{}.manifest.txt", split.name()));
    container.save(&data)?;
    super::write_atomic(&text, manifest.as_bytes())?;
    Ok((data, text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::parse_config;

    #[test]
    fn split_is_reproducible() {
        let cfg = parse_config("eval_episodes = 2\n").unwrap();
        let (a, ma) = build_split(&cfg, Split::Eval, 0).unwrap();
        let (b, mb) = build_split(&cfg, Split::Eval, 0).unwrap();
        assert_eq!(a.encode(), b.encode());
        assert_eq!(ma, mb);
        assert_eq!(a.records().len(), 12);
    }
}
