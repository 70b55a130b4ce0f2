//! Deterministic synthetic world: an agent walking through a toroidal arena
//! of coloured landmarks, seen from above in its own frame, with a
//! head-mounted camera observing its stick-figure body.

pub mod augment;
pub mod body;
pub mod camera;
pub mod clips;
pub mod render;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};

use crate::data::{ImageFrame, PoseWindow};
use crate::error::{config_err, input_err, Result};
use crate::rng::{stream_rng, Stream};
use body::{body_joints, pelvis_height, to_world, Gait, EYE_ABOVE_PELVIS, EYE_FORWARD, JOINTS};
use camera::{Frustum, Rigid, Vec3};
use render::{hsv_to_rgb, ARCHETYPES};

#[derive(Clone, Debug, PartialEq)]
pub struct ViewConfig {
    pub image_size: usize,
    /// Metres covered left to right.
    pub width: f64,
    /// Metres visible ahead of and behind the agent.
    pub ahead: f64,
    pub behind: f64,
    pub supersample: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub arena_size: f64,
    pub landmarks: usize,
    pub landmark_radius: (f64, f64),
    /// Weight of the per-episode smooth colour field mixed into the ground, in `[0, 1]`.
    pub ground_tint: f64,
    pub view: ViewConfig,
    /// Distance covered per time step (metres), one entry per speed class.
    pub step_distances: Vec<f64>,
    /// Heading change per time step (degrees), one entry per turn class.
    pub step_turns_deg: Vec<f64>,
    /// Probability of repeating the previous step's action.
    pub action_persistence: f64,
    pub fps: f64,
    pub pose_frames: usize,
    pub clip_frames: usize,
    pub camera_pitch_deg: f64,
    pub camera_fov_deg: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            arena_size: 16.0,
            landmarks: 30,
            landmark_radius: (0.35, 0.8),
            ground_tint: 0.6,
            view: ViewConfig {
                image_size: 32,
                width: 6.0,
                ahead: 5.0,
                behind: 1.0,
                supersample: 2,
            },
            step_distances: vec![0.3, 0.6, 0.9],
            step_turns_deg: vec![-30.0, -15.0, 0.0, 15.0, 30.0],
            action_persistence: 0.6,
            fps: 30.0,
            pose_frames: 5,
            clip_frames: 20,
            camera_pitch_deg: 60.0,
            camera_fov_deg: 90.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arena_size > 0.0) || self.landmarks == 0 {
            return Err(config_err("arena_size and landmark count must be positive"));
        }
        let (lo, hi) = self.landmark_radius;
        if !(lo > 0.0 && hi >= lo) {
            return Err(config_err("landmark radius range must be positive and ordered"));
        }
        if !(0.0..=1.0).contains(&self.ground_tint) {
            return Err(config_err("ground_tint must lie in [0, 1]"));
        }
        if self.view.image_size == 0 || !(self.view.width > 0.0) || !(self.view.ahead + self.view.behind > 0.0) {
            return Err(config_err("view extents must be positive"));
        }
        if self.step_distances.is_empty() || self.step_turns_deg.is_empty() {
            return Err(config_err("at least one speed and one turn class are required"));
        }
        if !(0.0..=1.0).contains(&self.action_persistence) || !(self.fps > 0.0) {
            return Err(config_err("action_persistence must lie in [0, 1] and fps be positive"));
        }
        if self.pose_frames == 0 || self.clip_frames == 0 || self.clip_frames % self.pose_frames != 0 {
            return Err(config_err("clip_frames must be a positive multiple of pose_frames"));
        }
        if !(self.camera_fov_deg > 0.0 && self.camera_fov_deg < 180.0) {
            return Err(config_err("camera field of view must lie in (0, 180) degrees"));
        }
        Ok(())
    }

    /// Image steps per clip.
    pub fn steps(&self) -> usize {
        self.clip_frames / self.pose_frames
    }

    pub fn action_count(&self) -> usize {
        self.step_distances.len() * self.step_turns_deg.len()
    }

    pub fn frustum(&self) -> Frustum {
        Frustum {
            fov: self.camera_fov_deg.to_radians(),
            near: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    pub color: [f32; 3],
}

/// Smooth periodic colour field over the torus: hue and value are sums of
/// plane waves with integer wave numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct TintField {
    pub weight: f64,
    pub hue: f64,
    /// `(kx, ky, phase, hue amplitude, value amplitude)` per wave.
    pub waves: Vec<(f64, f64, f64, f64, f64)>,
}

impl TintField {
    const WAVES: usize = 4;

    fn generate<R: Rng + ?Sized>(weight: f64, rng: &mut R) -> Self {
        let hue = rng.gen::<f64>();
        let waves = (0..Self::WAVES)
            .map(|_| {
                let kx = rng.gen_range(-2i32..=2) as f64;
                let ky = rng.gen_range(1i32..=2) as f64;
                (kx, ky, rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.05..0.15), rng.gen_range(0.05..0.12))
            })
            .collect();
        Self { weight, hue, waves }
    }

    pub fn color(&self, x: f64, y: f64, size: f64) -> [f32; 3] {
        let (mut h, mut v) = (self.hue, 0.6);
        for &(kx, ky, phase, ha, va) in &self.waves {
            let arg = 2.0 * PI * (kx * x + ky * y) / size + phase;
            h += ha * arg.sin();
            v += va * arg.cos();
        }
        hsv_to_rgb(h, 0.75, v.clamp(0.0, 1.0))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    /// Scene class: selects ground pattern and landmark shape.
    pub archetype: u32,
    pub size: f64,
    pub landmarks: Vec<Landmark>,
    pub tint: TintField,
}

impl Scene {
    pub fn generate<R: Rng + ?Sized>(cfg: &WorldConfig, rng: &mut R) -> Self {
        let archetype = rng.gen_range(0..ARCHETYPES as u32);
        let landmarks = (0..cfg.landmarks)
            .map(|_| Landmark {
                x: rng.gen_range(0.0..cfg.arena_size),
                y: rng.gen_range(0.0..cfg.arena_size),
                radius: rng.gen_range(cfg.landmark_radius.0..=cfg.landmark_radius.1),
                color: hsv_to_rgb(rng.gen::<f64>(), rng.gen_range(0.55..1.0), rng.gen_range(0.65..1.0)),
            })
            .collect();
        let tint = TintField::generate(cfg.ground_tint, rng);
        Self {
            archetype,
            size: cfg.arena_size,
            landmarks,
            tint,
        }
    }
}

/// Agent state at one frame. Positions are unwrapped; rendering folds them
/// onto the torus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub gait: Gait,
}

/// Everything about an episode except rendered pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub scene: Scene,
    pub states: Vec<AgentState>,
    /// Action class per time step (`speed_index · turns + turn_index`).
    pub actions: Vec<usize>,
    pub poses_world: Vec<[Vec3; JOINTS]>,
    pub visibility: Vec<[bool; JOINTS]>,
    pub extrinsics: Vec<Rigid>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub track: Track,
    pub frames: Vec<ImageFrame>,
    pub scene_label: u32,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn camera_for(state: &AgentState, pitch: f64) -> Rigid {
    let (s, c) = state.heading.sin_cos();
    let h = pelvis_height(&state.gait) + EYE_ABOVE_PELVIS;
    let pos = [state.x + c * EYE_FORWARD, state.y + s * EYE_FORWARD, h];
    Rigid::head_camera(pos, state.heading, pitch)
}

/// Simulates `length` frames of agent motion from a seed.
pub fn generate_track(cfg: &WorldConfig, seed: u64, length: usize) -> Result<Track> {
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::generate(cfg, &mut rng);
    let f = cfg.pose_frames;
    let steps = length.div_ceil(f);
    let n_turns = cfg.step_turns_deg.len();
    let mut actions = Vec::with_capacity(steps);
    for k in 0..steps {
        let a = if k > 0 && rng.gen::<f64>() < cfg.action_persistence {
            actions[k - 1]
        } else {
            rng.gen_range(0..cfg.action_count())
        };
        actions.push(a);
    }
    let max_dist = cfg.step_distances.iter().cloned().fold(0.0, f64::max).max(1e-9);
    let mut state = AgentState {
        x: rng.gen_range(0.0..cfg.arena_size),
        y: rng.gen_range(0.0..cfg.arena_size),
        heading: rng.gen_range(-PI..PI),
        gait: Gait {
            phase: rng.gen_range(0.0..2.0 * PI),
            amplitude: 0.0,
            lean: 0.0,
        },
    };
    let pitch = cfg.camera_pitch_deg.to_radians();
    let frustum = cfg.frustum();
    let mut track = Track {
        scene,
        states: Vec::with_capacity(length),
        actions,
        poses_world: Vec::with_capacity(length),
        visibility: Vec::with_capacity(length),
        extrinsics: Vec::with_capacity(length),
    };
    for i in 0..length {
        let a = track.actions[i / f];
        let dist = cfg.step_distances[a / n_turns] / f as f64;
        let turn = cfg.step_turns_deg[a % n_turns].to_radians() / f as f64;
        state.gait.amplitude = 0.2 + 0.35 * (dist * f as f64 / max_dist);
        state.gait.lean = -0.6 * turn;
        let cam = camera_for(&state, pitch);
        let world = to_world(&body_joints(&state.gait), state.x, state.y, state.heading);
        let mut vis = [false; JOINTS];
        for (v, &p) in vis.iter_mut().zip(&world) {
            *v = frustum.contains(cam.apply(p));
        }
        track.states.push(state);
        track.poses_world.push(world);
        track.visibility.push(vis);
        track.extrinsics.push(cam);
        // advance to the next frame
        state.heading += turn;
        state.x += dist * state.heading.cos();
        state.y += dist * state.heading.sin();
        state.gait.phase = (state.gait.phase + 2.0 * PI * dist / 1.2).rem_euclid(2.0 * PI);
    }
    Ok(track)
}

impl Track {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn label(&self) -> u32 {
        self.scene.archetype
    }

    pub fn render_frame(&self, cfg: &WorldConfig, i: usize) -> ImageFrame {
        let s = &self.states[i];
        render::render(&self.scene, &cfg.view, s.x, s.y, s.heading)
    }

    /// Pose window over frames `start..start+F`, xyz in the camera frame of
    /// frame `start`, visibility from each frame's own frustum.
    pub fn pose_window(&self, cfg: &WorldConfig, start: usize) -> Result<PoseWindow> {
        let f = cfg.pose_frames;
        if start + f > self.len() {
            return Err(input_err(format!("window {start}..{} exceeds episode of {}", start + f, self.len())));
        }
        let reference = &self.extrinsics[start];
        let mut values = vec![0.0f32; PoseWindow::CHANNELS * f * JOINTS];
        for fr in 0..f {
            let cam = camera::to_camera_frame(&self.poses_world[start + fr], reference)?;
            for (j, p) in cam.iter().enumerate() {
                for c in 0..3 {
                    values[(c * f + fr) * JOINTS + j] = p[c] as f32;
                }
                values[(3 * f + fr) * JOINTS + j] = if self.visibility[start + fr][j] { 1.0 } else { 0.0 };
            }
        }
        PoseWindow::new(f, JOINTS, values)
    }
}

/// Generates a full episode with every frame rendered.
pub fn generate_episode(cfg: &WorldConfig, seed: u64, length: usize) -> Result<Episode> {
    if length < cfg.clip_frames {
        return Err(input_err(format!(
            "episode length {length} is shorter than a clip ({})",
            cfg.clip_frames
        )));
    }
    let track = generate_track(cfg, seed, length)?;
    let frames = (0..length).map(|i| track.render_frame(cfg, i)).collect();
    let scene_label = track.label();
    Ok(Episode {
        track,
        frames,
        scene_label,
    })
}

/// Seed of episode `index` in a split.
pub fn episode_seed(run_seed: u64, stream: Stream, index: u64) -> u64 {
    use rand::RngCore;
    stream_rng(run_seed, stream, index).next_u64()
}
