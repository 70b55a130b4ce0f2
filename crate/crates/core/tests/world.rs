use jeap_core::world::body::JOINTS;
use jeap_core::world::camera::{norm, sub, to_camera_frame, Rigid, Vec3};
use jeap_core::world::clips::{track_clips, window_clips};
use jeap_core::world::{generate_episode, generate_track, WorldConfig};

fn small_world() -> WorldConfig {
    let mut cfg = WorldConfig::default();
    cfg.view.image_size = 16;
    cfg.view.supersample = 1;
    cfg
}

#[test]
fn episodes_are_reproducible() {
    let cfg = small_world();
    let a = generate_episode(&cfg, 11, 20).unwrap();
    let b = generate_episode(&cfg, 11, 20).unwrap();
    assert_eq!(a, b);
    let c = generate_episode(&cfg, 12, 20).unwrap();
    assert_ne!(a.frames[0], c.frames[0]);
}

#[test]
fn short_episode_is_rejected() {
    assert!(generate_episode(&small_world(), 1, 19).is_err());
}

#[test]
fn camera_rotations_are_orthonormal() {
    let cfg = small_world();
    for seed in 0..10 {
        let track = generate_track(&cfg, seed, 40).unwrap();
        for cam in &track.extrinsics {
            let r = cam.rotation;
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-6);
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]) - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            assert!((det - 1.0).abs() < 1e-6);
        }
    }
}

/// Pinhole test written out from the extrinsics: transform, then compare
/// both image-plane slopes with the half-angle tangent.
fn visible_from(cam: &Rigid, fov_deg: f64, p: Vec3) -> bool {
    let d = sub(p, cam.translation);
    let c: Vec<f64> = cam.rotation.iter().map(|row| row[0] * d[0] + row[1] * d[1] + row[2] * d[2]).collect();
    let half = (fov_deg.to_radians() / 2.0).tan();
    c[2] > 0.05 && (c[0] / c[2]).abs() <= half && (c[1] / c[2]).abs() <= half
}

#[test]
fn visibility_matches_independent_frustum_test() {
    let cfg = small_world();
    let (mut shown, mut hidden) = (0, 0);
    for seed in 0..10 {
        let track = generate_track(&cfg, seed, 40).unwrap();
        for f in 0..track.len() {
            for j in 0..JOINTS {
                let want = visible_from(&track.extrinsics[f], cfg.camera_fov_deg, track.poses_world[f][j]);
                assert_eq!(track.visibility[f][j], want, "seed {seed} frame {f} joint {j}");
                if want {
                    shown += 1;
                } else {
                    hidden += 1;
                }
            }
        }
    }
    assert!(shown > 0 && hidden > 0);
}

#[test]
fn camera_frame_conversion_preserves_distances() {
    let cfg = small_world();
    let track = generate_track(&cfg, 3, 20).unwrap();
    for f in 0..track.len() {
        let world = &track.poses_world[f];
        let cam = to_camera_frame(world, &track.extrinsics[f]).unwrap();
        for a in 0..JOINTS {
            for b in 0..JOINTS {
                let dw = norm(sub(world[a], world[b]));
                let dc = norm(sub(cam[a], cam[b]));
                assert!((dw - dc).abs() < 1e-6);
            }
        }
        let back = to_camera_frame(&cam, &track.extrinsics[f].inverse()).unwrap();
        for (p, q) in back.iter().zip(world) {
            assert!(norm(sub(*p, *q)) < 1e-6);
        }
    }
}

#[test]
fn clip_count_arithmetic() {
    let cfg = small_world();
    let episode = generate_episode(&cfg, 5, 40).unwrap();
    assert_eq!(window_clips(&episode, &cfg, 20, 5).unwrap().len(), 5);
    let disjoint = window_clips(&episode, &cfg, 20, 20).unwrap();
    assert_eq!(disjoint.iter().map(|c| c.start).collect::<Vec<_>>(), vec![0, 20]);
    let clip = &disjoint[1];
    assert_eq!(clip.steps(), 4);
    assert_eq!(clip.frames[2], episode.frames[30]);
    assert_eq!(clip.windows[2], episode.track.pose_window(&cfg, 30).unwrap());
    for stride in 1..25 {
        let n = window_clips(&episode, &cfg, 20, stride).unwrap().len();
        assert_eq!(n, (40 - 20) / stride + 1);
    }
    let short = generate_episode(&cfg, 5, 20).unwrap();
    assert!(window_clips(&short, &cfg, 25, 5).unwrap().is_empty());
    assert!(window_clips(&episode, &cfg, 20, 0).is_err());
}

#[test]
fn track_and_episode_clips_agree() {
    let cfg = small_world();
    let episode = generate_episode(&cfg, 8, 40).unwrap();
    let from_track = track_clips(&episode.track, &cfg, 20, 10).unwrap();
    let from_episode = window_clips(&episode, &cfg, 20, 10).unwrap();
    assert_eq!(from_track, from_episode);
}

fn pixel_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(x - y).powi(2)).sum()
}

#[test]
fn next_frame_is_the_unique_pixel_match() {
    let cfg = small_world();
    let episodes: Vec<_> = (0..12).map(|s| generate_episode(&cfg, 100 + s, 40).unwrap()).collect();
    let clips: Vec<_> = episodes.iter().flat_map(|e| window_clips(e, &cfg, 20, 20).unwrap()).collect();
    let gallery: Vec<&[f32]> = clips.iter().flat_map(|c| c.frames.iter().map(|f| f.pixels())).collect();
    let mut base = 0;
    for clip in &clips {
        for t in 0..clip.steps() - 1 {
            let truth = clip.frames[t + 1].pixels();
            let best = gallery
                .iter()
                .enumerate()
                .map(|(i, g)| (pixel_distance(truth, g), i))
                .filter(|&(d, _)| d == 0.0)
                .map(|(_, i)| i)
                .collect::<Vec<_>>();
            assert_eq!(best, vec![base + t + 1]);
        }
        base += clip.steps();
    }
}
