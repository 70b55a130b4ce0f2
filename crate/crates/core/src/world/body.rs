//! A 17-joint stick figure (COCO joint order) with a phase-driven gait.

use std::f64::consts::PI;

use super::camera::Vec3;

pub const JOINTS: usize = 17;

pub const JOINT_NAMES: [&str; JOINTS] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

const PELVIS_HEIGHT: f64 = 0.95;
const THIGH: f64 = 0.45;
const SHIN: f64 = 0.43;
const UPPER_ARM: f64 = 0.3;
const FOREARM: f64 = 0.27;

/// Height of the eyes above the pelvis, and their forward offset.
pub const EYE_ABOVE_PELVIS: f64 = 0.70;
pub const EYE_FORWARD: f64 = 0.09;

/// Gait state at one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gait {
    pub phase: f64,
    /// Swing amplitude in radians.
    pub amplitude: f64,
    /// Lateral lean in radians (positive leans left), driven by turning.
    pub lean: f64,
}

pub fn pelvis_height(gait: &Gait) -> f64 {
    PELVIS_HEIGHT + 0.03 * (2.0 * gait.phase).cos()
}

fn limb(from: Vec3, len: f64, angle: f64) -> Vec3 {
    // angle measured from straight down, positive swings forward (+x)
    [from[0] + len * angle.sin(), from[1], from[2] - len * angle.cos()]
}

/// Joint positions in the body frame: x forward, y left, z up, origin on the
/// ground below the pelvis.
pub fn body_joints(gait: &Gait) -> [Vec3; JOINTS] {
    let pz = pelvis_height(gait);
    let a = gait.amplitude;
    let mut j = [[0.0; 3]; JOINTS];
    for (side, y) in [(0usize, 1.0f64), (1, -1.0)] {
        let phase = gait.phase + side as f64 * PI;
        let hip_angle = a * phase.sin();
        let knee_bend = 0.1 + 0.9 * a * (1.0 + phase.cos()) / 2.0;
        let hip = [0.0, 0.1 * y, pz];
        let knee = limb(hip, THIGH, hip_angle);
        let ankle = limb(knee, SHIN, hip_angle - knee_bend);
        let shoulder = [0.0, 0.19 * y, pz + 0.5];
        let arm_angle = -0.7 * hip_angle;
        let elbow = limb(shoulder, UPPER_ARM, arm_angle);
        let wrist = limb(elbow, FOREARM, arm_angle + 0.4 + 0.3 * a);
        j[11 + side] = hip;
        j[13 + side] = knee;
        j[15 + side] = ankle;
        j[5 + side] = shoulder;
        j[7 + side] = elbow;
        j[9 + side] = wrist;
        j[1 + side] = [EYE_FORWARD, 0.035 * y, pz + EYE_ABOVE_PELVIS];
        j[3 + side] = [0.0, 0.075 * y, pz + 0.68];
    }
    j[0] = [0.11, 0.0, pz + 0.67];
    // Lean rotates everything above the ground about the forward axis.
    let (s, c) = gait.lean.sin_cos();
    for p in &mut j {
        let (y, z) = (p[1], p[2]);
        p[1] = c * y - s * z;
        p[2] = s * y + c * z;
    }
    j
}

/// Places body-frame joints in the world at ground position `(x, y)` with `heading`.
pub fn to_world(body: &[Vec3; JOINTS], x: f64, y: f64, heading: f64) -> [Vec3; JOINTS] {
    let (s, c) = heading.sin_cos();
    let mut out = [[0.0; 3]; JOINTS];
    for (o, p) in out.iter_mut().zip(body) {
        *o = [x + c * p[0] - s * p[1], y + s * p[0] + c * p[1], p[2]];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::camera::{norm, sub};

    #[test]
    fn limb_lengths_are_constant() {
        for phase in [0.0, 1.0, 2.5, 4.0] {
            let j = body_joints(&Gait {
                phase,
                amplitude: 0.5,
                lean: 0.1,
            });
            assert!((norm(sub(j[11], j[13])) - THIGH).abs() < 1e-12);
            assert!((norm(sub(j[13], j[15])) - SHIN).abs() < 1e-12);
            assert!((norm(sub(j[6], j[8])) - UPPER_ARM).abs() < 1e-12);
        }
    }

    #[test]
    fn legs_swing_in_antiphase() {
        let j = body_joints(&Gait {
            phase: PI / 2.0,
            amplitude: 0.4,
            lean: 0.0,
        });
        assert!(j[13][0] > 0.0 && j[14][0] < 0.0);
    }
}
