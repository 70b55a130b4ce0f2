//! Rigid transforms and the pinhole frustum test.
//!
//! Camera convention: x right, y down, z forward. A [`Rigid`] maps world
//! points into the camera frame as `p_cam = R·(p_world − t)`, where the rows
//! of `R` are the camera axes expressed in world coordinates and `t` is the
//! camera centre.

use crate::error::{input_err, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rigid {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Rigid {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Camera at `position` looking along `heading` (radians from +x in the
    /// ground plane, z up), pitched down by `pitch` radians.
    pub fn head_camera(position: Vec3, heading: f64, pitch: f64) -> Self {
        let fwd = [heading.cos(), heading.sin(), 0.0];
        let right = [heading.sin(), -heading.cos(), 0.0];
        let z = [
            pitch.cos() * fwd[0],
            pitch.cos() * fwd[1],
            -pitch.sin(),
        ];
        let x = right;
        let y = cross(z, x);
        Self {
            rotation: [x, y, z],
            translation: position,
        }
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        let det = dot(r[0], cross(r[1], r[2]));
        worst.max((det - 1.0).abs())
    }

    pub fn validate(&self) -> Result<()> {
        if self.orthonormality_error() > 1e-6 {
            return Err(input_err("rotation is not orthonormal with determinant +1"));
        }
        Ok(())
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let d = sub(p, self.translation);
        [dot(self.rotation[0], d), dot(self.rotation[1], d), dot(self.rotation[2], d)]
    }

    /// The transform mapping camera coordinates back to world coordinates,
    /// expressed in the same `R·(p − t)` form.
    pub fn inverse(&self) -> Self {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0], r[2][0]], [r[0][1], r[1][1], r[2][1]], [r[0][2], r[1][2], r[2][2]]];
        // p = Rᵀ q + t = Rᵀ (q − (−R t))
        let rtt = [-dot(r[0], self.translation), -dot(r[1], self.translation), -dot(r[2], self.translation)];
        Self {
            rotation: rt,
            translation: rtt,
        }
    }
}

/// Expresses world joints in the camera frame of `extrinsic`.
pub fn to_camera_frame(pose_world: &[Vec3], extrinsic: &Rigid) -> Result<Vec<Vec3>> {
    extrinsic.validate()?;
    Ok(pose_world.iter().map(|&p| extrinsic.apply(p)).collect())
}

/// Symmetric pinhole frustum with equal horizontal and vertical field of view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frustum {
    pub fov: f64,
    pub near: f64,
}

impl Frustum {
    pub fn contains(&self, p_cam: Vec3) -> bool {
        let t = (self.fov / 2.0).tan();
        p_cam[2] > self.near && p_cam[0].abs() <= p_cam[2] * t && p_cam[1].abs() <= p_cam[2] * t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_translation() {
        let p = [1.0, -2.0, 3.0];
        assert_eq!(Rigid::identity().apply(p), p);
        let t = Rigid {
            translation: [0.5, 0.5, 0.5],
            ..Rigid::identity()
        };
        assert_eq!(t.apply(p), [0.5, -2.5, 2.5]);
    }

    #[test]
    fn head_camera_axes() {
        let cam = Rigid::head_camera([0.0, 0.0, 1.6], 0.0, 0.0);
        assert!(cam.orthonormality_error() < 1e-12);
        // A point ahead of the camera lies on +z; one below it on +y.
        let ahead = cam.apply([2.0, 0.0, 1.6]);
        assert!((ahead[2] - 2.0).abs() < 1e-12 && ahead[0].abs() < 1e-12);
        let below = cam.apply([0.0, 0.0, 1.0]);
        assert!(below[1] > 0.0);
        // Heading +x, right hand side is −y in the world.
        assert!(cam.apply([0.0, -1.0, 1.6])[0] > 0.0);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let bad = Rigid {
            rotation: [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        };
        assert!(to_camera_frame(&[[0.0; 3]], &bad).is_err());
    }
}
