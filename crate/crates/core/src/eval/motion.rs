//! Joint position and velocity errors of predicted skeleton sequences.
//!
//! Velocity is the forward difference between consecutive frames times the
//! frame rate. Positions are in metres; both metrics report centimetres.

use crate::error::{input_err, CoreError, Result};
use crate::world::camera::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionEvalSpec {
    /// `frames × joints` positions.
    pub predicted: Vec<Vec<Vec3>>,
    pub ground_truth: Vec<Vec<Vec3>>,
    /// Ground-truth visibility per frame and joint; `None` scores every joint.
    pub visible: Option<Vec<Vec<bool>>>,
    pub fps: f64,
}

impl MotionEvalSpec {
    fn validate(&self) -> Result<()> {
        if self.predicted.len() != self.ground_truth.len() {
            return Err(input_err("predicted and ground-truth sequences differ in length"));
        }
        let joints = self.ground_truth.first().map_or(0, Vec::len);
        let shapes_ok = self.predicted.iter().chain(&self.ground_truth).all(|f| f.len() == joints);
        let mask_ok = self
            .visible
            .as_ref()
            .is_none_or(|m| m.len() == self.ground_truth.len() && m.iter().all(|f| f.len() == joints));
        if !shapes_ok || !mask_ok {
            return Err(input_err("every frame needs the same joint count"));
        }
        if !(self.fps > 0.0) {
            return Err(input_err("fps must be positive"));
        }
        Ok(())
    }

    fn visible(&self, frame: usize, joint: usize) -> bool {
        self.visible.as_ref().is_none_or(|m| m[frame][joint])
    }

    /// Every `factor`-th frame at `fps / factor`.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(input_err("subsampling factor must be positive"));
        }
        let pick = |frames: &Vec<Vec<Vec3>>| frames.iter().step_by(factor).cloned().collect();
        Ok(Self {
            predicted: pick(&self.predicted),
            ground_truth: pick(&self.ground_truth),
            visible: self.visible.as_ref().map(|m| m.iter().step_by(factor).cloned().collect()),
            fps: self.fps / factor as f64,
        })
    }
}

fn distance(a: Vec3, b: Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Mean per-joint position error in centimetres over visible joints.
pub fn mpjpe(spec: &MotionEvalSpec) -> Result<f64> {
    spec.validate()?;
    let (mut sum, mut count) = (0.0, 0usize);
    for (f, (pred, gt)) in spec.predicted.iter().zip(&spec.ground_truth).enumerate() {
        for j in 0..gt.len() {
            if spec.visible(f, j) {
                sum += distance(pred[j], gt[j]);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(CoreError::Degenerate("no visible joints to score".into()));
    }
    Ok(100.0 * sum / count as f64)
}

fn velocity(frames: &[Vec<Vec3>], f: usize, j: usize, fps: f64) -> Vec3 {
    let (a, b) = (frames[f][j], frames[f + 1][j]);
    [(b[0] - a[0]) * fps, (b[1] - a[1]) * fps, (b[2] - a[2]) * fps]
}

/// Mean per-joint velocity error in centimetres per second. A velocity is
/// scored when its joint is visible at both ends of the difference.
pub fn mpjve(spec: &MotionEvalSpec) -> Result<f64> {
    spec.validate()?;
    if spec.ground_truth.len() < 2 {
        return Err(input_err("velocity needs at least two frames"));
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for f in 0..spec.ground_truth.len() - 1 {
        for j in 0..spec.ground_truth[f].len() {
            if spec.visible(f, j) && spec.visible(f + 1, j) {
                let vp = velocity(&spec.predicted, f, j, spec.fps);
                let vg = velocity(&spec.ground_truth, f, j, spec.fps);
                sum += distance(vp, vg);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(CoreError::Degenerate("no visible joint pairs to score".into()));
    }
    Ok(100.0 * sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_velocity(frames: usize) -> MotionEvalSpec {
        let gt: Vec<Vec<Vec3>> = (0..frames).map(|f| vec![[0.01 * f as f64, 0.0, 0.0]; 3]).collect();
        MotionEvalSpec {
            predicted: vec![vec![[0.0; 3]; 3]; frames],
            ground_truth: gt,
            visible: None,
            fps: 30.0,
        }
    }

    #[test]
    fn static_prediction_of_steady_motion() {
        let spec = constant_velocity(4);
        assert!((mpjve(&spec).unwrap() - 30.0).abs() < 1e-9);
        let same = MotionEvalSpec {
            predicted: spec.ground_truth.clone(),
            ..spec.clone()
        };
        assert_eq!(mpjpe(&same).unwrap(), 0.0);
        assert_eq!(mpjve(&same).unwrap(), 0.0);
    }

    #[test]
    fn one_centimetre_offset() {
        let gt = vec![vec![[0.2, -0.1, 1.0]; 5]; 2];
        let pred = gt.iter().map(|f| f.iter().map(|p| [p[0] + 0.01, p[1], p[2]]).collect()).collect();
        let spec = MotionEvalSpec {
            predicted: pred,
            ground_truth: gt,
            visible: None,
            fps: 30.0,
        };
        assert!((mpjpe(&spec).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fully_masked_is_degenerate() {
        let mut spec = constant_velocity(2);
        spec.visible = Some(vec![vec![false; 3]; 2]);
        assert!(matches!(mpjpe(&spec), Err(CoreError::Degenerate(_))));
        let single = constant_velocity(1);
        assert!(mpjve(&single).is_err());
    }
}
