//! Plain data carried between the world generator, the model and evaluation.

use crate::error::{input_err, Result};

/// Channel-major `C×H×W` image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageFrame {
    channels: usize,
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl ImageFrame {
    pub fn new(channels: usize, height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != channels * height * width {
            return Err(input_err(format!(
                "{channels}×{height}×{width} image needs {} values, got {}",
                channels * height * width,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(input_err("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            channels,
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            pixels: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Flattens non-overlapping `patch × patch` tiles in row-major tile order;
    /// each row lists the tile's values channel-major, then by row, then column.
    pub fn patchify(&self, patch: usize, out: &mut Vec<f64>) -> Result<usize> {
        if patch == 0 || self.height % patch != 0 || self.width % patch != 0 {
            return Err(input_err(format!(
                "{}×{} image is not divisible into {patch}×{patch} patches",
                self.height, self.width
            )));
        }
        let (gh, gw) = (self.height / patch, self.width / patch);
        for py in 0..gh {
            for px in 0..gw {
                for c in 0..self.channels {
                    for dy in 0..patch {
                        for dx in 0..patch {
                            out.push(self.at(c, py * patch + dy, px * patch + dx) as f64);
                        }
                    }
                }
            }
        }
        Ok(gh * gw)
    }
}

/// One action: `4×F×J` values, channels `x, y, z, visibility`, xyz in metres.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseWindow {
    frames: usize,
    joints: usize,
    values: Vec<f32>,
}

impl PoseWindow {
    pub const CHANNELS: usize = 4;

    pub fn new(frames: usize, joints: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != Self::CHANNELS * frames * joints {
            return Err(input_err(format!(
                "4×{frames}×{joints} window needs {} values, got {}",
                Self::CHANNELS * frames * joints,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(input_err("pose values must be finite"));
        }
        let w = Self { frames, joints, values };
        if w.visibility().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(input_err("visibility channel must be 0 or 1"));
        }
        Ok(w)
    }

    /// Builds a window from a raw model output; the visibility channel is
    /// thresholded at 0.5 so the result satisfies the window invariants.
    pub fn from_prediction(frames: usize, joints: usize, mut values: Vec<f32>) -> Result<Self> {
        let n = frames * joints;
        if values.len() == Self::CHANNELS * n {
            for v in &mut values[3 * n..] {
                *v = if *v >= 0.5 { 1.0 } else { 0.0 };
            }
        }
        Self::new(frames, joints, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, channel: usize, frame: usize, joint: usize) -> f32 {
        self.values[(channel * self.frames + frame) * self.joints + joint]
    }

    pub fn xyz(&self, frame: usize, joint: usize) -> [f32; 3] {
        [self.get(0, frame, joint), self.get(1, frame, joint), self.get(2, frame, joint)]
    }

    pub fn visible(&self, frame: usize, joint: usize) -> bool {
        self.get(3, frame, joint) == 1.0
    }

    pub fn visibility(&self) -> &[f32] {
        &self.values[3 * self.frames * self.joints..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_order_is_row_major_tiles() {
        let px: Vec<f32> = (0..16).map(|i| i as f32 / 16.0).collect();
        let img = ImageFrame::new(1, 4, 4, px).unwrap();
        let mut rows = Vec::new();
        assert_eq!(img.patchify(2, &mut rows).unwrap(), 4);
        let first: Vec<f64> = rows[..4].iter().map(|v| v * 16.0).collect();
        assert_eq!(first, vec![0.0, 1.0, 4.0, 5.0]);
        let second: Vec<f64> = rows[4..8].iter().map(|v| v * 16.0).collect();
        assert_eq!(second, vec![2.0, 3.0, 6.0, 7.0]);
        assert!(img.patchify(3, &mut rows).is_err());
    }

    #[test]
    fn window_checks_visibility() {
        let mut v = vec![0.0; 4 * 2 * 3];
        v[20] = 0.5;
        assert!(PoseWindow::new(2, 3, v.clone()).is_err());
        let w = PoseWindow::from_prediction(2, 3, v).unwrap();
        assert!(w.visible(0, 2) && !w.visible(1, 2));
    }
}
