//! Multi-crop augmentation: random resized crops with flips and colour jitter.

use rand::Rng;

use crate::data::ImageFrame;
use crate::error::{config_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MultiCropConfig {
    pub n_global: usize,
    pub n_local: usize,
    /// Area fraction ranges of the source image.
    pub global_scale: (f64, f64),
    pub local_scale: (f64, f64),
    pub flip_prob: f64,
    pub jitter_prob: f64,
    /// Maximum relative change of brightness, contrast and saturation.
    pub jitter_strength: f64,
}

impl Default for MultiCropConfig {
    fn default() -> Self {
        Self {
            n_global: 2,
            n_local: 0,
            global_scale: (0.8, 1.0),
            local_scale: (0.2, 0.5),
            flip_prob: 0.0,
            jitter_prob: 0.8,
            jitter_strength: 0.4,
        }
    }
}

impl MultiCropConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_range = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi <= 1.0;
        if !ok_range(self.global_scale) || !ok_range(self.local_scale) {
            return Err(config_err("crop scale ranges must satisfy 0 < lo <= hi <= 1"));
        }
        if self.n_local > 0 && self.local_scale.1 > self.global_scale.0 {
            return Err(config_err("local crop scales must lie below the global range"));
        }
        if self.n_global == 0 {
            return Err(config_err("at least one global crop is required"));
        }
        for p in [self.flip_prob, self.jitter_prob] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err("augmentation probabilities must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.jitter_strength) {
            return Err(config_err("jitter_strength must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn views(&self) -> usize {
        self.n_global + self.n_local
    }
}

/// Crop rectangle in source pixel units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropBox {
    pub x0: f64,
    pub y0: f64,
    pub w: f64,
    pub h: f64,
}

impl CropBox {
    pub fn full(frame: &ImageFrame) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            w: frame.width() as f64,
            h: frame.height() as f64,
        }
    }
}

fn sample_box<R: Rng + ?Sized>(frame: &ImageFrame, scale: (f64, f64), rng: &mut R) -> CropBox {
    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    let area = fw * fh;
    for _ in 0..10 {
        let s = rng.gen_range(scale.0..=scale.1);
        let log_r = rng.gen_range((3.0f64 / 4.0).ln()..=(4.0f64 / 3.0).ln());
        let r = log_r.exp();
        let w = (s * area * r).sqrt();
        let h = (s * area / r).sqrt();
        if w <= fw && h <= fh {
            return CropBox {
                x0: rng.gen_range(0.0..=fw - w),
                y0: rng.gen_range(0.0..=fh - h),
                w,
                h,
            };
        }
    }
    let side = (scale.1 * area).sqrt().min(fw).min(fh);
    CropBox {
        x0: (fw - side) / 2.0,
        y0: (fh - side) / 2.0,
        w: side,
        h: side,
    }
}

/// Bilinear resample of `crop` to `out × out`; pixel centres of a full-image
/// crop at the source size land exactly on source pixels.
pub fn crop_resize(frame: &ImageFrame, crop: CropBox, out: usize, flip: bool) -> ImageFrame {
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    let mut pixels = vec![0.0f32; c * out * out];
    for oy in 0..out {
        let sy = (crop.y0 + (oy as f64 + 0.5) * crop.h / out as f64 - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = (sy - y0 as f64) as f32;
        for ox in 0..out {
            let dst_x = if flip { out - 1 - ox } else { ox };
            let sx = (crop.x0 + (ox as f64 + 0.5) * crop.w / out as f64 - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = (sx - x0 as f64) as f32;
            for ch in 0..c {
                let top = frame.at(ch, y0, x0) * (1.0 - fx) + frame.at(ch, y0, x1) * fx;
                let bot = frame.at(ch, y1, x0) * (1.0 - fx) + frame.at(ch, y1, x1) * fx;
                pixels[(ch * out + oy) * out + dst_x] = (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0);
            }
        }
    }
    ImageFrame::new(c, out, out, pixels).expect("resized crop has valid shape and range")
}

/// Brightness, contrast and saturation scaled by the given factors, in that order.
pub fn color_jitter(frame: &ImageFrame, brightness: f32, contrast: f32, saturation: f32) -> ImageFrame {
    let (c, h, w) = (frame.channels(), frame.height(), frame.width());
    let n = h * w;
    let mut px: Vec<f32> = frame.pixels().iter().map(|&v| (v * brightness).clamp(0.0, 1.0)).collect();
    let gray = |px: &[f32], i: usize| -> f32 {
        if c == 3 {
            0.299 * px[i] + 0.587 * px[n + i] + 0.114 * px[2 * n + i]
        } else {
            px[i]
        }
    };
    let mean = (0..n).map(|i| gray(&px, i)).sum::<f32>() / n as f32;
    for v in px.iter_mut() {
        *v = ((*v - mean) * contrast + mean).clamp(0.0, 1.0);
    }
    if c == 3 {
        for i in 0..n {
            let g = gray(&px, i);
            for ch in 0..3 {
                let v = &mut px[ch * n + i];
                *v = ((*v - g) * saturation + g).clamp(0.0, 1.0);
            }
        }
    }
    ImageFrame::new(c, h, w, px).expect("jittered image has valid shape and range")
}

fn augment<R: Rng + ?Sized>(frame: &ImageFrame, scale: (f64, f64), out: usize, cfg: &MultiCropConfig, rng: &mut R) -> ImageFrame {
    let crop = sample_box(frame, scale, rng);
    let flip = rng.gen::<f64>() < cfg.flip_prob;
    let view = crop_resize(frame, crop, out, flip);
    if rng.gen::<f64>() < cfg.jitter_prob {
        let s = cfg.jitter_strength;
        let b = rng.gen_range(1.0 - s..=1.0 + s) as f32;
        let c = rng.gen_range(1.0 - s..=1.0 + s) as f32;
        let sat = rng.gen_range(1.0 - s..=1.0 + s) as f32;
        color_jitter(&view, b, c, sat)
    } else {
        view
    }
}

/// `n_global` large crops followed by `n_local` small crops, each resized to `out`.
pub fn multicrop<R: Rng + ?Sized>(frame: &ImageFrame, cfg: &MultiCropConfig, out: usize, rng: &mut R) -> Vec<ImageFrame> {
    let mut views = Vec::with_capacity(cfg.views());
    for _ in 0..cfg.n_global {
        views.push(augment(frame, cfg.global_scale, out, cfg, rng));
    }
    for _ in 0..cfg.n_local {
        views.push(augment(frame, cfg.local_scale, out, cfg, rng));
    }
    views
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ImageFrame {
        let px: Vec<f32> = (0..3 * 8 * 8).map(|i| (i % 64) as f32 / 64.0).collect();
        ImageFrame::new(3, 8, 8, px).unwrap()
    }

    #[test]
    fn full_crop_without_jitter_is_identity() {
        let f = ramp();
        assert_eq!(crop_resize(&f, CropBox::full(&f), 8, false), f);
        assert_eq!(color_jitter(&f, 1.0, 1.0, 1.0), f);
    }

    #[test]
    fn flip_mirrors_columns() {
        let f = ramp();
        let g = crop_resize(&f, CropBox::full(&f), 8, true);
        assert_eq!(g.at(1, 2, 0), f.at(1, 2, 7));
    }
}
