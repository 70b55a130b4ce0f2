//! Agent-centric top-down rasterization of a toroidal arena.

use super::{Scene, ViewConfig};
use crate::data::ImageFrame;

pub const ARCHETYPES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Disc,
    Square,
    Ring,
    Diamond,
}

/// Landmark shape used by each archetype.
pub fn archetype_shape(archetype: u32) -> Shape {
    match archetype % ARCHETYPES as u32 {
        0 => Shape::Disc,
        1 => Shape::Square,
        2 => Shape::Ring,
        _ => Shape::Diamond,
    }
}

/// Wraps a coordinate difference on a torus of side `size` into `[−size/2, size/2)`.
#[inline]
pub fn wrap(d: f64, size: f64) -> f64 {
    d - size * (d / size + 0.5).floor()
}

fn ground(archetype: u32, x: f64, y: f64, size: f64) -> [f32; 3] {
    let fx = x.rem_euclid(size);
    let fy = y.rem_euclid(size);
    let near_line = |v: f64, period: f64, half: f64| {
        let m = v.rem_euclid(period);
        m < half || m > period - half
    };
    match archetype % ARCHETYPES as u32 {
        0 => {
            if near_line(fx, 2.0, 0.06) || near_line(fy, 2.0, 0.06) {
                [0.12, 0.25, 0.08]
            } else {
                [0.25, 0.45, 0.2]
            }
        }
        1 => {
            if near_line(fy, 2.0, 0.25) {
                [0.62, 0.52, 0.33]
            } else {
                [0.78, 0.68, 0.48]
            }
        }
        2 => {
            let cell = (fx / 2.0).floor() as i64 + (fy / 2.0).floor() as i64;
            if cell.rem_euclid(2) == 0 {
                [0.47, 0.47, 0.5]
            } else {
                [0.33, 0.33, 0.36]
            }
        }
        _ => {
            let dx = wrap(fx - 1.0, 2.0);
            let dy = wrap(fy - 1.0, 2.0);
            if dx * dx + dy * dy < 0.15 * 0.15 {
                [0.4, 0.5, 0.75]
            } else {
                [0.18, 0.26, 0.5]
            }
        }
    }
}

fn inside(shape: Shape, dx: f64, dy: f64, r: f64) -> bool {
    match shape {
        Shape::Disc => dx * dx + dy * dy <= r * r,
        Shape::Square => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
        Shape::Ring => {
            let d2 = dx * dx + dy * dy;
            d2 <= r * r && d2 >= (0.5 * r) * (0.5 * r)
        }
        Shape::Diamond => dx.abs() + dy.abs() <= r * 1.15,
    }
}

/// Colour of the world point `(x, y)`.
pub fn world_color(scene: &Scene, x: f64, y: f64) -> [f32; 3] {
    let shape = archetype_shape(scene.archetype);
    // Later landmarks are drawn on top.
    for lm in scene.landmarks.iter().rev() {
        let dx = wrap(x - lm.x, scene.size);
        let dy = wrap(y - lm.y, scene.size);
        if dx.abs() <= lm.radius * 1.2 && dy.abs() <= lm.radius * 1.2 && inside(shape, dx, dy, lm.radius) {
            return lm.color;
        }
    }
    let base = ground(scene.archetype, x, y, scene.size);
    let w = scene.tint.weight as f32;
    if w == 0.0 {
        return base;
    }
    let tint = scene.tint.color(x, y, scene.size);
    [0, 1, 2].map(|c| (1.0 - w) * base[c] + w * tint[c])
}

/// Renders the view of an agent at `(x, y)` facing `heading`: the agent sits
/// near the bottom centre of the image and looks towards the top.
pub fn render(scene: &Scene, view: &ViewConfig, x: f64, y: f64, heading: f64) -> ImageFrame {
    let n = view.image_size;
    let ss = view.supersample.max(1);
    let (s, c) = heading.sin_cos();
    let fwd = [c, s];
    let right = [s, -c];
    let depth = view.ahead + view.behind;
    // Only landmarks that can reach the view are tested per pixel.
    let reach = (view.width * view.width / 4.0 + view.ahead.max(view.behind).powi(2)).sqrt();
    let local = Scene {
        archetype: scene.archetype,
        size: scene.size,
        landmarks: scene
            .landmarks
            .iter()
            .filter(|lm| {
                let dx = wrap(lm.x - x, scene.size);
                let dy = wrap(lm.y - y, scene.size);
                (dx * dx + dy * dy).sqrt() <= reach + lm.radius * 1.2
            })
            .cloned()
            .collect(),
        tint: scene.tint.clone(),
    };
    let mut pixels = vec![0.0f32; 3 * n * n];
    let inv = 1.0 / (ss * ss) as f32;
    for row in 0..n {
        for col in 0..n {
            let mut acc = [0.0f32; 3];
            for a in 0..ss {
                for b in 0..ss {
                    let v = (row as f64 + (a as f64 + 0.5) / ss as f64) / n as f64;
                    let u = (col as f64 + (b as f64 + 0.5) / ss as f64) / n as f64;
                    let forward = view.ahead - v * depth;
                    let lateral = (u - 0.5) * view.width;
                    let wx = x + forward * fwd[0] + lateral * right[0];
                    let wy = y + forward * fwd[1] + lateral * right[1];
                    let col_rgb = world_color(&local, wx, wy);
                    for ch in 0..3 {
                        acc[ch] += col_rgb[ch];
                    }
                }
            }
            for ch in 0..3 {
                pixels[(ch * n + row) * n + col] = (acc[ch] * inv).clamp(0.0, 1.0);
            }
        }
    }
    ImageFrame::new(3, n, n, pixels).expect("rendered image has valid shape and range")
}

/// HSV (all in `[0, 1]`) to RGB.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f32; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as i64;
    let f = h6 - i as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match i.rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r as f32, g as f32, b as f32]
}
