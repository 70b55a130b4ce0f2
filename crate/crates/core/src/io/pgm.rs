//! Binary portable graymap (P5) output for attention maps.

use std::path::Path;

use crate::error::{input_err, Result};

/// Encodes `values` (row-major, `height × width`) scaled so the largest
/// value maps to 255. An all-zero map stays black.
pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height || width == 0 {
        return Err(input_err(format!("{width}×{height} graymap needs {} values, got {}", width * height, values.len())));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(input_err("graymap values must be finite and non-negative"));
    }
    let peak = values.iter().cloned().fold(0.0, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| if peak > 0.0 { (v / peak * 255.0).round() as u8 } else { 0 }));
    Ok(out)
}

pub fn write_pgm(path: &Path, values: &[f64], width: usize, height: usize) -> Result<()> {
    super::write_atomic(path, &encode_pgm(values, width, height)?)
}

/// Nearest-neighbour upscaling, so a 4×4 patch grid is still visible.
pub fn upscale(values: &[f64], width: usize, height: usize, factor: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() * factor * factor);
    for y in 0..height * factor {
        for x in 0..width * factor {
            out.push(values[(y / factor) * width + x / factor]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_scaling() {
        let bytes = encode_pgm(&[0.0, 0.5, 1.0, 0.25], 2, 2).unwrap();
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 255, 64]);
        assert!(encode_pgm(&[0.0; 3], 2, 2).is_err());
        assert_eq!(upscale(&[1.0, 2.0], 2, 1, 2), vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }
}
