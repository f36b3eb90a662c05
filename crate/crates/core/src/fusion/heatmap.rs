//! Attention maps rendered as binary PPM images.

use std::path::Path;

use gla_tensor::{Real, Tensor};

use crate::error::{GlaError, Result};

const DARK: [f64; 3] = [16.0, 16.0, 64.0];
const VIOLET: [f64; 3] = [128.0, 0.0, 160.0];
const LIGHT: [f64; 3] = [255.0, 240.0, 200.0];

/// Color of ramp entry `index` (0..=255).
pub fn ramp_color(index: u8) -> [u8; 3] {
    let t = index as f64 / 255.0;
    let (lo, hi, u) = if t <= 0.5 {
        (DARK, VIOLET, t / 0.5)
    } else {
        (VIOLET, LIGHT, (t - 0.5) / 0.5)
    };
    let mix = |c: usize| (lo[c] + (hi[c] - lo[c]) * u).round() as u8;
    [mix(0), mix(1), mix(2)]
}

/// Ramp entry for a weight in `[0, 1]`, rounding half up.
pub fn ramp_index(weight: f64) -> u8 {
    (weight.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Channel mean of a `[C, h, w]` weight map, row-major `h * w` values.
pub fn channel_mean<T: Real>(weights: &Tensor<T>) -> Result<(usize, usize, Vec<f64>)> {
    let &[c, h, w] = weights.shape() else {
        return Err(GlaError::Invalid(format!(
            "heatmap expects a [C, h, w] weight map, got {:?}",
            weights.shape()
        )));
    };
    let mut mean = vec![0.0; h * w];
    for plane in weights.data().chunks(h * w) {
        for (m, &v) in mean.iter_mut().zip(plane) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= c as f64);
    Ok((h, w, mean))
}

/// P6 image of a row-major `rows x cols` map where each cell is a `block x block` square.
pub fn render_ppm(map: &[f64], rows: usize, cols: usize, block: usize) -> Vec<u8> {
    assert_eq!(map.len(), rows * cols, "map size");
    if map.iter().any(|w| !(0.0..=1.0).contains(w)) {
        log::warn!("attention weights outside [0, 1] clamped for rendering");
    }
    let (height, width) = (rows * block, cols * block);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.reserve(height * width * 3);
    for y in 0..height {
        for x in 0..width {
            out.extend_from_slice(&ramp_color(ramp_index(map[(y / block) * cols + x / block])));
        }
    }
    out
}

/// Writes the channel-mean heatmap of a `[C, h, w]` weight map.
pub fn export_attention_heatmap<T: Real>(weights: &Tensor<T>, block: usize, path: &Path) -> Result<()> {
    let (h, w, mean) = channel_mean(weights)?;
    std::fs::write(path, render_ppm(&mean, h, w, block.max(1))).map_err(|e| GlaError::io(path, e))
}
