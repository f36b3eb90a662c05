use super::boxes::BBox;
use crate::error::{GlaError, Result};

/// Anchors tiled over a feature map, ordered by cell (row-major), then scale, then ratio.
#[derive(Debug, Clone)]
pub struct AnchorGrid {
    pub anchors: Vec<BBox>,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl AnchorGrid {
    pub fn per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// `(row, col, anchor-in-cell)` of a flat anchor index.
    pub fn locate(&self, index: usize) -> (usize, usize, usize) {
        let a = self.per_cell();
        let cell = index / a;
        (cell / self.width, cell % self.width, index % a)
    }
}

pub fn generate_anchors(height: usize, width: usize, stride: usize, scales: &[f64], ratios: &[f64]) -> Result<AnchorGrid> {
    if scales.is_empty() || ratios.is_empty() {
        return Err(GlaError::Invalid("anchor scales and ratios must be nonempty".into()));
    }
    if stride == 0 {
        return Err(GlaError::Invalid("anchor stride must be at least 1".into()));
    }
    if scales.iter().chain(ratios).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(GlaError::Invalid("anchor scales and ratios must be positive".into()));
    }
    let mut anchors = Vec::with_capacity(height * width * scales.len() * ratios.len());
    for i in 0..height {
        for j in 0..width {
            let cx = (j as f64 + 0.5) * stride as f64;
            let cy = (i as f64 + 0.5) * stride as f64;
            for &s in scales {
                for &r in ratios {
                    anchors.push(BBox::from_center(cx, cy, s * r.sqrt(), s / r.sqrt()));
                }
            }
        }
    }
    Ok(AnchorGrid {
        anchors,
        height,
        width,
        stride,
        scales: scales.to_vec(),
        ratios: ratios.to_vec(),
    })
}
