use std::fs;
use std::path::{Path, PathBuf};

use gla_tensor::kernels::partition_bounds;
use gla_tensor::Real;

use super::detector::Detector;
use super::run::infer_batch;
use crate::detection::GroundTruth;
use crate::domain::Modality;
use crate::error::{GlaError, Result};
use crate::fusion::heatmap::{channel_mean, export_attention_heatmap};
use crate::fusion::AttentionRecord;
use crate::nn::ParamStore;
use crate::sim::FrameData;

pub fn heatmap_file(stage: &str, m: Modality, frame: usize) -> String {
    format!("attn_{stage}_{m}_{frame}.ppm")
}

/// Writes local and global heatmaps per modality for each frame.
pub fn export_attention(
    detector: &Detector,
    store: &mut ParamStore<f32>,
    frames: &[FrameData],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| GlaError::io(out, e))?;
    let mut written = Vec::new();
    let rows = detector.fusion.config.partition_rows;
    let block = (detector.image.0 / rows).max(1);
    for frame in frames {
        let (_, record) = infer_batch(detector, store, &[frame])?;
        for &m in &record.modalities {
            for (stage, weights, block) in [("local", record.local(m), 1), ("global", record.global(m), block)] {
                let Some(w) = weights else {
                    log::warn!("variant has no {stage} attention for {m}; no heatmap written");
                    continue;
                };
                let path = out.join(heatmap_file(stage, m, frame.info.index));
                export_attention_heatmap(&w.slab(0)?, block, &path)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Mean global weight per modality over the partitions that overlap a ground-truth box.
pub fn object_partition_weights<T: Real>(
    record: &AttentionRecord<T>,
    ground_truth: &[GroundTruth],
    image: (usize, usize),
) -> Result<Vec<(Modality, f64)>> {
    let mut out = Vec::new();
    for &m in &record.modalities {
        let Some(w) = record.global(m) else { continue };
        let (rows, cols, mean) = channel_mean(&w.slab(0)?)?;
        let ys = partition_bounds(image.0, rows);
        let xs = partition_bounds(image.1, cols);
        let mut acc = (0.0, 0usize);
        for r in 0..rows {
            for c in 0..cols {
                let hit = ground_truth.iter().any(|g| {
                    let b = g.bbox;
                    b.x1 < xs[c + 1] as f64 && b.x2 > xs[c] as f64 && b.y1 < ys[r + 1] as f64 && b.y2 > ys[r] as f64
                });
                if hit {
                    acc.0 += mean[r * cols + c];
                    acc.1 += 1;
                }
            }
        }
        if acc.1 > 0 {
            out.push((m, acc.0 / acc.1 as f64));
        }
    }
    Ok(out)
}
