use std::fs;
use std::path::Path;

use super::detector::Detector;
use super::train::bundle_frames;
use crate::detection::{detect, io as det_io, Detection};
use crate::error::{GlaError, Result};
use crate::eval::{evaluate, results_table, score_frames, EvalReport, EvalSpec, FrameTruth, Level, TableRun};
use crate::fusion::AttentionRecord;
use crate::nn::{ParamStore, Session};
use crate::sim::FrameData;

/// Frames per inference batch; eval-mode outputs do not depend on batch composition.
pub const EVAL_BATCH: usize = 8;

pub fn infer_batch(
    detector: &Detector,
    store: &mut ParamStore<f32>,
    frames: &[&FrameData],
) -> Result<(Vec<Vec<Detection>>, AttentionRecord<f32>)> {
    let bundle = bundle_frames(frames)?;
    let mut s = Session::new(store, false);
    let out = detector.forward(&mut s, &bundle)?;
    let (logits, deltas) = detector.logits(&s, &out);
    let ids: Vec<usize> = frames.iter().map(|f| f.info.index).collect();
    let dets = detect(logits, deltas, &detector.grid, &ids, detector.image, &detector.head_config)?;
    let record = AttentionRecord::capture(&s.graph, &detector.fusion.modalities, &out.fusion);
    Ok((dets, record))
}

pub fn run_detector(detector: &Detector, store: &mut ParamStore<f32>, frames: &[FrameData]) -> Result<Vec<Detection>> {
    let mut all = Vec::new();
    for chunk in frames.chunks(EVAL_BATCH) {
        let refs: Vec<&FrameData> = chunk.iter().collect();
        let (dets, _) = infer_batch(detector, store, &refs)?;
        all.extend(dets.into_iter().flatten());
    }
    Ok(all)
}

pub fn truths(frames: &[FrameData]) -> Vec<FrameTruth> {
    frames
        .iter()
        .map(|f| FrameTruth {
            info: f.info,
            ground_truth: f.ground_truth.clone(),
        })
        .collect()
}

/// Overall-difficulty mAP pooled over the fog and snow frames.
pub fn adverse_map(dets: &[Detection], truths: &[FrameTruth], spec: &EvalSpec) -> Option<f64> {
    let adverse: Vec<&FrameTruth> = truths.iter().filter(|t| t.info.weather.is_adverse()).collect();
    score_frames(dets, &adverse, Level::Overall, spec).map
}

/// Writes `detections.txt`, `results.txt` and `results.csv` for one run.
pub fn write_eval(dir: &Path, label: &str, dets: &[Detection], truths: &[FrameTruth], spec: &EvalSpec) -> Result<EvalReport> {
    fs::create_dir_all(dir).map_err(|e| GlaError::io(dir, e))?;
    det_io::write_detections(&dir.join("detections.txt"), dets)?;
    let report = evaluate(dets, truths, spec)?;
    let table = results_table(&[TableRun {
        label: label.to_string(),
        report: Ok(report.clone()),
        dataset_hash: None,
    }]);
    write_table(dir, &table.text, &table.csv)?;
    Ok(report)
}

pub fn write_table(dir: &Path, text: &str, csv: &str) -> Result<()> {
    for (file, body) in [("results.txt", text), ("results.csv", csv)] {
        let path = dir.join(file);
        fs::write(&path, body).map_err(|e| GlaError::io(&path, e))?;
    }
    Ok(())
}
