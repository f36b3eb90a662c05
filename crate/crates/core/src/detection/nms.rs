use super::boxes::{iou, BBox};
use crate::error::{GlaError, Result};

/// Indices of `boxes` in descending score order, ties by lower index.
pub fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Greedy suppression within each class; returns kept indices in descending score order.
pub fn nms(boxes: &[BBox], scores: &[f64], classes: &[usize], iou_thr: f64) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() || boxes.len() != classes.len() {
        return Err(GlaError::Invalid(format!(
            "nms: {} boxes, {} scores, {} classes",
            boxes.len(),
            scores.len(),
            classes.len()
        )));
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in score_order(scores) {
        let suppressed = kept
            .iter()
            .any(|&k| classes[k] == classes[i] && iou(&boxes[k], &boxes[i]) > iou_thr);
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}
