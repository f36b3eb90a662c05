/// Ranked precision/recall points of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` after each ranked non-ignored detection.
    pub points: Vec<(f64, f64)>,
    pub num_gt: usize,
}

impl PrCurve {
    /// Curve from ranked true/false positive flags.
    pub fn from_ranked(is_tp: &[bool], num_gt: usize) -> Self {
        let mut tp = 0usize;
        let points = is_tp
            .iter()
            .enumerate()
            .map(|(i, &hit)| {
                tp += hit as usize;
                let recall = if num_gt == 0 { 0.0 } else { tp as f64 / num_gt as f64 };
                (recall, tp as f64 / (i + 1) as f64)
            })
            .collect();
        Self { points, num_gt }
    }
}

/// All-point interpolated average precision.
pub fn voc_ap(curve: &PrCurve) -> f64 {
    if curve.num_gt == 0 {
        if !curve.points.is_empty() {
            log::warn!("average precision requested for a class without ground truth; reporting 0");
        }
        return 0.0;
    }
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    for &(r, p) in &curve.points {
        recall.push(r);
        precision.push(p);
    }
    recall.push(1.0);
    precision.push(0.0);
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len())
        .map(|i| (recall[i] - recall[i - 1]) * precision[i])
        .sum()
}
