use super::boxes::{iou, BBox};

pub const MAX_LOG_SCALE: f64 = 6.907_755_278_982_137; // ln(1000)

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorLabel {
    Positive { class_id: usize, gt: usize },
    Negative,
    Ignore,
}

/// A positive anchor with its matched ground truth and regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveTarget {
    pub anchor: usize,
    pub class_id: usize,
    pub gt: usize,
    pub deltas: [f64; 4],
}

/// Sparse labelling of an anchor grid: anchors that are neither positive nor ignored are negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAssignment {
    pub anchor_count: usize,
    /// Sorted by anchor index.
    pub positives: Vec<PositiveTarget>,
    /// Anchors in the ignore band, sorted.
    pub ignored: Vec<usize>,
}

impl TargetAssignment {
    pub fn num_positive(&self) -> usize {
        self.positives.len()
    }

    pub fn label(&self, anchor: usize) -> AnchorLabel {
        if let Ok(i) = self.positives.binary_search_by_key(&anchor, |p| p.anchor) {
            let p = &self.positives[i];
            AnchorLabel::Positive {
                class_id: p.class_id,
                gt: p.gt,
            }
        } else if self.ignored.binary_search(&anchor).is_ok() {
            AnchorLabel::Ignore
        } else {
            AnchorLabel::Negative
        }
    }

    /// Dense per-anchor labels.
    pub fn labels(&self) -> Vec<AnchorLabel> {
        let mut labels = vec![AnchorLabel::Negative; self.anchor_count];
        for &a in &self.ignored {
            labels[a] = AnchorLabel::Ignore;
        }
        for p in &self.positives {
            labels[p.anchor] = AnchorLabel::Positive {
                class_id: p.class_id,
                gt: p.gt,
            };
        }
        labels
    }

    pub fn deltas(&self, anchor: usize) -> Option<[f64; 4]> {
        self.positives
            .binary_search_by_key(&anchor, |p| p.anchor)
            .ok()
            .map(|i| self.positives[i].deltas)
    }
}

pub fn encode(anchor: &BBox, gt: &BBox) -> [f64; 4] {
    let (ax, ay) = anchor.center();
    let (gx, gy) = gt.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    [
        (gx - ax) / aw,
        (gy - ay) / ah,
        (gt.width() / aw).ln(),
        (gt.height() / ah).ln(),
    ]
}

pub fn decode(anchor: &BBox, deltas: [f64; 4]) -> BBox {
    let (ax, ay) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    let [tx, ty, tw, th] = deltas;
    BBox::from_center(
        ax + tx * aw,
        ay + ty * ah,
        aw * tw.min(MAX_LOG_SCALE).exp(),
        ah * th.min(MAX_LOG_SCALE).exp(),
    )
}

pub fn decode_boxes(anchors: &[BBox], deltas: &[[f64; 4]]) -> Vec<BBox> {
    anchors.iter().zip(deltas).map(|(a, &d)| decode(a, d)).collect()
}

/// Labels every anchor against `gts` (box, class). Each gt's best anchor is forced
/// positive so no reachable object goes unmatched.
pub fn assign_targets(anchors: &[BBox], gts: &[(BBox, usize)], pos_thr: f64, neg_thr: f64) -> TargetAssignment {
    let mut best_iou = vec![0.0f64; anchors.len()];
    let mut best_gt = vec![usize::MAX; anchors.len()];
    let mut gt_best = vec![(0.0f64, usize::MAX); gts.len()];
    for (a, anchor) in anchors.iter().enumerate() {
        // Cheap reject before the IoU: most anchors are far from every object.
        for (g, (gt, _)) in gts.iter().enumerate() {
            if anchor.x2 <= gt.x1 || gt.x2 <= anchor.x1 || anchor.y2 <= gt.y1 || gt.y2 <= anchor.y1 {
                continue;
            }
            let v = iou(anchor, gt);
            if v > best_iou[a] {
                best_iou[a] = v;
                best_gt[a] = g;
            }
            if v > gt_best[g].0 {
                gt_best[g] = (v, a);
            }
        }
    }
    let mut forced: Vec<(usize, usize)> = gt_best
        .iter()
        .enumerate()
        .filter(|(_, &(v, _))| v > 0.0)
        .map(|(g, &(_, a))| (a, g))
        .collect();
    // a later gt claiming the same anchor wins, as with in-order overwrites
    forced.sort_by_key(|&(a, _)| a);
    let forced_gt = |a: usize| forced.iter().rev().find(|&&(fa, _)| fa == a).map(|&(_, g)| g);
    let mut positives = Vec::new();
    let mut ignored = Vec::new();
    for (a, anchor) in anchors.iter().enumerate() {
        let gt = if forced.binary_search_by_key(&a, |&(fa, _)| fa).is_ok() {
            forced_gt(a)
        } else if best_iou[a] >= pos_thr {
            Some(best_gt[a])
        } else {
            if best_iou[a] >= neg_thr {
                ignored.push(a);
            }
            None
        };
        if let Some(g) = gt {
            positives.push(PositiveTarget {
                anchor: a,
                class_id: gts[g].1,
                gt: g,
                deltas: encode(anchor, &gts[g].0),
            });
        }
    }
    TargetAssignment {
        anchor_count: anchors.len(),
        positives,
        ignored,
    }
}
