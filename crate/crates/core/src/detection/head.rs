use gla_tensor::kernels::sigmoid;
use gla_tensor::{Real, Tensor, Var};
use rand::Rng;

use super::anchors::AnchorGrid;
use super::assign::{decode, TargetAssignment};
use super::boxes::{BBox, Detection};
use super::nms::{nms, score_order};
use crate::error::{GlaError, Result};
use crate::nn::{Conv, ConvSpec, ParamStore, Session};

/// Anchor, loss and post-processing settings of the detection head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub scales: Vec<f64>,
    pub ratios: Vec<f64>,
    pub stride: usize,
    pub pos_iou: f64,
    pub neg_iou: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub huber_delta: f64,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub pre_nms_topk: usize,
    pub topk: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            scales: vec![8.0, 16.0, 32.0],
            ratios: vec![0.5, 1.0, 2.0],
            stride: 1,
            pos_iou: 0.5,
            neg_iou: 0.4,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            huber_delta: 1.0,
            score_threshold: 0.05,
            nms_iou: 0.7,
            pre_nms_topk: 1000,
            topk: 100,
        }
    }
}

impl HeadConfig {
    pub fn anchors_per_cell(&self) -> usize {
        self.scales.len() * self.ratios.len()
    }
}

/// Class logits `[N, A*K, H, W]` (channel `a*K + k`) and deltas `[N, A*4, H, W]` (channel `a*4 + d`).
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub logits: Var,
    pub deltas: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadLoss {
    pub total: Var,
    pub focal: Var,
    pub huber: Var,
}

#[derive(Debug, Clone)]
pub struct DetectionHead {
    pub num_classes: usize,
    pub anchors_per_cell: usize,
    trunk: Conv,
    cls: Conv,
    reg: Conv,
}

/// Focal loss starts every anchor at foreground probability 0.01.
const PRIOR_PROBABILITY: f64 = 0.01;

impl DetectionHead {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        channels: usize,
        num_classes: usize,
        anchors_per_cell: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let trunk = Conv::new(
            store,
            "head.trunk",
            ConvSpec {
                in_channels: channels,
                out_channels: channels,
                kernel: 3,
                bias: true,
            },
            rng,
        );
        let prior_bias = -((1.0 - PRIOR_PROBABILITY) / PRIOR_PROBABILITY).ln();
        let cls = Conv::with_init(
            store,
            "head.cls",
            ConvSpec {
                in_channels: channels,
                out_channels: anchors_per_cell * num_classes,
                kernel: 1,
                bias: true,
            },
            0.01,
            prior_bias,
            rng,
        );
        let reg = Conv::with_init(
            store,
            "head.reg",
            ConvSpec {
                in_channels: channels,
                out_channels: anchors_per_cell * 4,
                kernel: 1,
                bias: true,
            },
            0.01,
            0.0,
            rng,
        );
        Self {
            num_classes,
            anchors_per_cell,
            trunk,
            cls,
            reg,
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, features: Var) -> Result<HeadOutput> {
        let t = self.trunk.forward(s, features)?;
        let t = s.graph.relu(t)?;
        Ok(HeadOutput {
            logits: self.cls.forward(s, t)?,
            deltas: self.reg.forward(s, t)?,
        })
    }

    /// Focal loss over all non-ignored anchors plus Huber loss over positive deltas,
    /// both normalized by the batch's positive count (at least one).
    pub fn loss<T: Real>(
        &self,
        s: &mut Session<'_, T>,
        out: HeadOutput,
        grid: &AnchorGrid,
        targets: &[&TargetAssignment],
        config: &HeadConfig,
    ) -> Result<HeadLoss> {
        let (n, _, h, w) = s.graph.value(out.logits).dims4("head loss")?;
        if targets.len() != n || h != grid.height || w != grid.width || grid.per_cell() != self.anchors_per_cell {
            return Err(GlaError::Invalid(format!(
                "head loss: {} assignments for batch {n}, grid {}x{} vs features {h}x{w}",
                targets.len(),
                grid.height,
                grid.width
            )));
        }
        let (a_count, k_count) = (self.anchors_per_cell, self.num_classes);
        let plane = h * w;
        let cls_len = n * a_count * k_count * plane;
        let reg_len = n * a_count * 4 * plane;
        let mut cls_t = vec![T::zero(); cls_len];
        let mut cls_w = vec![T::one(); cls_len];
        let mut reg_t = vec![T::zero(); reg_len];
        let mut reg_w = vec![T::zero(); reg_len];
        let mut positives = 0usize;
        for (b, assignment) in targets.iter().enumerate() {
            if assignment.anchor_count != grid.len() {
                return Err(GlaError::Invalid("assignment does not cover the anchor grid".into()));
            }
            let slot = |index: usize| {
                let (i, j, a) = grid.locate(index);
                (b * a_count + a, i * w + j)
            };
            for &index in &assignment.ignored {
                let (ba, pix) = slot(index);
                (0..k_count).for_each(|k| cls_w[(ba * k_count + k) * plane + pix] = T::zero());
            }
            for p in &assignment.positives {
                positives += 1;
                let (ba, pix) = slot(p.anchor);
                cls_t[(ba * k_count + p.class_id) * plane + pix] = T::one();
                for (d, &v) in p.deltas.iter().enumerate() {
                    reg_t[(ba * 4 + d) * plane + pix] = T::of(v);
                    reg_w[(ba * 4 + d) * plane + pix] = T::one();
                }
            }
        }
        let normalizer = T::of(positives.max(1) as f64);
        let focal = s.graph.sigmoid_focal_loss(
            out.logits,
            &cls_t,
            &cls_w,
            T::of(config.focal_alpha),
            T::of(config.focal_gamma),
            normalizer,
        )?;
        let huber = s
            .graph
            .huber_loss(out.deltas, &reg_t, &reg_w, T::of(config.huber_delta), normalizer)?;
        let total = s.graph.add(focal, huber)?;
        Ok(HeadLoss { total, focal, huber })
    }
}

/// Turns raw head outputs for one batch into per-frame detections: sigmoid scores,
/// score threshold, decode, clip, pre-NMS cap, per-class NMS, top-k.
pub fn detect<T: Real>(
    logits: &Tensor<T>,
    deltas: &Tensor<T>,
    grid: &AnchorGrid,
    frames: &[usize],
    image: (usize, usize),
    config: &HeadConfig,
) -> Result<Vec<Vec<Detection>>> {
    let (n, ak, h, w) = logits.dims4("detect")?;
    let a_count = grid.per_cell();
    if a_count == 0 || ak % a_count != 0 || frames.len() != n || deltas.shape() != [n, a_count * 4, h, w] {
        return Err(GlaError::Invalid(format!(
            "detect: logits {:?}, deltas {:?}, {} anchors per cell, {} frame ids",
            logits.shape(),
            deltas.shape(),
            a_count,
            frames.len()
        )));
    }
    let k_count = ak / a_count;
    let (img_h, img_w) = (image.0 as f64, image.1 as f64);
    let mut out = Vec::with_capacity(n);
    for (b, &frame) in frames.iter().enumerate() {
        let mut boxes: Vec<BBox> = Vec::new();
        let mut scores = Vec::new();
        let mut classes = Vec::new();
        for index in 0..grid.len() {
            let (i, j, a) = grid.locate(index);
            let mut decoded: Option<BBox> = None;
            for k in 0..k_count {
                let score = sigmoid(logits.at4(b, a * k_count + k, i, j).as_f64());
                if score <= config.score_threshold {
                    continue;
                }
                let bbox = *decoded.get_or_insert_with(|| {
                    let d = [0, 1, 2, 3].map(|c| deltas.at4(b, a * 4 + c, i, j).as_f64());
                    decode(&grid.anchors[index], d).clip(img_w, img_h)
                });
                if !bbox.is_valid() {
                    continue;
                }
                boxes.push(bbox);
                scores.push(score);
                classes.push(k);
            }
        }
        let mut order = score_order(&scores);
        order.truncate(config.pre_nms_topk);
        let boxes: Vec<BBox> = order.iter().map(|&i| boxes[i]).collect();
        let scores: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        let classes: Vec<usize> = order.iter().map(|&i| classes[i]).collect();
        let mut kept = nms(&boxes, &scores, &classes, config.nms_iou)?;
        kept.truncate(config.topk);
        out.push(
            kept.into_iter()
                .map(|i| Detection {
                    frame,
                    class_id: classes[i],
                    score: scores[i],
                    bbox: boxes[i],
                })
                .collect(),
        );
    }
    Ok(out)
}
