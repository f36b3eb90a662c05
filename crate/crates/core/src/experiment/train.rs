use std::fmt::Write as _;
use std::time::Instant;

use gla_tensor::{adam_step, AdamConfig, AdamState, Tensor};
use rand::seq::SliceRandom;

use super::config::ExperimentConfig;
use super::detector::Detector;
use crate::detection::{assign_targets, TargetAssignment};
use crate::domain::Modality;
use crate::error::{GlaError, Result};
use crate::fusion::ModalityBundle;
use crate::nn::{ParamStore, Session};
use crate::sim::{keyed_rng, FrameData};

/// Keyed stream for batch order, disjoint from the simulator's frame streams.
const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub total: f32,
    pub focal: f32,
    pub huber: f32,
    pub positives: usize,
}

pub const LOG_HEADER: &str = "step,total_loss,focal_loss,huber_loss,positives\n";

pub fn format_log(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    for r in rows {
        let _ = writeln!(s, "{},{:.7},{:.7},{:.7},{}", r.step, r.total, r.focal, r.huber, r.positives);
    }
    s
}

pub struct TrainOutcome {
    pub detector: Detector,
    pub store: ParamStore<f32>,
    pub log: Vec<LogRow>,
    /// Wall-clock milliseconds per step; kept apart from the deterministic log.
    pub step_millis: Vec<f64>,
}

/// Stacks frames into one batch.
pub fn bundle_frames(frames: &[&FrameData]) -> Result<ModalityBundle<f32>> {
    let stack = |m: Modality| Tensor::stack(&frames.iter().map(|f| f.get(m)).collect::<Vec<_>>());
    ModalityBundle::new(
        stack(Modality::Camera)?,
        stack(Modality::Gated)?,
        stack(Modality::Lidar)?,
        frames.iter().map(|f| f.info.weather).collect(),
        frames.iter().map(|f| f.info.daytime).collect(),
    )
}

pub fn frame_targets(detector: &Detector, frame: &FrameData) -> TargetAssignment {
    let gts: Vec<_> = frame.ground_truth.iter().map(|g| (g.bbox, g.class_id)).collect();
    let h = &detector.head_config;
    assign_targets(&detector.grid.anchors, &gts, h.pos_iou, h.neg_iou)
}

/// Batch schedule: consecutive shuffled epochs, reshuffled from a keyed stream per epoch.
pub fn batch_schedule(seed: u64, frame_count: usize, batch: usize, steps: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = Vec::new();
    let mut epoch = 0u64;
    let mut batches = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut b = Vec::with_capacity(batch);
        while b.len() < batch {
            if order.is_empty() {
                order = (0..frame_count).rev().collect();
                order.shuffle(&mut keyed_rng(seed, epoch, SHUFFLE_STREAM));
                epoch += 1;
            }
            b.push(order.pop().expect("refilled above"));
        }
        batches.push(b);
    }
    batches
}

/// Trains a freshly initialized detector on `frames` for `config.train.steps` Adam steps.
pub fn train(
    config: &ExperimentConfig,
    frames: &[FrameData],
    mut on_step: impl FnMut(&LogRow),
) -> Result<TrainOutcome> {
    let (detector, mut store) = super::checkpoint::build(config)?;
    let t = &config.train;
    if frames.is_empty() && t.steps > 0 {
        return Err(GlaError::Dataset("no training frames".into()));
    }
    let targets: Vec<TargetAssignment> = frames.iter().map(|f| frame_targets(&detector, f)).collect();
    let adam = AdamConfig {
        lr: t.lr,
        beta1: t.beta1,
        beta2: t.beta2,
        eps: t.eps,
    };
    let mut state = AdamState::new(store.params().iter().map(|p| &p.value));
    let mut log = Vec::with_capacity(t.steps);
    let mut step_millis = Vec::with_capacity(t.steps);
    for (step, batch) in batch_schedule(config.seed, frames.len(), t.batch_size, t.steps)
        .into_iter()
        .enumerate()
    {
        let start = Instant::now();
        let refs: Vec<&FrameData> = batch.iter().map(|&i| &frames[i]).collect();
        let bundle = bundle_frames(&refs)?;
        let batch_targets: Vec<&TargetAssignment> = batch.iter().map(|&i| &targets[i]).collect();
        let (row, grads) = {
            let mut s = Session::new(&mut store, true);
            let out = detector.forward(&mut s, &bundle)?;
            let loss = detector.loss(&mut s, &out, &batch_targets)?;
            let row = LogRow {
                step,
                total: s.graph.value(loss.total).item(),
                focal: s.graph.value(loss.focal).item(),
                huber: s.graph.value(loss.huber).item(),
                positives: batch_targets.iter().map(|a| a.num_positive()).sum(),
            };
            if !row.total.is_finite() {
                return Err(GlaError::NonFiniteLoss {
                    step,
                    frames: refs.iter().map(|f| f.info.index).collect(),
                    detail: format!("focal {} huber {}", row.focal, row.huber),
                });
            }
            let mut g = s.graph.backward(loss.total)?;
            (row, s.param_grads(&mut g))
        };
        let mut params: Vec<&mut Tensor<f32>> = store.params_mut().iter_mut().map(|p| &mut p.value).collect();
        let grad_refs: Vec<Option<&Tensor<f32>>> = grads.iter().map(|g| g.as_ref()).collect();
        adam_step(&mut params, &grad_refs, &mut state, &adam)?;
        on_step(&row);
        log.push(row);
        step_millis.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(TrainOutcome {
        detector,
        store,
        log,
        step_millis,
    })
}
