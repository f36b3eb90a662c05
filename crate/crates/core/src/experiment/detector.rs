use gla_tensor::{Real, Tensor};
use rand::Rng;

use crate::detection::{generate_anchors, AnchorGrid, DetectionHead, HeadConfig, HeadLoss, HeadOutput, TargetAssignment};
use crate::domain::NUM_CLASSES;
use crate::error::Result;
use crate::fusion::{FusionOutput, GlaModel, ModalityBundle, ModelConfig};
use crate::nn::{ParamStore, Session};

/// Fusion network plus detection head over a fixed image size.
#[derive(Debug, Clone)]
pub struct Detector {
    pub fusion: GlaModel,
    pub head: DetectionHead,
    pub head_config: HeadConfig,
    pub grid: AnchorGrid,
    pub image: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct DetectorOutput {
    pub fusion: FusionOutput,
    pub head: HeadOutput,
}

impl Detector {
    pub fn new<T: Real>(
        model: ModelConfig,
        head_config: HeadConfig,
        image: (usize, usize),
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fusion = GlaModel::new(model, store, rng)?;
        let head = DetectionHead::new(store, model.channels, NUM_CLASSES, head_config.anchors_per_cell(), rng);
        let stride = head_config.stride;
        let grid = generate_anchors(
            image.0.div_ceil(stride),
            image.1.div_ceil(stride),
            stride,
            &head_config.scales,
            &head_config.ratios,
        )?;
        Ok(Self {
            fusion,
            head,
            head_config,
            grid,
            image,
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, bundle: &ModalityBundle<T>) -> Result<DetectorOutput> {
        let fusion = self.fusion.forward_bundle(s, bundle)?;
        let head = self.head.forward(s, fusion.f2)?;
        Ok(DetectorOutput { fusion, head })
    }

    pub fn loss<T: Real>(
        &self,
        s: &mut Session<'_, T>,
        out: &DetectorOutput,
        targets: &[&TargetAssignment],
    ) -> Result<HeadLoss> {
        self.head.loss(s, out.head, &self.grid, targets, &self.head_config)
    }

    pub fn logits<'g, T: Real>(&self, s: &'g Session<'_, T>, out: &DetectorOutput) -> (&'g Tensor<T>, &'g Tensor<T>) {
        (s.graph.value(out.head.logits), s.graph.value(out.head.deltas))
    }
}
