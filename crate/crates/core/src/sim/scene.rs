use rand::Rng;

use super::params::{SimConfig, CLASS_SIZE, MAX_DISTANCE, MIN_DISTANCE};
use super::rng::{keyed_rng, purpose};
use crate::detection::BBox;
use crate::domain::Difficulty;

/// Minimum rendered object height in pixels.
pub const MIN_HEIGHT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub class_id: usize,
    pub distance: f64,
    pub bbox: BBox,
    pub occlusion: f64,
    pub reflectivity: f64,
    /// Whether the occluded strip covers the left (true) or right side of the box.
    pub occluded_left: bool,
}

pub fn difficulty_of(height: f64, occlusion: f64) -> Difficulty {
    if height >= 40.0 && occlusion <= 0.15 {
        Difficulty::Easy
    } else if height >= 25.0 && occlusion <= 0.5 {
        Difficulty::Moderate
    } else {
        Difficulty::Hard
    }
}

impl SceneObject {
    pub fn difficulty(&self) -> Difficulty {
        difficulty_of(self.bbox.height(), self.occlusion)
    }
}

fn sample_class(prior: &[f64; 4], u: f64) -> usize {
    let mut acc = 0.0;
    for (class, &p) in prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return class;
        }
    }
    prior.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// One object drawn from its own keyed stream.
pub fn sample_object(config: &SimConfig, seed: u64, frame: u64, object: u64) -> SceneObject {
    let mut rng = keyed_rng(seed, frame, purpose::OBJECT + object);
    let class_id = sample_class(&config.class_prior, rng.gen::<f64>());
    let u: f64 = rng.gen();
    let distance = MIN_DISTANCE + (MAX_DISTANCE - MIN_DISTANCE) * u * u;
    let (h_m, w_m) = CLASS_SIZE[class_id];
    let (img_h, img_w) = (config.height as f64, config.width as f64);
    let height = (config.focal_px * h_m / distance).max(MIN_HEIGHT);
    let width = (config.focal_px * w_m / distance).max(2.0);
    let bottom = (config.horizon_row + (img_h - config.horizon_row) * MIN_DISTANCE / distance).min(img_h);
    let cx = rng.gen_range(0.0..img_w);
    let bbox = BBox::new(cx - width / 2.0, bottom - height, cx + width / 2.0, bottom).clip(img_w, img_h);
    // Keep at least a sliver on screen for objects centered at the border.
    let bbox = BBox::new(bbox.x1.min(img_w - 1.0), bbox.y1, bbox.x2.max(bbox.x1.min(img_w - 1.0) + 1.0), bbox.y2);
    let o: f64 = rng.gen();
    SceneObject {
        class_id,
        distance,
        bbox,
        occlusion: o * o,
        reflectivity: rng.gen_range(0.3..=1.0),
        occluded_left: rng.gen(),
    }
}

/// Objects of one frame; `count` overrides the sampled object count.
pub fn sample_scene(config: &SimConfig, seed: u64, frame: u64, count: Option<usize>) -> Vec<SceneObject> {
    let n = count.unwrap_or_else(|| {
        keyed_rng(seed, frame, purpose::OBJECT_COUNT).gen_range(config.min_objects..=config.max_objects)
    });
    (0..n as u64).map(|o| sample_object(config, seed, frame, o)).collect()
}
