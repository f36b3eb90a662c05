use gla_tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::params::{SimConfig, WeatherParams, GATES, MAX_DISTANCE};
use super::rng::{keyed_rng, purpose};
use super::scene::SceneObject;
use crate::detection::GroundTruth;
use crate::domain::{Daytime, Modality};

const CAMERA_COLORS: [[f64; 3]; 4] = [[0.9, 0.15, 0.15], [0.15, 0.85, 0.2], [0.15, 0.25, 0.9], [0.9, 0.85, 0.1]];
const CAMERA_NIGHT_SCALE: f64 = 0.35;
const SKY_DAY: [f64; 3] = [0.55, 0.65, 0.8];
const ROAD_DAY: [f64; 3] = [0.4, 0.4, 0.42];
const SKY_NIGHT: [f64; 3] = [0.03, 0.03, 0.06];
const ROAD_NIGHT: [f64; 3] = [0.06, 0.06, 0.07];
const GATED_BACKGROUND: f64 = 0.04;
/// Lidar height channel code per class.
const LIDAR_CLASS_CODE: [f64; 4] = [0.5, 0.8, 1.0, 0.65];

/// Three `[3, H, W]` sensor images plus the frame's ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    pub camera: Tensor<f32>,
    pub gated: Tensor<f32>,
    pub lidar: Tensor<f32>,
    pub ground_truth: Vec<GroundTruth>,
}

impl RenderedFrame {
    pub fn get(&self, m: Modality) -> &Tensor<f32> {
        match m {
            Modality::Camera => &self.camera,
            Modality::Gated => &self.gated,
            Modality::Lidar => &self.lidar,
        }
    }
}

/// Noise-free background value of a sensor at a pixel row.
pub fn background(config: &SimConfig, modality: Modality, daytime: Daytime, row: usize) -> [f64; 3] {
    match modality {
        Modality::Camera => {
            let sky = (row as f64) < config.horizon_row;
            match (daytime, sky) {
                (Daytime::Day, true) => SKY_DAY,
                (Daytime::Day, false) => ROAD_DAY,
                (Daytime::Night, true) => SKY_NIGHT,
                (Daytime::Night, false) => ROAD_NIGHT,
            }
        }
        Modality::Gated => [GATED_BACKGROUND; 3],
        Modality::Lidar => [0.0; 3],
    }
}

/// Unattenuated object signature of a sensor.
pub fn object_signal(modality: Modality, daytime: Daytime, object: &SceneObject) -> [f64; 3] {
    match modality {
        Modality::Camera => {
            let c = CAMERA_COLORS[object.class_id];
            match daytime {
                Daytime::Day => c,
                Daytime::Night => c.map(|v| v * CAMERA_NIGHT_SCALE),
            }
        }
        Modality::Gated => GATES.map(|(near, far)| {
            if (near..far).contains(&object.distance) || (far == MAX_DISTANCE && object.distance == far) {
                0.25 + 0.75 * object.reflectivity
            } else {
                GATED_BACKGROUND
            }
        }),
        Modality::Lidar => [
            1.0 - object.distance / MAX_DISTANCE,
            LIDAR_CLASS_CODE[object.class_id],
            object.reflectivity,
        ],
    }
}

/// Whether pixel `(row, col)` shows the unoccluded part of `object`.
pub fn covers(object: &SceneObject, row: usize, col: usize) -> bool {
    let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
    let b = object.bbox;
    if !(b.x1 <= x && x < b.x2 && b.y1 <= y && y < b.y2) {
        return false;
    }
    let strip = object.occlusion * b.width();
    if object.occluded_left {
        x >= b.x1 + strip
    } else {
        x < b.x2 - strip
    }
}

fn render_one(
    config: &SimConfig,
    scene: &[SceneObject],
    weather: &WeatherParams,
    modality: Modality,
    daytime: Daytime,
    seed: u64,
    frame: u64,
) -> Tensor<f32> {
    let (h, w) = (config.height, config.width);
    let plane = h * w;
    let mut img = vec![0.0f64; 3 * plane];
    for y in 0..h {
        let bg = background(config, modality, daytime, y);
        for x in 0..w {
            for c in 0..3 {
                img[c * plane + y * w + x] = bg[c];
            }
        }
    }
    // Painter's order: far objects first.
    let mut order: Vec<&SceneObject> = scene.iter().collect();
    order.sort_by(|a, b| b.distance.total_cmp(&a.distance));
    for obj in order {
        let a = weather.attenuation(modality, daytime, obj.distance);
        let signal = object_signal(modality, daytime, obj);
        let b = obj.bbox;
        let (y0, y1) = (b.y1.floor().max(0.0) as usize, (b.y2.ceil() as usize).min(h));
        let (x0, x1) = (b.x1.floor().max(0.0) as usize, (b.x2.ceil() as usize).min(w));
        for y in y0..y1 {
            let bg = background(config, modality, daytime, y);
            for x in x0..x1 {
                if covers(obj, y, x) {
                    for c in 0..3 {
                        img[c * plane + y * w + x] = bg[c] + a * (signal[c] - bg[c]);
                    }
                }
            }
        }
    }
    if modality == Modality::Lidar && weather.clutter_rate > 0.0 {
        let mut rng = keyed_rng(seed, frame, purpose::CLUTTER);
        for p in 0..plane {
            if rng.gen::<f64>() < weather.clutter_rate {
                img[p] = rng.gen_range(0.6..1.0);
                img[plane + p] = rng.gen_range(0.0..1.0);
                img[2 * plane + p] = rng.gen_range(0.0..0.5);
            }
        }
    }
    if config.noise_sigma > 0.0 {
        let stream = purpose::NOISE + Modality::ALL.iter().position(|&m| m == modality).expect("modality") as u64;
        let mut rng = keyed_rng(seed, frame, stream);
        let normal = Normal::new(0.0, config.noise_sigma).expect("finite sigma");
        img.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    Tensor::new(vec![3, h, w], img.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect())
        .expect("shape matches data")
}

/// Renders every sensor for a scene; ground truth lists all objects regardless of visibility.
pub fn render_modalities(
    config: &SimConfig,
    scene: &[SceneObject],
    weather: &WeatherParams,
    daytime: Daytime,
    seed: u64,
    frame: u64,
) -> RenderedFrame {
    let render = |m| render_one(config, scene, weather, m, daytime, seed, frame);
    RenderedFrame {
        camera: render(Modality::Camera),
        gated: render(Modality::Gated),
        lidar: render(Modality::Lidar),
        ground_truth: scene
            .iter()
            .map(|o| GroundTruth {
                class_id: o.class_id,
                difficulty: o.difficulty(),
                bbox: o.bbox,
            })
            .collect(),
    }
}
