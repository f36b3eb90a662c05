//! Flat `key = value` experiment configuration with a closed schema.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::detection::HeadConfig;
use crate::domain::{Weather, CLASS_NAMES};
use crate::error::{GlaError, Result};
use crate::eval::EvalSpec;
use crate::fusion::ModelConfig;
use crate::sim::DatasetSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            batch_size: 2,
            steps: 2000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DatasetSpec,
    pub model: ModelConfig,
    pub head: HeadConfig,
    pub train: TrainConfig,
    pub eval: EvalSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            data: DatasetSpec::default(),
            model: ModelConfig::default(),
            head: HeadConfig::default(),
            train: TrainConfig::default(),
            eval: EvalSpec::default(),
        }
    }
}

/// Every accepted key, in serialization order.
pub const KEYS: &[&str] = &[
    "seed",
    "data.seed",
    "data.frames_per_cell",
    "data.test_fraction",
    "data.height",
    "data.width",
    "data.min_objects",
    "data.max_objects",
    "data.noise_sigma",
    "data.night_gain",
    "data.visibility.clear",
    "data.visibility.light_fog",
    "data.visibility.dense_fog",
    "data.visibility.snow",
    "data.clutter.clear",
    "data.clutter.light_fog",
    "data.clutter.dense_fog",
    "data.clutter.snow",
    "model.in_channels",
    "model.channels",
    "model.partition_rows",
    "model.partition_cols",
    "model.fusion_mode",
    "model.variant",
    "train.lr",
    "train.batch_size",
    "train.steps",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "head.scales",
    "head.ratios",
    "head.stride",
    "head.pos_iou",
    "head.neg_iou",
    "head.focal_alpha",
    "head.focal_gamma",
    "head.huber_delta",
    "head.score_threshold",
    "head.nms_iou",
    "head.pre_nms_topk",
    "head.topk",
    "eval.iou_threshold",
    "eval.class",
];

fn weather_index(name: &str) -> Option<usize> {
    Weather::ALL.iter().position(|w| w.as_str() == name)
}

fn parse_num<N: std::str::FromStr>(value: &str) -> std::result::Result<N, String>
where
    N::Err: std::fmt::Display,
{
    value.parse().map_err(|e| format!("cannot parse '{value}': {e}"))
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value.split(',').map(|v| parse_num(v.trim())).collect()
}

fn format_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let sim = &mut self.data.sim;
        match key {
            "seed" => self.seed = parse_num(value)?,
            "data.seed" => self.data.seed = parse_num(value)?,
            "data.frames_per_cell" => self.data.frames_per_cell = parse_num(value)?,
            "data.test_fraction" => self.data.test_fraction = parse_num(value)?,
            "data.height" => sim.height = parse_num(value)?,
            "data.width" => sim.width = parse_num(value)?,
            "data.min_objects" => sim.min_objects = parse_num(value)?,
            "data.max_objects" => sim.max_objects = parse_num(value)?,
            "data.noise_sigma" => sim.noise_sigma = parse_num(value)?,
            "data.night_gain" => sim.night_gain = parse_num(value)?,
            "model.in_channels" => self.model.in_channels = parse_num(value)?,
            "model.channels" => self.model.channels = parse_num(value)?,
            "model.partition_rows" => self.model.partition_rows = parse_num(value)?,
            "model.partition_cols" => self.model.partition_cols = parse_num(value)?,
            "model.fusion_mode" => self.model.fusion_mode = value.parse()?,
            "model.variant" => self.model.variant = value.parse()?,
            "train.lr" => self.train.lr = parse_num(value)?,
            "train.batch_size" => self.train.batch_size = parse_num(value)?,
            "train.steps" => self.train.steps = parse_num(value)?,
            "train.beta1" => self.train.beta1 = parse_num(value)?,
            "train.beta2" => self.train.beta2 = parse_num(value)?,
            "train.eps" => self.train.eps = parse_num(value)?,
            "head.scales" => self.head.scales = parse_list(value)?,
            "head.ratios" => self.head.ratios = parse_list(value)?,
            "head.stride" => self.head.stride = parse_num(value)?,
            "head.pos_iou" => self.head.pos_iou = parse_num(value)?,
            "head.neg_iou" => self.head.neg_iou = parse_num(value)?,
            "head.focal_alpha" => self.head.focal_alpha = parse_num(value)?,
            "head.focal_gamma" => self.head.focal_gamma = parse_num(value)?,
            "head.huber_delta" => self.head.huber_delta = parse_num(value)?,
            "head.score_threshold" => self.head.score_threshold = parse_num(value)?,
            "head.nms_iou" => self.head.nms_iou = parse_num(value)?,
            "head.pre_nms_topk" => self.head.pre_nms_topk = parse_num(value)?,
            "head.topk" => self.head.topk = parse_num(value)?,
            "eval.iou_threshold" => self.eval.iou_threshold = parse_num(value)?,
            "eval.class" => {
                self.eval.class_filter = match value {
                    "all" => None,
                    name => Some(
                        CLASS_NAMES
                            .iter()
                            .position(|c| *c == name)
                            .or_else(|| name.parse().ok())
                            .ok_or_else(|| format!("unknown class '{name}'"))?,
                    ),
                }
            }
            k => {
                if let Some(w) = k.strip_prefix("data.visibility.").and_then(weather_index) {
                    sim.visibility[w] = parse_num(value)?;
                } else if let Some(w) = k.strip_prefix("data.clutter.").and_then(weather_index) {
                    sim.clutter_rate[w] = parse_num(value)?;
                } else {
                    return Err(format!("unknown key '{k}'"));
                }
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let sim = &self.data.sim;
        match key {
            "seed" => self.seed.to_string(),
            "data.seed" => self.data.seed.to_string(),
            "data.frames_per_cell" => self.data.frames_per_cell.to_string(),
            "data.test_fraction" => self.data.test_fraction.to_string(),
            "data.height" => sim.height.to_string(),
            "data.width" => sim.width.to_string(),
            "data.min_objects" => sim.min_objects.to_string(),
            "data.max_objects" => sim.max_objects.to_string(),
            "data.noise_sigma" => sim.noise_sigma.to_string(),
            "data.night_gain" => sim.night_gain.to_string(),
            "model.in_channels" => self.model.in_channels.to_string(),
            "model.channels" => self.model.channels.to_string(),
            "model.partition_rows" => self.model.partition_rows.to_string(),
            "model.partition_cols" => self.model.partition_cols.to_string(),
            "model.fusion_mode" => self.model.fusion_mode.as_str().to_string(),
            "model.variant" => self.model.variant.to_string(),
            "train.lr" => self.train.lr.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.steps" => self.train.steps.to_string(),
            "train.beta1" => self.train.beta1.to_string(),
            "train.beta2" => self.train.beta2.to_string(),
            "train.eps" => self.train.eps.to_string(),
            "head.scales" => format_list(&self.head.scales),
            "head.ratios" => format_list(&self.head.ratios),
            "head.stride" => self.head.stride.to_string(),
            "head.pos_iou" => self.head.pos_iou.to_string(),
            "head.neg_iou" => self.head.neg_iou.to_string(),
            "head.focal_alpha" => self.head.focal_alpha.to_string(),
            "head.focal_gamma" => self.head.focal_gamma.to_string(),
            "head.huber_delta" => self.head.huber_delta.to_string(),
            "head.score_threshold" => self.head.score_threshold.to_string(),
            "head.nms_iou" => self.head.nms_iou.to_string(),
            "head.pre_nms_topk" => self.head.pre_nms_topk.to_string(),
            "head.topk" => self.head.topk.to_string(),
            "eval.iou_threshold" => self.eval.iou_threshold.to_string(),
            "eval.class" => self
                .eval
                .class_filter
                .map_or("all".to_string(), |c| CLASS_NAMES[c].to_string()),
            k => {
                if let Some(w) = k.strip_prefix("data.visibility.").and_then(weather_index) {
                    sim.visibility[w].to_string()
                } else if let Some(w) = k.strip_prefix("data.clutter.").and_then(weather_index) {
                    sim.clutter_rate[w].to_string()
                } else {
                    unreachable!("key list and accessors disagree on '{k}'")
                }
            }
        }
    }

    /// First violated invariant as `(key, message)`.
    pub fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        let fail = |key: &'static str, msg: String| Err((key, msg));
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            return fail("train.lr", format!("learning rate must be positive, got {}", t.lr));
        }
        if t.batch_size == 0 {
            return fail("train.batch_size", "batch size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&t.beta1) {
            return fail("train.beta1", "beta1 must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&t.beta2) {
            return fail("train.beta2", "beta2 must lie in [0, 1)".into());
        }
        if !(t.eps > 0.0) {
            return fail("train.eps", "eps must be positive".into());
        }
        if let Err(msg) = self.data.sim.validate() {
            return fail("data", msg);
        }
        if self.data.frames_per_cell == 0 {
            return fail("data.frames_per_cell", "need at least one frame per cell".into());
        }
        if !(0.0..=1.0).contains(&self.data.test_fraction) {
            return fail("data.test_fraction", "test fraction must lie in [0, 1]".into());
        }
        let m = &self.model;
        if m.in_channels != 3 {
            return fail("model.in_channels", format!("the simulator renders 3 channels, got {}", m.in_channels));
        }
        if m.channels == 0 || m.channels % 4 != 0 {
            return fail("model.channels", format!("channels must be a positive multiple of 4, got {}", m.channels));
        }
        if m.partition_rows == 0 || m.partition_rows > self.data.sim.height {
            return fail(
                "model.partition_rows",
                format!("partition rows {} do not fit feature height {}", m.partition_rows, self.data.sim.height),
            );
        }
        if m.partition_cols == 0 || m.partition_cols > self.data.sim.width {
            return fail(
                "model.partition_cols",
                format!("partition cols {} do not fit feature width {}", m.partition_cols, self.data.sim.width),
            );
        }
        let h = &self.head;
        if h.scales.is_empty() || h.scales.iter().any(|&s| !(s > 0.0)) {
            return fail("head.scales", "scales must be a nonempty list of positive sizes".into());
        }
        if h.ratios.is_empty() || h.ratios.iter().any(|&r| !(r > 0.0)) {
            return fail("head.ratios", "ratios must be a nonempty list of positive values".into());
        }
        if h.stride != 1 {
            return fail("head.stride", "the stride-1 backbone supports only anchor stride 1".into());
        }
        if !(h.pos_iou > 0.0 && h.pos_iou <= 1.0) {
            return fail("head.pos_iou", "positive IoU threshold must lie in (0, 1]".into());
        }
        if !(h.neg_iou > 0.0 && h.neg_iou <= h.pos_iou) {
            return fail("head.neg_iou", "negative IoU threshold must lie in (0, pos_iou]".into());
        }
        if !(0.0..=1.0).contains(&h.focal_alpha) {
            return fail("head.focal_alpha", "alpha must lie in [0, 1]".into());
        }
        if !(h.focal_gamma >= 0.0) {
            return fail("head.focal_gamma", "gamma must be nonnegative".into());
        }
        if !(h.huber_delta > 0.0) {
            return fail("head.huber_delta", "delta must be positive".into());
        }
        if !(0.0..1.0).contains(&h.score_threshold) {
            return fail("head.score_threshold", "score threshold must lie in [0, 1)".into());
        }
        if !(h.nms_iou > 0.0 && h.nms_iou <= 1.0) {
            return fail("head.nms_iou", "NMS IoU threshold must lie in (0, 1]".into());
        }
        if h.topk == 0 || h.pre_nms_topk < h.topk {
            return fail("head.topk", "need 1 <= topk <= pre_nms_topk".into());
        }
        if let Err(e) = self.eval.validate() {
            return fail("eval.iou_threshold", e.to_string());
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| GlaError::Config {
                line: Some(line),
                message,
            };
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected 'key = value', found '{content}'")))?;
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(err(format!("duplicate key '{key}' (first set on line {first})")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.check().map_err(|(key, message)| GlaError::Config {
            line: seen
                .iter()
                .filter(|(k, _)| k.as_str() == key || k.starts_with(&format!("{key}.")))
                .map(|(_, &l)| l)
                .max(),
            message: format!("{key}: {message}"),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GlaError::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }
}
