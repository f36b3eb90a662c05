use std::collections::{BTreeMap, BTreeSet};

use super::ap::{voc_ap, PrCurve};
use super::matching::{match_detections, Level, Outcome};
use crate::detection::{score_order, Detection, GroundTruth};
use crate::domain::{Daytime, Weather, NUM_CLASSES};
use crate::error::{GlaError, Result};
use crate::sim::FrameInfo;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSpec {
    pub iou_threshold: f64,
    /// Restrict evaluation to one class id.
    pub class_filter: Option<usize>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            class_filter: None,
        }
    }
}

impl EvalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(GlaError::Invalid(format!(
                "iou threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        if self.class_filter.is_some_and(|c| c >= NUM_CLASSES) {
            return Err(GlaError::Invalid("class filter out of range".into()));
        }
        Ok(())
    }

    fn classes(&self) -> Vec<usize> {
        match self.class_filter {
            Some(c) => vec![c],
            None => (0..NUM_CLASSES).collect(),
        }
    }
}

/// Ground truth of one evaluated frame with its capture conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth {
    pub info: FrameInfo,
    pub ground_truth: Vec<GroundTruth>,
}

/// Per-class AP (`None` for classes without counted ground truth) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub per_class: Vec<Option<f64>>,
    pub map: Option<f64>,
}

/// AP per class over a set of frames at one level.
pub fn score_frames(dets: &[Detection], frames: &[&FrameTruth], level: Level, spec: &EvalSpec) -> ClassScores {
    let by_frame: BTreeMap<usize, &FrameTruth> = frames.iter().map(|f| (f.info.index, *f)).collect();
    let mut per_class = vec![None; NUM_CLASSES];
    for class in spec.classes() {
        let class_dets: Vec<Detection> = dets
            .iter()
            .filter(|d| d.class_id == class && by_frame.contains_key(&d.frame))
            .copied()
            .collect();
        let scores: Vec<f64> = class_dets.iter().map(|d| d.score).collect();
        let order = score_order(&scores);
        let mut grouped: BTreeMap<usize, Vec<(usize, Detection)>> = BTreeMap::new();
        for (rank, &i) in order.iter().enumerate() {
            grouped.entry(class_dets[i].frame).or_default().push((rank, class_dets[i]));
        }
        let mut outcome_by_rank = vec![Outcome::Ignored; order.len()];
        let mut num_gt = 0;
        for (&frame, truth) in &by_frame {
            let gts: Vec<GroundTruth> = truth.ground_truth.iter().filter(|g| g.class_id == class).copied().collect();
            let entries = grouped.remove(&frame).unwrap_or_default();
            let frame_dets: Vec<Detection> = entries.iter().map(|&(_, d)| d).collect();
            let (outcomes, n) = match_detections(&frame_dets, &gts, spec.iou_threshold, level);
            num_gt += n;
            for ((rank, _), o) in entries.iter().zip(outcomes) {
                outcome_by_rank[*rank] = o;
            }
        }
        if num_gt == 0 {
            continue;
        }
        let ranked: Vec<bool> = outcome_by_rank
            .into_iter()
            .filter(|&o| o != Outcome::Ignored)
            .map(|o| o == Outcome::TruePositive)
            .collect();
        per_class[class] = Some(voc_ap(&PrCurve::from_ranked(&ranked, num_gt)));
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let map = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    ClassScores { per_class, map }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub weather: Weather,
    pub daytime: Daytime,
    pub level: Level,
}

/// Scores for every (weather, daytime) group present in the evaluated frames, at every level.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cells: BTreeMap<CellKey, ClassScores>,
}

impl EvalReport {
    pub fn map(&self, weather: Weather, daytime: Daytime, level: Level) -> Option<f64> {
        self.cells.get(&CellKey { weather, daytime, level }).and_then(|c| c.map)
    }
}

pub fn check_frames(dets: &[Detection], truths: &[FrameTruth]) -> Result<()> {
    let known: BTreeSet<usize> = truths.iter().map(|t| t.info.index).collect();
    let unknown: BTreeSet<usize> = dets.iter().map(|d| d.frame).filter(|f| !known.contains(f)).collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(GlaError::UnknownFrames(unknown.into_iter().collect()))
    }
}

pub fn evaluate(dets: &[Detection], truths: &[FrameTruth], spec: &EvalSpec) -> Result<EvalReport> {
    spec.validate()?;
    check_frames(dets, truths)?;
    let mut groups: BTreeMap<(Weather, Daytime), Vec<&FrameTruth>> = BTreeMap::new();
    for t in truths {
        groups.entry((t.info.weather, t.info.daytime)).or_default().push(t);
    }
    let mut cells = BTreeMap::new();
    for ((weather, daytime), frames) in groups {
        for level in Level::ALL {
            cells.insert(
                CellKey { weather, daytime, level },
                score_frames(dets, &frames, level, spec),
            );
        }
    }
    Ok(EvalReport { cells })
}
