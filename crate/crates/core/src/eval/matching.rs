use std::fmt;
use std::str::FromStr;

use crate::detection::{iou, Detection, GroundTruth};
use crate::domain::Difficulty;

/// Difficulty level of an evaluation; `Overall` counts every ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Easy,
    Moderate,
    Hard,
    Overall,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Easy, Level::Moderate, Level::Hard, Level::Overall];

    pub fn short(self) -> &'static str {
        match self {
            Level::Easy => "E",
            Level::Moderate => "M",
            Level::Hard => "H",
            Level::Overall => "Overall",
        }
    }

    /// Whether a ground truth of `difficulty` counts at this level.
    pub fn includes(self, difficulty: Difficulty) -> bool {
        match self {
            Level::Easy => difficulty == Difficulty::Easy,
            Level::Moderate => difficulty <= Difficulty::Moderate,
            Level::Hard | Level::Overall => true,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Easy => "easy",
            Level::Moderate => "moderate",
            Level::Hard => "hard",
            Level::Overall => "overall",
        })
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Level::ALL
            .into_iter()
            .find(|l| l.to_string() == s)
            .ok_or_else(|| format!("unknown difficulty level '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    /// Matched a ground truth harder than the evaluated level.
    Ignored,
}

/// Greedy matching of score-sorted detections against one frame's ground truth.
/// Returns one outcome per detection and the number of counted ground truths.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_thr: f64, level: Level) -> (Vec<Outcome>, usize) {
    let mut taken = vec![false; gts.len()];
    let outcomes = dets
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.class_id != d.class_id {
                    continue;
                }
                let v = iou(&d.bbox, &gt.bbox);
                if v >= iou_thr && best.map_or(true, |(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            match best {
                None => Outcome::FalsePositive,
                Some((g, _)) => {
                    taken[g] = true;
                    if level.includes(gts[g].difficulty) {
                        Outcome::TruePositive
                    } else {
                        Outcome::Ignored
                    }
                }
            }
        })
        .collect();
    let num_gt = gts.iter().filter(|g| level.includes(g.difficulty)).count();
    (outcomes, num_gt)
}
