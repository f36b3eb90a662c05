//! Pascal VOC average precision with KITTI-style difficulty levels and result tables.

pub mod ap;
pub mod evaluate;
pub mod matching;
pub mod table;

pub use ap::{voc_ap, PrCurve};
pub use evaluate::{check_frames, evaluate, score_frames, CellKey, ClassScores, EvalReport, EvalSpec, FrameTruth};
pub use matching::{match_detections, Level, Outcome};
pub use table::{results_table, RenderedTable, TableRun};
