use std::fmt::Write as _;
use std::path::Path;

use super::boxes::{BBox, Detection};
use crate::error::{GlaError, Result};

/// One line per detection: `frame_id class_id score x1 y1 x2 y2`.
pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = d.bbox;
        let _ = writeln!(
            s,
            "{} {} {:.6} {:.6} {:.6} {:.6} {:.6}",
            d.frame, d.class_id, d.score, b.x1, b.y1, b.x2, b.y2
        );
    }
    s
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut dets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| GlaError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("'{s}': {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
        let det = Detection {
            frame: int(fields[0])?,
            class_id: int(fields[1])?,
            score: real(fields[2])?,
            bbox: BBox::new(real(fields[3])?, real(fields[4])?, real(fields[5])?, real(fields[6])?),
        };
        if !(0.0..=1.0).contains(&det.score) || !det.bbox.is_valid() {
            return Err(err("score outside [0, 1] or degenerate box".into()));
        }
        dets.push(det);
    }
    Ok(dets)
}

pub fn write_detections(path: &Path, dets: &[Detection]) -> Result<()> {
    std::fs::write(path, format_detections(dets)).map_err(|e| GlaError::io(path, e))
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| GlaError::io(path, e))?;
    parse_detections(&text, path)
}
