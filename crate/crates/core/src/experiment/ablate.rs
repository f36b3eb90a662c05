use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::checkpoint;
use super::config::ExperimentConfig;
use super::run::{adverse_map, run_detector, truths, write_eval, write_table};
use super::train::{format_log, train};
use crate::domain::Modality;
use crate::error::{GlaError, Result};
use crate::eval::{results_table, EvalReport, TableRun};
use crate::fusion::FusionVariant;
use crate::sim::FrameData;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Baselines,
    Partitions,
    AttentionMode,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "baselines" => Ok(Suite::Baselines),
            "partitions" => Ok(Suite::Partitions),
            "attention-mode" => Ok(Suite::AttentionMode),
            other => Err(format!("unknown suite '{other}' (expected baselines, partitions or attention-mode)")),
        }
    }
}

/// The partition grids of the sweep, as (rows, cols).
pub const PARTITION_GRIDS: [(usize, usize); 4] = [(3, 6), (4, 8), (5, 10), (6, 12)];

/// One training run of a suite.
#[derive(Debug, Clone)]
pub struct Arm {
    pub label: String,
    pub slug: String,
    pub config: ExperimentConfig,
}

impl Arm {
    pub fn variant(base: &ExperimentConfig, variant: FusionVariant) -> Self {
        let mut config = base.clone();
        config.model.variant = variant;
        Self {
            label: variant.label(),
            slug: variant.to_string().replace([':', '+'], "-"),
            config,
        }
    }
}

pub fn suite_arms(suite: Suite, base: &ExperimentConfig) -> Vec<Arm> {
    use FusionVariant::*;
    use Modality::*;
    match suite {
        Suite::Baselines => [
            Single(Camera),
            Single(Gated),
            Single(Lidar),
            Pair(Camera, Gated),
            Pair(Camera, Lidar),
            Concat,
            Gla,
        ]
        .into_iter()
        .map(|v| Arm::variant(base, v))
        .collect(),
        Suite::Partitions => PARTITION_GRIDS
            .iter()
            .map(|&(rows, cols)| {
                let mut arm = Arm::variant(base, Gla);
                arm.config.model.partition_rows = rows;
                arm.config.model.partition_cols = cols;
                arm.label = format!("{} partitions ({rows}x{cols})", rows * cols);
                arm.slug = format!("grid-{rows}x{cols}");
                arm
            })
            .collect(),
        Suite::AttentionMode => [GlobalOnly, LocalOnly, Gla].into_iter().map(|v| Arm::variant(base, v)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub label: String,
    pub report: std::result::Result<EvalReport, String>,
    /// Overall-difficulty mAP pooled over fog and snow test frames.
    pub adverse_map: Option<f64>,
    pub final_loss: Option<f32>,
}

fn run_arm(arm: &Arm, train_frames: &[FrameData], test_frames: &[FrameData], dir: Option<&Path>) -> Result<ArmResult> {
    log::info!("arm {}: training {} steps", arm.label, arm.config.train.steps);
    let mut outcome = train(&arm.config, train_frames, |_| {})?;
    let dets = run_detector(&outcome.detector, &mut outcome.store, test_frames)?;
    let truths = truths(test_frames);
    let report = match dir {
        Some(dir) => {
            checkpoint::save(&dir.join("checkpoint"), &arm.config, &outcome.store)?;
            let path = dir.join("train_log.csv");
            fs::write(&path, format_log(&outcome.log)).map_err(|e| GlaError::io(&path, e))?;
            write_eval(dir, &arm.label, &dets, &truths, &arm.config.eval)?
        }
        None => crate::eval::evaluate(&dets, &truths, &arm.config.eval)?,
    };
    Ok(ArmResult {
        label: arm.label.clone(),
        adverse_map: adverse_map(&dets, &truths, &arm.config.eval),
        report: Ok(report),
        final_loss: outcome.log.last().map(|r| r.total),
    })
}

/// Trains and evaluates every arm, at most `threads` at a time. A failing arm is
/// reported in its result and does not stop the others.
pub fn run_arms(
    arms: &[Arm],
    train_frames: &[FrameData],
    test_frames: &[FrameData],
    threads: usize,
    out: Option<&Path>,
) -> Vec<ArmResult> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<ArmResult>>> = Mutex::new(vec![None; arms.len()]);
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, arms.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(arm) = arms.get(i) else { break };
                let dir: Option<PathBuf> = out.map(|o| o.join("arms").join(&arm.slug));
                let result = run_arm(arm, train_frames, test_frames, dir.as_deref()).unwrap_or_else(|e| {
                    log::error!("arm {} failed: {e}", arm.label);
                    ArmResult {
                        label: arm.label.clone(),
                        report: Err(e.to_string()),
                        adverse_map: None,
                        final_loss: None,
                    }
                });
                results.lock().expect("no arm panics while holding the lock")[i] = Some(result);
            });
        }
    });
    results
        .into_inner()
        .expect("threads joined")
        .into_iter()
        .map(|r| r.expect("every arm ran"))
        .collect()
}

/// Combined table over arms, each row tagged with the dataset hash.
pub fn write_suite(out: &Path, results: &[ArmResult], dataset_hash: &str) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| GlaError::io(out, e))?;
    let runs: Vec<TableRun> = results
        .iter()
        .map(|r| TableRun {
            label: r.label.clone(),
            report: r.report.clone(),
            dataset_hash: Some(dataset_hash.to_string()),
        })
        .collect();
    let table = results_table(&runs);
    write_table(out, &table.text, &table.csv)?;
    let mut summary = String::from("arm,status,adverse_overall_map,final_loss,dataset_hash\n");
    for r in results {
        let _ = writeln!(
            summary,
            "{},{},{},{},{dataset_hash}",
            r.label,
            if r.report.is_ok() { "ok" } else { "failed" },
            r.adverse_map.map_or(String::new(), |m| format!("{m:.6}")),
            r.final_loss.map_or(String::new(), |l| format!("{l:.7}")),
        );
    }
    let path = out.join("summary.csv");
    fs::write(&path, summary).map_err(|e| GlaError::io(&path, e))
}
