//! The operations behind each `gla` subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use super::ablate::{run_arms, suite_arms, write_suite, ArmResult, Suite};
use super::checkpoint;
use super::config::ExperimentConfig;
use super::export::export_attention;
use super::run::{run_detector, truths, write_eval};
use super::train::{format_log, train};
use crate::error::{GlaError, Result};
use crate::eval::EvalReport;
use crate::sim::{make_dataset, Dataset, Manifest, Split};

pub fn gen_data(config: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    make_dataset(&config.data, out)
}

fn open_matching(config: &ExperimentConfig, data: &Path) -> Result<Dataset> {
    let dataset = Dataset::open(data)?;
    let m = &dataset.manifest;
    if (m.height, m.width) != (config.data.sim.height, config.data.sim.width) {
        return Err(GlaError::Invalid(format!(
            "dataset frames are {}x{} but the config expects {}x{}",
            m.height, m.width, config.data.sim.height, config.data.sim.width
        )));
    }
    Ok(dataset)
}

/// Trains on the dataset's train split; writes the checkpoint, `train_log.csv` and `timing.csv`.
pub fn train_cmd(config: &ExperimentConfig, data: &Path, out: &Path) -> Result<()> {
    let dataset = open_matching(config, data)?;
    let frames = dataset.load_split(Split::Train)?;
    let every = (config.train.steps / 20).max(1);
    let outcome = train(config, &frames, |row| {
        if row.step % every == 0 {
            log::info!("step {} loss {:.5}", row.step, row.total);
        }
    })?;
    checkpoint::save(out, config, &outcome.store)?;
    let mut timing = String::from("step,millis\n");
    for (i, ms) in outcome.step_millis.iter().enumerate() {
        timing.push_str(&format!("{i},{ms:.3}\n"));
    }
    for (file, body) in [("train_log.csv", format_log(&outcome.log)), ("timing.csv", timing)] {
        let path = out.join(file);
        fs::write(&path, body).map_err(|e| GlaError::io(&path, e))?;
    }
    Ok(())
}

/// Detects on the test split and writes detections plus result tables.
pub fn eval_cmd(ckpt: &Path, data: &Path, out: &Path) -> Result<EvalReport> {
    let (config, detector, mut store) = checkpoint::load(ckpt)?;
    let dataset = open_matching(&config, data)?;
    let frames = dataset.load_split(Split::Test)?;
    let dets = run_detector(&detector, &mut store, &frames)?;
    write_eval(out, &config.model.variant.label(), &dets, &truths(&frames), &config.eval)
}

pub fn ablate_cmd(suite: Suite, config: &ExperimentConfig, data: &Path, out: &Path, threads: usize) -> Result<Vec<ArmResult>> {
    let dataset = open_matching(config, data)?;
    let hash = dataset.content_hash()?;
    let train_frames = dataset.load_split(Split::Train)?;
    let test_frames = dataset.load_split(Split::Test)?;
    let arms = suite_arms(suite, config);
    let results = run_arms(&arms, &train_frames, &test_frames, threads, Some(out));
    write_suite(out, &results, &hash)?;
    Ok(results)
}

/// Parses a frame list such as `3,17,40`.
pub fn parse_frames(list: &str) -> Result<Vec<usize>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| GlaError::Invalid(format!("frame id '{s}': {e}")))
        })
        .collect()
}

pub fn export_cmd(ckpt: &Path, data: &Path, frames: &[usize], out: &Path) -> Result<Vec<PathBuf>> {
    let (config, detector, mut store) = checkpoint::load(ckpt)?;
    let dataset = open_matching(&config, data)?;
    let unknown: Vec<usize> = frames
        .iter()
        .copied()
        .filter(|&i| dataset.manifest.frame(i).is_none())
        .collect();
    if !unknown.is_empty() {
        return Err(GlaError::Invalid(format!("frames not in the dataset: {unknown:?}")));
    }
    let loaded = frames
        .iter()
        .map(|&i| dataset.load_frame(i))
        .collect::<Result<Vec<_>>>()?;
    export_attention(&detector, &mut store, &loaded, out)
}
