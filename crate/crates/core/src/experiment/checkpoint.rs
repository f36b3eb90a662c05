//! Checkpoint directories: one GLAT1 file per tensor, a manifest, and the config.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gla_tensor::{glat, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::detector::Detector;
use crate::error::{GlaError, Result};
use crate::nn::ParamStore;

pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG: &str = "config.txt";

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

/// Builds the detector a config describes, with fresh seeded parameters.
pub fn build(config: &ExperimentConfig) -> Result<(Detector, ParamStore<f32>)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let image = (config.data.sim.height, config.data.sim.width);
    let detector = Detector::new(config.model, config.head.clone(), image, &mut store, &mut rng)?;
    Ok((detector, store))
}

pub fn save(dir: &Path, config: &ExperimentConfig, store: &ParamStore<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GlaError::io(dir, e))?;
    let mut manifest = String::new();
    let mut put = |name: &str, role: &str, tensor: &Tensor<f32>| -> Result<()> {
        let file = format!("{name}.glat");
        glat::save(tensor, dir.join(&file))?;
        let _ = writeln!(manifest, "{name} {file} {} {role}", shape_str(tensor.shape()));
        Ok(())
    };
    for p in store.params() {
        put(&p.name, p.kind.as_str(), &p.value)?;
    }
    for s in store.stats() {
        let n = s.stats.mean.len();
        put(&format!("{}.mean", s.name), "running_mean", &Tensor::new(vec![n], s.stats.mean.clone())?)?;
        put(&format!("{}.var", s.name), "running_var", &Tensor::new(vec![n], s.stats.var.clone())?)?;
    }
    let write = |file: &str, text: String| {
        let path = dir.join(file);
        fs::write(&path, text).map_err(|e| GlaError::io(&path, e))
    };
    write(MANIFEST, manifest)?;
    write(CONFIG, config.to_text())
}

pub fn load(dir: &Path) -> Result<(ExperimentConfig, Detector, ParamStore<f32>)> {
    let config = ExperimentConfig::load(&dir.join(CONFIG))?;
    let (detector, mut store) = build(&config)?;
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| GlaError::io(&path, e))?;
    let mut entries: HashMap<String, (String, String, String)> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        let [name, file, shape, role] = f[..] else {
            return Err(GlaError::Checkpoint(format!("{}:{}: malformed entry", path.display(), i + 1)));
        };
        entries.insert(name.to_string(), (file.to_string(), shape.to_string(), role.to_string()));
    }
    let mut take = |name: &str, role: &str, shape: &[usize]| -> Result<Tensor<f32>> {
        let (file, recorded, found_role) = entries
            .remove(name)
            .ok_or_else(|| GlaError::Checkpoint(format!("missing tensor '{name}'")))?;
        if found_role != role || recorded != shape_str(shape) {
            return Err(GlaError::Checkpoint(format!(
                "'{name}' is {found_role} {recorded}, model expects {role} {}",
                shape_str(shape)
            )));
        }
        let t: Tensor<f32> = glat::load(dir.join(&file))?;
        if t.shape() != shape {
            return Err(GlaError::Checkpoint(format!("'{file}' holds shape {:?}", t.shape())));
        }
        Ok(t)
    };
    for p in store.params_mut() {
        let role = p.kind.as_str();
        p.value = take(&p.name, role, p.value.shape())?;
    }
    for s in store.stats_mut() {
        let n = s.stats.mean.len();
        s.stats.mean = take(&format!("{}.mean", s.name), "running_mean", &[n])?.into_data();
        s.stats.var = take(&format!("{}.var", s.name), "running_var", &[n])?.into_data();
    }
    if !entries.is_empty() {
        let mut extra: Vec<String> = entries.into_keys().collect();
        extra.sort();
        return Err(GlaError::Checkpoint(format!("tensors not used by the model: {}", extra.join(", "))));
    }
    Ok((config, detector, store))
}
