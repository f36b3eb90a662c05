use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gla_tensor::{glat, Tensor};
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use super::params::SimConfig;
use super::render::{render_modalities, RenderedFrame};
use super::rng::{keyed_rng, purpose};
use super::scene::sample_scene;
use crate::detection::{BBox, GroundTruth};
use crate::domain::{Daytime, Modality, Weather, NUM_CLASSES};
use crate::error::{GlaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub sim: SimConfig,
    pub frames_per_cell: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            frames_per_cell: 50,
            test_fraction: 0.2,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameInfo {
    pub index: usize,
    pub weather: Weather,
    pub daytime: Daytime,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub frames_per_cell: usize,
    pub test_fraction: f64,
    pub frames: Vec<FrameInfo>,
}

pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn tensor_file(index: usize, m: Modality) -> String {
    format!("frame_{index}_{m}.glat")
}

pub fn gt_file(index: usize) -> String {
    format!("frame_{index}.gt")
}

/// The eight (weather, daytime) cells in generation order.
pub fn cells() -> Vec<(Weather, Daytime)> {
    Weather::ALL
        .iter()
        .flat_map(|&w| Daytime::ALL.iter().map(move |&d| (w, d)))
        .collect()
}

/// Frame layout and split for a spec, without rendering anything.
pub fn plan_frames(spec: &DatasetSpec) -> Vec<FrameInfo> {
    let n = spec.frames_per_cell;
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    let mut frames = Vec::with_capacity(n * 8);
    for (c, (weather, daytime)) in cells().into_iter().enumerate() {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut keyed_rng(spec.seed, c as u64, purpose::SPLIT));
        let mut is_test = vec![false; n];
        order[..n_test].iter().for_each(|&k| is_test[k] = true);
        for (k, test) in is_test.into_iter().enumerate() {
            frames.push(FrameInfo {
                index: c * n + k,
                weather,
                daytime,
                split: if test { Split::Test } else { Split::Train },
            });
        }
    }
    frames
}

/// Renders a single frame of a dataset plan.
pub fn render_frame(spec: &DatasetSpec, info: &FrameInfo) -> RenderedFrame {
    let frame = info.index as u64;
    let scene = sample_scene(&spec.sim, spec.seed, frame, None);
    render_modalities(&spec.sim, &scene, &spec.sim.weather(info.weather), info.daytime, spec.seed, frame)
}

pub fn format_ground_truth(gts: &[GroundTruth]) -> String {
    let mut s = String::new();
    for g in gts {
        let b = g.bbox;
        let _ = writeln!(
            s,
            "{} {} {:.6} {:.6} {:.6} {:.6}",
            g.class_id,
            g.difficulty.as_str(),
            b.x1,
            b.y1,
            b.x2,
            b.y2
        );
    }
    s
}

pub fn parse_ground_truth(text: &str, path: &Path) -> Result<Vec<GroundTruth>> {
    let mut out = Vec::new();
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
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 6 {
            return Err(err(format!("expected 6 fields, found {}", f.len())));
        }
        let class_id: usize = f[0].parse().map_err(|e| err(format!("class id '{}': {e}", f[0])))?;
        if class_id >= NUM_CLASSES {
            return Err(err(format!("class id {class_id} out of range")));
        }
        let difficulty = f[1].parse().map_err(err)?;
        let real = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
        let bbox = BBox::new(real(f[2])?, real(f[3])?, real(f[4])?, real(f[5])?);
        if !bbox.is_valid() {
            return Err(err("degenerate ground-truth box".into()));
        }
        out.push(GroundTruth {
            class_id,
            difficulty,
            bbox,
        });
    }
    Ok(out)
}

impl Manifest {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn count(&self, split: Split) -> usize {
        self.frames.iter().filter(|f| f.split == split).count()
    }

    pub fn frame(&self, index: usize) -> Option<&FrameInfo> {
        self.frames.get(index).filter(|f| f.index == index)
    }

    pub fn to_text(&self, sim: Option<&SimConfig>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = gla-synthetic-1");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "frames_per_cell = {}", self.frames_per_cell);
        let _ = writeln!(s, "test_fraction = {}", self.test_fraction);
        let _ = writeln!(s, "frame_count = {}", self.frame_count());
        let _ = writeln!(s, "train_count = {}", self.count(Split::Train));
        let _ = writeln!(s, "test_count = {}", self.count(Split::Test));
        let _ = writeln!(s, "tensor_files = frame_{{index}}_{{modality}}.glat");
        let _ = writeln!(s, "gt_files = frame_{{index}}.gt");
        if let Some(sim) = sim {
            for (i, w) in Weather::ALL.iter().enumerate() {
                let _ = writeln!(s, "sim.visibility.{} = {}", w.as_str(), sim.visibility[i]);
                let _ = writeln!(s, "sim.clutter_rate.{} = {}", w.as_str(), sim.clutter_rate[i]);
            }
            let _ = writeln!(s, "sim.night_gain = {}", sim.night_gain);
            let _ = writeln!(s, "sim.noise_sigma = {}", sim.noise_sigma);
        }
        for f in &self.frames {
            let _ = writeln!(
                s,
                "frame.{} = {} {} {}",
                f.index,
                f.weather.as_str(),
                f.daytime.as_str(),
                f.split.as_str()
            );
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| GlaError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut m = Manifest {
            seed: 0,
            height: 0,
            width: 0,
            frames_per_cell: 0,
            test_fraction: 0.0,
            frames: Vec::new(),
        };
        let mut frame_count = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line_no, "expected 'key = value'".into()))?;
            let num = |v: &str| v.parse::<u64>().map_err(|e| err(line_no, format!("{key}: {e}")));
            match key {
                "seed" => m.seed = num(value)?,
                "height" => m.height = num(value)? as usize,
                "width" => m.width = num(value)? as usize,
                "frames_per_cell" => m.frames_per_cell = num(value)? as usize,
                "frame_count" => frame_count = Some(num(value)? as usize),
                "test_fraction" => {
                    m.test_fraction = value.parse().map_err(|e| err(line_no, format!("{key}: {e}")))?
                }
                k if k.starts_with("frame.") => {
                    let index: usize = k["frame.".len()..]
                        .parse()
                        .map_err(|e| err(line_no, format!("frame index: {e}")))?;
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    let [weather, daytime, split] = parts[..] else {
                        return Err(err(line_no, "frame entry needs weather, daytime and split".into()));
                    };
                    let split = match split {
                        "train" => Split::Train,
                        "test" => Split::Test,
                        other => return Err(err(line_no, format!("unknown split '{other}'"))),
                    };
                    if index != m.frames.len() {
                        return Err(err(line_no, format!("frame {index} out of order")));
                    }
                    m.frames.push(FrameInfo {
                        index,
                        weather: weather.parse().map_err(|e| err(line_no, e))?,
                        daytime: daytime.parse().map_err(|e| err(line_no, e))?,
                        split,
                    });
                }
                _ => {}
            }
        }
        if frame_count != Some(m.frames.len()) {
            return Err(GlaError::Dataset(format!(
                "{}: frame_count {:?} disagrees with {} frame entries",
                path.display(),
                frame_count,
                m.frames.len()
            )));
        }
        Ok(m)
    }
}

/// Renders and writes every frame, then the manifest.
pub fn make_dataset(spec: &DatasetSpec, dir: &Path) -> Result<Manifest> {
    spec.sim.validate().map_err(GlaError::Invalid)?;
    if spec.frames_per_cell == 0 {
        return Err(GlaError::Invalid("frames_per_cell must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.test_fraction) {
        return Err(GlaError::Invalid("test_fraction must lie in [0, 1]".into()));
    }
    fs::create_dir_all(dir).map_err(|e| GlaError::io(dir, e))?;
    let frames = plan_frames(spec);
    for info in &frames {
        let rendered = render_frame(spec, info);
        for m in Modality::ALL {
            glat::save(rendered.get(m), dir.join(tensor_file(info.index, m)))?;
        }
        let path = dir.join(gt_file(info.index));
        fs::write(&path, format_ground_truth(&rendered.ground_truth)).map_err(|e| GlaError::io(&path, e))?;
    }
    let manifest = Manifest {
        seed: spec.seed,
        height: spec.sim.height,
        width: spec.sim.width,
        frames_per_cell: spec.frames_per_cell,
        test_fraction: spec.test_fraction,
        frames,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_text(Some(&spec.sim))).map_err(|e| GlaError::io(&path, e))?;
    Ok(manifest)
}

/// One frame read back from disk.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub info: FrameInfo,
    pub camera: Tensor<f32>,
    pub gated: Tensor<f32>,
    pub lidar: Tensor<f32>,
    pub ground_truth: Vec<GroundTruth>,
}

impl FrameData {
    pub fn get(&self, m: Modality) -> &Tensor<f32> {
        match m {
            Modality::Camera => &self.camera,
            Modality::Gated => &self.gated,
            Modality::Lidar => &self.lidar,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| GlaError::io(&path, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            manifest: Manifest::parse(&text, &path)?,
        })
    }

    pub fn load_frame(&self, index: usize) -> Result<FrameData> {
        let info = *self
            .manifest
            .frame(index)
            .ok_or_else(|| GlaError::Dataset(format!("no frame {index} in {}", self.root.display())))?;
        let expected = [3, self.manifest.height, self.manifest.width];
        let load = |m: Modality| -> Result<Tensor<f32>> {
            let path = self.root.join(tensor_file(index, m));
            let t: Tensor<f32> = glat::load(&path)?;
            if t.shape() != expected {
                return Err(GlaError::Dataset(format!(
                    "{}: shape {:?}, expected {:?}",
                    path.display(),
                    t.shape(),
                    expected
                )));
            }
            Ok(t)
        };
        let gt_path = self.root.join(gt_file(index));
        let text = fs::read_to_string(&gt_path).map_err(|e| GlaError::io(&gt_path, e))?;
        Ok(FrameData {
            info,
            camera: load(Modality::Camera)?,
            gated: load(Modality::Gated)?,
            lidar: load(Modality::Lidar)?,
            ground_truth: parse_ground_truth(&text, &gt_path)?,
        })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .frames
            .iter()
            .filter(|f| f.split == split)
            .map(|f| f.index)
            .collect()
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<FrameData>> {
        self.indices(split).into_iter().map(|i| self.load_frame(i)).collect()
    }

    /// SHA-256 over the manifest and every frame file, in frame order.
    pub fn content_hash(&self) -> Result<String> {
        let mut hasher = Sha256::new();
        let mut feed = |name: String| -> Result<()> {
            let path = self.root.join(&name);
            let bytes = fs::read(&path).map_err(|e| GlaError::io(&path, e))?;
            hasher.update(name.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
            Ok(())
        };
        feed(MANIFEST_FILE.to_string())?;
        for f in &self.manifest.frames {
            for m in Modality::ALL {
                feed(tensor_file(f.index, m))?;
            }
            feed(gt_file(f.index))?;
        }
        Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}
