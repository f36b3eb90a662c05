use std::fmt;
use std::str::FromStr;

use gla_tensor::{Graph, Real, Tensor, Var};
use rand::Rng;

use super::attention::{self, AttentionSubnet, FusionMode};
use super::inception::InceptionBlock;
use crate::domain::{Daytime, Modality, Weather};
use crate::error::{GlaError, Result};
use crate::nn::{Conv, ConvSpec, ParamStore, Session};

/// Which fusion network an experiment arm trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FusionVariant {
    Gla,
    Concat,
    LocalOnly,
    GlobalOnly,
    Single(Modality),
    Pair(Modality, Modality),
}

impl FusionVariant {
    pub fn modalities(self) -> Vec<Modality> {
        match self {
            FusionVariant::Single(m) => vec![m],
            FusionVariant::Pair(a, b) => vec![a, b],
            _ => Modality::ALL.to_vec(),
        }
    }

    fn uses_local(self) -> bool {
        !matches!(self, FusionVariant::Concat | FusionVariant::GlobalOnly)
    }

    fn uses_global(self) -> bool {
        !matches!(self, FusionVariant::Concat | FusionVariant::LocalOnly)
    }

    /// Table label, e.g. `Camera-Gated-Lidar (Concat)`.
    pub fn label(self) -> String {
        let cap = |m: Modality| {
            let s = m.as_str();
            format!("{}{}", s[..1].to_uppercase(), &s[1..])
        };
        match self {
            FusionVariant::Gla => "GLA".into(),
            FusionVariant::Concat => "Camera-Gated-Lidar (Concat)".into(),
            FusionVariant::LocalOnly => "Local Attention only".into(),
            FusionVariant::GlobalOnly => "Global Attention only".into(),
            FusionVariant::Single(m) => cap(m),
            FusionVariant::Pair(a, b) => format!("{}-{}", cap(a), cap(b)),
        }
    }
}

impl fmt::Display for FusionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionVariant::Gla => f.write_str("gla"),
            FusionVariant::Concat => f.write_str("concat"),
            FusionVariant::LocalOnly => f.write_str("local-only"),
            FusionVariant::GlobalOnly => f.write_str("global-only"),
            FusionVariant::Single(m) => write!(f, "single:{m}"),
            FusionVariant::Pair(a, b) => write!(f, "pair:{a}+{b}"),
        }
    }
}

impl FromStr for FusionVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "gla" => return Ok(FusionVariant::Gla),
            "concat" => return Ok(FusionVariant::Concat),
            "local-only" => return Ok(FusionVariant::LocalOnly),
            "global-only" => return Ok(FusionVariant::GlobalOnly),
            _ => {}
        }
        if let Some(m) = s.strip_prefix("single:") {
            return Ok(FusionVariant::Single(m.parse()?));
        }
        if let Some(pair) = s.strip_prefix("pair:") {
            let parts: Vec<&str> = pair.split('+').collect();
            if parts.len() != 2 {
                return Err(format!("pair variant must name exactly two modalities, got '{pair}'"));
            }
            let (a, b): (Modality, Modality) = (parts[0].parse()?, parts[1].parse()?);
            if a == b {
                return Err(format!("pair variant repeats modality '{a}'"));
            }
            return Ok(FusionVariant::Pair(a, b));
        }
        Err(format!("unknown fusion variant '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub channels: usize,
    pub partition_rows: usize,
    pub partition_cols: usize,
    pub fusion_mode: FusionMode,
    pub variant: FusionVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            channels: 16,
            partition_rows: 5,
            partition_cols: 10,
            fusion_mode: FusionMode::ModalityWeighted,
            variant: FusionVariant::Gla,
        }
    }
}

/// Co-registered per-modality inputs for one batch plus per-frame conditions.
#[derive(Debug, Clone)]
pub struct ModalityBundle<T> {
    pub camera: Tensor<T>,
    pub gated: Tensor<T>,
    pub lidar: Tensor<T>,
    pub weather: Vec<Weather>,
    pub daytime: Vec<Daytime>,
}

impl<T: Real> ModalityBundle<T> {
    pub fn new(
        camera: Tensor<T>,
        gated: Tensor<T>,
        lidar: Tensor<T>,
        weather: Vec<Weather>,
        daytime: Vec<Daytime>,
    ) -> Result<Self> {
        let (n, ..) = camera.dims4("modality bundle")?;
        if gated.shape() != camera.shape() || lidar.shape() != camera.shape() {
            return Err(GlaError::Invalid(format!(
                "modality shapes differ: camera {:?}, gated {:?}, lidar {:?}",
                camera.shape(),
                gated.shape(),
                lidar.shape()
            )));
        }
        if weather.len() != n || daytime.len() != n {
            return Err(GlaError::Invalid(format!(
                "metadata for {} / {} frames but batch is {n}",
                weather.len(),
                daytime.len()
            )));
        }
        Ok(Self {
            camera,
            gated,
            lidar,
            weather,
            daytime,
        })
    }

    pub fn get(&self, m: Modality) -> &Tensor<T> {
        match m {
            Modality::Camera => &self.camera,
            Modality::Gated => &self.gated,
            Modality::Lidar => &self.lidar,
        }
    }

    pub fn batch(&self) -> usize {
        self.camera.shape()[0]
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.camera.shape()[2], self.camera.shape()[3])
    }

    pub fn cast<U: Real>(&self) -> ModalityBundle<U> {
        ModalityBundle {
            camera: self.camera.cast(),
            gated: self.gated.cast(),
            lidar: self.lidar.cast(),
            weather: self.weather.clone(),
            daytime: self.daytime.clone(),
        }
    }
}

/// Graph handles produced by one fusion forward pass.
#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub features: Vec<Var>,
    /// Pixel-level weights, one per modality; empty when the variant has none.
    pub local_weights: Vec<Var>,
    /// Partition-level weights `[N, C, rows, cols]`; empty when the variant has none.
    pub global_weights: Vec<Var>,
    pub f1: Var,
    pub f1_prime: Var,
    pub f2: Var,
}

/// Attention maps and fused features captured from a forward pass.
#[derive(Debug, Clone)]
pub struct AttentionRecord<T> {
    pub modalities: Vec<Modality>,
    pub local_weights: Vec<Tensor<T>>,
    pub global_weights: Vec<Tensor<T>>,
    pub f1: Tensor<T>,
    pub f1_prime: Tensor<T>,
    pub f2: Tensor<T>,
}

impl<T: Real> AttentionRecord<T> {
    pub fn capture(graph: &Graph<T>, modalities: &[Modality], out: &FusionOutput) -> Self {
        let grab = |vs: &[Var]| vs.iter().map(|&v| graph.value(v).clone()).collect();
        Self {
            modalities: modalities.to_vec(),
            local_weights: grab(&out.local_weights),
            global_weights: grab(&out.global_weights),
            f1: graph.value(out.f1).clone(),
            f1_prime: graph.value(out.f1_prime).clone(),
            f2: graph.value(out.f2).clone(),
        }
    }

    pub fn local(&self, m: Modality) -> Option<&Tensor<T>> {
        let i = self.modalities.iter().position(|&x| x == m)?;
        self.local_weights.get(i)
    }

    pub fn global(&self, m: Modality) -> Option<&Tensor<T>> {
        let i = self.modalities.iter().position(|&x| x == m)?;
        self.global_weights.get(i)
    }

    /// Largest `|sum_m w_m - 1|` over all coordinates of both attention stages.
    pub fn max_normalization_drift(&self) -> f64 {
        [&self.local_weights, &self.global_weights]
            .into_iter()
            .filter(|ws| !ws.is_empty())
            .map(|ws| {
                (0..ws[0].len())
                    .map(|i| (ws.iter().map(|w| w.data()[i].as_f64()).sum::<f64>() - 1.0).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Stage-1 inception per modality, local attention + first fusion, inception on the
/// fused map, global attention + second fusion.
#[derive(Debug, Clone)]
pub struct GlaModel {
    pub config: ModelConfig,
    pub modalities: Vec<Modality>,
    stems: Vec<InceptionBlock>,
    local: Vec<AttentionSubnet>,
    global: Vec<AttentionSubnet>,
    stage2: Vec<InceptionBlock>,
    concat_proj: Option<Conv>,
    refine: InceptionBlock,
}

impl GlaModel {
    pub fn new<T: Real>(config: ModelConfig, store: &mut ParamStore<T>, rng: &mut impl Rng) -> Result<Self> {
        if config.partition_rows == 0 || config.partition_cols == 0 {
            return Err(GlaError::Invalid("partition grid must have at least one row and column".into()));
        }
        let modalities = config.variant.modalities();
        let c = config.channels;
        let attend = modalities.len() >= 2;
        let stems = modalities
            .iter()
            .map(|m| InceptionBlock::new(store, &format!("stem.{m}"), config.in_channels, c, rng))
            .collect::<Result<Vec<_>>>()?;
        let local = if attend && config.variant.uses_local() {
            modalities
                .iter()
                .map(|m| AttentionSubnet::new(store, &format!("local.{m}"), c, rng))
                .collect()
        } else {
            Vec::new()
        };
        let global = if attend && config.variant.uses_global() {
            modalities
                .iter()
                .map(|m| AttentionSubnet::new(store, &format!("global.{m}"), c, rng))
                .collect()
        } else {
            Vec::new()
        };
        let stage2 = if config.variant.uses_global() && config.fusion_mode == FusionMode::ModalityWeighted {
            modalities
                .iter()
                .map(|m| InceptionBlock::new(store, &format!("stage2.{m}"), c, c, rng))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let concat_proj = (config.variant == FusionVariant::Concat).then(|| {
            Conv::new(
                store,
                "concat_proj",
                ConvSpec {
                    in_channels: c * modalities.len(),
                    out_channels: c,
                    kernel: 1,
                    bias: true,
                },
                rng,
            )
        });
        let refine = InceptionBlock::new(store, "refine", c, c, rng)?;
        Ok(Self {
            config,
            modalities,
            stems,
            local,
            global,
            stage2,
            concat_proj,
            refine,
        })
    }

    /// Inserts the bundle's active modalities as graph constants and runs the network.
    pub fn forward_bundle<T: Real>(&self, s: &mut Session<'_, T>, bundle: &ModalityBundle<T>) -> Result<FusionOutput> {
        let inputs: Vec<Var> = self
            .modalities
            .iter()
            .map(|&m| s.graph.constant(bundle.get(m).clone()))
            .collect();
        self.forward(s, &inputs)
    }

    /// `inputs` follow [`GlaModel::modalities`].
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, inputs: &[Var]) -> Result<FusionOutput> {
        if inputs.len() != self.modalities.len() {
            return Err(GlaError::Invalid(format!(
                "model expects {} modality inputs, got {}",
                self.modalities.len(),
                inputs.len()
            )));
        }
        let features = self
            .stems
            .iter()
            .zip(inputs)
            .map(|(ib, &x)| ib.forward(s, x))
            .collect::<Result<Vec<_>>>()?;
        let variant = self.config.variant;

        let mut local_weights = Vec::new();
        let f1 = if let Some(proj) = &self.concat_proj {
            let cat = s.graph.concat_channels(&features)?;
            proj.forward(s, cat)?
        } else if features.len() == 1 {
            features[0]
        } else if variant.uses_local() {
            local_weights = attention::local_attention_weights(s, &features, &self.local)?;
            attention::fuse_local(&mut s.graph, &features, &local_weights)?
        } else {
            let total = s.graph.add_all(&features)?;
            s.graph.scale(total, T::one() / T::of(features.len() as f64))?
        };
        let f1_prime = self.refine.forward(s, f1)?;

        let mut global_weights = Vec::new();
        let f2 = if !variant.uses_global() {
            f1_prime
        } else {
            let (_, _, h, w) = s.graph.value(f1_prime).dims4("fusion")?;
            let pixel_weights = if features.len() == 1 {
                let shape = s.graph.value(f1_prime).shape().to_vec();
                vec![s.graph.constant(Tensor::ones(&shape))]
            } else {
                global_weights = attention::global_attention_weights(
                    s,
                    &features,
                    &self.global,
                    self.config.partition_rows,
                    self.config.partition_cols,
                )?;
                global_weights
                    .iter()
                    .map(|&gw| s.graph.broadcast_partitions(gw, h, w))
                    .collect::<gla_tensor::Result<Vec<_>>>()?
            };
            let stage2 = if self.config.fusion_mode == FusionMode::ModalityWeighted {
                Some(
                    self.stage2
                        .iter()
                        .zip(&features)
                        .map(|(ib, &f)| ib.forward(s, f))
                        .collect::<Result<Vec<_>>>()?,
                )
            } else {
                None
            };
            attention::fuse_global(&mut s.graph, f1_prime, stage2.as_deref(), &pixel_weights, self.config.fusion_mode)?
        };

        Ok(FusionOutput {
            features,
            local_weights,
            global_weights,
            f1,
            f1_prime,
            f2,
        })
    }
}
