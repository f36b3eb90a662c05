//! Local (pixel-level) and global (partition-level) attention across modalities and the
//! two weighted fusion stages that consume them.

use gla_tensor::{Graph, Real, Var};
use rand::Rng;

use crate::error::{GlaError, Result};
use crate::nn::{BatchNorm, Conv, ConvSpec, ParamStore, Session};

/// `Conv3(BN2(Conv2(ReLU(BN1(Conv1(x))))))` with 3x3, 3x3, 1x1 kernels, all `C -> C`.
#[derive(Debug, Clone)]
pub struct AttentionSubnet {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    conv3: Conv,
}

impl AttentionSubnet {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize, rng: &mut impl Rng) -> Self {
        let spec = |kernel, bias| ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel,
            bias,
        };
        let conv1 = Conv::new(store, &format!("{name}.conv1"), spec(3, false), rng);
        let bn1 = BatchNorm::new(store, &format!("{name}.bn1"), channels);
        let conv2 = Conv::new(store, &format!("{name}.conv2"), spec(3, false), rng);
        let bn2 = BatchNorm::new(store, &format!("{name}.bn2"), channels);
        let conv3 = Conv::new(store, &format!("{name}.conv3"), spec(1, true), rng);
        Self {
            conv1,
            bn1,
            conv2,
            bn2,
            conv3,
        }
    }

    /// Attention logits for one modality.
    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv1.forward(s, x)?;
        let y = self.bn1.forward(s, y)?;
        let y = s.graph.relu(y)?;
        let y = self.conv2.forward(s, y)?;
        let y = self.bn2.forward(s, y)?;
        self.conv3.forward(s, y)
    }
}

fn check_pairing(features: &[Var], subnets: &[AttentionSubnet]) -> Result<()> {
    if features.len() != subnets.len() || features.len() < 2 {
        return Err(GlaError::Invalid(format!(
            "attention over {} modalities with {} subnets",
            features.len(),
            subnets.len()
        )));
    }
    Ok(())
}

/// Per-pixel weights: each modality's own subnet yields logits, then a softmax across modalities.
pub fn local_attention_weights<T: Real>(
    s: &mut Session<'_, T>,
    features: &[Var],
    subnets: &[AttentionSubnet],
) -> Result<Vec<Var>> {
    check_pairing(features, subnets)?;
    let logits = features
        .iter()
        .zip(subnets)
        .map(|(&f, net)| net.forward(s, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(s.graph.modality_softmax(&logits)?)
}

/// Per-partition weights: features are average pooled onto a `rows x cols` grid, the
/// subnet runs on the grid, then a softmax across modalities.
pub fn global_attention_weights<T: Real>(
    s: &mut Session<'_, T>,
    features: &[Var],
    subnets: &[AttentionSubnet],
    rows: usize,
    cols: usize,
) -> Result<Vec<Var>> {
    check_pairing(features, subnets)?;
    let logits = features
        .iter()
        .zip(subnets)
        .map(|(&f, net)| {
            let pooled = s.graph.partition_avg_pool(f, rows, cols)?;
            net.forward(s, pooled)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(s.graph.modality_softmax(&logits)?)
}

/// `F1 = sum_m F_m * w_m`.
pub fn fuse_local<T: Real>(g: &mut Graph<T>, features: &[Var], weights: &[Var]) -> Result<Var> {
    if features.len() != weights.len() || features.is_empty() {
        return Err(GlaError::Invalid(format!(
            "fuse_local: {} features vs {} weights",
            features.len(),
            weights.len()
        )));
    }
    let terms = features
        .iter()
        .zip(weights)
        .map(|(&f, &w)| g.mul(f, w))
        .collect::<gla_tensor::Result<Vec<_>>>()?;
    Ok(g.add_all(&terms)?)
}

/// How the second fusion stage combines the global weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// `F2 = sum_m F1' * GA_m`, which equals `F1'` because the weights sum to one.
    Literal,
    /// `F2 = F1' + sum_m IB2_m(F_m) * GA_m`.
    ModalityWeighted,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Literal => "literal",
            FusionMode::ModalityWeighted => "modality-weighted",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "literal" => Ok(FusionMode::Literal),
            "modality-weighted" => Ok(FusionMode::ModalityWeighted),
            other => Err(format!("unknown fusion mode '{other}'")),
        }
    }
}

/// Second-stage fusion. `pixel_weights` are the global weights already broadcast to
/// feature resolution; `stage2_features` holds `IB2_m(F_m)` and is required in
/// [`FusionMode::ModalityWeighted`].
pub fn fuse_global<T: Real>(
    g: &mut Graph<T>,
    f1_prime: Var,
    stage2_features: Option<&[Var]>,
    pixel_weights: &[Var],
    mode: FusionMode,
) -> Result<Var> {
    match mode {
        FusionMode::Literal => {
            let terms = pixel_weights
                .iter()
                .map(|&w| g.mul(f1_prime, w))
                .collect::<gla_tensor::Result<Vec<_>>>()?;
            Ok(g.add_all(&terms)?)
        }
        FusionMode::ModalityWeighted => {
            let stage2 = stage2_features
                .ok_or_else(|| GlaError::Invalid("modality-weighted fusion needs stage-2 features".into()))?;
            if stage2.len() != pixel_weights.len() {
                return Err(GlaError::Invalid(format!(
                    "fuse_global: {} stage-2 features vs {} weights",
                    stage2.len(),
                    pixel_weights.len()
                )));
            }
            let mut terms = vec![f1_prime];
            for (&f, &w) in stage2.iter().zip(pixel_weights) {
                terms.push(g.mul(f, w)?);
            }
            Ok(g.add_all(&terms)?)
        }
    }
}
