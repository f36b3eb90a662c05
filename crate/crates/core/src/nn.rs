//! Named parameter storage and the layer primitives the model is assembled from.

use gla_tensor::{BatchNormMode, Gradients, Graph, Real, RunningStats, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StatsId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::ConvWeight => "conv_weight",
            ParamKind::ConvBias => "conv_bias",
            ParamKind::BnGamma => "bn_gamma",
            ParamKind::BnBeta => "bn_beta",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "conv_weight" => ParamKind::ConvWeight,
            "conv_bias" => ParamKind::ConvBias,
            "bn_gamma" => ParamKind::BnGamma,
            "bn_beta" => ParamKind::BnBeta,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct NamedStats<T> {
    pub name: String,
    pub stats: RunningStats<T>,
}

/// Every trainable tensor and batch-norm buffer of a model, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    stats: Vec<NamedStats<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            kind,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_stats(&mut self, name: impl Into<String>, channels: usize) -> StatsId {
        self.stats.push(NamedStats {
            name: name.into(),
            stats: RunningStats::new(channels),
        });
        StatsId(self.stats.len() - 1)
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn stats(&self) -> &[NamedStats<T>] {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut [NamedStats<T>] {
        &mut self.stats
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn param_name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn running(&self, id: StatsId) -> &RunningStats<T> {
        &self.stats[id.0].stats
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Ids of parameters whose name starts with `prefix`.
    pub fn ids_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = ParamId> + 'a {
        self.params
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.name.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: p.value.cast(),
                })
                .collect(),
            stats: self
                .stats
                .iter()
                .map(|s| NamedStats {
                    name: s.name.clone(),
                    stats: RunningStats {
                        mean: s.stats.mean.iter().map(|&v| U::of(v.as_f64())).collect(),
                        var: s.stats.var.iter().map(|&v| U::of(v.as_f64())).collect(),
                    },
                })
                .collect(),
        }
    }
}

/// One forward pass: the tape plus lazily inserted parameter leaves.
pub struct Session<'s, T> {
    pub graph: Graph<T>,
    store: &'s mut ParamStore<T>,
    vars: Vec<Option<Var>>,
    train: bool,
}

impl<'s, T: Real> Session<'s, T> {
    pub fn new(store: &'s mut ParamStore<T>, train: bool) -> Self {
        let vars = vec![None; store.len()];
        Self {
            graph: Graph::new(),
            store,
            vars,
            train,
        }
    }

    pub fn is_train(&self) -> bool {
        self.train
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = self.graph.param(self.store.params[id.0].value.clone());
        self.vars[id.0] = Some(v);
        v
    }

    pub fn batch_norm(&mut self, input: Var, gamma: ParamId, beta: ParamId, stats: StatsId) -> Result<Var> {
        let g = self.param(gamma);
        let b = self.param(beta);
        let running = &mut self.store.stats[stats.0].stats;
        let mode = if self.train {
            BatchNormMode::Train {
                running,
                momentum: T::of(BN_MOMENTUM),
            }
        } else {
            BatchNormMode::Eval { running }
        };
        Ok(self.graph.batch_norm(input, g, b, mode, T::of(BN_EPS))?)
    }

    /// Gradient per stored parameter, `None` where the loss does not depend on it.
    pub fn param_grads(&self, grads: &mut Gradients<T>) -> Vec<Option<Tensor<T>>> {
        self.vars.iter().map(|v| v.and_then(|v| grads.take(v))).collect()
    }

    /// Var of a parameter if this pass touched it.
    pub fn param_var(&self, id: ParamId) -> Option<Var> {
        self.vars[id.0]
    }
}

/// He-normal initialized convolution; bias only where no batch norm follows.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
}

pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub bias: bool,
}

impl Conv {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, spec: ConvSpec, rng: &mut impl Rng) -> Self {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        Self::with_init(store, name, spec, std, 0.0, rng)
    }

    pub fn with_init<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        spec: ConvSpec,
        weight_std: f64,
        bias_value: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let normal = Normal::new(0.0, weight_std).expect("positive std");
        let shape = [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel];
        let weight = Tensor::from_fn(&shape, |_| T::of(normal.sample(rng)));
        let weight = store.add(format!("{name}.weight"), ParamKind::ConvWeight, weight);
        let bias = spec.bias.then(|| {
            store.add(
                format!("{name}.bias"),
                ParamKind::ConvBias,
                Tensor::full(&[spec.out_channels], T::of(bias_value)),
            )
        });
        Self {
            weight,
            bias,
            stride: 1,
            pad: spec.kernel / 2,
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let w = s.param(self.weight);
        let b = self.bias.map(|b| s.param(b));
        Ok(s.graph.conv2d(x, w, b, self.stride, self.pad)?)
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: StatsId,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), ParamKind::BnGamma, Tensor::ones(&[channels])),
            beta: store.add(format!("{name}.beta"), ParamKind::BnBeta, Tensor::zeros(&[channels])),
            stats: store.add_stats(format!("{name}.running"), channels),
        }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        s.batch_norm(x, self.gamma, self.beta, self.stats)
    }
}

/// Conv -> BN -> ReLU.
#[derive(Debug, Clone)]
pub struct ConvBnRelu {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl ConvBnRelu {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let conv = Conv::new(
            store,
            &format!("{name}.conv"),
            ConvSpec {
                in_channels,
                out_channels,
                kernel,
                bias: false,
            },
            rng,
        );
        let bn = BatchNorm::new(store, &format!("{name}.bn"), out_channels);
        Self { conv, bn }
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(s, x)?;
        let y = self.bn.forward(s, y)?;
        Ok(s.graph.relu(y)?)
    }
}
