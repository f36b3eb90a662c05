use gla_tensor::{Real, Var};
use rand::Rng;

use crate::error::{GlaError, Result};
use crate::nn::{ConvBnRelu, ParamStore, Session};

/// Four parallel branches of `out/4` channels each, concatenated:
/// 1x1; 1x1 -> 3x3; 1x1 -> 3x3 -> 3x3; 3x3 average pool -> 1x1.
/// Every convolution is followed by batch norm and ReLU; spatial size is preserved.
#[derive(Debug, Clone)]
pub struct InceptionBlock {
    pub in_channels: usize,
    pub out_channels: usize,
    point: ConvBnRelu,
    narrow_reduce: ConvBnRelu,
    narrow: ConvBnRelu,
    wide_reduce: ConvBnRelu,
    wide_a: ConvBnRelu,
    wide_b: ConvBnRelu,
    pool_proj: ConvBnRelu,
}

impl InceptionBlock {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if out_channels == 0 || out_channels % 4 != 0 {
            return Err(GlaError::Invalid(format!(
                "{name}: inception block width {out_channels} is not a positive multiple of 4"
            )));
        }
        let b = out_channels / 4;
        let mut unit = |suffix: &str, cin: usize, k: usize| ConvBnRelu::new(store, &format!("{name}.{suffix}"), cin, b, k, rng);
        Ok(Self {
            in_channels,
            out_channels,
            point: unit("b1", in_channels, 1),
            narrow_reduce: unit("b2.reduce", in_channels, 1),
            narrow: unit("b2.conv", b, 3),
            wide_reduce: unit("b3.reduce", in_channels, 1),
            wide_a: unit("b3.conv_a", b, 3),
            wide_b: unit("b3.conv_b", b, 3),
            pool_proj: unit("b4.proj", in_channels, 1),
        })
    }

    pub fn forward<T: Real>(&self, s: &mut Session<'_, T>, x: Var) -> Result<Var> {
        let b1 = self.point.forward(s, x)?;
        let b2 = self.narrow_reduce.forward(s, x)?;
        let b2 = self.narrow.forward(s, b2)?;
        let b3 = self.wide_reduce.forward(s, x)?;
        let b3 = self.wide_a.forward(s, b3)?;
        let b3 = self.wide_b.forward(s, b3)?;
        let pooled = s.graph.avg_pool3(x)?;
        let b4 = self.pool_proj.forward(s, pooled)?;
        Ok(s.graph.concat_channels(&[b1, b2, b3, b4])?)
    }
}
