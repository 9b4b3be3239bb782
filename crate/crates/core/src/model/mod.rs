//! The streamflow network.
//!
//! Per sample (`T×H×W×C` window):
//!
//! 1. feature attention `β = softmax(W·d)`, `d[c]` the window mean of channel `c`
//! 2. spatial attention per timestep `α_t = σ(conv(mean_c x_t))`
//! 3. `x_att = α ⊙ β ⊙ x`
//! 4. depthwise ConvLSTM: one single-map LSTM per channel, gates from
//!    same-mode convolutions of the input and previous hidden map
//! 5. last hidden state, averaged over the grid per channel, then a linear
//!    readout to one scalar
//!
//! Gradients are hand-derived reverse mode; see [`backward`].

pub mod backward;
pub mod checkpoint;
pub mod layers;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader};
pub use layers::{
    apply_attention, depthwise_convlstm_forward, depthwise_convlstm_step, extract_attention,
    feature_attention, forward, forward_cached, spatial_attention, AttentionRecord,
    AttentionWeights, ForwardCache, SampleDims,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Kernel2D, Tensor};

/// Gate order used in every per-channel weight block.
pub const GATES: [&str; 4] = ["input", "forget", "cell", "output"];

/// Parameter tensors in checkpoint order.
pub const PARAM_NAMES: [&str; 8] = [
    "spatial.kernel",
    "spatial.bias",
    "feature.weights",
    "convlstm.input_weights",
    "convlstm.hidden_weights",
    "convlstm.bias",
    "readout.weights",
    "readout.bias",
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialActivation {
    #[default]
    Sigmoid,
    /// Softmax over all `H×W` cells of a timestep. Weights sum to one per
    /// timestep; extreme logits can underflow a cell to exactly zero.
    SoftmaxHw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHyper {
    pub channels: usize,
    /// ConvLSTM gate kernel size `K` (odd).
    pub kernel: usize,
    /// Spatial attention kernel size `K_a` (odd).
    pub att_kernel: usize,
    #[serde(default)]
    pub spatial_activation: SpatialActivation,
}

impl ModelHyper {
    pub fn new(channels: usize, kernel: usize, att_kernel: usize) -> Self {
        Self {
            channels,
            kernel,
            att_kernel,
            spatial_activation: SpatialActivation::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::config("channels", "must be at least 1"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::config("kernel", format!("{} is not odd", self.kernel)));
        }
        if self.att_kernel % 2 == 0 {
            return Err(Error::config("att_kernel", format!("{} is not odd", self.att_kernel)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialAttentionParams {
    pub kernel: Kernel2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureAttentionParams {
    /// `C×C`; row `k` produces the logit of feature `k`.
    pub weights: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConvLSTMParams {
    pub kernel: usize,
    /// `C×4×K×K`, gates in [`GATES`] order.
    pub input_weights: Tensor,
    /// `C×4×K×K`
    pub hidden_weights: Tensor,
    /// `C×4`
    pub bias: Tensor,
}

/// Borrowed view of one channel's gate parameters.
#[derive(Debug, Clone, Copy)]
pub struct ChannelGates<'a> {
    pub kernel: usize,
    pub input_weights: &'a [f64],
    pub hidden_weights: &'a [f64],
    pub bias: &'a [f64],
}

impl DepthwiseConvLSTMParams {
    pub fn zeros(channels: usize, kernel: usize) -> Self {
        Self {
            kernel,
            input_weights: Tensor::zeros(&[channels, 4, kernel, kernel]),
            hidden_weights: Tensor::zeros(&[channels, 4, kernel, kernel]),
            bias: Tensor::zeros(&[channels, 4]),
        }
    }

    pub fn channels(&self) -> usize {
        self.bias.shape()[0]
    }

    pub fn channel(&self, c: usize) -> ChannelGates<'_> {
        let block = 4 * self.kernel * self.kernel;
        ChannelGates {
            kernel: self.kernel,
            input_weights: &self.input_weights.data()[c * block..(c + 1) * block],
            hidden_weights: &self.hidden_weights.data()[c * block..(c + 1) * block],
            bias: &self.bias.data()[c * 4..(c + 1) * 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutParams {
    pub weights: Tensor,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: ModelHyper,
    pub spatial: SpatialAttentionParams,
    pub feature: FeatureAttentionParams,
    pub convlstm: DepthwiseConvLSTMParams,
    pub readout: ReadoutParams,
}

impl ModelParams {
    pub fn zeros(hyper: &ModelHyper) -> Self {
        let c = hyper.channels;
        Self {
            hyper: hyper.clone(),
            spatial: SpatialAttentionParams {
                kernel: Kernel2D::zeros(hyper.att_kernel, hyper.att_kernel),
            },
            feature: FeatureAttentionParams {
                weights: Tensor::zeros(&[c, c]),
            },
            convlstm: DepthwiseConvLSTMParams::zeros(c, hyper.kernel),
            readout: ReadoutParams {
                weights: Tensor::zeros(&[c]),
                bias: 0.0,
            },
        }
    }

    /// Weights uniform in `[-s, s]` with `s = 1/√fan_in`; biases zero.
    pub fn init(hyper: &ModelHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut p = Self::zeros(hyper);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |buf: &mut [f64], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in buf {
                *v = rng.gen_range(-s..=s);
            }
        };
        let (c, k, ka) = (hyper.channels, hyper.kernel, hyper.att_kernel);
        fill(p.spatial.kernel.weights_mut(), ka * ka);
        fill(p.feature.weights.data_mut(), c);
        fill(p.convlstm.input_weights.data_mut(), 2 * k * k);
        fill(p.convlstm.hidden_weights.data_mut(), 2 * k * k);
        fill(p.readout.weights.data_mut(), c);
        Ok(p)
    }

    /// Same layout, all values zero; used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.hyper)
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 8] {
        [
            (PARAM_NAMES[0], self.spatial.kernel.weights()),
            (PARAM_NAMES[1], std::slice::from_ref(&self.spatial.kernel.bias)),
            (PARAM_NAMES[2], self.feature.weights.data()),
            (PARAM_NAMES[3], self.convlstm.input_weights.data()),
            (PARAM_NAMES[4], self.convlstm.hidden_weights.data()),
            (PARAM_NAMES[5], self.convlstm.bias.data()),
            (PARAM_NAMES[6], self.readout.weights.data()),
            (PARAM_NAMES[7], std::slice::from_ref(&self.readout.bias)),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut [f64]); 8] {
        let (kw, kb) = self.spatial.kernel.parts_mut();
        [
            (PARAM_NAMES[0], kw),
            (PARAM_NAMES[1], std::slice::from_mut(kb)),
            (PARAM_NAMES[2], self.feature.weights.data_mut()),
            (PARAM_NAMES[3], self.convlstm.input_weights.data_mut()),
            (PARAM_NAMES[4], self.convlstm.hidden_weights.data_mut()),
            (PARAM_NAMES[5], self.convlstm.bias.data_mut()),
            (PARAM_NAMES[6], self.readout.weights.data_mut()),
            (PARAM_NAMES[7], std::slice::from_mut(&mut self.readout.bias)),
        ]
    }

    /// Shapes in [`PARAM_NAMES`] order.
    pub fn shapes(&self) -> [Vec<usize>; 8] {
        let (c, k, ka) = (self.hyper.channels, self.hyper.kernel, self.hyper.att_kernel);
        [
            vec![ka, ka],
            vec![1],
            vec![c, c],
            vec![c, 4, k, k],
            vec![c, 4, k, k],
            vec![c, 4],
            vec![c],
            vec![1],
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
    }

    /// `self += factor · other` (same layout).
    pub fn add_scaled(&mut self, other: &ModelParams, factor: f64) {
        let src = other.tensors();
        for ((_, dst), (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += factor * v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let hyper = ModelHyper::new(3, 3, 5);
        let a = ModelParams::init(&hyper, 7).unwrap();
        let b = ModelParams::init(&hyper, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, ModelParams::init(&hyper, 8).unwrap());
        let bound = 1.0 / (18f64).sqrt();
        assert!(a.convlstm.input_weights.data().iter().all(|v| v.abs() <= bound));
        assert!(a.spatial.kernel.weights().iter().all(|v| v.abs() <= 0.2));
        assert_eq!(a.readout.bias, 0.0);
    }

    #[test]
    fn even_kernels_rejected() {
        assert!(ModelParams::init(&ModelHyper::new(2, 4, 3), 0).is_err());
        assert!(ModelParams::init(&ModelHyper::new(2, 3, 2), 0).is_err());
    }

    #[test]
    fn layout_matches_shapes() {
        let p = ModelParams::init(&ModelHyper::new(4, 5, 3), 1).unwrap();
        for ((name, t), shape) in p.tensors().iter().zip(p.shapes()) {
            assert_eq!(t.len(), shape.iter().product::<usize>(), "{name}");
        }
        assert_eq!(p.num_params(), 9 + 1 + 16 + 2 * 4 * 4 * 25 + 16 + 4 + 1);
    }
}
