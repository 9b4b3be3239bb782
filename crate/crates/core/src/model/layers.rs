use std::sync::Arc;

use chrono::NaiveDate;

use super::{ChannelGates, DepthwiseConvLSTMParams, FeatureAttentionParams, ModelParams, SpatialActivation, SpatialAttentionParams};
use crate::error::{Error, Result};
use crate::grid::{GridAxes, WindowedDataset};
use crate::tensor::conv::{check_same_kernel, correlate_same_acc};
use crate::tensor::{sigmoid, softmax_in_place, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleDims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl SampleDims {
    pub fn from_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [t, h, w, c] if t > 0 && h > 0 && w > 0 && c > 0 => Ok(Self { t, h, w, c }),
            _ => Err(Error::Shape(format!("expected a non-empty T×H×W×C window, got {shape:?}"))),
        }
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.t * self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// `T×H×W`
    pub alpha: Tensor,
    /// `C`
    pub beta: Tensor,
}

/// Attention weights of one sample, tied to the day it predicts and to the
/// grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub alpha: Tensor,
    pub beta: Tensor,
    pub target_date: NaiveDate,
    pub axes: Arc<GridAxes>,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub dims: SampleDims,
    /// Window mean per channel.
    pub descriptor: Vec<f64>,
    pub beta: Vec<f64>,
    /// Channel-mean input, `T×HW`.
    pub reduced: Vec<f64>,
    /// `T×HW`
    pub alpha: Vec<f64>,
    /// Attention-weighted input, channel-major `C×T×HW`.
    pub xatt: Vec<f64>,
    /// Gate activations, `C×T×4×HW`.
    pub gates: Vec<f64>,
    /// Cell states, `C×T×HW`.
    pub cells: Vec<f64>,
    /// Hidden states, `C×T×HW`.
    pub hidden: Vec<f64>,
    pub pooled: Vec<f64>,
    pub y_hat: f64,
}

fn check_params(p: &ModelParams, dims: SampleDims) -> Result<()> {
    if p.hyper.channels != dims.c {
        return Err(Error::Shape(format!(
            "model has {} channels, input has {}",
            p.hyper.channels, dims.c
        )));
    }
    check_same_kernel(p.spatial.kernel.rows(), p.spatial.kernel.cols())?;
    check_same_kernel(p.convlstm.kernel, p.convlstm.kernel)?;
    Ok(())
}

/// `β = softmax(W·d)` with `d` the per-channel mean of the window.
fn feature_attention_raw(x: &[f64], dims: SampleDims, weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let c = dims.c;
    let mut d = vec![0.0; c];
    for row in x.chunks_exact(c) {
        for (acc, &v) in d.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let n = (dims.t * dims.cells()) as f64;
    for v in &mut d {
        *v /= n;
    }
    let mut beta: Vec<f64> = (0..c)
        .map(|k| weights[k * c..(k + 1) * c].iter().zip(&d).map(|(w, v)| w * v).sum())
        .collect();
    softmax_in_place(&mut beta);
    (d, beta)
}

/// Channel mean per cell for every timestep, `T×HW`.
fn reduce_channels(x: &[f64], dims: SampleDims) -> Vec<f64> {
    let inv = 1.0 / dims.c as f64;
    x.chunks_exact(dims.c)
        .map(|row| row.iter().sum::<f64>() * inv)
        .collect()
}

fn spatial_attention_raw(
    reduced: &[f64],
    h: usize,
    w: usize,
    p: &SpatialAttentionParams,
    activation: SpatialActivation,
) -> Vec<f64> {
    let k = &p.kernel;
    let mut out = vec![k.bias; h * w];
    correlate_same_acc(reduced, h, w, k.weights(), k.rows(), k.cols(), &mut out);
    match activation {
        SpatialActivation::Sigmoid => out.iter_mut().for_each(|v| *v = sigmoid(*v)),
        SpatialActivation::SoftmaxHw => softmax_in_place(&mut out),
    }
    out
}

/// One LSTM step for one channel on `h×w` maps. Writes the four gate
/// activations (input, forget, candidate, output) into `gates`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_step_raw(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    h: usize,
    w: usize,
    p: &ChannelGates<'_>,
    gates: &mut [f64],
    c_out: &mut [f64],
    h_out: &mut [f64],
) {
    let hw = h * w;
    let k = p.kernel;
    let kk = k * k;
    for g in 0..4 {
        let z = &mut gates[g * hw..(g + 1) * hw];
        z.fill(p.bias[g]);
        correlate_same_acc(x, h, w, &p.input_weights[g * kk..(g + 1) * kk], k, k, z);
        correlate_same_acc(h_prev, h, w, &p.hidden_weights[g * kk..(g + 1) * kk], k, k, z);
        if g == 2 {
            z.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            z.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }
    let (ig, rest) = gates.split_at(hw);
    let (fg, rest) = rest.split_at(hw);
    let (cg, og) = rest.split_at(hw);
    for idx in 0..hw {
        let c = fg[idx] * c_prev[idx] + ig[idx] * cg[idx];
        c_out[idx] = c;
        h_out[idx] = og[idx] * c.tanh();
    }
}

/// Full forward pass of one `T×H×W×C` window (row-major, channel last),
/// keeping the intermediates for [`super::backward`].
pub fn forward_cached(x: &[f64], dims: SampleDims, p: &ModelParams) -> Result<ForwardCache> {
    check_params(p, dims)?;
    if x.len() != dims.len() {
        return Err(Error::Shape(format!(
            "window has {} values, expected {}",
            x.len(),
            dims.len()
        )));
    }
    let SampleDims { t, h, w, c } = dims;
    let hw = dims.cells();

    let (descriptor, beta) = feature_attention_raw(x, dims, p.feature.weights.data());
    let reduced = reduce_channels(x, dims);
    let mut alpha = Vec::with_capacity(t * hw);
    for step in 0..t {
        alpha.extend(spatial_attention_raw(
            &reduced[step * hw..(step + 1) * hw],
            h,
            w,
            &p.spatial,
            p.hyper.spatial_activation,
        ));
    }

    let mut xatt = vec![0.0; c * t * hw];
    for step in 0..t {
        for cell in 0..hw {
            let a = alpha[step * hw + cell];
            let row = &x[(step * hw + cell) * c..(step * hw + cell + 1) * c];
            for ch in 0..c {
                xatt[(ch * t + step) * hw + cell] = a * beta[ch] * row[ch];
            }
        }
    }

    let mut gates = vec![0.0; c * t * 4 * hw];
    let mut cells = vec![0.0; c * t * hw];
    let mut hidden = vec![0.0; c * t * hw];
    let zeros = vec![0.0; hw];
    for ch in 0..c {
        let gp = p.convlstm.channel(ch);
        for step in 0..t {
            let base = (ch * t + step) * hw;
            let (c_done, c_rest) = cells.split_at_mut(base);
            let (h_done, h_rest) = hidden.split_at_mut(base);
            let (prev_c, prev_h) = if step == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&c_done[base - hw..], &h_done[base - hw..])
            };
            lstm_step_raw(
                &xatt[base..base + hw],
                prev_h,
                prev_c,
                h,
                w,
                &gp,
                &mut gates[base * 4..(base + hw) * 4],
                &mut c_rest[..hw],
                &mut h_rest[..hw],
            );
        }
    }

    let pooled: Vec<f64> = (0..c)
        .map(|ch| {
            let base = (ch * t + t - 1) * hw;
            hidden[base..base + hw].iter().sum::<f64>() / hw as f64
        })
        .collect();
    let y_hat = p
        .readout
        .weights
        .data()
        .iter()
        .zip(&pooled)
        .map(|(w, v)| w * v)
        .sum::<f64>()
        + p.readout.bias;

    Ok(ForwardCache {
        dims,
        descriptor,
        beta,
        reduced,
        alpha,
        xatt,
        gates,
        cells,
        hidden,
        pooled,
        y_hat,
    })
}

/// Prediction and attention weights for one `T×H×W×C` window.
pub fn forward(x_window: &Tensor, p: &ModelParams) -> Result<(f64, AttentionWeights)> {
    let dims = SampleDims::from_shape(x_window.shape())?;
    let cache = forward_cached(x_window.data(), dims, p)?;
    let alpha = Tensor::new(vec![dims.t, dims.h, dims.w], cache.alpha)?;
    let beta = Tensor::new(vec![dims.c], cache.beta)?;
    Ok((cache.y_hat, AttentionWeights { alpha, beta }))
}

/// Only the attention branch of [`forward`]; skips the recurrent part.
pub(crate) fn attention_only(x: &[f64], dims: SampleDims, p: &ModelParams) -> Result<AttentionWeights> {
    check_params(p, dims)?;
    let (_, beta) = feature_attention_raw(x, dims, p.feature.weights.data());
    let reduced = reduce_channels(x, dims);
    let hw = dims.cells();
    let mut alpha = Vec::with_capacity(dims.t * hw);
    for step in 0..dims.t {
        alpha.extend(spatial_attention_raw(
            &reduced[step * hw..(step + 1) * hw],
            dims.h,
            dims.w,
            &p.spatial,
            p.hyper.spatial_activation,
        ));
    }
    Ok(AttentionWeights {
        alpha: Tensor::new(vec![dims.t, dims.h, dims.w], alpha)?,
        beta: Tensor::new(vec![dims.c], beta)?,
    })
}

/// Spatial attention of one `H×W×C` timestep with the default sigmoid
/// activation: channel mean, same-mode convolution, sigmoid.
pub fn spatial_attention(x_t: &Tensor, p: &SpatialAttentionParams) -> Result<Tensor> {
    let &[h, w, c] = x_t.shape() else {
        return Err(Error::Shape(format!("expected H×W×C, got {:?}", x_t.shape())));
    };
    if c == 0 {
        return Err(Error::Shape("no channels".into()));
    }
    check_same_kernel(p.kernel.rows(), p.kernel.cols())?;
    let dims = SampleDims { t: 1, h, w, c };
    let reduced = reduce_channels(x_t.data(), dims);
    Tensor::new(
        vec![h, w],
        spatial_attention_raw(&reduced, h, w, p, SpatialActivation::Sigmoid),
    )
}

pub fn feature_attention(x_window: &Tensor, p: &FeatureAttentionParams) -> Result<Tensor> {
    let dims = SampleDims::from_shape(x_window.shape())?;
    if p.weights.shape() != [dims.c, dims.c] {
        return Err(Error::Shape(format!(
            "feature weights {:?} for {} channels",
            p.weights.shape(),
            dims.c
        )));
    }
    let (_, beta) = feature_attention_raw(x_window.data(), dims, p.weights.data());
    Tensor::new(vec![dims.c], beta)
}

/// `out[t,i,j,c] = alpha[t,i,j] · beta[c] · x[t,i,j,c]`
pub fn apply_attention(x: &Tensor, alpha: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let dims = SampleDims::from_shape(x.shape())?;
    if alpha.shape() != [dims.t, dims.h, dims.w] || beta.shape() != [dims.c] {
        return Err(Error::Shape(format!(
            "alpha {:?} / beta {:?} do not conform to {:?}",
            alpha.shape(),
            beta.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for (cell, row) in out.data_mut().chunks_exact_mut(dims.c).enumerate() {
        let a = alpha.data()[cell];
        for (v, b) in row.iter_mut().zip(beta.data()) {
            *v *= a * b;
        }
    }
    Ok(out)
}

/// One ConvLSTM step for a single channel's `H×W` maps.
pub fn depthwise_convlstm_step(
    x: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    p: &ChannelGates<'_>,
) -> Result<(Tensor, Tensor)> {
    let &[h, w] = x.shape() else {
        return Err(Error::Shape(format!("expected H×W, got {:?}", x.shape())));
    };
    if h_prev.shape() != x.shape() || c_prev.shape() != x.shape() {
        return Err(Error::Shape("state maps must match the input map".into()));
    }
    check_same_kernel(p.kernel, p.kernel)?;
    let hw = h * w;
    let mut gates = vec![0.0; 4 * hw];
    let mut c_out = vec![0.0; hw];
    let mut h_out = vec![0.0; hw];
    lstm_step_raw(
        x.data(),
        h_prev.data(),
        c_prev.data(),
        h,
        w,
        p,
        &mut gates,
        &mut c_out,
        &mut h_out,
    );
    Ok((Tensor::new(vec![h, w], h_out)?, Tensor::new(vec![h, w], c_out)?))
}

/// Runs each channel's LSTM over time from zero state; returns the hidden
/// states concatenated over channels, `T×H×W×C`.
pub fn depthwise_convlstm_forward(x: &Tensor, p: &DepthwiseConvLSTMParams) -> Result<Tensor> {
    let dims = SampleDims::from_shape(x.shape())?;
    if p.channels() != dims.c {
        return Err(Error::Shape(format!(
            "ConvLSTM has {} channels, input has {}",
            p.channels(),
            dims.c
        )));
    }
    check_same_kernel(p.kernel, p.kernel)?;
    let SampleDims { t, h, w, c } = dims;
    let hw = h * w;
    let mut out = vec![0.0; x.len()];
    let mut gates = vec![0.0; 4 * hw];
    let mut xc = vec![0.0; hw];
    for ch in 0..c {
        let gp = p.channel(ch);
        let mut h_state = vec![0.0; hw];
        let mut c_state = vec![0.0; hw];
        let mut h_next = vec![0.0; hw];
        let mut c_next = vec![0.0; hw];
        for step in 0..t {
            for cell in 0..hw {
                xc[cell] = x.data()[(step * hw + cell) * c + ch];
            }
            lstm_step_raw(&xc, &h_state, &c_state, h, w, &gp, &mut gates, &mut c_next, &mut h_next);
            std::mem::swap(&mut h_state, &mut h_next);
            std::mem::swap(&mut c_state, &mut c_next);
            for cell in 0..hw {
                out[(step * hw + cell) * c + ch] = h_state[cell];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// One record per sample, ordered by target date.
pub fn extract_attention(p: &ModelParams, ds: &WindowedDataset) -> Result<Vec<AttentionRecord>> {
    let dims = SampleDims::from_shape(&ds.sample_shape())?;
    let axes = ds.shared_axes();
    let mut records = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let weights = attention_only(ds.input(i), dims, p)?;
        records.push(AttentionRecord {
            alpha: weights.alpha,
            beta: weights.beta,
            target_date: ds.target_dates()[i],
            axes: Arc::clone(&axes),
        });
    }
    records.sort_by_key(|r| r.target_date);
    Ok(records)
}
