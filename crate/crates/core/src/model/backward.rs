//! Reverse pass for [`super::forward_cached`].

use super::layers::ForwardCache;
use super::{ModelParams, SpatialActivation};
use crate::tensor::conv::{correlate_same_input_grad_acc, correlate_same_kernel_grad_acc};

/// Accumulates `d_yhat · ∂ŷ/∂θ` into `grads` for every parameter.
///
/// `x` is the same window that produced `cache`.
pub fn backward(cache: &ForwardCache, x: &[f64], p: &ModelParams, d_yhat: f64, grads: &mut ModelParams) {
    let dims = cache.dims;
    let (t, h, w, c) = (dims.t, dims.h, dims.w, dims.c);
    let hw = h * w;

    // Readout and pooling.
    for ch in 0..c {
        grads.readout.weights.data_mut()[ch] += d_yhat * cache.pooled[ch];
    }
    grads.readout.bias += d_yhat;

    // Recurrent part, channel by channel.
    let k = p.convlstm.kernel;
    let kk = k * k;
    let block = 4 * kk;
    let mut d_xatt = vec![0.0; c * t * hw];
    let mut dh = vec![0.0; hw];
    let mut dc = vec![0.0; hw];
    let mut dh_prev = vec![0.0; hw];
    let mut dz = vec![0.0; 4 * hw];
    let zeros = vec![0.0; hw];
    for ch in 0..c {
        let gp = p.convlstm.channel(ch);
        let seed = d_yhat * p.readout.weights.data()[ch] / hw as f64;
        dh.fill(seed);
        dc.fill(0.0);
        let gw_in = &mut grads.convlstm.input_weights.data_mut()[ch * block..(ch + 1) * block];
        for step in (0..t).rev() {
            let base = (ch * t + step) * hw;
            let gates = &cache.gates[base * 4..(base + hw) * 4];
            let (ig, rest) = gates.split_at(hw);
            let (fg, rest) = rest.split_at(hw);
            let (cg, og) = rest.split_at(hw);
            let cell = &cache.cells[base..base + hw];
            let (c_prev, h_prev) = if step == 0 {
                (&zeros[..], &zeros[..])
            } else {
                (&cache.cells[base - hw..base], &cache.hidden[base - hw..base])
            };
            {
                let (dzi, rest) = dz.split_at_mut(hw);
                let (dzf, rest) = rest.split_at_mut(hw);
                let (dzc, dzo) = rest.split_at_mut(hw);
                for idx in 0..hw {
                    let tc = cell[idx].tanh();
                    let (i, f, g, o) = (ig[idx], fg[idx], cg[idx], og[idx]);
                    let d_o = dh[idx] * tc;
                    let d_c = dc[idx] + dh[idx] * o * (1.0 - tc * tc);
                    dzi[idx] = d_c * g * i * (1.0 - i);
                    dzf[idx] = d_c * c_prev[idx] * f * (1.0 - f);
                    dzc[idx] = d_c * i * (1.0 - g * g);
                    dzo[idx] = d_o * o * (1.0 - o);
                    dc[idx] = d_c * f;
                }
            }
            let xin = &cache.xatt[base..base + hw];
            let dx = &mut d_xatt[base..base + hw];
            dh_prev.fill(0.0);
            for g in 0..4 {
                let dzg = &dz[g * hw..(g + 1) * hw];
                let wx = &gp.input_weights[g * kk..(g + 1) * kk];
                let wh = &gp.hidden_weights[g * kk..(g + 1) * kk];
                correlate_same_kernel_grad_acc(xin, dzg, h, w, k, k, &mut gw_in[g * kk..(g + 1) * kk]);
                correlate_same_input_grad_acc(dzg, h, w, wx, k, k, dx);
                if step > 0 {
                    correlate_same_input_grad_acc(dzg, h, w, wh, k, k, &mut dh_prev);
                }
            }
            if step > 0 {
                let gw_h = &mut grads.convlstm.hidden_weights.data_mut()[ch * block..(ch + 1) * block];
                for g in 0..4 {
                    let dzg = &dz[g * hw..(g + 1) * hw];
                    correlate_same_kernel_grad_acc(h_prev, dzg, h, w, k, k, &mut gw_h[g * kk..(g + 1) * kk]);
                }
            }
            let gb = &mut grads.convlstm.bias.data_mut()[ch * 4..(ch + 1) * 4];
            for (g, b) in gb.iter_mut().enumerate() {
                *b += dz[g * hw..(g + 1) * hw].iter().sum::<f64>();
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
    }

    // x_att = α ⊙ β ⊙ x
    let mut d_alpha = vec![0.0; t * hw];
    let mut d_beta = vec![0.0; c];
    for step in 0..t {
        for cell in 0..hw {
            let row = &x[(step * hw + cell) * c..(step * hw + cell + 1) * c];
            let a = cache.alpha[step * hw + cell];
            let mut acc = 0.0;
            for ch in 0..c {
                let g = d_xatt[(ch * t + step) * hw + cell] * row[ch];
                acc += g * cache.beta[ch];
                d_beta[ch] += g * a;
            }
            d_alpha[step * hw + cell] = acc;
        }
    }

    // Spatial attention.
    let kernel = &p.spatial.kernel;
    let (kr, kc) = (kernel.rows(), kernel.cols());
    let mut ds = vec![0.0; hw];
    for step in 0..t {
        let a = &cache.alpha[step * hw..(step + 1) * hw];
        let da = &d_alpha[step * hw..(step + 1) * hw];
        match p.hyper.spatial_activation {
            SpatialActivation::Sigmoid => {
                for idx in 0..hw {
                    ds[idx] = da[idx] * a[idx] * (1.0 - a[idx]);
                }
            }
            SpatialActivation::SoftmaxHw => {
                let dot: f64 = a.iter().zip(da).map(|(u, v)| u * v).sum();
                for idx in 0..hw {
                    ds[idx] = a[idx] * (da[idx] - dot);
                }
            }
        }
        correlate_same_kernel_grad_acc(
            &cache.reduced[step * hw..(step + 1) * hw],
            &ds,
            h,
            w,
            kr,
            kc,
            grads.spatial.kernel.weights_mut(),
        );
        grads.spatial.kernel.bias += ds.iter().sum::<f64>();
    }

    // Feature attention: β = softmax(W·d).
    let dot: f64 = cache.beta.iter().zip(&d_beta).map(|(b, g)| b * g).sum();
    let gw = grads.feature.weights.data_mut();
    for kidx in 0..c {
        let dl = cache.beta[kidx] * (d_beta[kidx] - dot);
        for ch in 0..c {
            gw[kidx * c + ch] += dl * cache.descriptor[ch];
        }
    }
}
