//! 2-D cross-correlation.
//!
//! `valid` mode is the top-left anchored sum
//! `y(i,j) = Σ_m Σ_n x(i+m-1, j+n-1)·k(m,n) + bias` (no kernel flip), so the
//! output shrinks to `(H-M+1)×(W-N+1)`. `same` mode zero-pads by `(M-1)/2`
//! and `(N-1)/2` so the kernel is centered and the output keeps the input
//! shape; it needs odd kernel sizes.
//!
//! The slice-level `*_acc` helpers implement `same` mode without bias and are
//! what the model's forward and backward passes call directly.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvMode {
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    pub bias: f64,
}

impl Kernel2D {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("kernel must be at least 1x1, got {rows}x{cols}")));
        }
        if weights.len() != rows * cols {
            return Err(Error::Shape(format!(
                "kernel {rows}x{cols} needs {} weights, got {}",
                rows * cols,
                weights.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: 0.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn parts_mut(&mut self) -> (&mut [f64], &mut f64) {
        (&mut self.weights, &mut self.bias)
    }
}

pub fn conv2d(x: &Tensor, k: &Kernel2D, mode: ConvMode) -> Result<Tensor> {
    let &[h, w] = x.shape() else {
        return Err(Error::Shape(format!("conv2d input must be H×W, got {:?}", x.shape())));
    };
    match mode {
        ConvMode::Valid => {
            if k.rows > h || k.cols > w {
                return Err(Error::Shape(format!(
                    "kernel {}x{} larger than input {h}x{w}",
                    k.rows, k.cols
                )));
            }
            let (oh, ow) = (h - k.rows + 1, w - k.cols + 1);
            let xd = x.data();
            let mut out = Vec::with_capacity(oh * ow);
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for m in 0..k.rows {
                        for n in 0..k.cols {
                            acc += xd[(i + m) * w + (j + n)] * k.weights[m * k.cols + n];
                        }
                    }
                    out.push(acc + k.bias);
                }
            }
            Tensor::new(vec![oh, ow], out)
        }
        ConvMode::Same => {
            check_same_kernel(k.rows, k.cols)?;
            let mut out = vec![k.bias; h * w];
            correlate_same_acc(x.data(), h, w, &k.weights, k.rows, k.cols, &mut out);
            Tensor::new(vec![h, w], out)
        }
    }
}

pub(crate) fn check_same_kernel(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 || rows % 2 == 0 || cols % 2 == 0 {
        return Err(Error::ConvMode(format!(
            "same-mode convolution needs odd kernel sizes, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Valid output range `[lo, hi)` along one axis for a tap displaced by `d`.
#[inline]
fn tap_range(extent: usize, d: isize) -> (usize, usize) {
    let lo = (-d).clamp(0, extent as isize) as usize;
    let hi = (extent as isize - d).clamp(0, extent as isize) as usize;
    (lo, hi.max(lo))
}

/// `out += correlate_same(x, k)` for an `h×w` grid and a centered odd kernel.
pub fn correlate_same_acc(
    x: &[f64],
    h: usize,
    w: usize,
    k: &[f64],
    kh: usize,
    kw: usize,
    out: &mut [f64],
) {
    debug_assert_eq!(x.len(), h * w);
    debug_assert_eq!(out.len(), h * w);
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    for m in 0..kh {
        let di = m as isize - ph;
        let (i0, i1) = tap_range(h, di);
        for n in 0..kw {
            let dj = n as isize - pw;
            let (j0, j1) = tap_range(w, dj);
            if i0 == i1 || j0 == j1 {
                continue;
            }
            let wt = k[m * kw + n];
            for i in i0..i1 {
                let src = ((i as isize + di) as usize) * w;
                let xs = &x[(src as isize + j0 as isize + dj) as usize
                    ..(src as isize + j1 as isize + dj) as usize];
                let os = &mut out[i * w + j0..i * w + j1];
                for (o, &xv) in os.iter_mut().zip(xs) {
                    *o += wt * xv;
                }
            }
        }
    }
}

/// Input gradient of [`correlate_same_acc`]: `dx += correlate_sameᵀ(dy, k)`.
pub fn correlate_same_input_grad_acc(
    dy: &[f64],
    h: usize,
    w: usize,
    k: &[f64],
    kh: usize,
    kw: usize,
    dx: &mut [f64],
) {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    for m in 0..kh {
        let di = m as isize - ph;
        let (i0, i1) = tap_range(h, di);
        for n in 0..kw {
            let dj = n as isize - pw;
            let (j0, j1) = tap_range(w, dj);
            if i0 == i1 || j0 == j1 {
                continue;
            }
            let wt = k[m * kw + n];
            for i in i0..i1 {
                let dst = ((i as isize + di) as usize) * w;
                let xs = &mut dx[(dst as isize + j0 as isize + dj) as usize
                    ..(dst as isize + j1 as isize + dj) as usize];
                let gs = &dy[i * w + j0..i * w + j1];
                for (d, &g) in xs.iter_mut().zip(gs) {
                    *d += wt * g;
                }
            }
        }
    }
}

/// Kernel gradient of [`correlate_same_acc`]: `dk[m,n] += Σ dy(i,j)·x(i+m-p, j+n-q)`.
pub fn correlate_same_kernel_grad_acc(
    x: &[f64],
    dy: &[f64],
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    dk: &mut [f64],
) {
    let (ph, pw) = ((kh / 2) as isize, (kw / 2) as isize);
    for m in 0..kh {
        let di = m as isize - ph;
        let (i0, i1) = tap_range(h, di);
        for n in 0..kw {
            let dj = n as isize - pw;
            let (j0, j1) = tap_range(w, dj);
            if i0 == i1 || j0 == j1 {
                continue;
            }
            let mut acc = 0.0;
            for i in i0..i1 {
                let src = ((i as isize + di) as usize) * w;
                let xs = &x[(src as isize + j0 as isize + dj) as usize
                    ..(src as isize + j1 as isize + dj) as usize];
                let gs = &dy[i * w + j0..i * w + j1];
                for (&xv, &g) in xs.iter().zip(gs) {
                    acc += xv * g;
                }
            }
            dk[m * kw + n] += acc;
        }
    }
}
