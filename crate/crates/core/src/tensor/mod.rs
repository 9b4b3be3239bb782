//! Dense row-major `f64` tensors and the handful of kernels the model needs.
//!
//! The tensor type is deliberately plain: a shape and a flat buffer. Hot loops
//! in the model work on raw slices through the helpers in [`conv`]; the
//! [`Tensor`]-level functions exist for the public contract and for tests.

pub mod activation;
pub mod conv;
pub mod io;

pub use activation::{apply_activation, sigmoid, softmax_in_place, Activation};
pub use conv::{conv2d, ConvMode, Kernel2D};
pub use io::{load_tensor, read_tensor, save_tensor, write_tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::Shape(format!(
                "index rank {} for tensor of rank {}",
                index.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (&i, &extent) in index.iter().zip(&self.shape) {
            if i >= extent {
                return Err(Error::Shape(format!(
                    "index {:?} out of bounds for shape {:?}",
                    index, self.shape
                )));
            }
            off = off * extent + i;
        }
        Ok(off)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(index)?])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        let off = self.offset(index)?;
        self.data[off] = value;
        Ok(())
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    /// The sub-tensor at position `index` along the leading axis.
    pub fn slab(&self, index: usize) -> Result<Tensor> {
        let Some((&lead, rest)) = self.shape.split_first() else {
            return Err(Error::Shape("slab of a rank-0 tensor".into()));
        };
        if index >= lead {
            return Err(Error::Shape(format!(
                "slab {index} out of bounds for leading extent {lead}"
            )));
        }
        let step: usize = rest.iter().product();
        Ok(Self {
            shape: rest.to_vec(),
            data: self.data[index * step..(index + 1) * step].to_vec(),
        })
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return Err(Error::Shape("cannot stack zero tensors".into()));
        };
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            if p.shape != first.shape {
                return Err(Error::Shape(format!(
                    "stack of mismatched shapes {:?} and {:?}",
                    first.shape, p.shape
                )));
            }
            data.extend_from_slice(&p.data);
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise op on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        Ok(self
            .zip_map(other, |a, b| (a - b).abs())?
            .data
            .into_iter()
            .fold(0.0, f64::max))
    }
}

/// `out[b,t,i,j,c] = alpha[b,t,i,j,0] * beta[b,0,0,0,c] * x[b,t,i,j,c]`.
pub fn broadcast_mul(x: &Tensor, alpha: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let &[b, t, h, w, c] = x.shape() else {
        return Err(Error::Broadcast(format!(
            "input must be rank 5 (B,T,H,W,C), got {:?}",
            x.shape()
        )));
    };
    if alpha.shape() != [b, t, h, w, 1] {
        return Err(Error::Broadcast(format!(
            "alpha shape {:?} does not conform to {:?}",
            alpha.shape(),
            [b, t, h, w, 1]
        )));
    }
    if beta.shape() != [b, 1, 1, 1, c] {
        return Err(Error::Broadcast(format!(
            "beta shape {:?} does not conform to {:?}",
            beta.shape(),
            [b, 1, 1, 1, c]
        )));
    }
    let cells = t * h * w;
    let mut out = Vec::with_capacity(x.len());
    for bi in 0..b {
        let betas = &beta.data()[bi * c..(bi + 1) * c];
        for cell in 0..cells {
            let a = alpha.data()[bi * cells + cell];
            let base = (bi * cells + cell) * c;
            for (ci, &bv) in betas.iter().enumerate() {
                out.push(a * bv * x.data()[base + ci]);
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}
