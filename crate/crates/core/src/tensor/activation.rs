use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Softmax,
}

// Largest double below 1; keeps sigmoid strictly inside (0, 1).
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, evaluated without overflow and clamped to the open unit
/// interval.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// Numerically stable softmax over a contiguous slice.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

pub fn apply_activation(kind: Activation, z: &Tensor, axis: Option<usize>) -> Result<Tensor> {
    match kind {
        Activation::Sigmoid => Ok(z.map(sigmoid)),
        Activation::Tanh => Ok(z.map(f64::tanh)),
        Activation::Softmax => {
            let Some(axis) = axis else {
                return Err(Error::Shape("softmax requires an axis".into()));
            };
            if axis >= z.rank() {
                return Err(Error::Shape(format!(
                    "softmax axis {axis} out of range for rank {}",
                    z.rank()
                )));
            }
            let extent = z.shape()[axis];
            if extent == 0 {
                return Err(Error::Shape("softmax over an empty axis".into()));
            }
            let inner: usize = z.shape()[axis + 1..].iter().product();
            let outer: usize = z.shape()[..axis].iter().product();
            let mut out = z.clone();
            let data = out.data_mut();
            let mut lane = vec![0.0; extent];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |k: usize| (o * extent + k) * inner + i;
                    for (k, v) in lane.iter_mut().enumerate() {
                        *v = data[at(k)];
                    }
                    softmax_in_place(&mut lane);
                    for (k, &v) in lane.iter().enumerate() {
                        data[at(k)] = v;
                    }
                }
            }
            Ok(out)
        }
    }
}
