//! Central finite-difference check of [`super::gradients`].

use crate::error::Result;
use crate::grid::WindowedDataset;
use crate::model::{ModelParams, PARAM_NAMES};

use super::{gradients, LossKind};

/// Gradient magnitudes below this are compared absolutely, so that entries
/// that are zero up to rounding do not dominate the relative error.
pub const GRADCHECK_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub entries: usize,
}

/// Per-tensor worst relative error `|a − n| / max(|a|, |n|, floor)` between
/// the analytic gradient `a` and the central difference `n` with step `h`.
pub fn finite_difference_check(
    p: &ModelParams,
    ds: &WindowedDataset,
    batch: &[usize],
    kind: LossKind,
    h: f64,
) -> Result<Vec<TensorCheck>> {
    let (_, analytic) = gradients(p, ds, batch, kind)?;
    let analytic = analytic.tensors();
    let mut probe = p.clone();
    let mut out = Vec::with_capacity(PARAM_NAMES.len());
    for (k, name) in PARAM_NAMES.iter().enumerate() {
        let len = analytic[k].1.len();
        let mut check = TensorCheck {
            name,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            entries: len,
        };
        for i in 0..len {
            let orig = probe.tensors()[k].1[i];
            probe.tensors_mut()[k].1[i] = orig + h;
            let (up, _) = gradients(&probe, ds, batch, kind)?;
            probe.tensors_mut()[k].1[i] = orig - h;
            let (down, _) = gradients(&probe, ds, batch, kind)?;
            probe.tensors_mut()[k].1[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[k].1[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(GRADCHECK_FLOOR);
            check.max_abs_err = check.max_abs_err.max(abs);
            check.max_rel_err = check.max_rel_err.max(rel);
        }
        out.push(check);
    }
    Ok(out)
}
