//! `HTM1` model checkpoints.
//!
//! Layout: magic `HTM1`, `u64` little-endian header length, the JSON header,
//! then the eight parameter tensors as `HTT1` records in [`PARAM_NAMES`]
//! order:
//!
//! ```text
//! spatial.kernel          K_a×K_a
//! spatial.bias            1
//! feature.weights         C×C
//! convlstm.input_weights  C×4×K×K   (gates: input, forget, cell, output)
//! convlstm.hidden_weights C×4×K×K
//! convlstm.bias           C×4
//! readout.weights         C
//! readout.bias            1
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelHyper, ModelParams, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::grid::Preprocessing;
use crate::tensor::{read_tensor, write_tensor, Kernel2D, Tensor};

pub const MODEL_MAGIC: &[u8; 4] = b"HTM1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub hyper: ModelHyper,
    pub tensors: Vec<TensorEntry>,
    pub seed: u64,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub preprocessing: Option<Preprocessing>,
    /// Free-form training configuration snapshot.
    #[serde(default)]
    pub train_config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(params: ModelParams, seed: u64, feature_names: Vec<String>) -> Self {
        let tensors = PARAM_NAMES
            .iter()
            .zip(params.shapes())
            .map(|(n, s)| TensorEntry {
                name: n.to_string(),
                shape: s,
            })
            .collect();
        Self {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                hyper: params.hyper.clone(),
                tensors,
                seed,
                feature_names,
                preprocessing: None,
                train_config: serde_json::Value::Null,
            },
            params,
        }
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<()> {
    let header = serde_json::to_vec(&ck.header)?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for ((_, data), shape) in ck.params.tensors().iter().zip(ck.params.shapes()) {
        write_tensor(&mut w, &Tensor::new(shape, data.to_vec())?)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| Error::Format("header length overflows".into()))?;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: CheckpointHeader = serde_json::from_slice(&header)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {}",
            header.format_version
        )));
    }
    header.hyper.validate()?;
    let mut params = ModelParams::zeros(&header.hyper);
    let expected = params.shapes();
    let mut loaded = Vec::with_capacity(PARAM_NAMES.len());
    for (name, shape) in PARAM_NAMES.iter().zip(expected) {
        let t = read_tensor(&mut r)?;
        if t.shape() != shape.as_slice() {
            return Err(Error::Format(format!(
                "{name}: stored shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        loaded.push(t);
    }
    for ((_, dst), src) in params.tensors_mut().into_iter().zip(&loaded) {
        dst.copy_from_slice(src.data());
    }
    // keep the kernel's own shape metadata consistent
    let ka = header.hyper.att_kernel;
    params.spatial.kernel = Kernel2D::new(
        ka,
        ka,
        params.spatial.kernel.weights().to_vec(),
        params.spatial.kernel.bias,
    )?;
    Ok(Checkpoint { header, params })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ck)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
