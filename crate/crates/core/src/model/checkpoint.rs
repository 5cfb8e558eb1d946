//! JSON checkpoint container.
//!
//! ```text
//! {
//!   "format": "gread-checkpoint",
//!   "version": 1,
//!   "config": { ...ModelConfig... },
//!   "n_features": F,
//!   "n_nodes": N,
//!   "tensors": [ { "name": "enc_w1", "shape": [F, d], "data": [...] }, ... ]
//! }
//! ```
//!
//! Tensors appear in the order of [`ModelParams::tensors`]; matrices are
//! row-major. Floats are written in shortest round-trip form, so a
//! save/load cycle is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::error::{GreadError, Result};

pub const FORMAT: &str = "gread-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub n_features: usize,
    pub n_nodes: usize,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(cfg: &ModelConfig, params: &ModelParams, n_features: usize, n_nodes: usize) -> Self {
        let tensors = params
            .shapes()
            .into_iter()
            .zip(params.tensors())
            .map(|((name, shape), (_, data))| TensorRecord {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            config: cfg.clone(),
            n_features,
            n_nodes,
            tensors,
        }
    }

    pub fn into_parts(self) -> Result<(ModelConfig, ModelParams)> {
        if self.format != FORMAT {
            return Err(GreadError::data(format!("not a checkpoint (format '{}')", self.format)));
        }
        if self.version != VERSION {
            return Err(GreadError::data(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ModelParams::init(&self.config, self.n_features, self.n_nodes, &mut rng)?;
        let shapes = params.shapes();
        if shapes.len() != self.tensors.len() {
            return Err(GreadError::data(format!(
                "checkpoint holds {} tensors, config expects {}",
                self.tensors.len(),
                shapes.len()
            )));
        }
        for (((name, shape), (_, slot)), rec) in shapes
            .into_iter()
            .zip(params.tensors_mut())
            .zip(&self.tensors)
        {
            if rec.name != name || rec.shape != shape || rec.data.len() != slot.len() {
                return Err(GreadError::data(format!(
                    "tensor '{}' {:?} does not match expected '{name}' {shape:?}",
                    rec.name, rec.shape
                )));
            }
            slot.copy_from_slice(&rec.data);
        }
        Ok((self.config, params))
    }
}

pub fn write_checkpoint<W: Write>(
    w: W,
    cfg: &ModelConfig,
    params: &ModelParams,
    n_features: usize,
    n_nodes: usize,
) -> Result<()> {
    serde_json::to_writer_pretty(w, &Checkpoint::new(cfg, params, n_features, n_nodes))
        .map_err(|e| GreadError::data(format!("writing checkpoint: {e}")))
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(ModelConfig, ModelParams)> {
    let ck: Checkpoint = serde_json::from_reader(r)
        .map_err(|e| GreadError::data(format!("reading checkpoint: {e}")))?;
    ck.into_parts()
}

pub fn save_checkpoint(
    path: &Path,
    cfg: &ModelConfig,
    params: &ModelParams,
    n_features: usize,
    n_nodes: usize,
) -> Result<()> {
    let f = File::create(path).map_err(|e| GreadError::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, cfg, params, n_features, n_nodes)?;
    w.flush().map_err(|e| GreadError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let f = File::open(path).map_err(|e| GreadError::io(path, e))?;
    read_checkpoint(BufReader::new(f))
}
