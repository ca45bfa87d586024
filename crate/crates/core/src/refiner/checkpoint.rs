//! Binary checkpoint: `TUPR`, a `u32` version, seven `u32` layer widths
//! (input, embed hidden, embed, layers, head hidden x2, classes), then
//! little-endian `f64` blocks: input mean, input std, and every parameter block
//! in [`RefinerModel::param_blocks`] order.

use std::path::Path;

use super::model::{ModelDims, RefinerModel};
use crate::error::{Error, Result};
use crate::kitti_io::write_atomic;

const MAGIC: &[u8; 4] = b"TUPR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 7 * 4;

pub fn checkpoint_bytes(model: &RefinerModel) -> Vec<u8> {
    let d = model.dims;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (model.num_params() + 2 * d.input_dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for x in [
        d.input_dim,
        d.embed_hidden,
        d.embed_dim,
        d.num_layers,
        d.head_hidden[0],
        d.head_hidden[1],
        d.num_classes,
    ] {
        out.extend_from_slice(&(x as u32).to_le_bytes());
    }
    let norm = [model.norm.mean.as_slice().unwrap(), model.norm.std.as_slice().unwrap()];
    for block in norm.into_iter().chain(model.param_blocks()) {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Input(format!("checkpoint: {}", msg.into()))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RefinerModel> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing TUPR header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != VERSION {
        return Err(bad(format!("unsupported version {}", word(0))));
    }
    let w: Vec<usize> = (1..=7).map(|i| word(i) as usize).collect();
    let dims = ModelDims {
        input_dim: w[0],
        embed_hidden: w[1],
        embed_dim: w[2],
        num_layers: w[3],
        head_hidden: [w[4], w[5]],
        num_classes: w[6],
    };
    dims.validate()?;
    let expected = HEADER_LEN + 8 * (dims.num_params() + 2 * dims.input_dim);
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for {dims:?}, found {}", bytes.len())));
    }
    let mut model = RefinerModel::zeros(dims);
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for v in model.norm.mean.iter_mut().chain(model.norm.std.iter_mut()) {
        *v = values.next().unwrap();
    }
    for block in model.param_blocks_mut() {
        for v in block.iter_mut() {
            *v = values.next().unwrap();
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &RefinerModel, path: &Path) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(model))
}

pub fn load_checkpoint(path: &Path) -> Result<RefinerModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
