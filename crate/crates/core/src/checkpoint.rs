//! Model checkpoints: a one-line JSON index followed by four EMBD blocks
//! (`W_e`, `b_e` as `1 × k`, `W_d`, `b_d` as `1 × m`).
//!
//! The index is `{"m":…,"k":…,"blocks":[o0,o1,o2,o3],"hyperparams":…}` and is
//! terminated by `\n`. Offsets are relative to the first byte after that
//! newline. Parameters are stored as `f32`, so saving a freshly trained model
//! rounds it to storage precision; a loaded model re-saves bit-identically.

use std::fs;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sae::{SaeHyperparams, SaeModel};
use crate::store::EmbeddingMatrix;

#[derive(Debug, Serialize, Deserialize)]
struct Index {
    m: usize,
    k: usize,
    blocks: [u64; 4],
    #[serde(default)]
    hyperparams: Option<SaeHyperparams>,
}

fn row_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

pub fn checkpoint_bytes(model: &SaeModel, hyperparams: Option<&SaeHyperparams>) -> Result<Vec<u8>> {
    let blocks = [
        EmbeddingMatrix::from_array(row_ids(model.k()), &model.encoder_weight)?,
        EmbeddingMatrix::from_array(
            vec!["encoder_bias".into()],
            &model.encoder_bias.clone().insert_axis(ndarray::Axis(0)),
        )?,
        EmbeddingMatrix::from_array(row_ids(model.m()), &model.decoder_weight)?,
        EmbeddingMatrix::from_array(
            vec!["decoder_bias".into()],
            &model.decoder_bias.clone().insert_axis(ndarray::Axis(0)),
        )?,
    ];
    let encoded: Vec<Vec<u8>> = blocks.iter().map(EmbeddingMatrix::to_bytes).collect();
    let mut offsets = [0u64; 4];
    let mut at = 0u64;
    for (slot, block) in offsets.iter_mut().zip(&encoded) {
        *slot = at;
        at += block.len() as u64;
    }
    let index = Index {
        m: model.m(),
        k: model.k(),
        blocks: offsets,
        hyperparams: hyperparams.cloned(),
    };
    let mut out = serde_json::to_vec(&index).expect("index serializes");
    out.push(b'\n');
    for block in encoded {
        out.extend_from_slice(&block);
    }
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(SaeModel, Option<SaeHyperparams>)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("checkpoint index line missing"))?;
    let index: Index =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::format(format!("checkpoint index: {e}")))?;
    let body = &bytes[newline + 1..];
    let mut bounds: Vec<usize> = index.blocks.iter().map(|&o| o as usize).collect();
    bounds.push(body.len());
    if bounds[0] != 0 || bounds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::format("checkpoint block offsets are not increasing"));
    }
    let block = |i: usize| EmbeddingMatrix::from_bytes(&body[bounds[i]..bounds[i + 1]]);
    let (we, be, wd, bd) = (block(0)?, block(1)?, block(2)?, block(3)?);
    let shape_ok = we.rows() == index.k
        && we.dim() == index.m
        && be.rows() == 1
        && be.dim() == index.k
        && wd.rows() == index.m
        && wd.dim() == index.k
        && bd.rows() == 1
        && bd.dim() == index.m;
    if !shape_ok {
        return Err(Error::format(format!(
            "checkpoint blocks do not match declared m={} k={}",
            index.m, index.k
        )));
    }
    let model = SaeModel::from_parts(
        we.to_array(),
        Array1::from(be.row_f64(0).to_vec()),
        wd.to_array(),
        bd.row_f64(0),
    )?;
    Ok((model, index.hyperparams))
}

pub fn save_checkpoint(model: &SaeModel, hyperparams: Option<&SaeHyperparams>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint_bytes(model, hyperparams)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(SaeModel, Option<SaeHyperparams>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}
