//! JSON checkpoint container.
//!
//! ```text
//! {
//!   "format": "kgtype-answer-type-model",
//!   "version": 1,
//!   "seed": <u64>,
//!   "hidden": D,
//!   "input_dim": d_in,
//!   "types": [type label, ...],            // row order of type_embedding
//!   "type_provenance": ["glove-single" | "glove-mean" | "random", ...],
//!   "tokens": ["<unk>", token, ...],       // row order of token_embedding
//!   "tensors": [{"name": ..., "shape": [rows, cols], "data": [row-major f64]}, ...]
//! }
//! ```
//!
//! Tensors appear in the fixed order `token_embedding`, `fwd.w_input`,
//! `fwd.w_hidden`, `fwd.bias`, `bwd.w_input`, `bwd.w_hidden`, `bwd.bias`,
//! `att`, `type_embedding`. Floats are written in shortest round-trip form
//! so a save/load cycle is lossless.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{EncoderParams, LstmParams};
use super::matrix::Matrix;
use super::model::{AnswerTypeModel, Params, TENSOR_NAMES};
use super::typeembed::RowProvenance;
use super::{NnError, Result};
use crate::answerprep::AnswerType;

pub const FORMAT: &str = "kgtype-answer-type-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    seed: u64,
    hidden: usize,
    input_dim: usize,
    types: Vec<AnswerType>,
    type_provenance: Vec<RowProvenance>,
    tokens: Vec<String>,
    tensors: Vec<NamedTensor>,
}

pub fn write_checkpoint<W: Write>(model: &AnswerTypeModel, mut w: W) -> Result<()> {
    let tensors = TENSOR_NAMES
        .iter()
        .zip(model.params.tensors())
        .map(|(name, t)| NamedTensor {
            name: name.to_string(),
            shape: t.shape(),
            data: t.as_slice().to_vec(),
        })
        .collect();
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        version: VERSION,
        seed: model.seed,
        hidden: model.hidden(),
        input_dim: model.params.encoder.token_embedding.cols(),
        types: model.types.clone(),
        type_provenance: model.provenance.clone(),
        tokens: model.tokens.clone(),
        tensors,
    };
    serde_json::to_writer(&mut w, &file).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(b"\n")
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    Ok(())
}

pub fn save_checkpoint(model: &AnswerTypeModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    fs::write(path.as_ref(), buf).map_err(|e| NnError::Io {
        path: path.as_ref().display().to_string(),
        source: e,
    })
}

pub fn parse_checkpoint(text: &str) -> Result<AnswerTypeModel> {
    let header: Header =
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(NnError::CheckpointVersion {
            format: header.format,
            version: header.version,
        });
    }
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if file.tensors.len() != TENSOR_NAMES.len() {
        return Err(NnError::Checkpoint(format!(
            "expected {} tensors, found {}",
            TENSOR_NAMES.len(),
            file.tensors.len()
        )));
    }
    let mut mats = Vec::with_capacity(TENSOR_NAMES.len());
    for (want, t) in TENSOR_NAMES.iter().zip(file.tensors) {
        if t.name != *want {
            return Err(NnError::Checkpoint(format!(
                "expected tensor `{want}`, found `{}`",
                t.name
            )));
        }
        let m = Matrix::from_vec(t.shape[0], t.shape[1], t.data).ok_or_else(|| {
            NnError::Checkpoint(format!("tensor `{want}` data does not match its shape"))
        })?;
        if !m.is_finite() {
            return Err(NnError::Checkpoint(format!(
                "tensor `{want}` is not finite"
            )));
        }
        mats.push(m);
    }
    let mut it = mats.into_iter();
    let mut next = || it.next().expect("length checked");
    let token_embedding = next();
    let forward = LstmParams {
        w_input: next(),
        w_hidden: next(),
        bias: next(),
    };
    let backward = LstmParams {
        w_input: next(),
        w_hidden: next(),
        bias: next(),
    };
    let att = next();
    let type_embedding = next();
    let params = Params {
        encoder: EncoderParams {
            token_embedding,
            forward,
            backward,
            att,
        },
        type_embedding,
    };
    if params.encoder.hidden() != file.hidden
        || params.encoder.token_embedding.cols() != file.input_dim
    {
        return Err(NnError::Checkpoint(
            "header dimensions disagree with tensors".into(),
        ));
    }
    AnswerTypeModel::new(
        file.types,
        file.tokens,
        params,
        file.type_provenance,
        file.seed,
    )
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<AnswerTypeModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| NnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_checkpoint(&text)
}
