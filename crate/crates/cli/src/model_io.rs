//! Ensemble files.
//!
//! Layout: the 8-byte magic `DIBMODEL`, a little-endian `u32` format version,
//! a little-endian `u64` header length, the JSON header (config, round
//! bookkeeping, network specs and parameter shapes), then every parameter as
//! a little-endian `f32` in member, layer, tensor order. Wall-clock times are
//! not stored, so identical runs produce identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use dib_core::boosting::{BoostRound, Ensemble};
use dib_core::nn::{Network, NetworkSpec, Tensor, TrainReport};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"DIBMODEL";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("not a model file")]
    NotAModel,

    #[error("model format version {found} is not supported (expected {supported})")]
    Version { found: u32, supported: u32 },

    #[error("model file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("corrupt model header: {0}")]
    Header(#[from] serde_json::Error),

    #[error("model predicts {model} classes but {expected} were expected")]
    Classes { model: usize, expected: usize },

    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Serialize, Deserialize)]
struct MemberHeader {
    spec: NetworkSpec,
    init_seed: u64,
    pseudo_loss: f64,
    raw_pseudo_loss: f64,
    beta: f64,
    alpha: f64,
    resample_seed: u64,
    epochs: usize,
    best_epoch: usize,
    valid_errors: Vec<f64>,
    train_losses: Vec<f64>,
    param_shapes: Vec<Vec<Vec<usize>>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    classes: usize,
    input_shape: Vec<usize>,
    config: Value,
    members: Vec<MemberHeader>,
}

/// A loaded model file.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub ensemble: Ensemble,
    /// The experiment config the model was trained under.
    pub config: Value,
}

pub fn encode(ensemble: &Ensemble, config: &Value) -> Vec<u8> {
    let members = ensemble
        .rounds()
        .iter()
        .map(|r| MemberHeader {
            spec: r.member.spec().clone(),
            init_seed: r.member.seed(),
            pseudo_loss: r.pseudo_loss,
            raw_pseudo_loss: r.raw_pseudo_loss,
            beta: r.beta,
            alpha: r.alpha,
            resample_seed: r.resample_seed,
            epochs: r.epochs,
            best_epoch: r.train_report.best_epoch,
            valid_errors: r.train_report.valid_errors.clone(),
            train_losses: r.train_report.train_losses.clone(),
            param_shapes: r.member.params().iter().map(|l| l.iter().map(|t| t.shape().to_vec()).collect()).collect(),
        })
        .collect();
    let header = Header {
        classes: ensemble.classes(),
        input_shape: ensemble.input_shape().to_vec(),
        config: config.clone(),
        members,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(PREAMBLE + json.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for r in ensemble.rounds() {
        for t in r.member.params().iter().flatten() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

/// Decodes a model; `expected_classes` rejects models for a different label
/// space.
pub fn decode(bytes: &[u8], expected_classes: Option<usize>) -> Result<SavedModel, ModelError> {
    let found = bytes.len() as u64;
    if bytes.len() < MAGIC.len() || &bytes[..8] != MAGIC {
        return Err(if MAGIC.starts_with(bytes) && !bytes.is_empty() {
            ModelError::Truncated { expected: PREAMBLE as u64, found }
        } else {
            ModelError::NotAModel
        });
    }
    if bytes.len() < PREAMBLE {
        return Err(ModelError::Truncated { expected: PREAMBLE as u64, found });
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ModelError::Version { found: version, supported: FORMAT_VERSION });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body_start = (PREAMBLE as u64).saturating_add(header_len);
    if found < body_start {
        return Err(ModelError::Truncated { expected: body_start, found });
    }
    let header: Header = serde_json::from_slice(&bytes[PREAMBLE..body_start as usize])?;
    if let Some(expected) = expected_classes {
        if header.classes != expected {
            return Err(ModelError::Classes { model: header.classes, expected });
        }
    }
    let floats: u64 = header
        .members
        .iter()
        .flat_map(|m| m.param_shapes.iter().flatten())
        .map(|s| s.iter().product::<usize>() as u64)
        .sum();
    let expected = body_start + 4 * floats;
    if found < expected {
        return Err(ModelError::Truncated { expected, found });
    }
    if found > expected {
        return Err(ModelError::Invalid(format!("{} trailing bytes", found - expected)));
    }

    let mut cursor = body_start as usize;
    let mut rounds = Vec::with_capacity(header.members.len());
    for m in header.members {
        let mut params = Vec::with_capacity(m.param_shapes.len());
        for layer in &m.param_shapes {
            let mut tensors = Vec::with_capacity(layer.len());
            for shape in layer {
                let n: usize = shape.iter().product();
                let data = bytes[cursor..cursor + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                cursor += 4 * n;
                tensors.push(Tensor::new(shape.clone(), data).map_err(|e| ModelError::Invalid(e.to_string()))?);
            }
            params.push(tensors);
        }
        let member =
            Network::from_params(m.spec, params, m.init_seed).map_err(|e| ModelError::Invalid(e.to_string()))?;
        rounds.push(BoostRound {
            member,
            pseudo_loss: m.pseudo_loss,
            raw_pseudo_loss: m.raw_pseudo_loss,
            beta: m.beta,
            alpha: m.alpha,
            resample_seed: m.resample_seed,
            epochs: m.epochs,
            train_report: TrainReport {
                valid_errors: m.valid_errors,
                train_losses: m.train_losses,
                best_epoch: m.best_epoch,
                wall_time_secs: 0.0,
            },
        });
    }
    let ensemble = Ensemble::new(rounds).map_err(|e| ModelError::Invalid(e.to_string()))?;
    if ensemble.classes() != header.classes || ensemble.input_shape() != header.input_shape.as_slice() {
        return Err(ModelError::Invalid("header disagrees with the stored networks".into()));
    }
    Ok(SavedModel { ensemble, config: header.config })
}

/// Writes atomically: a temporary sibling file is renamed into place.
pub fn save_model(path: &Path, ensemble: &Ensemble, config: &Value) -> Result<(), ModelError> {
    let io = |source| ModelError::Io { path: path.display().to_string(), source };
    let tmp = path.with_extension("model.partial");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(ensemble, config)).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_model(path: &Path, expected_classes: Option<usize>) -> Result<SavedModel, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    decode(&bytes, expected_classes)
}
