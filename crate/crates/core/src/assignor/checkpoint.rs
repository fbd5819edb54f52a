//! JSON tensor dump of assignor parameters.
//!
//! ```json
//! {"format": "robust-ensemble.assignor", "version": 1,
//!  "embed_dim": 16, "hidden_dim": 32,
//!  "tensors": [{"name": "lift.scale", "shape": [16], "data": [...]}, ...]}
//! ```
//!
//! Tensors appear in the canonical order of [`AssignorParams::tensors`], data
//! row-major. Floats are written in shortest round-trip form, so a save/load
//! cycle reproduces every bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AssignorConfig, AssignorError, AssignorParams};

pub const ASSIGNOR_FORMAT: &str = "robust-ensemble.assignor";
pub const ASSIGNOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignorCheckpoint {
    pub format: String,
    pub version: u32,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub tensors: Vec<TensorRecord>,
}

impl From<&AssignorParams> for AssignorCheckpoint {
    fn from(params: &AssignorParams) -> Self {
        Self {
            format: ASSIGNOR_FORMAT.to_string(),
            version: ASSIGNOR_FORMAT_VERSION,
            embed_dim: params.config.embed_dim,
            hidden_dim: params.config.hidden_dim,
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord { name: name.to_string(), shape, data: data.to_vec() })
                .collect(),
        }
    }
}

impl TryFrom<AssignorCheckpoint> for AssignorParams {
    type Error = AssignorError;

    fn try_from(ckpt: AssignorCheckpoint) -> Result<Self, Self::Error> {
        let bad = |msg: String| AssignorError::Checkpoint(msg);
        if ckpt.format != ASSIGNOR_FORMAT {
            return Err(bad(format!("unexpected format tag `{}`", ckpt.format)));
        }
        if ckpt.version != ASSIGNOR_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", ckpt.version)));
        }
        let config = AssignorConfig { embed_dim: ckpt.embed_dim, hidden_dim: ckpt.hidden_dim };
        let mut params = AssignorParams::zeros(config);
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n.to_string(), s))
            .collect();
        if expected.len() != ckpt.tensors.len() {
            return Err(bad(format!("expected {} tensors, found {}", expected.len(), ckpt.tensors.len())));
        }
        for (i, ((name, shape), rec)) in expected.into_iter().zip(&ckpt.tensors).enumerate() {
            if rec.name != name || rec.shape != shape {
                return Err(bad(format!(
                    "tensor {i}: expected `{name}` {shape:?}, found `{}` {:?}",
                    rec.name, rec.shape
                )));
            }
            if !params.copy_tensor(i, &rec.data) {
                return Err(bad(format!("tensor `{name}` has {} values", rec.data.len())));
            }
        }
        Ok(params)
    }
}

pub fn save_assignor(params: &AssignorParams, path: &Path) -> std::io::Result<()> {
    let json = serde_json::to_string(&AssignorCheckpoint::from(params)).map_err(std::io::Error::other)?;
    std::fs::write(path, json)
}

pub fn load_assignor(path: &Path) -> Result<AssignorParams, AssignorError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AssignorError::Checkpoint(format!("{}: {e}", path.display())))?;
    let ckpt: AssignorCheckpoint =
        serde_json::from_str(&text).map_err(|e| AssignorError::Checkpoint(format!("{}: {e}", path.display())))?;
    AssignorParams::try_from(ckpt)
}
