use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, Tensor, TensorError};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named parameter values plus free-form model metadata, stored as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) {
        let values = t.with_values(|v| v.iter().map(|x| x.as_f64()).collect());
        self.tensors.insert(
            name.to_string(),
            TensorRecord {
                shape: t.shape().to_vec(),
                values,
            },
        );
    }

    /// Rebuilds the named tensor as a trainable leaf.
    pub fn param<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let rec = self
            .tensors
            .get(name)
            .ok_or_else(|| TensorError::Checkpoint(format!("missing tensor {name}")))?;
        Tensor::param(&rec.shape, rec.values.iter().map(|&v| T::lit(v)).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        let version = raw.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(TensorError::Checkpoint(format!(
                "unsupported version {}",
                raw.get("version").cloned().unwrap_or(serde_json::Value::Null)
            )));
        }
        serde_json::from_value(raw).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_json()).map_err(|e| TensorError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| TensorError::Checkpoint(e.to_string()))?;
    Checkpoint::from_json(&text)
}
