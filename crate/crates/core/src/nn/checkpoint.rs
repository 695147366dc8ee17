//! JSON model checkpoint:
//!
//! ```json
//! { "format": "emoceps-model/1", "spec": {...}, "representation": "gfcc",
//!   "config_hash": "…", "normalizer": {"mean": [...], "std": [...]},
//!   "epochs_trained": 42,
//!   "params": [{"name": "out.w", "rows": 100, "cols": 8, "data": [...]}] }
//! ```
//!
//! `data` is row-major. Floats are written with round-trip precision.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::Model;
use super::params::Params;
use super::spec::ModelSpec;
use crate::cepstra::FeatureKind;
use crate::data::Normalizer;
use crate::error::{Error, Result};

pub const FORMAT: &str = "emoceps-model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    spec: ModelSpec,
    representation: FeatureKind,
    config_hash: String,
    normalizer: Option<Normalizer>,
    epochs_trained: usize,
    params: Vec<Tensor>,
}

/// A trained model plus what is needed to feed it new audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub representation: FeatureKind,
    /// Hash of the feature pipeline configuration the model was trained on.
    pub config_hash: String,
    pub normalizer: Option<Normalizer>,
    pub epochs_trained: usize,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let p = &self.model.params;
        let doc = Document {
            format: FORMAT.into(),
            spec: self.model.spec.clone(),
            representation: self.representation,
            config_hash: self.config_hash.clone(),
            normalizer: self.normalizer.clone(),
            epochs_trained: self.epochs_trained,
            params: (0..p.len())
                .map(|i| Tensor {
                    name: p.name(i).to_string(),
                    rows: p.get(i).nrows(),
                    cols: p.get(i).ncols(),
                    data: p.get(i).iter().copied().collect(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&doc)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let doc: Document = serde_json::from_slice(&bytes)?;
        let corrupt = |message: String| Error::CorruptFile {
            path: path.to_path_buf(),
            message,
        };
        if doc.format != FORMAT {
            return Err(corrupt(format!("unknown checkpoint format `{}`", doc.format)));
        }
        let mut params = Params::default();
        for t in doc.params {
            let array = Array2::from_shape_vec((t.rows, t.cols), t.data)
                .map_err(|e| corrupt(format!("tensor `{}`: {e}", t.name)))?;
            params.push(t.name, array);
        }
        Ok(Self {
            model: Model::from_params(doc.spec, params)?,
            representation: doc.representation,
            config_hash: doc.config_hash,
            normalizer: doc.normalizer,
            epochs_trained: doc.epochs_trained,
        })
    }
}
