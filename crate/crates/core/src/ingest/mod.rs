//! Embedding sets: the exchange format, loaders, synthetic data and
//! forget/retain partitioning.

mod csv_import;
pub mod mef;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::forget::{ForgetSpec, LabelVector};
use crate::linalg::Matrix;

pub use csv_import::{read_csv_embeddings, write_csv_embeddings};
pub use mef::{read_embedding_set, read_layers, write_embedding_set, write_layers};
pub use synthetic::{class_mean, generate_gaussian_mixture, SyntheticSpec};

/// Which model of the audit triple an embedding export came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Original,
    Unlearned,
    Retrained,
    Other,
}

impl ModelTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::Original => "original",
            ModelTag::Unlearned => "unlearned",
            ModelTag::Retrained => "retrained",
            ModelTag::Other => "other",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = MirageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(ModelTag::Original),
            "unlearned" => Ok(ModelTag::Unlearned),
            "retrained" => Ok(ModelTag::Retrained),
            "other" => Ok(ModelTag::Other),
            _ => Err(MirageError::InvalidInput(format!(
                "unknown model tag {s:?}"
            ))),
        }
    }
}

/// Per-sample features of one layer of one model, with aligned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub features: Matrix,
    pub labels: LabelVector,
    pub layer_tag: String,
    pub model_tag: ModelTag,
    pub source_meta: BTreeMap<String, String>,
}

impl EmbeddingSet {
    pub fn new(
        features: Matrix,
        labels: LabelVector,
        layer_tag: &str,
        model_tag: ModelTag,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(MirageError::DimensionMismatch(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if layer_tag.trim().is_empty() {
            return Err(MirageError::InvalidInput(
                "layer tag must be nonempty".into(),
            ));
        }
        Ok(EmbeddingSet {
            features,
            labels,
            layer_tag: layer_tag.to_string(),
            model_tag,
            source_meta: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> EmbeddingSet {
        EmbeddingSet {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            layer_tag: self.layer_tag.clone(),
            model_tag: self.model_tag,
            source_meta: self.source_meta.clone(),
        }
    }
}

/// Row indices of the forgotten and retained partitions, in row order.
pub fn forget_partition(labels: &[u32], spec: &ForgetSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    spec.validate(labels)?;
    let (forgotten, retained): (Vec<usize>, Vec<usize>) =
        (0..labels.len()).partition(|&i| spec.is_forgotten(i, labels[i]));
    if forgotten.is_empty() {
        return Err(MirageError::InvalidInput(
            "forget spec selects no rows".into(),
        ));
    }
    if retained.is_empty() {
        return Err(MirageError::InvalidInput(
            "forget spec leaves no retained rows".into(),
        ));
    }
    Ok((forgotten, retained))
}

/// Splits a set into `(forgotten, retained)`.
pub fn split_forget(set: &EmbeddingSet, spec: &ForgetSpec) -> Result<(EmbeddingSet, EmbeddingSet)> {
    let (f, r) = forget_partition(&set.labels, spec)?;
    Ok((set.select_rows(&f), set.select_rows(&r)))
}
