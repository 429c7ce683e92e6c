//! The `mef-1` embedding exchange format.
//!
//! A set is a directory holding exactly three files:
//!
//! * `meta.txt`: `key=value` lines. Required keys are `format` (`mef-1`),
//!   `encoding` (`f32le-rowmajor`), `rows`, `cols`, `layer_tag` and
//!   `model_tag`. Free-form source metadata is stored as `meta.<key>`.
//! * `features.f32`: `rows × cols` little-endian IEEE-754 binary32 values,
//!   row-major.
//! * `labels.u32`: `rows` little-endian unsigned 32-bit class ids.
//!
//! Features are widened to `f64` on load and narrowed to `f32` on save.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{MirageError, Result};
use crate::linalg::Matrix;

use super::{EmbeddingSet, ModelTag};

pub const FORMAT_VERSION: &str = "mef-1";
pub const VALUE_ENCODING: &str = "f32le-rowmajor";
pub const META_FILE: &str = "meta.txt";
pub const FEATURES_FILE: &str = "features.f32";
pub const LABELS_FILE: &str = "labels.u32";

fn check_meta_text(key: &str, value: &str) -> Result<()> {
    if key.contains(['=', '\n', '\r']) || value.contains(['\n', '\r']) {
        return Err(MirageError::InvalidInput(format!(
            "metadata {key:?}={value:?} cannot be stored in a line-oriented file"
        )));
    }
    Ok(())
}

pub fn write_embedding_set(set: &EmbeddingSet, dir: &Path) -> Result<()> {
    let rows = u32::try_from(set.features.rows())
        .map_err(|_| MirageError::InvalidInput("row count exceeds 32 bits".into()))?;
    let cols = u32::try_from(set.features.cols())
        .map_err(|_| MirageError::InvalidInput("column count exceeds 32 bits".into()))?;
    if set.labels.len() != rows as usize {
        return Err(MirageError::DimensionMismatch(
            "label count differs from row count".into(),
        ));
    }
    check_meta_text("layer_tag", &set.layer_tag)?;
    for (k, v) in &set.source_meta {
        check_meta_text(k, v)?;
    }

    let mut features = Vec::with_capacity(set.features.data().len() * 4);
    for &v in set.features.data() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(MirageError::NonFinite(format!(
                "{v} does not fit in 32-bit float"
            )));
        }
        features.extend_from_slice(&narrow.to_le_bytes());
    }
    let mut labels = Vec::with_capacity(set.labels.len() * 4);
    for &l in &set.labels {
        labels.extend_from_slice(&l.to_le_bytes());
    }

    let mut meta = format!(
        "format={FORMAT_VERSION}\nencoding={VALUE_ENCODING}\nrows={rows}\ncols={cols}\nlayer_tag={}\nmodel_tag={}\n",
        set.layer_tag, set.model_tag
    );
    for (k, v) in &set.source_meta {
        meta.push_str(&format!("meta.{k}={v}\n"));
    }

    fs::create_dir_all(dir).map_err(|e| MirageError::io(dir, e))?;
    let write = |name: &str, bytes: &[u8]| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| MirageError::io(p, e))
    };
    write(META_FILE, meta.as_bytes())?;
    write(FEATURES_FILE, &features)?;
    write(LABELS_FILE, &labels)?;
    Ok(())
}

pub fn read_embedding_set(dir: &Path) -> Result<EmbeddingSet> {
    let meta_path = dir.join(META_FILE);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| MirageError::io(&meta_path, e))?;
    let mut meta = BTreeMap::new();
    for (i, line) in meta_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            MirageError::format(&meta_path, format!("line {} is not key=value", i + 1))
        })?;
        meta.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| {
        meta.get(k)
            .map(String::as_str)
            .ok_or_else(|| MirageError::format(&meta_path, format!("missing key {k}")))
    };
    let version = get("format")?;
    if version != FORMAT_VERSION {
        return Err(MirageError::format(
            &meta_path,
            format!("unknown format version {version:?}"),
        ));
    }
    let encoding = get("encoding")?;
    if encoding != VALUE_ENCODING {
        return Err(MirageError::format(
            &meta_path,
            format!("unsupported encoding {encoding:?}"),
        ));
    }
    let parse_count = |k: &str| -> Result<usize> {
        get(k)?
            .parse::<u32>()
            .map(|v| v as usize)
            .map_err(|_| MirageError::format(&meta_path, format!("{k} is not a 32-bit count")))
    };
    let rows = parse_count("rows")?;
    let cols = parse_count("cols")?;
    let layer_tag = get("layer_tag")?.to_string();
    let model_tag: ModelTag = get("model_tag")?.parse()?;

    let feat_path = dir.join(FEATURES_FILE);
    let feat_bytes = fs::read(&feat_path).map_err(|e| MirageError::io(&feat_path, e))?;
    let expected = rows as u64 * cols as u64 * 4;
    if feat_bytes.len() as u64 != expected {
        return Err(MirageError::format(
            &feat_path,
            format!(
                "size mismatch: expected {expected} bytes, found {}",
                feat_bytes.len()
            ),
        ));
    }
    let data: Vec<f64> = feat_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let features = Matrix::new(rows, cols, data)
        .map_err(|e| MirageError::format(&feat_path, e.to_string()))?;

    let labels = read_u32_file(&dir.join(LABELS_FILE))?;
    if labels.len() != rows {
        return Err(MirageError::format(
            dir.join(LABELS_FILE),
            format!("size mismatch: {} labels for {rows} rows", labels.len()),
        ));
    }

    let mut set = EmbeddingSet::new(features, labels, &layer_tag, model_tag)?;
    set.source_meta = meta
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone())))
        .collect();
    Ok(set)
}

/// Raw little-endian `u32` array, the encoding shared by labels and
/// prediction files.
pub fn read_u32_file(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path).map_err(|e| MirageError::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(MirageError::format(
            path,
            "size mismatch: not a whole number of u32 values",
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_u32_file(path: &Path, values: &[u32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| MirageError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| MirageError::io(path, e))
}

/// Writes each set to `dir/<layer_tag>/`.
pub fn write_layers<'a>(
    dir: &Path,
    sets: impl IntoIterator<Item = &'a EmbeddingSet>,
) -> Result<()> {
    for set in sets {
        write_embedding_set(set, &dir.join(&set.layer_tag))?;
    }
    Ok(())
}

/// Loads a model export: either a single mef-1 directory, or a directory
/// whose subdirectories are mef-1 sets (one per layer). Keyed by layer tag.
pub fn read_layers(dir: &Path) -> Result<BTreeMap<String, EmbeddingSet>> {
    let mut out = BTreeMap::new();
    if dir.join(META_FILE).is_file() {
        let set = read_embedding_set(dir)?;
        out.insert(set.layer_tag.clone(), set);
        return Ok(out);
    }
    let entries = fs::read_dir(dir).map_err(|e| MirageError::io(dir, e))?;
    let mut subdirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).is_file())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let set = read_embedding_set(&sub)?;
        if out.insert(set.layer_tag.clone(), set).is_some() {
            return Err(MirageError::format(&sub, "duplicate layer tag"));
        }
    }
    if out.is_empty() {
        return Err(MirageError::format(dir, "no mef-1 sets found"));
    }
    Ok(out)
}
