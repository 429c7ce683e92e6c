//! What an unlearning request asks to forget.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};

/// Class ids aligned with the rows of a feature matrix.
pub type LabelVector = Vec<u32>;

/// A forget request: whole classes, or individual training rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForgetSpec {
    ClassLevel { classes: BTreeSet<u32> },
    SampleLevel { sample_indices: BTreeSet<usize> },
}

impl ForgetSpec {
    pub fn classes(classes: impl IntoIterator<Item = u32>) -> Self {
        ForgetSpec::ClassLevel {
            classes: classes.into_iter().collect(),
        }
    }

    pub fn samples(indices: impl IntoIterator<Item = usize>) -> Self {
        ForgetSpec::SampleLevel {
            sample_indices: indices.into_iter().collect(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ForgetSpec::ClassLevel { .. } => "class",
            ForgetSpec::SampleLevel { .. } => "sample",
        }
    }

    pub fn is_class_level(&self) -> bool {
        matches!(self, ForgetSpec::ClassLevel { .. })
    }

    #[inline]
    pub fn is_forgotten(&self, row: usize, label: u32) -> bool {
        match self {
            ForgetSpec::ClassLevel { classes } => classes.contains(&label),
            ForgetSpec::SampleLevel { sample_indices } => sample_indices.contains(&row),
        }
    }

    /// Forget-membership mask over a label vector.
    pub fn mask(&self, labels: &[u32]) -> Vec<bool> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.is_forgotten(i, l))
            .collect()
    }

    /// Checks that every referenced class or row exists in `labels`.
    pub fn validate(&self, labels: &[u32]) -> Result<()> {
        match self {
            ForgetSpec::ClassLevel { classes } => {
                if classes.is_empty() {
                    return Err(MirageError::InvalidInput(
                        "class-level spec names no classes".into(),
                    ));
                }
                let present: BTreeSet<u32> = labels.iter().copied().collect();
                if let Some(c) = classes.iter().find(|c| !present.contains(c)) {
                    return Err(MirageError::InvalidInput(format!(
                        "class {c} does not occur in the data"
                    )));
                }
            }
            ForgetSpec::SampleLevel { sample_indices } => {
                if let Some(&i) = sample_indices.iter().next_back() {
                    if i >= labels.len() {
                        return Err(MirageError::InvalidInput(format!(
                            "sample index {i} out of range for {} rows",
                            labels.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Text form: a `class` or `sample` line, then one id per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(self.kind_name());
        out.push('\n');
        match self {
            ForgetSpec::ClassLevel { classes } => classes.iter().for_each(|c| {
                let _ = writeln!(out, "{c}");
            }),
            ForgetSpec::SampleLevel { sample_indices } => sample_indices.iter().for_each(|i| {
                let _ = writeln!(out, "{i}");
            }),
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (first_line, kind) = lines.next().ok_or(MirageError::Parse {
            line: 1,
            msg: "empty forget spec".into(),
        })?;
        let mut ids = Vec::new();
        for (line, l) in lines {
            let v: u64 = l.parse().map_err(|_| MirageError::Parse {
                line,
                msg: format!("expected a non-negative integer, got {l:?}"),
            })?;
            ids.push((line, v));
        }
        match kind {
            "class" => {
                let mut classes = BTreeSet::new();
                for (line, v) in ids {
                    let c = u32::try_from(v).map_err(|_| MirageError::Parse {
                        line,
                        msg: format!("class id {v} exceeds 32 bits"),
                    })?;
                    classes.insert(c);
                }
                Ok(ForgetSpec::ClassLevel { classes })
            }
            "sample" => Ok(ForgetSpec::SampleLevel {
                sample_indices: ids.into_iter().map(|(_, v)| v as usize).collect(),
            }),
            other => Err(MirageError::Parse {
                line: first_line,
                msg: format!("expected \"class\" or \"sample\", got {other:?}"),
            }),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MirageError::io(path, e))?;
        ForgetSpec::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| MirageError::io(path, e))
    }
}
