use std::fs::File;
use std::path::Path;

use crate::error::{MirageError, Result};
use crate::linalg::Matrix;

use super::{EmbeddingSet, ModelTag};

/// Reads `label,f0,f1,...` CSV. Tags are supplied by the caller.
pub fn read_csv_embeddings(
    path: &Path,
    layer_tag: &str,
    model_tag: ModelTag,
) -> Result<EmbeddingSet> {
    let file = File::open(path).map_err(|e| MirageError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| MirageError::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if header.get(0) != Some("label") {
        return Err(MirageError::Parse {
            line: 1,
            msg: "header must start with \"label\"".into(),
        });
    }
    let cols = header.len() - 1;

    let mut labels = Vec::new();
    let mut data = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| MirageError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != cols + 1 {
            return Err(MirageError::Parse {
                line,
                msg: format!("expected {} fields, found {}", cols + 1, record.len()),
            });
        }
        let label: u32 = record[0].parse().map_err(|_| MirageError::Parse {
            line,
            msg: format!("label {:?} is not a non-negative integer", &record[0]),
        })?;
        labels.push(label);
        for cell in record.iter().skip(1) {
            let v: f64 = cell.parse().map_err(|_| MirageError::Parse {
                line,
                msg: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(MirageError::Parse {
                    line,
                    msg: format!("{cell:?} is not finite"),
                });
            }
            data.push(v);
        }
    }
    let features = Matrix::new(labels.len(), cols, data)?;
    let mut set = EmbeddingSet::new(features, labels, layer_tag, model_tag)?;
    set.source_meta.insert("source".into(), "csv".into());
    Ok(set)
}

pub fn write_csv_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| MirageError::format(path, e.to_string()))?;
    let mut header = vec!["label".to_string()];
    header.extend((0..set.dim()).map(|j| format!("f{j}")));
    let to_err = |e: csv::Error| MirageError::format(path, e.to_string());
    writer.write_record(&header).map_err(to_err)?;
    for (i, label) in set.labels.iter().enumerate() {
        let mut rec = vec![label.to_string()];
        rec.extend(set.features.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&rec).map_err(to_err)?;
    }
    writer.flush().map_err(|e| MirageError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{read_embedding_set, write_embedding_set};
    use crate::rng::Rng;

    #[test]
    fn minimal_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "label,f0\n1,0.5").unwrap();
        let s = read_csv_embeddings(&p, "penultimate", ModelTag::Original).unwrap();
        assert_eq!(s.labels, vec![1]);
        assert_eq!(s.features.data(), &[0.5]);
        assert_eq!(s.layer_tag, "penultimate");
    }

    #[test]
    fn ragged_and_bad_cells_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "label,f0,f1\n0,1,2\n1,3\n").unwrap();
        match read_csv_embeddings(&p, "x", ModelTag::Other) {
            Err(MirageError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&p, "label,f0\n0,1\n1,abc\n").unwrap();
        match read_csv_embeddings(&p, "x", ModelTag::Other) {
            Err(MirageError::Parse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_to_mef_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(77);
        let features = Matrix::from_fn(50, 4, |_, _| rng.normal()).unwrap();
        let labels = (0..50).map(|i| i % 5).collect();
        let orig = EmbeddingSet::new(features, labels, "mid", ModelTag::Other).unwrap();
        let p = dir.path().join("e.csv");
        write_csv_embeddings(&orig, &p).unwrap();
        let parsed = read_csv_embeddings(&p, "mid", ModelTag::Other).unwrap();
        write_embedding_set(&parsed, &dir.path().join("mef")).unwrap();
        let back = read_embedding_set(&dir.path().join("mef")).unwrap();
        assert_eq!(back.labels, orig.labels);
        for (a, b) in orig.features.data().iter().zip(back.features.data()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }
}
