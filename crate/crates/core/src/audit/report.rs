//! The `mirage-report-1` document and its companion CSV tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::geometry::SeparabilityResult;
use crate::stats::SeedStat;

use super::config::AuditConfig;

pub const REPORT_SCHEMA: &str = "mirage-report-1";
pub const SCATTER_HEADER: [&str; 4] = ["method", "dataset", "y_u", "delta_lpr"];

/// One value per model of the triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerModel<T> {
    pub original: T,
    pub unlearned: T,
    pub retrained: T,
}

impl<T> PerModel<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerModel<U> {
        PerModel {
            original: f(&self.original),
            unlearned: f(&self.unlearned),
            retrained: f(&self.retrained),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        [
            ("original", &self.original),
            ("unlearned", &self.unlearned),
            ("retrained", &self.retrained),
        ]
        .into_iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub acc_r: f64,
    pub y_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub snr: f64,
    /// Pooled per-coordinate variance `trace_sum / (2d)`.
    pub sigma_sq: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaPairs {
    pub unlearned_vs_original: f64,
    pub unlearned_vs_retrained: f64,
    pub original_vs_retrained: f64,
    pub n_samples_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: String,
    pub dim: PerModel<usize>,
    /// Held-out probe accuracy per seed.
    pub lpr: PerModel<SeedStat>,
    /// Mean probe accuracy on its own training split.
    pub lpr_train: PerModel<f64>,
    pub delta_lpr: f64,
    pub cka: CkaPairs,
    pub separability: PerModel<SeparabilityResult>,
    pub snr: PerModel<SnrEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub diagnostic: String,
    pub epsilon_key: String,
    pub unlearned: f64,
    pub retrained: f64,
    pub difference: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportContext {
    pub method: String,
    pub dataset: String,
    pub train_seed: Option<u64>,
}

impl Default for ReportContext {
    fn default() -> Self {
        ReportContext {
            method: "unlearned".into(),
            dataset: "unnamed".into(),
            train_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgetSummary {
    pub kind: String,
    pub n_rows: usize,
    pub n_forgotten: usize,
    pub n_retained: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema: String,
    /// Seconds since the Unix epoch; the only field allowed to differ between
    /// identical runs.
    pub created_unix: u64,
    pub context: ReportContext,
    pub forget: ForgetSummary,
    pub config: AuditConfig,
    pub seeds: Vec<u64>,
    pub primary_layer: String,
    pub metadata: BTreeMap<String, String>,
    pub output: Option<PerModel<OutputMetrics>>,
    pub lpr_original: SeedStat,
    pub lpr_unlearned: SeedStat,
    pub lpr_retrained: SeedStat,
    pub delta_lpr: f64,
    pub delta_lpr_per_layer: BTreeMap<String, f64>,
    pub cka_unlearned_vs_original: f64,
    pub cka_unlearned_vs_retrained: f64,
    pub cka_original_vs_retrained: f64,
    pub separability: PerModel<f64>,
    pub snr_bound: PerModel<f64>,
    pub layers: Vec<LayerReport>,
    pub certification: Certification,
}

impl AuditReport {
    pub fn layer(&self, tag: &str) -> Option<&LayerReport> {
        self.layers.iter().find(|l| l.layer == tag)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MirageError::InvalidInput(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: AuditReport = serde_json::from_str(text).map_err(|e| MirageError::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        if report.schema != REPORT_SCHEMA {
            return Err(MirageError::Parse {
                line: 1,
                msg: format!("unsupported report schema {:?}", report.schema),
            });
        }
        Ok(report)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MirageError::io(path, e))?;
        Self::from_json(&text).map_err(|e| MirageError::format(path, e.to_string()))
    }

    /// JSON with the timestamp zeroed, for byte-level comparison of runs.
    pub fn canonical_json(&self) -> Result<String> {
        AuditReport {
            created_unix: 0,
            ..self.clone()
        }
        .to_json()
    }
}

fn companion(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// Path of the output-metrics table written next to a report.
pub fn table1_path(report_path: &Path) -> PathBuf {
    companion(report_path, "table1")
}

/// Path of the per-layer diagnostics table written next to a report.
pub fn table2_path(report_path: &Path) -> PathBuf {
    companion(report_path, "table2")
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| MirageError::format(path, e.to_string()))
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| MirageError::io(path, e))
}

fn write_row<I, S>(w: &mut csv::Writer<std::fs::File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(row)
        .map_err(|e| MirageError::format(path, e.to_string()))
}

pub const TABLE1_HEADER: [&str; 3] = ["model", "acc_r", "y_u"];
pub const TABLE2_HEADER: [&str; 7] = [
    "layer",
    "model",
    "lpr_mean",
    "lpr_std",
    "delta_lpr",
    "cka_o",
    "separability",
];

/// Writes the report JSON to `path` plus `<stem>.table1.csv` (output
/// metrics) and `<stem>.table2.csv` (one row per layer and model).
pub fn emit_report(report: &AuditReport, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| MirageError::io(parent, e))?;
    }
    let mut json = report.to_json()?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| MirageError::io(path, e))?;

    let t1 = table1_path(path);
    let mut w = csv_writer(&t1)?;
    write_row(&mut w, &t1, TABLE1_HEADER)?;
    if let Some(out) = &report.output {
        for (model, m) in out.iter() {
            write_row(&mut w, &t1, [model.to_string(), fmt6(m.acc_r), fmt6(m.y_u)])?;
        }
    }
    finish(w, &t1)?;

    let t2 = table2_path(path);
    let mut w = csv_writer(&t2)?;
    write_row(&mut w, &t2, TABLE2_HEADER)?;
    for layer in &report.layers {
        let cka_o = PerModel {
            original: 1.0,
            unlearned: layer.cka.unlearned_vs_original,
            retrained: layer.cka.original_vs_retrained,
        };
        let rows = layer
            .lpr
            .iter()
            .zip(cka_o.iter())
            .zip(layer.separability.iter());
        for (((model, lpr), (_, cka)), (_, sep)) in rows {
            write_row(
                &mut w,
                &t2,
                [
                    layer.layer.clone(),
                    model.to_string(),
                    fmt6(lpr.mean),
                    fmt6(lpr.stddev),
                    fmt6(lpr.mean - layer.lpr.retrained.mean),
                    fmt6(*cka),
                    fmt6(sep.score),
                ],
            )?;
        }
    }
    finish(w, &t2)
}

/// One point of the `(y_u, Δ_LPR)` plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub method: String,
    pub dataset: String,
    pub y_u: f64,
    pub delta_lpr: f64,
}

impl ScatterRow {
    pub fn from_report(report: &AuditReport) -> Self {
        ScatterRow {
            method: report.context.method.clone(),
            dataset: report.context.dataset.clone(),
            y_u: report.output.as_ref().map_or(f64::NAN, |o| o.unlearned.y_u),
            delta_lpr: report.delta_lpr,
        }
    }
}

/// Writes `method,dataset,y_u,delta_lpr`, one row per report, sorted by
/// method then dataset (ties keep input order). Missing `y_u` is left empty.
pub fn emit_scatter(reports: &[AuditReport], path: &Path) -> Result<()> {
    let mut rows: Vec<ScatterRow> = reports.iter().map(ScatterRow::from_report).collect();
    rows.sort_by(|a, b| (&a.method, &a.dataset).cmp(&(&b.method, &b.dataset)));
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, SCATTER_HEADER)?;
    for r in rows {
        let y_u = if r.y_u.is_nan() {
            String::new()
        } else {
            fmt6(r.y_u)
        };
        write_row(&mut w, path, [r.method, r.dataset, y_u, fmt6(r.delta_lpr)])?;
    }
    finish(w, path)
}

/// Reads a scatter CSV back.
pub fn read_scatter(path: &Path) -> Result<Vec<ScatterRow>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| MirageError::format(path, e.to_string()))?;
    let headers = r
        .headers()
        .map_err(|e| MirageError::format(path, e.to_string()))?
        .clone();
    if headers.iter().ne(SCATTER_HEADER) {
        return Err(MirageError::format(path, "unexpected scatter header"));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| MirageError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let num = |s: &str| -> Result<f64> {
            if s.is_empty() {
                return Ok(f64::NAN);
            }
            s.parse().map_err(|_| MirageError::Parse {
                line,
                msg: format!("bad number {s:?}"),
            })
        };
        out.push(ScatterRow {
            method: rec[0].to_string(),
            dataset: rec[1].to_string(),
            y_u: num(&rec[2])?,
            delta_lpr: num(&rec[3])?,
        });
    }
    Ok(out)
}

/// Reads a table written by [`emit_report`] as rows of strings.
pub fn read_table(path: &Path) -> Result<Vec<Vec<String>>> {
    let mut r =
        csv::Reader::from_path(path).map_err(|e| MirageError::format(path, e.to_string()))?;
    r.records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| MirageError::format(path, e.to_string()))
        })
        .collect()
}
