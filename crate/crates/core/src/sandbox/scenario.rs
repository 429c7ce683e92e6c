//! `scenario-1` files and the pipeline that runs them.
//!
//! A scenario is one TOML document:
//!
//! ```toml
//! schema = "scenario-1"
//! name = "illusion"
//! methods = ["boundary"]          # retrain | finetune | boundary | amnesiac
//! train_seeds = [0, 1, 2, 3, 4]
//! layers = ["early", "mid", "penultimate"]   # audited taps
//!
//! [dataset]                       # isotropic Gaussian mixture
//! n_per_class = 300
//! n_classes = 3
//! dim = 16
//! class_mean_scale = 3.0
//! noise_sigma = 1.0
//! seed = 7
//!
//! [vfl]
//! n_parties = 2
//! bottom_dims = [32, 32, 16]
//! top_dims = [32, 3]
//!
//! [forget]
//! kind = "class"                  # or kind = "sample", fraction, seed
//! classes = [0]
//!
//! [train]
//! epochs = 100
//!
//! [unlearn]
//! epochs = 3                      # or a list, one run per value
//!
//! [audit]                         # optional audit configuration
//! ```
//!
//! Output layout under the chosen directory:
//! `forget.txt`, `original/<seed>/`, `retrained/<seed>/`, `<run>/<seed>/`
//! (each holding one mef-1 directory per tap plus `predictions.u32`),
//! `reports/<run>-<seed>.json` with its CSV tables, and `scatter.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::audit::{
    emit_report, emit_scatter, run_audit, AuditConfig, AuditReport, LayerMap, ModelTriple,
    PerModel, ReportContext,
};
use crate::error::{MirageError, Result, StageContext};
use crate::forget::ForgetSpec;
use crate::ingest::mef::{read_layers, read_u32_file, write_layers, write_u32_file};
use crate::ingest::{generate_gaussian_mixture, EmbeddingSet, ModelTag, SyntheticSpec};
use crate::rng::{derive_seed, Rng};

use super::network::{VflSpec, TAP_EARLY, TAP_MID, TAP_PENULTIMATE};
use super::train::{
    forward_taps, train_with_ledger, unlearn_amnesiac_lite, unlearn_boundary_lite,
    unlearn_finetune, unlearn_retrain, Taps, TrainConfig, TrainedModel,
    DEFAULT_BOUNDARY_BOTTOM_SCALE,
};

pub const SCENARIO_SCHEMA: &str = "scenario-1";
pub const PREDICTIONS_FILE: &str = "predictions.u32";
pub const FORGET_FILE: &str = "forget.txt";
pub const SCATTER_FILE: &str = "scatter.csv";
pub const REPORTS_DIR: &str = "reports";
pub const ORIGINAL_DIR: &str = "original";
pub const RETRAINED_DIR: &str = "retrained";

const BASELINE_STREAM: u64 = 0xba5e;
const RETRAIN_METHOD_STREAM: u64 = 0x2e72;
const BOUNDARY_STREAM: u64 = 0xb0d7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Retrain,
    Finetune,
    Boundary,
    Amnesiac,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Retrain => "retrain",
            Method::Finetune => "finetune",
            Method::Boundary => "boundary",
            Method::Amnesiac => "amnesiac",
        }
    }

    fn uses_epochs(self) -> bool {
        matches!(self, Method::Finetune | Method::Boundary)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum EpochList {
    One(usize),
    Many(Vec<usize>),
}

impl EpochList {
    pub fn values(&self) -> Vec<usize> {
        match self {
            EpochList::One(e) => vec![*e],
            EpochList::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VflBlock {
    pub n_parties: usize,
    /// Hidden widths of every party's encoder.
    pub bottom_dims: Vec<usize>,
    /// Top hidden widths followed by the class count.
    pub top_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ForgetBlock {
    Class {
        classes: Vec<u32>,
    },
    /// A uniformly drawn `fraction` of all rows.
    Sample {
        fraction: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainBlock {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
            weight_decay: d.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnlearnBlock {
    pub epochs: EpochList,
    /// Encoder learning-rate multiplier for boundary-lite.
    pub bottom_lr_scale: f64,
}

impl Default for UnlearnBlock {
    fn default() -> Self {
        UnlearnBlock {
            epochs: EpochList::One(5),
            bottom_lr_scale: DEFAULT_BOUNDARY_BOTTOM_SCALE,
        }
    }
}

fn default_train_seeds() -> Vec<u64> {
    vec![0]
}

fn default_layers() -> Vec<String> {
    [TAP_EARLY, TAP_MID, TAP_PENULTIMATE]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    pub methods: Vec<Method>,
    #[serde(default = "default_train_seeds")]
    pub train_seeds: Vec<u64>,
    #[serde(default = "default_layers")]
    pub layers: Vec<String>,
    pub dataset: SyntheticSpec,
    pub vfl: VflBlock,
    pub forget: ForgetBlock,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub unlearn: UnlearnBlock,
    #[serde(default)]
    pub audit: AuditConfig,
}

/// One unlearning run inside a seed: a method, and its epoch count when the
/// method trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Run {
    pub method: Method,
    pub epochs: Option<usize>,
    sweep: bool,
}

impl Run {
    /// Directory and report name: the method, suffixed `-e<epochs>` when the
    /// scenario sweeps epochs.
    pub fn label(&self) -> String {
        match (self.sweep, self.epochs) {
            (true, Some(e)) => format!("{}-e{e}", self.method.name()),
            _ => self.method.name().to_string(),
        }
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` assignment or `[key]` header, else 1.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            let header = t
                .strip_prefix('[')
                .map(|r| r.trim_start().starts_with(key))
                .unwrap_or(false);
            let assign = t
                .strip_prefix(key)
                .map(|r| r.trim_start().starts_with('='))
                .unwrap_or(false);
            header || assign
        })
        .map_or(1, |i| i + 1)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| MirageError::Parse {
            line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
            msg: e.message().to_string(),
        })?;
        scenario.check().map_err(|(key, msg)| MirageError::Parse {
            line: line_of_key(text, key),
            msg,
        })?;
        Ok(scenario)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MirageError::io(path, e))?;
        Self::parse(&text).map_err(|e| MirageError::format(path, e.to_string()))
    }

    /// Semantic checks; errors name the offending key.
    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.schema != SCENARIO_SCHEMA {
            return Err((
                "schema",
                format!(
                    "expected schema {SCENARIO_SCHEMA:?}, found {:?}",
                    self.schema
                ),
            ));
        }
        let name_ok = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !name_ok {
            return Err((
                "name",
                "name must be non-empty and use only letters, digits, '-' or '_'".into(),
            ));
        }
        if self.methods.is_empty() {
            return Err(("methods", "list at least one method".into()));
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return Err(("methods", "methods must not repeat".into()));
        }
        if self.train_seeds.is_empty()
            || self.train_seeds.iter().collect::<BTreeSet<_>>().len() != self.train_seeds.len()
        {
            return Err((
                "train_seeds",
                "train_seeds must be a non-empty list of distinct seeds".into(),
            ));
        }
        self.dataset
            .validate()
            .map_err(|e| ("dataset", e.to_string()))?;
        let vfl = self.vfl_spec().map_err(|e| ("vfl", e.to_string()))?;
        if vfl.n_classes() != self.dataset.n_classes {
            return Err((
                "top_dims",
                format!(
                    "top_dims ends with {} classes but the dataset has {}",
                    vfl.n_classes(),
                    self.dataset.n_classes
                ),
            ));
        }
        if self.layers.is_empty() {
            return Err(("layers", "list at least one layer to audit".into()));
        }
        if let Some(bad) = self.layers.iter().find(|l| !vfl.taps.contains_key(*l)) {
            let known: Vec<&str> = vfl.taps.keys().map(String::as_str).collect();
            return Err((
                "layers",
                format!("unknown tap {bad:?}; the model exports {known:?}"),
            ));
        }
        match &self.forget {
            ForgetBlock::Class { classes } => {
                if classes.is_empty() {
                    return Err(("classes", "forget at least one class".into()));
                }
                if let Some(c) = classes
                    .iter()
                    .find(|&&c| c as usize >= self.dataset.n_classes)
                {
                    return Err(("classes", format!("class {c} does not exist")));
                }
                if classes.iter().collect::<BTreeSet<_>>().len() >= self.dataset.n_classes {
                    return Err(("classes", "at least one class must be retained".into()));
                }
            }
            ForgetBlock::Sample { fraction, .. } => {
                if !(*fraction > 0.0 && *fraction < 1.0) {
                    return Err((
                        "fraction",
                        "fraction must lie strictly between 0 and 1".into(),
                    ));
                }
                if self.methods.contains(&Method::Boundary) {
                    return Err((
                        "methods",
                        "boundary relabeling needs a class-level forget block".into(),
                    ));
                }
            }
        }
        self.train_config(0)
            .validate()
            .map_err(|e| ("train", e.to_string()))?;
        let epochs = self.unlearn.epochs.values();
        if epochs.is_empty() || epochs.iter().collect::<BTreeSet<_>>().len() != epochs.len() {
            return Err((
                "epochs",
                "unlearning epochs must be one value or a list of distinct values".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.unlearn.bottom_lr_scale) {
            return Err((
                "bottom_lr_scale",
                "bottom_lr_scale must lie in [0, 1]".into(),
            ));
        }
        if !self.audit.layers.is_empty() {
            return Err((
                "audit",
                "choose audited taps with the top-level `layers` key".into(),
            ));
        }
        self.audit_config().map_err(|e| ("audit", e.to_string()))?;
        Ok(())
    }

    pub fn vfl_spec(&self) -> Result<VflSpec> {
        VflSpec::equal_split(
            self.dataset.dim,
            self.vfl.n_parties,
            &self.vfl.bottom_dims,
            &self.vfl.top_dims,
        )
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            momentum: self.train.momentum,
            weight_decay: self.train.weight_decay,
            seed,
        }
    }

    pub fn audit_config(&self) -> Result<AuditConfig> {
        let mut cfg = self.audit.clone().with_default_epsilon()?;
        cfg.layers = self.layers.clone();
        Ok(cfg)
    }

    pub fn dataset(&self) -> Result<EmbeddingSet> {
        generate_gaussian_mixture(&self.dataset)
    }

    pub fn forget_spec(&self, n_rows: usize) -> ForgetSpec {
        match &self.forget {
            ForgetBlock::Class { classes } => ForgetSpec::classes(classes.iter().copied()),
            ForgetBlock::Sample { fraction, seed } => {
                let k = ((fraction * n_rows as f64).round() as usize)
                    .clamp(1, n_rows.saturating_sub(1).max(1));
                ForgetSpec::samples(Rng::new(*seed).sample_indices(n_rows, k))
            }
        }
    }

    /// Every unlearning run of one seed, in method order then epoch order.
    pub fn runs(&self) -> Vec<Run> {
        let epochs = self.unlearn.epochs.values();
        let sweep = epochs.len() > 1;
        self.methods
            .iter()
            .flat_map(|&method| {
                if method.uses_epochs() {
                    epochs
                        .iter()
                        .map(|&e| Run {
                            method,
                            epochs: Some(e),
                            sweep,
                        })
                        .collect()
                } else {
                    vec![Run {
                        method,
                        epochs: None,
                        sweep,
                    }]
                }
            })
            .collect()
    }
}

/// Reports of a finished scenario, ordered by run label then seed.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub out_dir: PathBuf,
    pub reports: Vec<AuditReport>,
}

impl ScenarioOutcome {
    pub fn all_certified(&self) -> bool {
        self.reports.iter().all(|r| r.certification.passed)
    }

    pub fn report_path(&self, label: &str, seed: u64) -> PathBuf {
        report_path(&self.out_dir, label, seed)
    }
}

pub fn report_path(out_dir: &Path, label: &str, seed: u64) -> PathBuf {
    out_dir
        .join(REPORTS_DIR)
        .join(format!("{label}-{seed}.json"))
}

/// Directory of the exported taps of one model and seed.
pub fn export_dir(out_dir: &Path, model: &str, seed: u64) -> PathBuf {
    out_dir.join(model).join(seed.to_string())
}

fn write_export(dir: &Path, taps: &Taps) -> Result<()> {
    write_layers(dir, taps.layers.values())?;
    write_u32_file(&dir.join(PREDICTIONS_FILE), &taps.predictions)
}

/// Loads a model export written by a scenario or by hand: its layers, and
/// its predictions when `predictions.u32` is present.
pub fn read_export(dir: &Path) -> Result<(LayerMap, Option<Vec<u32>>)> {
    let layers = read_layers(dir)?;
    let pred_path = dir.join(PREDICTIONS_FILE);
    let predictions = if pred_path.is_file() {
        Some(read_u32_file(&pred_path)?)
    } else {
        None
    };
    Ok((layers, predictions))
}

struct SeedContext<'a> {
    scenario: &'a Scenario,
    data: &'a EmbeddingSet,
    spec: &'a ForgetSpec,
    vfl: &'a VflSpec,
    audit: &'a AuditConfig,
    out: &'a Path,
}

impl SeedContext<'_> {
    fn unlearn(
        &self,
        run: &Run,
        seed: u64,
        original: &TrainedModel,
        ledger: &super::AmnesiacLedger,
    ) -> Result<TrainedModel> {
        let epochs = run.epochs.unwrap_or(0);
        match run.method {
            Method::Retrain => unlearn_retrain(
                self.data,
                self.spec,
                self.vfl,
                &self
                    .scenario
                    .train_config(derive_seed(seed, RETRAIN_METHOD_STREAM)),
            ),
            Method::Finetune => unlearn_finetune(original, self.data, self.spec, epochs),
            Method::Boundary => unlearn_boundary_lite(
                original,
                self.data,
                self.spec,
                epochs,
                self.scenario.unlearn.bottom_lr_scale,
                &mut Rng::new(derive_seed(
                    derive_seed(seed, BOUNDARY_STREAM),
                    epochs as u64,
                )),
            ),
            Method::Amnesiac => unlearn_amnesiac_lite(original, Some(ledger), self.spec),
        }
    }

    fn run_seed(&self, seed: u64) -> Result<Vec<(Run, AuditReport)>> {
        let cfg = self.scenario.train_config(seed);
        let (original, ledger) = train_with_ledger(self.data, self.vfl, &cfg, self.spec)
            .stage(&format!("training the original model (seed {seed})"))?;
        let baseline = unlearn_retrain(
            self.data,
            self.spec,
            self.vfl,
            &self
                .scenario
                .train_config(derive_seed(seed, BASELINE_STREAM)),
        )
        .stage(&format!("training the retrained baseline (seed {seed})"))?;

        let taps_o = forward_taps(&original, self.data, ModelTag::Original)?;
        let taps_r = forward_taps(&baseline, self.data, ModelTag::Retrained)?;
        write_export(&export_dir(self.out, ORIGINAL_DIR, seed), &taps_o)?;
        write_export(&export_dir(self.out, RETRAINED_DIR, seed), &taps_r)?;

        let mut reports = Vec::new();
        for run in self.scenario.runs() {
            let label = run.label();
            let stage = format!("{label} (seed {seed})");
            let unlearned = self.unlearn(&run, seed, &original, &ledger).stage(&stage)?;
            let taps_u = forward_taps(&unlearned, self.data, ModelTag::Unlearned)?;
            write_export(&export_dir(self.out, &label, seed), &taps_u)?;
            let triple =
                ModelTriple::new(taps_o.layers.clone(), taps_u.layers, taps_r.layers.clone())?
                    .with_predictions(PerModel {
                        original: taps_o.predictions.clone(),
                        unlearned: taps_u.predictions,
                        retrained: taps_r.predictions.clone(),
                    })?;
            let mut report =
                run_audit(&triple, self.spec, self.audit).stage(&format!("auditing {stage}"))?;
            report.context = ReportContext {
                method: label.clone(),
                dataset: self.scenario.name.clone(),
                train_seed: Some(seed),
            };
            report.metadata.insert(
                "scenario_epochs".into(),
                run.epochs.map_or("-".into(), |e| e.to_string()),
            );
            emit_report(&report, &report_path(self.out, &label, seed))?;
            reports.push((run, report));
        }
        Ok(reports)
    }
}

/// Trains, unlearns, exports and audits everything the scenario lists, then
/// writes the scatter table. Seeds run in parallel.
pub fn run_scenario(scenario: &Scenario, out_dir: &Path) -> Result<ScenarioOutcome> {
    let data = scenario.dataset().stage("generating the dataset")?;
    let spec = scenario.forget_spec(data.len());
    let vfl = scenario.vfl_spec()?;
    let audit = scenario.audit_config()?;
    fs::create_dir_all(out_dir).map_err(|e| MirageError::io(out_dir, e))?;
    spec.write(&out_dir.join(FORGET_FILE))?;

    let ctx = SeedContext {
        scenario,
        data: &data,
        spec: &spec,
        vfl: &vfl,
        audit: &audit,
        out: out_dir,
    };
    let per_seed: Vec<Vec<(Run, AuditReport)>> = scenario
        .train_seeds
        .par_iter()
        .map(|&seed| ctx.run_seed(seed))
        .collect::<Result<_>>()?;

    let mut keyed: BTreeMap<(Run, u64), AuditReport> = BTreeMap::new();
    for (seed, runs) in scenario.train_seeds.iter().zip(per_seed) {
        for (run, report) in runs {
            keyed.insert((run, *seed), report);
        }
    }
    let reports: Vec<AuditReport> = keyed.into_values().collect();
    emit_scatter(&reports, &out_dir.join(SCATTER_FILE))?;
    Ok(ScenarioOutcome {
        out_dir: out_dir.to_path_buf(),
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = "scenario-1"
name = "tiny"
methods = ["retrain", "finetune", "boundary", "amnesiac"]
train_seeds = [3]

[dataset]
n_per_class = 40
n_classes = 3
dim = 6
class_mean_scale = 3.0
noise_sigma = 1.0
seed = 1

[vfl]
n_parties = 2
bottom_dims = [6, 6, 4]
top_dims = [6, 3]

[forget]
kind = "class"
classes = [0]

[train]
epochs = 5

[unlearn]
epochs = [1, 2]

[audit]
seeds = [0, 1]
"#;

    #[test]
    fn parses_and_expands_runs() {
        let s = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(s.layers, default_layers());
        let labels: Vec<String> = s.runs().iter().map(Run::label).collect();
        assert_eq!(
            labels,
            [
                "retrain",
                "finetune-e1",
                "finetune-e2",
                "boundary-e1",
                "boundary-e2",
                "amnesiac"
            ]
        );
        assert_eq!(s.audit_config().unwrap().epsilon.len(), 5);
    }

    #[test]
    fn errors_carry_lines() {
        let bad = MINIMAL.replace("dim = 6", "dim = \"six\"");
        match Scenario::parse(&bad) {
            Err(MirageError::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("classes = [0]", "classes = [7]");
        match Scenario::parse(&bad) {
            Err(MirageError::Parse { line, msg }) => {
                assert_eq!(line, 22);
                assert!(msg.contains("class 7"));
            }
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("schema = \"scenario-1\"", "schema = \"scenario-9\"");
        assert!(matches!(
            Scenario::parse(&bad),
            Err(MirageError::Parse { line: 2, .. })
        ));
        let bad = MINIMAL.replace("train_seeds = [3]", "train_seeds = [3]\ncolour = 1");
        assert!(Scenario::parse(&bad).is_err());
        let bad = MINIMAL.replace(
            "kind = \"class\"\nclasses = [0]",
            "kind = \"sample\"\nfraction = 0.1\nseed = 2",
        );
        assert!(Scenario::parse(&bad)
            .unwrap_err()
            .to_string()
            .contains("class-level"));
        let bad = MINIMAL.replace("top_dims = [6, 3]", "top_dims = [6, 4]");
        assert!(Scenario::parse(&bad).is_err());
    }

    #[test]
    fn sample_forget_fraction() {
        let text = MINIMAL
            .replace(
                "kind = \"class\"\nclasses = [0]",
                "kind = \"sample\"\nfraction = 0.1\nseed = 2",
            )
            .replace("\"boundary\", ", "");
        let s = Scenario::parse(&text).unwrap();
        match s.forget_spec(120) {
            ForgetSpec::SampleLevel { sample_indices } => assert_eq!(sample_indices.len(), 12),
            other => panic!("{other:?}"),
        }
        assert_eq!(s.forget_spec(120), s.forget_spec(120));
    }

    #[test]
    fn runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario::parse(MINIMAL).unwrap();
        let outcome = run_scenario(&s, dir.path()).unwrap();
        assert_eq!(outcome.reports.len(), 6);
        for label in ["retrain", "boundary-e2", "amnesiac"] {
            assert!(outcome.report_path(label, 3).is_file());
            let (layers, preds) = read_export(&export_dir(dir.path(), label, 3)).unwrap();
            assert_eq!(layers.len(), 4);
            assert_eq!(preds.unwrap().len(), 120);
        }
        assert!(dir.path().join(SCATTER_FILE).is_file());
        assert!(ForgetSpec::read(&dir.path().join(FORGET_FILE)).is_ok());
        let again = tempfile::tempdir().unwrap();
        let second = run_scenario(&s, again.path()).unwrap();
        for (a, b) in outcome.reports.iter().zip(&second.reports) {
            assert_eq!(a.canonical_json().unwrap(), b.canonical_json().unwrap());
        }
    }
}
