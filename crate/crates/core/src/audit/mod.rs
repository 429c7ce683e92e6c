//! Full diagnostic battery over an original / unlearned / retrained triple.

mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::error::{MirageError, Result, StageContext};
use crate::forget::ForgetSpec;
use crate::geometry::{linear_cka, probe_accuracy_lower_bound, separability, SeparabilityResult};
use crate::ingest::{forget_partition, EmbeddingSet};
use crate::probe::{lpr_probe, ProbeModel};
use crate::rng::derive_seed;
use crate::stats::SeedStat;

pub use config::{
    default_epsilon, AuditConfig, Tolerance, DEFAULT_PRIMARY_LAYER, DIAG_CKA, DIAG_LAYERWISE_LPR,
    DIAG_LPR, DIAG_SEPARABILITY, DIAG_SNR_BOUND,
};
pub use report::{
    emit_report, emit_scatter, read_scatter, read_table, table1_path, table2_path, AuditReport,
    Certification, CkaPairs, ForgetSummary, LayerReport, OutputMetrics, PerModel, ReportContext,
    ScatterRow, SnrEstimate, Verdict, REPORT_SCHEMA, SCATTER_HEADER, TABLE1_HEADER, TABLE2_HEADER,
};

const CKA_STREAM: u64 = 0xc4a;
const SEPARABILITY_STREAM: u64 = 0x5e9;

pub type LayerMap = BTreeMap<String, EmbeddingSet>;

/// Layer embeddings of the original, unlearned and retrained models over the
/// same rows, with optional predicted labels per model.
#[derive(Debug, Clone)]
pub struct ModelTriple {
    pub original: LayerMap,
    pub unlearned: LayerMap,
    pub retrained: LayerMap,
    pub predictions: Option<PerModel<Vec<u32>>>,
}

impl ModelTriple {
    pub fn new(original: LayerMap, unlearned: LayerMap, retrained: LayerMap) -> Result<Self> {
        let t = ModelTriple {
            original,
            unlearned,
            retrained,
            predictions: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_predictions(mut self, predictions: PerModel<Vec<u32>>) -> Result<Self> {
        self.predictions = Some(predictions);
        self.validate()?;
        Ok(self)
    }

    fn models(&self) -> [(&'static str, &LayerMap); 3] {
        [
            ("original", &self.original),
            ("unlearned", &self.unlearned),
            ("retrained", &self.retrained),
        ]
    }

    pub fn layer_tags(&self) -> Vec<String> {
        self.original.keys().cloned().collect()
    }

    /// The shared label vector.
    pub fn labels(&self) -> &[u32] {
        &self
            .original
            .values()
            .next()
            .expect("validated triple has a layer")
            .labels
    }

    pub fn n_rows(&self) -> usize {
        self.labels().len()
    }

    pub fn validate(&self) -> Result<()> {
        let tags: BTreeSet<&String> = self.original.keys().collect();
        if tags.is_empty() {
            return Err(MirageError::InvalidInput(
                "model triple has no layers".into(),
            ));
        }
        let reference = self.labels();
        for (name, layers) in self.models() {
            if layers.keys().collect::<BTreeSet<_>>() != tags {
                return Err(MirageError::InvalidInput(format!(
                    "{name} model has a different layer set"
                )));
            }
            for (tag, set) in layers {
                if set.labels != reference {
                    return Err(MirageError::InvalidInput(format!(
                        "{name}/{tag}: row count or label vector differs from the other models"
                    )));
                }
            }
        }
        if let Some(p) = &self.predictions {
            for (name, pred) in p.iter() {
                if pred.len() != reference.len() {
                    return Err(MirageError::DimensionMismatch(format!(
                        "{name} predictions have {} entries for {} rows",
                        pred.len(),
                        reference.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Retained accuracy and forgotten-set accuracy of one prediction vector.
pub fn output_metrics(
    labels: &[u32],
    predictions: &[u32],
    spec: &ForgetSpec,
) -> Result<(f64, f64)> {
    if labels.len() != predictions.len() {
        return Err(MirageError::DimensionMismatch(
            "labels and predictions differ in length".into(),
        ));
    }
    let (forgotten, retained) = forget_partition(labels, spec)?;
    let acc = |rows: &[usize]| {
        rows.iter()
            .filter(|&&i| predictions[i] == labels[i])
            .count() as f64
            / rows.len() as f64
    };
    Ok((acc(&retained), acc(&forgotten)))
}

/// `LPR(unlearned) − LPR(retrained)`.
pub fn forgetting_gap(lpr_unlearned: f64, lpr_retrained: f64) -> f64 {
    lpr_unlearned - lpr_retrained
}

/// One diagnostic evaluated on the unlearned and retrained models.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticPair {
    /// Name shown in the verdict.
    pub name: String,
    /// Key looked up in the epsilon map.
    pub epsilon_key: String,
    pub unlearned: f64,
    pub retrained: f64,
}

impl DiagnosticPair {
    pub fn new(key: &str, unlearned: f64, retrained: f64) -> Self {
        DiagnosticPair {
            name: key.to_string(),
            epsilon_key: key.to_string(),
            unlearned,
            retrained,
        }
    }
}

/// Pass iff `|unlearned − retrained| ≤ ε` for every diagnostic.
pub fn certify(
    diagnostics: &[DiagnosticPair],
    epsilon: &BTreeMap<String, Tolerance>,
) -> Result<Certification> {
    let mut verdicts = Vec::with_capacity(diagnostics.len());
    for d in diagnostics {
        let tol = epsilon.get(&d.epsilon_key).ok_or_else(|| {
            MirageError::Config(format!(
                "no epsilon configured for diagnostic {:?}",
                d.epsilon_key
            ))
        })?;
        let difference = (d.unlearned - d.retrained).abs();
        let threshold = tol.threshold(d.retrained);
        verdicts.push(Verdict {
            diagnostic: d.name.clone(),
            epsilon_key: d.epsilon_key.clone(),
            unlearned: d.unlearned,
            retrained: d.retrained,
            difference,
            threshold,
            passed: difference <= threshold,
        });
    }
    Ok(Certification {
        passed: verdicts.iter().all(|v| v.passed),
        verdicts,
    })
}

fn resolve_layers(triple: &ModelTriple, config: &AuditConfig) -> Result<(Vec<String>, String)> {
    let available = triple.layer_tags();
    let layers = if config.layers.is_empty() {
        available.clone()
    } else {
        for l in &config.layers {
            if !available.contains(l) {
                return Err(MirageError::InvalidInput(format!(
                    "layer {l:?} is missing from the model triple"
                )));
            }
        }
        config.layers.clone()
    };
    let primary = if layers.contains(&config.primary_layer) {
        config.primary_layer.clone()
    } else if layers.len() == 1 {
        layers[0].clone()
    } else {
        return Err(MirageError::InvalidInput(format!(
            "primary layer {:?} is not among the audited layers {layers:?}",
            config.primary_layer
        )));
    };
    Ok((layers, primary))
}

const MODEL_NAMES: [&str; 3] = ["original", "unlearned", "retrained"];

fn model_layer<'a>(triple: &'a ModelTriple, model: usize, layer: &str) -> &'a EmbeddingSet {
    let map = match model {
        0 => &triple.original,
        1 => &triple.unlearned,
        _ => &triple.retrained,
    };
    &map[layer]
}

/// Probe fits for every (layer, model, seed), in that nesting order.
fn probe_grid(
    triple: &ModelTriple,
    spec: &ForgetSpec,
    config: &AuditConfig,
    layers: &[String],
    models: &[usize],
) -> Result<Vec<ProbeModel>> {
    let tasks: Vec<(usize, usize, u64)> = layers
        .iter()
        .enumerate()
        .flat_map(|(li, _)| {
            models
                .iter()
                .flat_map(move |&m| config.seeds.iter().map(move |&s| (li, m, s)))
        })
        .collect();
    tasks
        .par_iter()
        .map(|&(li, m, seed)| {
            let set = model_layer(triple, m, &layers[li]);
            lpr_probe(set, spec, &config.probe.with_seed(seed)).stage(&format!(
                "lpr probe on {}/{} seed {seed}",
                MODEL_NAMES[m], layers[li]
            ))
        })
        .collect()
}

fn seed_stat(fits: &[ProbeModel]) -> (SeedStat, f64) {
    let stat = SeedStat::from_values(fits.iter().map(|p| p.holdout_accuracy).collect());
    let train = fits.iter().map(|p| p.train_accuracy).sum::<f64>() / fits.len() as f64;
    (stat, train)
}

/// `LPR_l(unlearned) − LPR_l(retrained)` for each audited layer, averaged
/// over the configured seeds.
pub fn layerwise_gaps(
    triple: &ModelTriple,
    spec: &ForgetSpec,
    config: &AuditConfig,
) -> Result<BTreeMap<String, f64>> {
    triple.validate()?;
    config.validate()?;
    let (layers, _) = resolve_layers(triple, config)?;
    let fits = probe_grid(triple, spec, config, &layers, &[1, 2])?;
    let k = config.seeds.len();
    Ok(layers
        .iter()
        .enumerate()
        .map(|(li, tag)| {
            let base = li * 2 * k;
            let u = seed_stat(&fits[base..base + k]).0.mean;
            let r = seed_stat(&fits[base + k..base + 2 * k]).0.mean;
            (tag.clone(), forgetting_gap(u, r))
        })
        .collect())
}

struct Geometry {
    cka: CkaPairs,
    separability: PerModel<SeparabilityResult>,
    snr: PerModel<SnrEstimate>,
}

fn snr_estimate(sep: &SeparabilityResult, dim: usize) -> SnrEstimate {
    let sigma_sq = sep.trace_sum / (2.0 * dim as f64);
    let snr = sep.mean_gap_sq / sigma_sq;
    SnrEstimate {
        snr,
        sigma_sq,
        bound: probe_accuracy_lower_bound(snr),
    }
}

fn layer_geometry(
    triple: &ModelTriple,
    layer: &str,
    forgotten: &[usize],
    retained: &[usize],
    config: &AuditConfig,
) -> Result<Geometry> {
    let sets: Vec<&EmbeddingSet> = (0..3).map(|m| model_layer(triple, m, layer)).collect();
    let cka_seed = derive_seed(config.seeds[0], CKA_STREAM);
    let cap = config.cka_sample_cap;
    let pairs = [(1, 0), (1, 2), (0, 2)];
    let cka: Vec<_> = pairs
        .par_iter()
        .map(|&(a, b)| {
            linear_cka(&sets[a].features, &sets[b].features, cap, cka_seed).stage(&format!(
                "cka {}/{} on {layer}",
                MODEL_NAMES[a], MODEL_NAMES[b]
            ))
        })
        .collect::<Result<_>>()?;
    let sep_seed = derive_seed(config.seeds[0], SEPARABILITY_STREAM);
    let seps: Vec<SeparabilityResult> = sets
        .par_iter()
        .enumerate()
        .map(|(m, set)| {
            separability(
                &set.features.select_rows(forgotten),
                &set.features.select_rows(retained),
                sep_seed,
            )
            .stage(&format!("separability of {}/{layer}", MODEL_NAMES[m]))
        })
        .collect::<Result<_>>()?;
    let separability = PerModel {
        original: seps[0].clone(),
        unlearned: seps[1].clone(),
        retrained: seps[2].clone(),
    };
    let snr = PerModel {
        original: snr_estimate(&seps[0], sets[0].dim()),
        unlearned: snr_estimate(&seps[1], sets[1].dim()),
        retrained: snr_estimate(&seps[2], sets[2].dim()),
    };
    Ok(Geometry {
        cka: CkaPairs {
            unlearned_vs_original: cka[0].value,
            unlearned_vs_retrained: cka[1].value,
            original_vs_retrained: cka[2].value,
            n_samples_used: cka[0].n_samples_used,
        },
        separability,
        snr,
    })
}

fn metadata(config: &AuditConfig) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("cka_centering".into(), "column-centered".into()),
        ("covariance".into(), "unbiased (n-1)".into()),
        (
            "separability_sampling".into(),
            "retained rows subsampled without replacement to the forgotten count".into(),
        ),
        (
            "snr_sigma".into(),
            "pooled per-coordinate variance trace_sum/(2d)".into(),
        ),
        (
            "lpr_accuracy".into(),
            "held-out split; training-split accuracy in layers[].lpr_train".into(),
        ),
        ("lpr_balanced".into(), config.probe.balance.to_string()),
        (
            "seed_aggregation".into(),
            "mean and sample stddev; certification uses the mean".into(),
        ),
        (
            "cka_certification".into(),
            "cka verdict compares CKA(unlearned, retrained) with CKA(retrained, retrained) = 1"
                .into(),
        ),
    ])
}

/// Runs every diagnostic and certifies the unlearned model against the
/// retrained one. Independent parts run in parallel; the result does not
/// depend on scheduling.
pub fn run_audit(
    triple: &ModelTriple,
    spec: &ForgetSpec,
    config: &AuditConfig,
) -> Result<AuditReport> {
    triple.validate().stage("validate model triple")?;
    config.validate().stage("validate audit config")?;
    let labels = triple.labels();
    spec.validate(labels).stage("validate forget spec")?;
    let (layers, primary) = resolve_layers(triple, config).stage("resolve layers")?;
    let (forgotten, retained) = forget_partition(labels, spec).stage("partition rows")?;

    let (fits, geometry) = rayon::join(
        || probe_grid(triple, spec, config, &layers, &[0, 1, 2]),
        || {
            layers
                .par_iter()
                .map(|l| layer_geometry(triple, l, &forgotten, &retained, config))
                .collect::<Result<Vec<_>>>()
        },
    );
    let fits = fits?;
    let geometry = geometry?;

    let output = match &triple.predictions {
        Some(p) => {
            let metric = |pred: &Vec<u32>| -> Result<OutputMetrics> {
                let (acc_r, y_u) = output_metrics(labels, pred, spec)?;
                Ok(OutputMetrics { acc_r, y_u })
            };
            Some(PerModel {
                original: metric(&p.original).stage("output metrics")?,
                unlearned: metric(&p.unlearned).stage("output metrics")?,
                retrained: metric(&p.retrained).stage("output metrics")?,
            })
        }
        None => None,
    };

    let k = config.seeds.len();
    let mut layer_reports = Vec::with_capacity(layers.len());
    for (li, (tag, geo)) in layers.iter().zip(geometry).enumerate() {
        let base = li * 3 * k;
        let (o, o_tr) = seed_stat(&fits[base..base + k]);
        let (u, u_tr) = seed_stat(&fits[base + k..base + 2 * k]);
        let (r, r_tr) = seed_stat(&fits[base + 2 * k..base + 3 * k]);
        layer_reports.push(LayerReport {
            layer: tag.clone(),
            dim: PerModel {
                original: triple.original[tag].dim(),
                unlearned: triple.unlearned[tag].dim(),
                retrained: triple.retrained[tag].dim(),
            },
            delta_lpr: forgetting_gap(u.mean, r.mean),
            lpr: PerModel {
                original: o,
                unlearned: u,
                retrained: r,
            },
            lpr_train: PerModel {
                original: o_tr,
                unlearned: u_tr,
                retrained: r_tr,
            },
            cka: geo.cka,
            separability: geo.separability,
            snr: geo.snr,
        });
    }

    let main = layer_reports
        .iter()
        .find(|l| l.layer == primary)
        .expect("primary layer resolved");
    let mut diagnostics = vec![DiagnosticPair::new(
        DIAG_LPR,
        main.lpr.unlearned.mean,
        main.lpr.retrained.mean,
    )];
    for l in &layer_reports {
        diagnostics.push(DiagnosticPair {
            name: format!("{DIAG_LAYERWISE_LPR}:{}", l.layer),
            epsilon_key: DIAG_LAYERWISE_LPR.into(),
            unlearned: l.lpr.unlearned.mean,
            retrained: l.lpr.retrained.mean,
        });
    }
    diagnostics.push(DiagnosticPair::new(
        DIAG_CKA,
        main.cka.unlearned_vs_retrained,
        1.0,
    ));
    diagnostics.push(DiagnosticPair::new(
        DIAG_SEPARABILITY,
        main.separability.unlearned.score,
        main.separability.retrained.score,
    ));
    diagnostics.push(DiagnosticPair::new(
        DIAG_SNR_BOUND,
        main.snr.unlearned.bound,
        main.snr.retrained.bound,
    ));
    let certification = certify(&diagnostics, &config.epsilon).stage("certify")?;

    let created_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    Ok(AuditReport {
        schema: REPORT_SCHEMA.into(),
        created_unix,
        context: ReportContext::default(),
        forget: ForgetSummary {
            kind: spec.kind_name().into(),
            n_rows: labels.len(),
            n_forgotten: forgotten.len(),
            n_retained: retained.len(),
        },
        config: config.clone(),
        seeds: config.seeds.clone(),
        primary_layer: primary.clone(),
        metadata: metadata(config),
        output,
        lpr_original: main.lpr.original.clone(),
        lpr_unlearned: main.lpr.unlearned.clone(),
        lpr_retrained: main.lpr.retrained.clone(),
        delta_lpr: main.delta_lpr,
        delta_lpr_per_layer: layer_reports
            .iter()
            .map(|l| (l.layer.clone(), l.delta_lpr))
            .collect(),
        cka_unlearned_vs_original: main.cka.unlearned_vs_original,
        cka_unlearned_vs_retrained: main.cka.unlearned_vs_retrained,
        cka_original_vs_retrained: main.cka.original_vs_retrained,
        separability: main.separability.map(|s| s.score),
        snr_bound: main.snr.map(|s| s.bound),
        layers: layer_reports,
        certification,
    })
}
