use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::forget::ForgetSpec;
use crate::ingest::{forget_partition, EmbeddingSet, ModelTag};
use crate::linalg::Matrix;
use crate::rng::{derive_seed, Rng};

use super::network::{argmax, softmax, Trace, VflSpec};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5b0f;
const FINETUNE_STREAM: u64 = 0xf17e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Decoupled L2 shrinkage applied in every update.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(MirageError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(MirageError::Config(
                "learning_rate must be finite and ≥ 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MirageError::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(MirageError::Config(
                "weight_decay must be finite and ≥ 0".into(),
            ));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Parameters of a trained split model and its loss trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub vfl: VflSpec,
    pub params: Vec<f64>,
    /// Mean training loss before the first epoch and after each epoch.
    pub history: Vec<f64>,
    pub config: TrainConfig,
}

/// Summed parameter changes of every update whose batch held a forgotten row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmnesiacLedger {
    pub spec: ForgetSpec,
    pub delta_sum: Vec<f64>,
    pub n_batches: usize,
}

/// Embeddings at each named tap plus argmax predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub layers: BTreeMap<String, EmbeddingSet>,
    pub predictions: Vec<u32>,
}

fn check_data(data: &EmbeddingSet, vfl: &VflSpec) -> Result<()> {
    vfl.validate()?;
    if data.dim() != vfl.input_dim() {
        return Err(MirageError::DimensionMismatch(format!(
            "data has {} columns but the partition covers {}",
            data.dim(),
            vfl.input_dim()
        )));
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l as usize >= vfl.n_classes()) {
        return Err(MirageError::InvalidInput(format!(
            "label {l} is outside the {} model classes",
            vfl.n_classes()
        )));
    }
    Ok(())
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.vfl.n_classes()
    }

    pub fn logits(&self, x: &Matrix) -> Matrix {
        let layout = self.vfl.layout();
        let mut trace = Trace::default();
        let c = self.n_classes();
        let mut out = Vec::with_capacity(x.rows() * c);
        for i in 0..x.rows() {
            layout.forward(&self.vfl, &self.params, x.row(i), &mut trace);
            out.extend_from_slice(trace.logits());
        }
        Matrix::new(x.rows(), c, out).expect("finite logits")
    }

    pub fn probabilities(&self, x: &Matrix) -> Matrix {
        let logits = self.logits(x);
        let c = logits.cols();
        let data = (0..logits.rows())
            .flat_map(|i| softmax(logits.row(i)))
            .collect();
        Matrix::new(logits.rows(), c, data).expect("finite probabilities")
    }

    pub fn predict(&self, x: &Matrix) -> Vec<u32> {
        let logits = self.logits(x);
        (0..logits.rows())
            .map(|i| argmax(logits.row(i)) as u32)
            .collect()
    }

    /// Fraction of `rows` whose prediction matches its label.
    pub fn accuracy(&self, data: &EmbeddingSet, rows: &[usize]) -> f64 {
        let pred = self.predict(&data.features.select_rows(rows));
        let hits = rows
            .iter()
            .zip(&pred)
            .filter(|(&i, &p)| data.labels[i] == p)
            .count();
        hits as f64 / rows.len().max(1) as f64
    }

    /// Mean softmax cross-entropy over `rows` against `targets` and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(&self, x: &Matrix, targets: &[u32], rows: &[usize]) -> (f64, Vec<f64>) {
        let layout = self.vfl.layout();
        let mut grad = vec![0.0; self.params.len()];
        let loss = batch_grad(
            &layout,
            &self.vfl,
            &self.params,
            x,
            targets,
            rows,
            &mut grad,
        );
        (loss, grad)
    }

    pub fn loss(&self, x: &Matrix, targets: &[u32], rows: &[usize]) -> f64 {
        mean_loss(&self.vfl, &self.params, x, targets, rows)
    }
}

fn batch_grad(
    layout: &super::network::Layout,
    vfl: &VflSpec,
    params: &[f64],
    x: &Matrix,
    targets: &[u32],
    rows: &[usize],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut trace = Trace::default();
    let mut loss = 0.0;
    for &i in rows {
        layout.forward(vfl, params, x.row(i), &mut trace);
        loss += layout.backward(vfl, params, x.row(i), targets[i] as usize, &trace, grad);
    }
    let n = rows.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    loss / n
}

fn mean_loss(vfl: &VflSpec, params: &[f64], x: &Matrix, targets: &[u32], rows: &[usize]) -> f64 {
    let layout = vfl.layout();
    let mut trace = Trace::default();
    let mut loss = 0.0;
    for &i in rows {
        layout.forward(vfl, params, x.row(i), &mut trace);
        let z = trace.logits();
        let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + z.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        loss += lse - z[targets[i] as usize];
    }
    loss / rows.len().max(1) as f64
}

struct LedgerSink<'a> {
    forgotten: &'a [bool],
    ledger: &'a mut AmnesiacLedger,
}

/// Mini-batch SGD with heavy-ball momentum over `rows`, reshuffled every
/// epoch from `shuffle_seed`. Returns the loss trajectory.
#[allow(clippy::too_many_arguments)]
fn sgd(
    vfl: &VflSpec,
    params: &mut [f64],
    x: &Matrix,
    targets: &[u32],
    rows: &[usize],
    cfg: &TrainConfig,
    epochs: usize,
    shuffle_seed: u64,
    bottom_lr_scale: f64,
    mut sink: Option<LedgerSink>,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(MirageError::InvalidInput("no rows to train on".into()));
    }
    let layout = vfl.layout();
    let top_offset = layout.top_offset();
    let mut grad = vec![0.0; params.len()];
    let mut velocity = vec![0.0; params.len()];
    let mut order = rows.to_vec();
    let mut history = vec![mean_loss(vfl, params, x, targets, rows)];
    for epoch in 0..epochs {
        Rng::new(derive_seed(shuffle_seed, epoch as u64)).shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            batch_grad(&layout, vfl, params, x, targets, batch, &mut grad);
            for (k, ((p, v), g)) in params.iter_mut().zip(&mut velocity).zip(&grad).enumerate() {
                let lr = if k < top_offset {
                    cfg.learning_rate * bottom_lr_scale
                } else {
                    cfg.learning_rate
                };
                *v = cfg.momentum * *v - lr * (g + cfg.weight_decay * *p);
                *p += *v;
            }
            if let Some(s) = sink.as_mut() {
                if batch.iter().any(|&i| s.forgotten[i]) {
                    for (acc, v) in s.ledger.delta_sum.iter_mut().zip(&velocity) {
                        *acc += v;
                    }
                    s.ledger.n_batches += 1;
                }
            }
        }
        let loss = mean_loss(vfl, params, x, targets, rows);
        if !loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(MirageError::Diverged {
                epoch: epoch + 1,
                loss,
            });
        }
        history.push(loss);
    }
    Ok(history)
}

fn train_rows(
    data: &EmbeddingSet,
    rows: &[usize],
    vfl: &VflSpec,
    cfg: &TrainConfig,
    sink: Option<LedgerSink>,
) -> Result<TrainedModel> {
    check_data(data, vfl)?;
    let mut params = vfl.init_params(&mut Rng::new(derive_seed(cfg.seed, INIT_STREAM)));
    let history = sgd(
        vfl,
        &mut params,
        &data.features,
        &data.labels,
        rows,
        cfg,
        cfg.epochs,
        derive_seed(cfg.seed, SHUFFLE_STREAM),
        1.0,
        sink,
    )?;
    Ok(TrainedModel {
        vfl: vfl.clone(),
        params,
        history,
        config: cfg.clone(),
    })
}

/// Trains a fresh model on every row of `data`.
pub fn train(data: &EmbeddingSet, vfl: &VflSpec, cfg: &TrainConfig) -> Result<TrainedModel> {
    let rows: Vec<usize> = (0..data.len()).collect();
    train_rows(data, &rows, vfl, cfg, None)
}

/// Trains like [`train`] while recording the update ledger for `spec`.
pub fn train_with_ledger(
    data: &EmbeddingSet,
    vfl: &VflSpec,
    cfg: &TrainConfig,
    spec: &ForgetSpec,
) -> Result<(TrainedModel, AmnesiacLedger)> {
    let rows: Vec<usize> = (0..data.len()).collect();
    let forgotten = spec.mask(&data.labels);
    let mut ledger = AmnesiacLedger {
        spec: spec.clone(),
        delta_sum: vec![0.0; vfl.n_params()],
        n_batches: 0,
    };
    let model = train_rows(
        data,
        &rows,
        vfl,
        cfg,
        Some(LedgerSink {
            forgotten: &forgotten,
            ledger: &mut ledger,
        }),
    )?;
    Ok((model, ledger))
}

/// Activations at every tap of `model.vfl` for each row, plus predictions.
pub fn forward_taps(
    model: &TrainedModel,
    data: &EmbeddingSet,
    model_tag: ModelTag,
) -> Result<Taps> {
    check_data(data, &model.vfl)?;
    let layout = model.vfl.layout();
    let widths = model.vfl.hidden_widths();
    let depth = model.vfl.bottom_depth();
    let taps: Vec<(&String, usize)> = model.vfl.taps.iter().map(|(k, &v)| (k, v)).collect();
    let mut buffers: Vec<Vec<f64>> = taps
        .iter()
        .map(|&(_, idx)| Vec::with_capacity(data.len() * widths[idx]))
        .collect();
    let mut predictions = Vec::with_capacity(data.len());
    let mut trace = Trace::default();
    let mut scratch = Vec::new();
    for i in 0..data.len() {
        layout.forward(&model.vfl, &model.params, data.features.row(i), &mut trace);
        for (buf, &(_, idx)) in buffers.iter_mut().zip(&taps) {
            trace.hidden(idx, depth, &mut scratch);
            buf.extend_from_slice(&scratch);
        }
        predictions.push(argmax(trace.logits()) as u32);
    }
    let mut layers = BTreeMap::new();
    for ((name, idx), buf) in taps.into_iter().zip(buffers) {
        let features = Matrix::new(data.len(), widths[idx], buf)?;
        let mut set = EmbeddingSet::new(features, data.labels.clone(), name, model_tag)?;
        set.source_meta = data.source_meta.clone();
        set.source_meta
            .insert("hidden_index".into(), idx.to_string());
        layers.insert(name.clone(), set);
    }
    Ok(Taps {
        layers,
        predictions,
    })
}

/// Trains from scratch on the retained rows only.
pub fn unlearn_retrain(
    data: &EmbeddingSet,
    spec: &ForgetSpec,
    vfl: &VflSpec,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let (_, retained) = forget_partition(&data.labels, spec)?;
    train_rows(data, &retained, vfl, cfg, None)
}

/// Continues SGD from `model` on the retained rows for `epochs` epochs.
pub fn unlearn_finetune(
    model: &TrainedModel,
    data: &EmbeddingSet,
    spec: &ForgetSpec,
    epochs: usize,
) -> Result<TrainedModel> {
    check_data(data, &model.vfl)?;
    let (_, retained) = forget_partition(&data.labels, spec)?;
    let mut params = model.params.clone();
    let history = sgd(
        &model.vfl,
        &mut params,
        &data.features,
        &data.labels,
        &retained,
        &model.config,
        epochs,
        derive_seed(model.config.seed, FINETUNE_STREAM),
        1.0,
        None,
    )?;
    Ok(TrainedModel {
        params,
        history,
        ..model.clone()
    })
}

/// For each forgotten row, the retained class with the largest logit under
/// `model`.
pub fn nearest_incorrect_labels(
    model: &TrainedModel,
    data: &EmbeddingSet,
    spec: &ForgetSpec,
) -> Result<Vec<u32>> {
    let ForgetSpec::ClassLevel { classes } = spec else {
        return Err(MirageError::InvalidInput(
            "boundary relabeling needs a class-level forget spec".into(),
        ));
    };
    let (forgotten, _) = forget_partition(&data.labels, spec)?;
    if (0..model.n_classes() as u32).all(|c| classes.contains(&c)) {
        return Err(MirageError::InvalidInput(
            "every class is forgotten; nothing to relabel to".into(),
        ));
    }
    let logits = model.logits(&data.features.select_rows(&forgotten));
    Ok((0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            (0..row.len())
                .filter(|c| !classes.contains(&(*c as u32)))
                .fold(None, |best: Option<usize>, c| match best {
                    Some(b) if row[b] >= row[c] => Some(b),
                    _ => Some(c),
                })
                .expect("a retained class exists") as u32
        })
        .collect())
}

/// Bottom learning-rate multiplier used by boundary-lite unless overridden.
pub const DEFAULT_BOUNDARY_BOTTOM_SCALE: f64 = 0.02;

/// Fine-tunes on every row after relabeling each forgotten row to its
/// nearest retained class under the starting model. The top model trains at
/// the configured rate; party encoders at `bottom_lr_scale` times that rate.
pub fn unlearn_boundary_lite(
    model: &TrainedModel,
    data: &EmbeddingSet,
    spec: &ForgetSpec,
    epochs: usize,
    bottom_lr_scale: f64,
    rng: &mut Rng,
) -> Result<TrainedModel> {
    check_data(data, &model.vfl)?;
    if !(0.0..=1.0).contains(&bottom_lr_scale) {
        return Err(MirageError::Config(
            "bottom_lr_scale must lie in [0, 1]".into(),
        ));
    }
    let relabels = nearest_incorrect_labels(model, data, spec)?;
    let (forgotten, _) = forget_partition(&data.labels, spec)?;
    let mut targets = data.labels.clone();
    for (&i, &t) in forgotten.iter().zip(&relabels) {
        targets[i] = t;
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    let mut params = model.params.clone();
    let history = sgd(
        &model.vfl,
        &mut params,
        &data.features,
        &targets,
        &rows,
        &model.config,
        epochs,
        rng.next_u64(),
        bottom_lr_scale,
        None,
    )?;
    Ok(TrainedModel {
        params,
        history,
        ..model.clone()
    })
}

/// Subtracts the recorded updates from the original parameters.
pub fn unlearn_amnesiac_lite(
    model: &TrainedModel,
    ledger: Option<&AmnesiacLedger>,
    spec: &ForgetSpec,
) -> Result<TrainedModel> {
    let ledger = ledger.ok_or_else(|| {
        MirageError::InvalidInput("amnesiac unlearning needs a training ledger".into())
    })?;
    if &ledger.spec != spec {
        return Err(MirageError::InvalidInput(
            "ledger was recorded for a different forget spec".into(),
        ));
    }
    if ledger.delta_sum.len() != model.params.len() {
        return Err(MirageError::DimensionMismatch(
            "ledger and model differ in parameter count".into(),
        ));
    }
    let params = model
        .params
        .iter()
        .zip(&ledger.delta_sum)
        .map(|(p, d)| p - d)
        .collect();
    Ok(TrainedModel {
        params,
        history: Vec::new(),
        ..model.clone()
    })
}

/// Adds the recorded updates back.
pub fn restore_amnesiac(model: &TrainedModel, ledger: &AmnesiacLedger) -> TrainedModel {
    let params = model
        .params
        .iter()
        .zip(&ledger.delta_sum)
        .map(|(p, d)| p + d)
        .collect();
    TrainedModel {
        params,
        ..model.clone()
    }
}
