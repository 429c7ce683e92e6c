//! Membership probes trained on frozen embeddings.
//!
//! A probe is a binary classifier predicting whether a row belongs to the
//! forget set. Its held-out accuracy is the linear probe recoverability (LPR)
//! of the layer it was trained on.

mod linear;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::forget::ForgetSpec;
use crate::ingest::EmbeddingSet;
use crate::linalg::Matrix;
use crate::rng::{derive_seed, Rng};

pub use linear::{train_linear_probe, LinearObjective};
pub use mlp::{train_mlp_probe, MlpObjective};

const BALANCE_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;
pub(crate) const INIT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub kind: ProbeKind,
    /// Inverse L2 strength; the penalty is `‖w‖² / (2·reg_c·n)`.
    pub reg_c: f64,
    pub max_iters: usize,
    pub hidden_dim: usize,
    pub eval_fraction: f64,
    pub balance: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            kind: ProbeKind::Linear,
            reg_c: 1.0,
            max_iters: 1000,
            hidden_dim: 256,
            eval_fraction: 0.2,
            balance: true,
            seed: 0,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_c > 0.0) || !self.reg_c.is_finite() {
            return Err(MirageError::Config("probe reg_c must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(MirageError::Config(
                "probe max_iters must be at least 1".into(),
            ));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(MirageError::Config(
                "probe eval_fraction must lie in (0, 1)".into(),
            ));
        }
        if self.kind == ProbeKind::Mlp && self.hidden_dim == 0 {
            return Err(MirageError::Config("MLP probe needs hidden_dim ≥ 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ProbeConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Per-column affine map fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let mean = x.column_means();
        let scale = x
            .column_variances()
            .into_iter()
            .map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let cols = x.cols();
        let mut data = x.data().to_vec();
        for row in data.chunks_exact_mut(cols.max(1)) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        Matrix::new(x.rows(), cols, data).expect("standardized values are finite")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProbeParams {
    Linear {
        weights: Vec<f64>,
        bias: f64,
    },
    Mlp {
        hidden_weights: Matrix,
        hidden_bias: Vec<f64>,
        output_weights: Vec<f64>,
        output_bias: f64,
    },
}

/// A trained membership probe and its accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub kind: ProbeKind,
    pub standardizer: Standardizer,
    pub params: ProbeParams,
    pub train_accuracy: f64,
    /// Held-out accuracy; this is the reported LPR.
    pub holdout_accuracy: f64,
    pub n_train: usize,
    pub n_eval: usize,
    pub iterations: usize,
    /// Training objective at initialization and at the returned parameters.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub config: ProbeConfig,
}

impl ProbeModel {
    /// Logit of membership for each row of raw (unstandardized) features.
    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        let z = self.standardizer.apply(x);
        match &self.params {
            ProbeParams::Linear { weights, bias } => linear::logits(&z, weights, *bias),
            ProbeParams::Mlp {
                hidden_weights,
                hidden_bias,
                output_weights,
                output_bias,
            } => mlp::logits(
                &z,
                hidden_weights,
                hidden_bias,
                output_weights,
                *output_bias,
            ),
        }
    }

    /// Predicted membership. A probability of exactly 0.5 predicts 0.
    pub fn predict(&self, x: &Matrix) -> Vec<bool> {
        self.decision_function(x)
            .into_iter()
            .map(|z| z > 0.0)
            .collect()
    }

    pub fn accuracy(&self, x: &Matrix, y: &[bool]) -> f64 {
        accuracy(&self.predict(x), y)
    }
}

pub(crate) fn accuracy(pred: &[bool], truth: &[bool]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// `true` for rows in the forget set.
pub fn make_membership_labels(set: &EmbeddingSet, spec: &ForgetSpec) -> Vec<bool> {
    spec.mask(&set.labels)
}

/// Subsamples the majority class to the minority size, then shuffles.
pub fn balance_binary(
    features: &Matrix,
    labels: &[bool],
    rng: &mut Rng,
) -> Result<(Matrix, Vec<bool>)> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MirageError::Degenerate(
            "balancing needs both classes present".into(),
        ));
    }
    let k = pos.len().min(neg.len());
    let pick = |idx: &[usize], rng: &mut Rng| -> Vec<usize> {
        let mut chosen: Vec<usize> = rng
            .sample_indices(idx.len(), k)
            .into_iter()
            .map(|j| idx[j])
            .collect();
        chosen.sort_unstable();
        chosen
    };
    let mut rows = pick(&pos, rng);
    rows.extend(pick(&neg, rng));
    rng.shuffle(&mut rows);
    let y = rows.iter().map(|&i| labels[i]).collect();
    Ok((features.select_rows(&rows), y))
}

/// Stratified train/eval index split.
pub fn stratified_split(
    labels: &[bool],
    eval_fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 2 {
            return Err(MirageError::Degenerate(format!(
                "class {} has {} rows; need at least 2 to split",
                class as u8,
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        let n_eval = ((idx.len() as f64 * eval_fraction).round() as usize).clamp(1, idx.len() - 1);
        eval.extend_from_slice(&idx[..n_eval]);
        train.extend_from_slice(&idx[n_eval..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    Ok((train, eval))
}

/// Trains the configured probe on a pre-made split.
pub fn train_probe_on_split(
    train_x: &Matrix,
    train_y: &[bool],
    eval_x: &Matrix,
    eval_y: &[bool],
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    config.validate()?;
    if train_y.iter().all(|&y| y) || train_y.iter().all(|&y| !y) {
        return Err(MirageError::Degenerate(
            "training split holds a single class".into(),
        ));
    }
    let mut model = match config.kind {
        ProbeKind::Linear => linear::fit(train_x, train_y, config)?,
        ProbeKind::Mlp => mlp::fit(train_x, train_y, config)?,
    };
    model.train_accuracy = model.accuracy(train_x, train_y);
    model.holdout_accuracy = model.accuracy(eval_x, eval_y);
    model.n_train = train_y.len();
    model.n_eval = eval_y.len();
    Ok(model)
}

/// Balances (when configured), splits and trains one probe.
pub fn train_probe(features: &Matrix, labels: &[bool], config: &ProbeConfig) -> Result<ProbeModel> {
    config.validate()?;
    if features.rows() != labels.len() {
        return Err(MirageError::DimensionMismatch(
            "probe features and labels differ in length".into(),
        ));
    }
    if labels.len() < 10 {
        return Err(MirageError::Degenerate(format!(
            "probe needs at least 10 rows, got {}",
            labels.len()
        )));
    }
    let (x, y) = if config.balance {
        balance_binary(
            features,
            labels,
            &mut Rng::new(derive_seed(config.seed, BALANCE_STREAM)),
        )?
    } else {
        (features.clone(), labels.to_vec())
    };
    let (train, eval) = stratified_split(
        &y,
        config.eval_fraction,
        &mut Rng::new(derive_seed(config.seed, SPLIT_STREAM)),
    )?;
    let pick = |rows: &[usize]| -> Vec<bool> { rows.iter().map(|&i| y[i]).collect() };
    train_probe_on_split(
        &x.select_rows(&train),
        &pick(&train),
        &x.select_rows(&eval),
        &pick(&eval),
        config,
    )
}

/// Linear probe recoverability of one embedding set under one probe seed.
pub fn lpr_probe(
    set: &EmbeddingSet,
    spec: &ForgetSpec,
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    spec.validate(&set.labels)?;
    let labels = make_membership_labels(set, spec);
    train_probe(&set.features, &labels, config)
}

pub fn lpr(set: &EmbeddingSet, spec: &ForgetSpec, config: &ProbeConfig) -> Result<f64> {
    lpr_probe(set, spec, config).map(|m| m.holdout_accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{forget_partition, ModelTag};

    fn blob(n: usize, d: usize, frac_pos: f64, shift: f64, seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = Rng::new(seed);
        let y: Vec<bool> = (0..n).map(|i| (i as f64) < frac_pos * n as f64).collect();
        let x = Matrix::from_fn(n, d, |i, j| {
            rng.normal() + if y[i] && j == 0 { shift } else { 0.0 }
        })
        .unwrap();
        (x, y)
    }

    #[test]
    fn membership_labels() {
        let set =
            EmbeddingSet::new(Matrix::zeros(3, 1), vec![3, 1, 3], "p", ModelTag::Other).unwrap();
        assert_eq!(
            make_membership_labels(&set, &ForgetSpec::classes([3])),
            vec![true, false, true]
        );
        assert_eq!(
            make_membership_labels(&set, &ForgetSpec::samples([1])),
            vec![false, true, false]
        );
    }

    #[test]
    fn membership_count_matches_partition() {
        let labels: Vec<u32> = (0..97).map(|i| (i * 7 % 5) as u32).collect();
        let set =
            EmbeddingSet::new(Matrix::zeros(97, 1), labels.clone(), "p", ModelTag::Other).unwrap();
        let spec = ForgetSpec::classes([2, 4]);
        let ones = make_membership_labels(&set, &spec)
            .iter()
            .filter(|&&b| b)
            .count();
        assert_eq!(ones, forget_partition(&labels, &spec).unwrap().0.len());
    }

    #[test]
    fn balancing() {
        let (x, y) = blob(100, 2, 0.1, 0.0, 1);
        let (bx, by) = balance_binary(&x, &y, &mut Rng::new(5)).unwrap();
        assert_eq!(bx.rows(), 20);
        assert_eq!(by.iter().filter(|&&b| b).count(), 10);
        let (bx2, by2) = balance_binary(&x, &y, &mut Rng::new(5)).unwrap();
        assert_eq!((bx, by), (bx2, by2));

        let (x, y) = blob(40, 2, 0.5, 0.0, 2);
        let (bx, _) = balance_binary(&x, &y, &mut Rng::new(1)).unwrap();
        let mut a: Vec<Vec<u64>> = (0..40)
            .map(|i| x.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut b: Vec<Vec<u64>> = (0..40)
            .map(|i| bx.row(i).iter().map(|v| v.to_bits()).collect())
            .collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        assert!(balance_binary(&x, &[false; 40], &mut Rng::new(1)).is_err());
    }

    #[test]
    fn split_is_stratified() {
        let y: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let (train, eval) = stratified_split(&y, 0.2, &mut Rng::new(3)).unwrap();
        assert_eq!(eval.len(), 20);
        assert_eq!(eval.iter().filter(|&&i| y[i]).count(), 10);
        assert_eq!(train.len() + eval.len(), 100);
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig {
            reg_c: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ProbeConfig {
            max_iters: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(ProbeConfig {
            eval_fraction: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn too_few_rows() {
        let (x, y) = blob(8, 2, 0.5, 1.0, 1);
        assert!(matches!(
            train_probe(&x, &y, &ProbeConfig::default()),
            Err(MirageError::Degenerate(_))
        ));
    }

    #[test]
    fn zero_features_give_chance() {
        let labels: Vec<u32> = (0..400).map(|i| i % 4).collect();
        let set = EmbeddingSet::new(Matrix::zeros(400, 5), labels, "p", ModelTag::Other).unwrap();
        let v = lpr(&set, &ForgetSpec::classes([0]), &ProbeConfig::default()).unwrap();
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }
}
