//! Two-layer ReLU probe: `z = w₂·relu(W₁x + b₁) + b₂`.

use crate::error::{MirageError, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::rng::{derive_seed, Rng};

use super::linear::{sigmoid, softplus};
use super::{ProbeConfig, ProbeKind, ProbeModel, ProbeParams, Standardizer, INIT_STREAM};

/// Fixed full-batch step size and heavy-ball momentum for the MLP probe.
const STEP: f64 = 0.1;
const MOMENTUM: f64 = 0.9;

/// Objective over the flat parameter vector `[W₁ (h×d, row-major), b₁, w₂, b₂]`.
pub struct MlpObjective<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    hidden: usize,
    penalty: f64,
}

impl<'a> MlpObjective<'a> {
    pub fn new(x: &'a Matrix, y: &[bool], hidden: usize, reg_c: f64) -> Self {
        MlpObjective {
            x,
            y: y.iter().map(|&b| b as u8 as f64).collect(),
            hidden,
            penalty: 1.0 / (reg_c * x.rows().max(1) as f64),
        }
    }

    pub fn n_params(&self) -> usize {
        let (h, d) = (self.hidden, self.x.cols());
        h * d + 2 * h + 1
    }

    /// He-uniform weights, zero biases.
    pub fn init(&self, rng: &mut Rng) -> Vec<f64> {
        let (h, d) = (self.hidden, self.x.cols());
        let mut p = vec![0.0; self.n_params()];
        let a1 = (6.0 / d.max(1) as f64).sqrt();
        let a2 = (6.0 / h as f64).sqrt();
        p[..h * d]
            .iter_mut()
            .for_each(|v| *v = rng.uniform_range(-a1, a1));
        p[h * d + h..h * d + 2 * h]
            .iter_mut()
            .for_each(|v| *v = rng.uniform_range(-a2, a2));
        p
    }

    pub fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let (h, d) = (self.hidden, self.x.cols());
        let (w1, rest) = params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = (&rest[..h], rest[h]);
        grad.iter_mut().for_each(|g| *g = 0.0);

        let mut pre = vec![0.0; h];
        let mut act = vec![0.0; h];
        let mut loss = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            let row = self.x.row(i);
            for k in 0..h {
                pre[k] = dot(&w1[k * d..(k + 1) * d], row) + b1[k];
                act[k] = pre[k].max(0.0);
            }
            let z = dot(w2, &act) + b2;
            loss += softplus(z) - yi * z;
            let r = sigmoid(z) - yi;

            let (gw1, grest) = grad.split_at_mut(h * d);
            let (gb1, grest) = grest.split_at_mut(h);
            let (gw2, gb2) = grest.split_at_mut(h);
            axpy(r, &act, gw2);
            gb2[0] += r;
            for k in 0..h {
                if pre[k] > 0.0 {
                    let da = r * w2[k];
                    gb1[k] += da;
                    axpy(da, row, &mut gw1[k * d..(k + 1) * d]);
                }
            }
        }
        let n = self.y.len().max(1) as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        let mut reg = 0.0;
        for (g, w) in grad[..h * d].iter_mut().zip(w1) {
            *g += self.penalty * w;
            reg += w * w;
        }
        for (g, w) in grad[h * d + h..h * d + 2 * h].iter_mut().zip(w2) {
            *g += self.penalty * w;
            reg += w * w;
        }
        loss / n + 0.5 * self.penalty * reg
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let mut g = vec![0.0; params.len()];
        self.loss_and_grad(params, &mut g)
    }
}

pub(crate) fn logits(x: &Matrix, w1: &Matrix, b1: &[f64], w2: &[f64], b2: f64) -> Vec<f64> {
    let h = b1.len();
    let mut act = vec![0.0; h];
    (0..x.rows())
        .map(|i| {
            let row = x.row(i);
            for k in 0..h {
                act[k] = (dot(w1.row(k), row) + b1[k]).max(0.0);
            }
            dot(w2, &act) + b2
        })
        .collect()
}

pub(crate) fn fit(train_x: &Matrix, train_y: &[bool], config: &ProbeConfig) -> Result<ProbeModel> {
    let standardizer = Standardizer::fit(train_x);
    let x = standardizer.apply(train_x);
    let (h, d) = (config.hidden_dim, x.cols());
    let objective = MlpObjective::new(&x, train_y, h, config.reg_c);
    let mut params = objective.init(&mut Rng::new(derive_seed(config.seed, INIT_STREAM)));
    let mut grad = vec![0.0; params.len()];
    let mut velocity = vec![0.0; params.len()];
    let initial_loss = objective.loss(&params);
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        let loss = objective.loss_and_grad(&params, &mut grad);
        if !loss.is_finite() {
            return Err(MirageError::NonFinite(format!(
                "MLP probe loss became {loss}"
            )));
        }
        if dot(&grad, &grad).sqrt() < 1e-8 {
            break;
        }
        for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = MOMENTUM * *v - STEP * g;
            *p += *v;
        }
        iterations += 1;
    }
    let final_loss = objective.loss(&params);
    if !final_loss.is_finite() {
        return Err(MirageError::NonFinite(format!(
            "MLP probe loss became {final_loss}"
        )));
    }

    let hidden_weights = Matrix::new(h, d, params[..h * d].to_vec())?;
    Ok(ProbeModel {
        kind: ProbeKind::Mlp,
        standardizer,
        params: ProbeParams::Mlp {
            hidden_weights,
            hidden_bias: params[h * d..h * d + h].to_vec(),
            output_weights: params[h * d + h..h * d + 2 * h].to_vec(),
            output_bias: params[h * d + 2 * h],
        },
        train_accuracy: 0.0,
        holdout_accuracy: 0.0,
        n_train: 0,
        n_eval: 0,
        iterations,
        initial_loss,
        final_loss,
        config: config.clone(),
    })
}

pub fn train_mlp_probe(
    features: &Matrix,
    labels: &[bool],
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    let config = ProbeConfig {
        kind: ProbeKind::Mlp,
        ..config.clone()
    };
    super::train_probe(features, labels, &config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::train_linear_probe;

    /// Four blobs at (±2, ±2); diagonal pairs share a label.
    fn xor_blobs(n: usize, seed: u64) -> (Matrix, Vec<bool>) {
        let mut rng = Rng::new(seed);
        let corners = [
            (2.0, 2.0, true),
            (-2.0, -2.0, true),
            (2.0, -2.0, false),
            (-2.0, 2.0, false),
        ];
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let (cx, cy, label) = corners[i % 4];
            data.push(cx + 0.5 * rng.normal());
            data.push(cy + 0.5 * rng.normal());
            y.push(label);
        }
        (Matrix::new(n, 2, data).unwrap(), y)
    }

    #[test]
    fn xor_needs_the_hidden_layer() {
        let (x, y) = xor_blobs(800, 3);
        let cfg = ProbeConfig {
            hidden_dim: 32,
            ..Default::default()
        };
        let mlp = train_mlp_probe(&x, &y, &cfg).unwrap();
        let lin = train_linear_probe(&x, &y, &cfg).unwrap();
        assert!(mlp.holdout_accuracy >= 0.9, "mlp {}", mlp.holdout_accuracy);
        assert!(
            lin.holdout_accuracy <= 0.6,
            "linear {}",
            lin.holdout_accuracy
        );
    }

    #[test]
    fn coin_labels_stay_at_chance() {
        let mut total = 0.0;
        for seed in 0..5 {
            let mut rng = Rng::new(50 + seed);
            let x = Matrix::from_fn(400, 4, |_, _| rng.normal()).unwrap();
            let y: Vec<bool> = (0..400).map(|_| rng.bernoulli(0.5)).collect();
            let cfg = ProbeConfig {
                hidden_dim: 16,
                max_iters: 300,
                seed,
                ..Default::default()
            };
            total += train_mlp_probe(&x, &y, &cfg).unwrap().holdout_accuracy;
        }
        let mean = total / 5.0;
        assert!((0.40..=0.60).contains(&mean), "{mean}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..3 {
            let mut rng = Rng::new(seed);
            let x = Matrix::from_fn(12, 3, |_, _| rng.normal()).unwrap();
            let y: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
            let obj = MlpObjective::new(&x, &y, 5, 0.5);
            let at: Vec<f64> = (0..obj.n_params()).map(|_| 0.8 * rng.normal()).collect();
            let mut g = vec![0.0; at.len()];
            obj.loss_and_grad(&at, &mut g);
            for k in 0..at.len() {
                let h = 1e-6;
                let mut p = at.clone();
                p[k] += h;
                let up = obj.loss(&p);
                p[k] -= 2.0 * h;
                let down = obj.loss(&p);
                let fd = (up - down) / (2.0 * h);
                let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-7);
                assert!(rel < 1e-4, "param {k}: analytic {} numeric {fd}", g[k]);
            }
        }
    }
}
