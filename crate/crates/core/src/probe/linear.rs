//! L2-regularized logistic regression trained by full-batch gradient descent.

use crate::error::{MirageError, Result};
use crate::linalg::{axpy, dot, fused_row_map, Matrix};

use super::{ProbeConfig, ProbeKind, ProbeModel, ProbeParams, Standardizer};

/// `log(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `softplus(z)` and `sigmoid(z)` sharing one exponential.
#[inline]
fn softplus_sigmoid(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let sp = z.max(0.0) + e.ln_1p();
    let sig = if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (sp, sig)
}

/// Mean binary cross-entropy plus `‖w‖² / (2·C·n)` over parameters
/// `[w_0 .. w_{d-1}, b]`.
pub struct LinearObjective<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    penalty: f64,
}

impl<'a> LinearObjective<'a> {
    pub fn new(x: &'a Matrix, y: &[bool], reg_c: f64) -> Self {
        let n = x.rows().max(1) as f64;
        LinearObjective {
            x,
            y: y.iter().map(|&b| b as u8 as f64).collect(),
            penalty: 1.0 / (reg_c * n),
        }
    }

    pub fn n_params(&self) -> usize {
        self.x.cols() + 1
    }

    /// Objective value and gradient at `params`.
    pub fn loss_and_grad(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(params, grad, true)
    }

    /// Gradient only; skips the logarithms the objective value needs.
    pub fn gradient(&self, params: &[f64], grad: &mut [f64]) {
        self.evaluate(params, grad, false);
    }

    fn evaluate(&self, params: &[f64], grad: &mut [f64], with_loss: bool) -> f64 {
        let d = self.x.cols();
        let (w, b) = (&params[..d], params[d]);
        let mut loss = 0.0;
        let mut residual_sum = 0.0;
        let y = &self.y;
        fused_row_map(
            self.x,
            w,
            |i, xw| {
                let z = xw + b;
                let r = if with_loss {
                    let (sp, sig) = softplus_sigmoid(z);
                    loss += sp - y[i] * z;
                    sig - y[i]
                } else {
                    sigmoid(z) - y[i]
                };
                residual_sum += r;
                r
            },
            &mut grad[..d],
        );
        let n = self.y.len().max(1) as f64;
        for (g, wj) in grad[..d].iter_mut().zip(w) {
            *g = *g / n + self.penalty * wj;
        }
        grad[d] = residual_sum / n;
        if with_loss {
            loss / n + 0.5 * self.penalty * dot(w, w)
        } else {
            f64::NAN
        }
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let mut g = vec![0.0; params.len()];
        self.loss_and_grad(params, &mut g)
    }

    /// Upper bound on the Lipschitz constant of the gradient:
    /// `¼·max_i(‖x_i‖² + 1) + penalty`.
    pub fn lipschitz_bound(&self) -> f64 {
        let max_sq = (0..self.x.rows())
            .map(|i| {
                let r = self.x.row(i);
                dot(r, r)
            })
            .fold(0.0, f64::max);
        0.25 * (max_sq + 1.0) + self.penalty
    }
}

pub(crate) fn logits(x: &Matrix, w: &[f64], b: f64) -> Vec<f64> {
    (0..x.rows()).map(|i| dot(x.row(i), w) + b).collect()
}

/// Fixed-step gradient descent: `max_iters` steps of size `1/L`, stopping
/// early once the gradient norm drops below 1e-8. `observe` sees the
/// parameters before every step. Returns the number of steps taken.
pub(crate) fn descend(
    objective: &LinearObjective,
    params: &mut [f64],
    max_iters: usize,
    mut observe: impl FnMut(&[f64]),
) -> Result<usize> {
    let step = 1.0 / objective.lipschitz_bound();
    let mut grad = vec![0.0; params.len()];
    for iteration in 0..max_iters {
        observe(params);
        objective.gradient(params, &mut grad);
        let norm_sq = dot(&grad, &grad);
        if !norm_sq.is_finite() {
            return Err(MirageError::NonFinite(format!(
                "probe gradient at step {iteration}"
            )));
        }
        if norm_sq.sqrt() < 1e-8 {
            return Ok(iteration);
        }
        axpy(-step, &grad, params);
    }
    Ok(max_iters)
}

/// Gradient descent from zero on standardized features.
pub(crate) fn fit(train_x: &Matrix, train_y: &[bool], config: &ProbeConfig) -> Result<ProbeModel> {
    let standardizer = Standardizer::fit(train_x);
    let x = standardizer.apply(train_x);
    let objective = LinearObjective::new(&x, train_y, config.reg_c);
    let mut params = vec![0.0; objective.n_params()];
    let initial_loss = objective.loss(&params);
    let iterations = descend(&objective, &mut params, config.max_iters, |_| {})?;
    let final_loss = objective.loss(&params);
    if !final_loss.is_finite() {
        return Err(MirageError::NonFinite(format!(
            "probe loss became {final_loss}"
        )));
    }

    let d = x.cols();
    Ok(ProbeModel {
        kind: ProbeKind::Linear,
        standardizer,
        params: ProbeParams::Linear {
            weights: params[..d].to_vec(),
            bias: params[d],
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

/// Trains a linear membership probe on `features` (balancing and splitting
/// per `config`).
pub fn train_linear_probe(
    features: &Matrix,
    labels: &[bool],
    config: &ProbeConfig,
) -> Result<ProbeModel> {
    let config = ProbeConfig {
        kind: ProbeKind::Linear,
        ..config.clone()
    };
    super::train_probe(features, labels, &config)
}
