//! Feed-forward networks: a plain MLP and the vertically split model whose
//! bottom encoders each see a contiguous block of input columns.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MirageError, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::rng::Rng;

pub const TAP_EARLY: &str = "early";
pub const TAP_MID: &str = "mid";
pub const TAP_PENULTIMATE: &str = "penultimate";
pub const TAP_TOP: &str = "top";

/// He-style scaled uniform weights, `U(−√(6/fan_in), √(6/fan_in))`.
fn he_uniform(fan_in: usize, count: usize, rng: &mut Rng) -> Vec<f64> {
    let a = (6.0 / fan_in as f64).sqrt();
    (0..count).map(|_| rng.uniform_range(-a, a)).collect()
}

fn check_widths(widths: &[usize], what: &str) -> Result<()> {
    if widths.iter().any(|&w| w == 0) {
        return Err(MirageError::Config(format!(
            "{what} widths must be positive"
        )));
    }
    Ok(())
}

/// Layer widths from input to classes; ReLU on hidden layers, linear logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_dims: Vec<usize>,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(MirageError::Config(
                "an MLP needs input and output widths".into(),
            ));
        }
        check_widths(&self.layer_dims, "MLP")
    }
}

/// A plain MLP with its own weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Weights are drawn layer by layer in row-major order; biases start at 0.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in spec.layer_dims.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            weights.push(Matrix::new(
                fan_out,
                fan_in,
                he_uniform(fan_in, fan_in * fan_out, rng),
            )?);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Mlp { weights, biases })
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let last = self.weights.len() - 1;
        let mut a = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            a = (0..w.rows())
                .map(|o| {
                    let z = dot(w.row(o), &a) + b[o];
                    if l < last {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
        }
        a
    }
}

/// Vertical split: `n_parties` bottom encoders on contiguous column ranges,
/// whose outputs are concatenated and fed to a top classifier.
///
/// Hidden layers are numbered along the concatenated pathway: bottom layer
/// `l` of every party together forms hidden layer `l`, then the top hidden
/// layers follow. `taps` names hidden layers for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VflSpec {
    pub n_parties: usize,
    /// Half-open `[start, end)` column range per party.
    pub feature_partition: Vec<(usize, usize)>,
    /// Hidden widths per party; every party has the same depth.
    pub bottom_dims: Vec<Vec<usize>>,
    /// Top hidden widths followed by the number of classes.
    pub top_dims: Vec<usize>,
    pub taps: BTreeMap<String, usize>,
}

impl VflSpec {
    /// Splits `input_dim` columns into `n_parties` contiguous blocks as evenly
    /// as possible (earlier parties take the remainder) and gives every party
    /// the same bottom widths. Taps take their defaults.
    pub fn equal_split(
        input_dim: usize,
        n_parties: usize,
        bottom: &[usize],
        top: &[usize],
    ) -> Result<Self> {
        if n_parties == 0 || n_parties > input_dim {
            return Err(MirageError::Config(format!(
                "cannot split {input_dim} columns among {n_parties} parties"
            )));
        }
        let base = input_dim / n_parties;
        let extra = input_dim % n_parties;
        let mut start = 0;
        let feature_partition = (0..n_parties)
            .map(|k| {
                let len = base + usize::from(k < extra);
                let r = (start, start + len);
                start += len;
                r
            })
            .collect();
        let mut spec = VflSpec {
            n_parties,
            feature_partition,
            bottom_dims: vec![bottom.to_vec(); n_parties],
            top_dims: top.to_vec(),
            taps: BTreeMap::new(),
        };
        spec.taps = spec.default_taps()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn bottom_depth(&self) -> usize {
        self.bottom_dims.first().map_or(0, Vec::len)
    }

    pub fn input_dim(&self) -> usize {
        self.feature_partition.last().map_or(0, |r| r.1)
    }

    pub fn n_classes(&self) -> usize {
        *self.top_dims.last().unwrap_or(&0)
    }

    /// Widths of the hidden layers along the concatenated pathway.
    pub fn hidden_widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = (0..self.bottom_depth())
            .map(|l| self.bottom_dims.iter().map(|p| p[l]).sum())
            .collect();
        w.extend(&self.top_dims[..self.top_dims.len().saturating_sub(1)]);
        w
    }

    /// Taps on the concatenated bottom outputs: `early` = first bottom layer,
    /// `mid` = middle bottom layer, `penultimate` = the embedding the parties
    /// hand to the top model. `top` names the last top hidden layer when
    /// there is one. Needs at least three bottom layers.
    pub fn default_taps(&self) -> Result<BTreeMap<String, usize>> {
        let depth = self.bottom_depth();
        if depth < 3 {
            return Err(MirageError::Config(
                "default taps need at least three bottom layers".into(),
            ));
        }
        let mut taps = BTreeMap::from([
            (TAP_EARLY.to_string(), 0),
            (TAP_MID.to_string(), depth / 2),
            (TAP_PENULTIMATE.to_string(), depth - 1),
        ]);
        let hidden = depth + self.top_dims.len() - 1;
        if hidden > depth {
            taps.insert(TAP_TOP.to_string(), hidden - 1);
        }
        Ok(taps)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_parties == 0
            || self.feature_partition.len() != self.n_parties
            || self.bottom_dims.len() != self.n_parties
        {
            return Err(MirageError::Config(
                "partition and bottom widths must list every party".into(),
            ));
        }
        let mut expected = 0;
        for &(start, end) in &self.feature_partition {
            if start != expected || end <= start {
                return Err(MirageError::Config(
                    "feature partition must be contiguous, non-empty and start at column 0".into(),
                ));
            }
            expected = end;
        }
        let depth = self.bottom_depth();
        if depth == 0 || self.bottom_dims.iter().any(|p| p.len() != depth) {
            return Err(MirageError::Config(
                "every party needs the same non-zero bottom depth".into(),
            ));
        }
        for p in &self.bottom_dims {
            check_widths(p, "bottom")?;
        }
        if self.top_dims.is_empty() || self.n_classes() < 2 {
            return Err(MirageError::Config(
                "top widths must end with at least two classes".into(),
            ));
        }
        check_widths(&self.top_dims, "top")?;
        let hidden = self.hidden_widths().len();
        for (name, &idx) in &self.taps {
            if idx >= hidden {
                return Err(MirageError::Config(format!(
                    "tap {name} points past the last hidden layer"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn layout(&self) -> Layout {
        let mut offset = 0;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let d = Dense {
                fan_in,
                fan_out,
                w: offset,
                b: offset + fan_in * fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            d
        };
        let parties: Vec<Vec<Dense>> = self
            .feature_partition
            .iter()
            .zip(&self.bottom_dims)
            .map(|(&(s, e), widths)| {
                let mut fan_in = e - s;
                widths
                    .iter()
                    .map(|&w| {
                        let d = dense(fan_in, w);
                        fan_in = w;
                        d
                    })
                    .collect()
            })
            .collect();
        let mut fan_in: usize = self.bottom_dims.iter().map(|p| p[p.len() - 1]).sum();
        let top = self
            .top_dims
            .iter()
            .map(|&w| {
                let d = dense(fan_in, w);
                fan_in = w;
                d
            })
            .collect();
        Layout {
            parties,
            top,
            n_params: offset,
        }
    }

    pub fn n_params(&self) -> usize {
        self.layout().n_params
    }

    /// Fresh parameters: parties in order, then the top model, each layer's
    /// weights drawn row-major before its zero biases.
    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        let layout = self.layout();
        let mut params = vec![0.0; layout.n_params];
        for d in layout.parties.iter().flatten().chain(&layout.top) {
            let w = he_uniform(d.fan_in, d.fan_in * d.fan_out, rng);
            params[d.w..d.b].copy_from_slice(&w);
        }
        params
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Dense {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
}

impl Dense {
    fn weight_row<'a>(&self, params: &'a [f64], o: usize) -> &'a [f64] {
        &params[self.w + o * self.fan_in..self.w + (o + 1) * self.fan_in]
    }

    fn forward(&self, params: &[f64], input: &[f64], relu: bool, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.fan_out).map(|o| {
            let z = dot(self.weight_row(params, o), input) + params[self.b + o];
            if relu {
                z.max(0.0)
            } else {
                z
            }
        }));
    }

    /// Accumulates parameter gradients for `delta` (already through the
    /// activation) and returns the gradient with respect to `input`.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        delta: &[f64],
        grad: &mut [f64],
        want_input: bool,
    ) -> Vec<f64> {
        let mut d_in = if want_input {
            vec![0.0; self.fan_in]
        } else {
            Vec::new()
        };
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = self.w + o * self.fan_in;
            axpy(d, input, &mut grad[row..row + self.fan_in]);
            grad[self.b + o] += d;
            if want_input {
                axpy(d, self.weight_row(params, o), &mut d_in);
            }
        }
        d_in
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    parties: Vec<Vec<Dense>>,
    top: Vec<Dense>,
    pub(crate) n_params: usize,
}

/// Post-activation values of one sample along the whole network.
#[derive(Debug, Clone, Default)]
pub(crate) struct Trace {
    /// `party[k][l]` is party `k`'s output of bottom layer `l`.
    party: Vec<Vec<Vec<f64>>>,
    concat: Vec<f64>,
    /// Top layer outputs; the last entry holds the logits.
    top: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn logits(&self) -> &[f64] {
        self.top.last().expect("top model has an output layer")
    }

    /// Activation of hidden layer `idx` on the concatenated pathway.
    pub(crate) fn hidden(&self, idx: usize, bottom_depth: usize, out: &mut Vec<f64>) {
        out.clear();
        if idx < bottom_depth {
            for p in &self.party {
                out.extend_from_slice(&p[idx]);
            }
        } else {
            out.extend_from_slice(&self.top[idx - bottom_depth]);
        }
    }
}

impl Layout {
    /// Index of the first top-model parameter; everything before it belongs
    /// to the parties.
    pub(crate) fn top_offset(&self) -> usize {
        self.top[0].w
    }

    pub(crate) fn forward(&self, spec: &VflSpec, params: &[f64], x: &[f64], trace: &mut Trace) {
        trace.party.resize_with(self.parties.len(), Vec::new);
        for ((layers, &(s, e)), acts) in self
            .parties
            .iter()
            .zip(&spec.feature_partition)
            .zip(&mut trace.party)
        {
            acts.resize_with(layers.len(), Vec::new);
            for (l, d) in layers.iter().enumerate() {
                let (done, rest) = acts.split_at_mut(l);
                let input = if l == 0 { &x[s..e] } else { &done[l - 1][..] };
                d.forward(params, input, true, &mut rest[0]);
            }
        }
        trace.concat.clear();
        for acts in &trace.party {
            trace.concat.extend_from_slice(&acts[acts.len() - 1]);
        }
        trace.top.resize_with(self.top.len(), Vec::new);
        let last = self.top.len() - 1;
        for (l, d) in self.top.iter().enumerate() {
            let (done, rest) = trace.top.split_at_mut(l);
            let input = if l == 0 {
                &trace.concat[..]
            } else {
                &done[l - 1][..]
            };
            d.forward(params, input, l < last, &mut rest[0]);
        }
    }

    /// Softmax cross-entropy of one traced sample; adds its gradient to `grad`.
    pub(crate) fn backward(
        &self,
        spec: &VflSpec,
        params: &[f64],
        x: &[f64],
        label: usize,
        trace: &Trace,
        grad: &mut [f64],
    ) -> f64 {
        let probs = softmax(trace.logits());
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
        let mut delta = probs;
        delta[label] -= 1.0;

        for l in (0..self.top.len()).rev() {
            let input = if l == 0 {
                &trace.concat
            } else {
                &trace.top[l - 1]
            };
            let d_in = self.top[l].backward(params, input, &delta, grad, true);
            delta = relu_mask(d_in, input);
        }
        let mut offset = 0;
        for ((layers, acts), &(s, e)) in self
            .parties
            .iter()
            .zip(&trace.party)
            .zip(&spec.feature_partition)
        {
            let width = layers[layers.len() - 1].fan_out;
            let mut d = delta[offset..offset + width].to_vec();
            offset += width;
            for l in (0..layers.len()).rev() {
                let input = if l == 0 { &x[s..e] } else { &acts[l - 1][..] };
                let d_in = layers[l].backward(params, input, &d, grad, l > 0);
                if l > 0 {
                    d = relu_mask(d_in, input);
                }
            }
        }
        loss
    }
}

fn relu_mask(mut grad: Vec<f64>, activation: &[f64]) -> Vec<f64> {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
    grad
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Column range helper for callers holding a partition entry.
pub fn party_columns(spec: &VflSpec, party: usize) -> Range<usize> {
    let (s, e) = spec.feature_partition[party];
    s..e
}
