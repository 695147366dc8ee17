use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::attention::{attention_backward, attention_forward};
use super::layers::{dense_backward, dense_forward, dropout};
use super::loss::{softmax, softmax_cross_entropy};
use super::lstm::{lstm_backward, lstm_forward, LstmWeights};
use super::params::Params;
use super::spec::{Activation, Arch, ModelSpec};
use crate::error::{Error, Result};

/// Samples per parallel work unit in [`Model::sequence_loss_grad`]. Fixed so
/// the floating-point reduction order does not depend on the thread count.
const CHUNK: usize = 8;

/// A classifier and its parameters.
///
/// Parameter order: dense nets hold `dense{i}.w`, `dense{i}.b` per hidden
/// layer; recurrent nets hold `lstm.wx`, `lstm.wh`, `lstm.b` and, with
/// attention, `attn.w`, `attn.v`. Both end with `out.w`, `out.b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Params,
}

fn glorot<R: Rng>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

impl Model {
    /// Glorot-uniform weights, zero biases, forget-gate bias 1.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        let c = spec.num_classes;
        let top = match &spec.arch {
            Arch::Dense(widths) => {
                let mut d = spec.input_dim;
                for (i, &w) in widths.iter().enumerate() {
                    params.push(format!("dense{i}.w"), glorot(d, w, d, w, &mut rng));
                    params.push(format!("dense{i}.b"), Array2::zeros((1, w)));
                    d = w;
                }
                d
            }
            &Arch::Lstm { width: w, attention } => {
                let d = spec.input_dim;
                params.push("lstm.wx", glorot(d, 4 * w, d, w, &mut rng));
                params.push("lstm.wh", glorot(w, 4 * w, w, w, &mut rng));
                let mut b = Array2::zeros((1, 4 * w));
                b.slice_mut(ndarray::s![.., w..2 * w]).fill(1.0);
                params.push("lstm.b", b);
                if attention {
                    params.push("attn.w", glorot(w, w, w, w, &mut rng));
                    params.push("attn.v", glorot(w, 1, w, 1, &mut rng));
                }
                w
            }
        };
        params.push("out.w", glorot(top, c, top, c, &mut rng));
        params.push("out.b", Array2::zeros((1, c)));
        Ok(Self { spec, params })
    }

    /// Wraps loaded parameters after checking names and shapes against `spec`.
    pub fn from_params(spec: ModelSpec, params: Params) -> Result<Self> {
        let template = Self::new(spec, 0)?;
        let matches = template.params.len() == params.len()
            && (0..params.len()).all(|i| {
                template.params.name(i) == params.name(i)
                    && template.params.get(i).dim() == params.get(i).dim()
            });
        if !matches {
            return Err(Error::Shape(format!(
                "parameters {:?} do not fit architecture {}",
                params.names(),
                template.spec.arch
            )));
        }
        if params.values().iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidInput("non-finite model parameter".into()));
        }
        Ok(Self {
            spec: template.spec,
            params,
        })
    }

    fn p(&self, i: usize) -> ArrayView2<'_, f64> {
        self.params.get(i).view()
    }

    fn out_index(&self) -> usize {
        self.params.len() - 2
    }

    fn lstm_weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            wx: self.p(0),
            wh: self.p(1),
            b: self.p(2),
        }
    }

    fn has_attention(&self) -> bool {
        matches!(self.spec.arch, Arch::Lstm { attention: true, .. })
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input width {} but model expects {}",
                x.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Frame-level logits of a dense net (`B x C`), dropout off.
    pub fn dense_logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let Arch::Dense(widths) = &self.spec.arch else {
            return Err(Error::InvalidInput("dense_logits on a recurrent model".into()));
        };
        self.check_input(x)?;
        let mut a = x.to_owned();
        for i in 0..widths.len() {
            a = dense_forward(a.view(), self.p(2 * i), self.p(2 * i + 1), self.spec.activation)?;
        }
        let o = self.out_index();
        dense_forward(a.view(), self.p(o), self.p(o + 1), Activation::Identity)
    }

    /// Mean cross-entropy of a batch of frames and its gradient for every
    /// parameter. Dropout is applied when `rng` is given.
    pub fn dense_loss_grad(
        &self,
        x: ArrayView2<f64>,
        labels: &[usize],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        let Arch::Dense(widths) = &self.spec.arch else {
            return Err(Error::InvalidInput("dense_loss_grad on a recurrent model".into()));
        };
        self.check_input(x)?;
        let act = self.spec.activation;
        // inputs[i] feeds layer i; outputs[i] is its activation before dropout
        let mut inputs = vec![x.to_owned()];
        let mut outputs = Vec::with_capacity(widths.len());
        let mut masks = Vec::with_capacity(widths.len());
        for i in 0..widths.len() {
            let a = dense_forward(inputs[i].view(), self.p(2 * i), self.p(2 * i + 1), act)?;
            let (dropped, mask) = match rng.as_deref_mut() {
                Some(r) if self.spec.dropout > 0.0 => {
                    let (d, m) = dropout(&a, self.spec.dropout, true, r);
                    (d, Some(m))
                }
                _ => (a.clone(), None),
            };
            outputs.push(a);
            masks.push(mask);
            inputs.push(dropped);
        }
        let o = self.out_index();
        let top = inputs.last().expect("input layer present");
        let logits = dense_forward(top.view(), self.p(o), self.p(o + 1), Activation::Identity)?;
        let (loss, d_logits) = softmax_cross_entropy(logits.view(), labels)?;

        let mut grads = self.params.zeros_like();
        let g = dense_backward(top.view(), self.p(o), logits.view(), Activation::Identity, d_logits.view());
        grads[o] = g.weights;
        grads[o + 1] = g.bias;
        let mut d = g.input;
        for i in (0..widths.len()).rev() {
            if let Some(mask) = &masks[i] {
                d *= mask;
            }
            let g = dense_backward(inputs[i].view(), self.p(2 * i), outputs[i].view(), act, d.view());
            grads[2 * i] = g.weights;
            grads[2 * i + 1] = g.bias;
            d = g.input;
        }
        Ok((loss, grads))
    }

    /// Utterance logits of a recurrent net from rows `0..len` of `x`.
    pub fn sequence_logits(&self, x: ArrayView2<f64>, len: usize) -> Result<Array1<f64>> {
        if !self.spec.arch.is_recurrent() {
            return Err(Error::InvalidInput("sequence_logits on a dense model".into()));
        }
        self.check_input(x)?;
        let trace = lstm_forward(x, len, self.lstm_weights())?;
        let pooled = if self.has_attention() {
            attention_forward(trace.hidden.view(), len, self.p(3), self.p(4))?.pooled
        } else {
            trace.final_hidden().to_owned()
        };
        let o = self.out_index();
        Ok(pooled.dot(&self.p(o)) + self.p(o + 1).row(0))
    }

    fn sequence_sample_grad(&self, x: ArrayView2<f64>, len: usize, label: usize) -> Result<(f64, Vec<Array2<f64>>)> {
        self.check_input(x)?;
        let trace = lstm_forward(x, len, self.lstm_weights())?;
        let attn = if self.has_attention() {
            Some(attention_forward(trace.hidden.view(), len, self.p(3), self.p(4))?)
        } else {
            None
        };
        let pooled = match &attn {
            Some(a) => a.pooled.clone(),
            None => trace.final_hidden().to_owned(),
        };
        let o = self.out_index();
        let pooled_row = pooled.insert_axis(Axis(0));
        let mut logits = pooled_row.dot(&self.p(o));
        logits += &self.p(o + 1);
        let (loss, d_logits) = softmax_cross_entropy(logits.view(), &[label])?;

        let mut grads = self.params.zeros_like();
        grads[o] = pooled_row.t().dot(&d_logits);
        grads[o + 1] = d_logits.clone();
        let d_pooled = d_logits.dot(&self.p(o).t()).remove_axis(Axis(0));
        let d_hidden = match &attn {
            Some(a) => {
                let g = attention_backward(trace.hidden.view(), self.p(3), self.p(4), a, d_pooled.view());
                grads[3] = g.wa;
                grads[4] = g.v;
                g.hidden
            }
            None => {
                let mut d = Array2::zeros(trace.hidden.raw_dim());
                d.row_mut(len - 1).assign(&d_pooled);
                d
            }
        };
        let g = lstm_backward(x, self.lstm_weights(), &trace, d_hidden.view(), false);
        grads[0] = g.wx;
        grads[1] = g.wh;
        grads[2] = g.b;
        Ok((loss, grads))
    }

    /// Mean cross-entropy over a batch of utterances and its gradient.
    /// Samples are processed in parallel in fixed chunks whose partial sums
    /// are combined in order, so results are bit-identical on any thread
    /// count.
    pub fn sequence_loss_grad(
        &self,
        seqs: &[ArrayView2<f64>],
        lens: &[usize],
        labels: &[usize],
    ) -> Result<(f64, Vec<Array2<f64>>)> {
        if !self.spec.arch.is_recurrent() {
            return Err(Error::InvalidInput("sequence_loss_grad on a dense model".into()));
        }
        if seqs.is_empty() || seqs.len() != lens.len() || seqs.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} sequences, {} lengths, {} labels",
                seqs.len(),
                lens.len(),
                labels.len()
            )));
        }
        let idx: Vec<usize> = (0..seqs.len()).collect();
        let partials = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut total = 0.0;
                let mut acc = self.params.zeros_like();
                for &i in chunk {
                    let (loss, grads) = self.sequence_sample_grad(seqs[i], lens[i], labels[i])?;
                    total += loss;
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        *a += g;
                    }
                }
                Ok((total, acc))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = seqs.len() as f64;
        let mut total = 0.0;
        let mut grads = self.params.zeros_like();
        for (loss, part) in partials {
            total += loss;
            for (a, g) in grads.iter_mut().zip(&part) {
                *a += g;
            }
        }
        for g in &mut grads {
            *g /= n;
        }
        Ok((total / n, grads))
    }

    /// Class posteriors for one utterance from rows `0..len`. Dense nets
    /// average their frame posteriors.
    pub fn predict_proba(&self, x: ArrayView2<f64>, len: usize) -> Result<Array1<f64>> {
        if len == 0 || len > x.nrows() {
            return Err(Error::InvalidInput(format!(
                "true length {len} for an input of {} rows",
                x.nrows()
            )));
        }
        let x = x.slice(ndarray::s![..len, ..]);
        if self.spec.arch.is_recurrent() {
            return Ok(softmax(self.sequence_logits(x, len)?.view()));
        }
        Ok(self.frame_posteriors(x)?.mean_axis(Axis(0)).expect("len > 0"))
    }

    /// Per-frame posteriors of a dense net.
    pub fn frame_posteriors(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut logits = self.dense_logits(x)?;
        for mut row in logits.rows_mut() {
            let p = softmax(row.view());
            row.assign(&p);
        }
        Ok(logits)
    }
}
