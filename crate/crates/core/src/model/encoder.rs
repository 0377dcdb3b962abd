//! Dense + LSTM encoder, autoregressive forecaster and classification
//! heads, with backpropagation through time.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;

use super::nn::{sigmoid, Dense, Lstm, LstmCache, ParamSet};
use crate::error::{Error, Result};
use crate::trajectory::FEATURES;

/// Input embedding, recurrent layer and the 10-feature output projection
/// used for forecasting.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub embed: Dense,
    pub lstm: Lstm,
    pub project: Dense,
}

impl Encoder {
    pub fn init<R: Rng + ?Sized>(embed_width: usize, hidden: usize, rng: &mut R) -> Encoder {
        let embed = Dense::init(embed_width, FEATURES, rng);
        let lstm = Lstm::init(embed_width, hidden, rng);
        let project = Dense::init(FEATURES, hidden, rng);
        Encoder { embed, lstm, project }
    }

    pub fn zeros(embed_width: usize, hidden: usize) -> Encoder {
        Encoder {
            embed: Dense::zeros(embed_width, FEATURES),
            lstm: Lstm::zeros(embed_width, hidden),
            project: Dense::zeros(FEATURES, hidden),
        }
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Encoder {
        Encoder::zeros(self.embed.outputs(), self.hidden())
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden()
    }

    pub fn embed_width(&self) -> usize {
        self.embed.outputs()
    }

    /// Runs the encoder over `xs` (one `batch × 10` array per step),
    /// starting from a zero state.
    pub fn run(&self, xs: &[Array2<f64>]) -> Result<Trace> {
        let batch = xs.first().map_or(0, |x| x.nrows());
        let mut trace = Trace::new(batch, self.hidden());
        for x in xs {
            self.advance(&mut trace, x.clone())?;
        }
        Ok(trace)
    }

    fn advance(&self, trace: &mut Trace, x: Array2<f64>) -> Result<()> {
        let e = self.embed.forward(&x);
        let (h, c, cache) = self.lstm.step(&e, &trace.h, &trace.c);
        let step = trace.inputs.len();
        if !h.iter().all(|v| v.is_finite()) || !c.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric { step });
        }
        trace.inputs.push(x);
        trace.caches.push(cache);
        trace.outputs.push(h.clone());
        trace.h = h;
        trace.c = c;
        Ok(())
    }

    /// Single-clip encoder pass over an `n × 10` matrix: returns the
    /// `n × H` step outputs and the final `(h, c)`.
    pub fn encoder_forward(&self, features: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
        if features.ncols() != FEATURES {
            return Err(Error::invalid(format!(
                "expected {FEATURES} feature columns, got {}",
                features.ncols()
            )));
        }
        let xs: Vec<Array2<f64>> = features
            .rows()
            .into_iter()
            .map(|r| r.to_owned().insert_axis(Axis(0)))
            .collect();
        let trace = self.run(&xs)?;
        let views: Vec<_> = trace.outputs.iter().map(|h| h.view()).collect();
        let out = if views.is_empty() {
            Array2::zeros((0, self.hidden()))
        } else {
            concatenate(Axis(0), &views).expect("equal widths")
        };
        Ok((out, trace.h, trace.c))
    }

    /// Autoregressive unroll from a final encoder state: each predicted
    /// frame is re-embedded as the next input. Returns `k × 10`.
    pub fn forecast(&self, h: &Array2<f64>, c: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((k, FEATURES));
        if k == 0 {
            return Ok(out);
        }
        let mut trace = Trace::new(h.nrows(), self.hidden());
        trace.h = h.clone();
        trace.c = c.clone();
        let mut y = self.project.forward(h);
        for j in 0..k {
            check_finite(&y, j)?;
            out.row_mut(j).assign(&y.row(0));
            if j + 1 < k {
                self.advance(&mut trace, y)?;
                y = self.project.forward(&trace.h);
            }
        }
        Ok(out)
    }

    /// Training-time forecast over a batch: encodes `inputs` (n steps),
    /// then predicts `k` frames. With `teacher` the true frame `j` is fed
    /// back instead of prediction `j`.
    pub fn forecast_forward(
        &self,
        inputs: &[Array2<f64>],
        k: usize,
        teacher: Option<&[Array2<f64>]>,
    ) -> Result<ForecastTrace> {
        if inputs.is_empty() {
            return Err(Error::invalid("forecast needs at least one input step"));
        }
        let mut trace = self.run(inputs)?;
        let mut preds = Vec::with_capacity(k);
        for j in 0..k {
            let y = self.project.forward(&trace.h);
            check_finite(&y, inputs.len() + j)?;
            preds.push(y);
            if j + 1 < k {
                let next = match teacher {
                    Some(t) => t[j].clone(),
                    None => preds[j].clone(),
                };
                self.advance(&mut trace, next)?;
            }
        }
        Ok(ForecastTrace {
            trace,
            preds,
            n: inputs.len(),
            teacher_forced: teacher.is_some(),
        })
    }

    /// Accumulates into `grad` the gradient of a loss whose derivative
    /// w.r.t. each prediction is `dpreds[j]`.
    pub fn forecast_backward(&self, ft: &ForecastTrace, dpreds: &[Array2<f64>], grad: &mut Encoder) {
        let k = ft.preds.len();
        let n = ft.n;
        let steps = ft.trace.caches.len();
        let (batch, hd) = (ft.trace.h.nrows(), self.hidden());
        // gradient reaching prediction j through the feedback input
        let mut feedback: Vec<Option<Array2<f64>>> = vec![None; k];
        let mut dh = Array2::zeros((batch, hd));
        let mut dc = Array2::zeros((batch, hd));
        for s in (0..steps).rev() {
            if s + 1 >= n {
                let j = s + 1 - n;
                let mut dy = dpreds[j].clone();
                if let Some(f) = feedback[j].take() {
                    dy += &f;
                }
                dh += &self.project.backward(&ft.trace.outputs[s], &dy, &mut grad.project);
            }
            let (dx, dh_prev, dc_prev) = self
                .lstm
                .step_backward(&ft.trace.caches[s], &dh, &dc, Some(&mut grad.lstm));
            if s >= n && !ft.teacher_forced {
                feedback[s - n] = Some(self.embed.backward(&ft.trace.inputs[s], &dx, &mut grad.embed));
            } else {
                self.embed.backward_params(&ft.trace.inputs[s], &dx, &mut grad.embed);
            }
            dh = dh_prev;
            dc = dc_prev;
        }
    }

    /// Representation of a batch: the concatenated step outputs,
    /// `batch × (n·H)`.
    pub fn represent(&self, xs: &[Array2<f64>]) -> Result<Array2<f64>> {
        Ok(self.run(xs)?.representation())
    }

    /// Backward from dL/d(representation) through all input steps.
    pub fn represent_backward(&self, trace: &Trace, drep: &Array2<f64>, grad: &mut Encoder) {
        let hd = self.hidden();
        let batch = drep.nrows();
        let mut dh = Array2::zeros((batch, hd));
        let mut dc = Array2::zeros((batch, hd));
        for s in (0..trace.caches.len()).rev() {
            dh += &drep.slice(s![.., s * hd..(s + 1) * hd]);
            let (dx, dh_prev, dc_prev) = self
                .lstm
                .step_backward(&trace.caches[s], &dh, &dc, Some(&mut grad.lstm));
            self.embed.backward_params(&trace.inputs[s], &dx, &mut grad.embed);
            dh = dh_prev;
            dc = dc_prev;
        }
    }
}

fn check_finite(a: &Array2<f64>, step: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { step })
    }
}

impl ParamSet for Encoder {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.embed.tensors();
        v.extend(self.lstm.tensors());
        v.extend(self.project.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.embed.tensors_mut();
        v.extend(self.lstm.tensors_mut());
        v.extend(self.project.tensors_mut());
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .embed
            .tensor_names()
            .into_iter()
            .map(|n| format!("embed.{n}"))
            .collect();
        v.extend(self.lstm.tensor_names().into_iter().map(|n| format!("lstm.{n}")));
        v.extend(self.project.tensor_names().into_iter().map(|n| format!("project.{n}")));
        v
    }
}

/// Recorded encoder pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Dense-layer input at each step.
    pub inputs: Vec<Array2<f64>>,
    pub caches: Vec<LstmCache>,
    /// Hidden output at each step.
    pub outputs: Vec<Array2<f64>>,
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl Trace {
    fn new(batch: usize, hidden: usize) -> Trace {
        Trace {
            inputs: Vec::new(),
            caches: Vec::new(),
            outputs: Vec::new(),
            h: Array2::zeros((batch, hidden)),
            c: Array2::zeros((batch, hidden)),
        }
    }

    pub fn representation(&self) -> Array2<f64> {
        let views: Vec<_> = self.outputs.iter().map(|h| h.view()).collect();
        if views.is_empty() {
            return Array2::zeros((self.h.nrows(), 0));
        }
        concatenate(Axis(1), &views).expect("equal batch sizes")
    }
}

#[derive(Debug, Clone)]
pub struct ForecastTrace {
    pub trace: Trace,
    /// `k` arrays of `batch × 10`.
    pub preds: Vec<Array2<f64>>,
    pub n: usize,
    pub teacher_forced: bool,
}

/// What a head reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadInput {
    /// Flattened standardized features (`n · 10`).
    Raw,
    /// Encoder representation (`n · H`).
    Encoded,
}

/// 24 sigmoid units, optionally on top of an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub encoder: Option<Encoder>,
    pub head: Dense,
}

/// Recorded classifier pass.
#[derive(Debug, Clone)]
pub struct ClassifyTrace {
    pub trace: Option<Trace>,
    pub rep: Array2<f64>,
    pub logits: Array2<f64>,
}

impl Classifier {
    pub fn input(&self) -> HeadInput {
        if self.encoder.is_some() {
            HeadInput::Encoded
        } else {
            HeadInput::Raw
        }
    }

    pub fn zeros_like(&self) -> Classifier {
        Classifier {
            encoder: self.encoder.as_ref().map(|e| e.zeros_like()),
            head: Dense::zeros(self.head.outputs(), self.head.inputs()),
        }
    }

    /// Forward pass over a batch given as per-step `batch × 10` arrays.
    pub fn forward(&self, xs: &[Array2<f64>]) -> Result<ClassifyTrace> {
        let (trace, rep) = match &self.encoder {
            Some(enc) => {
                let t = enc.run(xs)?;
                let rep = t.representation();
                (Some(t), rep)
            }
            None => (None, flatten_steps(xs)),
        };
        if rep.ncols() != self.head.inputs() {
            return Err(Error::invalid(format!(
                "head expects {} inputs, representation has {}",
                self.head.inputs(),
                rep.ncols()
            )));
        }
        let logits = self.head.forward(&rep);
        Ok(ClassifyTrace { trace, rep, logits })
    }

    /// Per-verb probabilities, `batch × 24`.
    pub fn predict(&self, xs: &[Array2<f64>]) -> Result<Array2<f64>> {
        Ok(self.forward(xs)?.logits.mapv(sigmoid))
    }

    /// Accumulates gradients. The encoder part of `grad` is only touched
    /// when `through_encoder` is set.
    pub fn backward(&self, ct: &ClassifyTrace, dlogits: &Array2<f64>, grad: &mut Classifier, through_encoder: bool) {
        if !through_encoder {
            self.head.backward_params(&ct.rep, dlogits, &mut grad.head);
            return;
        }
        let drep = self.head.backward(&ct.rep, dlogits, &mut grad.head);
        if let (Some(enc), Some(genc), Some(trace)) = (&self.encoder, grad.encoder.as_mut(), &ct.trace) {
            enc.represent_backward(trace, &drep, genc);
        }
    }
}

impl ParamSet for Classifier {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.as_ref().map(|e| e.tensors()).unwrap_or_default();
        v.extend(self.head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.as_mut().map(|e| e.tensors_mut()).unwrap_or_default();
        v.extend(self.head.tensors_mut());
        v
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut v = self.encoder.as_ref().map(|e| e.tensor_names()).unwrap_or_default();
        v.extend(self.head.tensor_names().into_iter().map(|n| format!("head.{n}")));
        v
    }
}

/// `batch × (n·10)`, step-major.
pub fn flatten_steps(xs: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    concatenate(Axis(1), &views).expect("equal batch sizes")
}

/// Per-step batch arrays from a list of `n × 10` clips.
pub fn batch_steps(clips: &[&Array2<f64>]) -> Vec<Array2<f64>> {
    let n = clips.first().map_or(0, |c| c.nrows());
    (0..n)
        .map(|t| {
            let mut a = Array2::zeros((clips.len(), FEATURES));
            for (b, c) in clips.iter().enumerate() {
                a.row_mut(b).assign(&c.row(t));
            }
            a
        })
        .collect()
}
