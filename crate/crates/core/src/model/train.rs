//! Pretraining and head training loops.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, Adam};
use super::encoder::{batch_steps, flatten_steps, Classifier, Encoder};
use super::loss::{discounted_mse_batch, masked_bce};
use super::nn::{sigmoid, Dense};
use super::Standardizer;
use crate::error::{Error, Result};
use crate::eval::ap::mean_average_precision;
use crate::label::{VerbLabels, NUM_VERBS};
use crate::trajectory::{Clip, FeatureRow, Session, CLIP_FRAMES, FEATURES};

/// Forecast pretraining configuration. The input length is always
/// [`CLIP_FRAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Discount per step into the future.
    pub gamma: f64,
    /// Frames predicted after the input window.
    pub horizon: usize,
    pub hidden: usize,
    pub embed_width: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Feed true frames back during the unroll instead of predictions.
    pub teacher_forcing: bool,
    /// Global gradient-norm cap; 0 disables clipping.
    pub clip_norm: f64,
    pub windows_per_session: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.85,
            horizon: 60,
            hidden: 64,
            embed_width: 64,
            batch_size: 128,
            learning_rate: 1e-3,
            epochs: 12,
            seed: 0,
            teacher_forcing: false,
            clip_norm: 5.0,
            windows_per_session: 16,
        }
    }
}

impl TrainConfig {
    /// Settings reported for the original large-scale runs.
    pub fn paper_mode() -> TrainConfig {
        TrainConfig {
            hidden: 128,
            embed_width: 128,
            batch_size: 1024,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("training: {m}")));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if self.horizon == 0 || self.hidden == 0 || self.embed_width == 0 || self.batch_size == 0 {
            return bad("horizon, hidden, embed_width and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.clip_norm < 0.0 {
            return bad("clip_norm must be non-negative");
        }
        Ok(())
    }
}

/// Head / end-to-end training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// L2 penalty on head weights.
    pub l2: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            learning_rate: 1e-3,
            epochs: 60,
            batch_size: 64,
            patience: 10,
            l2: 1e-4,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.l2 < 0.0 || self.clip_norm < 0.0 {
            return Err(Error::Config(
                "head training: learning_rate and batch_size must be positive, l2 and clip_norm non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed-length raw windows cut from sessions, stored compactly.
#[derive(Debug, Clone, Default)]
pub struct WindowSet {
    pub len: usize,
    data: Vec<f32>,
}

impl WindowSet {
    pub fn new(len: usize) -> WindowSet {
        WindowSet { len, data: Vec::new() }
    }

    pub fn count(&self) -> usize {
        if self.len == 0 {
            0
        } else {
            self.data.len() / (self.len * FEATURES)
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn push(&mut self, rows: &[FeatureRow]) {
        assert_eq!(rows.len(), self.len, "window length");
        self.data.extend(rows.iter().flatten().map(|&v| v as f32));
    }

    pub fn extend(&mut self, other: WindowSet) {
        assert_eq!(other.len, self.len, "window length");
        self.data.extend(other.data);
    }

    pub fn row(&self, w: usize, t: usize) -> FeatureRow {
        let o = (w * self.len + t) * FEATURES;
        std::array::from_fn(|f| self.data[o + f] as f64)
    }

    pub fn rows(&self) -> impl Iterator<Item = FeatureRow> + '_ {
        self.data
            .chunks_exact(FEATURES)
            .map(|c| std::array::from_fn(|f| c[f] as f64))
    }

    /// Standardized per-step arrays for windows `idx`, steps `from..to`.
    fn steps(&self, idx: &[usize], from: usize, to: usize, std: &Standardizer) -> Vec<Array2<f64>> {
        (from..to)
            .map(|t| {
                let mut a = Array2::zeros((idx.len(), FEATURES));
                for (b, &w) in idx.iter().enumerate() {
                    let r = std.apply_row(&self.row(w, t));
                    for f in 0..FEATURES {
                        a[[b, f]] = r[f];
                    }
                }
                a
            })
            .collect()
    }
}

/// `count` windows of `len` frames with uniformly random starts.
pub fn sample_windows<R: Rng + ?Sized>(session: &Session, count: usize, len: usize, rng: &mut R) -> Result<WindowSet> {
    if len == 0 || len > session.frames.len() {
        return Err(Error::invalid(format!(
            "window of {len} frames does not fit a {}-frame session",
            session.frames.len()
        )));
    }
    let mut out = WindowSet::new(len);
    let rows: Vec<FeatureRow> = session.frames.iter().map(|f| f.features()).collect();
    for _ in 0..count {
        let start = rng.random_range(0..=rows.len() - len);
        out.push(&rows[start..start + len]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainLog {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Held-out loss before training and after each epoch.
    pub holdout_loss: Vec<f64>,
}

fn forecast_loss(
    enc: &Encoder,
    windows: &WindowSet,
    idx: &[usize],
    std: &Standardizer,
    cfg: &TrainConfig,
    grad: Option<&mut Encoder>,
) -> Result<f64> {
    let n = windows.len - cfg.horizon;
    let inputs = windows.steps(idx, 0, n, std);
    let targets = windows.steps(idx, n, windows.len, std);
    let teacher = cfg.teacher_forcing.then_some(targets.as_slice());
    let ft = enc.forecast_forward(&inputs, cfg.horizon, teacher)?;
    let (loss, dpreds) = discounted_mse_batch(&ft.preds, &targets, cfg.gamma)?;
    if let Some(g) = grad {
        enc.forecast_backward(&ft, &dpreds, g);
    }
    Ok(loss)
}

/// Mean discounted loss over a window set, without updating anything.
pub fn evaluate_forecast(enc: &Encoder, windows: &WindowSet, std: &Standardizer, cfg: &TrainConfig) -> Result<f64> {
    let all: Vec<usize> = (0..windows.count()).collect();
    let mut total = 0.0;
    for chunk in all.chunks(cfg.batch_size.max(1)) {
        total += forecast_loss(enc, windows, chunk, std, cfg, None)? * chunk.len() as f64;
    }
    Ok(total / all.len().max(1) as f64)
}

/// Trains an encoder to forecast the last `horizon` frames of each window
/// from the first `len − horizon`.
pub fn pretrain(
    train: &WindowSet,
    holdout: &WindowSet,
    std: &Standardizer,
    cfg: &TrainConfig,
) -> Result<(Encoder, PretrainLog)> {
    cfg.validate()?;
    if train.len <= cfg.horizon || train.is_empty() {
        return Err(Error::invalid(
            "pretraining needs non-empty windows longer than the horizon",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut enc = Encoder::init(cfg.embed_width, cfg.hidden, &mut rng);
    let mut opt = Adam::new(&enc, cfg.learning_rate);
    let mut log = PretrainLog::default();
    let diverged = |epoch| Error::Diverged {
        epoch,
        config: serde_json::to_string(cfg).unwrap_or_default(),
    };
    if !holdout.is_empty() {
        log.holdout_loss.push(evaluate_forecast(&enc, holdout, std, cfg)?);
    }
    let mut order: Vec<usize> = (0..train.count()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut grad = enc.zeros_like();
            let loss = forecast_loss(&enc, train, idx, std, cfg, Some(&mut grad)).map_err(|_| diverged(epoch))?;
            if !loss.is_finite() {
                return Err(diverged(epoch));
            }
            clip_grad_norm(&mut grad, cfg.clip_norm);
            opt.step(&mut enc, &grad);
            total += loss * idx.len() as f64;
            if b % 20 == 0 {
                log::debug!("pretrain epoch {epoch} batch {b}: loss {loss:.5}");
            }
        }
        let mean = total / order.len() as f64;
        log.train_loss.push(mean);
        if !holdout.is_empty() {
            let h = evaluate_forecast(&enc, holdout, std, cfg).map_err(|_| diverged(epoch))?;
            if !h.is_finite() {
                return Err(diverged(epoch));
            }
            log.holdout_loss.push(h);
            log::info!("pretrain epoch {epoch}: train {mean:.5} holdout {h:.5}");
        } else {
            log::info!("pretrain epoch {epoch}: train {mean:.5}");
        }
    }
    Ok((enc, log))
}

/// Standardized clips with their labels.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub clips: Vec<Array2<f64>>,
    pub labels: Vec<VerbLabels>,
}

impl LabeledSet {
    /// Standardizes clips, ordering them by clip id so score ties break
    /// the same way everywhere.
    pub fn from_clips(clips: &[(&Clip, VerbLabels)], std: &Standardizer) -> LabeledSet {
        let mut items: Vec<(String, &Clip, VerbLabels)> = clips.iter().map(|(c, l)| (c.id(), *c, *l)).collect();
        items.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out = LabeledSet::default();
        for (id, c, l) in items {
            out.clips.push(std.apply_matrix(&c.feature_matrix()));
            out.ids.push(id);
            out.labels.push(l);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn steps(&self, idx: &[usize]) -> Vec<Array2<f64>> {
        let clips: Vec<&Array2<f64>> = idx.iter().map(|&i| &self.clips[i]).collect();
        batch_steps(&clips)
    }

    /// `len × (n·10)` flattened features.
    pub fn flat(&self) -> Array2<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        flatten_steps(&self.steps(&all))
    }

    pub fn subset_labels(&self, idx: &[usize]) -> Vec<VerbLabels> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub train_loss: Vec<f64>,
    /// Validation mAP before training and after each epoch.
    pub val_map: Vec<f64>,
    /// Index into `val_map` of the kept parameters.
    pub best: usize,
    /// Verbs with no unmasked training labels; their units stay untrained.
    pub untrained_verbs: Vec<usize>,
}

fn untrained_verbs(labels: &[VerbLabels]) -> Vec<usize> {
    (0..NUM_VERBS)
        .filter(|&v| labels.iter().all(|l| l.0[v].is_masked()))
        .collect()
}

fn rows_of(p: &Array2<f64>) -> Vec<[f64; NUM_VERBS]> {
    p.rows().into_iter().map(|r| std::array::from_fn(|v| r[v])).collect()
}

fn val_map(scores: &Array2<f64>, labels: &[VerbLabels]) -> f64 {
    mean_average_precision(&rows_of(scores), labels).1.unwrap_or(0.0)
}

fn batches<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(size).map(|c| c.to_vec()).collect()
}

/// Logistic-regression head over fixed features (`rows × inputs`), one
/// sigmoid unit per verb. Keeps the parameters with the best validation
/// mAP.
pub fn train_linear_head(
    x: &Array2<f64>,
    labels: &[VerbLabels],
    val_x: &Array2<f64>,
    val_labels: &[VerbLabels],
    cfg: &HeadConfig,
) -> Result<(Dense, TrainLog)> {
    cfg.validate()?;
    if x.nrows() != labels.len() || val_x.nrows() != val_labels.len() || x.ncols() != val_x.ncols() {
        return Err(Error::invalid("feature and label counts differ"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = Dense::zeros(NUM_VERBS, x.ncols());
    let mut opt = Adam::new(&head, cfg.learning_rate);
    let mut log = TrainLog {
        untrained_verbs: untrained_verbs(labels),
        ..TrainLog::default()
    };
    let score = |h: &Dense| h.forward(val_x).mapv(sigmoid);
    let mut best = (val_map(&score(&head), val_labels), head.clone());
    log.val_map.push(best.0);
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for idx in batches(x.nrows(), cfg.batch_size, &mut rng) {
            let xb = x.select(Axis(0), &idx);
            let yb: Vec<VerbLabels> = idx.iter().map(|&i| labels[i]).collect();
            let (loss, dlogits) = masked_bce(&head.forward(&xb), &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    config: serde_json::to_string(cfg).unwrap_or_default(),
                });
            }
            let mut grad = Dense::zeros(NUM_VERBS, x.ncols());
            head.backward_params(&xb, &dlogits, &mut grad);
            grad.w.scaled_add(cfg.l2, &head.w);
            clip_grad_norm(&mut grad, cfg.clip_norm);
            opt.step(&mut head, &grad);
            total += loss * idx.len() as f64;
        }
        log.train_loss.push(total / x.nrows().max(1) as f64);
        let m = val_map(&score(&head), val_labels);
        log.val_map.push(m);
        if m > best.0 {
            best = (m, head.clone());
            log.best = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, log))
}

/// Trains encoder and head together by backpropagating the classification
/// loss through time. Used both from scratch (supervised) and from a
/// pretrained encoder with a probe head (finetune). The initial model
/// counts as epoch 0 for model selection.
pub fn train_end_to_end(
    init: Classifier,
    train: &LabeledSet,
    val: &LabeledSet,
    cfg: &HeadConfig,
) -> Result<(Classifier, TrainLog)> {
    cfg.validate()?;
    if init.encoder.is_none() {
        return Err(Error::invalid("end-to-end training needs an encoder"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init;
    let mut opt = Adam::new(&model, cfg.learning_rate);
    let mut log = TrainLog {
        untrained_verbs: untrained_verbs(&train.labels),
        ..TrainLog::default()
    };
    let score = |m: &Classifier| -> Result<f64> {
        let all: Vec<usize> = (0..val.len()).collect();
        let mut parts = Vec::new();
        for chunk in all.chunks(256) {
            parts.push(m.predict(&val.steps(chunk))?);
        }
        let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
        let p = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(val_map(&p, &val.labels))
    };
    let mut best = (score(&model)?, model.clone());
    log.val_map.push(best.0);
    let mut since_best = 0;
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for idx in batches(train.len(), cfg.batch_size, &mut rng) {
            let xs = train.steps(&idx);
            let yb = train.subset_labels(&idx);
            let ct = model.forward(&xs)?;
            let (loss, dlogits) = masked_bce(&ct.logits, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    config: serde_json::to_string(cfg).unwrap_or_default(),
                });
            }
            let mut grad = model.zeros_like();
            model.backward(&ct, &dlogits, &mut grad, true);
            grad.head.w.scaled_add(cfg.l2, &model.head.w);
            clip_grad_norm(&mut grad, cfg.clip_norm);
            opt.step(&mut model, &grad);
            total += loss * idx.len() as f64;
        }
        log.train_loss.push(total / train.len().max(1) as f64);
        let m = score(&model)?;
        log.val_map.push(m);
        log::info!(
            "end-to-end epoch {epoch}: loss {:.4} val mAP {m:.4}",
            log.train_loss[epoch]
        );
        if m > best.0 {
            best = (m, model.clone());
            log.best = epoch + 1;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.1, log))
}

/// Encoder representations of a labeled set, `len × (n·H)`.
pub fn represent_all(enc: &Encoder, set: &LabeledSet) -> Result<Array2<f64>> {
    let all: Vec<usize> = (0..set.len()).collect();
    let mut parts = Vec::new();
    for chunk in all.chunks(256) {
        parts.push(enc.represent(&set.steps(chunk))?);
    }
    if parts.is_empty() {
        return Ok(Array2::zeros((0, CLIP_FRAMES * enc.hidden())));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))
}

/// Per-clip scores of a classifier, `len × 24`.
pub fn predict_all(model: &Classifier, set: &LabeledSet) -> Result<Vec<[f64; NUM_VERBS]>> {
    let all: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in all.chunks(256) {
        out.extend(rows_of(&model.predict(&set.steps(chunk))?));
    }
    Ok(out)
}
