//! Loss, metrics, Adam and the early-stopped training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ScalerStats, WindowSample};
use crate::model::{stack_targets, ForwardOptions, Model, ModelError};
use crate::numerics::{
    finite_diff_check, GradCheckOptions, GradCheckReport, NumericsError, ParamSet, Tape, Tensor, Var,
};
use crate::textgen::{TextError, TextProvider};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("non-finite {0}")]
    NonFinite(String),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(ModelError::Numerics(e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without strict validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub few_shot_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 32,
            max_epochs: 20,
            patience: 3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            few_shot_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        // zero is accepted: a frozen run is a useful baseline
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail(format!(
                "learning_rate = {} must be finite and >= 0",
                self.learning_rate
            ));
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if self.max_epochs < 1 {
            return fail("max_epochs must be at least 1".into());
        }
        if self.patience < 1 {
            return fail("patience must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail(format!(
                "Adam betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            ));
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return fail(format!("eps = {} must be positive", self.eps));
        }
        if !(self.few_shot_fraction > 0.0 && self.few_shot_fraction <= 1.0) {
            return fail(format!(
                "few_shot_fraction = {} must lie in (0, 1]",
                self.few_shot_fraction
            ));
        }
        Ok(())
    }
}

fn check_same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), NumericsError> {
    if a.shape() != b.shape() {
        return Err(NumericsError::Shape {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean squared error over every element, recorded on the tape.
pub fn mse_loss(tape: &mut Tape, pred: Var, truth: Var) -> Result<Var, NumericsError> {
    let diff = tape.sub(pred, truth)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean_all(sq))
}

pub fn mse(pred: &Tensor, truth: &Tensor) -> Result<f64, NumericsError> {
    check_same_shape("mse", pred, truth)?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(s / pred.len() as f64)
}

pub fn mae(pred: &Tensor, truth: &Tensor) -> Result<f64, NumericsError> {
    check_same_shape("mae", pred, truth)?;
    let s: f64 = pred.data().iter().zip(truth.data()).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Errors averaged uniformly over steps, variables and windows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
    pub n_windows: usize,
}

/// Metrics over paired forecast and truth matrices.
pub fn metrics(preds: &[Tensor], truths: &[Tensor]) -> Result<Metrics, NumericsError> {
    if preds.len() != truths.len() {
        return Err(NumericsError::Shape {
            op: "metrics",
            left: vec![preds.len()],
            right: vec![truths.len()],
        });
    }
    if preds.is_empty() {
        return Err(NumericsError::Empty("metrics"));
    }
    let (mut se, mut ae, mut count) = (0.0, 0.0, 0usize);
    for (p, t) in preds.iter().zip(truths) {
        check_same_shape("metrics", p, t)?;
        for (a, b) in p.data().iter().zip(t.data()) {
            se += (a - b) * (a - b);
            ae += (a - b).abs();
        }
        count += p.len();
    }
    Ok(Metrics {
        mse: se / count as f64,
        mae: ae / count as f64,
        n_windows: preds.len(),
    })
}

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamConfig {
    fn from(c: &TrainConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
        }
    }
}

/// One bias-corrected Adam update using each parameter's stored gradient
/// and moments. `step` counts from 1.
pub fn adam_step(params: &mut ParamSet, cfg: &AdamConfig, step: u64) {
    assert!(step >= 1, "Adam steps count from 1");
    let t = step.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in params.iter_mut() {
        let grad = p.grad.data().to_vec();
        let theta = p.tensor.data_mut();
        for k in 0..grad.len() {
            let g = grad[k];
            let m = cfg.beta1 * p.first_moment[k] + (1.0 - cfg.beta1) * g;
            let v = cfg.beta2 * p.second_moment[k] + (1.0 - cfg.beta2) * g * g;
            p.first_moment[k] = m;
            p.second_moment[k] = v;
            theta[k] -= cfg.learning_rate * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
}

/// Supplies the per-variable token matrices of a window.
pub trait TextSource {
    fn texts(&self, window: &WindowSample) -> Result<Vec<Tensor>, TextError>;
}

impl TextSource for TextProvider {
    fn texts(&self, window: &WindowSample) -> Result<Vec<Tensor>, TextError> {
        Ok(self.embeddings(window)?.into_iter().map(|e| e.tokens).collect())
    }
}

impl<F> TextSource for F
where
    F: Fn(&WindowSample) -> Result<Vec<Tensor>, TextError>,
{
    fn texts(&self, window: &WindowSample) -> Result<Vec<Tensor>, TextError> {
        self(window)
    }
}

fn batch_texts(source: &dyn TextSource, batch: &[WindowSample]) -> Result<Vec<Vec<Tensor>>, TextError> {
    batch.iter().map(|w| source.texts(w)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    /// One `epoch,train_loss,val_mse,val_mae` line per epoch.
    pub fn to_text(&self) -> String {
        self.epochs
            .iter()
            .map(|r| format!("{},{},{},{}\n", r.epoch, r.train_loss, r.val_mse, r.val_mae))
            .collect()
    }

    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

/// Predictions for every window, computed `batch_size` windows at a time.
pub fn predict_all(
    model: &Model,
    windows: &[WindowSample],
    texts: &dyn TextSource,
    batch_size: usize,
) -> Result<Vec<Tensor>, TrainError> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(batch_size.max(1)) {
        out.extend(model.predict(chunk, &batch_texts(texts, chunk)?)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricSpace {
    Normalized,
    Raw,
}

impl MetricSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricSpace::Normalized => "normalized",
            MetricSpace::Raw => "raw",
        }
    }
}

pub struct Evaluation {
    pub metrics: Metrics,
    /// Forecasts in the requested space, one `pred_len x num_vars` matrix
    /// per window.
    pub predictions: Vec<Tensor>,
    pub truths: Vec<Tensor>,
}

/// Forecasts every window and scores them. Raw space undoes `scaler` on
/// both forecasts and targets before scoring.
pub fn evaluate(
    model: &Model,
    windows: &[WindowSample],
    texts: &dyn TextSource,
    batch_size: usize,
    space: MetricSpace,
    scaler: Option<&ScalerStats>,
) -> Result<Evaluation, TrainError> {
    if windows.is_empty() {
        return Err(TrainError::Config("no windows to evaluate".into()));
    }
    let mut predictions = predict_all(model, windows, texts, batch_size)?;
    let mut truths: Vec<Tensor> = windows.iter().map(|w| w.y.clone()).collect();
    if space == MetricSpace::Raw {
        let s = scaler.ok_or_else(|| TrainError::Config("raw-space metrics need the scaler".into()))?;
        predictions = predictions.iter().map(|p| s.inverse_transform(p)).collect();
        truths = truths.iter().map(|t| s.inverse_transform(t)).collect();
    }
    let metrics = metrics(&predictions, &truths)?;
    if !metrics.mse.is_finite() {
        return Err(TrainError::NonFinite("evaluation error".into()));
    }
    Ok(Evaluation {
        metrics,
        predictions,
        truths,
    })
}

/// Mini-batch Adam with seeded shuffling and early stopping on validation
/// MSE. On return the model holds the parameters of the best epoch.
pub fn train(
    model: &mut Model,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    texts: &dyn TextSource,
    cfg: &TrainConfig,
) -> Result<History, TrainError> {
    cfg.validate()?;
    if train_windows.is_empty() || val_windows.is_empty() {
        return Err(TrainError::Config(format!(
            "training needs windows in both splits (train {}, validation {})",
            train_windows.len(),
            val_windows.len()
        )));
    }
    let adam = AdamConfig::from(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_windows.len()).collect();
    let mut step = 0u64;
    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<WindowSample> = chunk.iter().map(|&i| train_windows[i].clone()).collect();
            let batch_text = batch_texts(texts, &batch)?;
            let mut tape = Tape::new();
            let vars = model.params().bind(&mut tape);
            let out = model.forward(&mut tape, &vars, &batch, &batch_text, ForwardOptions::default())?;
            let truth = tape.constant(stack_targets(&batch));
            let loss = mse_loss(&mut tape, out.prediction, truth)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::NonFinite(format!("training loss in epoch {epoch}")));
            }
            loss_sum += value * batch.len() as f64;
            let grads = tape.backward(loss)?;
            model.params_mut().store_grads(&grads, &vars);
            step += 1;
            adam_step(model.params_mut(), &adam, step);
        }
        let train_loss = loss_sum / train_windows.len() as f64;
        let val = evaluate(model, val_windows, texts, cfg.batch_size, MetricSpace::Normalized, None)?.metrics;
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_mse: val.mse,
            val_mae: val.mae,
        });
        if best.as_ref().is_none_or(|(b, _, _)| val.mse < *b) {
            best = Some((val.mse, epoch, model.params().snapshot()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    let (_, best_epoch, snapshot) = best.expect("at least one epoch");
    model.params_mut().restore(&snapshot);
    Ok(History {
        epochs,
        best_epoch,
        stopped_early,
    })
}

/// Finite-difference check of the MSE loss on `windows` with respect to
/// every model parameter. The graphs are built once from the initial
/// parameters and held fixed, since edge selection is a step function.
pub fn loss_gradcheck(
    model: &Model,
    windows: &[WindowSample],
    texts: &[Vec<Tensor>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, TrainError> {
    let mut tape = Tape::new();
    let vars = model.bind_constants(&mut tape);
    let graphs = model
        .forward(&mut tape, &vars, windows, texts, ForwardOptions::default())?
        .graphs;
    let target = stack_targets(windows);
    let mut params = model.params().clone();
    let report = finite_diff_check(
        &mut params,
        |tape, vars| -> Result<Var, TrainError> {
            let opts = ForwardOptions {
                graphs: Some(&graphs),
                trace: false,
            };
            let out = model.forward(tape, vars, windows, texts, opts)?;
            let truth = tape.constant(target.clone());
            let loss = mse_loss(tape, out.prediction, truth)?;
            if !tape.value(loss).data()[0].is_finite() {
                return Err(TrainError::NonFinite("loss during gradient check".into()));
            }
            Ok(loss)
        },
        opts,
    )?;
    Ok(report)
}
