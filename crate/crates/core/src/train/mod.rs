//! Adam over mini-batches of labeled outfits with validation-based early
//! stopping, plus the versioned checkpoint container.

mod checkpoint;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Example, Label};
use crate::eval::{auc, score_examples, EvalError};
use crate::model::{
    forward_batch, init_params, CompatibilityScore, ItemInput, Mode, ModelConfig, ModelError, ModelParams,
};
use crate::seed;
use crate::tensor::{check_gradients, GradCheckReport, Scalar, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("parameter {index}: gradient shape {actual:?} does not match {expected:?}")]
    GradShape {
        index: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            max_epochs: 30,
            patience: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps_adam > 0.0) {
            return bad(format!("eps_adam must be positive, got {}", self.eps_adam));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        Ok(())
    }
}

/// First and second moments per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub u: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            m: zeros(),
            u: zeros(),
            t: 0,
        }
    }
}

pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(TrainError::Config(format!(
            "{} parameters, {} gradients, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (index, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[index].shape() != p.shape() {
            return Err(TrainError::GradShape {
                index,
                expected: p.shape().to_vec(),
                actual: g.shape().to_vec(),
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (T::of(config.beta1), T::of(config.beta2));
    let c1 = T::of(1.0 - config.beta1.powf(state.t as f64));
    let c2 = T::of(1.0 - config.beta2.powf(state.t as f64));
    let (lr, eps) = (T::of(config.learning_rate), T::of(config.eps_adam));
    let one = T::one();
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.m[i].data_mut();
        let u = state.u[i].data_mut();
        for (((p, g), m), u) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(u.iter_mut())
        {
            *m = b1 * *m + (one - b1) * *g;
            *u = b2 * *u + (one - b2) * *g * *g;
            let m_hat = *m / c1;
            let u_hat = *u / c2;
            *p -= lr * m_hat / (u_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Mean cross-entropy over `batch` and its gradient for every parameter
/// tensor, in layout order.
pub fn batch_loss<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    batch: &[&Example<T>],
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, Vec<Tensor<T>>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::Empty("batch"));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, true);
    let outfits: Vec<&[ItemInput<T>]> = batch.iter().map(|e| e.items.as_slice()).collect();
    let fwd = forward_batch(&mut tape, params, &vars, &outfits, mode, rng)?;
    let labels: Vec<usize> = batch.iter().map(|e| e.label.class()).collect();
    let (loss, _) = tape.softmax_cross_entropy(fwd.logits, &labels)?;
    let value = tape.value(loss).data()[0].as_f64();
    let mut grads = tape.backward(loss)?;
    let out = vars
        .all()
        .iter()
        .zip(params.tensors())
        .map(|(v, p)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(p.shape())))
        .collect();
    Ok((value, out))
}

/// `−log p(label)` from a score's logits, in 64-bit.
pub fn example_loss<T: Scalar>(score: &CompatibilityScore<T>, label: Label) -> f64 {
    let l = [score.logits[0].as_f64(), score.logits[1].as_f64()];
    let max = l[0].max(l[1]);
    let lse = max + ((l[0] - max).exp() + (l[1] - max).exp()).ln();
    lse - l[label.class()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_auc: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<f64>,
    pub valid_auc: Vec<f64>,
    /// Last completed epoch, 1-based.
    pub stop_epoch: usize,
    /// Epoch whose parameters were returned, 1-based.
    pub best_epoch: usize,
    pub steps: usize,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// Equality ignoring wall time.
    pub fn same_run(&self, other: &Self) -> bool {
        Self {
            wall_time_secs: 0.0,
            ..self.clone()
        } == Self {
            wall_time_secs: 0.0,
            ..other.clone()
        }
    }
}

/// Validation loss and AUC in eval mode.
pub fn validate<T: Scalar>(params: &ModelParams<T>, valid: &[Example<T>]) -> Result<(f64, f64), TrainError> {
    let scores = score_examples(params, valid)?;
    let loss = scores
        .iter()
        .zip(valid)
        .map(|(s, e)| example_loss(s, e.label))
        .sum::<f64>()
        / valid.len() as f64;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (s, e) in scores.iter().zip(valid) {
        match e.label {
            Label::Compatible => pos.push(s.m_s.as_f64()),
            Label::Incompatible => neg.push(s.m_s.as_f64()),
        }
    }
    let auc = if pos.is_empty() || neg.is_empty() {
        f64::NAN
    } else {
        auc(&pos, &neg)?
    };
    Ok((loss, auc))
}

/// Trains from a seeded initialisation. See [`train_from`].
pub fn train<T: Scalar>(
    model: ModelConfig,
    train_set: &[Example<T>],
    valid_set: &[Example<T>],
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(ModelParams<T>, TrainReport), TrainError> {
    let params = init_params(model, &mut seed::rng(config.seed, seed::INIT))?;
    train_from(params, train_set, valid_set, config, on_epoch)
}

/// Each epoch shuffles the training outfits, takes one Adam step per batch,
/// then scores the validation split. Training stops once `patience`
/// consecutive epochs fail to lower the validation loss (patience 0 behaves
/// like 1) or after `max_epochs`; the best-validation parameters are
/// returned.
pub fn train_from<T: Scalar>(
    mut params: ModelParams<T>,
    train_set: &[Example<T>],
    valid_set: &[Example<T>],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<(ModelParams<T>, TrainReport), TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Empty("training set"));
    }
    if valid_set.is_empty() {
        return Err(TrainError::Empty("validation set"));
    }
    let start = Instant::now();
    let mut shuffle_rng = seed::rng(config.seed, seed::SHUFFLE);
    let mut dropout_rng = seed::rng(config.seed, seed::DROPOUT);
    let mut adam = AdamState::new(params.tensors());
    let mut report = TrainReport {
        train_loss: Vec::new(),
        valid_loss: Vec::new(),
        valid_auc: Vec::new(),
        stop_epoch: 0,
        best_epoch: 0,
        steps: 0,
        wall_time_secs: 0.0,
    };
    let mut best: Option<(f64, ModelParams<T>)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_loss(&params, &batch, Mode::Train, &mut dropout_rng)?;
            adam_step(params.tensors_mut(), &grads, &mut adam, config)?;
            total += loss * batch.len() as f64;
            steps += 1;
        }
        let train_loss = total / train_set.len() as f64;
        let (valid_loss, valid_auc) = validate(&params, valid_set)?;
        report.train_loss.push(train_loss);
        report.valid_loss.push(valid_loss);
        report.valid_auc.push(valid_auc);
        report.stop_epoch = epoch;
        report.steps += steps;
        on_epoch(&EpochMetrics {
            epoch,
            train_loss,
            valid_loss,
            valid_auc,
            steps,
        });
        if best.as_ref().is_none_or(|(b, _)| valid_loss < *b) {
            best = Some((valid_loss, params.clone()));
            report.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience.max(1) {
                break;
            }
        }
    }
    report.wall_time_secs = start.elapsed().as_secs_f64();
    let (_, best) = best.expect("at least one epoch ran");
    Ok((best, report))
}

/// Central-difference check of every parameter gradient of the batch loss on
/// one random outfit, in 64-bit with dropout off. Layer-norm gains and all
/// biases are jittered away from their initial values first so that every
/// term of the backward pass is exercised.
pub fn grad_check(model: ModelConfig, n_items: usize, seed: u64) -> Result<GradCheckReport, TrainError> {
    const H: f64 = 1e-6;
    const TOL: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: ModelParams<f64> = init_params(model.clone(), &mut rng)?;
    for (name, t) in model.layout().iter().zip(params.tensors_mut()) {
        if !name.0.ends_with(".weight") {
            for v in t.data_mut() {
                *v += rng.random_range(-0.5..0.5);
            }
        }
    }
    let items: Vec<ItemInput<f64>> = (0..n_items)
        .map(|i| {
            let x = (0..model.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let item = ItemInput::new(format!("item{i}"), x);
            if model.vse_enabled {
                let d = (0..model.vocab_size)
                    .map(|_| f64::from(rng.random_bool(0.3) as u8))
                    .collect();
                item.with_description(d)
            } else {
                item
            }
        })
        .collect();
    let example = Example {
        outfit_id: "check".into(),
        items,
        label: Label::Compatible,
    };
    let names = params.names();
    let (_, analytic) = batch_loss(&params, &[&example], Mode::Eval, &mut rng)?;
    let mut tensors = params.tensors().to_vec();
    let mut failure = None;
    let report = check_gradients(&mut tensors, &names, &analytic, H, TOL, |t| {
        let p = ModelParams::from_tensors(model.clone(), t.to_vec()).expect("same layout");
        match batch_loss(&p, &[&example], Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)) {
            Ok((l, _)) => l,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// The small configuration used for gradient checks.
pub fn grad_check_config() -> ModelConfig {
    ModelConfig {
        feature_dim: 8,
        projection_dim: 8,
        g_layers: vec![8, 8],
        f_layers: vec![4],
        ..ModelConfig::new(8)
    }
}
