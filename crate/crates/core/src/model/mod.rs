//! The relational outfit scorer.
//!
//! Items are projected linearly into a compatibility embedding `v`. Every
//! unordered item pair is concatenated (lower item id first) and passed
//! through the relation MLP `g`; the mean of all pair relations goes through
//! the scoring MLP `f` and a two-way softmax head. The visual-semantic variant
//! appends a projected multi-hot description vector to each `v` before
//! pairing.

mod forward;

pub use forward::{
    embed_item, forward_batch, pair_count, relation, score_batch, score_outfit, score_outfit_traced, score_outfit_vse,
    BatchForward, CompatibilityScore, ItemInput, Mode,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Scalar, Tape, Tensor, TensorError, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("an outfit needs at least 2 items, got {0}")]
    TooFewItems(usize),
    #[error("item {0} appears twice in one outfit")]
    DuplicateItem(String),
    #[error("item {item_id}: {what} has {actual} entries, expected {expected}")]
    Dimension {
        item_id: String,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("item {0} has no description vector but the model is visual-semantic")]
    MissingDescription(String),
    #[error("parameter {name}: expected shape {expected:?}, found {actual:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub projection_dim: usize,
    pub g_layers: Vec<usize>,
    pub f_layers: Vec<usize>,
    pub dropout_rate: f64,
    pub vse_enabled: bool,
    pub vocab_size: usize,
    pub text_projection_dim: usize,
}

impl ModelConfig {
    /// Reference architecture: 1000-d projection, `g` = 512-512-256-256,
    /// `f` = 128-128-32, dropout 0.35.
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            projection_dim: 1000,
            g_layers: vec![512, 512, 256, 256],
            f_layers: vec![128, 128, 32],
            dropout_rate: 0.35,
            vse_enabled: false,
            vocab_size: 0,
            text_projection_dim: 300,
        }
    }

    pub fn with_vse(mut self, vocab_size: usize) -> Self {
        self.vse_enabled = true;
        self.vocab_size = vocab_size;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.feature_dim == 0 || self.projection_dim == 0 {
            return bad("feature_dim and projection_dim must be positive");
        }
        if self.g_layers.is_empty() || self.f_layers.is_empty() {
            return bad("g_layers and f_layers must be non-empty");
        }
        if self.g_layers.iter().chain(&self.f_layers).any(|&d| d == 0) {
            return bad("layer sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.vse_enabled && (self.vocab_size == 0 || self.text_projection_dim == 0) {
            return bad("a visual-semantic model needs a non-empty vocabulary and text projection");
        }
        Ok(())
    }

    /// Width of one item's representation before pairing.
    pub fn item_dim(&self) -> usize {
        if self.vse_enabled {
            self.projection_dim + self.text_projection_dim
        } else {
            self.projection_dim
        }
    }

    pub fn pair_input_dim(&self) -> usize {
        2 * self.item_dim()
    }

    /// Parameter names and shapes in their declared (serialisation) order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            (
                "projection.weight".to_string(),
                vec![self.feature_dim, self.projection_dim],
            ),
            ("projection.bias".to_string(), vec![self.projection_dim]),
        ];
        if self.vse_enabled {
            out.push((
                "text_projection.weight".into(),
                vec![self.vocab_size, self.text_projection_dim],
            ));
            out.push(("text_projection.bias".into(), vec![self.text_projection_dim]));
        }
        let mut push_mlp = |prefix: &str, input: usize, layers: &[usize]| {
            let mut fan_in = input;
            for (i, &w) in layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), vec![fan_in, w]));
                out.push((format!("{prefix}.{i}.bias"), vec![w]));
                out.push((format!("{prefix}.{i}.ln_gain"), vec![w]));
                out.push((format!("{prefix}.{i}.ln_bias"), vec![w]));
                fan_in = w;
            }
        };
        push_mlp("g", self.pair_input_dim(), &self.g_layers);
        push_mlp("f", *self.g_layers.last().unwrap(), &self.f_layers);
        out.push(("classifier.weight".into(), vec![*self.f_layers.last().unwrap(), 2]));
        out.push(("classifier.bias".into(), vec![2]));
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

/// All learnable tensors, stored in [`ModelConfig::layout`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != tensors.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in layout.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(ModelError::ParamShape {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape().to_vec(),
                });
            }
        }
        Ok(Self { config, tensors })
    }

    /// Every tensor zero except layer-norm gains, which are one.
    pub fn zeros(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let tensors = config
            .layout()
            .iter()
            .map(|(name, shape)| {
                if name.ends_with("ln_gain") {
                    Tensor::full(shape, T::one())
                } else {
                    Tensor::zeros(shape)
                }
            })
            .collect();
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor<T>> {
        self.tensors
    }

    pub fn names(&self) -> Vec<String> {
        self.config.layout().into_iter().map(|(n, _)| n).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        let idx = self.config.layout().iter().position(|(n, _)| n == name)?;
        self.tensors.get(idx)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let idx = self.config.layout().iter().position(|(n, _)| n == name)?;
        self.tensors.get_mut(idx)
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Registers every tensor on `tape`, as trainable leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> ParamVars {
        let vars = self
            .tensors
            .iter()
            .map(|t| {
                if trainable {
                    tape.param(t.clone())
                } else {
                    tape.input(t.clone())
                }
            })
            .collect();
        ParamVars {
            vars,
            text: self.config.vse_enabled,
            g_len: self.config.g_layers.len(),
            f_len: self.config.f_layers.len(),
        }
    }
}

/// Glorot-uniform weights, zero biases, unit layer-norm gains.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let tensors = config
        .layout()
        .iter()
        .map(|(name, shape)| {
            if name.ends_with(".weight") {
                let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let n = shape[0] * shape[1];
                let data = (0..n).map(|_| T::of(rng.random_range(-s..s))).collect();
                Tensor::new(shape.clone(), data).expect("layout shape")
            } else if name.ends_with("ln_gain") {
                Tensor::full(shape, T::one())
            } else {
                Tensor::zeros(shape)
            }
        })
        .collect();
    Ok(ModelParams { config, tensors })
}

/// Tape handles for a bound [`ModelParams`], in layout order.
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: Vec<Var>,
    text: bool,
    g_len: usize,
    f_len: usize,
}

/// Tape handles for one normalised dense layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
    pub ln_gain: Var,
    pub ln_bias: Var,
}

impl ParamVars {
    pub fn all(&self) -> &[Var] {
        &self.vars
    }

    pub fn projection(&self) -> (Var, Var) {
        (self.vars[0], self.vars[1])
    }

    pub fn text_projection(&self) -> Option<(Var, Var)> {
        self.text.then(|| (self.vars[2], self.vars[3]))
    }

    fn g_base(&self) -> usize {
        if self.text {
            4
        } else {
            2
        }
    }

    fn layer(&self, base: usize) -> LayerVars {
        LayerVars {
            weight: self.vars[base],
            bias: self.vars[base + 1],
            ln_gain: self.vars[base + 2],
            ln_bias: self.vars[base + 3],
        }
    }

    pub fn g(&self, i: usize) -> LayerVars {
        assert!(i < self.g_len);
        self.layer(self.g_base() + 4 * i)
    }

    pub fn f(&self, i: usize) -> LayerVars {
        assert!(i < self.f_len);
        self.layer(self.g_base() + 4 * self.g_len + 4 * i)
    }

    pub fn classifier(&self) -> (Var, Var) {
        let base = self.g_base() + 4 * (self.g_len + self.f_len);
        (self.vars[base], self.vars[base + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            feature_dim: 8,
            projection_dim: 6,
            g_layers: vec![5, 4],
            f_layers: vec![3],
            dropout_rate: 0.35,
            vse_enabled: false,
            vocab_size: 0,
            text_projection_dim: 4,
        }
    }

    #[test]
    fn reference_architecture_dimensions() {
        let c = ModelConfig::new(94_080);
        assert_eq!(c.pair_input_dim(), 2000);
        let layout = c.layout();
        assert_eq!(layout[2], ("g.0.weight".to_string(), vec![2000, 512]));
        assert_eq!(layout.last().unwrap().1, vec![2]);
        let vse = ModelConfig::new(10).with_vse(5000);
        assert_eq!(vse.pair_input_dim(), 2 * 1300);
    }

    #[test]
    fn param_count_is_function_of_config() {
        let c = small();
        let expected = 8 * 6 + 6 + (12 * 5 + 5 * 3) + (5 * 4 + 4 * 3) + (4 * 3 + 3 * 3) + 3 * 2 + 2;
        assert_eq!(c.param_count(), expected);
        let p: ModelParams<f32> = init_params(c.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p.tensors().iter().map(|t| t.len()).sum::<usize>(), expected);
    }

    #[test]
    fn init_is_seeded_and_well_formed() {
        let c = ModelConfig {
            projection_dim: 64,
            g_layers: vec![64, 32],
            ..small()
        };
        let a: ModelParams<f64> = init_params(c.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b: ModelParams<f64> = init_params(c.clone(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        for ((name, shape), t) in c.layout().iter().zip(a.tensors()) {
            if name.ends_with("ln_gain") {
                assert!(t.data().iter().all(|v| *v == 1.0));
            } else if name.ends_with(".weight") {
                let s = (6.0 / (shape[0] + shape[1]) as f64).sqrt();
                let n = t.len() as f64;
                let mean = t.data().iter().sum::<f64>() / n;
                assert!(mean.abs() < 3.0 * s / n.sqrt(), "{name}: mean {mean}");
                assert!(t.data().iter().all(|v| v.abs() <= s));
            } else {
                assert!(t.data().iter().all(|v| *v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ModelConfig {
            g_layers: vec![],
            ..small()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            f_layers: vec![3, 0],
            ..small()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            dropout_rate: 1.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(ModelConfig {
            vse_enabled: true,
            ..small()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn from_tensors_checks_shapes() {
        let c = small();
        let mut t = ModelParams::<f32>::zeros(c.clone()).unwrap().into_tensors();
        t[2] = Tensor::zeros(&[3, 3]);
        match ModelParams::from_tensors(c, t) {
            Err(ModelError::ParamShape { name, .. }) => assert_eq!(name, "g.0.weight"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
