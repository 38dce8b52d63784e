use rand::Rng;

use super::{LayerVars, ModelError, ModelParams, ParamVars, LAYER_NORM_EPS};
use crate::tensor::{Scalar, Tape, Tensor, Var};

/// One item as seen by the model.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemInput<T> {
    pub item_id: String,
    pub x: Vec<T>,
    /// Multi-hot description vector; present iff the model is visual-semantic.
    pub d: Option<Vec<T>>,
}

impl<T> ItemInput<T> {
    pub fn new(item_id: impl Into<String>, x: Vec<T>) -> Self {
        Self {
            item_id: item_id.into(),
            x,
            d: None,
        }
    }

    pub fn with_description(mut self, d: Vec<T>) -> Self {
        self.d = Some(d);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompatibilityScore<T> {
    /// Probability of the compatible class.
    pub m_s: T,
    pub logits: [T; 2],
}

impl<T: Scalar> CompatibilityScore<T> {
    pub fn from_logits(logits: [T; 2]) -> Self {
        let max = logits[0].max(logits[1]);
        let e0 = (logits[0] - max).exp();
        let e1 = (logits[1] - max).exp();
        Self {
            m_s: e1 / (e0 + e1),
            logits,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BatchForward {
    /// `[outfits × 2]` class logits.
    pub logits: Var,
    /// Number of pair relations pushed through `g`.
    pub relation_evals: usize,
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Item indices sorted by ascending item id.
fn canonical_order<T>(items: &[ItemInput<T>]) -> Result<Vec<usize>, ModelError> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].item_id.cmp(&items[b].item_id));
    if let Some(w) = order.windows(2).find(|w| items[w[0]].item_id == items[w[1]].item_id) {
        return Err(ModelError::DuplicateItem(items[w[0]].item_id.clone()));
    }
    Ok(order)
}

fn check_item<T>(params: &ModelParams<T>, item: &ItemInput<T>) -> Result<(), ModelError> {
    let c = &params.config;
    if item.x.len() != c.feature_dim {
        return Err(ModelError::Dimension {
            item_id: item.item_id.clone(),
            what: "feature vector",
            expected: c.feature_dim,
            actual: item.x.len(),
        });
    }
    if c.vse_enabled {
        match &item.d {
            None => return Err(ModelError::MissingDescription(item.item_id.clone())),
            Some(d) if d.len() != c.vocab_size => {
                return Err(ModelError::Dimension {
                    item_id: item.item_id.clone(),
                    what: "description vector",
                    expected: c.vocab_size,
                    actual: d.len(),
                })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// linear output → layer norm → relu → dropout (training only, when `dropout`).
fn norm_block<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    linear: Var,
    layer: LayerVars,
    dropout: Option<f64>,
    mode: Mode,
    rng: &mut R,
) -> Result<Var, ModelError> {
    let h = tape.layer_norm(linear, layer.ln_gain, layer.ln_bias, T::of(LAYER_NORM_EPS))?;
    let h = tape.relu(h)?;
    match dropout {
        Some(rate) => Ok(tape.dropout(h, rate, mode == Mode::Train, rng)?),
        None => Ok(h),
    }
}

/// Records the scorer over a batch of outfits on `tape`.
///
/// Within each outfit items are placed in ascending id order and pairs are
/// enumerated as `(a, b)` with `a < b` in that order, so the recorded graph
/// is identical for any permutation of an outfit's items.
pub fn forward_batch<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    vars: &ParamVars,
    outfits: &[&[ItemInput<T>]],
    mode: Mode,
    rng: &mut R,
) -> Result<BatchForward, ModelError> {
    let config = &params.config;
    if outfits.is_empty() {
        return Err(ModelError::TooFewItems(0));
    }
    let mut features = Vec::new();
    let mut descriptions = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut pair_offsets = vec![0];
    let mut n_items = 0;
    for outfit in outfits {
        if outfit.len() < 2 {
            return Err(ModelError::TooFewItems(outfit.len()));
        }
        let order = canonical_order(outfit)?;
        for &i in &order {
            let item = &outfit[i];
            check_item(params, item)?;
            features.extend_from_slice(&item.x);
            if config.vse_enabled {
                descriptions.extend_from_slice(item.d.as_deref().unwrap_or_default());
            }
        }
        let n = outfit.len();
        for a in 0..n {
            for b in a + 1..n {
                left.push(n_items + a);
                right.push(n_items + b);
            }
        }
        n_items += n;
        pair_offsets.push(left.len());
    }

    let x = tape.input(Tensor::matrix(n_items, config.feature_dim, features)?);
    let (wp, bp) = vars.projection();
    let mut rep = tape.linear(x, wp, bp)?;
    if let Some((wt, bt)) = vars.text_projection() {
        let d = tape.input(Tensor::matrix(n_items, config.vocab_size, descriptions)?);
        let t = tape.linear(d, wt, bt)?;
        rep = tape.concat_cols(rep, t)?;
    }

    // [r_i ‖ r_j]·W equals r_i·W_top + r_j·W_bottom; projecting each item
    // once avoids materialising every concatenated pair.
    let item_dim = config.item_dim();
    let g0 = vars.g(0);
    let w_top = tape.slice_rows(g0.weight, 0..item_dim)?;
    let w_bottom = tape.slice_rows(g0.weight, item_dim..2 * item_dim)?;
    let top = tape.matmul(rep, w_top)?;
    let bottom = tape.matmul(rep, w_bottom)?;
    let top = tape.gather_rows(top, &left)?;
    let bottom = tape.gather_rows(bottom, &right)?;
    let h = tape.add(top, bottom)?;
    let h = tape.add_bias(h, g0.bias)?;
    let rate = config.dropout_rate;
    let mut h = norm_block(tape, h, g0, Some(rate), mode, rng)?;
    for i in 1..config.g_layers.len() {
        let layer = vars.g(i);
        let lin = tape.linear(h, layer.weight, layer.bias)?;
        h = norm_block(tape, lin, layer, Some(rate), mode, rng)?;
    }

    let mut z = tape.segment_mean(h, &pair_offsets)?;
    let f_len = config.f_layers.len();
    for i in 0..f_len {
        let layer = vars.f(i);
        let lin = tape.linear(z, layer.weight, layer.bias)?;
        let dropout = (i + 1 < f_len).then_some(rate);
        z = norm_block(tape, lin, layer, dropout, mode, rng)?;
    }
    let (wc, bc) = vars.classifier();
    let logits = tape.linear(z, wc, bc)?;
    Ok(BatchForward {
        logits,
        relation_evals: left.len(),
    })
}

fn scores_from<T: Scalar>(tape: &Tape<T>, logits: Var) -> Vec<CompatibilityScore<T>> {
    tape.value(logits)
        .data()
        .chunks(2)
        .map(|l| CompatibilityScore::from_logits([l[0], l[1]]))
        .collect()
}

/// Scores one outfit and reports how many pair relations were evaluated.
pub fn score_outfit_traced<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    items: &[ItemInput<T>],
    mode: Mode,
    rng: &mut R,
) -> Result<(CompatibilityScore<T>, usize), ModelError> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    let fwd = forward_batch(&mut tape, params, &vars, &[items], mode, rng)?;
    Ok((scores_from(&tape, fwd.logits)[0], fwd.relation_evals))
}

pub fn score_outfit<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    items: &[ItemInput<T>],
    mode: Mode,
    rng: &mut R,
) -> Result<CompatibilityScore<T>, ModelError> {
    score_outfit_traced(params, items, mode, rng).map(|(s, _)| s)
}

/// [`score_outfit`] for a visual-semantic model; every item must carry `d`.
pub fn score_outfit_vse<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    items: &[ItemInput<T>],
    mode: Mode,
    rng: &mut R,
) -> Result<CompatibilityScore<T>, ModelError> {
    if !params.config.vse_enabled {
        return Err(ModelError::Config("model has no text projection".into()));
    }
    score_outfit(params, items, mode, rng)
}

/// Eval-mode scores for a batch of outfits.
pub fn score_batch<T: Scalar>(
    params: &ModelParams<T>,
    outfits: &[&[ItemInput<T>]],
) -> Result<Vec<CompatibilityScore<T>>, ModelError> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    // eval mode never draws from the generator
    let mut unused = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let fwd = forward_batch(&mut tape, params, &vars, outfits, Mode::Eval, &mut unused)?;
    Ok(scores_from(&tape, fwd.logits))
}

/// The relation vector `g([r_i ‖ r_j])` for one already-concatenated pair.
pub fn relation<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    pair: &[T],
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<T>, ModelError> {
    let config = &params.config;
    if pair.len() != config.pair_input_dim() {
        return Err(ModelError::Dimension {
            item_id: "<pair>".into(),
            what: "pair input",
            expected: config.pair_input_dim(),
            actual: pair.len(),
        });
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape, false);
    let mut h = tape.input(Tensor::matrix(1, pair.len(), pair.to_vec())?);
    for i in 0..config.g_layers.len() {
        let layer = vars.g(i);
        let lin = tape.linear(h, layer.weight, layer.bias)?;
        h = norm_block(&mut tape, lin, layer, Some(config.dropout_rate), mode, rng)?;
    }
    Ok(tape.value(h).data().to_vec())
}

/// The compatibility embedding `v = x·W + b` of one item.
pub fn embed_item<T: Scalar>(params: &ModelParams<T>, item: &ItemInput<T>) -> Result<Vec<T>, ModelError> {
    let c = &params.config;
    if item.x.len() != c.feature_dim {
        return Err(ModelError::Dimension {
            item_id: item.item_id.clone(),
            what: "feature vector",
            expected: c.feature_dim,
            actual: item.x.len(),
        });
    }
    let x = Tensor::matrix(1, c.feature_dim, item.x.clone())?;
    let mut v = x.matmul(&params.tensors[0])?.into_data();
    for (o, b) in v.iter_mut().zip(params.tensors[1].data()) {
        *o += *b;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(vse: bool) -> ModelConfig {
        ModelConfig {
            feature_dim: 8,
            projection_dim: 6,
            g_layers: vec![7, 5],
            f_layers: vec![4, 3],
            dropout_rate: 0.35,
            vse_enabled: vse,
            vocab_size: if vse { 5 } else { 0 },
            text_projection_dim: 3,
        }
    }

    fn random_items(rng: &mut ChaCha8Rng, n: usize, config: &ModelConfig) -> Vec<ItemInput<f64>> {
        (0..n)
            .map(|i| {
                let x = (0..config.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let item = ItemInput::new(format!("item{:03}", rng.random_range(0..1000) * 10 + i), x);
                if config.vse_enabled {
                    let d = (0..config.vocab_size)
                        .map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 })
                        .collect();
                    item.with_description(d)
                } else {
                    item
                }
            })
            .collect()
    }

    // Straight-line reference implementation: explicit loops, explicit pair
    // concatenation, no tape.
    mod oracle {
        use super::*;

        pub fn dense(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
            let (fan_in, fan_out) = (w.shape()[0], w.shape()[1]);
            assert_eq!(x.len(), fan_in);
            (0..fan_out)
                .map(|j| b.data()[j] + (0..fan_in).map(|i| x[i] * w.data()[i * fan_out + j]).sum::<f64>())
                .collect()
        }

        pub fn norm_relu(x: &[f64], gain: &Tensor<f64>, bias: &Tensor<f64>) -> Vec<f64> {
            let d = x.len() as f64;
            let mean = x.iter().sum::<f64>() / d;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            x.iter()
                .enumerate()
                .map(|(c, v)| ((v - mean) / (var + 1e-5).sqrt() * gain.data()[c] + bias.data()[c]).max(0.0))
                .collect()
        }

        pub fn mlp(p: &ModelParams<f64>, prefix: &str, layers: usize, mut h: Vec<f64>) -> Vec<f64> {
            for i in 0..layers {
                let t = |s: &str| p.get(&format!("{prefix}.{i}.{s}")).unwrap();
                h = dense(&h, t("weight"), t("bias"));
                h = norm_relu(&h, t("ln_gain"), t("ln_bias"));
            }
            h
        }

        pub fn item_rep(p: &ModelParams<f64>, item: &ItemInput<f64>) -> Vec<f64> {
            let mut v = dense(
                &item.x,
                p.get("projection.weight").unwrap(),
                p.get("projection.bias").unwrap(),
            );
            if p.config().vse_enabled {
                v.extend(dense(
                    item.d.as_ref().unwrap(),
                    p.get("text_projection.weight").unwrap(),
                    p.get("text_projection.bias").unwrap(),
                ));
            }
            v
        }

        pub fn score(p: &ModelParams<f64>, items: &[ItemInput<f64>]) -> f64 {
            let c = p.config();
            let mut sorted: Vec<&ItemInput<f64>> = items.iter().collect();
            sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
            let reps: Vec<Vec<f64>> = sorted.iter().map(|i| item_rep(p, i)).collect();
            let mut acc = vec![0.0; *c.g_layers.last().unwrap()];
            let mut count = 0.0;
            for i in 0..reps.len() {
                for j in i + 1..reps.len() {
                    let pair: Vec<f64> = reps[i].iter().chain(&reps[j]).copied().collect();
                    for (a, h) in acc.iter_mut().zip(mlp(p, "g", c.g_layers.len(), pair)) {
                        *a += h;
                    }
                    count += 1.0;
                }
            }
            let mean: Vec<f64> = acc.iter().map(|a| a / count).collect();
            let z = mlp(p, "f", c.f_layers.len(), mean);
            let logits = dense(
                &z,
                p.get("classifier.weight").unwrap(),
                p.get("classifier.bias").unwrap(),
            );
            let (e0, e1) = (logits[0].exp(), logits[1].exp());
            e1 / (e0 + e1)
        }
    }

    fn eval_rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn embed_item_cases() {
        let c = tiny(false);
        let zero = ModelParams::<f64>::zeros(c.clone()).unwrap();
        let v = embed_item(&zero, &ItemInput::new("a", vec![0.0; 8])).unwrap();
        assert_eq!(v, vec![0.0; 6]);

        let mut eye = ModelParams::<f64>::zeros(c.clone()).unwrap();
        let w = eye.get_mut("projection.weight").unwrap();
        for i in 0..6 {
            w.data_mut()[i * 6 + i] = 1.0;
        }
        let mut e1 = vec![0.0; 8];
        e1[0] = 1.0;
        let v = embed_item(&eye, &ItemInput::new("a", e1)).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        let item = &random_items(&mut rng, 1, &c)[0];
        let got = embed_item(&p, item).unwrap();
        let want = oracle::dense(
            &item.x,
            p.get("projection.weight").unwrap(),
            p.get("projection.bias").unwrap(),
        );
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-10);
        }
        assert!(embed_item(&p, &ItemInput::new("bad", vec![0.0; 3])).is_err());
    }

    #[test]
    fn relation_cases() {
        let c = tiny(false);
        let zero = ModelParams::<f64>::zeros(c.clone()).unwrap();
        let h = relation(&zero, &[0.0; 12], Mode::Eval, &mut eval_rng()).unwrap();
        assert_eq!(h, vec![0.0; 5]);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        let pair: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = relation(&p, &pair, Mode::Eval, &mut eval_rng()).unwrap();
        let b = relation(&p, &pair, Mode::Eval, &mut eval_rng()).unwrap();
        assert_eq!(a, b);
        let want = oracle::mlp(&p, "g", 2, pair.clone());
        for (g, w) in a.iter().zip(want) {
            assert!((g - w).abs() < 1e-8);
        }
        assert!(relation(&p, &pair[..11], Mode::Eval, &mut eval_rng()).is_err());
    }

    #[test]
    fn score_matches_straight_line_oracle() {
        for vse in [false, true] {
            let c = tiny(vse);
            let mut rng = ChaCha8Rng::seed_from_u64(if vse { 8 } else { 7 });
            let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
            for n in 2..7 {
                let items = random_items(&mut rng, n, &c);
                let got = score_outfit(&p, &items, Mode::Eval, &mut eval_rng()).unwrap();
                let want = oracle::score(&p, &items);
                assert!((got.m_s - want).abs() < 1e-6, "vse={vse} n={n}: {} vs {want}", got.m_s);
            }
        }
    }

    #[test]
    fn two_items_aggregate_is_the_single_relation() {
        let c = tiny(false);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        let items = random_items(&mut rng, 2, &c);
        let mut sorted = items.clone();
        sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let pair: Vec<f64> = embed_item(&p, &sorted[0])
            .unwrap()
            .into_iter()
            .chain(embed_item(&p, &sorted[1]).unwrap())
            .collect();
        let h = relation(&p, &pair, Mode::Eval, &mut eval_rng()).unwrap();
        let z = oracle::mlp(&p, "f", 2, h);
        let logits = oracle::dense(
            &z,
            p.get("classifier.weight").unwrap(),
            p.get("classifier.bias").unwrap(),
        );
        let want = CompatibilityScore::from_logits([logits[0], logits[1]]).m_s;
        let got = score_outfit(&p, &items, Mode::Eval, &mut eval_rng()).unwrap().m_s;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn permutation_gives_identical_bits() {
        for vse in [false, true] {
            let c = tiny(vse);
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let p: ModelParams<f32> = init_params(c.clone(), &mut rng).unwrap();
            for n in 2..=12 {
                let items: Vec<ItemInput<f32>> = random_items(&mut rng, n, &c)
                    .into_iter()
                    .map(|i| ItemInput {
                        item_id: i.item_id,
                        x: i.x.iter().map(|v| *v as f32).collect(),
                        d: i.d.map(|d| d.iter().map(|v| *v as f32).collect()),
                    })
                    .collect();
                let base = score_outfit(&p, &items, Mode::Eval, &mut eval_rng()).unwrap();
                let mut shuffled = items.clone();
                shuffled.shuffle(&mut rng);
                let again = score_outfit(&p, &shuffled, Mode::Eval, &mut eval_rng()).unwrap();
                assert_eq!(base.m_s.to_bits(), again.m_s.to_bits());
                assert_eq!(base.logits, again.logits);
            }
        }
    }

    #[test]
    fn relation_count_is_n_choose_2() {
        let c = tiny(false);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        for n in 2..=12 {
            let items = random_items(&mut rng, n, &c);
            let (_, evals) = score_outfit_traced(&p, &items, Mode::Eval, &mut eval_rng()).unwrap();
            assert_eq!(evals, n * (n - 1) / 2);
        }
        assert_eq!(pair_count(5), 10);
    }

    #[test]
    fn probabilities_are_proper() {
        let c = tiny(false);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        let items = random_items(&mut rng, 4, &c);
        let s = score_outfit(&p, &items, Mode::Eval, &mut eval_rng()).unwrap();
        let p0 = CompatibilityScore::from_logits([s.logits[1], s.logits[0]]).m_s;
        assert!(s.m_s > 0.0 && s.m_s < 1.0);
        assert!((s.m_s + p0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn text_projection_of_zero_matches_zero_padded_pairs() {
        let c = tiny(true);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        p.get_mut("text_projection.weight").unwrap().data_mut().fill(0.0);
        let items = random_items(&mut rng, 4, &c);
        let got = score_outfit_vse(&p, &items, Mode::Eval, &mut eval_rng()).unwrap();
        // Every pair's text slots are zero, so the pair input is [v_i,0,v_j,0].
        let mut sorted = items.clone();
        sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        let mut acc = vec![0.0; 5];
        for i in 0..4 {
            for j in i + 1..4 {
                let mut pair = embed_item(&p, &sorted[i]).unwrap();
                pair.extend([0.0; 3]);
                pair.extend(embed_item(&p, &sorted[j]).unwrap());
                pair.extend([0.0; 3]);
                for (a, h) in acc
                    .iter_mut()
                    .zip(relation(&p, &pair, Mode::Eval, &mut eval_rng()).unwrap())
                {
                    *a += h / 6.0;
                }
            }
        }
        let z = oracle::mlp(&p, "f", 2, acc);
        let l = oracle::dense(
            &z,
            p.get("classifier.weight").unwrap(),
            p.get("classifier.bias").unwrap(),
        );
        let want = CompatibilityScore::from_logits([l[0], l[1]]).m_s;
        assert!((got.m_s - want).abs() < 1e-9);
    }

    #[test]
    fn input_errors() {
        let c = tiny(false);
        let p = ModelParams::<f64>::zeros(c.clone()).unwrap();
        let one = vec![ItemInput::new("a", vec![0.0; 8])];
        assert!(matches!(
            score_outfit(&p, &one, Mode::Eval, &mut eval_rng()),
            Err(ModelError::TooFewItems(1))
        ));
        let dup = vec![ItemInput::new("a", vec![0.0; 8]), ItemInput::new("a", vec![0.0; 8])];
        assert!(matches!(
            score_outfit(&p, &dup, Mode::Eval, &mut eval_rng()),
            Err(ModelError::DuplicateItem(_))
        ));
        let wrong = vec![ItemInput::new("a", vec![0.0; 8]), ItemInput::new("b", vec![0.0; 7])];
        assert!(matches!(
            score_outfit(&p, &wrong, Mode::Eval, &mut eval_rng()),
            Err(ModelError::Dimension { .. })
        ));
        let vp = ModelParams::<f64>::zeros(tiny(true)).unwrap();
        let two = vec![ItemInput::new("a", vec![0.0; 8]), ItemInput::new("b", vec![0.0; 8])];
        assert!(matches!(
            score_outfit_vse(&vp, &two, Mode::Eval, &mut eval_rng()),
            Err(ModelError::MissingDescription(_))
        ));
        assert!(score_outfit_vse(&p, &two, Mode::Eval, &mut eval_rng()).is_err());
    }

    #[test]
    fn train_mode_is_seeded() {
        let c = tiny(false);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p: ModelParams<f64> = init_params(c.clone(), &mut rng).unwrap();
        let items = random_items(&mut rng, 5, &c);
        let a = score_outfit(&p, &items, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = score_outfit(&p, &items, Mode::Train, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
    }
}
