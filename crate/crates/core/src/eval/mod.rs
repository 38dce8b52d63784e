//! Compatibility AUC, fill-in-the-blank accuracy, and embedding export.

mod embed;

pub use embed::{embeddings, export_embeddings, pca2d, style_distances, write_coordinates, Pca2d, StyleDistances};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Example, FitbQuery, ItemResolver, Label, CANDIDATES};
use crate::model::{score_batch, CompatibilityScore, ItemInput, ModelError, ModelParams};
use crate::tensor::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUC needs both classes: {n_pos} positive and {n_neg} negative scores")]
    SingleClass { n_pos: usize, n_neg: usize },
    #[error("score {0} is not a number")]
    NaNScore(f64),
    #[error("no fill-in-the-blank query could be scored ({0} failed)")]
    NoQueries(usize),
    #[error("PCA needs at least 2 vectors of one dimension: {0}")]
    Pca(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Area under the ROC curve by the Mann–Whitney rank sum, ties sharing the
/// average rank.
///
/// Twice the rank sum is an integer, so the result is the same rational
/// `(2·#{p > n} + #{p = n}) / (2PN)` as brute-force pair counting, rounded
/// once.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64, EvalError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(EvalError::SingleClass {
            n_pos: pos.len(),
            n_neg: neg.len(),
        });
    }
    if let Some(v) = pos.iter().chain(neg).find(|v| v.is_nan()) {
        return Err(EvalError::NaNScore(*v));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        // ranks start+1 ..= end; twice their mean is start + 1 + end
        let positives = all[start..end].iter().filter(|(_, p)| *p).count() as u128;
        twice_rank_sum += positives * (start + 1 + end) as u128;
        start = end;
    }
    let (p, n) = (pos.len() as u128, neg.len() as u128);
    let numerator = twice_rank_sum - p * (p + 1);
    Ok(numerator as f64 / (2 * p * n) as f64)
}

/// Eval-mode scores, computed in fixed-size chunks.
pub fn score_examples<T: Scalar>(
    params: &ModelParams<T>,
    examples: &[Example<T>],
) -> Result<Vec<CompatibilityScore<T>>, ModelError> {
    const CHUNK: usize = 256;
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(CHUNK) {
        let outfits: Vec<&[ItemInput<T>]> = chunk.iter().map(|e| e.items.as_slice()).collect();
        out.extend(score_batch(params, &outfits)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub mean_pos: f64,
    pub mean_neg: f64,
    /// Counts of `m_s` in ten equal bins over [0, 1].
    pub histogram: Vec<usize>,
}

/// AUC of eval-mode scores against labels.
pub fn eval_compat<T: Scalar>(params: &ModelParams<T>, examples: &[Example<T>]) -> Result<EvalReport, EvalError> {
    let scores = score_examples(params, examples)?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    let mut histogram = vec![0; 10];
    for (s, e) in scores.iter().zip(examples) {
        let m = s.m_s.as_f64();
        histogram[((m * 10.0) as usize).min(9)] += 1;
        match e.label {
            Label::Compatible => pos.push(m),
            Label::Incompatible => neg.push(m),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(EvalReport {
        auc: auc(&pos, &neg)?,
        n_pos: pos.len(),
        n_neg: neg.len(),
        mean_pos: mean(&pos),
        mean_neg: mean(&neg),
        histogram,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitbOutcome {
    pub outfit_id: String,
    pub chosen: usize,
    pub answer: usize,
    pub scores: Vec<f64>,
    /// Several candidates shared the top score; the lowest index was chosen.
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitbReport {
    pub accuracy: f64,
    pub n_queries: usize,
    pub n_correct: usize,
    pub n_ties: usize,
    /// Queries that could not be scored, with the reason.
    pub failed: Vec<(String, String)>,
    pub outcomes: Vec<FitbOutcome>,
}

/// Index of the highest score (lowest index on ties) and whether it tied.
pub fn argmax_lowest(scores: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    let tie = scores.iter().filter(|s| **s == scores[best]).count() > 1;
    (best, tie)
}

/// Scores the partial outfit completed by each candidate and picks the
/// candidate with the highest `m_s`.
pub fn eval_fitb(
    params: &ModelParams<f32>,
    queries: &[FitbQuery],
    resolver: &ItemResolver,
) -> Result<FitbReport, EvalError> {
    const QUERIES_PER_BATCH: usize = 64;
    let mut failed = Vec::new();
    let mut outcomes = Vec::new();
    for chunk in queries.chunks(QUERIES_PER_BATCH) {
        let mut ready = Vec::with_capacity(chunk.len());
        let mut outfits: Vec<Vec<ItemInput<f32>>> = Vec::with_capacity(chunk.len() * CANDIDATES);
        for q in chunk {
            let resolved = resolver.items::<f32, _>(&q.partial).and_then(|partial| {
                q.candidates
                    .iter()
                    .map(|c| {
                        let mut outfit = partial.clone();
                        outfit.push(resolver.item(c)?);
                        Ok(outfit)
                    })
                    .collect::<Result<Vec<_>, DataError>>()
            });
            match resolved {
                Ok(mut candidates) => {
                    outfits.append(&mut candidates);
                    ready.push(q);
                }
                Err(e) => {
                    log::warn!("fitb: query {} excluded: {e}", q.outfit_id);
                    failed.push((q.outfit_id.clone(), e.to_string()));
                }
            }
        }
        if ready.is_empty() {
            continue;
        }
        let refs: Vec<&[ItemInput<f32>]> = outfits.iter().map(Vec::as_slice).collect();
        let scores = score_batch(params, &refs)?;
        for (q, s) in ready.iter().zip(scores.chunks(CANDIDATES)) {
            let scores: Vec<f64> = s.iter().map(|c| f64::from(c.m_s)).collect();
            let (chosen, tie) = argmax_lowest(&scores);
            outcomes.push(FitbOutcome {
                outfit_id: q.outfit_id.clone(),
                chosen,
                answer: q.answer_index,
                scores,
                tie,
            });
        }
    }
    if outcomes.is_empty() {
        return Err(EvalError::NoQueries(failed.len()));
    }
    let n_correct = outcomes.iter().filter(|o| o.chosen == o.answer).count();
    Ok(FitbReport {
        accuracy: n_correct as f64 / outcomes.len() as f64,
        n_queries: outcomes.len(),
        n_correct,
        n_ties: outcomes.iter().filter(|o| o.tie).count(),
        failed,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureStore, ItemCatalog, ItemRecord};
    use crate::model::{init_params, ModelConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(pos: &[f64], neg: &[f64]) -> f64 {
        let (mut greater, mut equal) = (0u64, 0u64);
        for p in pos {
            for n in neg {
                if p > n {
                    greater += 1;
                } else if p == n {
                    equal += 1;
                }
            }
        }
        (2 * greater + equal) as f64 / (2 * pos.len() * neg.len()) as f64
    }

    #[test]
    fn worked_examples() {
        assert_eq!(auc(&[0.9, 0.8], &[0.3, 0.1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(auc(&[0.8, 0.4], &[0.6, 0.2]).unwrap(), 0.75);
        assert_eq!(auc(&[0.1], &[0.9]).unwrap(), 0.0);
    }

    #[test]
    fn empty_class_and_nan_are_errors() {
        assert!(matches!(auc(&[], &[0.1]), Err(EvalError::SingleClass { .. })));
        assert!(matches!(auc(&[0.1], &[]), Err(EvalError::SingleClass { .. })));
        assert!(matches!(auc(&[f64::NAN], &[0.1]), Err(EvalError::NaNScore(_))));
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = rng.random_range(1..=200);
            let n = rng.random_range(1..=200);
            // coarse grid so ties are common
            let mut draw = |k| {
                (0..k)
                    .map(|_| f64::from(rng.random_range(0..20u8)) / 20.0)
                    .collect::<Vec<_>>()
            };
            let pos = draw(p);
            let neg = draw(n);
            assert_eq!(auc(&pos, &neg).unwrap(), brute_force(&pos, &neg));
        }
    }

    proptest! {
        #[test]
        fn swap_complements_without_ties(pos in prop::collection::vec(0.0f64..1.0, 1..50),
                                         neg in prop::collection::vec(1.0f64..2.0, 1..50),
                                         shift in -1.0f64..1.0) {
            // shift interleaves the classes while keeping them disjoint in value
            let neg: Vec<f64> = neg.iter().map(|v| v + shift).filter(|v| !pos.contains(v)).collect();
            prop_assume!(!neg.is_empty());
            let a = auc(&pos, &neg).unwrap();
            let b = auc(&neg, &pos).unwrap();
            prop_assert_eq!(a + b, 1.0);
            prop_assert_eq!(a, brute_force(&pos, &neg));
        }

        #[test]
        fn invariant_under_monotone_transforms(pos in prop::collection::vec(-3.0f64..3.0, 1..40),
                                               neg in prop::collection::vec(-3.0f64..3.0, 1..40)) {
            let f = |v: &f64| (2.0 * v).exp() + 1.0;
            let a = auc(&pos, &neg).unwrap();
            let b = auc(&pos.iter().map(f).collect::<Vec<_>>(), &neg.iter().map(f).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    fn model() -> ModelConfig {
        ModelConfig {
            projection_dim: 4,
            g_layers: vec![6, 4],
            f_layers: vec![4],
            ..ModelConfig::new(3)
        }
    }

    fn example(id: usize, label: Label, rng: &mut ChaCha8Rng) -> Example<f32> {
        Example {
            outfit_id: format!("o{id}"),
            items: (0..3)
                .map(|i| {
                    ItemInput::new(
                        format!("o{id}i{i}"),
                        (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect(),
            label,
        }
    }

    #[test]
    fn constant_scorer_has_auc_one_half() {
        // zero weights score every outfit identically
        let params = ModelParams::<f32>::zeros(model()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples: Vec<Example<f32>> = (0..20)
            .map(|i| {
                example(
                    i,
                    if i % 2 == 0 {
                        Label::Compatible
                    } else {
                        Label::Incompatible
                    },
                    &mut rng,
                )
            })
            .collect();
        let r = eval_compat(&params, &examples).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!((r.n_pos, r.n_neg), (10, 10));
        assert_eq!(r.histogram.iter().sum::<usize>(), 20);
    }

    #[test]
    fn flipping_labels_maps_auc_to_its_complement() {
        let params: ModelParams<f32> = init_params(model(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let examples: Vec<Example<f32>> = (0..40)
            .map(|i| {
                example(
                    i,
                    if i % 3 == 0 {
                        Label::Compatible
                    } else {
                        Label::Incompatible
                    },
                    &mut rng,
                )
            })
            .collect();
        let a = eval_compat(&params, &examples).unwrap().auc;
        let flipped: Vec<Example<f32>> = examples
            .iter()
            .cloned()
            .map(|mut e| {
                e.label = match e.label {
                    Label::Compatible => Label::Incompatible,
                    Label::Incompatible => Label::Compatible,
                };
                e
            })
            .collect();
        let b = eval_compat(&params, &flipped).unwrap().auc;
        assert!((a + b - 1.0).abs() < 1e-12, "{a} {b}");
    }

    #[test]
    fn single_class_dataset_is_an_error() {
        let params = ModelParams::<f32>::zeros(model()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let examples: Vec<Example<f32>> = (0..3).map(|i| example(i, Label::Compatible, &mut rng)).collect();
        assert!(matches!(
            eval_compat(&params, &examples),
            Err(EvalError::SingleClass { .. })
        ));
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax_lowest(&[0.1, 0.7, 0.7, 0.2]), (1, true));
        assert_eq!(argmax_lowest(&[0.1, 0.2, 0.9, 0.2]), (2, false));
        assert_eq!(argmax_lowest(&[0.5; 4]), (0, true));
    }

    fn fitb_fixture() -> (FeatureStore, ItemCatalog, Vec<FitbQuery>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let records: Vec<ItemRecord> = (0..12)
            .map(|i| {
                ItemRecord::new(
                    format!("i{i:02}"),
                    (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let queries = vec![
            FitbQuery {
                outfit_id: "q0".into(),
                partial: vec!["i00".into(), "i01".into()],
                candidates: vec!["i02".into(), "i03".into(), "i04".into(), "i05".into()],
                answer_index: 2,
                category: "c".into(),
            },
            FitbQuery {
                outfit_id: "q1".into(),
                partial: vec!["i06".into(), "i07".into()],
                candidates: vec!["i08".into(), "i09".into(), "missing".into(), "i11".into()],
                answer_index: 0,
                category: "c".into(),
            },
        ];
        (
            FeatureStore::from_records(&records).unwrap(),
            ItemCatalog::new(),
            queries,
        )
    }

    #[test]
    fn identical_candidates_tie_to_the_lowest_index() {
        let (store, catalog, mut queries) = fitb_fixture();
        queries.truncate(1);
        let params = ModelParams::<f32>::zeros(model()).unwrap();
        let r = eval_fitb(&params, &queries, &ItemResolver::new(&store, &catalog, None)).unwrap();
        assert_eq!(r.outcomes[0].chosen, 0);
        assert!(r.outcomes[0].tie);
        assert_eq!((r.n_ties, r.n_correct), (1, 0));
    }

    #[test]
    fn fitb_picks_the_argmax_and_counts_failures() {
        let (store, catalog, queries) = fitb_fixture();
        let params: ModelParams<f32> = init_params(model(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let r = eval_fitb(&params, &queries, &ItemResolver::new(&store, &catalog, None)).unwrap();
        assert_eq!(r.n_queries, 1);
        assert_eq!(r.failed.len(), 1);
        assert_eq!(r.failed[0].0, "q1");
        let q = &queries[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let oracle: Vec<f64> = q
            .candidates
            .iter()
            .map(|c| {
                let ids: Vec<&str> = q.partial.iter().map(String::as_str).chain([c.as_str()]).collect();
                let items: Vec<ItemInput<f32>> = ids
                    .iter()
                    .map(|id| ItemInput::new(*id, store.get(id).unwrap().to_vec()))
                    .collect();
                f64::from(
                    crate::model::score_outfit(&params, &items, crate::model::Mode::Eval, &mut rng)
                        .unwrap()
                        .m_s,
                )
            })
            .collect();
        assert_eq!(r.outcomes[0].scores, oracle);
        assert_eq!(r.outcomes[0].chosen, argmax_lowest(&oracle).0);
        assert_eq!(r.accuracy, (r.outcomes[0].chosen == 2) as u8 as f64);
    }

    #[test]
    fn no_scorable_query_is_an_error() {
        let (store, catalog, queries) = fitb_fixture();
        let params = ModelParams::<f32>::zeros(model()).unwrap();
        let r = eval_fitb(&params, &queries[1..], &ItemResolver::new(&store, &catalog, None));
        assert!(matches!(r, Err(EvalError::NoQueries(1))));
    }
}
