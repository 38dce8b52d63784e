use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Outfit};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            valid: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Outfit>,
    pub valid: Vec<Outfit>,
    pub test: Vec<Outfit>,
}

/// Shuffles and partitions outfits. Train and valid sizes are
/// `round(n·ratio)`; test takes the remainder.
pub fn split_dataset<R: Rng + ?Sized>(
    outfits: &[Outfit],
    ratios: SplitRatios,
    rng: &mut R,
) -> Result<Splits, DataError> {
    let r = [ratios.train, ratios.valid, ratios.test];
    if r.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DataError::Split(format!("ratios must be non-negative, got {r:?}")));
    }
    if (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::Split(format!("ratios must sum to 1, got {r:?}")));
    }
    if ratios.train == 0.0 {
        return Err(DataError::Split("the training split cannot be empty".into()));
    }
    let n = outfits.len();
    let n_train = (n as f64 * ratios.train).round() as usize;
    let n_valid = ((n as f64 * ratios.valid).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| outfits[i].clone()).collect();
    Ok(Splits {
        train: take(0..n_train),
        valid: take(n_train..n_train + n_valid),
        test: take(n_train + n_valid..n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Label, Provenance};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn outfits(n: usize) -> Vec<Outfit> {
        (0..n)
            .map(|i| Outfit {
                outfit_id: format!("o{i}"),
                item_ids: vec![format!("a{i}"), format!("b{i}")],
                label: Label::Compatible,
                provenance: Provenance::Positive,
            })
            .collect()
    }

    fn sizes(s: &Splits) -> (usize, usize, usize) {
        (s.train.len(), s.valid.len(), s.test.len())
    }

    #[test]
    fn default_ratios() {
        let all = outfits(1000);
        let s = split_dataset(&all, SplitRatios::default(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(sizes(&s), (700, 150, 150));
        let union: HashSet<&str> = s
            .train
            .iter()
            .chain(&s.valid)
            .chain(&s.test)
            .map(|o| o.outfit_id.as_str())
            .collect();
        assert_eq!(union.len(), 1000);
    }

    #[test]
    fn reference_dataset_counts() {
        let all = outfits(49_740);
        let s = split_dataset(&all, SplitRatios::default(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(sizes(&s), (34_818, 7_461, 7_461));
    }

    #[test]
    fn seeded() {
        let all = outfits(100);
        let a = split_dataset(&all, SplitRatios::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = split_dataset(&all, SplitRatios::default(), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_ratios() {
        let all = outfits(10);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for r in [
            (0.5, 0.5, 0.5),
            (1.2, -0.1, -0.1),
            (0.0, 0.5, 0.5),
            (f64::NAN, 0.5, 0.5),
        ] {
            let ratios = SplitRatios {
                train: r.0,
                valid: r.1,
                test: r.2,
            };
            assert!(split_dataset(&all, ratios, &mut rng).is_err(), "{r:?}");
        }
    }
}
