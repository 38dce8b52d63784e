use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use super::{DataError, Label, Outfit, Provenance};

const MAX_ATTEMPTS: usize = 100;

/// One artificial outfit per positive: the same number of items, each drawn
/// from a different source outfit of `pool`, no item repeated.
pub fn sample_negatives<R: Rng + ?Sized>(
    positives: &[Outfit],
    pool: &[Outfit],
    rng: &mut R,
) -> Result<Vec<Outfit>, DataError> {
    if pool.len() < 2 {
        return Err(DataError::Sampling(format!(
            "the item pool must span at least 2 outfits, got {}",
            pool.len()
        )));
    }
    let mut out = Vec::with_capacity(positives.len());
    for pos in positives {
        let n = pos.item_ids.len();
        if n > pool.len() {
            return Err(DataError::Sampling(format!(
                "outfit {} needs {n} distinct source outfits but the pool has {}",
                pos.outfit_id,
                pool.len()
            )));
        }
        let mut picked = None;
        for _ in 0..MAX_ATTEMPTS {
            let sources = index::sample(rng, pool.len(), n);
            let items: Vec<String> = sources
                .iter()
                .map(|s| {
                    let src = &pool[s].item_ids;
                    src[rng.random_range(0..src.len())].clone()
                })
                .collect();
            let distinct: HashSet<&String> = items.iter().collect();
            if distinct.len() == n {
                picked = Some(items);
                break;
            }
        }
        let item_ids = picked.ok_or_else(|| {
            DataError::Sampling(format!(
                "no duplicate-free negative for {} after {MAX_ATTEMPTS} attempts",
                pos.outfit_id
            ))
        })?;
        out.push(Outfit {
            outfit_id: format!("{}-neg", pos.outfit_id),
            item_ids,
            label: Label::Incompatible,
            provenance: Provenance::SampledNegative,
        });
    }
    Ok(out)
}

/// The positives followed by one sampled negative each, the pool being the
/// positives themselves.
pub fn attach_negatives<R: Rng + ?Sized>(positives: Vec<Outfit>, rng: &mut R) -> Result<Vec<Outfit>, DataError> {
    let negatives = sample_negatives(&positives, &positives, rng)?;
    let mut all = positives;
    all.extend(negatives);
    Ok(all)
}
