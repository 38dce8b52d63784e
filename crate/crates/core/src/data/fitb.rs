//! Fill-in-the-blank queries: hold one item out of a positive outfit and
//! offer it among three same-category distractors from other outfits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{io_err, DataError, ItemCatalog, Label, Outfit};

pub const CANDIDATES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitbQuery {
    pub outfit_id: String,
    /// The outfit minus the held-out item.
    pub partial: Vec<String>,
    pub candidates: Vec<String>,
    pub answer_index: usize,
    pub category: String,
}

impl FitbQuery {
    pub fn answer(&self) -> &str {
        &self.candidates[self.answer_index]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FitbSkip {
    pub outfit_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FitbBuild {
    pub queries: Vec<FitbQuery>,
    pub skipped: Vec<FitbSkip>,
}

/// One query per positive outfit with at least 3 items (so the partial
/// outfit keeps 2). Distractors come from items of the held-out item's
/// category that appear in `outfits` but not in the query's outfit.
pub fn build_fitb<R: Rng + ?Sized>(outfits: &[Outfit], catalog: &ItemCatalog, rng: &mut R) -> FitbBuild {
    let category = |id: &str| catalog.get(id).and_then(|m| m.category.as_deref());
    let mut by_category: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for o in outfits {
        for id in &o.item_ids {
            if let Some(c) = category(id) {
                by_category.entry(c).or_default().insert(id);
            }
        }
    }
    let by_category: BTreeMap<&str, Vec<&str>> = by_category
        .into_iter()
        .map(|(c, s)| (c, s.into_iter().collect()))
        .collect();

    let mut build = FitbBuild::default();
    let skip = |o: &Outfit, reason: String| {
        log::debug!("fitb: skipping {}: {reason}", o.outfit_id);
        FitbSkip {
            outfit_id: o.outfit_id.clone(),
            reason,
        }
    };
    for o in outfits.iter().filter(|o| o.label == Label::Compatible) {
        if o.item_ids.len() < 3 {
            build
                .skipped
                .push(skip(o, format!("{} items; need at least 3", o.item_ids.len())));
            continue;
        }
        let held = rng.random_range(0..o.item_ids.len());
        let held_id = &o.item_ids[held];
        let Some(cat) = category(held_id) else {
            build.skipped.push(skip(o, format!("item {held_id} has no category")));
            continue;
        };
        let members: HashSet<&str> = o.item_ids.iter().map(String::as_str).collect();
        let pool: Vec<&str> = by_category[cat]
            .iter()
            .copied()
            .filter(|id| !members.contains(id))
            .collect();
        if pool.len() < CANDIDATES - 1 {
            build.skipped.push(skip(
                o,
                format!(
                    "category {cat} has {} distractor(s); need {}",
                    pool.len(),
                    CANDIDATES - 1
                ),
            ));
            continue;
        }
        let mut candidates: Vec<String> = index::sample(rng, pool.len(), CANDIDATES - 1)
            .iter()
            .map(|i| pool[i].to_string())
            .collect();
        candidates.push(held_id.clone());
        candidates.shuffle(rng);
        let answer_index = candidates.iter().position(|c| c == held_id).unwrap();
        let partial = o
            .item_ids
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != held)
            .map(|(_, id)| id.clone())
            .collect();
        build.queries.push(FitbQuery {
            outfit_id: o.outfit_id.clone(),
            partial,
            candidates,
            answer_index,
            category: cat.to_string(),
        });
    }
    build
}

pub fn write_fitb(path: impl AsRef<Path>, queries: &[FitbQuery]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut text = String::new();
    for q in queries {
        text.push_str(&serde_json::to_string(q).expect("queries serialise"));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn load_fitb(path: impl AsRef<Path>) -> Result<Vec<FitbQuery>, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let q: FitbQuery = serde_json::from_str(line).map_err(|e| DataError::Manifest {
            line: i + 1,
            message: e.to_string(),
        })?;
        if q.candidates.len() != CANDIDATES || q.answer_index >= CANDIDATES || q.partial.is_empty() {
            return Err(DataError::Manifest {
                line: i + 1,
                message: "a query needs 4 candidates, a valid answer index and a non-empty partial outfit".into(),
            });
        }
        out.push(q);
    }
    Ok(out)
}
