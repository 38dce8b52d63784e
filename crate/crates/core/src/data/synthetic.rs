//! Desk-scale stand-in for a real outfit corpus.
//!
//! Every (style, category) cell has a centroid drawn from N(0, I) in R^D. A
//! positive outfit picks one style and distinct categories, and each item is
//! its cell centroid plus N(0, σ²) noise. Descriptions name the style and the
//! category, so text carries the same signal as the features.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{
    attach_negatives, io_err, write_features, write_manifest, DataError, FeatureStore, ItemCatalog, ItemMeta, Label,
    Outfit, Provenance,
};
use crate::seed;

const STYLE_WORDS: [&str; 8] = [
    "bohemian", "classic", "sporty", "punk", "preppy", "minimal", "vintage", "street",
];
const CATEGORY_WORDS: [&str; 6] = ["top", "bottom", "shoes", "bag", "outerwear", "jewelry"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_styles: usize,
    pub feature_dim: usize,
    pub n_categories: usize,
    pub sigma: f64,
    pub min_size: usize,
    pub max_size: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_styles: 8,
            feature_dim: 32,
            n_categories: 6,
            sigma: 0.1,
            min_size: 2,
            max_size: 8,
            n_train: 5000,
            n_valid: 1000,
            n_test: 1000,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Config(m));
        if self.n_styles == 0 || self.feature_dim == 0 || self.n_categories == 0 {
            return bad("styles, feature dimension and categories must be positive".into());
        }
        if self.n_train == 0 || self.n_valid == 0 || self.n_test == 0 {
            return bad("every split needs at least one outfit".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if self.min_size < 2 || self.min_size > self.max_size {
            return bad(format!(
                "invalid outfit size range {}..={}",
                self.min_size, self.max_size
            ));
        }
        if self.min_size > self.n_categories {
            return bad(format!(
                "outfits hold one item per category, so min_size {} cannot exceed {} categories",
                self.min_size, self.n_categories
            ));
        }
        Ok(())
    }

    /// Largest outfit actually generated: one item per category.
    pub fn effective_max_size(&self) -> usize {
        self.max_size.min(self.n_categories)
    }
}

pub fn style_word(style: usize) -> String {
    STYLE_WORDS
        .get(style)
        .map_or_else(|| format!("style{style}"), |w| w.to_string())
}

pub fn category_word(category: usize) -> String {
    CATEGORY_WORDS
        .get(category)
        .map_or_else(|| format!("category{category}"), |w| w.to_string())
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub store: FeatureStore,
    pub catalog: ItemCatalog,
    /// Style index of every item.
    pub styles: BTreeMap<String, usize>,
    /// `[style][category][dim]`, flattened.
    pub centroids: Vec<f32>,
    /// Positives followed by their sampled negatives.
    pub train: Vec<Outfit>,
    pub valid: Vec<Outfit>,
    pub test: Vec<Outfit>,
}

impl SyntheticDataset {
    pub fn centroid(&self, style: usize, category: usize) -> &[f32] {
        let d = self.config.feature_dim;
        let at = (style * self.config.n_categories + category) * d;
        &self.centroids[at..at + d]
    }

    pub fn positives(split: &[Outfit]) -> Vec<Outfit> {
        split.iter().filter(|o| o.label == Label::Compatible).cloned().collect()
    }

    /// `features.frnf`, `{train,valid,test}.jsonl` and `styles.tsv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        write_features(&self.store, dir.join("features.frnf"))?;
        for (name, split) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            write_manifest(dir.join(format!("{name}.jsonl")), split, &self.catalog)?;
        }
        let mut styles = String::from("item_id\tstyle\n");
        for (id, s) in &self.styles {
            writeln!(styles, "{id}\t{s}").unwrap();
        }
        let path = dir.join("styles.tsv");
        fs::write(&path, styles).map_err(io_err(path))
    }
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset, DataError> {
    config.validate()?;
    let (k, c, d) = (config.n_styles, config.n_categories, config.feature_dim);
    let mut rng = seed::rng(config.seed, seed::SYNTHETIC);
    let centroids: Vec<f32> = (0..k * c * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();

    let mut store = FeatureStore::new(d);
    let mut catalog = ItemCatalog::new();
    let mut styles = BTreeMap::new();
    let mut next_item = 0usize;
    let max_size = config.effective_max_size();
    let mut make_split =
        |name: &str, count: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Result<Vec<Outfit>, DataError> {
            let mut outfits = Vec::with_capacity(count);
            for i in 0..count {
                let style = rng.random_range(0..k);
                let n = rng.random_range(config.min_size..=max_size);
                let cats = index::sample(rng, c, n);
                let mut item_ids = Vec::with_capacity(n);
                for cat in cats.iter() {
                    let id = format!("item{next_item:07}");
                    next_item += 1;
                    let base = &centroids[(style * c + cat) * d..(style * c + cat + 1) * d];
                    let x: Vec<f32> = base
                        .iter()
                        .map(|m| (f64::from(*m) + config.sigma * rng.sample::<f64, _>(StandardNormal)) as f32)
                        .collect();
                    store.push(id.clone(), &x)?;
                    catalog.insert(
                        id.clone(),
                        ItemMeta {
                            category: Some(category_word(cat)),
                            tokens: Some(vec![style_word(style), category_word(cat)]),
                        },
                    );
                    styles.insert(id.clone(), style);
                    item_ids.push(id);
                }
                outfits.push(Outfit {
                    outfit_id: format!("{name}{i:06}"),
                    item_ids,
                    label: Label::Compatible,
                    provenance: Provenance::Synthetic,
                });
            }
            Ok(outfits)
        };
    let train = make_split("train", config.n_train, &mut rng)?;
    let valid = make_split("valid", config.n_valid, &mut rng)?;
    let test = make_split("test", config.n_test, &mut rng)?;

    let with_negatives = |split: Vec<Outfit>, name: &str| {
        attach_negatives(
            split,
            &mut seed::rng(config.seed, &format!("{}.{name}", seed::NEGATIVES)),
        )
    };
    Ok(SyntheticDataset {
        config: config.clone(),
        store,
        catalog,
        styles,
        centroids,
        train: with_negatives(train, "train")?,
        valid: with_negatives(valid, "valid")?,
        test: with_negatives(test, "test")?,
    })
}

/// Fraction of outfits whose single-style / mixed-style status is recovered
/// by assigning every item to its nearest cell centroid.
pub fn nearest_centroid_accuracy(data: &SyntheticDataset, outfits: &[Outfit]) -> f64 {
    let (k, c) = (data.config.n_styles, data.config.n_categories);
    let nearest_style = |x: &[f32]| {
        let mut best = (f64::INFINITY, 0);
        for s in 0..k {
            for cat in 0..c {
                let dist: f64 = x
                    .iter()
                    .zip(data.centroid(s, cat))
                    .map(|(a, b)| (f64::from(*a) - f64::from(*b)).powi(2))
                    .sum();
                if dist < best.0 {
                    best = (dist, s);
                }
            }
        }
        best.1
    };
    let single = |styles: &[usize]| styles.windows(2).all(|w| w[0] == w[1]);
    let correct = outfits
        .iter()
        .filter(|o| {
            let truth: Vec<usize> = o.item_ids.iter().map(|id| data.styles[id]).collect();
            let guess: Vec<usize> = o
                .item_ids
                .iter()
                .map(|id| nearest_style(data.store.get(id).unwrap()))
                .collect();
            single(&truth) == single(&guess)
        })
        .count();
    correct as f64 / outfits.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_train: 200,
            n_valid: 50,
            n_test: 50,
            seed,
            ..Default::default()
        }
    }

    fn dist(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| f64::from(x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn shape_of_the_dataset() {
        let data = gen_synthetic(&small(1)).unwrap();
        assert_eq!(data.train.len(), 400);
        assert_eq!(data.valid.len(), 100);
        assert_eq!(data.test.len(), 100);
        for o in data.train.iter().chain(&data.valid).chain(&data.test) {
            assert!((2..=6).contains(&o.item_ids.len()));
            if o.label == Label::Compatible {
                let styles: HashSet<usize> = o.item_ids.iter().map(|i| data.styles[i]).collect();
                assert_eq!(styles.len(), 1);
                let cats: HashSet<&Option<String>> = o.item_ids.iter().map(|i| &data.catalog[i].category).collect();
                assert_eq!(cats.len(), o.item_ids.len());
            }
        }
        let tokens = data.catalog.values().next().unwrap().tokens.clone().unwrap();
        assert_eq!(tokens.len(), 2);
    }

    #[test]
    fn seeded() {
        let a = gen_synthetic(&small(7)).unwrap();
        let b = gen_synthetic(&small(7)).unwrap();
        assert_eq!(a.store.to_bytes(), b.store.to_bytes());
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        let c = gen_synthetic(&small(8)).unwrap();
        assert_ne!(a.store.to_bytes(), c.store.to_bytes());
    }

    #[test]
    fn zero_noise_collapses_cells() {
        let data = gen_synthetic(&SyntheticConfig { sigma: 0.0, ..small(2) }).unwrap();
        for (id, x) in data.store.iter() {
            let style = data.styles[id];
            let cat = CATEGORY_WORDS
                .iter()
                .position(|w| Some(*w) == data.catalog[id].category.as_deref())
                .unwrap();
            assert_eq!(x, data.centroid(style, cat));
        }
    }

    #[test]
    fn same_style_distance_follows_centroids() {
        let data = gen_synthetic(&small(3)).unwrap();
        let o = data.train.iter().find(|o| o.label == Label::Compatible).unwrap();
        let (a, b) = (&o.item_ids[0], &o.item_ids[1]);
        let ca = CATEGORY_WORDS
            .iter()
            .position(|w| Some(*w) == data.catalog[a].category.as_deref())
            .unwrap();
        let cb = CATEGORY_WORDS
            .iter()
            .position(|w| Some(*w) == data.catalog[b].category.as_deref())
            .unwrap();
        let s = data.styles[a];
        let centroid_gap = dist(data.centroid(s, ca), data.centroid(s, cb));
        let item_gap = dist(data.store.get(a).unwrap(), data.store.get(b).unwrap());
        // noise moves each item by about σ·√D ≈ 0.57
        assert!((item_gap - centroid_gap).abs() < 2.0, "{item_gap} vs {centroid_gap}");
        assert!(centroid_gap > 4.0);
    }

    #[test]
    fn styles_are_separable_by_nearest_centroid() {
        let data = gen_synthetic(&small(4)).unwrap();
        let all: Vec<Outfit> = data.train.iter().chain(&data.test).cloned().collect();
        assert!(nearest_centroid_accuracy(&data, &all) > 0.9);
    }

    #[test]
    fn rejects_bad_config() {
        for c in [
            SyntheticConfig {
                n_styles: 0,
                ..small(0)
            },
            SyntheticConfig {
                sigma: -1.0,
                ..small(0)
            },
            SyntheticConfig {
                min_size: 1,
                ..small(0)
            },
            SyntheticConfig {
                min_size: 7,
                max_size: 8,
                ..small(0)
            },
            SyntheticConfig { n_test: 0, ..small(0) },
        ] {
            assert!(gen_synthetic(&c).is_err());
        }
    }
}
