//! Item features, outfit manifests, description vocabulary, negative
//! sampling, splits, fill-in-the-blank queries and the synthetic generator.

mod features;
mod fitb;
mod manifest;
mod resolve;
mod sampling;
mod split;
mod synthetic;
mod vocab;

pub use features::{
    read_features, write_features, write_records, FeatureStore, ItemRecord, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use fitb::{build_fitb, load_fitb, write_fitb, FitbBuild, FitbQuery, FitbSkip, CANDIDATES};
pub use manifest::{load_manifest, parse_manifest, write_manifest, Manifest, DEFAULT_MAX_ITEMS};
pub use resolve::{Example, ItemResolver};
pub use sampling::{attach_negatives, sample_negatives};
pub use split::{split_dataset, SplitRatios, Splits};
pub use synthetic::{
    category_word, gen_synthetic, nearest_centroid_accuracy, style_word, SyntheticConfig, SyntheticDataset,
};
pub use vocab::{build_vocabulary, tokenize, Vocabulary, DEFAULT_MIN_COUNT, DEFAULT_VOCAB_SIZE};

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a feature file: magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u16),
    #[error("feature file truncated in header")]
    TruncatedHeader,
    #[error("feature file truncated in record {0}")]
    Truncated(usize),
    #[error("record {0}: item id is not valid UTF-8")]
    InvalidId(usize),
    #[error("{0} unexpected bytes after the last record")]
    TrailingBytes(usize),
    #[error("duplicate item id {0}")]
    DuplicateId(String),
    #[error("item {item_id}: feature dimension {actual}, store dimension {expected}")]
    Dimension {
        item_id: String,
        expected: usize,
        actual: usize,
    },
    #[error("item id longer than 65535 bytes: {0}")]
    IdTooLong(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("manifest line {line}: duplicate outfit id {outfit_id}")]
    DuplicateOutfit { line: usize, outfit_id: String },
    #[error("manifest line {line}: outfit {outfit_id} has {size} item(s); outfits need at least 2")]
    OutfitTooSmall {
        line: usize,
        outfit_id: String,
        size: usize,
    },
    #[error("manifest line {line}: outfit {outfit_id} has {size} items; the limit is {max}")]
    OutfitTooLarge {
        line: usize,
        outfit_id: String,
        size: usize,
        max: usize,
    },
    #[error("item {0}: conflicting category or description across outfits")]
    InconsistentMetadata(String),
    #[error("item {0} is not in the feature store")]
    MissingItem(String),
    #[error("negative sampling: {0}")]
    Sampling(String),
    #[error("invalid split ratios: {0}")]
    Split(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
    let path = path.into();
    move |source| DataError::Io { path, source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Incompatible,
    Compatible,
}

impl Label {
    /// Class index: 0 incompatible, 1 compatible.
    pub fn class(self) -> usize {
        match self {
            Label::Incompatible => 0,
            Label::Compatible => 1,
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.class() as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Label::Incompatible),
            1 => Ok(Label::Compatible),
            other => Err(format!("label must be 0 or 1, got {other}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Positive,
    SampledNegative,
    Synthetic,
}

/// A set of items with a compatibility label. Item order is kept as ingested
/// but carries no meaning.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outfit {
    pub outfit_id: String,
    pub item_ids: Vec<String>,
    pub label: Label,
    pub provenance: Provenance,
}

/// Per-item metadata carried by manifests.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ItemMeta {
    pub category: Option<String>,
    pub tokens: Option<Vec<String>>,
}

pub type ItemCatalog = BTreeMap<String, ItemMeta>;
