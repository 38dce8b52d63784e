//! Newline-delimited JSON outfit manifests.
//!
//! ```json
//! {"outfit_id":"o1","items":["a","b"],"label":1,"categories":["top","shoes"],"descriptions":["red shirt",["white","sneakers"]]}
//! ```
//! `label` defaults to 1. `categories` and `descriptions` are optional lists
//! parallel to `items`; a description is either raw text or a token list.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::tokenize;
use super::{io_err, DataError, ItemCatalog, ItemMeta, Label, Outfit, Provenance};

pub const DEFAULT_MAX_ITEMS: usize = 12;

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Description {
    Text(String),
    Tokens(Vec<String>),
}

impl Description {
    fn tokens(&self) -> Vec<String> {
        match self {
            Description::Text(t) => tokenize(t),
            Description::Tokens(ts) => ts.iter().flat_map(|t| tokenize(t)).collect(),
        }
    }
}

fn default_label() -> u8 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    outfit_id: String,
    items: Vec<String>,
    #[serde(default = "default_label")]
    label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptions: Option<Vec<Description>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub outfits: Vec<Outfit>,
    pub items: ItemCatalog,
}

fn merge_field<V: PartialEq>(slot: &mut Option<V>, new: Option<V>, item_id: &str) -> Result<(), DataError> {
    match (slot.as_ref(), new) {
        (Some(old), Some(new)) if *old != new => Err(DataError::InconsistentMetadata(item_id.to_string())),
        (None, Some(new)) => {
            *slot = Some(new);
            Ok(())
        }
        _ => Ok(()),
    }
}

fn merge(catalog: &mut ItemCatalog, item_id: &str, meta: ItemMeta) -> Result<(), DataError> {
    let entry = catalog.entry(item_id.to_string()).or_default();
    merge_field(&mut entry.category, meta.category, item_id)?;
    merge_field(&mut entry.tokens, meta.tokens, item_id)
}

/// Parses and validates manifest text. Blank lines are skipped; line numbers
/// in errors are 1-based.
pub fn parse_manifest(text: &str, max_items: usize) -> Result<Manifest, DataError> {
    let mut manifest = Manifest::default();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(raw).map_err(|e| DataError::Manifest {
            line,
            message: e.to_string(),
        })?;
        let label = Label::try_from(rec.label).map_err(|message| DataError::Manifest { line, message })?;
        let size = rec.items.len();
        if size < 2 {
            return Err(DataError::OutfitTooSmall {
                line,
                outfit_id: rec.outfit_id,
                size,
            });
        }
        if size > max_items {
            return Err(DataError::OutfitTooLarge {
                line,
                outfit_id: rec.outfit_id,
                size,
                max: max_items,
            });
        }
        let mut ids = HashSet::new();
        if let Some(dup) = rec.items.iter().find(|id| !ids.insert(id.as_str())) {
            return Err(DataError::Manifest {
                line,
                message: format!("item {dup} listed twice"),
            });
        }
        for (what, len) in [
            ("categories", rec.categories.as_ref().map(Vec::len)),
            ("descriptions", rec.descriptions.as_ref().map(Vec::len)),
        ] {
            if let Some(len) = len.filter(|&l| l != size) {
                return Err(DataError::Manifest {
                    line,
                    message: format!("{what} has {len} entries for {size} items"),
                });
            }
        }
        if !seen.insert(rec.outfit_id.clone()) {
            return Err(DataError::DuplicateOutfit {
                line,
                outfit_id: rec.outfit_id,
            });
        }
        for (k, item_id) in rec.items.iter().enumerate() {
            let meta = ItemMeta {
                category: rec.categories.as_ref().map(|c| c[k].clone()),
                tokens: rec.descriptions.as_ref().map(|d| d[k].tokens()),
            };
            merge(&mut manifest.items, item_id, meta)?;
        }
        let provenance = rec.provenance.unwrap_or(match label {
            Label::Compatible => Provenance::Positive,
            Label::Incompatible => Provenance::SampledNegative,
        });
        manifest.outfits.push(Outfit {
            outfit_id: rec.outfit_id,
            item_ids: rec.items,
            label,
            provenance,
        });
    }
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>, max_items: usize) -> Result<Manifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text, max_items)
}

/// Writes outfits with whatever per-item metadata `catalog` holds. A parallel
/// list is emitted only when every item of the outfit has that field.
pub fn write_manifest(path: impl AsRef<Path>, outfits: &[Outfit], catalog: &ItemCatalog) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    let empty = ItemMeta::default();
    for o in outfits {
        let metas: Vec<&ItemMeta> = o.item_ids.iter().map(|id| catalog.get(id).unwrap_or(&empty)).collect();
        let categories: Option<Vec<String>> = metas.iter().map(|m| m.category.clone()).collect();
        let descriptions: Option<Vec<Description>> = metas
            .iter()
            .map(|m| m.tokens.clone().map(Description::Tokens))
            .collect();
        let line = Line {
            outfit_id: o.outfit_id.clone(),
            items: o.item_ids.clone(),
            label: o.label.into(),
            categories,
            descriptions,
            provenance: Some(o.provenance),
        };
        serde_json::to_writer(&mut out, &line).expect("manifest lines serialise");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}
