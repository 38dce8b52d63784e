//! The FRNF feature file.
//!
//! ```text
//! magic "FRNF" | version u16 = 1 | reserved u16 = 0 | dim u32 | count u64
//! count × [ id_len u16 | id (UTF-8) | dim × f32 ]
//! ```
//! All integers and floats are little-endian.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{io_err, DataError};

pub const FEATURE_MAGIC: &[u8; 4] = b"FRNF";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ItemRecord {
    pub item_id: String,
    pub x: Vec<f32>,
    pub category: Option<String>,
    pub description: Option<Vec<String>>,
}

impl ItemRecord {
    pub fn new(item_id: impl Into<String>, x: Vec<f32>) -> Self {
        Self {
            item_id: item_id.into(),
            x,
            category: None,
            description: None,
        }
    }
}

/// Id-addressable feature vectors of uniform dimension. Immutable once built.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn from_records(records: &[ItemRecord]) -> Result<Self, DataError> {
        let dim = records.first().map_or(0, |r| r.x.len());
        let mut store = Self::new(dim);
        for r in records {
            store.push(r.item_id.clone(), &r.x)?;
        }
        Ok(store)
    }

    pub fn push(&mut self, item_id: String, x: &[f32]) -> Result<(), DataError> {
        if x.len() != self.dim {
            return Err(DataError::Dimension {
                item_id,
                expected: self.dim,
                actual: x.len(),
            });
        }
        if item_id.len() > u16::MAX as usize {
            return Err(DataError::IdTooLong(item_id));
        }
        if self.index.contains_key(&item_id) {
            return Err(DataError::DuplicateId(item_id));
        }
        self.index.insert(item_id.clone(), self.ids.len());
        self.ids.push(item_id);
        self.data.extend_from_slice(x);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, item_id: &str) -> bool {
        self.index.contains_key(item_id)
    }

    pub fn get(&self, item_id: &str) -> Option<&[f32]> {
        self.index
            .get(item_id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(move |(i, id)| (id.as_str(), &self.data[i * self.dim..(i + 1) * self.dim]))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4 + self.ids.len() * 10);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        for (id, x) in self.iter() {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in x {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        if bytes.len() < 4 {
            return Err(DataError::TruncatedHeader);
        }
        if &bytes[..4] != FEATURE_MAGIC {
            return Err(DataError::BadMagic(bytes[..4].try_into().unwrap()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(DataError::TruncatedHeader);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FEATURE_VERSION {
            return Err(DataError::UnsupportedVersion(version));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;

        let mut store = Self::new(dim);
        let mut pos = HEADER_LEN;
        let mut x = vec![0f32; dim];
        for record in 0..count {
            let take = |pos: &mut usize, n: usize| -> Result<&[u8], DataError> {
                let end = pos
                    .checked_add(n)
                    .filter(|&e| e <= bytes.len())
                    .ok_or(DataError::Truncated(record))?;
                let s = &bytes[*pos..end];
                *pos = end;
                Ok(s)
            };
            let id_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
            let id = std::str::from_utf8(take(&mut pos, id_len)?).map_err(|_| DataError::InvalidId(record))?;
            let raw = take(&mut pos, dim * 4)?;
            for (v, chunk) in x.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            store.push(id.to_string(), &x)?;
        }
        if pos != bytes.len() {
            return Err(DataError::TrailingBytes(bytes.len() - pos));
        }
        Ok(store)
    }
}

pub fn write_features(store: &FeatureStore, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(io_err(path))
}

/// Writes `records` (uniform dimension, unique ids) as an FRNF file.
pub fn write_records(records: &[ItemRecord], path: impl AsRef<Path>) -> Result<(), DataError> {
    write_features(&FeatureStore::from_records(records)?, path)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureStore, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    FeatureStore::from_bytes(&bytes)
}
