//! The FRNC checkpoint container.
//!
//! ```text
//! magic "FRNC" | version u16 = 1 | reserved u16 = 0
//! header_len u32 | header (JSON: model config, train config, vocabulary)
//! tensor_count u32
//! tensor_count × [ name_len u16 | name | ndim u16 | ndim × u64 | f32 data ]
//! ```
//! Little-endian throughout; tensors follow the model layout order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::data::Vocabulary;
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FRNC";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams<f32>,
    pub train: TrainConfig,
    pub vocab: Option<Vocabulary>,
}

impl Checkpoint {
    /// Fails unless the stored model is (or is not) visual-semantic.
    pub fn require_vse(&self, vse: bool) -> Result<(), TrainError> {
        match (self.params.config().vse_enabled, vse) {
            (true, false) => Err(TrainError::Config(
                "checkpoint holds a visual-semantic model; a features-only scorer cannot use it".into(),
            )),
            (false, true) => Err(TrainError::Config(
                "checkpoint holds a features-only model; it has no text projection".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    vocab: Option<Vec<String>>,
}

pub fn write_checkpoint(params: &ModelParams<f32>, train: &TrainConfig, vocab: Option<&Vocabulary>) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        model: params.config().clone(),
        train: train.clone(),
        vocab: vocab.map(|v| v.tokens().to_vec()),
    })
    .expect("header serialises");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(params.tensors().len() as u32).to_le_bytes());
    for (name, t) in params.names().iter().zip(params.tensors()) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u16).to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated while reading {what}"))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn parse(bytes: &[u8]) -> Result<Checkpoint, String> {
    let mut r = Reader { bytes, at: 0 };
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(format!("not a checkpoint: magic {magic:?}"));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    r.u16("reserved")?;
    let header_len = r.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?).map_err(|e| format!("header: {e}"))?;
    header.model.validate().map_err(|e| format!("header: {e}"))?;
    let layout = header.model.layout();
    let count = r.u32("tensor count")? as usize;
    if count != layout.len() {
        return Err(format!("{count} tensors stored; the model layout has {}", layout.len()));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in &layout {
        let len = r.u16("tensor name")? as usize;
        let stored = String::from_utf8_lossy(r.take(len, "tensor name")?).into_owned();
        if &stored != name {
            return Err(format!("expected tensor {name}, found {stored}"));
        }
        let ndim = r.u16(name)? as usize;
        let dims = (0..ndim)
            .map(|_| r.u64(name).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(format!(
                "tensor {name}: shape header {dims:?} disagrees with the layout {shape:?}"
            ));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4, name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(dims, data).map_err(|e| format!("tensor {name}: {e}"))?);
    }
    if r.at != bytes.len() {
        return Err(format!("{} unexpected trailing bytes", bytes.len() - r.at));
    }
    let vocab = match header.vocab {
        Some(tokens) => Some(Vocabulary::from_tokens(tokens).map_err(|e| format!("vocabulary: {e}"))?),
        None => None,
    };
    if header.model.vse_enabled && vocab.as_ref().map(Vocabulary::len) != Some(header.model.vocab_size) {
        return Err("a visual-semantic checkpoint must carry a vocabulary of vocab_size tokens".into());
    }
    let params = ModelParams::from_tensors(header.model, tensors).map_err(|e| e.to_string())?;
    Ok(Checkpoint {
        params,
        train: header.train,
        vocab,
    })
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, TrainError> {
    parse(bytes).map_err(|message| TrainError::Checkpoint {
        path: "<memory>".into(),
        message,
    })
}

pub fn save_checkpoint(
    params: &ModelParams<f32>,
    train: &TrainConfig,
    vocab: Option<&Vocabulary>,
    path: impl AsRef<Path>,
) -> Result<(), TrainError> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(params, train, vocab)).map_err(|e| TrainError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, TrainError> {
    let path = path.as_ref();
    let fail = |message: String| TrainError::Checkpoint {
        path: path.display().to_string(),
        message,
    };
    let bytes = fs::read(path).map_err(|e| fail(e.to_string()))?;
    parse(&bytes).map_err(fail)
}
