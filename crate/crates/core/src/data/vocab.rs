use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{io_err, DataError};
use crate::tensor::Scalar;

pub const DEFAULT_VOCAB_SIZE: usize = 5000;
pub const DEFAULT_MIN_COUNT: usize = 2;

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Dense token ↔ index mapping.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DataError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains('\n') {
                return Err(DataError::Config(format!("invalid vocabulary token at index {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(DataError::Config(format!("duplicate vocabulary token {t}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> Option<&str> {
        self.tokens.get(i).map(String::as_str)
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Multi-hot presence vector: 1 at every in-vocabulary token, repeats and
    /// unknown tokens ignored.
    pub fn encode<T: Scalar, S: AsRef<str>>(&self, tokens: &[S]) -> Vec<T> {
        let mut d = vec![T::zero(); self.len()];
        for t in tokens {
            if let Some(i) = self.lookup(t.as_ref()) {
                d[i] = T::one();
            }
        }
        d
    }

    /// One token per line; the index is the line number.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut text = String::new();
        for t in &self.tokens {
            text.push_str(t);
            text.push('\n');
        }
        fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_tokens(text.lines().map(str::to_string).collect()).map_err(|e| DataError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Keeps the `max_size` most frequent tokens occurring at least `min_count`
/// times; equal counts are ordered lexicographically.
pub fn build_vocabulary<I, D, S>(docs: I, max_size: usize, min_count: usize) -> Vocabulary
where
    I: IntoIterator<Item = D>,
    D: AsRef<[S]>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in docs {
        for t in doc.as_ref() {
            *counts.entry(t.as_ref().to_string()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t).collect()).expect("tokens are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenizer_rule() {
        assert_eq!(tokenize("Red-Dress 2019"), vec!["red", "dress", "2019"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" -- ").is_empty());
    }

    #[test]
    fn counting_and_min_count() {
        let docs: Vec<Vec<String>> = ["Red Dress", "red shoes"].iter().map(|d| tokenize(d)).collect();
        let all = build_vocabulary(&docs, 10, 1);
        assert_eq!(all.tokens(), &["red", "dress", "shoes"]);
        let common = build_vocabulary(&docs, 10, 2);
        assert_eq!(common.tokens(), &["red"]);
    }

    #[test]
    fn ties_break_lexicographically() {
        let docs = vec![vec!["zeta", "alpha", "mid"]];
        let v = build_vocabulary(&docs, 2, 1);
        assert_eq!(v.tokens(), &["alpha", "mid"]);
    }

    #[test]
    fn empty_corpus() {
        let docs: Vec<Vec<String>> = vec![];
        assert!(build_vocabulary(&docs, 5, 1).is_empty());
    }

    #[test]
    fn encoding() {
        let v = Vocabulary::from_tokens(vec!["red".into(), "dress".into(), "shoes".into()]).unwrap();
        assert_eq!(v.encode::<f32, &str>(&[]), vec![0.0; 3]);
        assert_eq!(v.encode::<f32, _>(&["red", "red"]), vec![1.0, 0.0, 0.0]);
        assert_eq!(v.encode::<f32, _>(&["hat", "scarf"]), vec![0.0; 3]);
        for i in 0..v.len() {
            assert_eq!(v.lookup(v.token(i).unwrap()), Some(i));
        }
    }

    #[test]
    fn deterministic_on_large_corpus() {
        let words = [
            "red", "blue", "silk", "denim", "boot", "scarf", "linen", "wool", "tan", "grey",
        ];
        let docs: Vec<Vec<String>> = (0..10_000)
            .map(|i: usize| {
                (0..(i % 5 + 1))
                    .map(|k| words[(i * 7 + k * 3) % words.len()].to_string())
                    .collect()
            })
            .collect();
        let a = build_vocabulary(&docs, 6, 2);
        let b = build_vocabulary(&docs, 6, 2);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::from_tokens(vec!["a".into(), "b".into()]).unwrap();
        v.save(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a\nb\n");
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
    }

    proptest! {
        #[test]
        fn popcount_is_distinct_in_vocab_tokens(doc in prop::collection::vec("[a-f]{1,2}", 0..30)) {
            let v = Vocabulary::from_tokens(["a", "b", "c", "ab", "cd"].iter().map(|s| s.to_string()).collect()).unwrap();
            let d: Vec<f64> = v.encode(&doc);
            let distinct: std::collections::HashSet<&String> = doc.iter().filter(|t| v.lookup(t).is_some()).collect();
            prop_assert_eq!(d.iter().filter(|x| **x == 1.0).count(), distinct.len());
            prop_assert!(d.iter().all(|x| *x == 0.0 || *x == 1.0));
        }
    }
}
