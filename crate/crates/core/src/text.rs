//! Whitespace tokenization and the narration vocabulary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

/// Lowercase, split on whitespace, strip surrounding punctuation (apostrophes survive).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Token to row index; every unknown token shares the out-of-vocabulary row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocab {
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let tokens: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        Self {
            index: tokens.into_iter().enumerate().map(|(i, t)| (t, i)).collect(),
        }
    }

    pub fn from_map(index: BTreeMap<String, usize>) -> Result<Self> {
        let n = index.len();
        let mut seen = vec![false; n];
        for &i in index.values() {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Config(format!(
                    "vocabulary indices must be a permutation of 0..{n}"
                )));
            }
        }
        Ok(Self { index })
    }

    /// Number of known tokens (the OOV row is extra).
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn oov(&self) -> usize {
        self.index.len()
    }

    /// Rows needed by an embedding table over this vocabulary.
    pub fn table_rows(&self) -> usize {
        self.index.len() + 1
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.oov())
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.lookup(t)).collect()
    }

    pub fn as_map(&self) -> &BTreeMap<String, usize> {
        &self.index
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.index)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_map(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_strips_punctuation_keeps_apostrophes() {
        assert_eq!(tokenize("Now, I'm going  to CUT it!"), ["now", "i'm", "going", "to", "cut", "it"]);
        assert!(tokenize(" ... ").is_empty());
    }

    #[test]
    fn unknown_tokens_share_oov() {
        let v = Vocab::build(["take a closer look", "a wide shot"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.lookup("zebra"), v.oov());
        assert_eq!(v.lookup("unicorn"), v.oov());
        assert_ne!(v.lookup("closer"), v.oov());
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.json");
        let v = Vocab::build(["one two three"]);
        v.save(&p).unwrap();
        assert_eq!(Vocab::load(&p).unwrap(), v);
        std::fs::write(&p, r#"{"a":0,"b":0}"#).unwrap();
        assert!(Vocab::load(&p).is_err());
    }
}
