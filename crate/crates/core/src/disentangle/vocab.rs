use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Whitespace tokenizer over a closed word list. Id 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Builds a vocabulary; the unknown token is always placed first and
    /// duplicates keep their first position.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: BTreeMap::new(),
        };
        v.push(UNK);
        for t in tokens {
            v.push(t.as_ref());
        }
        v
    }

    fn push(&mut self, token: &str) {
        let token = token.trim().to_lowercase();
        if token.is_empty() || self.index.contains_key(&token) {
            return;
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
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

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(&word.to_lowercase()).copied().unwrap_or(UNK_ID)
    }

    pub fn tokenize(&self, caption: &str) -> Result<Vec<usize>> {
        let ids: Vec<usize> = caption.split_whitespace().map(|w| self.id(w)).collect();
        if ids.is_empty() {
            return Err(Error::EmptyCaption);
        }
        Ok(ids)
    }

    pub fn words(caption: &str) -> Vec<String> {
        caption.split_whitespace().map(|w| w.to_lowercase()).collect()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(&word.to_lowercase())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(text.lines().filter(|l| l.trim() != UNK))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_words_map_to_unk() {
        let v = Vocab::from_tokens(["dog", "red"]);
        assert_eq!(v.tokenize("red cat dog").unwrap(), alloc::vec![2, UNK_ID, 1]);
        assert!(matches!(v.tokenize("   "), Err(Error::EmptyCaption)));
    }

    #[test]
    fn text_round_trip() {
        let v = Vocab::from_tokens(["dog", "red", "dog"]);
        assert_eq!(v.len(), 3);
        assert_eq!(Vocab::from_text(&v.to_text()), v);
    }
}
