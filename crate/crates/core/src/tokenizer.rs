//! Closed-vocabulary whitespace tokenizer with three reserved control tokens.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const UNK: u32 = 2;

pub const SPECIAL_TOKENS: [&str; 3] = ["<bos>", "<eos>", "<unk>"];

pub fn is_special(id: u32) -> bool {
    id <= UNK
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 4 {
            return Err(Error::Config(format!(
                "vocabulary needs at least 4 tokens, got {}",
                tokens.len()
            )));
        }
        for (i, want) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *want {
                return Err(Error::Config(format!(
                    "token {i} must be {want:?}, found {:?}",
                    tokens[i]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate token {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of every non-special token, in vocabulary order.
    pub fn word_ids(&self) -> std::ops::Range<u32> {
        (UNK + 1)..self.tokens.len() as u32
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.tokens)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let tokens: Vec<String> = serde_json::from_str(s)?;
        Self::from_tokens(tokens)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// A sequence of token ids: non-empty, BOS only at the front, EOS only at the end.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct TokenSeq(Vec<u32>);

impl TokenSeq {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidTokens("empty sequence".into()));
        }
        let last = ids.len() - 1;
        for (i, &id) in ids.iter().enumerate() {
            if id == BOS && i != 0 {
                return Err(Error::InvalidTokens(format!("BOS at position {i}")));
            }
            if id == EOS && i != last {
                return Err(Error::InvalidTokens(format!("EOS at position {i}")));
            }
        }
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The sequence without BOS/EOS/UNK.
    pub fn words(&self) -> Vec<u32> {
        self.0
            .iter()
            .copied()
            .filter(|&id| !is_special(id))
            .collect()
    }

    pub fn check_vocab(&self, size: usize) -> Result<()> {
        match self.0.iter().find(|&&id| id as usize >= size) {
            Some(&id) => Err(Error::InvalidTokenId { id, size }),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<u32>> for TokenSeq {
    type Error = Error;
    fn try_from(ids: Vec<u32>) -> Result<Self> {
        Self::new(ids)
    }
}

impl From<TokenSeq> for Vec<u32> {
    fn from(t: TokenSeq) -> Self {
        t.0
    }
}

/// Specials, then every whitespace-delimited word in order of first occurrence.
pub fn build_vocab(corpus_text: &str) -> Result<Vocab> {
    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    for word in corpus_text.split_whitespace() {
        if SPECIAL_TOKENS.contains(&word) {
            return Err(Error::InvalidTokens(format!(
                "reserved token {word:?} in corpus"
            )));
        }
        if seen.insert(word, ()).is_none() {
            tokens.push(word.to_string());
        }
    }
    if tokens.len() == SPECIAL_TOKENS.len() {
        return Err(Error::EmptyCorpus);
    }
    Vocab::from_tokens(tokens)
}

/// Whitespace split; out-of-vocabulary words map to UNK, and a literal special
/// string is treated as out-of-vocabulary text.
pub fn encode_text(v: &Vocab, text: &str) -> Result<TokenSeq> {
    let ids = text
        .split_whitespace()
        .map(|w| match v.id(w) {
            Some(id) if !is_special(id) => id,
            _ => UNK,
        })
        .collect();
    TokenSeq::new(ids)
}

pub fn decode_tokens(v: &Vocab, t: &TokenSeq) -> Result<String> {
    decode_ids(v, t.ids())
}

pub fn decode_ids(v: &Vocab, ids: &[u32]) -> Result<String> {
    let mut words = Vec::with_capacity(ids.len());
    for &id in ids {
        let tok = v
            .token(id)
            .ok_or(Error::InvalidTokenId { id, size: v.size() })?;
        if !is_special(id) {
            words.push(tok);
        }
    }
    Ok(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_vocab_orders_by_first_occurrence() {
        let v = build_vocab("a b a").unwrap();
        assert_eq!(v.size(), 5);
        assert_eq!(v.tokens()[3..], ["a".to_string(), "b".to_string()]);
        assert!(matches!(build_vocab(""), Err(Error::EmptyCorpus)));
        assert!(matches!(build_vocab("   \n"), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encode_and_decode() {
        let v = build_vocab("a b a").unwrap();
        assert_eq!(encode_text(&v, "a b").unwrap().ids(), &[3, 4]);
        assert_eq!(encode_text(&v, "a zzz").unwrap().ids(), &[3, UNK]);
        assert_eq!(encode_text(&v, "<bos> a").unwrap().ids(), &[UNK, 3]);
        assert_eq!(
            decode_tokens(&v, &TokenSeq::new(vec![3, 4]).unwrap()).unwrap(),
            "a b"
        );
        let framed = TokenSeq::new(vec![BOS, 3, EOS]).unwrap();
        assert_eq!(decode_tokens(&v, &framed).unwrap(), "a");
        let bad = TokenSeq::new(vec![3, 9]).unwrap();
        assert!(matches!(
            decode_tokens(&v, &bad),
            Err(Error::InvalidTokenId { id: 9, size: 5 })
        ));
    }

    #[test]
    fn token_seq_framing_rules() {
        assert!(TokenSeq::new(vec![]).is_err());
        assert!(TokenSeq::new(vec![3, BOS]).is_err());
        assert!(TokenSeq::new(vec![EOS, 3]).is_err());
        assert!(TokenSeq::new(vec![BOS, 3, 4, EOS]).is_ok());
        let t: std::result::Result<TokenSeq, _> = serde_json::from_str("[4, 0]");
        assert!(t.is_err());
    }

    #[test]
    fn vocab_json_roundtrip_rejects_bad_specials() {
        let v = build_vocab("x y z").unwrap();
        let back = Vocab::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(v, back);
        assert!(Vocab::from_json(r#"["a","<eos>","<unk>","b"]"#).is_err());
        assert!(Vocab::from_json(r#"["<bos>","<eos>","<unk>","b","b"]"#).is_err());
    }
}
