use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
/// Separates a prompt from its completion.
pub const SEP: u32 = 4;
/// Detection answer tokens.
pub const VULN: u32 = 5;
pub const SAFE: u32 = 6;

pub const SPECIALS: [&str; 7] = ["<pad>", "<bos>", "<eos>", "<unk>", "<sep>", "<vuln>", "<safe>"];

/// Token ↔ id bijection with the special tokens at fixed low ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = String;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err("vocabulary must start with the special tokens".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(format!("duplicate vocabulary entry `{t}`"));
            }
        }
        Ok(Vocab { tokens, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Specials followed by the most frequent tokens, at most `max_size`
    /// entries in total. Frequency ties break lexicographically.
    pub fn build<'a>(documents: impl IntoIterator<Item = &'a [String]>, max_size: usize) -> Vocab {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for doc in documents {
            for t in doc {
                if !SPECIALS.contains(&t.as_str()) {
                    *counts.entry(t.as_str()).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(
            ranked
                .into_iter()
                .take(max_size.saturating_sub(SPECIALS.len()))
                .map(|(t, _)| t.to_string()),
        );
        Vocab::try_from(tokens).expect("specials first, entries unique")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or("<unk>")).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn frequency_then_lexicographic() {
        let docs = [toks("b a c a b"), toks("d a")];
        let v = Vocab::build(docs.iter().map(Vec::as_slice), 11);
        assert_eq!(&v.tokens()[7..], ["a", "b", "c", "d"]);
        assert_eq!(v.id("a"), 7);
        assert_eq!(v.id("zzz"), UNK);
        let small = Vocab::build(docs.iter().map(Vec::as_slice), 8);
        assert_eq!(small.len(), 8);
        assert_eq!(small.decode(&small.encode(&["a", "b"])), ["a", "<unk>"]);
    }

    #[test]
    fn bijective_serde() {
        let docs = [toks("x y z")];
        let v = Vocab::build(docs.iter().map(Vec::as_slice), 64);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i as u32);
        }
        let json = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vocab>(&json).unwrap(), v);
        assert!(serde_json::from_str::<Vocab>("[\"a\"]").is_err());
    }
}
