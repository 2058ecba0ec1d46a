use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use crate::encoder::{NUM_RESERVED_IDS, SEQ_START_ID, UNK_ID};

const RESERVED: [&str; NUM_RESERVED_IDS] = ["<pad>", "<unk>", "<s>"];

/// Token ↔ id mapping. Ids 0, 1 and 2 are padding, unknown and sequence
/// start; corpus tokens follow in (frequency desc, token asc) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn build<S: AsRef<str>>(corpus: &[S], min_count: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in corpus {
            for tok in tokenize(text.as_ref()) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count.max(1) && !RESERVED.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .collect();
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, ids }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Sequence-start id followed by the token ids, truncated to `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<usize> {
        core::iter::once(SEQ_START_ID)
            .chain(tokenize(text).iter().map(|t| self.id(t)))
            .take(max_len)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn frequency_then_lexical_order() {
        let v = Vocabulary::build(&["a a b"], 1);
        assert_eq!(v.id("a"), 3);
        assert_eq!(v.id("b"), 4);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn min_count_drops_rare_tokens() {
        let v = Vocabulary::build(&["a a b"], 2);
        assert_eq!(v.id("b"), UNK_ID);
        assert_eq!(v.encode("b", 8), vec![SEQ_START_ID, UNK_ID]);
    }

    #[test]
    fn deterministic() {
        let corpus = ["the cat sat", "the dog sat down"];
        assert_eq!(Vocabulary::build(&corpus, 1), Vocabulary::build(&corpus, 1));
    }

    #[test]
    fn encode_truncates() {
        let v = Vocabulary::build(&["x y z"], 1);
        assert_eq!(v.encode("x y z", 3).len(), 3);
    }
}
