use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const NUM: u32 = 2;
pub const STR: u32 = 3;
pub const REMOVED: u32 = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const NUM_TOKEN: &str = "<num>";
pub const STR_TOKEN: &str = "<str>";
pub const REMOVED_TOKEN: &str = "<removed>";

const RESERVED: [&str; 5] = [PAD_TOKEN, UNK_TOKEN, NUM_TOKEN, STR_TOKEN, REMOVED_TOKEN];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Test and source method names.
    Names,
    /// Mutated statement, before and after fragments.
    Code,
}

/// Token-to-index map with the reserved entries at fixed positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabRepr", into = "VocabRepr")]
pub struct Vocabulary {
    channel: Channel,
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    channel: Channel,
    tokens: Vec<String>,
}

impl From<VocabRepr> for Vocabulary {
    fn from(r: VocabRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            channel: r.channel,
            tokens: r.tokens,
            index,
        }
    }
}

impl From<Vocabulary> for VocabRepr {
    fn from(v: Vocabulary) -> Self {
        VocabRepr {
            channel: v.channel,
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary from token counts. Tokens seen at least
    /// `min_count` times are admitted, most frequent first, ties broken
    /// lexicographically.
    pub fn from_counts(channel: Channel, counts: &BTreeMap<String, usize>, min_count: usize) -> Self {
        let mut admitted: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, &c)| c >= min_count.max(1) && !RESERVED.contains(&t.as_str()))
            .map(|(t, &c)| (t, c))
            .collect();
        admitted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = RESERVED
            .iter()
            .map(|s| s.to_string())
            .chain(admitted.into_iter().map(|(t, _)| t.clone()))
            .collect();
        VocabRepr { channel, tokens }.into()
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Index of `token`, or [`UNK`].
    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Maps tokens to indices with UNK fallback, keeping at most `max_len`
/// leading tokens.
pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.lookup(t.as_ref()))
        .collect()
}
