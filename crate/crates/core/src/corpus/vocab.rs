use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Triplet;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_RESERVED: usize = 4;

/// Character vocabulary with four reserved ids (PAD, UNK, BOS, EOS).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<char>", into = "Vec<char>")]
pub struct Vocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

impl From<Vec<char>> for Vocab {
    fn from(chars: Vec<char>) -> Self {
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + NUM_RESERVED))
            .collect();
        Self { chars, index }
    }
}

impl From<Vocab> for Vec<char> {
    fn from(v: Vocab) -> Self {
        v.chars
    }
}

impl Vocab {
    /// Every source and short-title character is included; characters that
    /// occur only in queries need `min_count` query occurrences. Ids follow
    /// descending total frequency, then codepoint.
    pub fn build(triplets: &[Triplet], min_count: usize) -> Self {
        let mut total: BTreeMap<char, usize> = BTreeMap::new();
        let mut query_only: BTreeMap<char, usize> = BTreeMap::new();
        for t in triplets {
            for c in t.source.chars().chain(t.short_title.chars()) {
                *total.entry(c).or_default() += 1;
            }
        }
        for t in triplets {
            for c in t.query.chars() {
                if let Some(n) = total.get_mut(&c) {
                    *n += 1;
                } else {
                    *query_only.entry(c).or_default() += 1;
                }
            }
        }
        total.extend(query_only.into_iter().filter(|&(_, n)| n >= min_count));
        let mut ranked: Vec<(char, usize)> = total.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::from(ranked.into_iter().map(|(c, _)| c).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.chars.len() + NUM_RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn token(&self, id: usize) -> Option<char> {
        id.checked_sub(NUM_RESERVED).and_then(|i| self.chars.get(i).copied())
    }

    /// Ids for every character; unknown characters are an error.
    pub fn encode_strict(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| self.id(c).ok_or(Error::UnknownChar(c)))
            .collect()
    }

    /// Ids for every character, mapping unknowns to UNK.
    pub fn encode_lossy(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(c).unwrap_or(UNK)).collect()
    }

    /// Inverse of encoding; reserved ids are dropped.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().filter_map(|&i| self.token(i)).collect()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}
