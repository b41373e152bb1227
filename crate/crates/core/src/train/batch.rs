use crate::corpus::{Triplet, Vocab, PAD};
use crate::error::{Error, Result};
use crate::model::Example;

/// A triplet mapped to vocabulary ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub source: Vec<usize>,
    pub title: Vec<usize>,
    pub query: Vec<usize>,
}

/// Source and title characters must be in the vocabulary; unknown query
/// characters become UNK.
pub fn encode_triplet(vocab: &Vocab, t: &Triplet) -> Result<Encoded> {
    if let Some(ch) = t.extractive_violation() {
        return Err(Error::Contract(format!(
            "short title character {ch:?} does not occur in the source"
        )));
    }
    Ok(Encoded {
        source: vocab.encode_strict(&t.source)?,
        title: vocab.encode_strict(&t.short_title)?,
        query: vocab.encode_lossy(&t.query),
    })
}

/// Encodes every usable triplet and counts the ones skipped.
pub fn encode_dataset(vocab: &Vocab, triplets: &[Triplet]) -> (Vec<Encoded>, usize) {
    let mut out = Vec::with_capacity(triplets.len());
    let mut skipped = 0;
    for t in triplets {
        match encode_triplet(vocab, t) {
            Ok(e) => out.push(e),
            Err(err) => {
                log::warn!("skipping triplet {:?}: {err}", t.source);
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

/// Sources padded to a common width, with masks marking real positions.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub sources: Vec<Vec<usize>>,
    pub masks: Vec<Vec<bool>>,
    pub items: Vec<&'a Encoded>,
}

impl<'a> Batch<'a> {
    pub fn new(items: Vec<&'a Encoded>) -> Self {
        let width = items.iter().map(|e| e.source.len()).max().unwrap_or(0);
        Self::padded_to(items, width)
    }

    /// Pads every source to at least `width`.
    pub fn padded_to(items: Vec<&'a Encoded>, width: usize) -> Self {
        let mut sources = Vec::with_capacity(items.len());
        let mut masks = Vec::with_capacity(items.len());
        for e in &items {
            let w = width.max(e.source.len());
            let mut s = e.source.clone();
            s.resize(w, PAD);
            let mut m = vec![true; e.source.len()];
            m.resize(w, false);
            sources.push(s);
            masks.push(m);
        }
        Self { sources, masks, items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            source: &self.sources[i],
            mask: &self.masks[i],
            title: &self.items[i].title,
            query: &self.items[i].query,
        }
    }
}
