//! Triplet records, the character vocabulary and the synthetic generator.

mod synth;
mod triplet;
mod vocab;

pub use synth::{corpus_stats, generate_synthetic, CorpusStats, LengthTargets, SynthProfile};
pub use triplet::{
    format_triplets, parse_triplets, read_triplets, write_triplets, TermKind, TermTag, Triplet,
    MIN_SOURCE_LEN,
};
pub use vocab::{Vocab, BOS, EOS, NUM_RESERVED, PAD, UNK};
