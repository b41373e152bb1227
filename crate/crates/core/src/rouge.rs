//! Character-level ROUGE-1, ROUGE-2 and ROUGE-L.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    /// Score from an overlap count and the two denominators; empty
    /// denominators give zero.
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |d: usize| if d == 0 { 0.0 } else { overlap as f64 / d as f64 };
        let (p, r) = (ratio(candidate_total), ratio(reference_total));
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Self {
            precision: p,
            recall: r,
            f1,
        }
    }
}

fn ngram_counts<T: Ord>(xs: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut out = BTreeMap::new();
    if n > 0 && xs.len() >= n {
        for w in xs.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Ord>(candidate: &[T], reference: &[T], n: usize) -> RougeScore {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    RougeScore::from_counts(overlap, c.values().sum(), r.values().sum())
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// ROUGE-1, ROUGE-2 and ROUGE-L for one pair or averaged over a corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeSet {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

pub fn score_pair(candidate: &str, reference: &str) -> RougeSet {
    let c: Vec<char> = candidate.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    RougeSet {
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: rouge_l(&c, &r),
    }
}

/// Unweighted mean of per-pair scores over `(candidate, reference)` pairs.
pub fn corpus_rouge<S: AsRef<str>, R: AsRef<str>>(pairs: &[(S, R)]) -> Result<RougeSet> {
    if pairs.is_empty() {
        return Err(Error::Contract("cannot score an empty corpus".into()));
    }
    let n = pairs.len() as f64;
    let mut acc = [[0.0f64; 3]; 3];
    for (c, r) in pairs {
        let s = score_pair(c.as_ref(), r.as_ref());
        for (row, sc) in acc.iter_mut().zip([s.rouge1, s.rouge2, s.rouge_l]) {
            row[0] += sc.precision;
            row[1] += sc.recall;
            row[2] += sc.f1;
        }
    }
    let mean = |row: [f64; 3]| RougeScore {
        precision: row[0] / n,
        recall: row[1] / n,
        f1: row[2] / n,
    };
    Ok(RougeSet {
        rouge1: mean(acc[0]),
        rouge2: mean(acc[1]),
        rouge_l: mean(acc[2]),
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// One row per metric with precision, recall and F1 in percent.
pub fn format_table(s: &RougeSet) -> String {
    let mut out = String::from("metric\tprecision\trecall\tf1\n");
    for (name, sc) in [("ROUGE-1", s.rouge1), ("ROUGE-2", s.rouge2), ("ROUGE-L", s.rouge_l)] {
        let _ = writeln!(out, "{name}\t{}\t{}\t{}", pct(sc.precision), pct(sc.recall), pct(sc.f1));
    }
    out
}

/// Method-comparison layout: one row per method with F1 and recall of
/// each metric in percent.
pub fn format_comparison(rows: &[(String, RougeSet)]) -> String {
    let mut out = String::from("method\tR1-F1\tR2-F1\tRL-F1\tR1-R\tR2-R\tRL-R\n");
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}",
            pct(s.rouge1.f1),
            pct(s.rouge2.f1),
            pct(s.rouge_l.f1),
            pct(s.rouge1.recall),
            pct(s.rouge2.recall),
            pct(s.rouge_l.recall)
        );
    }
    out
}
