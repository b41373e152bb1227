//! Non-neural compressors: prefix truncation and weighted term selection
//! under a character budget.

use serde::{Deserialize, Serialize};

use crate::corpus::{TermKind, Triplet};
use crate::error::{Error, Result};

/// Longest token prefix whose total character count fits in `limit`.
pub fn truncate<S: AsRef<str>>(tokens: &[S], limit: usize) -> Vec<&str> {
    let mut used = 0;
    let mut out = Vec::new();
    for t in tokens {
        let len = t.as_ref().chars().count();
        if used + len > limit {
            break;
        }
        used += len;
        out.push(t.as_ref());
    }
    out
}

/// Truncates a triplet's source over its tagged terms, or over characters
/// when it has no tags.
pub fn truncate_title(t: &Triplet, limit: usize) -> String {
    match t.terms() {
        Some(terms) => {
            let texts: Vec<&str> = terms.iter().map(|(s, _)| s.as_str()).collect();
            truncate(&texts, limit).concat()
        }
        None => t.source.chars().take(limit).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub text: String,
    pub kind: TermKind,
    pub weight: f64,
    pub cost: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpInstance {
    pub terms: Vec<WeightedTerm>,
    pub budget: usize,
}

/// Base weight per term kind and a per-index decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TermWeights {
    pub product: f64,
    pub brand: f64,
    pub modifier: f64,
    pub other: f64,
    pub decay: f64,
}

impl Default for TermWeights {
    fn default() -> Self {
        Self {
            product: 3.0,
            brand: 2.0,
            modifier: 1.0,
            other: 0.5,
            decay: 0.01,
        }
    }
}

impl TermWeights {
    fn base(&self, k: TermKind) -> f64 {
        match k {
            TermKind::Product => self.product,
            TermKind::Brand => self.brand,
            TermKind::Modifier => self.modifier,
            TermKind::Other => self.other,
        }
    }

    /// Decay per index, shrunk on long inputs so the total decay stays
    /// below half the smallest gap between the product, brand and modifier
    /// weights.
    fn step(&self, n: usize) -> f64 {
        let gap = (self.product - self.brand).min(self.brand - self.modifier);
        if n == 0 {
            return self.decay;
        }
        self.decay.min(0.5 * gap / n as f64)
    }
}

pub fn heuristic_weights(terms: &[(String, TermKind)]) -> Vec<WeightedTerm> {
    weigh_terms(terms, &TermWeights::default())
}

/// `base(kind) - step · index`.
pub fn weigh_terms(terms: &[(String, TermKind)], w: &TermWeights) -> Vec<WeightedTerm> {
    let step = w.step(terms.len());
    terms
        .iter()
        .enumerate()
        .map(|(i, (text, kind))| WeightedTerm {
            text: text.clone(),
            kind: *kind,
            weight: w.base(*kind) - step * i as f64,
            cost: text.chars().count(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlpSolution {
    /// Selected term indices in source order.
    pub selected: Vec<usize>,
    pub value: f64,
    pub cost: usize,
    /// The product rule could not be met and was dropped.
    pub relaxed: bool,
}

impl IlpSolution {
    pub fn text(&self, inst: &IlpInstance) -> String {
        self.selected.iter().map(|&i| inst.terms[i].text.as_str()).collect()
    }
}

/// Exact maximum-weight selection with total cost within the budget and,
/// when feasible, at least one Product term.
///
/// Dynamic programming over (term, remaining budget, product still needed).
/// Values are suffix sums, so a subset's value is the same right-to-left
/// sum whichever way it is reached. Among equal-value subsets the one that
/// includes the earliest differing term wins.
pub fn ilp_compress(inst: &IlpInstance) -> IlpSolution {
    let has_product = inst.terms.iter().any(|t| t.kind == TermKind::Product);
    let product_fits = inst
        .terms
        .iter()
        .any(|t| t.kind == TermKind::Product && t.cost <= inst.budget);
    let need = has_product && product_fits;
    let relaxed = has_product && !product_fits;
    if relaxed {
        log::warn!("no product term fits budget {}; dropping the product rule", inst.budget);
    }

    let n = inst.terms.len();
    let b = inst.budget;
    let width = b + 1;
    let idx = |i: usize, c: usize, p: usize| (i * width + c) * 2 + p;
    // best[i][c][p]: max value of terms i.. with budget c; p = 1 while a
    // product is still required.
    let mut best = vec![f64::NEG_INFINITY; (n + 1) * width * 2];
    for c in 0..=b {
        best[idx(n, c, 0)] = 0.0;
    }
    for i in (0..n).rev() {
        let t = &inst.terms[i];
        let is_product = usize::from(t.kind == TermKind::Product);
        for c in 0..=b {
            for p in 0..2 {
                let skip = best[idx(i + 1, c, p)];
                let take = if t.cost <= c {
                    t.weight + best[idx(i + 1, c - t.cost, p & (1 - is_product))]
                } else {
                    f64::NEG_INFINITY
                };
                best[idx(i, c, p)] = skip.max(take);
            }
        }
    }

    let mut selected = Vec::new();
    let (mut c, mut p) = (b, usize::from(need));
    let value = best[idx(0, c, p)];
    for i in 0..n {
        let t = &inst.terms[i];
        let is_product = usize::from(t.kind == TermKind::Product);
        if t.cost <= c {
            let p2 = p & (1 - is_product);
            let take = t.weight + best[idx(i + 1, c - t.cost, p2)];
            if take >= best[idx(i + 1, c, p)] && take > f64::NEG_INFINITY {
                selected.push(i);
                c -= t.cost;
                p = p2;
            }
        }
    }
    let cost = selected.iter().map(|&i| inst.terms[i].cost).sum();
    IlpSolution {
        selected,
        value,
        cost,
        relaxed,
    }
}

/// Weighted term selection over a tagged triplet's source.
pub fn ilp_title(t: &Triplet, budget: usize, weights: &TermWeights) -> Result<(String, IlpSolution)> {
    let terms = t
        .terms()
        .ok_or_else(|| Error::Contract(format!("ILP baseline needs term tags for {:?}", t.source)))?;
    let inst = IlpInstance {
        terms: weigh_terms(&terms, weights),
        budget,
    };
    let sol = ilp_compress(&inst);
    Ok((sol.text(&inst), sol))
}

/// Rounded mean short-title length, the default baseline budget.
pub fn default_budget(train: &[Triplet]) -> usize {
    if train.is_empty() {
        return 0;
    }
    let total: usize = train.iter().map(|t| t.short_title.chars().count()).sum();
    (total as f64 / train.len() as f64).round() as usize
}
