//! Seeded generator of title/short-title/query triplets.
//!
//! Titles are built from four term inventories (brands, products,
//! modifiers, fillers) whose characters come from disjoint codepoint
//! blocks. A title leads with optional fillers and the brand, carries a
//! run of modifiers and sometimes a generic product word in the middle, and
//! ends with a modifier, the core product and an optional filler. Half the
//! modifier inventory is salient. The short title keeps the brand, each
//! salient modifier with some probability, and the core product, in source
//! order. Queries mention the core product, usually the brand and most of
//! the salient modifiers in shuffled order, with rare noise characters.
//! Title and query are two noisy views of the same salience.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TermKind, TermTag, Triplet, MIN_SOURCE_LEN};

const BLOCK_BASE: u32 = 0x4E00;
const BRAND_BLOCK: u32 = 0;
const PRODUCT_BLOCK: u32 = 200;
const FILLER_BLOCK: u32 = 300;
const MODIFIER_BLOCK: u32 = 400;
const NOISE_BLOCK: u32 = 2000;
/// Codepoints available to each class.
const BLOCK_SIZES: [(u32, usize); 5] = [
    (BRAND_BLOCK, 200),
    (PRODUCT_BLOCK, 100),
    (FILLER_BLOCK, 100),
    (MODIFIER_BLOCK, 1600),
    (NOISE_BLOCK, 18000),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LengthTargets {
    pub source: f64,
    pub short_title: f64,
    pub query: f64,
}

impl Default for LengthTargets {
    fn default() -> Self {
        Self {
            source: 25.1,
            short_title: 7.5,
            query: 8.3,
        }
    }
}

/// Generator settings. Inventories are drawn from `inventory_seed`, so
/// corpora generated with different seeds share one character set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthProfile {
    pub inventory_seed: u64,
    pub brands: usize,
    pub products: usize,
    pub modifiers: usize,
    pub fillers: usize,
    /// Size of each character pool per class.
    pub brand_chars: usize,
    pub product_chars: usize,
    pub modifier_chars: usize,
    pub filler_chars: usize,
    pub noise_chars: usize,
    /// Fraction of the modifier inventory that counts as salient.
    pub salient_fraction: f64,
    /// Probability that a modifier slot draws from the salient subset.
    pub salient_share: f64,
    /// Inclusive range for the sampled per-title length goal.
    pub source_len_min: usize,
    pub source_len_max: usize,
    pub generic_product_prob: f64,
    /// Probability that the short title keeps each salient modifier.
    pub title_keep_prob: f64,
    pub query_brand_prob: f64,
    /// Probability that the query mentions each salient modifier.
    pub query_modifier_prob: f64,
    /// Per-character probability of inserting a noise character in a query.
    pub noise_rate: f64,
    pub targets: LengthTargets,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            inventory_seed: 7,
            brands: 40,
            products: 30,
            modifiers: 1000,
            fillers: 20,
            brand_chars: 90,
            product_chars: 60,
            modifier_chars: 150,
            filler_chars: 30,
            noise_chars: 16000,
            salient_fraction: 0.5,
            salient_share: 0.2,
            source_len_min: 19,
            source_len_max: 30,
            generic_product_prob: 0.6,
            title_keep_prob: 0.5,
            query_brand_prob: 0.7,
            query_modifier_prob: 0.9,
            noise_rate: 0.1,
            targets: LengthTargets::default(),
        }
    }
}

struct Inventory {
    brands: Vec<String>,
    products: Vec<String>,
    salient: Vec<String>,
    plain: Vec<String>,
    fillers: Vec<String>,
}

fn block_char(block: u32, i: usize) -> char {
    char::from_u32(BLOCK_BASE + block + i as u32).expect("valid CJK codepoint")
}

/// Pool size clamped to the codepoints reserved for its block.
fn pool(block: u32, requested: usize) -> usize {
    let cap = BLOCK_SIZES.iter().find(|(b, _)| *b == block).map_or(0, |&(_, n)| n);
    requested.clamp(1, cap)
}

fn make_terms(
    rng: &mut ChaCha8Rng,
    count: usize,
    block: u32,
    pool: usize,
    len_range: (usize, usize),
) -> Vec<String> {
    let mut terms: Vec<String> = Vec::with_capacity(count);
    while terms.len() < count {
        let len = rng.gen_range(len_range.0..=len_range.1);
        let term: String = (0..len).map(|_| block_char(block, rng.gen_range(0..pool))).collect();
        if !terms.contains(&term) {
            terms.push(term);
        }
    }
    terms
}

impl Inventory {
    fn new(p: &SynthProfile) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(p.inventory_seed);
        let brands = make_terms(&mut rng, p.brands, BRAND_BLOCK, pool(BRAND_BLOCK, p.brand_chars), (3, 4));
        let products = make_terms(&mut rng, p.products, PRODUCT_BLOCK, pool(PRODUCT_BLOCK, p.product_chars), (2, 4));
        let mut modifiers = make_terms(
            &mut rng,
            p.modifiers,
            MODIFIER_BLOCK,
            pool(MODIFIER_BLOCK, p.modifier_chars),
            (2, 2),
        );
        let fillers = make_terms(&mut rng, p.fillers, FILLER_BLOCK, pool(FILLER_BLOCK, p.filler_chars), (1, 3));
        let n_salient = ((p.modifiers as f64) * p.salient_fraction).round() as usize;
        let plain = modifiers.split_off(n_salient.min(modifiers.len()));
        Self {
            brands,
            products,
            salient: modifiers,
            plain,
            fillers,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [String]) -> &'a String {
    &items[rng.gen_range(0..items.len())]
}

fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn one(rng: &mut ChaCha8Rng, inv: &Inventory, p: &SynthProfile) -> Triplet {
    let mut lead: Vec<(String, TermKind)> = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        lead.push((pick(rng, &inv.fillers).clone(), TermKind::Other));
    }
    let brand = pick(rng, &inv.brands).clone();
    lead.push((brand.clone(), TermKind::Brand));

    let core = pick(rng, &inv.products).clone();
    let modifier = |rng: &mut ChaCha8Rng| {
        let pool = if rng.gen_bool(p.salient_share) { &inv.salient } else { &inv.plain };
        pick(rng, pool).clone()
    };
    let pre_core = modifier(rng);
    let mut tail = vec![(pre_core, TermKind::Modifier), (core.clone(), TermKind::Product)];
    if rng.gen_bool(0.5) {
        tail.push((pick(rng, &inv.fillers).clone(), TermKind::Other));
    }

    let mut body: Vec<(String, TermKind)> = Vec::new();
    if rng.gen_bool(p.generic_product_prob) {
        let mut generic = pick(rng, &inv.products);
        while *generic == core {
            generic = pick(rng, &inv.products);
        }
        body.push((generic.clone(), TermKind::Product));
    }
    let goal = rng.gen_range(p.source_len_min..=p.source_len_max).max(MIN_SOURCE_LEN);
    let fixed: usize = lead.iter().chain(&tail).map(|(t, _)| char_len(t)).sum();
    let mut len = fixed + body.iter().map(|(t, _)| char_len(t)).sum::<usize>();
    while len < goal {
        let m = modifier(rng);
        len += char_len(&m);
        let at = rng.gen_range(0..=body.len());
        body.insert(at, (m, TermKind::Modifier));
    }

    let terms: Vec<(String, TermKind)> = lead.into_iter().chain(body).chain(tail).collect();
    let source: String = terms.iter().map(|(t, _)| t.as_str()).collect();
    let tags = terms
        .iter()
        .map(|(t, k)| TermTag { kind: *k, len: char_len(t) })
        .collect();

    let mut short_title = brand.clone();
    let mut qmods: Vec<String> = Vec::new();
    for (t, k) in &terms {
        if *k != TermKind::Modifier || !inv.salient.contains(t) {
            continue;
        }
        if rng.gen_bool(p.title_keep_prob) {
            short_title.push_str(t);
        }
        if !qmods.contains(t) && rng.gen_bool(p.query_modifier_prob) {
            qmods.push(t.clone());
        }
    }
    short_title.push_str(&core);

    let mut qterms = vec![core];
    if rng.gen_bool(p.query_brand_prob) {
        qterms.push(brand);
    }
    qterms.extend(qmods);
    qterms.shuffle(rng);
    let mut query = String::new();
    for c in qterms.concat().chars() {
        query.push(c);
        if rng.gen_bool(p.noise_rate) {
            query.push(block_char(NOISE_BLOCK, rng.gen_range(0..p.noise_chars)));
        }
    }

    Triplet {
        source,
        short_title,
        query,
        tags: Some(tags),
    }
}

/// Generates `n` triplets; identical `(n, seed, profile)` give identical output.
pub fn generate_synthetic(n: usize, seed: u64, profile: &SynthProfile) -> Vec<Triplet> {
    let inv = Inventory::new(profile);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| one(&mut rng, &inv, profile)).collect()
}

/// Mean source, short-title and query lengths in characters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub triplets: usize,
    pub source: f64,
    pub short_title: f64,
    pub query: f64,
}

pub fn corpus_stats(triplets: &[Triplet]) -> CorpusStats {
    let n = triplets.len().max(1) as f64;
    let mean = |f: &dyn Fn(&Triplet) -> usize| triplets.iter().map(f).sum::<usize>() as f64 / n;
    CorpusStats {
        triplets: triplets.len(),
        source: mean(&|t| char_len(&t.source)),
        short_title: mean(&|t| char_len(&t.short_title)),
        query: mean(&|t| char_len(&t.query)),
    }
}
