//! Independent reference implementations shared by the unit-level suites
//! and the acceptance run.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use titlecomp::autodiff::{GradStore, ParamStore, Tensor};
use titlecomp::baselines::{IlpInstance, WeightedTerm};
use titlecomp::corpus::TermKind;
use titlecomp::decode::{Hypothesis, PointerSession, PointerState};
use titlecomp::model::MtlModel;
use titlecomp::train::Adagrad;

pub const KINDS: [TermKind; 4] = [TermKind::Product, TermKind::Brand, TermKind::Modifier, TermKind::Other];

/// Best log-prob over every finished sequence of at most `max_steps`
/// steps and every unfinished sequence cut at the cap.
pub fn exhaustive_best(model: &MtlModel, source: &[usize], max_steps: usize) -> f64 {
    fn go(s: &mut PointerSession<'_>, state: PointerState, depth: usize, lp: f64, max_steps: usize) -> f64 {
        let (probs, after) = s.step(state).unwrap();
        let stop = s.stop();
        let mut best = f64::NEG_INFINITY;
        for (pos, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let here = lp + p.ln();
            let v = if pos == stop || depth + 1 == max_steps {
                here
            } else {
                go(s, s.advance(after, pos), depth + 1, here, max_steps)
            };
            best = best.max(v);
        }
        best
    }
    let mut s = PointerSession::new(model, source).unwrap();
    let start = s.start();
    go(&mut s, start, 0, 0.0, max_steps)
}

/// Log-prob of a given hypothesis recomputed step by step.
pub fn rescore(model: &MtlModel, source: &[usize], h: &Hypothesis) -> f64 {
    let mut s = PointerSession::new(model, source).unwrap();
    let mut state = s.start();
    let mut lp = 0.0;
    for &pos in &h.positions {
        let (probs, after) = s.step(state).unwrap();
        lp += probs[pos].ln();
        state = s.advance(after, pos);
    }
    if h.finished {
        let (probs, _) = s.step(state).unwrap();
        lp += probs[s.stop()].ln();
    }
    lp
}

pub fn term(text: &str, kind: TermKind, weight: f64) -> WeightedTerm {
    WeightedTerm {
        text: text.into(),
        kind,
        weight,
        cost: text.chars().count(),
    }
}

/// Best feasible value by walking every subset in Gray-code order, one
/// term flipped per step.
pub fn brute_force(inst: &IlpInstance) -> f64 {
    let n = inst.terms.len();
    let need = inst.terms.iter().any(|t| t.kind == TermKind::Product && t.cost <= inst.budget);
    let (mut cost, mut value, mut products) = (0usize, 0.0f64, 0usize);
    let feasible = |cost: usize, products: usize| cost <= inst.budget && (!need || products > 0);
    let mut best = if feasible(0, 0) { 0.0 } else { f64::NEG_INFINITY };
    let mut in_set = vec![false; n];
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        let t = &inst.terms[i];
        let sign = if in_set[i] { -1.0 } else { 1.0 };
        in_set[i] = !in_set[i];
        if in_set[i] {
            cost += t.cost;
        } else {
            cost -= t.cost;
        }
        value += sign * t.weight;
        if t.kind == TermKind::Product {
            if in_set[i] {
                products += 1;
            } else {
                products -= 1;
            }
        }
        if feasible(cost, products) && value > best {
            best = value;
        }
    }
    best
}

pub fn random_instance(r: &mut ChaCha8Rng) -> IlpInstance {
    let n = r.gen_range(1..=20);
    let terms = (0..n)
        .map(|i| {
            let len = r.gen_range(1..=5);
            let text: String = (0..len).map(|j| char::from_u32(0x4e00 + (i * 8 + j) as u32).unwrap()).collect();
            term(&text, KINDS[r.gen_range(0..4)], r.gen_range(0.0..4.0))
        })
        .collect();
    IlpInstance {
        terms,
        budget: r.gen_range(0..=30),
    }
}

/// (candidate, reference, [R1 p r f], [R2 p r f], [RL p r f]), every
/// number counted by hand.
pub type Fixture = (&'static str, &'static str, [f64; 3], [f64; 3], [f64; 3]);

pub fn fixtures() -> Vec<Fixture> {
    let zero = [0.0; 3];
    let one = [1.0; 3];
    vec![
        ("abc", "abd", [2. / 3., 2. / 3., 2. / 3.], [0.5, 0.5, 0.5], [2. / 3., 2. / 3., 2. / 3.]),
        ("ac", "abc", [1.0, 2. / 3., 0.8], zero, [1.0, 2. / 3., 0.8]),
        ("abcd", "abcd", one, one, one),
        ("ab", "cd", zero, zero, zero),
        ("", "abc", zero, zero, zero),
        ("abc", "", zero, zero, zero),
        ("", "", zero, zero, zero),
        ("aaa", "a", [1. / 3., 1.0, 0.5], zero, [1. / 3., 1.0, 0.5]),
        ("a", "ab", [1.0, 0.5, 2. / 3.], zero, [1.0, 0.5, 2. / 3.]),
        ("abcd", "dcba", one, zero, [0.25, 0.25, 0.25]),
        ("abab", "ab", [0.5, 1.0, 2. / 3.], [1. / 3., 1.0, 0.5], [0.5, 1.0, 2. / 3.]),
        ("abcbdab", "bdcaba", [6. / 7., 1.0, 12. / 13.], [1. / 3., 0.4, 4. / 11.], [4. / 7., 2. / 3., 8. / 13.]),
        ("中文标题", "中标题", [0.75, 1.0, 6. / 7.], [1. / 3., 0.5, 0.4], [0.75, 1.0, 6. / 7.]),
        ("x", "x", one, zero, one),
    ]
}

/// Recursive LCS with memoization, independent of the table fill.
pub fn memo_lcs(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn store_with(values: &[&[f64]]) -> ParamStore {
    let mut s = ParamStore::new();
    for (i, v) in values.iter().enumerate() {
        s.add(format!("p{i}"), Tensor::new(vec![v.len()], v.to_vec()).unwrap());
    }
    s
}

pub fn grads_with(store: &ParamStore, values: &[&[f64]]) -> GradStore {
    let mut g = GradStore::zeros_like(store);
    for (id, v) in store.ids().zip(values) {
        g.get_mut(id).copy_from_slice(v);
    }
    g
}

/// Adagrad on `f(w) = w²` from `w0`; returns the loss trace.
pub fn adagrad_quadratic(w0: f64, steps: usize) -> Vec<f64> {
    let mut store = store_with(&[&[w0]]);
    let id = store.ids().next().unwrap();
    let mut opt = Adagrad::new(&store, 0.15, 0.1);
    let mut trace = vec![w0 * w0];
    for _ in 0..steps {
        let w = store.get(id).data()[0];
        let g = grads_with(&store, &[&[2.0 * w]]);
    opt.step(&mut store, &g).unwrap();
        let w = store.get(id).data()[0];
        trace.push(w * w);
    }
    trace
}
