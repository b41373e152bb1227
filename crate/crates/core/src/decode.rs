//! Beam and greedy decoding over the pointer decoder.

use std::cmp::Ordering;

use crate::autodiff::{Graph, Var};
use crate::corpus::{Vocab, BOS};
use crate::error::{Error, Result};
use crate::model::{MtlModel, PointerKeys};

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOptions {
    pub beam: usize,
    pub max_steps: usize,
    /// Finished hypotheses are ranked by `log_prob / len^alpha` when set.
    pub length_penalty: Option<f64>,
    /// Forbid pointing at a source position twice.
    pub no_repeat: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            beam: 10,
            max_steps: 12,
            length_penalty: None,
            no_repeat: false,
        }
    }
}

impl DecodeOptions {
    pub fn greedy(max_steps: usize) -> Self {
        Self {
            beam: 1,
            max_steps,
            ..Self::default()
        }
    }
}

/// A decoded position sequence. `positions` never contains STOP; `finished`
/// records whether STOP was emitted (and counted in `log_prob`).
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    pub positions: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    pub fn text(&self, source: &[char]) -> String {
        self.positions.iter().map(|&p| source[p]).collect()
    }
}

/// Recurrent state of one partial hypothesis.
#[derive(Clone, Copy, Debug)]
pub struct PointerState {
    pub h: Var,
    pub c: Var,
    pub prev_token: usize,
}

/// Frozen-parameter pointer decoding over one encoded source.
pub struct PointerSession<'m> {
    model: &'m MtlModel,
    graph: Graph<'m>,
    keys: PointerKeys,
    source: Vec<usize>,
    start: PointerState,
}

impl<'m> PointerSession<'m> {
    pub fn new(model: &'m MtlModel, source: &[usize]) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::Contract("cannot decode an empty source".into()));
        }
        let mut graph = Graph::with_params(&model.params);
        let mask = vec![true; source.len()];
        let enc = model.encode(&mut graph, source, &mask)?;
        let keys = model.pointer_keys(&mut graph, &enc)?;
        let start = PointerState {
            h: enc.final_h,
            c: enc.final_c,
            prev_token: BOS,
        };
        Ok(Self {
            model,
            graph,
            keys,
            source: source.to_vec(),
            start,
        })
    }

    pub fn source_len(&self) -> usize {
        self.source.len()
    }

    /// Index of the STOP position in step distributions.
    pub fn stop(&self) -> usize {
        self.source.len()
    }

    pub fn start(&self) -> PointerState {
        self.start
    }

    /// Distribution over positions `0..M` and STOP (last) plus the state
    /// after consuming `state.prev_token`.
    pub fn step(&mut self, state: PointerState) -> Result<(Vec<f64>, PointerState)> {
        let x = self.model.pointer_input(&mut self.graph, state.prev_token)?;
        let (w, h, c) = self.model.pointer_step(&mut self.graph, &self.keys, x, state.h, state.c)?;
        let probs = self.graph.value(w).to_vec();
        Ok((
            probs,
            PointerState {
                h,
                c,
                prev_token: BOS,
            },
        ))
    }

    /// State that continues after emitting source position `pos`.
    pub fn advance(&self, after_step: PointerState, pos: usize) -> PointerState {
        PointerState {
            prev_token: self.source[pos],
            ..after_step
        }
    }
}

#[derive(Clone, Debug)]
struct Partial {
    positions: Vec<usize>,
    log_prob: f64,
    state: PointerState,
}

struct Candidate {
    /// Positions including the STOP marker (index `M`) when finished.
    key: Vec<usize>,
    log_prob: f64,
    parent_state: PointerState,
    finished: bool,
}

fn rank(a_lp: f64, a_key: &[usize], b_lp: f64, b_key: &[usize]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_key.cmp(b_key))
}

fn final_score(h: &Hypothesis, penalty: Option<f64>) -> f64 {
    match penalty {
        Some(alpha) => {
            let len = (h.positions.len() + usize::from(h.finished)).max(1) as f64;
            h.log_prob / len.powf(alpha)
        }
        None => h.log_prob,
    }
}

fn key_of(h: &Hypothesis, stop: usize) -> Vec<usize> {
    let mut k = h.positions.clone();
    if h.finished {
        k.push(stop);
    }
    k
}

/// Beam search over source positions. Every step pools the extensions of
/// all live hypotheses (STOP included) and keeps the best `beam`; those that
/// emitted STOP are set aside as finished. Hypotheses still live at the
/// step cap compete with the finished ones on their current score.
pub fn beam_search(model: &MtlModel, source: &[usize], opts: &DecodeOptions) -> Result<Hypothesis> {
    if opts.beam == 0 || opts.max_steps == 0 {
        return Err(Error::Contract("beam width and max_steps must be at least 1".into()));
    }
    let mut session = PointerSession::new(model, source)?;
    let m = session.source_len();
    let stop = session.stop();
    let mut live = vec![Partial {
        positions: Vec::new(),
        log_prob: 0.0,
        state: session.start(),
    }];
    let mut done: Vec<Hypothesis> = Vec::new();

    for _ in 0..opts.max_steps {
        let mut cands: Vec<Candidate> = Vec::new();
        for p in &live {
            let (probs, after) = session.step(p.state)?;
            for (pos, &pr) in probs.iter().enumerate().take(m + 1) {
                if pr <= 0.0 || (opts.no_repeat && pos < m && p.positions.contains(&pos)) {
                    continue;
                }
                let mut key = p.positions.clone();
                key.push(pos);
                cands.push(Candidate {
                    key,
                    log_prob: p.log_prob + pr.ln(),
                    parent_state: after,
                    finished: pos == stop,
                });
            }
        }
        cands.sort_by(|a, b| rank(a.log_prob, &a.key, b.log_prob, &b.key));
        cands.truncate(opts.beam);
        live.clear();
        for c in cands {
            if c.finished {
                let mut positions = c.key;
                positions.pop();
                done.push(Hypothesis {
                    positions,
                    log_prob: c.log_prob,
                    finished: true,
                });
            } else {
                let last = *c.key.last().expect("non-empty");
                live.push(Partial {
                    state: session.advance(c.parent_state, last),
                    positions: c.key,
                    log_prob: c.log_prob,
                });
            }
        }
        if live.is_empty() {
            break;
        }
        // Scores only fall as hypotheses grow, so nothing live can beat a
        // finished hypothesis that already scores higher.
        if opts.length_penalty.is_none() {
            let best_done = done.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|p| p.log_prob).fold(f64::NEG_INFINITY, f64::max);
            if best_done > best_live {
                live.clear();
                break;
            }
        }
    }
    done.extend(live.into_iter().map(|p| Hypothesis {
        positions: p.positions,
        log_prob: p.log_prob,
        finished: false,
    }));
    done.into_iter()
        .min_by(|a, b| {
            rank(
                final_score(a, opts.length_penalty),
                &key_of(a, stop),
                final_score(b, opts.length_penalty),
                &key_of(b, stop),
            )
        })
        .ok_or_else(|| Error::Numeric("beam search produced no hypothesis".into()))
}

/// Argmax at every step; ties go to the lowest position, STOP last.
pub fn greedy_decode(model: &MtlModel, source: &[usize], max_steps: usize) -> Result<Hypothesis> {
    if max_steps == 0 {
        return Err(Error::Contract("max_steps must be at least 1".into()));
    }
    let mut session = PointerSession::new(model, source)?;
    let stop = session.stop();
    let mut state = session.start();
    let mut h = Hypothesis {
        positions: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    for _ in 0..max_steps {
        let (probs, after) = session.step(state)?;
        let mut best = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[best] {
                best = i;
            }
        }
        h.log_prob += probs[best].ln();
        if best == stop {
            h.finished = true;
            break;
        }
        h.positions.push(best);
        state = session.advance(after, best);
    }
    Ok(h)
}

/// Compresses one title string. Characters outside the vocabulary are an
/// error.
pub fn compress(model: &MtlModel, vocab: &Vocab, title: &str, opts: &DecodeOptions) -> Result<String> {
    let ids = vocab.encode_strict(title)?;
    let chars: Vec<char> = title.chars().collect();
    let h = beam_search(model, &ids, opts)?;
    let out = h.text(&chars);
    if let Some(bad) = out.chars().find(|&c| !title.contains(c)) {
        return Err(Error::Contract(format!("decoded character {bad:?} is not in the source")));
    }
    Ok(out)
}

/// Compresses every line independently; failures are reported per line.
pub fn compress_lines(model: &MtlModel, vocab: &Vocab, lines: &[String], opts: &DecodeOptions) -> Vec<Result<String>> {
    lines.iter().map(|l| compress(model, vocab, l, opts)).collect()
}
