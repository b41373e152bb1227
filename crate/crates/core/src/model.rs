//! Shared-encoder multi-task model.
//!
//! One bidirectional encoder feeds two decoders:
//!
//! * a pointer decoder whose attention over the source positions (plus a
//!   learned STOP key) is its output distribution, trained on compressed
//!   titles;
//! * an attentive generative decoder over the full vocabulary, trained on
//!   search queries.
//!
//! The agreement term compares the column-wise maxima of the two attention
//! matrices with a KL divergence.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::corpus::{BOS, EOS};
use crate::error::{Error, Result};
use crate::nn::{
    bilstm_encode, uniform_tensor, AdditiveAttention, AttentionKeys, Embedding, EncoderStates,
    Linear, LstmCell, INIT_RANGE,
};

/// Floor inside the log of pointer probabilities.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    PtrOnly,
    VanillaMtl,
    AgreeMtl,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PtrOnly => "ptr-only",
            Mode::VanillaMtl => "vanilla-mtl",
            Mode::AgreeMtl => "agree-mtl",
        }
    }

    pub fn uses_query(self) -> bool {
        !matches!(self, Mode::PtrOnly)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ptr-only" | "ptr-net" => Ok(Mode::PtrOnly),
            "vanilla-mtl" => Ok(Mode::VanillaMtl),
            "agree-mtl" => Ok(Mode::AgreeMtl),
            _ => Err(format!("unknown mode {s:?} (ptr-only, vanilla-mtl, agree-mtl)")),
        }
    }
}

/// Layer sizes. The decoder width is twice `enc_hidden` so the two
/// directions' final states can seed it directly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub enc_hidden: usize,
    pub attn_dim: usize,
    pub max_source_len: usize,
}

impl ModelDims {
    pub fn dec_hidden(&self) -> usize {
        2 * self.enc_hidden
    }
}

/// Loss weighting and agreement-term switches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MtlConfig {
    pub mode: Mode,
    /// Weight of the title loss in agree-mtl.
    pub lambda1: f64,
    /// Weight of the query loss in agree-mtl.
    pub lambda2: f64,
    /// Title weight in vanilla-mtl; the query gets `1 - lambda`.
    pub lambda: f64,
    /// Rescale the max-pooled attention vectors to sum to one before KL.
    pub renormalize: bool,
    /// Use `KL(a_Q || a_T)` instead of `KL(a_T || a_Q)`.
    pub reverse_kl: bool,
}

impl Default for MtlConfig {
    fn default() -> Self {
        Self {
            mode: Mode::AgreeMtl,
            lambda1: 0.5,
            lambda2: 0.3,
            lambda: 0.5,
            renormalize: true,
            reverse_kl: false,
        }
    }
}

impl MtlConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            out.push(format!(
                "lambda1 ({}) and lambda2 ({}) must be nonnegative",
                self.lambda1, self.lambda2
            ));
        }
        if self.mode == Mode::AgreeMtl && self.lambda1 + self.lambda2 > 1.0 + 1e-12 {
            out.push(format!(
                "lambda1 + lambda2 = {} exceeds 1",
                self.lambda1 + self.lambda2
            ));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            out.push(format!("lambda ({}) must lie in [0, 1]", self.lambda));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub embedding: Embedding,
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Clone, Debug)]
pub struct PointerDecoder {
    pub lstm: LstmCell,
    pub attn: AdditiveAttention,
    /// Key row for the virtual STOP position.
    pub stop_key: ParamId,
}

#[derive(Clone, Debug)]
pub struct QueryDecoder {
    pub embedding: Embedding,
    pub lstm: LstmCell,
    pub attn: AdditiveAttention,
    /// Vocabulary logits from `[s_n; c_n; e(y_{n-1})]`.
    pub out: Linear,
}

/// Decoder-step × source-position weights held in a graph.
#[derive(Clone, Copy, Debug)]
pub struct AttentionMatrix {
    pub matrix: Var,
    pub steps: usize,
    pub source_len: usize,
}

/// The loss terms of one example. Terms a mode does not compute are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossBreakdown {
    pub title: Var,
    pub query: Option<Var>,
    pub agree: Option<Var>,
    pub combined: Var,
}

/// Scalar values of a [`LossBreakdown`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub title: f64,
    pub query: Option<f64>,
    pub agree: Option<f64>,
    pub combined: f64,
}

impl LossBreakdown {
    pub fn values(&self, g: &Graph<'_>) -> LossValues {
        LossValues {
            title: g.scalar(self.title),
            query: self.query.map(|v| g.scalar(v)),
            agree: self.agree.map(|v| g.scalar(v)),
            combined: g.scalar(self.combined),
        }
    }
}

/// One encoded training example; `mask` marks real source positions.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub source: &'a [usize],
    pub mask: &'a [bool],
    pub title: &'a [usize],
    pub query: &'a [usize],
}

/// Pointer attention keys: encoder rows followed by the STOP row.
#[derive(Clone, Debug)]
pub struct PointerKeys {
    pub keys: AttentionKeys,
    /// Index of the STOP position, equal to the padded source length.
    pub stop: usize,
}

#[derive(Clone, Debug)]
pub struct MtlModel {
    pub dims: ModelDims,
    pub config: MtlConfig,
    pub params: ParamStore,
    pub encoder: Encoder,
    pub pointer: PointerDecoder,
    pub query: QueryDecoder,
}

impl MtlModel {
    /// Fresh model with every parameter drawn from `seed`.
    pub fn new(dims: ModelDims, config: MtlConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let (v, e, h, a) = (dims.vocab_size, dims.embed_dim, dims.enc_hidden, dims.attn_dim);
        let s = dims.dec_hidden();
        let encoder = Encoder {
            embedding: Embedding::new(&mut p, "encoder.embedding", v, e, &mut rng),
            fwd: LstmCell::new(&mut p, "encoder.fwd", e, h, &mut rng),
            bwd: LstmCell::new(&mut p, "encoder.bwd", e, h, &mut rng),
        };
        let pointer = PointerDecoder {
            lstm: LstmCell::new(&mut p, "pointer.lstm", e, s, &mut rng),
            attn: AdditiveAttention::new(&mut p, "pointer.attn", s, 2 * h, a, &mut rng),
            stop_key: p.add("pointer.stop_key", uniform_tensor(&mut rng, &[2 * h], INIT_RANGE)),
        };
        let query = QueryDecoder {
            embedding: Embedding::new(&mut p, "query.embedding", v, e, &mut rng),
            lstm: LstmCell::new(&mut p, "query.lstm", e + 2 * h, s, &mut rng),
            attn: AdditiveAttention::new(&mut p, "query.attn", s, 2 * h, a, &mut rng),
            out: Linear::new(&mut p, "query.out", s + 2 * h + e, v, &mut rng),
        };
        Self {
            dims,
            config,
            params: p,
            encoder,
            pointer,
            query,
        }
    }

    /// Encodes a (possibly padded) source.
    pub fn encode(&self, g: &mut Graph<'_>, source: &[usize], mask: &[bool]) -> Result<EncoderStates> {
        if source.is_empty() {
            return Err(Error::Contract("empty source".into()));
        }
        if source.len() > self.dims.max_source_len {
            return Err(Error::Contract(format!(
                "source length {} exceeds the configured maximum {}",
                source.len(),
                self.dims.max_source_len
            )));
        }
        let x = self.encoder.embedding.embed(g, source)?;
        bilstm_encode(g, x, mask, &self.encoder.fwd, &self.encoder.bwd)
    }

    pub fn pointer_keys(&self, g: &mut Graph<'_>, enc: &EncoderStates) -> Result<PointerKeys> {
        let stop_row = g.param(self.pointer.stop_key);
        let rows = g.vstack(&[enc.per_position, stop_row])?;
        let mut mask = enc.mask.clone();
        mask.push(true);
        Ok(PointerKeys {
            keys: self.pointer.attn.prepare(g, rows, &mask)?,
            stop: enc.len(),
        })
    }

    /// Embedding the pointer decoder consumes for token `id`.
    pub fn pointer_input(&self, g: &mut Graph<'_>, id: usize) -> Result<Var> {
        self.encoder.embedding.embed_one(g, id)
    }

    /// Consumes the previous token, then attends with the new state. The
    /// attention weights (length `M + 1`, STOP last) are the output
    /// distribution.
    pub fn pointer_step(
        &self,
        g: &mut Graph<'_>,
        keys: &PointerKeys,
        prev_embed: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var, Var)> {
        let (h2, c2) = self.pointer.lstm.step(g, prev_embed, h, c)?;
        let w = self.pointer.attn.weights(g, &keys.keys, h2)?;
        Ok((w, h2, c2))
    }

    /// Teacher-forced pointer loss `-Σ log P(y_n)` over the gold title and a
    /// final STOP. `P(y_n)` sums the weight of every source position holding
    /// `y_n`. Rows of the returned matrix are the gold steps' weights over
    /// source positions, rescaled to exclude STOP.
    pub fn title_loss(
        &self,
        g: &mut Graph<'_>,
        enc: &EncoderStates,
        source: &[usize],
        gold: &[usize],
    ) -> Result<(Var, AttentionMatrix)> {
        let m = enc.len();
        if source.len() != m {
            return Err(Error::shape("title_loss source", &[source.len()], &[m]));
        }
        let keys = self.pointer_keys(g, enc)?;
        let mut targets: Vec<Vec<usize>> = Vec::with_capacity(gold.len() + 1);
        for &y in gold {
            let hits: Vec<usize> = (0..m).filter(|&i| enc.mask[i] && source[i] == y).collect();
            if hits.is_empty() {
                return Err(Error::NotExtractive { token: y });
            }
            targets.push(hits);
        }
        targets.push(vec![keys.stop]);

        let (mut h, mut c) = (enc.final_h, enc.final_c);
        let mut prev = BOS;
        let mut step_losses = Vec::with_capacity(targets.len());
        let mut rows = Vec::with_capacity(gold.len());
        for (n, hits) in targets.iter().enumerate() {
            let x = self.pointer_input(g, prev)?;
            let (w, h2, c2) = self.pointer_step(g, &keys, x, h, c)?;
            (h, c) = (h2, c2);
            let p = g.sum_at(w, hits)?;
            let lp = g.log_floor(p, LOG_FLOOR);
            step_losses.push(lp);
            if n < gold.len() {
                let over_source = g.slice(w, 0, m)?;
                rows.push(g.normalize(over_source)?);
                prev = gold[n];
            }
        }
        let total = sum_scalars(g, &step_losses)?;
        let loss = g.scale(total, -1.0);
        let matrix = attention_matrix(g, &rows, m)?;
        Ok((loss, matrix))
    }

    /// Teacher-forced query loss over the query tokens plus EOS. Rows of
    /// the returned matrix cover the query tokens only.
    pub fn query_loss(&self, g: &mut Graph<'_>, enc: &EncoderStates, query: &[usize]) -> Result<(Var, AttentionMatrix)> {
        let m = enc.len();
        let dec = &self.query;
        if let Some(&bad) = query.iter().find(|&&q| q >= self.dims.vocab_size) {
            return Err(Error::Vocab {
                id: bad,
                size: self.dims.vocab_size,
            });
        }
        let keys = dec.attn.prepare(g, enc.per_position, &enc.mask)?;
        let (mut s, mut c) = (enc.final_h, enc.final_c);
        let mut prev = BOS;
        let mut step_losses = Vec::with_capacity(query.len() + 1);
        let mut rows = Vec::with_capacity(query.len());
        for (n, &target) in query.iter().chain(std::iter::once(&EOS)).enumerate() {
            let (w, ctx) = dec.attn.attend(g, &keys, s)?;
            let e = dec.embedding.embed_one(g, prev)?;
            let input = g.concat(&[e, ctx])?;
            (s, c) = dec.lstm.step(g, input, s, c)?;
            let features = g.concat(&[s, ctx, e])?;
            let logits = dec.out.forward(g, features)?;
            let logp = g.log_softmax(logits)?;
            step_losses.push(g.pick(logp, target)?);
            if n < query.len() {
                rows.push(w);
                prev = target;
            }
        }
        let total = sum_scalars(g, &step_losses)?;
        let loss = g.scale(total, -1.0);
        let matrix = attention_matrix(g, &rows, m)?;
        Ok((loss, matrix))
    }

    /// `KL(a_T || a_Q)` of the column-wise maxima of the two matrices.
    pub fn agreement_loss(&self, g: &mut Graph<'_>, title: &AttentionMatrix, query: &AttentionMatrix) -> Result<Var> {
        agreement_loss(g, title, query, self.config.renormalize, self.config.reverse_kl)
    }

    /// Loss terms for one example under the configured mode.
    pub fn combined_loss(&self, g: &mut Graph<'_>, ex: &Example<'_>) -> Result<LossBreakdown> {
        let enc = self.encode(g, ex.source, ex.mask)?;
        self.combined_loss_from(g, &enc, ex)
    }

    /// Same as [`Self::combined_loss`] for an already encoded source.
    pub fn combined_loss_from(&self, g: &mut Graph<'_>, enc: &EncoderStates, ex: &Example<'_>) -> Result<LossBreakdown> {
        let (title, a_t) = self.title_loss(g, enc, ex.source, ex.title)?;
        let cfg = &self.config;
        if cfg.mode == Mode::PtrOnly {
            return Ok(LossBreakdown {
                title,
                query: None,
                agree: None,
                combined: title,
            });
        }
        let (query, a_q) = self.query_loss(g, enc, ex.query)?;
        let agree = self.agreement_loss(g, &a_t, &a_q)?;
        let combined = match cfg.mode {
            Mode::VanillaMtl => weighted_sum(g, &[(title, cfg.lambda), (query, 1.0 - cfg.lambda)])?,
            _ => weighted_sum(
                g,
                &[
                    (title, cfg.lambda1),
                    (query, cfg.lambda2),
                    (agree, 1.0 - cfg.lambda1 - cfg.lambda2),
                ],
            )?,
        };
        Ok(LossBreakdown {
            title,
            query: Some(query),
            agree: Some(agree),
            combined,
        })
    }

    /// Parameter ids belonging to one named section (`encoder`, `pointer`, `query`).
    pub fn section_params(&self, section: &str) -> Vec<ParamId> {
        let prefix = format!("{section}.");
        self.params
            .iter()
            .filter(|(_, p)| p.name.starts_with(&prefix))
            .map(|(id, _)| id)
            .collect()
    }
}

/// Max-pool both matrices over their rows, optionally renormalize, and
/// return the KL divergence.
pub fn agreement_loss(
    g: &mut Graph<'_>,
    title: &AttentionMatrix,
    query: &AttentionMatrix,
    renormalize: bool,
    reverse: bool,
) -> Result<Var> {
    if title.source_len != query.source_len {
        return Err(Error::Contract(format!(
            "attention matrices cover {} and {} source positions",
            title.source_len, query.source_len
        )));
    }
    if title.steps == 0 || query.steps == 0 {
        return Err(Error::Contract("agreement loss needs at least one attention row on each side".into()));
    }
    let mut a_t = g.max_pool_rows(title.matrix)?;
    let mut a_q = g.max_pool_rows(query.matrix)?;
    if renormalize {
        a_t = g.normalize(a_t)?;
        a_q = g.normalize(a_q)?;
    }
    if reverse {
        g.kl_divergence(a_q, a_t)
    } else {
        g.kl_divergence(a_t, a_q)
    }
}

fn attention_matrix(g: &mut Graph<'_>, rows: &[Var], m: usize) -> Result<AttentionMatrix> {
    let matrix = if rows.is_empty() {
        g.input(crate::autodiff::Tensor::zeros(&[0, m]))
    } else {
        g.vstack(rows)?
    };
    Ok(AttentionMatrix {
        matrix,
        steps: rows.len(),
        source_len: m,
    })
}

fn sum_scalars(g: &mut Graph<'_>, xs: &[Var]) -> Result<Var> {
    let mut acc = xs[0];
    for &x in &xs[1..] {
        acc = g.add(acc, x)?;
    }
    Ok(acc)
}

fn weighted_sum(g: &mut Graph<'_>, terms: &[(Var, f64)]) -> Result<Var> {
    let scaled: Vec<Var> = terms.iter().map(|&(v, w)| g.scale(v, w)).collect();
    sum_scalars(g, &scaled)
}
