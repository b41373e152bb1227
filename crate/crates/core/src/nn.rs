//! Neural building blocks on top of the autodiff graph: embeddings, LSTM
//! cells, a bidirectional encoder runner, linear maps and additive
//! attention.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

/// Score added at masked positions before the softmax.
pub const MASK_SCORE: f64 = -1e9;

/// Half-width of the uniform initializer for non-embedding weights.
pub const INIT_RANGE: f64 = 0.1;

/// Standard deviation of the normal initializer for embedding tables.
pub const EMBED_INIT_STD: f64 = 1e-4;

pub fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], range: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-range..=range);
    }
    t
}

pub fn normal_tensor(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = dist.sample(rng);
    }
    t
}

/// Lookup table mapping token ids to dense rows.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, vocab_size: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let table = store.add(name, normal_tensor(rng, &[vocab_size, dim], EMBED_INIT_STD));
        Self { table, vocab_size, dim }
    }

    /// `[len × dim]` matrix whose row `i` is the embedding of `tokens[i]`.
    pub fn embed(&self, g: &mut Graph<'_>, tokens: &[usize]) -> Result<Var> {
        let t = g.param(self.table);
        g.gather_rows(t, tokens)
    }

    /// Embedding of a single token as a vector.
    pub fn embed_one(&self, g: &mut Graph<'_>, token: usize) -> Result<Var> {
        let rows = self.embed(g, &[token])?;
        g.row(rows, 0)
    }
}

/// LSTM cell with fused gate weights.
///
/// `w` is `[4H × (input_dim + H)]` acting on `[x; h]`; gate blocks are
/// ordered input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = store.add(
            format!("{name}.w"),
            uniform_tensor(rng, &[4 * hidden, input_dim + hidden], INIT_RANGE),
        );
        let mut bias = uniform_tensor(rng, &[4 * hidden], INIT_RANGE);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        let b = store.add(format!("{name}.b"), bias);
        Self { w, b, input_dim, hidden }
    }

    pub fn zero_state(&self, g: &mut Graph<'_>) -> (Var, Var) {
        let h = g.input(Tensor::zeros(&[self.hidden]));
        let c = g.input(Tensor::zeros(&[self.hidden]));
        (h, c)
    }

    /// One recurrence step, returning `(h', c')`.
    pub fn step(&self, g: &mut Graph<'_>, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hd = self.hidden;
        if g.shape(x) != [self.input_dim] {
            return Err(Error::shape("lstm_step input", g.shape(x), &[self.input_dim]));
        }
        if g.shape(h) != [hd] || g.shape(c) != [hd] {
            return Err(Error::shape("lstm_step state", g.shape(h), &[hd]));
        }
        let xh = g.concat(&[x, h])?;
        let w = g.param(self.w);
        let b = g.param(self.b);
        let z = g.matvec(w, xh)?;
        let z = g.add(z, b)?;
        let zi = g.slice(z, 0, hd)?;
        let zf = g.slice(z, hd, hd)?;
        let zg = g.slice(z, 2 * hd, hd)?;
        let zo = g.slice(z, 3 * hd, hd)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, c)?;
        let write = g.mul(i, cand)?;
        let c_next = g.add(keep, write)?;
        let squashed = g.tanh(c_next);
        let h_next = g.mul(o, squashed)?;
        Ok((h_next, c_next))
    }
}

/// Output of the bidirectional encoder.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    /// `[M × 2H]`, forward state then backward state per position.
    pub per_position: Var,
    /// `[2H]`, forward final then backward final.
    pub final_h: Var,
    pub final_c: Var,
    /// `true` at real (non-pad) positions.
    pub mask: Vec<bool>,
}

impl EncoderStates {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// Runs `fwd` left to right and `bwd` right to left over `embeds[M×dim]`.
///
/// Pad positions are skipped by both directions: they emit zero states and
/// leave the recurrent state untouched, so the finals come from the last
/// real position of each direction.
pub fn bilstm_encode(
    g: &mut Graph<'_>,
    embeds: Var,
    mask: &[bool],
    fwd: &LstmCell,
    bwd: &LstmCell,
) -> Result<EncoderStates> {
    let m = match g.shape(embeds) {
        [m, _] => *m,
        s => return Err(Error::shape("bilstm_encode", s, &[mask.len(), fwd.input_dim])),
    };
    if m != mask.len() {
        return Err(Error::shape("bilstm_encode mask", &[m], &[mask.len()]));
    }
    if !mask.iter().any(|&r| r) {
        return Err(Error::Contract("bilstm_encode: input has no real positions".into()));
    }
    if fwd.hidden != bwd.hidden {
        return Err(Error::shape("bilstm_encode hidden", &[fwd.hidden], &[bwd.hidden]));
    }

    let zeros = g.input(Tensor::zeros(&[fwd.hidden]));
    let rows: Vec<Var> = (0..m).map(|i| g.row(embeds, i)).collect::<Result<_>>()?;

    let mut fwd_out = vec![zeros; m];
    let (mut h, mut c) = fwd.zero_state(g);
    for i in 0..m {
        if mask[i] {
            (h, c) = fwd.step(g, rows[i], h, c)?;
            fwd_out[i] = h;
        }
    }
    let (fh, fc) = (h, c);

    let mut bwd_out = vec![zeros; m];
    let (mut h, mut c) = bwd.zero_state(g);
    for i in (0..m).rev() {
        if mask[i] {
            (h, c) = bwd.step(g, rows[i], h, c)?;
            bwd_out[i] = h;
        }
    }
    let (bh, bc) = (h, c);

    let joined: Vec<Var> = (0..m)
        .map(|i| g.concat(&[fwd_out[i], bwd_out[i]]))
        .collect::<Result<_>>()?;
    let per_position = g.vstack(&joined)?;
    let final_h = g.concat(&[fh, bh])?;
    let final_c = g.concat(&[fc, bc])?;
    Ok(EncoderStates {
        per_position,
        final_h,
        final_c,
        mask: mask.to_vec(),
    })
}

/// Affine map `W x + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = store.add(format!("{name}.w"), uniform_tensor(rng, &[out_dim, in_dim], INIT_RANGE));
        let b = store.add(format!("{name}.b"), uniform_tensor(rng, &[out_dim], INIT_RANGE));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matvec(w, x)?;
        g.add(y, b)
    }
}

/// Additive attention: `score_m = vᵀ tanh(W1 s + W2 k_m)`.
#[derive(Clone, Debug)]
pub struct AdditiveAttention {
    pub v: ParamId,
    pub w1: ParamId,
    pub w2: ParamId,
    pub attn_dim: usize,
    pub query_dim: usize,
    pub key_dim: usize,
}

/// Keys prepared once per source so that each decoder step only pays for
/// the query projection.
#[derive(Clone, Debug)]
pub struct AttentionKeys {
    /// `[K × key_dim]` rows that the context averages.
    pub values: Var,
    /// `[K × A]`, `values · W2ᵀ`.
    pub projected: Var,
    /// `[K]`, zero at real positions and [`MASK_SCORE`] elsewhere.
    pub mask_bias: Var,
    pub mask: Vec<bool>,
}

impl AdditiveAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        key_dim: usize,
        attn_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let v = store.add(format!("{name}.v"), uniform_tensor(rng, &[attn_dim], INIT_RANGE));
        let w1 = store.add(format!("{name}.w1"), uniform_tensor(rng, &[attn_dim, query_dim], INIT_RANGE));
        let w2 = store.add(format!("{name}.w2"), uniform_tensor(rng, &[attn_dim, key_dim], INIT_RANGE));
        Self {
            v,
            w1,
            w2,
            attn_dim,
            query_dim,
            key_dim,
        }
    }

    pub fn prepare(&self, g: &mut Graph<'_>, values: Var, mask: &[bool]) -> Result<AttentionKeys> {
        match g.shape(values) {
            [k, d] if *k == mask.len() && *d == self.key_dim => {}
            s => return Err(Error::shape("attention keys", s, &[mask.len(), self.key_dim])),
        }
        let w2 = g.param(self.w2);
        let projected = g.matmul_nt(values, w2)?;
        let bias = mask.iter().map(|&real| if real { 0.0 } else { MASK_SCORE }).collect();
        let mask_bias = g.constant_vec(bias);
        Ok(AttentionKeys {
            values,
            projected,
            mask_bias,
            mask: mask.to_vec(),
        })
    }

    /// Normalized weights over the key positions for query `s_prev`.
    pub fn weights(&self, g: &mut Graph<'_>, keys: &AttentionKeys, s_prev: Var) -> Result<Var> {
        if g.shape(s_prev) != [self.query_dim] {
            return Err(Error::shape("attention query", g.shape(s_prev), &[self.query_dim]));
        }
        let w1 = g.param(self.w1);
        let v = g.param(self.v);
        let q = g.matvec(w1, s_prev)?;
        let pre = g.add_row(keys.projected, q)?;
        let act = g.tanh(pre);
        let scores = g.matvec(act, v)?;
        let scores = g.add(scores, keys.mask_bias)?;
        g.softmax_rows(scores)
    }

    /// Weights and the weighted sum of the key rows.
    pub fn attend(&self, g: &mut Graph<'_>, keys: &AttentionKeys, s_prev: Var) -> Result<(Var, Var)> {
        let w = self.weights(g, keys, s_prev)?;
        let ctx = g.vecmat(w, keys.values)?;
        Ok((w, ctx))
    }
}

/// Additive attention of `s_prev` over the encoder rows.
pub fn additive_attention(
    g: &mut Graph<'_>,
    s_prev: Var,
    enc: &EncoderStates,
    p: &AdditiveAttention,
) -> Result<(Var, Var)> {
    let keys = p.prepare(g, enc.per_position, &enc.mask)?;
    p.attend(g, &keys, s_prev)
}
