#![allow(dead_code)]

pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use titlecomp::autodiff::{check_gradients, check_param_gradients, GradCheckReport, Graph, Tensor, Var};
use titlecomp::model::{Example, Mode, ModelDims, MtlConfig, MtlModel};
use titlecomp::nn::{bilstm_encode, AdditiveAttention, Embedding, Linear, LstmCell};
use titlecomp::Result;

pub const STEP: f64 = 1e-5;
pub const RTOL: f64 = 1e-4;
pub const ATOL: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// `Σ r ⊙ out` for a fixed random `r`, so every output element matters.
pub fn readout(g: &mut Graph<'_>, out: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    if shape.is_empty() {
        return Ok(out);
    }
    let r = rand_tensor(&mut rng(seed ^ 0xabc), &shape, -1.0, 1.0);
    let r = g.input(r);
    let prod = g.mul(out, r)?;
    Ok(g.sum(prod))
}

/// Matrix whose entries are pairwise at least `gap` apart within each
/// column, so finite differences never cross a max-pool kink.
pub fn separated_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, gap: f64) -> Tensor {
    loop {
        let t = rand_tensor(rng, &[rows, cols], 0.0, 1.0);
        let d = t.data();
        let ok = (0..cols).all(|j| {
            (0..rows).all(|a| (0..rows).all(|b| a == b || (d[a * cols + j] - d[b * cols + j]).abs() > gap))
        });
        if ok {
            return t;
        }
    }
}

type OpFn = Box<dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var>>;

/// Every differentiable graph operation with random inputs for `seed`.
pub fn op_cases(seed: u64) -> Vec<(&'static str, Vec<Tensor>, OpFn)> {
    let mut r = rng(seed);
    let mut t = |shape: &[usize]| rand_tensor(&mut r, shape, -1.0, 1.0);
    let (a23, b34, c23, v3, v2, m43) = (t(&[2, 3]), t(&[3, 4]), t(&[2, 3]), t(&[3]), t(&[2]), t(&[4, 3]));
    let v4 = t(&[4]);
    let v5 = t(&[5]);
    let s = seed;
    let mut r2 = rng(seed ^ 77);
    let positive = rand_tensor(&mut r2, &[4], 0.2, 1.5);
    let pooled = separated_matrix(&mut r2, 3, 4, 1e-3);
    let table = rand_tensor(&mut r2, &[5, 3], -1.0, 1.0);
    let logits_p = rand_tensor(&mut r2, &[4], -2.0, 2.0);
    let logits_q = rand_tensor(&mut r2, &[4], -2.0, 2.0);
    let cases: Vec<(&'static str, Vec<Tensor>, OpFn)> = vec![
        ("matmul", vec![a23.clone(), b34], Box::new(move |g, v| { let o = g.matmul(v[0], v[1])?; readout(g, o, s) })),
        ("matmul_nt", vec![a23.clone(), m43.clone()], Box::new(move |g, v| { let o = g.matmul_nt(v[0], v[1])?; readout(g, o, s) })),
        ("matvec", vec![a23.clone(), v3.clone()], Box::new(move |g, v| { let o = g.matvec(v[0], v[1])?; readout(g, o, s) })),
        ("vecmat", vec![v2.clone(), a23.clone()], Box::new(move |g, v| { let o = g.vecmat(v[0], v[1])?; readout(g, o, s) })),
        ("add", vec![a23.clone(), c23.clone()], Box::new(move |g, v| { let o = g.add(v[0], v[1])?; readout(g, o, s) })),
        ("sub", vec![a23.clone(), c23.clone()], Box::new(move |g, v| { let o = g.sub(v[0], v[1])?; readout(g, o, s) })),
        ("mul", vec![a23.clone(), c23.clone()], Box::new(move |g, v| { let o = g.mul(v[0], v[1])?; readout(g, o, s) })),
        ("add_row", vec![m43.clone(), v3.clone()], Box::new(move |g, v| { let o = g.add_row(v[0], v[1])?; readout(g, o, s) })),
        ("scale", vec![a23.clone()], Box::new(move |g, v| { let o = g.scale(v[0], -1.7); readout(g, o, s) })),
        ("sigmoid", vec![a23.clone()], Box::new(move |g, v| { let o = g.sigmoid(v[0]); readout(g, o, s) })),
        ("tanh", vec![a23.clone()], Box::new(move |g, v| { let o = g.tanh(v[0]); readout(g, o, s) })),
        ("log_floor", vec![positive.clone()], Box::new(move |g, v| { let o = g.log_floor(v[0], 1e-10); readout(g, o, s) })),
        ("concat", vec![v3.clone(), v2.clone()], Box::new(move |g, v| { let o = g.concat(&[v[0], v[1]])?; readout(g, o, s) })),
        ("slice", vec![v5.clone()], Box::new(move |g, v| { let o = g.slice(v[0], 1, 3)?; readout(g, o, s) })),
        ("vstack", vec![a23.clone(), v3.clone()], Box::new(move |g, v| { let o = g.vstack(&[v[0], v[1]])?; readout(g, o, s) })),
        ("row", vec![m43.clone()], Box::new(move |g, v| { let o = g.row(v[0], 2)?; readout(g, o, s) })),
        ("gather_rows", vec![table], Box::new(move |g, v| { let o = g.gather_rows(v[0], &[4, 0, 4, 2])?; readout(g, o, s) })),
        ("softmax_rows", vec![m43.clone()], Box::new(move |g, v| { let o = g.softmax_rows(v[0])?; readout(g, o, s) })),
        ("log_softmax", vec![v4.clone()], Box::new(move |g, v| { let o = g.log_softmax(v[0])?; readout(g, o, s) })),
        ("pick", vec![v4.clone()], Box::new(|g, v| g.pick(v[0], 2))),
        ("sum_at", vec![v5.clone()], Box::new(|g, v| g.sum_at(v[0], &[0, 3, 3]))),
        ("sum", vec![a23], Box::new(|g, v| Ok(g.sum(v[0])))),
        ("max_pool_rows", vec![pooled], Box::new(move |g, v| { let o = g.max_pool_rows(v[0])?; readout(g, o, s) })),
        ("kl_divergence", vec![logits_p, logits_q], Box::new(|g, v| {
            let p = g.softmax_rows(v[0])?;
            let q = g.softmax_rows(v[1])?;
            g.kl_divergence(p, q)
        })),
        ("normalize", vec![positive], Box::new(move |g, v| { let o = g.normalize(v[0])?; readout(g, o, s) })),
    ];
    cases
}

/// Checks every op in [`op_cases`] for one seed.
pub fn check_all_ops(seed: u64) -> Vec<(&'static str, GradCheckReport)> {
    op_cases(seed)
        .into_iter()
        .map(|(name, inputs, f)| (name, check_gradients(&inputs, |g, v| f(g, v), STEP, RTOL, ATOL).unwrap()))
        .collect()
}

/// Layer checks (embedding, LSTM step, masked BiLSTM, attention, linear)
/// with respect to their parameters.
pub fn check_layers(seed: u64) -> GradCheckReport {
    let mut r = rng(seed);
    let mut store = titlecomp::autodiff::ParamStore::new();
    let emb = Embedding::new(&mut store, "emb", 7, 3, &mut r);
    // Embeddings start tiny; scale them up so the check is not trivial.
    let table = rand_tensor(&mut r, &[7, 3], -1.0, 1.0);
    store.set(emb.table, table).unwrap();
    let fwd = LstmCell::new(&mut store, "fwd", 3, 2, &mut r);
    let bwd = LstmCell::new(&mut store, "bwd", 3, 2, &mut r);
    let cell = LstmCell::new(&mut store, "dec", 3, 4, &mut r);
    let att = AdditiveAttention::new(&mut store, "att", 4, 4, 3, &mut r);
    let lin = Linear::new(&mut store, "lin", 4, 5, &mut r);
    let tokens = [4usize, 2, 6, 6, 0];
    let mask = [true, true, true, false, false];
    let f = |g: &mut Graph<'_>| -> Result<Var> {
        let x = emb.embed(g, &tokens)?;
        let enc = bilstm_encode(g, x, &mask, &fwd, &bwd)?;
        let e0 = emb.embed_one(g, 3)?;
        let (h, c) = cell.step(g, e0, enc.final_h, enc.final_c)?;
        let keys = att.prepare(g, enc.per_position, &enc.mask)?;
        let (_, ctx) = att.attend(g, &keys, h)?;
        let mix = g.add(ctx, c)?;
        let y = lin.forward(g, mix)?;
        let lp = g.log_softmax(y)?;
        g.pick(lp, 1)
    };
    check_param_gradients(&store, f, STEP, RTOL, ATOL, usize::MAX).unwrap()
}

pub fn tiny_dims() -> ModelDims {
    ModelDims {
        vocab_size: 12,
        embed_dim: 3,
        enc_hidden: 2,
        attn_dim: 3,
        max_source_len: 32,
    }
}

/// Random extractive example over ids `4..12`.
pub fn random_example(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let m = rng.gen_range(3..7);
    let source: Vec<usize> = (0..m).map(|_| rng.gen_range(4..12)).collect();
    let n = rng.gen_range(1..4);
    let title: Vec<usize> = (0..n).map(|_| source[rng.gen_range(0..m)]).collect();
    let k = rng.gen_range(1..4);
    let query: Vec<usize> = (0..k).map(|_| rng.gen_range(1..12)).collect();
    (source, title, query)
}

/// Full combined loss of a tiny model in `mode`, checked against every
/// parameter (at most `per_param` probes each).
pub fn check_combined(seed: u64, mode: Mode, per_param: usize) -> GradCheckReport {
    let mut r = rng(seed);
    let model = MtlModel::new(tiny_dims(), MtlConfig::with_mode(mode), seed);
    let mut params = model.params.clone();
    // Lift the embeddings off their tiny initialization.
    for name in ["encoder.embedding", "query.embedding"] {
        let id = params.find(name).unwrap();
        let shape = params.get(id).shape().to_vec();
        params.set(id, rand_tensor(&mut r, &shape, -0.5, 0.5)).unwrap();
    }
    let (source, title, query) = random_example(&mut r);
    let mut mask = vec![true; source.len()];
    let mut padded = source.clone();
    if seed % 2 == 0 {
        padded.push(0);
        mask.push(false);
    }
    let ex = Example {
        source: &padded,
        mask: &mask,
        title: &title,
        query: &query,
    };
    let f = |g: &mut Graph<'_>| -> Result<Var> { Ok(model.combined_loss(g, &ex)?.combined) };
    check_param_gradients(&params, f, STEP, RTOL, ATOL, per_param).unwrap()
}

/// Fresh model whose embeddings are lifted off their tiny initialization,
/// so losses depend visibly on the input.
pub fn lifted_model(dims: ModelDims, mode: Mode, seed: u64) -> MtlModel {
    let mut model = MtlModel::new(dims, MtlConfig::with_mode(mode), seed);
    let mut r = rng(seed ^ 0x11f7);
    for name in ["encoder.embedding", "query.embedding"] {
        let id = model.params.find(name).unwrap();
        let shape = model.params.get(id).shape().to_vec();
        model.params.set(id, rand_tensor(&mut r, &shape, -0.5, 0.5)).unwrap();
    }
    model
}

/// Model with every parameter redrawn from U(-scale, scale), giving peaked
/// and varied decoder distributions.
pub fn random_frozen_model(dims: ModelDims, seed: u64, scale: f64) -> MtlModel {
    let mut model = MtlModel::new(dims, MtlConfig::with_mode(Mode::PtrOnly), seed);
    let mut r = rng(seed ^ 0xf00d);
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let shape = model.params.get(id).shape().to_vec();
        model.params.set(id, rand_tensor(&mut r, &shape, -scale, scale)).unwrap();
    }
    model
}

/// Random attention matrix with `rows` normalized rows over `m` positions.
pub fn random_attention(rng: &mut ChaCha8Rng, rows: usize, m: usize) -> Tensor {
    let mut t = rand_tensor(rng, &[rows, m], 0.0, 1.0);
    for r in t.data_mut().chunks_mut(m) {
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x /= s);
    }
    t
}
