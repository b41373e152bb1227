//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Every op appends a node holding its output value and the indices of its
//! inputs. Because inputs always exist before the op that consumes them, the
//! node list is topologically ordered and backward is a single reverse scan.
//!
//! Parameters are borrowed from a [`ParamStore`] rather than copied; a
//! parameter used many times in one forward pass maps to a single node, so
//! its gradient accumulates in one buffer.

use super::{GradStore, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Floor applied to `q` inside [`Graph::kl_divergence`].
pub const KL_EPSILON: f64 = 1e-10;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    LogFloor(Var, f64),
    Concat(Vec<Var>),
    Slice(Var, usize),
    VStack(Vec<Var>),
    Row(Var, usize),
    Gather(Var, Vec<usize>),
    SoftmaxRows(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    SumAt(Var, Vec<usize>),
    Sum(Var),
    MaxPoolRows(Var, Vec<usize>),
    Kl(Var, Var),
    Normalize(Var),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    /// Empty for parameter nodes; their values live in the store.
    value: Vec<f64>,
    op: Op,
}

/// Computation record for one forward pass.
pub struct Graph<'p> {
    params: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape {
        [n] => (1, *n),
        [r, c] => (*r, *c),
        _ => (1, shape.iter().product()),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl<'p> Graph<'p> {
    /// A graph without parameters, for standalone tensor computations.
    pub fn new() -> Self {
        Self {
            params: None,
            nodes: Vec::new(),
            param_nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn with_params(params: &'p ParamStore) -> Self {
        Self {
            params: Some(params),
            nodes: Vec::with_capacity(1024),
            param_nodes: vec![None; params.len()],
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self
                .params
                .expect("parameter node without a store")
                .get(id)
                .data(),
            _ => &node.value,
        }
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec())
            .expect("node shape is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert!(
            matches!(op, Op::Param(_)) || shape.iter().product::<usize>() == value.len()
        );
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    /// Inserts a leaf tensor. Leaves receive gradients like any other node.
    pub fn input(&mut self, t: Tensor) -> Var {
        let (shape, data) = t.into_parts();
        self.push(shape, data, Op::Leaf)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        self.input(Tensor::vector(data))
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        let shape = self
            .params
            .expect("graph has no parameter store")
            .get(id)
            .shape()
            .to_vec();
        let v = self.push(shape, Vec::new(), Op::Param(id));
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn matrix_shape(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::shape(op, s, &[0, 0])),
        }
    }

    fn vector_len(&self, v: Var, op: &'static str) -> Result<usize> {
        match self.shape(v) {
            [n] => Ok(*n),
            s => Err(Error::shape(op, s, &[0])),
        }
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_shape(a, "matmul")?;
        let (k2, n) = self.matrix_shape(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                if x == 0.0 {
                    continue;
                }
                add_scaled(orow, &bv[p * n..(p + 1) * n], x);
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    /// `a[m×k] · b[n×k]ᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_shape(a, "matmul_nt")?;
        let (n, k2) = self.matrix_shape(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::shape("matmul_nt", self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                out[i * n + j] = dot(arow, &bv[j * k..(j + 1) * k]);
            }
        }
        Ok(self.push(vec![m, n], out, Op::MatMulNt(a, b)))
    }

    /// `w[m×n] · x[n]`.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_shape(w, "matvec")?;
        let n2 = self.vector_len(x, "matvec")?;
        if n != n2 {
            return Err(Error::shape("matvec", self.shape(w), self.shape(x)));
        }
        let (wv, xv) = (self.value(w), self.value(x));
        let out = (0..m).map(|i| dot(&wv[i * n..(i + 1) * n], xv)).collect();
        Ok(self.push(vec![m], out, Op::MatVec(w, x)))
    }

    /// `x[m]ᵀ · b[m×n]`, the weighted sum of the rows of `b`.
    pub fn vecmat(&mut self, x: Var, b: Var) -> Result<Var> {
        let m = self.vector_len(x, "vecmat")?;
        let (m2, n) = self.matrix_shape(b, "vecmat")?;
        if m != m2 {
            return Err(Error::shape("vecmat", self.shape(x), self.shape(b)));
        }
        let (xv, bv) = (self.value(x), self.value(b));
        let mut out = vec![0.0; n];
        for (i, &w) in xv.iter().enumerate() {
            if w != 0.0 {
                add_scaled(&mut out, &bv[i * n..(i + 1) * n], w);
            }
        }
        Ok(self.push(vec![n], out, Op::VecMat(x, b)))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `b[n]` to every row of `a[m×n]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.matrix_shape(a, "add_row")?;
        if self.vector_len(b, "add_row")? != n {
            return Err(Error::shape("add_row", self.shape(a), self.shape(b)));
        }
        let bv = self.value(b).to_vec();
        let mut out = self.value(a).to_vec();
        for row in out.chunks_mut(n) {
            add_into(row, &bv);
        }
        Ok(self.push(vec![m, n], out, Op::AddRow(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * factor).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, Op::Scale(a, factor))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, out, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// `ln(max(x, floor))`; gradient is zero where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        self.map(a, move |x| x.max(floor).ln(), Op::LogFloor(a, floor))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for &p in parts {
            self.vector_len(p, "concat")?;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![out.len()], out, Op::Concat(parts.to_vec())))
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vector_len(a, "slice")?;
        if start + len > n {
            return Err(Error::shape("slice", &[n], &[start, len]));
        }
        let out = self.value(a)[start..start + len].to_vec();
        Ok(self.push(vec![len], out, Op::Slice(a, start)))
    }

    /// Stacks vectors (one row each) and matrices (their rows) vertically.
    pub fn vstack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("vstack of nothing".into()))?;
        let cols = rows_cols(self.shape(first)).1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = match self.shape(p) {
                [n] => (1, *n),
                [r, c] => (*r, *c),
                s => return Err(Error::shape("vstack", s, &[cols])),
            };
            if c != cols {
                return Err(Error::shape("vstack", self.shape(first), self.shape(p)));
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![rows, cols], out, Op::VStack(parts.to_vec())))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (m, n) = self.matrix_shape(a, "row")?;
        if i >= m {
            return Err(Error::shape("row", &[m, n], &[i]));
        }
        let out = self.value(a)[i * n..(i + 1) * n].to_vec();
        Ok(self.push(vec![n], out, Op::Row(a, i)))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.matrix_shape(table, "gather_rows")?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Vocab { id: bad, size: v });
        }
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        Ok(self.push(vec![ids.len(), d], out, Op::Gather(table, ids.to_vec())))
    }

    /// Row-wise softmax with max subtraction. A vector is treated as one row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let (_, n) = rows_cols(&shape);
        let av = self.value(a);
        if av.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("NaN input to softmax".into()));
        }
        let mut out = av.to_vec();
        if n > 0 {
            for row in out.chunks_mut(n) {
                softmax_in_place(row);
            }
        }
        Ok(self.push(shape, out, Op::SoftmaxRows(a)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let n = self.vector_len(a, "log_softmax")?;
        let av = self.value(a);
        if n == 0 || av.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("log_softmax needs finite non-empty input".into()));
        }
        let max = av.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + av.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out = av.iter().map(|x| x - lse).collect();
        Ok(self.push(vec![n], out, Op::LogSoftmax(a)))
    }

    /// Scalar element `a[i]` of a vector.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.vector_len(a, "pick")?;
        if i >= n {
            return Err(Error::shape("pick", &[n], &[i]));
        }
        let out = vec![self.value(a)[i]];
        Ok(self.push(Vec::new(), out, Op::Pick(a, i)))
    }

    /// Scalar `Σ a[i]` over the listed indices of a vector.
    pub fn sum_at(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let n = self.vector_len(a, "sum_at")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::shape("sum_at", &[n], &[bad]));
        }
        let av = self.value(a);
        let s = idx.iter().map(|&i| av[i]).sum();
        Ok(self.push(Vec::new(), vec![s], Op::SumAt(a, idx.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(Vec::new(), vec![s], Op::Sum(a))
    }

    /// Column-wise maximum over the rows of `a[r×M]`.
    ///
    /// Backward routes each column's gradient to its lowest-index argmax row.
    pub fn max_pool_rows(&mut self, a: Var) -> Result<Var> {
        let (r, m) = match self.shape(a) {
            [r, m] => (*r, *m),
            [m] => (1, *m),
            s => return Err(Error::shape("max_pool_rows", s, &[0, 0])),
        };
        if r == 0 || m == 0 {
            return Err(Error::shape("max_pool_rows", self.shape(a), &[1, 1]));
        }
        let av = self.value(a);
        let mut arg = vec![0usize; m];
        let mut out = av[..m].to_vec();
        for i in 1..r {
            for j in 0..m {
                let x = av[i * m + j];
                if x > out[j] {
                    out[j] = x;
                    arg[j] = i;
                }
            }
        }
        Ok(self.push(vec![m], out, Op::MaxPoolRows(a, arg)))
    }

    /// `Σ p_i ln(p_i / max(q_i, ε))` with `0·ln(0/q) = 0`.
    pub fn kl_divergence(&mut self, p: Var, q: Var) -> Result<Var> {
        let n = self.vector_len(p, "kl_divergence")?;
        if self.vector_len(q, "kl_divergence")? != n {
            return Err(Error::shape("kl_divergence", self.shape(p), self.shape(q)));
        }
        let (pv, qv) = (self.value(p), self.value(q));
        let kl = pv
            .iter()
            .zip(qv)
            .filter(|(&pi, _)| pi > 0.0)
            .map(|(&pi, &qi)| pi * (pi.ln() - qi.max(KL_EPSILON).ln()))
            .sum();
        Ok(self.push(Vec::new(), vec![kl], Op::Kl(p, q)))
    }

    /// `a / Σ a` for a vector with positive sum.
    pub fn normalize(&mut self, a: Var) -> Result<Var> {
        let n = self.vector_len(a, "normalize")?;
        let av = self.value(a);
        let s: f64 = av.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Numeric(format!("cannot normalize vector with sum {s}")));
        }
        let out = av.iter().map(|x| x / s).collect();
        Ok(self.push(vec![n], out, Op::Normalize(a)))
    }

    /// Reverse pass seeded with d(loss)/d(loss) = 1.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        self.backward_scaled(loss, 1.0)
    }

    /// Reverse pass seeded with `seed`; equivalent to differentiating
    /// `seed · loss`.
    pub fn backward_scaled(&mut self, loss: Var, seed: f64) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(vec![seed]);
        let mut bp = Backprop {
            nodes: &self.nodes,
            params: self.params,
            grads: &mut self.grads,
        };
        for i in (0..=loss.0).rev() {
            let Some(g) = bp.grads[i].take() else {
                continue;
            };
            bp.node(i, &g);
            bp.grads[i] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`, if reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of every parameter node into `out`.
    pub fn accumulate_param_grads(&self, out: &mut GradStore) {
        for (pid, var) in self.param_nodes.iter().enumerate() {
            if let Some(v) = var {
                if let Some(g) = self.grad(*v) {
                    add_into(out.get_mut(ParamId(pid)), g);
                }
            }
        }
    }
}

struct Backprop<'a> {
    nodes: &'a [Node],
    params: Option<&'a ParamStore>,
    grads: &'a mut [Option<Vec<f64>>],
}

impl<'a> Backprop<'a> {
    fn shape(&self, v: Var) -> &'a [usize] {
        &self.nodes[v.0].shape
    }

    fn value(&self, v: Var) -> &'a [f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.params.expect("parameter store").get(id).data(),
            _ => &node.value,
        }
    }

    fn buf(&mut self, v: Var) -> &mut Vec<f64> {
        let len = self.nodes[v.0].shape.iter().product();
        self.grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn node(&mut self, i: usize, g: &[f64]) {
        let node = &self.nodes[i];
        let y: &'a [f64] = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = rows_cols(self.shape(*a));
                let n = rows_cols(self.shape(*b)).1;
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = self.buf(*a);
                for r in 0..m {
                    for p in 0..k {
                        ga[r * k + p] += dot(&g[r * n..(r + 1) * n], &bv[p * n..(p + 1) * n]);
                    }
                }
                let gb = self.buf(*b);
                for r in 0..m {
                    for p in 0..k {
                        let x = av[r * k + p];
                        if x != 0.0 {
                            add_scaled(&mut gb[p * n..(p + 1) * n], &g[r * n..(r + 1) * n], x);
                        }
                    }
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = rows_cols(self.shape(*a));
                let n = rows_cols(self.shape(*b)).0;
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = self.buf(*a);
                for r in 0..m {
                    for j in 0..n {
                        let gv = g[r * n + j];
                        if gv != 0.0 {
                            add_scaled(&mut ga[r * k..(r + 1) * k], &bv[j * k..(j + 1) * k], gv);
                        }
                    }
                }
                let gb = self.buf(*b);
                for r in 0..m {
                    for j in 0..n {
                        let gv = g[r * n + j];
                        if gv != 0.0 {
                            add_scaled(&mut gb[j * k..(j + 1) * k], &av[r * k..(r + 1) * k], gv);
                        }
                    }
                }
            }
            Op::MatVec(w, x) => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let n = xv.len();
                let gw = self.buf(*w);
                for (r, &gr) in g.iter().enumerate() {
                    if gr != 0.0 {
                        add_scaled(&mut gw[r * n..(r + 1) * n], xv, gr);
                    }
                }
                let gx = self.buf(*x);
                for (r, &gr) in g.iter().enumerate() {
                    if gr != 0.0 {
                        add_scaled(gx, &wv[r * n..(r + 1) * n], gr);
                    }
                }
            }
            Op::VecMat(x, b) => {
                let n = g.len();
                let (xv, bv) = (self.value(*x), self.value(*b));
                let gx = self.buf(*x);
                for (r, gxr) in gx.iter_mut().enumerate() {
                    *gxr += dot(&bv[r * n..(r + 1) * n], g);
                }
                let gb = self.buf(*b);
                for (r, &w) in xv.iter().enumerate() {
                    if w != 0.0 {
                        add_scaled(&mut gb[r * n..(r + 1) * n], g, w);
                    }
                }
            }
            Op::Add(a, b) => {
                add_into(self.buf(*a), g);
                add_into(self.buf(*b), g);
            }
            Op::Sub(a, b) => {
                add_into(self.buf(*a), g);
                add_scaled(self.buf(*b), g, -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                for ((d, gi), bi) in self.buf(*a).iter_mut().zip(g).zip(bv) {
                    *d += gi * bi;
                }
                for ((d, gi), ai) in self.buf(*b).iter_mut().zip(g).zip(av) {
                    *d += gi * ai;
                }
            }
            Op::AddRow(a, b) => {
                add_into(self.buf(*a), g);
                let n = self.shape(*b)[0];
                let gb = self.buf(*b);
                for row in g.chunks(n) {
                    add_into(gb, row);
                }
            }
            Op::Scale(a, f) => add_scaled(self.buf(*a), g, *f),
            Op::Sigmoid(a) => {
                for ((d, gi), yi) in self.buf(*a).iter_mut().zip(g).zip(y) {
                    *d += gi * yi * (1.0 - yi);
                }
            }
            Op::Tanh(a) => {
                for ((d, gi), yi) in self.buf(*a).iter_mut().zip(g).zip(y) {
                    *d += gi * (1.0 - yi * yi);
                }
            }
            Op::LogFloor(a, floor) => {
                let av = self.value(*a);
                for ((d, gi), xi) in self.buf(*a).iter_mut().zip(g).zip(av) {
                    if *xi > *floor {
                        *d += gi / xi;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.shape(p)[0];
                    add_into(self.buf(p), &g[off..off + len]);
                    off += len;
                }
            }
            Op::Slice(a, start) => {
                let start = *start;
                add_into(&mut self.buf(*a)[start..start + g.len()], g);
            }
            Op::VStack(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len: usize = self.shape(p).iter().product();
                    add_into(self.buf(p), &g[off..off + len]);
                    off += len;
                }
            }
            Op::Row(a, r) => {
                let n = g.len();
                let r = *r;
                add_into(&mut self.buf(*a)[r * n..(r + 1) * n], g);
            }
            Op::Gather(table, ids) => {
                let d = self.shape(*table)[1];
                let gt = self.buf(*table);
                for (row, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &g[row * d..(row + 1) * d]);
                }
            }
            Op::SoftmaxRows(a) => {
                let n = rows_cols(&node.shape).1;
                let ga = self.buf(*a);
                if n > 0 {
                    for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(ga.chunks_mut(n)) {
                        let s = dot(yr, gr);
                        for j in 0..n {
                            dr[j] += yr[j] * (gr[j] - s);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let gsum: f64 = g.iter().sum();
                for ((d, gi), yi) in self.buf(*a).iter_mut().zip(g).zip(y) {
                    *d += gi - yi.exp() * gsum;
                }
            }
            Op::Pick(a, idx) => {
                let idx = *idx;
                self.buf(*a)[idx] += g[0];
            }
            Op::SumAt(a, idx) => {
                let ga = self.buf(*a);
                for &j in idx {
                    ga[j] += g[0];
                }
            }
            Op::Sum(a) => {
                for d in self.buf(*a) {
                    *d += g[0];
                }
            }
            Op::MaxPoolRows(a, arg) => {
                let m = arg.len();
                let ga = self.buf(*a);
                for (j, &r) in arg.iter().enumerate() {
                    ga[r * m + j] += g[j];
                }
            }
            Op::Kl(p, q) => {
                let (pv, qv) = (self.value(*p), self.value(*q));
                let gp = self.buf(*p);
                for j in 0..pv.len() {
                    if pv[j] > 0.0 {
                        gp[j] += g[0] * (pv[j].ln() - qv[j].max(KL_EPSILON).ln() + 1.0);
                    }
                }
                let gq = self.buf(*q);
                for j in 0..pv.len() {
                    if pv[j] > 0.0 && qv[j] > KL_EPSILON {
                        gq[j] -= g[0] * pv[j] / qv[j];
                    }
                }
            }
            Op::Normalize(a) => {
                let s: f64 = self.value(*a).iter().sum();
                let gy = dot(g, y);
                for (d, gi) in self.buf(*a).iter_mut().zip(g) {
                    *d += (gi - gy) / s;
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn add_scaled(dst: &mut [f64], src: &[f64], f: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += f * s;
    }
}
