use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParameterStore};
use super::{sigmoid, softmax, Tensor};
use crate::error::{Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Embedding { table: ParamId, row: usize },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    WeightedSum { weights: Var, items: Vec<Var> },
    Sum(Vec<Var>),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Dropout { input: Var, mask: Vec<f64> },
    Nll { logits: Var, target: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    // `None` for parameters, whose values live in the store.
    value: Option<Tensor>,
}

struct TrainDropout {
    keep: f64,
    rng: ChaCha8Rng,
}

/// Records a forward computation over values from a [`ParameterStore`] and
/// replays it backwards.
///
/// Nodes are appended in evaluation order, so every node's inputs precede
/// it and a single reverse sweep visits each node once.
pub struct Tape<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    record: bool,
    dropout: Option<TrainDropout>,
    stochastic: bool,
}

impl<'s> Tape<'s> {
    /// Differentiable tape without dropout.
    pub fn new(store: &'s ParameterStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
            record: true,
            dropout: None,
            stochastic: false,
        }
    }

    /// Forward-only tape; [`Tape::backward`] is rejected.
    pub fn inference(store: &'s ParameterStore) -> Self {
        Tape {
            record: false,
            ..Tape::new(store)
        }
    }

    /// Differentiable tape whose [`Tape::train_dropout`] drops with
    /// probability `1 - keep`, using a mask stream seeded by `seed`.
    pub fn with_dropout(store: &'s ParameterStore, keep: f64, seed: u64) -> Self {
        Tape {
            dropout: Some(TrainDropout {
                keep,
                rng: ChaCha8Rng::seed_from_u64(seed),
            }),
            ..Tape::new(store)
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True once any dropout with `keep < 1` has been applied.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Op::Input, value)
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn embedding(&mut self, table: ParamId, row: usize) -> Result<Var> {
        let t = self.store.get(table);
        let (rows, dim) = match t.shape() {
            [r, d] => (*r, *d),
            other => {
                return Err(Error::ShapeMismatch {
                    op: "embedding",
                    left: other.to_vec(),
                    right: vec![row],
                })
            }
        };
        if row >= rows {
            return Err(Error::OutOfRange {
                what: "embedding table",
                index: row,
                size: rows,
            });
        }
        let value = Tensor::vector(t.data()[row * dim..(row + 1) * dim].to_vec());
        Ok(self.push(Op::Embedding { table, row }, value))
    }

    /// `[m,k] x [k,n] -> [m,n]` or `[m,k] x [k] -> [m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            left: av.shape().to_vec(),
            right: bv.shape().to_vec(),
        };
        let (m, k) = match av.shape() {
            [m, k] => (*m, *k),
            _ => return Err(mismatch()),
        };
        let value = match bv.shape() {
            [kb] if *kb == k => {
                let x = bv.data();
                let out = av
                    .data()
                    .chunks_exact(k.max(1))
                    .take(m)
                    .map(|row| row.iter().zip(x).map(|(w, x)| w * x).sum())
                    .collect();
                Tensor::vector(out)
            }
            [kb, n] if *kb == k => {
                let n = *n;
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for p in 0..k {
                        let a_ip = av.data()[i * k + p];
                        if a_ip == 0.0 {
                            continue;
                        }
                        let brow = &bv.data()[p * n..(p + 1) * n];
                        for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(brow) {
                            *o += a_ip * b;
                        }
                    }
                }
                Tensor::new(vec![m, n], out)?
            }
            _ => return Err(mismatch()),
        };
        Ok(self.push(Op::MatMul(a, b), value))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor {
            shape: av.shape().to_vec(),
            data,
        }
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        Tensor {
            shape: av.shape().to_vec(),
            data: av.data().iter().map(|x| f(*x)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.map(a, |x| c * x);
        self.push(Op::Scale(a, c), value)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let value = self.map(a, |x| 1.0 - x);
        self.push(Op::OneMinus(a), value)
    }

    /// Concatenates vectors (or scalars) into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape().len() > 1 {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    left: t.shape().to_vec(),
                    right: vec![],
                });
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::vector(data)))
    }

    /// Stacks `k` equal-length vectors into a `[k, d]` matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::invalid("stack of zero rows"))?;
        let d = self.value(*first).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let t = self.value(r);
            if t.shape() != [d] {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    left: vec![d],
                    right: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        let value = Tensor::new(vec![rows.len(), d], data)?;
        Ok(self.push(Op::Stack(rows.to_vec()), value))
    }

    /// `sum_i weights[i] * items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let w = self.value(weights);
        if w.shape() != [items.len()] || items.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "weighted_sum",
                left: w.shape().to_vec(),
                right: vec![items.len()],
            });
        }
        let shape = self.shape(items[0]).to_vec();
        let mut out = vec![0.0; self.value(items[0]).len()];
        for (i, &item) in items.iter().enumerate() {
            let t = self.value(item);
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "weighted_sum",
                    left: shape,
                    right: t.shape().to_vec(),
                });
            }
            let wi = self.value(weights).data()[i];
            for (o, x) in out.iter_mut().zip(t.data()) {
                *o += wi * x;
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            Op::WeightedSum {
                weights,
                items: items.to_vec(),
            },
            value,
        ))
    }

    /// Sum of equally shaped tensors.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::invalid("sum of zero terms"))?;
        let mut acc = self.value(first).clone();
        for &p in &parts[1..] {
            let t = self.value(p);
            if t.shape() != acc.shape() {
                return Err(Error::ShapeMismatch {
                    op: "sum",
                    left: acc.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            for (a, x) in acc.data_mut().iter_mut().zip(t.data()) {
                *a += x;
            }
        }
        Ok(self.push(Op::Sum(parts.to_vec()), acc))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.map(a, sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.map(a, f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.shape().len() > 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax",
                left: t.shape().to_vec(),
                right: vec![],
            });
        }
        let value = Tensor::vector(softmax(t.data())?);
        Ok(self.push(Op::Softmax(a), value))
    }

    /// Inverted dropout: survivors are scaled by `1 / keep`.
    pub fn dropout<R: Rng>(&mut self, a: Var, keep: f64, rng: &mut R) -> Result<Var> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::invalid(format!("keep probability {keep} not in (0, 1]")));
        }
        if keep == 1.0 {
            return Ok(a);
        }
        self.stochastic = true;
        let n = self.value(a).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().zip(&mask).map(|(x, m)| x * m).collect(),
        };
        Ok(self.push(Op::Dropout { input: a, mask }, value))
    }

    /// Dropout with the tape's training configuration; identity when the
    /// tape was built without one.
    pub fn train_dropout(&mut self, a: Var) -> Result<Var> {
        match self.dropout.take() {
            Some(mut d) => {
                let out = self.dropout(a, d.keep, &mut d.rng);
                self.dropout = Some(d);
                out
            }
            None => Ok(a),
        }
    }

    /// `-log softmax(logits)[target]`, computed in log space.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.shape().len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "nll",
                left: t.shape().to_vec(),
                right: vec![],
            });
        }
        if target >= t.len() {
            return Err(Error::OutOfRange {
                what: "nll target",
                index: target,
                size: t.len(),
            });
        }
        let logp = super::log_softmax(t.data())?;
        Ok(self.push(Op::Nll { logits, target }, Tensor::scalar(-logp[target])))
    }

    /// `w x + b`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        let wx = self.matmul(w, x)?;
        self.add(wx, b)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.record {
            return Err(Error::GradDisabled);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => out.add_dense(*id, g, self.store.get(*id).shape()),
                Op::Embedding { table, row } => out.add_row(*table, *row, g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k) = (av.shape()[0], av.shape()[1]);
                    let n = if bv.shape().len() == 1 { 1 } else { bv.shape()[1] };
                    {
                        let ga = acc(&mut grads, *a, m * k);
                        for r in 0..m {
                            let grow = &g[r * n..(r + 1) * n];
                            let garow = &mut ga[r * k..(r + 1) * k];
                            for (p, ga_rp) in garow.iter_mut().enumerate() {
                                let brow = &bv.data()[p * n..(p + 1) * n];
                                *ga_rp += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                    let gb = acc(&mut grads, *b, k * n);
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        let arow = &av.data()[r * k..(r + 1) * k];
                        for (p, a_rp) in arow.iter().enumerate() {
                            if *a_rp == 0.0 {
                                continue;
                            }
                            for (gb_pj, g_rj) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *gb_pj += a_rp * g_rj;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut grads, *b, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut grads, *b, g.len()), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    for ((ga, gi), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(bv.data()) {
                        *ga += gi * y;
                    }
                    for ((gb, gi), x) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g).zip(av.data()) {
                        *gb += gi * x;
                    }
                }
                Op::Scale(a, c) => add_into(acc(&mut grads, *a, g.len()), &g, *c),
                Op::OneMinus(a) => add_into(acc(&mut grads, *a, g.len()), &g, -1.0),
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        add_into(acc(&mut grads, *p, n), &g[offset..offset + n], 1.0);
                        offset += n;
                    }
                }
                Op::Stack(rows) => {
                    let d = g.len() / rows.len();
                    for (r, p) in rows.iter().enumerate() {
                        add_into(acc(&mut grads, *p, d), &g[r * d..(r + 1) * d], 1.0);
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv = self.value(*weights).data().to_vec();
                    let mut gw = vec![0.0; items.len()];
                    for (j, item) in items.iter().enumerate() {
                        let x = self.value(*item).data();
                        gw[j] = g.iter().zip(x).map(|(a, b)| a * b).sum();
                        add_into(acc(&mut grads, *item, g.len()), &g, wv[j]);
                    }
                    add_into(acc(&mut grads, *weights, items.len()), &gw, 1.0);
                }
                Op::Sum(parts) => {
                    for p in parts {
                        add_into(acc(&mut grads, *p, g.len()), &g, 1.0);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(i)).data();
                    for ((ga, gi), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *ga += gi * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i)).data();
                    for ((ga, gi), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *ga += gi * (1.0 - y * y);
                    }
                }
                Op::Softmax(a) => {
                    let y = self.value(Var(i)).data();
                    let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                    for ((ga, gi), y) in acc(&mut grads, *a, g.len()).iter_mut().zip(&g).zip(y) {
                        *ga += y * (gi - dot);
                    }
                }
                Op::Dropout { input, mask } => {
                    for ((ga, gi), m) in acc(&mut grads, *input, g.len()).iter_mut().zip(&g).zip(mask) {
                        *ga += gi * m;
                    }
                }
                Op::Nll { logits, target } => {
                    let p = softmax(self.value(*logits).data())?;
                    let ga = acc(&mut grads, *logits, p.len());
                    for (j, (ga, pj)) in ga.iter_mut().zip(&p).enumerate() {
                        let onehot = if j == *target { 1.0 } else { 0.0 };
                        *ga += g[0] * (pj - onehot);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

/// Parameter gradients produced by [`Tape::backward`].
///
/// Parameters the loss does not reach are absent and read as zero.
/// Embedding tables hold only the rows that were looked up.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    dense: BTreeMap<ParamId, Tensor>,
    rows: BTreeMap<ParamId, BTreeMap<usize, Vec<f64>>>,
}

impl Gradients {
    fn add_dense(&mut self, id: ParamId, g: Vec<f64>, shape: &[usize]) {
        let entry = self.dense.entry(id).or_insert_with(|| Tensor::zeros(shape));
        add_into(entry.data_mut(), &g, 1.0);
    }

    fn add_row(&mut self, id: ParamId, row: usize, g: Vec<f64>) {
        let rows = self.rows.entry(id).or_default();
        match rows.get_mut(&row) {
            Some(existing) => add_into(existing, &g, 1.0),
            None => {
                rows.insert(row, g);
            }
        }
    }

    /// Visits `(param, flat offset, values)` blocks.
    pub fn for_each(&self, mut f: impl FnMut(ParamId, usize, &[f64])) {
        for (id, t) in &self.dense {
            f(*id, 0, t.data());
        }
        for (id, rows) in &self.rows {
            for (row, g) in rows {
                f(*id, row * g.len(), g);
            }
        }
    }

    pub fn reaches(&self, id: ParamId) -> bool {
        self.dense.contains_key(&id) || self.rows.contains_key(&id)
    }

    /// Dense gradient for `id`, zero-filled where unreachable.
    pub fn get(&self, store: &ParameterStore, id: ParamId) -> Tensor {
        let mut out = Tensor::zeros(store.get(id).shape());
        self.for_each(|pid, offset, values| {
            if pid == id {
                add_into(&mut out.data_mut()[offset..offset + values.len()], values, 1.0);
            }
        });
        out
    }
}
