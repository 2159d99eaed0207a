//! Tape of tensor operations with reverse-mode gradients.

use std::collections::{BTreeMap, HashMap};

use super::tensor::{matmul_nn, matmul_nt, matmul_tn_acc, Tensor};

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Debug, Clone)]
struct PrefixSaved {
    k: NodeId,
    v: NodeId,
    gate: NodeId,
    /// softmax over prefix slots, [rows, heads, p]
    probs: Vec<f64>,
    /// ungated prefix read-out, same shape as the attention output
    mix: Tensor,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param { name: String, trainable: bool },
    MatMulT { x: NodeId, w: NodeId },
    AddBias { x: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Gelu { x: NodeId },
    LayerNorm { x: NodeId, g: NodeId, b: NodeId, xhat: Tensor, rstd: Vec<f64> },
    TokenEmbed { x: NodeId, pos: NodeId, modality: NodeId },
    Interleave { p: NodeId, r: NodeId, steps: usize },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        seq: usize,
        group: usize,
        /// softmax over visible tokens, [rows, heads, seq] (masked entries 0)
        probs: Vec<f64>,
        prefix: Option<Box<PrefixSaved>>,
    },
    GatherRows { x: NodeId, idx: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// One forward pass worth of recorded operations.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, NodeId>,
    labels: BTreeMap<String, NodeId>,
    non_finite: Option<String>,
}

impl Graph {
    pub fn new() -> Graph {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op, what: &str) -> NodeId {
        let needs_grad = match &op {
            Op::Input => false,
            Op::Param { trainable, .. } => *trainable,
            other => children(other).iter().any(|&c| self.nodes[c].needs_grad),
        };
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(what.to_string());
        }
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    /// Name of the first operation that produced a non-finite value.
    pub fn non_finite(&self) -> Option<&str> {
        self.non_finite.as_deref()
    }

    pub fn label(&mut self, name: impl Into<String>, id: NodeId) {
        self.labels.insert(name.into(), id);
    }

    pub fn labelled(&self, name: &str) -> Option<&Tensor> {
        self.labels.get(name).map(|&id| self.value(id))
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input, "input")
    }

    /// Leaf for a named parameter; repeated calls reuse the same node.
    pub fn param(&mut self, name: &str, t: &Tensor, trainable: bool) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        let id = self.push(
            t.clone(),
            Op::Param {
                name: name.to_string(),
                trainable,
            },
            name,
        );
        self.params.insert(name.to_string(), id);
        id
    }

    /// `x w^T`
    pub fn matmul_t(&mut self, x: NodeId, w: NodeId) -> NodeId {
        let v = matmul_nt(self.value(x), self.value(w));
        self.push(v, Op::MatMulT { x, w }, "matmul")
    }

    /// Adds a `[1, n]` row to every row of `x`.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        let bias = self.value(b);
        assert_eq!((bias.rows, bias.cols), (1, v.cols), "bias shape");
        for r in 0..v.rows {
            for (o, bb) in v.row_mut(r).iter_mut().zip(&bias.data) {
                *o += bb;
            }
        }
        self.push(v, Op::AddBias { x, b }, "bias")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add { a, b }, "add")
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let src = self.value(x);
        let v = Tensor::from_vec(src.rows, src.cols, src.data.iter().map(|&z| gelu(z)).collect());
        self.push(v, Op::Gelu { x }, "gelu")
    }

    pub fn layer_norm(&mut self, x: NodeId, g: NodeId, b: NodeId) -> NodeId {
        let src = self.value(x);
        let (rows, d) = src.shape();
        let mut xhat = Tensor::zeros(rows, d);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = src.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
            rstd.push(s);
        }
        let (gv, bv) = (self.value(g), self.value(b));
        let mut out = xhat.clone();
        for r in 0..rows {
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = *o * gv.data[c] + bv.data[c];
            }
        }
        self.push(out, Op::LayerNorm { x, g, b, xhat, rstd }, "layer_norm")
    }

    /// Adds `pos[step]` and `modality[m]` to each token row, where token rows
    /// come in per-sample blocks of `2 * pos.rows` ordered (step, modality).
    pub fn token_embed(&mut self, x: NodeId, pos: NodeId, modality: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        let (p, m) = (self.value(pos), self.value(modality));
        let seq = 2 * p.rows;
        for r in 0..v.rows {
            let t = r % seq;
            let (pr, mr) = (p.row(t / 2), m.row(t % 2));
            for (c, o) in v.row_mut(r).iter_mut().enumerate() {
                *o += pr[c] + mr[c];
            }
        }
        self.push(v, Op::TokenEmbed { x, pos, modality }, "token_embed")
    }

    /// Rows `[p_0, r_0, p_1, r_1, ...]` per sample from per-step rows of `p` and `r`.
    pub fn interleave(&mut self, p: NodeId, r: NodeId, steps: usize) -> NodeId {
        let (pv, rv) = (self.value(p), self.value(r));
        assert_eq!(pv.shape(), rv.shape());
        let batch = pv.rows / steps;
        let mut out = Tensor::zeros(2 * pv.rows, pv.cols);
        for b in 0..batch {
            for s in 0..steps {
                let src = b * steps + s;
                out.row_mut(b * 2 * steps + 2 * s).copy_from_slice(pv.row(src));
                out.row_mut(b * 2 * steps + 2 * s + 1).copy_from_slice(rv.row(src));
            }
        }
        self.push(out, Op::Interleave { p, r, steps }, "interleave")
    }

    /// Multi-head attention inside per-sample blocks of `seq` rows. Token `i`
    /// sees token `j` iff `j / group <= i / group`. With a prefix, each head
    /// adds `tanh(gate[h])` times a separate softmax read-out over the prefix
    /// keys and values.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        seq: usize,
        group: usize,
        prefix: Option<(NodeId, NodeId, NodeId)>,
    ) -> NodeId {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.shape();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Tensor::zeros(rows, d);
        let mut probs = vec![0.0; rows * heads * seq];
        let mut scores = vec![0.0; seq];
        for base in (0..rows).step_by(seq) {
            for i in 0..seq {
                let row = base + i;
                for h in 0..heads {
                    let qs = &qv.row(row)[h * dh..(h + 1) * dh];
                    let visible = (i / group + 1) * group;
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..visible {
                        let ks = &kv.row(base + j)[h * dh..(h + 1) * dh];
                        scores[j] = scale * qs.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(scores[j]);
                    }
                    let mut z = 0.0;
                    for s in scores.iter_mut().take(visible) {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    let p = &mut probs[(row * heads + h) * seq..(row * heads + h + 1) * seq];
                    let o = &mut out.row_mut(row)[h * dh..(h + 1) * dh];
                    for j in 0..visible {
                        p[j] = scores[j] / z;
                        let vs = &vv.row(base + j)[h * dh..(h + 1) * dh];
                        for (oo, vvv) in o.iter_mut().zip(vs) {
                            *oo += p[j] * vvv;
                        }
                    }
                }
            }
        }
        let prefix = prefix.map(|(pk, pv, gate)| {
            let (kv, vv, gv) = (self.value(pk), self.value(pv), self.value(gate));
            let p = kv.rows;
            let mut pp = vec![0.0; rows * heads * p];
            let mut mix = Tensor::zeros(rows, d);
            for row in 0..rows {
                for h in 0..heads {
                    let qs = &qv.row(row)[h * dh..(h + 1) * dh];
                    let pr = &mut pp[(row * heads + h) * p..(row * heads + h + 1) * p];
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in pr.iter_mut().enumerate() {
                        let ks = &kv.row(j)[h * dh..(h + 1) * dh];
                        *s = scale * qs.iter().zip(ks).map(|(a, b)| a * b).sum::<f64>();
                        max = max.max(*s);
                    }
                    let mut z = 0.0;
                    for s in pr.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    let m = &mut mix.row_mut(row)[h * dh..(h + 1) * dh];
                    for (j, s) in pr.iter_mut().enumerate() {
                        *s /= z;
                        let vs = &vv.row(j)[h * dh..(h + 1) * dh];
                        for (mm, vvv) in m.iter_mut().zip(vs) {
                            *mm += *s * vvv;
                        }
                    }
                    let gh = gv.data[h].tanh();
                    let o = &mut out.row_mut(row)[h * dh..(h + 1) * dh];
                    for (oo, mm) in o.iter_mut().zip(&mix.row(row)[h * dh..(h + 1) * dh]) {
                        *oo += gh * mm;
                    }
                }
            }
            Box::new(PrefixSaved {
                k: pk,
                v: pv,
                gate,
                probs: pp,
                mix,
            })
        });
        self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq,
                group,
                probs,
                prefix,
            },
            "attention",
        )
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> NodeId {
        let v = self.value(x).gather_rows(&idx);
        self.push(v, Op::GatherRows { x, idx }, "gather")
    }

    /// Gradients of `sum(upstream * value(out))` for every trainable parameter.
    pub fn backward(&self, out: NodeId, upstream: &Tensor) -> BTreeMap<String, Tensor> {
        assert_eq!(upstream.shape(), self.value(out).shape(), "upstream gradient shape");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[out] = Some(upstream.clone());
        let mut result = BTreeMap::new();
        for id in (0..=out).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Param { name, .. } => {
                    result.insert(name.clone(), g);
                }
                Op::MatMulT { x, w } => {
                    if self.nodes[*x].needs_grad {
                        let dx = matmul_nn(&g, self.value(*w));
                        self.acc(&mut grads, *x, dx);
                    }
                    if self.nodes[*w].needs_grad {
                        let wv = self.value(*w);
                        let dw = grads[*w].get_or_insert_with(|| Tensor::zeros(wv.rows, wv.cols));
                        matmul_tn_acc(&g, self.value(*x), dw);
                    }
                }
                Op::AddBias { x, b } => {
                    if self.nodes[*b].needs_grad {
                        let mut db = Tensor::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for (o, v) in db.data.iter_mut().zip(g.row(r)) {
                                *o += v;
                            }
                        }
                        self.acc(&mut grads, *b, db);
                    }
                    self.acc(&mut grads, *x, g);
                }
                Op::Add { a, b } => {
                    self.acc(&mut grads, *a, g.clone());
                    self.acc(&mut grads, *b, g);
                }
                Op::Gelu { x } => {
                    let xv = self.value(*x);
                    let dx = Tensor::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&xv.data).map(|(gg, z)| gg * gelu_grad(*z)).collect(),
                    );
                    self.acc(&mut grads, *x, dx);
                }
                Op::LayerNorm { x, g: gam, b, xhat, rstd } => {
                    let gv = self.value(*gam);
                    let d = g.cols;
                    if self.nodes[*gam].needs_grad || self.nodes[*b].needs_grad {
                        let mut dg = Tensor::zeros(1, d);
                        let mut db = Tensor::zeros(1, d);
                        for r in 0..g.rows {
                            for c in 0..d {
                                dg.data[c] += g.at(r, c) * xhat.at(r, c);
                                db.data[c] += g.at(r, c);
                            }
                        }
                        self.acc(&mut grads, *gam, dg);
                        self.acc(&mut grads, *b, db);
                    }
                    if self.nodes[*x].needs_grad {
                        let mut dx = Tensor::zeros(g.rows, d);
                        for r in 0..g.rows {
                            let mut m1 = 0.0;
                            let mut m2 = 0.0;
                            for c in 0..d {
                                let dxh = g.at(r, c) * gv.data[c];
                                m1 += dxh;
                                m2 += dxh * xhat.at(r, c);
                            }
                            m1 /= d as f64;
                            m2 /= d as f64;
                            for c in 0..d {
                                let dxh = g.at(r, c) * gv.data[c];
                                *dx.at_mut(r, c) = rstd[r] * (dxh - m1 - xhat.at(r, c) * m2);
                            }
                        }
                        self.acc(&mut grads, *x, dx);
                    }
                }
                Op::TokenEmbed { x, pos, modality } => {
                    let steps = self.value(*pos).rows;
                    let seq = 2 * steps;
                    if self.nodes[*pos].needs_grad || self.nodes[*modality].needs_grad {
                        let mut dp = Tensor::zeros(steps, g.cols);
                        let mut dm = Tensor::zeros(2, g.cols);
                        for r in 0..g.rows {
                            let t = r % seq;
                            for (c, v) in g.row(r).iter().enumerate() {
                                *dp.at_mut(t / 2, c) += v;
                                *dm.at_mut(t % 2, c) += v;
                            }
                        }
                        self.acc(&mut grads, *pos, dp);
                        self.acc(&mut grads, *modality, dm);
                    }
                    self.acc(&mut grads, *x, g);
                }
                Op::Interleave { p, r, steps } => {
                    let half = g.rows / 2;
                    let mut dp = Tensor::zeros(half, g.cols);
                    let mut dr = Tensor::zeros(half, g.cols);
                    for b in 0..half / steps {
                        for s in 0..*steps {
                            let dst = b * steps + s;
                            dp.row_mut(dst).copy_from_slice(g.row(b * 2 * steps + 2 * s));
                            dr.row_mut(dst).copy_from_slice(g.row(b * 2 * steps + 2 * s + 1));
                        }
                    }
                    self.acc(&mut grads, *p, dp);
                    self.acc(&mut grads, *r, dr);
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    seq,
                    group,
                    probs,
                    prefix,
                } => {
                    let (dq, dk, dv, pre) = self.attention_backward(&g, *q, *k, *v, *heads, *seq, *group, probs, prefix.as_deref());
                    self.acc(&mut grads, *q, dq);
                    self.acc(&mut grads, *k, dk);
                    self.acc(&mut grads, *v, dv);
                    if let (Some(p), Some((dpk, dpv, dg))) = (prefix, pre) {
                        self.acc(&mut grads, p.k, dpk);
                        self.acc(&mut grads, p.v, dpv);
                        self.acc(&mut grads, p.gate, dg);
                    }
                }
                Op::GatherRows { x, idx } => {
                    let xv = self.value(*x);
                    let mut dx = Tensor::zeros(xv.rows, xv.cols);
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, v) in dx.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    self.acc(&mut grads, *x, dx);
                }
            }
        }
        result
    }

    fn acc(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id].needs_grad {
            return;
        }
        match &mut grads[id] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    fn attention_backward(
        &self,
        g: &Tensor,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        seq: usize,
        group: usize,
        probs: &[f64],
        prefix: Option<&PrefixSaved>,
    ) -> (Tensor, Tensor, Tensor, Option<(Tensor, Tensor, Tensor)>) {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (rows, d) = qv.shape();
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Tensor::zeros(rows, d);
        let mut dk = Tensor::zeros(rows, d);
        let mut dv = Tensor::zeros(rows, d);
        let mut dp = vec![0.0; seq];
        for base in (0..rows).step_by(seq) {
            for i in 0..seq {
                let row = base + i;
                let visible = (i / group + 1) * group;
                for h in 0..heads {
                    let hs = h * dh..(h + 1) * dh;
                    let go = &g.row(row)[hs.clone()];
                    let p = &probs[(row * heads + h) * seq..(row * heads + h + 1) * seq];
                    let mut dot = 0.0;
                    for j in 0..visible {
                        let vs = &vv.row(base + j)[hs.clone()];
                        dp[j] = go.iter().zip(vs).map(|(a, b)| a * b).sum();
                        dot += p[j] * dp[j];
                        for (o, gg) in dv.row_mut(base + j)[hs.clone()].iter_mut().zip(go) {
                            *o += p[j] * gg;
                        }
                    }
                    for j in 0..visible {
                        let ds = p[j] * (dp[j] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for c in hs.clone() {
                            *dq.at_mut(row, c) += ds * kv.at(base + j, c);
                            *dk.at_mut(base + j, c) += ds * qv.at(row, c);
                        }
                    }
                }
            }
        }
        let pre = prefix.map(|pre| {
            let (pk, pv, gate) = (self.value(pre.k), self.value(pre.v), self.value(pre.gate));
            let p = pk.rows;
            let mut dpk = Tensor::zeros(p, d);
            let mut dpv = Tensor::zeros(p, d);
            let mut dgate = Tensor::zeros(1, heads);
            let mut dr = vec![0.0; p];
            for row in 0..rows {
                for h in 0..heads {
                    let hs = h * dh..(h + 1) * dh;
                    let gh = gate.data[h].tanh();
                    let go = &g.row(row)[hs.clone()];
                    let mix = &pre.mix.row(row)[hs.clone()];
                    dgate.data[h] += (1.0 - gh * gh) * go.iter().zip(mix).map(|(a, b)| a * b).sum::<f64>();
                    let r = &pre.probs[(row * heads + h) * p..(row * heads + h + 1) * p];
                    let mut dot = 0.0;
                    for j in 0..p {
                        let vs = &pv.row(j)[hs.clone()];
                        dr[j] = gh * go.iter().zip(vs).map(|(a, b)| a * b).sum::<f64>();
                        dot += r[j] * dr[j];
                        for (o, gg) in dpv.row_mut(j)[hs.clone()].iter_mut().zip(go) {
                            *o += gh * r[j] * gg;
                        }
                    }
                    for j in 0..p {
                        let ds = r[j] * (dr[j] - dot) * scale;
                        for c in hs.clone() {
                            *dq.at_mut(row, c) += ds * pk.at(j, c);
                            *dpk.at_mut(j, c) += ds * qv.at(row, c);
                        }
                    }
                }
            }
            (dpk, dpv, dgate)
        });
        (dq, dk, dv, pre)
    }
}

fn children(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Input | Op::Param { .. } => vec![],
        Op::MatMulT { x, w } => vec![*x, *w],
        Op::AddBias { x, b } => vec![*x, *b],
        Op::Add { a, b } => vec![*a, *b],
        Op::Gelu { x } => vec![*x],
        Op::LayerNorm { x, g, b, .. } => vec![*x, *g, *b],
        Op::TokenEmbed { x, pos, modality } => vec![*x, *pos, *modality],
        Op::Interleave { p, r, .. } => vec![*p, *r],
        Op::Attention { q, k, v, prefix, .. } => {
            let mut c = vec![*q, *k, *v];
            if let Some(p) = prefix {
                c.extend([p.k, p.v, p.gate]);
            }
            c
        }
        Op::GatherRows { x, .. } => vec![*x],
    }
}
