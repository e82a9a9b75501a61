//! Reverse-mode autodiff over row-major matrices.

use std::collections::BTreeMap;

use rand::Rng;

use crate::scalar::{gemm, Scalar, View};

pub type NodeId = usize;

/// Marks an absent row in gather and broadcast maps.
pub const NONE: u32 = u32::MAX;

/// Named parameter matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub names: Vec<String>,
    pub shapes: Vec<(usize, usize)>,
    pub values: Vec<Vec<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            shapes: Vec::new(),
            values: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<T>) -> usize {
        assert_eq!(value.len(), rows * cols, "{name}");
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = self.values.len();
        self.names.push(name.to_string());
        self.shapes.push((rows, cols));
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> &[T] {
        &self.values[self.index[name]]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.values.iter().map(|v| vec![T::zero(); v.len()]).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            names: self.names.clone(),
            shapes: self.shapes.clone(),
            values: self
                .values
                .iter()
                .map(|v| v.iter().map(|x| U::from_f64(x.to_f64().unwrap()).unwrap()).collect())
                .collect(),
            index: self.index.clone(),
        }
    }
}

impl<T: Scalar> Default for Params<T> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct AttnSpec {
    pub batch: usize,
    pub heads: usize,
    pub lq: usize,
    pub lk: usize,
    /// `batch * lk` flags; false keys are never attended.
    pub key_valid: Vec<bool>,
    pub causal: bool,
}

enum Op<T> {
    Param(usize),
    Input,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    AddBias { x: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Scale { x: NodeId, s: T },
    Gelu { x: NodeId },
    LayerNorm { x: NodeId, g: NodeId, b: NodeId, xhat: Vec<T>, rstd: Vec<T> },
    Attention { q: NodeId, k: NodeId, v: NodeId, spec: AttnSpec, probs: Vec<T> },
    Gather { srcs: Vec<NodeId>, idx: Vec<(u32, u32)> },
    AddGathered { x: NodeId, v: NodeId, map: Vec<u32> },
    RowMeans { table: NodeId, sets: Vec<Vec<u32>> },
    Dropout { x: NodeId, mask: Vec<T> },
    CrossEntropy { logits: NodeId, targets: Vec<u32>, smoothing: T, probs: Vec<T>, count: usize },
}

struct Node<T> {
    value: Vec<T>,
    rows: usize,
    cols: usize,
    op: Op<T>,
}

/// One forward pass. Parameter leaves read from the borrowed store.
pub struct Graph<'p, T: Scalar> {
    params: &'p Params<T>,
    nodes: Vec<Node<T>>,
    param_nodes: Vec<Option<NodeId>>,
    pub train: bool,
}

fn view<T>(data: &[T], rows: usize, cols: usize, t: bool) -> View<'_, T> {
    let v = View::dense(data, rows, cols);
    if t {
        v.t()
    } else {
        v
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d = *d + *s;
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new(params: &'p Params<T>, train: bool) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
            train,
        }
    }

    fn push(&mut self, value: Vec<T>, rows: usize, cols: usize, op: Op<T>) -> NodeId {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node { value, rows, cols, op });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        match self.nodes[id].op {
            Op::Param(p) => &self.params.values[p],
            _ => &self.nodes[id].value,
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        (self.nodes[id].rows, self.nodes[id].cols)
    }

    pub fn param(&mut self, p: usize) -> NodeId {
        if let Some(id) = self.param_nodes[p] {
            return id;
        }
        let (r, c) = self.params.shapes[p];
        let id = self.push(Vec::new(), r, c, Op::Param(p));
        self.param_nodes[p] = Some(id);
        id
    }

    pub fn param_named(&mut self, name: &str) -> NodeId {
        let p = self.params.id(name).unwrap_or_else(|| panic!("no parameter {name}"));
        self.param(p)
    }

    pub fn input(&mut self, value: Vec<T>, rows: usize, cols: usize) -> NodeId {
        self.push(value, rows, cols, Op::Input)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        let va = view(self.value(a), ra, ca, ta);
        let vb = view(self.value(b), rb, cb, tb);
        let (m, n) = (va.rows, vb.cols);
        let mut out = vec![T::zero(); m * n];
        gemm(T::one(), va, vb, T::zero(), &mut out, 0, n);
        self.push(out, m, n, Op::MatMul { a, b, ta, tb })
    }

    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(self.value(b).len(), c);
        let mut out = self.value(x).to_vec();
        let bias = self.value(b);
        for row in out.chunks_mut(c) {
            add_into(row, bias);
        }
        self.push(out, r, c, Op::AddBias { x, b })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a), self.shape(b));
        let (r, c) = self.shape(a);
        let mut out = self.value(a).to_vec();
        add_into(&mut out, self.value(b));
        self.push(out, r, c, Op::Add { a, b })
    }

    pub fn scale(&mut self, x: NodeId, s: T) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|v| *v * s).collect();
        self.push(out, r, c, Op::Scale { x, s })
    }

    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let out = self.value(x).iter().map(|&v| gelu(v)).collect();
        self.push(out, r, c, Op::Gelu { x })
    }

    pub fn layer_norm(&mut self, x: NodeId, g: NodeId, b: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let eps = T::c(1e-5);
        let n = T::c(c as f64);
        let (xv, gv, bv) = (self.value(x), self.value(g), self.value(b));
        let mut xhat = vec![T::zero(); r * c];
        let mut rstd = vec![T::zero(); r];
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let row = &xv[i * c..(i + 1) * c];
            let mean = row.iter().fold(T::zero(), |a, &v| a + v) / n;
            let var = row.iter().fold(T::zero(), |a, &v| a + (v - mean) * (v - mean)) / n;
            let rs = (var + eps).sqrt().recip();
            rstd[i] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[i * c + j] = h;
                out[i * c + j] = h * gv[j] + bv[j];
            }
        }
        self.push(out, r, c, Op::LayerNorm { x, g, b, xhat, rstd })
    }

    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, spec: AttnSpec) -> NodeId {
        let d = self.shape(q).1;
        let AttnSpec { batch, heads, lq, lk, .. } = spec;
        assert_eq!(self.shape(q).0, batch * lq);
        assert_eq!(self.shape(k), (batch * lk, d));
        assert_eq!(self.shape(v), (batch * lk, d));
        assert_eq!(spec.key_valid.len(), batch * lk);
        assert_eq!(d % heads, 0);
        let dh = d / heads;
        let scale = T::c(1.0 / (dh as f64).sqrt());
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let mut probs = vec![T::zero(); batch * heads * lq * lk];
        let mut out = vec![T::zero(); batch * lq * d];
        for b in 0..batch {
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * lq * lk..(b * heads + h + 1) * lq * lk];
                let qh = View { data: qv, offset: b * lq * d + h * dh, rows: lq, cols: dh, rs: d, cs: 1 };
                let kh = View { data: kv, offset: b * lk * d + h * dh, rows: lk, cols: dh, rs: d, cs: 1 };
                gemm(scale, qh, kh.t(), T::zero(), p, 0, lk);
                for i in 0..lq {
                    let row = &mut p[i * lk..(i + 1) * lk];
                    let valid = |j: usize| spec.key_valid[b * lk + j] && !(spec.causal && j > i);
                    let mut mx = T::neg_infinity();
                    for (j, s) in row.iter().enumerate() {
                        if valid(j) && *s > mx {
                            mx = *s;
                        }
                    }
                    let mut sum = T::zero();
                    for (j, s) in row.iter_mut().enumerate() {
                        *s = if valid(j) { (*s - mx).exp() } else { T::zero() };
                        sum = sum + *s;
                    }
                    if sum > T::zero() {
                        row.iter_mut().for_each(|s| *s = *s / sum);
                    }
                }
                let vh = View { data: vv, offset: b * lk * d + h * dh, rows: lk, cols: dh, rs: d, cs: 1 };
                gemm(T::one(), View::dense(p, lq, lk), vh, T::zero(), &mut out, b * lq * d + h * dh, d);
            }
        }
        self.push(out, batch * lq, d, Op::Attention { q, k, v, spec, probs })
    }

    /// Rows picked from several same-width sources; `(NONE, _)` gives a zero row.
    pub fn gather(&mut self, srcs: Vec<NodeId>, idx: Vec<(u32, u32)>) -> NodeId {
        let c = self.shape(srcs[0]).1;
        assert!(srcs.iter().all(|&s| self.shape(s).1 == c));
        let mut out = vec![T::zero(); idx.len() * c];
        for (i, &(s, r)) in idx.iter().enumerate() {
            if s != NONE {
                let src = self.value(srcs[s as usize]);
                let r = r as usize;
                out[i * c..(i + 1) * c].copy_from_slice(&src[r * c..(r + 1) * c]);
            }
        }
        let n = idx.len();
        self.push(out, n, c, Op::Gather { srcs, idx })
    }

    pub fn embed(&mut self, table: NodeId, ids: &[u32]) -> NodeId {
        self.gather(vec![table], ids.iter().map(|&i| (0, i)).collect())
    }

    /// `x[i] + v[map[i]]`, leaving rows with `NONE` unchanged.
    pub fn add_gathered(&mut self, x: NodeId, v: NodeId, map: Vec<u32>) -> NodeId {
        let (r, c) = self.shape(x);
        assert_eq!(map.len(), r);
        assert_eq!(self.shape(v).1, c);
        let mut out = self.value(x).to_vec();
        let vv = self.value(v);
        for (i, &m) in map.iter().enumerate() {
            if m != NONE {
                let m = m as usize;
                add_into(&mut out[i * c..(i + 1) * c], &vv[m * c..(m + 1) * c]);
            }
        }
        self.push(out, r, c, Op::AddGathered { x, v, map })
    }

    /// One row per set: the mean of the listed table rows, zero when empty.
    pub fn row_means(&mut self, table: NodeId, sets: Vec<Vec<u32>>) -> NodeId {
        let c = self.shape(table).1;
        let tv = self.value(table);
        let mut out = vec![T::zero(); sets.len() * c];
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let o = &mut out[i * c..(i + 1) * c];
            for &r in set {
                add_into(o, &tv[r as usize * c..(r as usize + 1) * c]);
            }
            let n = T::c(set.len() as f64);
            o.iter_mut().for_each(|v| *v = *v / n);
        }
        let n = sets.len();
        self.push(out, n, c, Op::RowMeans { table, sets })
    }

    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut impl Rng) -> NodeId {
        if !self.train || p <= 0.0 {
            return x;
        }
        let (r, c) = self.shape(x);
        let keep = T::c(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let out = self.value(x).iter().zip(&mask).map(|(a, m)| *a * *m).collect();
        self.push(out, r, c, Op::Dropout { x, mask })
    }

    /// Mean label-smoothed cross entropy over rows whose target is not `NONE`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<u32>, smoothing: f64) -> NodeId {
        let (r, c) = self.shape(logits);
        assert_eq!(targets.len(), r);
        let lv = self.value(logits);
        let eps = T::c(smoothing);
        let off = eps / T::c(c as f64);
        let mut probs = vec![T::zero(); r * c];
        let mut total = T::zero();
        let mut count = 0;
        for i in 0..r {
            if targets[i] == NONE {
                continue;
            }
            count += 1;
            let row = &lv[i * c..(i + 1) * c];
            let mx = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
            let lse = row.iter().fold(T::zero(), |a, &v| a + (v - mx).exp()).ln() + mx;
            let p = &mut probs[i * c..(i + 1) * c];
            for j in 0..c {
                let logp = row[j] - lse;
                p[j] = logp.exp();
                let q = if j as u32 == targets[i] { T::one() - eps + off } else { off };
                total = total - q * logp;
            }
        }
        let loss = if count > 0 { total / T::c(count as f64) } else { T::zero() };
        self.push(vec![loss], 1, 1, Op::CrossEntropy { logits, targets, smoothing: eps, probs, count })
    }

    pub fn scalar(&self, id: NodeId) -> T {
        self.value(id)[0]
    }

    /// Accumulates d(loss)/d(param) into `grads`, one buffer per parameter.
    pub fn backward(&self, loss: NodeId, grads: &mut [Vec<T>]) {
        assert_eq!(self.shape(loss), (1, 1));
        let mut g: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[loss] = Some(vec![T::one()]);
        for id in (0..=loss).rev() {
            let Some(gout) = g[id].take() else { continue };
            let node = &self.nodes[id];
            let acc = |g: &mut Vec<Option<Vec<T>>>, target: NodeId| -> Vec<T> {
                g[target].take().unwrap_or_else(|| {
                    let (r, c) = self.shape(target);
                    vec![T::zero(); r * c]
                })
            };
            match &node.op {
                Op::Param(p) => add_into(&mut grads[*p], &gout),
                Op::Input => {}
                &Op::MatMul { a, b, ta, tb } => {
                    let (ra, ca) = self.shape(a);
                    let (rb, cb) = self.shape(b);
                    let va = view(self.value(a), ra, ca, ta);
                    let vb = view(self.value(b), rb, cb, tb);
                    let dc = View::dense(&gout, node.rows, node.cols);
                    let mut ga = acc(&mut g, a);
                    if ta {
                        gemm(T::one(), vb, dc.t(), T::one(), &mut ga, 0, ca);
                    } else {
                        gemm(T::one(), dc, vb.t(), T::one(), &mut ga, 0, ca);
                    }
                    put(&mut g, a, ga);
                    let mut gb = acc(&mut g, b);
                    if tb {
                        gemm(T::one(), dc.t(), va, T::one(), &mut gb, 0, cb);
                    } else {
                        gemm(T::one(), va.t(), dc, T::one(), &mut gb, 0, cb);
                    }
                    put(&mut g, b, gb);
                }
                &Op::AddBias { x, b } => {
                    let mut gb = acc(&mut g, b);
                    for row in gout.chunks(node.cols) {
                        add_into(&mut gb, row);
                    }
                    put(&mut g, b, gb);
                    let mut gx = acc(&mut g, x);
                    add_into(&mut gx, &gout);
                    put(&mut g, x, gx);
                }
                &Op::Add { a, b } => {
                    for t in [a, b] {
                        let mut gt = acc(&mut g, t);
                        add_into(&mut gt, &gout);
                        put(&mut g, t, gt);
                    }
                }
                &Op::Scale { x, s } => {
                    let mut gx = acc(&mut g, x);
                    for (d, o) in gx.iter_mut().zip(&gout) {
                        *d = *d + *o * s;
                    }
                    put(&mut g, x, gx);
                }
                &Op::Gelu { x } => {
                    let mut gx = acc(&mut g, x);
                    for ((d, o), &v) in gx.iter_mut().zip(&gout).zip(self.value(x)) {
                        *d = *d + *o * gelu_grad(v);
                    }
                    put(&mut g, x, gx);
                }
                Op::LayerNorm { x, g: gn, b, xhat, rstd } => {
                    let c = node.cols;
                    let n = T::c(c as f64);
                    let gain = self.value(*gn);
                    let mut gg = acc(&mut g, *gn);
                    let mut gb = acc(&mut g, *b);
                    let mut gx = acc(&mut g, *x);
                    for i in 0..node.rows {
                        let dy = &gout[i * c..(i + 1) * c];
                        let h = &xhat[i * c..(i + 1) * c];
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..c {
                            gg[j] = gg[j] + dy[j] * h[j];
                            gb[j] = gb[j] + dy[j];
                            let dh = dy[j] * gain[j];
                            m1 = m1 + dh;
                            m2 = m2 + dh * h[j];
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        for j in 0..c {
                            let dh = dy[j] * gain[j];
                            gx[i * c + j] = gx[i * c + j] + rstd[i] * (dh - m1 - h[j] * m2);
                        }
                    }
                    put(&mut g, *gn, gg);
                    put(&mut g, *b, gb);
                    put(&mut g, *x, gx);
                }
                Op::Attention { q, k, v, spec, probs } => {
                    let d = node.cols;
                    let AttnSpec { batch, heads, lq, lk, .. } = *spec;
                    let dh = d / heads;
                    let scale = T::c(1.0 / (dh as f64).sqrt());
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let mut gq = acc(&mut g, *q);
                    let mut gk = acc(&mut g, *k);
                    let mut gv = acc(&mut g, *v);
                    let mut dp = vec![T::zero(); lq * lk];
                    for b in 0..batch {
                        for h in 0..heads {
                            let p = &probs[(b * heads + h) * lq * lk..(b * heads + h + 1) * lq * lk];
                            let pv = View::dense(p, lq, lk);
                            let q_off = b * lq * d + h * dh;
                            let k_off = b * lk * d + h * dh;
                            let dout = View { data: &gout, offset: q_off, rows: lq, cols: dh, rs: d, cs: 1 };
                            let vh = View { data: vv, offset: k_off, rows: lk, cols: dh, rs: d, cs: 1 };
                            gemm(T::one(), pv.t(), dout, T::one(), &mut gv, k_off, d);
                            gemm(T::one(), dout, vh.t(), T::zero(), &mut dp, 0, lk);
                            for i in 0..lq {
                                let pr = &p[i * lk..(i + 1) * lk];
                                let dr = &mut dp[i * lk..(i + 1) * lk];
                                let dot = pr.iter().zip(dr.iter()).fold(T::zero(), |a, (x, y)| a + *x * *y);
                                for (dv, pv) in dr.iter_mut().zip(pr) {
                                    *dv = *pv * (*dv - dot) * scale;
                                }
                            }
                            let ds = View::dense(&dp, lq, lk);
                            let kh = View { data: kv, offset: k_off, rows: lk, cols: dh, rs: d, cs: 1 };
                            let qh = View { data: qv, offset: q_off, rows: lq, cols: dh, rs: d, cs: 1 };
                            gemm(T::one(), ds, kh, T::one(), &mut gq, q_off, d);
                            gemm(T::one(), ds.t(), qh, T::one(), &mut gk, k_off, d);
                        }
                    }
                    put(&mut g, *q, gq);
                    put(&mut g, *k, gk);
                    put(&mut g, *v, gv);
                }
                Op::Gather { srcs, idx } => {
                    let c = node.cols;
                    let mut bufs: Vec<Vec<T>> = srcs.iter().map(|&s| acc(&mut g, s)).collect();
                    for (i, &(s, r)) in idx.iter().enumerate() {
                        if s != NONE {
                            let r = r as usize;
                            add_into(&mut bufs[s as usize][r * c..(r + 1) * c], &gout[i * c..(i + 1) * c]);
                        }
                    }
                    for (s, buf) in srcs.iter().zip(bufs) {
                        put(&mut g, *s, buf);
                    }
                }
                Op::AddGathered { x, v, map } => {
                    let c = node.cols;
                    let mut gv = acc(&mut g, *v);
                    for (i, &m) in map.iter().enumerate() {
                        if m != NONE {
                            let m = m as usize;
                            add_into(&mut gv[m * c..(m + 1) * c], &gout[i * c..(i + 1) * c]);
                        }
                    }
                    put(&mut g, *v, gv);
                    let mut gx = acc(&mut g, *x);
                    add_into(&mut gx, &gout);
                    put(&mut g, *x, gx);
                }
                Op::RowMeans { table, sets } => {
                    let c = node.cols;
                    let mut gt = acc(&mut g, *table);
                    for (i, set) in sets.iter().enumerate() {
                        if set.is_empty() {
                            continue;
                        }
                        let n = T::c(set.len() as f64);
                        for &r in set {
                            let r = r as usize;
                            for j in 0..c {
                                gt[r * c + j] = gt[r * c + j] + gout[i * c + j] / n;
                            }
                        }
                    }
                    put(&mut g, *table, gt);
                }
                Op::Dropout { x, mask } => {
                    let mut gx = acc(&mut g, *x);
                    for ((d, o), m) in gx.iter_mut().zip(&gout).zip(mask) {
                        *d = *d + *o * *m;
                    }
                    put(&mut g, *x, gx);
                }
                Op::CrossEntropy { logits, targets, smoothing, probs, count } => {
                    if *count == 0 {
                        continue;
                    }
                    let c = self.shape(*logits).1;
                    let off = *smoothing / T::c(c as f64);
                    let w = gout[0] / T::c(*count as f64);
                    let mut gl = acc(&mut g, *logits);
                    for (i, &t) in targets.iter().enumerate() {
                        if t == NONE {
                            continue;
                        }
                        for j in 0..c {
                            let q = if j as u32 == t { T::one() - *smoothing + off } else { off };
                            gl[i * c + j] = gl[i * c + j] + w * (probs[i * c + j] - q);
                        }
                    }
                    put(&mut g, *logits, gl);
                }
            }
        }
    }
}

/// Stores a gradient buffer, adding to one already there when the same node
/// feeds an op twice.
fn put<T: Scalar>(g: &mut [Option<Vec<T>>], id: NodeId, buf: Vec<T>) {
    match &mut g[id] {
        Some(existing) => add_into(existing, &buf),
        slot => *slot = Some(buf),
    }
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::c((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::c(0.044715) * x * x * x);
    T::c(0.5) * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::c((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::c(0.044715) * x * x * x);
    let t = u.tanh();
    T::c(0.5) * (T::one() + t) + T::c(0.5) * x * (T::one() - t * t) * c * (T::one() + T::c(3.0 * 0.044715) * x * x)
}
