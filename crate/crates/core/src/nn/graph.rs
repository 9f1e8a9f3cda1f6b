//! Reverse-mode automatic differentiation over 2-D f64 matrices.
//!
//! A [`Graph`] records one forward pass. Parameters are read from a
//! [`ParamStore`] and their gradients are accumulated into a [`Grads`]
//! buffer by [`Graph::backward`]. Graphs are cheap and built per sample.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use super::params::{Grads, ParamId, ParamStore};

pub type Mat = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    GatherParam(ParamId, Vec<usize>),
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast a `1 x n` row over every row of an `m x n` matrix.
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize),
    SliceCols(NodeId, usize),
    SoftmaxRows(NodeId),
    /// Normalized output is the node value; the cache holds 1/σ per row.
    LayerNorm(NodeId, Vec<f64>),
    Gelu(NodeId),
    MeanRows(NodeId),
    /// Softmax probabilities cached for the backward pass.
    CrossEntropy(NodeId, usize, Vec<f64>),
}

struct Node {
    value: Mat,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Const)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.params.value(id).clone();
        self.push(value, Op::Param(id))
    }

    /// Rows `idx` of a parameter table, without copying the whole table.
    pub fn gather(&mut self, id: ParamId, idx: &[usize]) -> NodeId {
        let table = self.params.value(id);
        let mut out = Mat::zeros((idx.len(), table.ncols()));
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).assign(&table.row(i));
        }
        self.push(out, Op::GatherParam(id, idx.to_vec()))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<ArrayView2<f64>> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row /= z;
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> NodeId {
        let x = self.value(a);
        let n = x.ncols() as f64;
        let mut v = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in v.rows_mut() {
            let mean = row.sum() / n;
            row -= mean;
            let var = row.fold(0.0, |acc, &d| acc + d * d) / n;
            let r = 1.0 / (var + eps).sqrt();
            row *= r;
            inv_std.push(r);
        }
        self.push(v, Op::LayerNorm(a, inv_std))
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()));
        self.push(v, Op::Gelu(a))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("mean of empty matrix")
            .insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    /// Cross-entropy of a `1 x C` logit row against class `target`; yields a `1 x 1` node.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> NodeId {
        let z = self.value(logits).row(0).to_vec();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
        let loss = m + sum.ln() - z[target];
        self.push(
            Mat::from_elem((1, 1), loss),
            Op::CrossEntropy(logits, target, probs),
        )
    }

    /// Back-propagate from a scalar node, accumulating parameter gradients.
    pub fn backward(&self, root: NodeId, grads: &mut Grads) {
        debug_assert_eq!(self.value(root).dim(), (1, 1));
        let mut adj: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(Mat::from_elem((1, 1), 1.0));

        fn acc(adj: &mut [Option<Mat>], id: NodeId, g: Mat) {
            match &mut adj[id.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Const => {}
                Op::Param(p) => grads.accumulate(*p, &g),
                Op::GatherParam(p, idx) => grads.accumulate_rows(*p, idx, &g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MatMulBt(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, g);
                }
                Op::MulRow(a, row) => {
                    let gr = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let ga = &g * self.value(*row);
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, ga);
                }
                Op::Scale(a, c) => acc(&mut adj, *a, g * *c),
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        acc(&mut adj, *p, g.slice(s![start..start + n, ..]).to_owned());
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).ncols();
                        acc(&mut adj, *p, g.slice(s![.., start..start + n]).to_owned());
                        start += n;
                    }
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut adj, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut adj, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for (mut gr, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = gr.dot(&yr);
                        gr -= dot;
                        gr *= &yr;
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::LayerNorm(a, inv_std) => {
                    let y = &node.value;
                    let n = y.ncols() as f64;
                    let mut ga = g;
                    for ((mut gr, yr), &r) in ga.rows_mut().into_iter().zip(y.rows()).zip(inv_std) {
                        let mean_g = gr.sum() / n;
                        let mean_gy = gr.dot(&yr) / n;
                        gr.zip_mut_with(&yr, |gv, &yv| *gv = r * (*gv - mean_g - yv * mean_gy));
                    }
                    acc(&mut adj, *a, ga);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    ga.zip_mut_with(x, |gv, &xv| {
                        let u = GELU_C * (xv + GELU_A * xv * xv * xv);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * xv * xv);
                        *gv *= 0.5 * (1.0 + t) + 0.5 * xv * (1.0 - t * t) * du;
                    });
                    acc(&mut adj, *a, ga);
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).nrows();
                    let row = g.row(0).to_owned() / n as f64;
                    let ga = row.broadcast((n, row.len())).unwrap().to_owned();
                    acc(&mut adj, *a, ga);
                }
                Op::CrossEntropy(logits, target, probs) => {
                    let scale = g[[0, 0]];
                    let mut gl = Mat::zeros((1, probs.len()));
                    for (j, &p) in probs.iter().enumerate() {
                        gl[[0, j]] = scale * (p - if j == *target { 1.0 } else { 0.0 });
                    }
                    acc(&mut adj, *logits, gl);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamStore;
    use ndarray::array;

    /// Central finite differences of `f` with respect to every entry of every parameter.
    fn check<F>(store: &mut ParamStore, f: F)
    where
        F: Fn(&mut Graph<'_>) -> NodeId,
    {
        let mut grads = Grads::zeros_like(store);
        {
            let mut g = Graph::new(store);
            let root = f(&mut g);
            g.backward(root, &mut grads);
        }
        let h = 1e-6;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let shape = store.value(id).dim();
            for r in 0..shape.0 {
                for c in 0..shape.1 {
                    let orig = store.value(id)[[r, c]];
                    store.value_mut(id)[[r, c]] = orig + h;
                    let up = {
                        let mut g = Graph::new(store);
                        let root = f(&mut g);
                        g.value(root)[[0, 0]]
                    };
                    store.value_mut(id)[[r, c]] = orig - h;
                    let down = {
                        let mut g = Graph::new(store);
                        let root = f(&mut g);
                        g.value(root)[[0, 0]]
                    };
                    store.value_mut(id)[[r, c]] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.get(id)[[r, c]];
                    assert!(
                        (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                        "{} [{r},{c}]: analytic {analytic} vs numeric {numeric}",
                        store.name(id)
                    );
                }
            }
        }
    }

    #[test]
    fn every_op_matches_finite_differences() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.7]], true, true);
        let x = store.add("x", array![[1.0, 2.0], [-0.5, 0.3], [0.2, 0.2]], true, true);
        let row = store.add("row", array![[0.1, -0.3, 0.2]], true, false);
        let table = store.add("table", array![[0.5, 0.1, 0.0], [-0.2, 0.3, 0.9]], true, false);
        let head = store.add("head", array![[0.2, -0.1], [0.4, 0.3], [-0.6, 0.8]], true, true);
        check(&mut store, |g| {
            let xn = g.param(x);
            let wn = g.param(w);
            let h = g.matmul(xn, wn); // 3x3
            let r = g.param(row);
            let h = g.add_row(h, r);
            let n = g.layer_norm(h, 1e-5);
            let rown = g.param(row);
            let n = g.mul_row(n, rown);
            let e = g.gather(table, &[1, 0, 1]);
            let n = g.add(n, e);
            let sc = g.matmul_bt(n, n);
            let sc = g.scale(sc, 0.5);
            let p = g.softmax_rows(sc);
            let o = g.matmul(p, n);
            let left = g.slice_cols(o, 0, 2);
            let right = g.slice_cols(o, 2, 1);
            let o = g.concat_cols(&[right, left]);
            let o = g.gelu(o);
            let top = g.slice_rows(o, 0, 1);
            let rest = g.slice_rows(o, 1, 2);
            let m = g.mean_rows(rest);
            let o = g.concat_rows(&[m, top]);
            let o = g.gelu(o);
            let last = g.slice_rows(o, 1, 1);
            let hn = g.param(head);
            let logits = g.matmul(last, hn);
            g.cross_entropy(logits, 1)
        });
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let z = g.constant(array![[0.0, 0.0]]);
        let l = g.cross_entropy(z, 0);
        assert!((g.value(l)[[0, 0]] - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
