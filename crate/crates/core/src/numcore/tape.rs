//! Wengert-list reverse-mode differentiation over [`Tensor`] values.
//!
//! Every operation appends a node whose parents already live on the tape, so
//! node order is a topological order and the backward sweep is a single
//! reverse pass. A tape records one forward evaluation and is then dropped.

use super::tensor::{self, dot_slices, require_rank, same_shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatVec { m: usize, v: usize, offset: usize },
    MatVecT { m: usize, v: usize },
    Add(usize, usize),
    AddRows(usize, usize),
    Sub(usize, usize),
    Hadamard(usize, usize),
    Concat(Vec<usize>),
    Stack(Vec<usize>),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    Abs(usize),
    OneMinus(usize),
    Dot(usize, usize),
    Mean(usize),
    Scale(usize, f64),
    Index(usize, usize),
}

impl Op {
    fn for_each_parent(&self, mut f: impl FnMut(usize)) {
        match self {
            Op::Leaf | Op::Constant => {}
            Op::MatVec { m, v, .. } | Op::MatVecT { m, v } => {
                f(*m);
                f(*v);
            }
            Op::Add(a, b) | Op::AddRows(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) | Op::Dot(a, b) => {
                f(*a);
                f(*b);
            }
            Op::Concat(parts) | Op::Stack(parts) => parts.iter().copied().for_each(f),
            Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softmax(a)
            | Op::Abs(a)
            | Op::OneMinus(a)
            | Op::Mean(a)
            | Op::Scale(a, _)
            | Op::Index(a, _) => f(*a),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    /// True when some leaf is reachable through the parents.
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Adjoint of `var`; `None` when the loss does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.adjoints.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.adjoints.get_mut(var.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// A trainable input; receives an adjoint on backward.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input; never receives an adjoint.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op) -> Var {
        let mut tracked = false;
        op.for_each_parent(|p| tracked |= self.nodes[p].tracked);
        self.push(value, op, tracked)
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = tensor::matvec(self.val(m), self.val(v))?;
        Ok(self.push_op(
            out,
            Op::MatVec {
                m: m.0,
                v: v.0,
                offset: 0,
            },
        ))
    }

    /// `m[:, offset..offset + |v|] · v`.
    pub fn matvec_cols(&mut self, m: Var, v: Var, offset: usize) -> Result<Var> {
        let out = tensor::matvec_cols(self.val(m), self.val(v), offset)?;
        Ok(self.push_op(out, Op::MatVec { m: m.0, v: v.0, offset }))
    }

    /// `mᵀ · v`.
    pub fn matvec_t(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = tensor::matvec_t(self.val(m), self.val(v))?;
        Ok(self.push_op(out, Op::MatVecT { m: m.0, v: v.0 }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), "add", |x, y| x + y)?;
        Ok(self.push_op(out, Op::Add(a.0, b.0)))
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_rows(&mut self, m: Var, v: Var) -> Result<Var> {
        let out = tensor::add_rows(self.val(m), self.val(v))?;
        Ok(self.push_op(out, Op::AddRows(m.0, v.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), "sub", |x, y| x - y)?;
        Ok(self.push_op(out, Op::Sub(a.0, b.0)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::hadamard(self.val(a), self.val(b))?;
        Ok(self.push_op(out, Op::Hadamard(a.0, b.0)))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        self.concat_many(&[a, b])
    }

    pub fn concat_many(&mut self, parts: &[Var]) -> Result<Var> {
        let mut values = Vec::new();
        for &p in parts {
            require_rank("concat", self.val(p), 1)?;
            values.extend_from_slice(self.val(p).values());
        }
        let out = Tensor::vector(values);
        Ok(self.push_op(out, Op::Concat(parts.iter().map(|p| p.0).collect())))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows.first().ok_or_else(|| Error::Domain("stack of zero rows".into()))?;
        let width = self.val(*first).len();
        let mut values = Vec::with_capacity(width * rows.len());
        for &r in rows {
            let t = self.val(r);
            require_rank("stack", t, 1)?;
            same_shape("stack", self.val(*first), t)?;
            values.extend_from_slice(t.values());
        }
        let out = Tensor::matrix(rows.len(), width, values)?;
        Ok(self.push_op(out, Op::Stack(rows.iter().map(|r| r.0).collect())))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = tensor::sigmoid(self.val(a));
        self.push_op(out, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = tensor::tanh_act(self.val(a));
        self.push_op(out, Op::Tanh(a.0))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let out = tensor::softmax(self.val(a))?;
        Ok(self.push_op(out, Op::Softmax(a.0)))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.val(a).map(f64::abs);
        self.push_op(out, Op::Abs(a.0))
    }

    /// `1 − a`, element-wise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| 1.0 - x);
        self.push_op(out, Op::OneMinus(a.0))
    }

    /// Inner product of two vectors, as a length-1 tensor.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("dot", self.val(a), self.val(b))?;
        let out = Tensor::scalar(dot_slices(self.val(a).values(), self.val(b).values()));
        Ok(self.push_op(out, Op::Dot(a.0, b.0)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.val(a);
        if t.is_empty() {
            return Err(Error::Domain("mean of an empty tensor".into()));
        }
        let out = Tensor::scalar(t.values().iter().sum::<f64>() / t.len() as f64);
        Ok(self.push_op(out, Op::Mean(a.0)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.val(a).map(|x| x * factor);
        self.push_op(out, Op::Scale(a.0, factor))
    }

    /// Element `i` of a vector, as a length-1 tensor.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let t = self.val(a);
        require_rank("index", t, 1)?;
        let x = *t
            .values()
            .get(i)
            .ok_or_else(|| Error::Domain(format!("index {i} out of range for length {}", t.len())))?;
        Ok(self.push_op(Tensor::scalar(x), Op::Index(a.0, i)))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// The absolute value uses subgradient 0 at 0.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = &self.nodes[loss.0];
        if root.value.len() != 1 {
            return Err(Error::Domain(format!(
                "backward needs a scalar loss, got shape {:?}",
                root.value.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut bad = None;
            node.op.for_each_parent(|p| {
                if p >= idx {
                    bad = Some(p);
                }
            });
            if let Some(p) = bad {
                return Err(Error::Internal(format!("node {idx} has non-earlier parent {p}")));
            }
            self.propagate(node, &g, &mut adj);
            adj[idx] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }

    fn propagate(&self, node: &Node, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let gv = g.values();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatVec { m, v, offset } => {
                let mt = self.val(Var(*m));
                let vt = self.val(Var(*v));
                let width = vt.len();
                if self.nodes[*m].tracked {
                    let dm = self.slot(adj, *m);
                    let cols = mt.cols();
                    let dmv = dm.values_mut();
                    for (r, &gr) in gv.iter().enumerate() {
                        let row = &mut dmv[r * cols + offset..r * cols + offset + width];
                        for (d, &x) in row.iter_mut().zip(vt.values()) {
                            *d += gr * x;
                        }
                    }
                }
                if self.nodes[*v].tracked {
                    let dv = self.slot(adj, *v);
                    let dvv = dv.values_mut();
                    for (r, &gr) in gv.iter().enumerate() {
                        let row = &mt.row(r)[*offset..offset + width];
                        for (d, &w) in dvv.iter_mut().zip(row) {
                            *d += gr * w;
                        }
                    }
                }
            }
            Op::MatVecT { m, v } => {
                let mt = self.val(Var(*m));
                let vt = self.val(Var(*v));
                if self.nodes[*m].tracked {
                    let cols = mt.cols();
                    let dm = self.slot(adj, *m);
                    let dmv = dm.values_mut();
                    for (r, &vr) in vt.values().iter().enumerate() {
                        for (d, &gc) in dmv[r * cols..(r + 1) * cols].iter_mut().zip(gv) {
                            *d += vr * gc;
                        }
                    }
                }
                if self.nodes[*v].tracked {
                    let dv = self.slot(adj, *v);
                    for (r, d) in dv.values_mut().iter_mut().enumerate() {
                        *d += dot_slices(mt.row(r), gv);
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, |d| d.add_assign(gv));
                self.accumulate(adj, *b, |d| d.add_assign(gv));
            }
            Op::AddRows(m, v) => {
                self.accumulate(adj, *m, |d| d.add_assign(gv));
                let width = self.nodes[*v].value.len();
                self.accumulate(adj, *v, |d| {
                    for row in gv.chunks(width) {
                        d.add_assign(row);
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, |d| d.add_assign(gv));
                self.accumulate(adj, *b, |d| {
                    for (x, &y) in d.values_mut().iter_mut().zip(gv) {
                        *x -= y;
                    }
                });
            }
            Op::Hadamard(a, b) => {
                let av = self.val(Var(*a)).values();
                let bv = self.val(Var(*b)).values();
                self.accumulate(adj, *a, |d| {
                    for ((x, &gi), &bi) in d.values_mut().iter_mut().zip(gv).zip(bv) {
                        *x += gi * bi;
                    }
                });
                self.accumulate(adj, *b, |d| {
                    for ((x, &gi), &ai) in d.values_mut().iter_mut().zip(gv).zip(av) {
                        *x += gi * ai;
                    }
                });
            }
            Op::Concat(parts) | Op::Stack(parts) => {
                let mut start = 0;
                for &p in parts {
                    let len = self.nodes[p].value.len();
                    self.accumulate(adj, p, |d| d.add_assign(&gv[start..start + len]));
                    start += len;
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.values();
                self.accumulate(adj, *a, |d| {
                    for ((x, &gi), &yi) in d.values_mut().iter_mut().zip(gv).zip(y) {
                        *x += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = node.value.values();
                self.accumulate(adj, *a, |d| {
                    for ((x, &gi), &yi) in d.values_mut().iter_mut().zip(gv).zip(y) {
                        *x += gi * (1.0 - yi * yi);
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.values();
                let inner = dot_slices(gv, y);
                self.accumulate(adj, *a, |d| {
                    for ((x, &gi), &yi) in d.values_mut().iter_mut().zip(gv).zip(y) {
                        *x += yi * (gi - inner);
                    }
                });
            }
            Op::Abs(a) => {
                let input = self.val(Var(*a)).values();
                self.accumulate(adj, *a, |d| {
                    for ((x, &gi), &xi) in d.values_mut().iter_mut().zip(gv).zip(input) {
                        let sign = if xi > 0.0 {
                            1.0
                        } else if xi < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                        *x += gi * sign;
                    }
                });
            }
            Op::OneMinus(a) => {
                self.accumulate(adj, *a, |d| {
                    for (x, &gi) in d.values_mut().iter_mut().zip(gv) {
                        *x -= gi;
                    }
                });
            }
            Op::Dot(a, b) => {
                let g0 = gv[0];
                let av = self.val(Var(*a)).values();
                let bv = self.val(Var(*b)).values();
                self.accumulate(adj, *a, |d| {
                    for (x, &bi) in d.values_mut().iter_mut().zip(bv) {
                        *x += g0 * bi;
                    }
                });
                self.accumulate(adj, *b, |d| {
                    for (x, &ai) in d.values_mut().iter_mut().zip(av) {
                        *x += g0 * ai;
                    }
                });
            }
            Op::Mean(a) => {
                let share = gv[0] / self.nodes[*a].value.len() as f64;
                self.accumulate(adj, *a, |d| {
                    for x in d.values_mut() {
                        *x += share;
                    }
                });
            }
            Op::Scale(a, factor) => {
                self.accumulate(adj, *a, |d| {
                    for (x, &gi) in d.values_mut().iter_mut().zip(gv) {
                        *x += gi * factor;
                    }
                });
            }
            Op::Index(a, i) => {
                self.accumulate(adj, *a, |d| d.values_mut()[*i] += gv[0]);
            }
        }
    }

    fn slot<'a>(&self, adj: &'a mut [Option<Tensor>], idx: usize) -> &'a mut Tensor {
        adj[idx].get_or_insert_with(|| Tensor::zeros_like(&self.nodes[idx].value))
    }

    fn accumulate(&self, adj: &mut [Option<Tensor>], idx: usize, f: impl FnOnce(&mut Tensor)) {
        if self.nodes[idx].tracked {
            f(self.slot(adj, idx));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_adjoint_six_at_three() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.hadamard(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.abs(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Domain(_))));
    }

    #[test]
    fn constants_get_no_adjoint() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let x = tape.leaf(Tensor::vector(vec![3.0, 4.0]));
        let d = tape.dot(c, x).unwrap();
        let g = tape.backward(d).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().values(), &[1.0, 2.0]);
    }

    #[test]
    fn unused_leaf_has_no_adjoint() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0));
        let unused = tape.leaf(Tensor::scalar(2.0));
        let y = tape.scale(x, 3.0);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 3.0);
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn sigmoid_and_tanh_slopes_at_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let s = tape.sigmoid(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 0.25);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let t = tape.tanh(x);
        let g = tape.backward(t).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 1.0);
    }
}
