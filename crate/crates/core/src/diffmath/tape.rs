use std::borrow::Cow;
use std::rc::Rc;

use rand::Rng;

use super::tensor::{axpy, gemm_acc_at, gemm_acc_bt, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Contiguous partition of `0..n` into consecutive runs, possibly empty.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
}

impl Segments {
    pub fn from_lengths(lengths: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        let mut acc = 0;
        for len in lengths {
            acc += len;
            offsets.push(acc);
        }
        Self { offsets }
    }

    pub fn single(len: usize) -> Self {
        Self::from_lengths([len])
    }

    pub fn count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn len_of(&self, s: usize) -> usize {
        self.offsets[s + 1] - self.offsets[s]
    }
}

enum Op<T> {
    Leaf,
    Matmul(Var, Var),
    AddColumn(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    ConcatRows(Var, Var),
    StackCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherCols(Var, Vec<usize>),
    Dropout(Var, Vec<T>),
    SegmentSoftmax(Var, Rc<Segments>),
    SegmentWeightedSum(Var, Var, Rc<Segments>),
    Sum(Var),
}

struct Node<'a, T: Clone> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Single-use record of a forward computation.
///
/// Parameters are borrowed, not copied, so a tape must be dropped before the
/// optimizer mutates them. Nodes are appended in evaluation order, which makes
/// the node list its own topological order.
pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), op, needs_grad)
    }

    /// Borrowed trainable leaf; receives a gradient on `backward`.
    pub fn param(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Owned trainable leaf.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// Owned leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.derived(out, Op::Matmul(a, b), &[a, b]))
    }

    /// Adds the column vector `bias` to every column of `m`.
    pub fn add_column(&mut self, m: Var, bias: Var) -> Result<Var> {
        let (mv, bv) = (self.value(m), self.value(bias));
        if bv.cols() != 1 || bv.rows() != mv.rows() {
            return Err(Error::Dimension {
                op: "add_column",
                lhs: mv.shape(),
                rhs: bv.shape(),
            });
        }
        let mut out = mv.clone();
        let cols = mv.cols();
        for r in 0..mv.rows() {
            let b = bv.get(r, 0);
            for x in &mut out.as_mut_slice()[r * cols..(r + 1) * cols] {
                *x = *x + b;
            }
        }
        Ok(self.derived(out, Op::AddColumn(m, bias), &[m, bias]))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Dimension {
                op,
                lhs: av.shape(),
                rhs: bv.shape(),
            });
        }
        let data = av.as_slice().iter().zip(bv.as_slice()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.rows(), av.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.derived(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.derived(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_same("mul", a, b, |x, y| x * y)?;
        Ok(self.derived(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.derived(out, Op::Scale(a, k), &[a])
    }

    /// `max(0, x)`; the subgradient at exactly 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.derived(out, Op::Relu(a), &[a])
    }

    /// Stacks `a` above `b`. Both must have the same column count; for
    /// vectors this is plain concatenation.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::Shape {
                op: "concat",
                msg: format!("column counts differ: {:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let mut data = Vec::with_capacity(av.len() + bv.len());
        data.extend_from_slice(av.as_slice());
        data.extend_from_slice(bv.as_slice());
        let out = Tensor::from_vec(av.rows() + bv.rows(), av.cols(), data)?;
        Ok(self.derived(out, Op::ConcatRows(a, b), &[a, b]))
    }

    /// Concatenation restricted to column vectors.
    pub fn concat_vectors(&mut self, a: Var, b: Var) -> Result<Var> {
        for v in [a, b] {
            if !self.value(v).is_vector() {
                return Err(Error::Shape {
                    op: "concat",
                    msg: format!("expected a column vector, got {:?}", self.shape(v)),
                });
            }
        }
        self.concat(a, b)
    }

    /// Places column vectors side by side into a `d × n` matrix.
    pub fn stack_columns(&mut self, parts: &[Var]) -> Result<Var> {
        let d = parts.first().map_or(0, |&p| self.value(p).rows());
        let n = parts.len();
        let mut out = Tensor::zeros(d, n);
        for (c, &p) in parts.iter().enumerate() {
            let pv = self.value(p);
            if pv.shape() != (d, 1) {
                return Err(Error::Shape {
                    op: "stack_columns",
                    msg: format!("part {c} has shape {:?}, expected ({d}, 1)", pv.shape()),
                });
            }
            for r in 0..d {
                out.set(r, c, pv.get(r, 0));
            }
        }
        Ok(self.derived(out, Op::StackCols(parts.to_vec()), parts))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if start + len > av.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                msg: format!("columns {start}..{} of {:?}", start + len, av.shape()),
            });
        }
        let mut out = Tensor::zeros(av.rows(), len);
        for r in 0..av.rows() {
            let src = &av.row_slice(r)[start..start + len];
            out.as_mut_slice()[r * len..(r + 1) * len].copy_from_slice(src);
        }
        Ok(self.derived(out, Op::SliceCols(a, start), &[a]))
    }

    /// Column gather; the same source column may appear many times.
    pub fn gather_cols(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let av = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= av.cols()) {
            return Err(Error::Index {
                kind: "column",
                id: bad,
                count: av.cols(),
            });
        }
        let n = idx.len();
        let mut out = Tensor::zeros(av.rows(), n);
        for r in 0..av.rows() {
            let src = av.row_slice(r);
            let dst = &mut out.as_mut_slice()[r * n..(r + 1) * n];
            for (d, &i) in dst.iter_mut().zip(&idx) {
                *d = src[i];
            }
        }
        Ok(self.derived(out, Op::GatherCols(a, idx), &[a]))
    }

    /// Inverted dropout. Outside training, or at rate 0, returns `x` itself.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = xv.as_slice().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let out = Tensor::from_vec(xv.rows(), xv.cols(), data)?;
        Ok(self.derived(out, Op::Dropout(x, mask), &[x]))
    }

    /// Softmax of a single vector of scores (row or column).
    pub fn softmax(&mut self, scores: Var) -> Result<Var> {
        let n = self.value(scores).len();
        if n == 0 {
            return Err(Error::Empty("softmax"));
        }
        self.segment_softmax(scores, Rc::new(Segments::single(n)))
    }

    /// Independent max-shifted softmax over each segment of a flat score vector.
    pub fn segment_softmax(&mut self, scores: Var, segs: Rc<Segments>) -> Result<Var> {
        let sv = self.value(scores);
        if !(sv.rows() == 1 || sv.cols() == 1) && !sv.is_empty() || sv.len() != segs.total() {
            return Err(Error::Shape {
                op: "segment_softmax",
                msg: format!("{:?} scores for {} segment slots", sv.shape(), segs.total()),
            });
        }
        let mut out = sv.clone();
        let vals = out.as_mut_slice();
        for s in 0..segs.count() {
            let seg = &mut vals[segs.range(s)];
            if seg.is_empty() {
                continue;
            }
            let max = seg.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in seg.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in seg.iter_mut() {
                *v = *v / total;
            }
        }
        Ok(self.derived(out, Op::SegmentSoftmax(scores, segs), &[scores]))
    }

    /// `Σ wᵢ vᵢ` where the vectors are the columns of `vectors`.
    pub fn weighted_sum(&mut self, weights: Var, vectors: Var) -> Result<Var> {
        let n = self.value(vectors).cols();
        self.segment_weighted_sum(weights, vectors, Rc::new(Segments::single(n)))
    }

    /// Per segment `s`, output column `s` is `Σ_{n∈s} w[n]·vectors[:, n]`.
    /// Empty segments produce a zero column.
    pub fn segment_weighted_sum(&mut self, weights: Var, vectors: Var, segs: Rc<Segments>) -> Result<Var> {
        let (wv, vv) = (self.value(weights), self.value(vectors));
        if wv.len() != vv.cols() || vv.cols() != segs.total() {
            return Err(Error::Shape {
                op: "weighted_sum",
                msg: format!(
                    "{} weights, {} vectors, {} segment slots",
                    wv.len(),
                    vv.cols(),
                    segs.total()
                ),
            });
        }
        let (d, n, s_count) = (vv.rows(), vv.cols(), segs.count());
        let w = wv.as_slice();
        let mut out = Tensor::zeros(d, s_count);
        for r in 0..d {
            let src = &vv.as_slice()[r * n..(r + 1) * n];
            for s in 0..s_count {
                let range = segs.range(s);
                let acc = w[range.clone()]
                    .iter()
                    .zip(&src[range])
                    .fold(T::zero(), |acc, (&wi, &xi)| acc + wi * xi);
                out.set(r, s, acc);
            }
        }
        Ok(self.derived(out, Op::SegmentWeightedSum(weights, vectors, segs), &[weights, vectors]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::filled(1, 1, self.value(a).sum());
        self.derived(out, Op::Sum(a), &[a])
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'a, T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let nodes = &self.nodes;
        macro_rules! slot {
            ($v:expr) => {
                grad_slot(nodes, grads, $v)
            };
        }

        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if let Some(ga) = slot!(*a) {
                    gemm_acc_bt(g, bv, ga);
                }
                if let Some(gb) = slot!(*b) {
                    gemm_acc_at(av, g, gb);
                }
            }
            Op::AddColumn(m, bias) => {
                if let Some(gm) = slot!(*m) {
                    gm.add_assign(g);
                }
                if let Some(gb) = slot!(*bias) {
                    for r in 0..g.rows() {
                        let s: T = g.row_slice(r).iter().copied().sum();
                        gb.as_mut_slice()[r] = gb.as_slice()[r] + s;
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(ga) = slot!(*a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot!(*b) {
                    gb.add_assign(g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = slot!(*a) {
                    ga.add_assign(g);
                }
                if let Some(gb) = slot!(*b) {
                    axpy(-T::one(), g.as_slice(), gb.as_mut_slice());
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).clone(), self.value(*b).clone());
                if let Some(ga) = slot!(*a) {
                    for ((x, &gv), &o) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(bv.as_slice()) {
                        *x = *x + gv * o;
                    }
                }
                if let Some(gb) = slot!(*b) {
                    for ((x, &gv), &o) in gb.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice()) {
                        *x = *x + gv * o;
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(ga) = slot!(*a) {
                    axpy(*k, g.as_slice(), ga.as_mut_slice());
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                if let Some(ga) = slot!(*a) {
                    for ((x, &gv), &inp) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(av.as_slice()) {
                        if inp > T::zero() {
                            *x = *x + gv;
                        }
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let split = self.value(*a).len();
                if let Some(ga) = slot!(*a) {
                    axpy(T::one(), &g.as_slice()[..split], ga.as_mut_slice());
                }
                if let Some(gb) = slot!(*b) {
                    axpy(T::one(), &g.as_slice()[split..], gb.as_mut_slice());
                }
            }
            Op::StackCols(parts) => {
                for (c, p) in parts.iter().enumerate() {
                    if let Some(gp) = slot!(*p) {
                        for r in 0..g.rows() {
                            gp.as_mut_slice()[r] = gp.as_slice()[r] + g.get(r, c);
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                if let Some(ga) = slot!(*a) {
                    let (len, src_cols) = (g.cols(), ga.cols());
                    for r in 0..g.rows() {
                        let dst = &mut ga.as_mut_slice()[r * src_cols + start..r * src_cols + start + len];
                        axpy(T::one(), g.row_slice(r), dst);
                    }
                }
            }
            Op::GatherCols(a, idx) => {
                if let Some(ga) = slot!(*a) {
                    let src_cols = ga.cols();
                    for r in 0..g.rows() {
                        let grow = g.row_slice(r);
                        let dst = &mut ga.as_mut_slice()[r * src_cols..(r + 1) * src_cols];
                        for (&gv, &i) in grow.iter().zip(idx) {
                            dst[i] = dst[i] + gv;
                        }
                    }
                }
            }
            Op::Dropout(a, mask) => {
                if let Some(ga) = slot!(*a) {
                    for ((x, &gv), &m) in ga.as_mut_slice().iter_mut().zip(g.as_slice()).zip(mask) {
                        *x = *x + gv * m;
                    }
                }
            }
            Op::SegmentSoftmax(a, segs) => {
                let y = node.value.as_slice();
                if let Some(ga) = slot!(*a) {
                    let gy = g.as_slice();
                    for s in 0..segs.count() {
                        let range = segs.range(s);
                        let dot: T = range.clone().map(|i| y[i] * gy[i]).sum();
                        for i in range {
                            ga.as_mut_slice()[i] = ga.as_slice()[i] + y[i] * (gy[i] - dot);
                        }
                    }
                }
            }
            Op::SegmentWeightedSum(w, v, segs) => {
                let (wv, vv) = (self.value(*w), self.value(*v));
                let (d, n) = (vv.rows(), vv.cols());
                if let Some(gw) = slot!(*w) {
                    let gw = gw.as_mut_slice();
                    for r in 0..d {
                        let vrow = &vv.as_slice()[r * n..(r + 1) * n];
                        for s in 0..segs.count() {
                            let go = g.get(r, s);
                            for i in segs.range(s) {
                                gw[i] = gw[i] + go * vrow[i];
                            }
                        }
                    }
                }
                if let Some(gv) = slot!(*v) {
                    let weights = wv.as_slice();
                    for r in 0..d {
                        let grow = &mut gv.as_mut_slice()[r * n..(r + 1) * n];
                        for s in 0..segs.count() {
                            let go = g.get(r, s);
                            for i in segs.range(s) {
                                grow[i] = grow[i] + go * weights[i];
                            }
                        }
                    }
                }
            }
            Op::Sum(a) => {
                let gv = g.get(0, 0);
                if let Some(ga) = slot!(*a) {
                    for x in ga.as_mut_slice() {
                        *x = *x + gv;
                    }
                }
            }
        }
    }
}

fn grad_slot<'g, T: Scalar>(
    nodes: &[Node<'_, T>],
    grads: &'g mut [Option<Tensor<T>>],
    v: Var,
) -> Option<&'g mut Tensor<T>> {
    let n = &nodes[v.0];
    if !n.needs_grad {
        return None;
    }
    let (r, c) = n.value.shape();
    Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(r, c)))
}

/// Gradients produced by [`Tape::backward`], keyed by node.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// `None` when the node does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
