use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Handle to a node of one [`Graph`]. Only meaningful for the graph that
/// produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `b` is a vector of length `cols(a)` repeated over every row of `a`.
    Row,
    /// `b` holds a single element.
    Scalar,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryKind, Var, Var, Broadcast),
    Activation(Activation, Var),
    Affine(Var, T, T),
    Softmax(Var, Vec<bool>),
    Embed(Var, Vec<u32>),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Pick(Var, usize),
    LogClamp(Var, T),
}

#[derive(Debug)]
struct Node<'p, T: Clone> {
    shape: Shape,
    value: Cow<'p, [T]>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run record of array operations.
///
/// Nodes are appended in construction order, which is a topological order;
/// [`Graph::backward`] walks the records in exact reverse. Leaves may borrow
/// their storage (parameters) for the lifetime `'p`.
#[derive(Debug)]
pub struct Graph<'p, T: Real> {
    nodes: Vec<Node<'p, T>>,
    grads: Vec<Option<Vec<T>>>,
    tracking: bool,
    params: Vec<Option<Var>>,
}

impl<'p, T: Real> Default for Graph<'p, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Real> Graph<'p, T> {
    /// A graph that records gradients for tracked leaves.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            tracking: true,
            params: Vec::new(),
        }
    }

    /// A graph for evaluation only; nothing requires a gradient and
    /// [`Graph::backward`] is rejected.
    pub fn inference() -> Self {
        Graph {
            tracking: false,
            ..Self::new()
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.tracking
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Shape, value: Cow<'p, [T]>, op: Op<T>, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.numel(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad: requires_grad && self.tracking,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Untracked leaf owning its data.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape();
        self.push(shape, Cow::Owned(t.into_data()), Op::Leaf, false)
    }

    /// Untracked leaf borrowing its data.
    pub fn constant_ref(&mut self, t: &'p Tensor<T>) -> Var {
        self.push(t.shape(), Cow::Borrowed(t.data()), Op::Leaf, false)
    }

    /// Tracked leaf owning its data.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape();
        self.push(shape, Cow::Owned(t.into_data()), Op::Leaf, true)
    }

    /// Tracked leaf borrowing a parameter. Registering the same `key` twice
    /// returns the same node, so gradients from every use accumulate in one
    /// place.
    pub fn param(&mut self, key: usize, t: &'p Tensor<T>) -> Var {
        if let Some(Some(v)) = self.params.get(key) {
            return *v;
        }
        let v = self.push(t.shape(), Cow::Borrowed(t.data()), Op::Leaf, true);
        if self.params.len() <= key {
            self.params.resize(key + 1, None);
        }
        self.params[key] = Some(v);
        v
    }

    /// The node registered for parameter `key`, if any.
    pub fn param_var(&self, key: usize) -> Option<Var> {
        self.params.get(key).copied().flatten()
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape, n.value.to_vec()).expect("node shape matches its data")
    }

    /// Accumulated gradient of a tracked leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // ---- operations ---------------------------------------------------

    /// Matrix product. Vectors act as a single row on the left and as a
    /// single column on the right.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k) = (sa.rows(), sa.cols());
        let (k2, p) = match sb.rank() {
            1 => (sb.cols(), 1),
            _ => (sb.rows(), sb.cols()),
        };
        if sa.rank() == 0 || sb.rank() == 0 || k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let shape = match (sa.rank(), sb.rank()) {
            (1, 1) => Shape::scalar(),
            (1, _) => Shape::vector(p),
            (_, 1) => Shape::vector(m),
            _ => Shape::matrix(m, p),
        };
        let mut out = vec![T::zero(); m * p];
        {
            let (av, bv) = (self.value(a), self.value(b));
            for i in 0..m {
                let row = &mut out[i * p..(i + 1) * p];
                for kk in 0..k {
                    let aik = av[i * k + kk];
                    let brow = &bv[kk * p..(kk + 1) * p];
                    for (o, &bx) in row.iter_mut().zip(brow) {
                        *o = *o + aik * bx;
                    }
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(shape, Cow::Owned(out), Op::MatMul(a, b), rg))
    }

    fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let bc = if sa == sb {
            Broadcast::Same
        } else if sb.numel() == 1 && sb.rank() == 0 {
            Broadcast::Scalar
        } else if sb.rank() == 1 && sa.rank() == 2 && sb.cols() == sa.cols() {
            Broadcast::Row
        } else {
            return Err(Error::Dimension {
                op: match kind {
                    BinaryKind::Add => "add",
                    BinaryKind::Sub => "sub",
                    BinaryKind::Mul => "mul",
                },
                left: sa,
                right: sb,
            });
        };
        let f = |x: T, y: T| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
        };
        let (av, bv) = (self.value(a), self.value(b));
        let out: Vec<T> = match bc {
            Broadcast::Same => av.iter().zip(bv.iter()).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => av.iter().map(|&x| f(x, bv[0])).collect(),
            Broadcast::Row => {
                let c = sb.cols();
                av.iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, bv[i % c]))
                    .collect()
            }
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(sa, Cow::Owned(out), Op::Binary(kind, a, b, bc), rg))
    }

    /// Elementwise `a + b`; `b` may be a scalar or a row broadcast over `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn ewise(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var> {
        self.binary(kind, a, b)
    }

    pub fn activation(&mut self, kind: Activation, x: Var) -> Var {
        let out: Vec<T> = self
            .value(x)
            .iter()
            .map(|&v| match kind {
                Activation::Tanh => v.tanh_(),
                Activation::Sigmoid => sigmoid(v),
            })
            .collect();
        let rg = self.rg(x);
        self.push(self.shape(x), Cow::Owned(out), Op::Activation(kind, x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(Activation::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(Activation::Sigmoid, x)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let out: Vec<T> = self.value(x).iter().map(|&v| scale * v + shift).collect();
        let rg = self.rg(x);
        self.push(self.shape(x), Cow::Owned(out), Op::Affine(x, scale, shift), rg)
    }

    /// Softmax over a vector (or over every row of a matrix) restricted to
    /// the positions where `mask` is true. Masked positions come out as
    /// exactly zero.
    pub fn softmax_masked(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let s = self.shape(x);
        let c = s.cols();
        if s.rank() == 0 || mask.len() != c {
            return Err(Error::Dimension {
                op: "softmax_masked",
                left: s,
                right: Shape::vector(mask.len()),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::DegenerateMask { len: mask.len() });
        }
        let xv = self.value(x);
        let mut out = vec![T::zero(); xv.len()];
        for (row_in, row_out) in xv.chunks(c).zip(out.chunks_mut(c)) {
            softmax_row(row_in, mask, row_out);
        }
        let rg = self.rg(x);
        Ok(self.push(s, Cow::Owned(out), Op::Softmax(x, mask.to_vec()), rg))
    }

    /// Softmax over every position.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let mask = vec![true; self.shape(x).cols()];
        self.softmax_masked(x, &mask)
    }

    /// Gathers rows of `table` (`[V×e]`) into a `[len×e]` matrix.
    pub fn embed(&mut self, table: Var, ids: &[u32]) -> Result<Var> {
        let out = self.gather(table, ids)?;
        let e = self.shape(table).cols();
        if ids.is_empty() {
            return Err(Error::EmptyInput("embedding lookup with no ids"));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Shape::matrix(ids.len(), e),
            Cow::Owned(out),
            Op::Embed(table, ids.to_vec()),
            rg,
        ))
    }

    /// Row `id` of `table` as a vector.
    pub fn embed_one(&mut self, table: Var, id: u32) -> Result<Var> {
        let out = self.gather(table, &[id])?;
        let e = self.shape(table).cols();
        let rg = self.rg(table);
        Ok(self.push(Shape::vector(e), Cow::Owned(out), Op::Embed(table, vec![id]), rg))
    }

    fn gather(&self, table: Var, ids: &[u32]) -> Result<Vec<T>> {
        let s = self.shape(table);
        if s.rank() != 2 {
            return Err(Error::Dimension {
                op: "embed",
                left: s,
                right: Shape::vector(ids.len().max(1)),
            });
        }
        let (v, e) = (s.rows(), s.cols());
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id as usize >= v {
                return Err(Error::Vocabulary { id, size: v });
            }
            out.extend_from_slice(&tv[id as usize * e..(id as usize + 1) * e]);
        }
        Ok(out)
    }

    /// Joins vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat of nothing"));
        }
        let mut out = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s.rank() != 1 {
                return Err(Error::Dimension {
                    op: "concat",
                    left: s,
                    right: self.shape(parts[0]),
                });
            }
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let n = out.len();
        Ok(self.push(Shape::vector(n), Cow::Owned(out), Op::Concat(parts.to_vec()), rg))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(Error::EmptyInput("stack of nothing"));
        };
        let s0 = self.shape(first);
        let mut out = Vec::with_capacity(rows.len() * s0.numel());
        for &r in rows {
            let s = self.shape(r);
            if s.rank() != 1 || s != s0 {
                return Err(Error::Dimension {
                    op: "stack",
                    left: s0,
                    right: s,
                });
            }
            out.extend_from_slice(self.value(r));
        }
        let rg = rows.iter().any(|&r| self.rg(r));
        Ok(self.push(
            Shape::matrix(rows.len(), s0.cols()),
            Cow::Owned(out),
            Op::Stack(rows.to_vec()),
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        let s = self.shape(x);
        if s.numel() != shape.numel() {
            return Err(Error::Dimension {
                op: "reshape",
                left: s,
                right: shape,
            });
        }
        let out = self.value(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, Cow::Owned(out), Op::Reshape(x), rg))
    }

    /// Sum of every element, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).iter().copied().fold(T::zero(), |acc, v| acc + v);
        let rg = self.rg(x);
        self.push(Shape::scalar(), Cow::Owned(vec![total]), Op::Sum(x), rg)
    }

    /// Element `index` of the flattened array, as a scalar.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let s = self.shape(x);
        if index >= s.numel() {
            return Err(Error::Dimension {
                op: "pick",
                left: s,
                right: Shape::vector(index + 1),
            });
        }
        let v = self.value(x)[index];
        let rg = self.rg(x);
        Ok(self.push(Shape::scalar(), Cow::Owned(vec![v]), Op::Pick(x, index), rg))
    }

    /// `ln(max(x, floor))`; clamped elements pass no gradient.
    pub fn log_clamped(&mut self, x: Var, floor: T) -> Var {
        let out: Vec<T> = self.value(x).iter().map(|&v| v.max(floor).ln_()).collect();
        let rg = self.rg(x);
        self.push(self.shape(x), Cow::Owned(out), Op::LogClamp(x, floor), rg)
    }

    // ---- reverse pass -------------------------------------------------

    /// Accumulates d(loss)/d(leaf) into every tracked leaf. Any gradients
    /// from an earlier call are discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.tracking {
            return Err(Error::Contract("backward on an inference graph".into()));
        }
        let s = self.shape(loss);
        if s.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {s}"
            )));
        }
        self.grads.clear();
        self.grads.resize_with(self.nodes.len(), || None);
        if !self.rg(loss) {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) {
                self.grads[i] = Some(g);
                continue;
            }
            propagate(&self.nodes, &mut self.grads, i, &g);
        }
        Ok(())
    }
}

#[inline]
fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp_())
    } else {
        let e = v.exp_();
        e / (T::one() + e)
    }
}

fn softmax_row<T: Real>(x: &[T], mask: &[bool], out: &mut [T]) {
    // Seeded from the first real entry rather than -inf, which not every
    // element type orders reliably.
    let mut max = None;
    for (&v, &m) in x.iter().zip(mask) {
        if m && max.is_none_or(|cur| v > cur) {
            max = Some(v);
        }
    }
    let max = max.unwrap_or_else(T::zero);
    let mut total = T::zero();
    for ((o, &v), &m) in out.iter_mut().zip(x).zip(mask) {
        *o = if m { (v - max).exp_() } else { T::zero() };
        total = total + *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

fn buf<'g, T: Real>(grads: &'g mut [Option<Vec<T>>], nodes: &[Node<'_, T>], v: Var) -> Option<&'g mut Vec<T>> {
    if !nodes[v.0].requires_grad {
        return None;
    }
    let n = nodes[v.0].value.len();
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
}

fn propagate<T: Real>(nodes: &[Node<'_, T>], grads: &mut [Option<Vec<T>>], i: usize, g: &[T]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (sa, sb) = (nodes[a.0].shape, nodes[b.0].shape);
            let (m, k) = (sa.rows(), sa.cols());
            let p = if sb.rank() == 1 { 1 } else { sb.cols() };
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            if let Some(da) = buf(grads, nodes, *a) {
                for i in 0..m {
                    let grow = &g[i * p..(i + 1) * p];
                    for kk in 0..k {
                        let brow = &bv[kk * p..(kk + 1) * p];
                        let dot = grow.iter().zip(brow).map(|(&x, &y)| x * y).fold(T::zero(), |acc, v| acc + v);
                        da[i * k + kk] = da[i * k + kk] + dot;
                    }
                }
            }
            if let Some(db) = buf(grads, nodes, *b) {
                for i in 0..m {
                    let grow = &g[i * p..(i + 1) * p];
                    for kk in 0..k {
                        let aik = av[i * k + kk];
                        for (d, &x) in db[kk * p..(kk + 1) * p].iter_mut().zip(grow) {
                            *d = *d + aik * x;
                        }
                    }
                }
            }
        }
        Op::Binary(kind, a, b, bc) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let c = nodes[b.0].shape.cols();
            let bidx = |j: usize| match bc {
                Broadcast::Same => j,
                Broadcast::Scalar => 0,
                Broadcast::Row => j % c,
            };
            if let Some(da) = buf(grads, nodes, *a) {
                for (j, (d, &gj)) in da.iter_mut().zip(g).enumerate() {
                    *d = *d
                        + match kind {
                            BinaryKind::Add | BinaryKind::Sub => gj,
                            BinaryKind::Mul => gj * bv[bidx(j)],
                        };
                }
            }
            if let Some(db) = buf(grads, nodes, *b) {
                for (j, &gj) in g.iter().enumerate() {
                    let k = bidx(j);
                    db[k] = db[k]
                        + match kind {
                            BinaryKind::Add => gj,
                            BinaryKind::Sub => -gj,
                            BinaryKind::Mul => gj * av[j],
                        };
                }
            }
        }
        Op::Activation(kind, x) => {
            let y = &node.value;
            if let Some(dx) = buf(grads, nodes, *x) {
                for ((d, &gj), &yj) in dx.iter_mut().zip(g).zip(y.iter()) {
                    let local = match kind {
                        Activation::Tanh => T::one() - yj * yj,
                        Activation::Sigmoid => yj * (T::one() - yj),
                    };
                    *d = *d + gj * local;
                }
            }
        }
        Op::Affine(x, scale, _) => {
            if let Some(dx) = buf(grads, nodes, *x) {
                for (d, &gj) in dx.iter_mut().zip(g) {
                    *d = *d + gj * *scale;
                }
            }
        }
        Op::Softmax(x, mask) => {
            let y = &node.value;
            let c = node.shape.cols();
            if let Some(dx) = buf(grads, nodes, *x) {
                for ((drow, grow), yrow) in dx.chunks_mut(c).zip(g.chunks(c)).zip(y.chunks(c)) {
                    let dot = grow.iter().zip(yrow).map(|(&a, &b)| a * b).fold(T::zero(), |acc, v| acc + v);
                    for j in 0..c {
                        if mask[j] {
                            drow[j] = drow[j] + yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
        }
        Op::Embed(table, ids) => {
            let e = nodes[table.0].shape.cols();
            if let Some(dt) = buf(grads, nodes, *table) {
                for (r, &id) in ids.iter().enumerate() {
                    let id = id as usize;
                    for (d, &gj) in dt[id * e..(id + 1) * e].iter_mut().zip(&g[r * e..(r + 1) * e]) {
                        *d = *d + gj;
                    }
                }
            }
        }
        Op::Concat(parts) | Op::Stack(parts) => {
            let mut off = 0;
            for p in parts {
                let n = nodes[p.0].value.len();
                if let Some(dp) = buf(grads, nodes, *p) {
                    for (d, &gj) in dp.iter_mut().zip(&g[off..off + n]) {
                        *d = *d + gj;
                    }
                }
                off += n;
            }
        }
        Op::Reshape(x) => {
            if let Some(dx) = buf(grads, nodes, *x) {
                for (d, &gj) in dx.iter_mut().zip(g) {
                    *d = *d + gj;
                }
            }
        }
        Op::Sum(x) => {
            if let Some(dx) = buf(grads, nodes, *x) {
                for d in dx.iter_mut() {
                    *d = *d + g[0];
                }
            }
        }
        Op::Pick(x, index) => {
            if let Some(dx) = buf(grads, nodes, *x) {
                dx[*index] = dx[*index] + g[0];
            }
        }
        Op::LogClamp(x, floor) => {
            let xv = &nodes[x.0].value;
            if let Some(dx) = buf(grads, nodes, *x) {
                for ((d, &gj), &v) in dx.iter_mut().zip(g).zip(xv.iter()) {
                    if v > *floor {
                        *d = *d + gj / v;
                    }
                }
            }
        }
    }
}
