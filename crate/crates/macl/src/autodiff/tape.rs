//! Reverse-mode automatic differentiation over dense tensors.
//!
//! Operations are recorded during the forward pass onto a linear tape
//! (one node per op, parents always preceding children), then replayed
//! in reverse to propagate vector-Jacobian products. The tape is rebuilt
//! for every forward pass, which keeps variable-length sessions cheap:
//! no graph compilation, no shape polymorphism.
//!
//! Leaves copy their values in from [`Tensor`]s; after [`Tape::backward`]
//! the caller harvests gradients with [`Tape::grad`] and accumulates them
//! back into the owning tensors. Constant subgraphs (leaves with
//! `requires_grad == false` and everything derived only from them) are
//! skipped entirely during backward.

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};

/// Index of a node on the tape. Valid only for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Transpose { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Div { a: NodeId, b: NodeId },
    Neg { x: NodeId },
    Scale { x: NodeId, c: f64 },
    AddRow { m: NodeId, v: NodeId },
    MulRow { m: NodeId, v: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    Relu { x: NodeId },
    Exp { x: NodeId },
    Ln { x: NodeId },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    SoftmaxRows { x: NodeId },
    // The mask is baked into the output (masked entries are exactly zero),
    // so backward needs no copy of it.
    MaskedSoftmaxRows { x: NodeId },
    NormalizeRows { x: NodeId, inv_std: Vec<f64> },
    GatherRows { x: NodeId, rows: Vec<usize> },
    Row { x: NodeId, idx: usize },
    StackRows { parts: Vec<NodeId> },
    ConcatFlat { parts: Vec<NodeId> },
    SliceCols { x: NodeId, start: usize, len: usize },
    ConcatCols { parts: Vec<NodeId> },
    SumAll { x: NodeId },
    MeanOf { parts: Vec<NodeId> },
    AddN { parts: Vec<NodeId> },
    CosineSim { a: NodeId, b: NodeId },
}

struct Node {
    op: Op,
    values: Vec<f64>,
    shape: Shape,
    needs_grad: bool,
}

/// The recording tape. One per forward pass.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    // ikj order: streams rows of b, vectorizes the inner loop.
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].shape
    }

    /// Gradient accumulated at `id` by the last [`Tape::backward`] call.
    /// `None` when no gradient flowed there (constant subgraph or unused).
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, op: Op, values: Vec<f64>, shape: Shape, needs_grad: bool) -> NodeId {
        debug_assert_eq!(values.len(), shape.numel());
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, values, shape, needs_grad });
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ── Leaves ───────────────────────────────────────────────────────

    /// Register a tensor as a leaf; values are copied in, and the leaf
    /// receives gradient during backward iff the tensor is trainable.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(Op::Leaf, t.values().to_vec(), t.shape(), t.requires_grad())
    }

    pub fn constant(&mut self, shape: Shape, values: Vec<f64>) -> Result<NodeId> {
        if shape.numel() != values.len() {
            return Err(Error::Shape(format!(
                "constant of shape {shape} expects {} values, got {}",
                shape.numel(),
                values.len()
            )));
        }
        Ok(self.push(Op::Leaf, values, shape, false))
    }

    pub fn constant_vector(&mut self, values: &[f64]) -> NodeId {
        self.push(Op::Leaf, values.to_vec(), Shape::Vector(values.len()), false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> NodeId {
        self.push(Op::Leaf, vec![v], Shape::Vector(1), false)
    }

    // ── Linear algebra ───────────────────────────────────────────────

    /// Matrix product. `[m×k]·[k×n] → [m×n]`, or `[m×k]·[k] → [m]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k) = match sa {
            Shape::Matrix(m, k) => (m, k),
            Shape::Vector(_) => {
                return Err(Error::Shape(format!(
                    "matmul left operand must be a matrix, got {sa}"
                )))
            }
        };
        let (kb, n, vec_out) = match sb {
            Shape::Matrix(kb, n) => (kb, n, false),
            Shape::Vector(kb) => (kb, 1, true),
        };
        if k != kb {
            return Err(Error::Shape(format!("matmul inner dims disagree: {sa} vs {sb}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a), self.value(b), &mut out, m, k, n);
        let shape = if vec_out { Shape::Vector(m) } else { Shape::Matrix(m, n) };
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul { a, b }, out, shape, ng))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let (r, c) = match self.shape(x) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(Error::Shape(format!("transpose expects a matrix, got {s}"))),
        };
        let xv = self.value(x);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xv[i * c + j];
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Op::Transpose { x }, out, Shape::Matrix(c, r), ng))
    }

    // ── Elementwise ──────────────────────────────────────────────────

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<Shape> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape(format!("{what} operand shapes differ: {sa} vs {sb}")));
        }
        Ok(sa)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_same_shape(a, b, "add")?;
        let out: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add { a, b }, out, s, ng))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_same_shape(a, b, "sub")?;
        let out: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Sub { a, b }, out, s, ng))
    }

    /// Hadamard (elementwise) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_same_shape(a, b, "hadamard")?;
        let out: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul { a, b }, out, s, ng))
    }

    /// Elementwise quotient. Caller guarantees a nonzero denominator.
    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.binary_same_shape(a, b, "div")?;
        if self.value(b).iter().any(|&v| v == 0.0) {
            return Err(Error::Domain("division by zero".into()));
        }
        let out: Vec<f64> =
            self.value(a).iter().zip(self.value(b)).map(|(x, y)| x / y).collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Div { a, b }, out, s, ng))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| -v).collect();
        let ng = self.needs(x);
        self.push(Op::Neg { x }, out, s, ng)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| c * v).collect();
        let ng = self.needs(x);
        self.push(Op::Scale { x, c }, out, s, ng)
    }

    /// Add vector `v` to every row of matrix `m`.
    pub fn add_row_broadcast(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = match self.shape(m) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(Error::Shape(format!("add_row_broadcast expects matrix, got {s}"))),
        };
        let sv = self.shape(v);
        if sv != Shape::Vector(c) {
            return Err(Error::Shape(format!("row broadcast of {sv} onto [{r}x{c}]")));
        }
        let vv = self.value(v).to_vec();
        let mut out = self.value(m).to_vec();
        for row in out.chunks_mut(c) {
            for (o, b) in row.iter_mut().zip(&vv) {
                *o += b;
            }
        }
        let ng = self.needs(m) || self.needs(v);
        Ok(self.push(Op::AddRow { m, v }, out, Shape::Matrix(r, c), ng))
    }

    /// Multiply every row of matrix `m` elementwise by vector `v`.
    pub fn mul_row_broadcast(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = match self.shape(m) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(Error::Shape(format!("mul_row_broadcast expects matrix, got {s}"))),
        };
        let sv = self.shape(v);
        if sv != Shape::Vector(c) {
            return Err(Error::Shape(format!("row broadcast of {sv} onto [{r}x{c}]")));
        }
        let vv = self.value(v).to_vec();
        let mut out = self.value(m).to_vec();
        for row in out.chunks_mut(c) {
            for (o, b) in row.iter_mut().zip(&vv) {
                *o *= b;
            }
        }
        let ng = self.needs(m) || self.needs(v);
        Ok(self.push(Op::MulRow { m, v }, out, Shape::Matrix(r, c), ng))
    }

    // ── Nonlinearities ───────────────────────────────────────────────

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| v.tanh()).collect();
        let ng = self.needs(x);
        self.push(Op::Tanh { x }, out, s, ng)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self
            .value(x)
            .iter()
            .map(|&v| {
                if v >= 0.0 {
                    1.0 / (1.0 + (-v).exp())
                } else {
                    let e = v.exp();
                    e / (1.0 + e)
                }
            })
            .collect();
        let ng = self.needs(x);
        self.push(Op::Sigmoid { x }, out, s, ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| v.max(0.0)).collect();
        let ng = self.needs(x);
        self.push(Op::Relu { x }, out, s, ng)
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| v.exp()).collect();
        let ng = self.needs(x);
        self.push(Op::Exp { x }, out, s, ng)
    }

    /// Natural log. Inputs must be strictly positive; clamp first if not.
    pub fn ln(&mut self, x: NodeId) -> Result<NodeId> {
        if self.value(x).iter().any(|&v| v <= 0.0) {
            return Err(Error::Domain("ln of non-positive value".into()));
        }
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| v.ln()).collect();
        let ng = self.needs(x);
        Ok(self.push(Op::Ln { x }, out, s, ng))
    }

    /// Clamp to `[lo, hi]`; gradient passes only strictly inside the range.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let s = self.shape(x);
        let out: Vec<f64> = self.value(x).iter().map(|v| v.clamp(lo, hi)).collect();
        let ng = self.needs(x);
        self.push(Op::Clamp { x, lo, hi }, out, s, ng)
    }

    // ── Softmax and normalization ────────────────────────────────────

    /// Row-wise softmax, stabilized by max subtraction. A vector input is
    /// one row.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        let c = s.cols();
        if c == 0 {
            return Err(Error::Domain("softmax of empty input".into()));
        }
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("softmax of non-finite input".into()));
        }
        let mut out = self.value(x).to_vec();
        for row in out.chunks_mut(c) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Op::SoftmaxRows { x }, out, s, ng))
    }

    /// Row-wise softmax over the entries where `allowed` is true; the rest
    /// are exactly zero in the output and receive zero gradient. Every row
    /// must have at least one allowed entry.
    pub fn masked_softmax_rows(&mut self, x: NodeId, allowed: &[bool]) -> Result<NodeId> {
        let s = self.shape(x);
        let c = s.cols();
        if allowed.len() != s.numel() {
            return Err(Error::Shape(format!(
                "mask length {} does not match {s}",
                allowed.len()
            )));
        }
        let mut out = self.value(x).to_vec();
        for (ri, row) in out.chunks_mut(c).enumerate() {
            let arow = &allowed[ri * c..(ri + 1) * c];
            let mx = row
                .iter()
                .zip(arow)
                .filter(|(_, &a)| a)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max);
            if mx == f64::NEG_INFINITY {
                return Err(Error::Domain(format!("softmax row {ri} fully masked")));
            }
            let mut sum = 0.0;
            for (v, &a) in row.iter_mut().zip(arow) {
                if a {
                    *v = (*v - mx).exp();
                    sum += *v;
                } else {
                    *v = 0.0;
                }
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Op::MaskedSoftmaxRows { x }, out, s, ng))
    }

    /// Normalize each row to zero mean and unit variance (layer-norm core).
    pub fn normalize_rows(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        let s = self.shape(x);
        let c = s.cols();
        if c == 0 {
            return Err(Error::Domain("normalize of empty row".into()));
        }
        let mut out = self.value(x).to_vec();
        let mut inv_std = Vec::with_capacity(s.rows());
        for row in out.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std.push(istd);
            for v in row.iter_mut() {
                *v = (*v - mean) * istd;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Op::NormalizeRows { x, inv_std }, out, s, ng))
    }

    // ── Structure ────────────────────────────────────────────────────

    /// Gather rows of a matrix into a new matrix; duplicate indices are
    /// allowed (their gradients accumulate).
    pub fn gather_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId> {
        let (r, c) = match self.shape(x) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(Error::Shape(format!("gather_rows expects matrix, got {s}"))),
        };
        let mut out = Vec::with_capacity(rows.len() * c);
        for &ri in rows {
            if ri >= r {
                return Err(Error::Lookup(format!("row index {ri} out of range 0..{r}")));
            }
            out.extend_from_slice(&self.value(x)[ri * c..(ri + 1) * c]);
        }
        let ng = self.needs(x);
        Ok(self.push(
            Op::GatherRows { x, rows: rows.to_vec() },
            out,
            Shape::Matrix(rows.len(), c),
            ng,
        ))
    }

    /// Extract one row of a matrix as a vector.
    pub fn row(&mut self, x: NodeId, idx: usize) -> Result<NodeId> {
        let (r, c) = match self.shape(x) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(Error::Shape(format!("row expects matrix, got {s}"))),
        };
        if idx >= r {
            return Err(Error::Lookup(format!("row index {idx} out of range 0..{r}")));
        }
        let out = self.value(x)[idx * c..(idx + 1) * c].to_vec();
        let ng = self.needs(x);
        Ok(self.push(Op::Row { x, idx }, out, Shape::Vector(c), ng))
    }

    /// Stack vectors (or single-row matrices) into a matrix.
    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("stack_rows of zero parts".into()));
        }
        let c = self.shape(parts[0]).cols();
        let mut out = Vec::with_capacity(parts.len() * c);
        let mut ng = false;
        for &p in parts {
            let sp = self.shape(p);
            if sp.rows() != 1 || sp.cols() != c {
                return Err(Error::Shape(format!("stack_rows part {sp}, expected [{c}]")));
            }
            out.extend_from_slice(self.value(p));
            ng |= self.needs(p);
        }
        Ok(self.push(
            Op::StackRows { parts: parts.to_vec() },
            out,
            Shape::Matrix(parts.len(), c),
            ng,
        ))
    }

    /// Concatenate vectors into one longer vector.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat of zero parts".into()));
        }
        let mut out = Vec::new();
        let mut ng = false;
        for &p in parts {
            match self.shape(p) {
                Shape::Vector(_) => out.extend_from_slice(self.value(p)),
                s => return Err(Error::Shape(format!("concat expects vectors, got {s}"))),
            }
            ng |= self.needs(p);
        }
        let n = out.len();
        Ok(self.push(Op::ConcatFlat { parts: parts.to_vec() }, out, Shape::Vector(n), ng))
    }

    /// Take columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = match self.shape(x) {
            Shape::Matrix(r, c) => (r, c),
            s => return Err(Error::Shape(format!("slice_cols expects matrix, got {s}"))),
        };
        if start + len > c {
            return Err(Error::Shape(format!(
                "slice_cols {start}..{} out of range for [{r}x{c}]",
                start + len
            )));
        }
        let xv = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&xv[i * c + start..i * c + start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(Op::SliceCols { x, start, len }, out, Shape::Matrix(r, len), ng))
    }

    /// Concatenate matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("concat_cols of zero parts".into()));
        }
        let r = self.shape(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        let mut ng = false;
        for &p in parts {
            let sp = self.shape(p);
            if sp.rows() != r {
                return Err(Error::Shape(format!("concat_cols row counts differ")));
            }
            widths.push(sp.cols());
            total += sp.cols();
            ng |= self.needs(p);
        }
        let mut out = vec![0.0; r * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pv = self.value(p).to_vec();
            for i in 0..r {
                out[i * total + off..i * total + off + w].copy_from_slice(&pv[i * w..(i + 1) * w]);
            }
            off += w;
        }
        Ok(self.push(Op::ConcatCols { parts: parts.to_vec() }, out, Shape::Matrix(r, total), ng))
    }

    // ── Reductions ───────────────────────────────────────────────────

    /// Sum of all entries, as a scalar node.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.value(x).iter().sum();
        let ng = self.needs(x);
        self.push(Op::SumAll { x }, vec![s], Shape::Vector(1), ng)
    }

    /// Elementwise mean of same-shaped tensors.
    pub fn mean_of(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("mean_of zero parts".into()));
        }
        let s = self.shape(parts[0]);
        let mut out = vec![0.0; s.numel()];
        let mut ng = false;
        for &p in parts {
            if self.shape(p) != s {
                return Err(Error::Shape("mean_of shapes differ".into()));
            }
            for (o, v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
            ng |= self.needs(p);
        }
        let inv = 1.0 / parts.len() as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        Ok(self.push(Op::MeanOf { parts: parts.to_vec() }, out, s, ng))
    }

    /// Elementwise sum of same-shaped tensors.
    pub fn add_n(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("add_n of zero parts".into()));
        }
        let s = self.shape(parts[0]);
        let mut out = vec![0.0; s.numel()];
        let mut ng = false;
        for &p in parts {
            if self.shape(p) != s {
                return Err(Error::Shape("add_n shapes differ".into()));
            }
            for (o, v) in out.iter_mut().zip(self.value(p)) {
                *o += v;
            }
            ng |= self.needs(p);
        }
        Ok(self.push(Op::AddN { parts: parts.to_vec() }, out, s, ng))
    }

    /// Cosine similarity of two vectors, as a scalar node. Errors on a
    /// vector whose norm is below 1e-12.
    pub fn cosine_similarity(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        match (sa, sb) {
            (Shape::Vector(da), Shape::Vector(db)) if da == db => {}
            _ => return Err(Error::Shape(format!("cosine of {sa} vs {sb}"))),
        }
        let av = self.value(a);
        let bv = self.value(b);
        let dot: f64 = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        let na = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = bv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na < 1e-12 || nb < 1e-12 {
            return Err(Error::DegenerateInput(format!(
                "cosine similarity of near-zero vector (norms {na:.3e}, {nb:.3e})"
            )));
        }
        let c = dot / (na * nb);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::CosineSim { a, b }, vec![c], Shape::Vector(1), ng))
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Propagate gradients from a scalar loss back to every node that
    /// needs them. Gradients of repeated calls accumulate until the tape
    /// is dropped; leaves harvested via [`Tape::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.shape(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got {}",
                self.shape(loss)
            )));
        }
        if self.grads.len() != self.nodes.len() {
            self.grads.resize(self.nodes.len(), None);
        }
        match &mut self.grads[loss.0] {
            Some(g) => g[0] += 1.0,
            None => self.grads[loss.0] = Some(vec![1.0]),
        }
        for i in (0..=loss.0).rev() {
            if self.grads[i].is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let d_out = self.grads[i].take().unwrap();
            self.backward_op(i, &op, &d_out);
            // Leaves keep their gradient for harvesting.
            if matches!(op, Op::Leaf) {
                self.grads[i] = Some(d_out);
            }
        }
        Ok(())
    }

    fn acc(&mut self, id: NodeId, contrib: impl FnOnce(&mut [f64])) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let n = self.nodes[id.0].values.len();
        let slot = &mut self.grads[id.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; n]);
        }
        contrib(slot.as_mut().unwrap());
    }

    fn backward_op(&mut self, node: usize, op: &Op, d_out: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (m, k) = (self.shape(*a).rows(), self.shape(*a).cols());
                let n = match self.shape(*b) {
                    Shape::Matrix(_, n) => n,
                    Shape::Vector(_) => 1,
                };
                if self.needs(*a) {
                    // dA = dOut · Bᵀ
                    let bv = self.nodes[b.0].values.clone();
                    let mut d_a = vec![0.0; m * k];
                    for i in 0..m {
                        for kk in 0..k {
                            let brow = &bv[kk * n..(kk + 1) * n];
                            let drow = &d_out[i * n..(i + 1) * n];
                            let mut s = 0.0;
                            for (bvv, dv) in brow.iter().zip(drow) {
                                s += bvv * dv;
                            }
                            d_a[i * k + kk] = s;
                        }
                    }
                    self.acc(*a, |g| {
                        for (gi, di) in g.iter_mut().zip(&d_a) {
                            *gi += di;
                        }
                    });
                }
                if self.needs(*b) {
                    // dB = Aᵀ · dOut
                    let av = self.nodes[a.0].values.clone();
                    let mut d_b = vec![0.0; k * n];
                    for i in 0..m {
                        let drow = &d_out[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = av[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let dbrow = &mut d_b[kk * n..(kk + 1) * n];
                            for (dbv, dv) in dbrow.iter_mut().zip(drow) {
                                *dbv += aik * dv;
                            }
                        }
                    }
                    self.acc(*b, |g| {
                        for (gi, di) in g.iter_mut().zip(&d_b) {
                            *gi += di;
                        }
                    });
                }
            }
            Op::Transpose { x } => {
                let (c, r) = match self.nodes[node].shape {
                    Shape::Matrix(c, r) => (c, r),
                    _ => unreachable!(),
                };
                self.acc(*x, |g| {
                    for i in 0..c {
                        for j in 0..r {
                            g[j * c + i] += d_out[i * r + j];
                        }
                    }
                });
            }
            Op::Add { a, b } => {
                self.acc(*a, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi += di;
                    }
                });
                self.acc(*b, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi += di;
                    }
                });
            }
            Op::Sub { a, b } => {
                self.acc(*a, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi += di;
                    }
                });
                self.acc(*b, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi -= di;
                    }
                });
            }
            Op::Mul { a, b } => {
                if self.needs(*a) {
                    let bv = self.nodes[b.0].values.clone();
                    self.acc(*a, |g| {
                        for ((gi, di), bi) in g.iter_mut().zip(d_out).zip(&bv) {
                            *gi += di * bi;
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.nodes[a.0].values.clone();
                    self.acc(*b, |g| {
                        for ((gi, di), ai) in g.iter_mut().zip(d_out).zip(&av) {
                            *gi += di * ai;
                        }
                    });
                }
            }
            Op::Div { a, b } => {
                let bv = self.nodes[b.0].values.clone();
                if self.needs(*a) {
                    self.acc(*a, |g| {
                        for ((gi, di), bi) in g.iter_mut().zip(d_out).zip(&bv) {
                            *gi += di / bi;
                        }
                    });
                }
                if self.needs(*b) {
                    let av = self.nodes[a.0].values.clone();
                    self.acc(*b, |g| {
                        for (((gi, di), ai), bi) in g.iter_mut().zip(d_out).zip(&av).zip(&bv) {
                            *gi -= di * ai / (bi * bi);
                        }
                    });
                }
            }
            Op::Neg { x } => {
                self.acc(*x, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi -= di;
                    }
                });
            }
            Op::Scale { x, c } => {
                let c = *c;
                self.acc(*x, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi += c * di;
                    }
                });
            }
            Op::AddRow { m, v } => {
                let c = self.shape(*v).numel();
                self.acc(*m, |g| {
                    for (gi, di) in g.iter_mut().zip(d_out) {
                        *gi += di;
                    }
                });
                self.acc(*v, |g| {
                    for (j, gj) in g.iter_mut().enumerate() {
                        let mut s = 0.0;
                        let mut idx = j;
                        while idx < d_out.len() {
                            s += d_out[idx];
                            idx += c;
                        }
                        *gj += s;
                    }
                });
            }
            Op::MulRow { m, v } => {
                let c = self.shape(*v).numel();
                if self.needs(*m) {
                    let vv = self.nodes[v.0].values.clone();
                    self.acc(*m, |g| {
                        for (i, (gi, di)) in g.iter_mut().zip(d_out).enumerate() {
                            *gi += di * vv[i % c];
                        }
                    });
                }
                if self.needs(*v) {
                    let mv = self.nodes[m.0].values.clone();
                    self.acc(*v, |g| {
                        for (j, gj) in g.iter_mut().enumerate() {
                            let mut s = 0.0;
                            let mut idx = j;
                            while idx < d_out.len() {
                                s += d_out[idx] * mv[idx];
                                idx += c;
                            }
                            *gj += s;
                        }
                    });
                }
            }
            Op::Tanh { x } => {
                let y = self.nodes[node].values.clone();
                self.acc(*x, |g| {
                    for ((gi, di), yi) in g.iter_mut().zip(d_out).zip(&y) {
                        *gi += di * (1.0 - yi * yi);
                    }
                });
            }
            Op::Sigmoid { x } => {
                let y = self.nodes[node].values.clone();
                self.acc(*x, |g| {
                    for ((gi, di), yi) in g.iter_mut().zip(d_out).zip(&y) {
                        *gi += di * yi * (1.0 - yi);
                    }
                });
            }
            Op::Relu { x } => {
                let y = self.nodes[node].values.clone();
                self.acc(*x, |g| {
                    for ((gi, di), yi) in g.iter_mut().zip(d_out).zip(&y) {
                        if *yi > 0.0 {
                            *gi += di;
                        }
                    }
                });
            }
            Op::Exp { x } => {
                let y = self.nodes[node].values.clone();
                self.acc(*x, |g| {
                    for ((gi, di), yi) in g.iter_mut().zip(d_out).zip(&y) {
                        *gi += di * yi;
                    }
                });
            }
            Op::Ln { x } => {
                let xv = self.nodes[x.0].values.clone();
                self.acc(*x, |g| {
                    for ((gi, di), xi) in g.iter_mut().zip(d_out).zip(&xv) {
                        *gi += di / xi;
                    }
                });
            }
            Op::Clamp { x, lo, hi } => {
                let (lo, hi) = (*lo, *hi);
                let xv = self.nodes[x.0].values.clone();
                self.acc(*x, |g| {
                    for ((gi, di), xi) in g.iter_mut().zip(d_out).zip(&xv) {
                        if *xi > lo && *xi < hi {
                            *gi += di;
                        }
                    }
                });
            }
            Op::SoftmaxRows { x } => {
                let c = self.nodes[node].shape.cols();
                let y = self.nodes[node].values.clone();
                self.acc(*x, |g| {
                    for ((grow, drow), yrow) in
                        g.chunks_mut(c).zip(d_out.chunks(c)).zip(y.chunks(c))
                    {
                        let dot: f64 = drow.iter().zip(yrow).map(|(d, yv)| d * yv).sum();
                        for ((gi, di), yi) in grow.iter_mut().zip(drow).zip(yrow) {
                            *gi += yi * (di - dot);
                        }
                    }
                });
            }
            Op::MaskedSoftmaxRows { x } => {
                // Disallowed entries carry y == 0, so the plain softmax
                // Jacobian already routes zero gradient to them.
                let c = self.nodes[node].shape.cols();
                let y = self.nodes[node].values.clone();
                self.acc(*x, |g| {
                    for ((grow, drow), yrow) in
                        g.chunks_mut(c).zip(d_out.chunks(c)).zip(y.chunks(c))
                    {
                        let dot: f64 = drow.iter().zip(yrow).map(|(d, yv)| d * yv).sum();
                        for ((gi, di), yi) in grow.iter_mut().zip(drow).zip(yrow) {
                            *gi += yi * (di - dot);
                        }
                    }
                });
            }
            Op::NormalizeRows { x, inv_std } => {
                let c = self.nodes[node].shape.cols();
                let y = self.nodes[node].values.clone();
                let inv_std = inv_std.clone();
                self.acc(*x, |g| {
                    for (ri, ((grow, drow), yrow)) in
                        g.chunks_mut(c).zip(d_out.chunks(c)).zip(y.chunks(c)).enumerate()
                    {
                        let istd = inv_std[ri];
                        let mean_d: f64 = drow.iter().sum::<f64>() / c as f64;
                        let mean_dy: f64 =
                            drow.iter().zip(yrow).map(|(d, yv)| d * yv).sum::<f64>() / c as f64;
                        for ((gi, di), yi) in grow.iter_mut().zip(drow).zip(yrow) {
                            *gi += istd * (di - mean_d - yi * mean_dy);
                        }
                    }
                });
            }
            Op::GatherRows { x, rows } => {
                let c = self.nodes[node].shape.cols();
                let rows = rows.clone();
                self.acc(*x, |g| {
                    for (i, &ri) in rows.iter().enumerate() {
                        for j in 0..c {
                            g[ri * c + j] += d_out[i * c + j];
                        }
                    }
                });
            }
            Op::Row { x, idx } => {
                let c = d_out.len();
                let idx = *idx;
                self.acc(*x, |g| {
                    for (j, di) in d_out.iter().enumerate() {
                        g[idx * c + j] += di;
                    }
                });
            }
            Op::StackRows { parts } => {
                let c = self.nodes[node].shape.cols();
                for (i, p) in parts.clone().into_iter().enumerate() {
                    self.acc(p, |g| {
                        for (gi, di) in g.iter_mut().zip(&d_out[i * c..(i + 1) * c]) {
                            *gi += di;
                        }
                    });
                }
            }
            Op::ConcatFlat { parts } => {
                let mut off = 0;
                for p in parts.clone() {
                    let n = self.nodes[p.0].values.len();
                    self.acc(p, |g| {
                        for (gi, di) in g.iter_mut().zip(&d_out[off..off + n]) {
                            *gi += di;
                        }
                    });
                    off += n;
                }
            }
            Op::SliceCols { x, start, len } => {
                let (r, len) = (self.nodes[node].shape.rows(), *len);
                let c = self.shape(*x).cols();
                let start = *start;
                self.acc(*x, |g| {
                    for i in 0..r {
                        for j in 0..len {
                            g[i * c + start + j] += d_out[i * len + j];
                        }
                    }
                });
            }
            Op::ConcatCols { parts } => {
                let r = self.nodes[node].shape.rows();
                let total = self.nodes[node].shape.cols();
                let mut off = 0;
                for p in parts.clone() {
                    let w = self.shape(p).cols();
                    self.acc(p, |g| {
                        for i in 0..r {
                            for j in 0..w {
                                g[i * w + j] += d_out[i * total + off + j];
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::SumAll { x } => {
                let d = d_out[0];
                self.acc(*x, |g| {
                    for gi in g.iter_mut() {
                        *gi += d;
                    }
                });
            }
            Op::MeanOf { parts } => {
                let inv = 1.0 / parts.len() as f64;
                for p in parts.clone() {
                    self.acc(p, |g| {
                        for (gi, di) in g.iter_mut().zip(d_out) {
                            *gi += di * inv;
                        }
                    });
                }
            }
            Op::AddN { parts } => {
                for p in parts.clone() {
                    self.acc(p, |g| {
                        for (gi, di) in g.iter_mut().zip(d_out) {
                            *gi += di;
                        }
                    });
                }
            }
            Op::CosineSim { a, b } => {
                let d = d_out[0];
                let av = self.nodes[a.0].values.clone();
                let bv = self.nodes[b.0].values.clone();
                let dot: f64 = av.iter().zip(&bv).map(|(x, y)| x * y).sum();
                let na2: f64 = av.iter().map(|x| x * x).sum();
                let nb2: f64 = bv.iter().map(|x| x * x).sum();
                let (na, nb) = (na2.sqrt(), nb2.sqrt());
                let c = dot / (na * nb);
                if self.needs(*a) {
                    self.acc(*a, |g| {
                        for ((gi, ai), bi) in g.iter_mut().zip(&av).zip(&bv) {
                            *gi += d * (bi / (na * nb) - c * ai / na2);
                        }
                    });
                }
                if self.needs(*b) {
                    self.acc(*b, |g| {
                        for ((gi, ai), bi) in g.iter_mut().zip(&av).zip(&bv) {
                            *gi += d * (ai / (na * nb) - c * bi / nb2);
                        }
                    });
                }
            }
        }
    }
}
