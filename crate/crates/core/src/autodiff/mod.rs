//! Define-by-run reverse-mode differentiation over dense 2-D `f64` arrays.
//!
//! A [`Graph`] is an append-only tape. Every operation pushes a node whose
//! parents already live on the tape, so node ids are a topological order and
//! [`Graph::backward`] is a single reverse sweep. The graph is rebuilt for
//! every optimisation step; persistent weights live in [`Param`]s and are
//! bound into the tape as gradient-carrying leaves.

mod adam;
pub mod gradcheck;

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{JstnError, Result};

pub use adam::{AdamConfig, AdamState};

/// Dense row-major real matrix.
pub type Matrix = Array2<f64>;

/// Lower clamp applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-12;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A persistent trainable matrix with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Deliberately wrong adjoints, used only to prove that gradient checking
/// catches them.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjointFault {
    /// LeakyReLU backward uses slope 1 on the negative side.
    LeakyReluSlope,
    /// Softmax backward drops the temperature factor.
    SoftmaxTemperature,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    LeakyRelu(NodeId, f64),
    Sigmoid(NodeId),
    Log(NodeId),
    Clamp(NodeId, f64, f64),
    SoftmaxRows(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    SqL2RowDiff(NodeId, NodeId),
    GradReverse(NodeId, f64),
    GatherRows(NodeId, Vec<usize>),
    ConcatRows(Vec<NodeId>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<AdjointFault>,
}

fn shape(m: &Matrix) -> (usize, usize) {
    (m.nrows(), m.ncols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    #[doc(hidden)]
    pub fn inject_fault(&mut self, fault: AdjointFault) {
        self.fault = Some(fault);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that accumulates gradient during [`Graph::backward`].
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Constant copy of `a`'s current value; gradients stop here.
    pub fn detach(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).clone();
        self.constant(v)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.node(id).value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.node(id).value[[0, 0]]
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        shape(self.value(id))
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.rg(id)
    }

    /// Accumulated gradient of a leaf, if any backward pass has reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.node(id).grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.ncols() != bv.nrows() {
            return Err(JstnError::Dimension {
                op: "matmul",
                left: shape(av),
                right: shape(bv),
            });
        }
        let out = av.dot(bv);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(JstnError::Dimension {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Adds a `1×cols` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb.0 != 1 || sb.1 != sa.1 {
            return Err(JstnError::Dimension {
                op: "add_row",
                left: sa,
                right: sb,
            });
        }
        let out = self.value(a) + self.value(bias);
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a) * c;
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let out = self.value(a) + c;
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        debug_assert!(slope > 0.0 && slope < 1.0, "slope must lie in (0,1)");
        let out = self.value(a).mapv(|x| if x >= 0.0 { x } else { slope * x });
        let rg = self.rg(a);
        self.push(out, Op::LeakyRelu(a, slope), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    /// Natural logarithm; every input entry must be strictly positive.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        if let Some(bad) = v.iter().find(|x| !(**x > 0.0)) {
            return Err(JstnError::Domain(format!("log of non-positive value {bad}")));
        }
        let out = v.mapv(f64::ln);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Log(a), rg))
    }

    /// Clamp to `[lo, hi]`; gradient passes only where the input was inside.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let out = self.value(a).mapv(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(out, Op::Clamp(a, lo, hi), rg)
    }

    /// Row-wise `softmax(a / temperature)`, stabilised by row-max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId, temperature: f64) -> Result<NodeId> {
        if !(temperature > 0.0) {
            return Err(JstnError::Parameter(format!(
                "softmax temperature must be > 0, got {temperature}"
            )));
        }
        let out = softmax_rows(self.value(a), temperature);
        let rg = self.rg(a);
        Ok(self.push(out, Op::SoftmaxRows(a, temperature), rg))
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).sum();
        let rg = self.rg(a);
        self.push(Matrix::from_elem((1, 1), s), Op::Sum(a), rg)
    }

    /// Mean of all entries, as a 1×1 node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let m = v.sum() / v.len() as f64;
        let rg = self.rg(a);
        self.push(Matrix::from_elem((1, 1), m), Op::Mean(a), rg)
    }

    /// Per-row squared Euclidean distance `‖a_i − b_i‖²`, an `n×1` node.
    pub fn sq_l2_rowdiff(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sq_l2_rowdiff", a, b)?;
        let diff = self.value(a) - self.value(b);
        let out = (&diff * &diff).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::SqL2RowDiff(a, b), rg))
    }

    /// Identity forward; multiplies the upstream gradient by `-lambda` backward.
    pub fn grad_reverse(&mut self, a: NodeId, lambda: f64) -> NodeId {
        let out = self.value(a).clone();
        let rg = self.rg(a);
        self.push(out, Op::GradReverse(a, lambda), rg)
    }

    /// Selects rows of `a` by index (repeats allowed).
    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> Result<NodeId> {
        let v = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= v.nrows()) {
            return Err(JstnError::Usage(format!(
                "gather_rows: row {bad} out of range for {} rows",
                v.nrows()
            )));
        }
        let out = v.select(Axis(0), rows);
        let rg = self.rg(a);
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec()), rg))
    }

    /// Stacks nodes vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(JstnError::Usage("concat_rows of zero nodes".into()));
        };
        let cols = self.shape(first).1;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(JstnError::Dimension {
                    op: "concat_rows",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
        }
        if parts.len() == 1 {
            return Ok(first);
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = concatenate(Axis(0), &views).expect("column counts checked");
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Backpropagates from the scalar `root`, accumulating into every
    /// gradient-carrying leaf. Calling it twice without [`Graph::zero_grad`]
    /// sums the contributions.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.shape(root) != (1, 1) {
            return Err(JstnError::Usage(format!(
                "backward requires a 1x1 root, got {:?}",
                self.shape(root)
            )));
        }
        let mut upstream: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        upstream[root.0] = Some(Matrix::ones((1, 1)));

        for idx in (0..=root.0).rev() {
            let Some(g) = upstream[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if matches!(self.nodes[idx].op, Op::Leaf) {
                let node = &mut self.nodes[idx];
                match &mut node.grad {
                    Some(acc) => *acc += &g,
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (parent, pg) in self.local_grads(NodeId(idx), &g) {
                match &mut upstream[parent.0] {
                    Some(acc) => *acc += &pg,
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `id` for each parent that needs one.
    fn local_grads(&self, id: NodeId, g: &Matrix) -> Vec<(NodeId, Matrix)> {
        let node = self.node(id);
        let mut out = Vec::with_capacity(2);
        let mut emit = |p: NodeId, f: &dyn Fn() -> Matrix| {
            if self.rg(p) {
                out.push((p, f()));
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                emit(*a, &|| g.dot(&bv.t()));
                emit(*b, &|| av.t().dot(g));
            }
            Op::Add(a, b) => {
                emit(*a, &|| g.clone());
                emit(*b, &|| g.clone());
            }
            Op::AddRow(a, b) => {
                emit(*a, &|| g.clone());
                emit(*b, &|| g.sum_axis(Axis(0)).insert_axis(Axis(0)));
            }
            Op::Sub(a, b) => {
                emit(*a, &|| g.clone());
                emit(*b, &|| -g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                emit(*a, &|| g * bv);
                emit(*b, &|| g * av);
            }
            Op::Scale(a, c) => emit(*a, &|| g * *c),
            Op::AddScalar(a) => emit(*a, &|| g.clone()),
            Op::LeakyRelu(a, slope) => {
                let neg = match self.fault {
                    Some(AdjointFault::LeakyReluSlope) => 1.0,
                    _ => *slope,
                };
                let x = self.value(*a);
                emit(*a, &|| {
                    let mut d = g.clone();
                    d.zip_mut_with(x, |d, &x| {
                        if x < 0.0 {
                            *d *= neg
                        }
                    });
                    d
                });
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                emit(*a, &|| g * &y.mapv(|s| s * (1.0 - s)));
            }
            Op::Log(a) => {
                let x = self.value(*a);
                emit(*a, &|| g / x);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                emit(*a, &|| {
                    let mut d = g.clone();
                    d.zip_mut_with(x, |d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0
                        }
                    });
                    d
                });
            }
            Op::SoftmaxRows(a, t) => {
                let y = &node.value;
                let inv_t = match self.fault {
                    Some(AdjointFault::SoftmaxTemperature) => 1.0,
                    _ => 1.0 / *t,
                };
                emit(*a, &|| {
                    let gy = g * y;
                    let dots = gy.sum_axis(Axis(1)).insert_axis(Axis(1));
                    (&gy - &(y * &dots)) * inv_t
                });
            }
            Op::Sum(a) => {
                let s = self.shape(*a);
                emit(*a, &|| Matrix::from_elem(s, g[[0, 0]]));
            }
            Op::Mean(a) => {
                let s = self.shape(*a);
                let n = (s.0 * s.1) as f64;
                emit(*a, &|| Matrix::from_elem(s, g[[0, 0]] / n));
            }
            Op::SqL2RowDiff(a, b) => {
                let da = (self.value(*a) - self.value(*b)) * g * 2.0;
                emit(*a, &|| da.clone());
                emit(*b, &|| -&da);
            }
            Op::GradReverse(a, lambda) => emit(*a, &|| g * -*lambda),
            Op::GatherRows(a, rows) => {
                let s = self.shape(*a);
                emit(*a, &|| {
                    let mut d = Matrix::zeros(s);
                    for (i, &r) in rows.iter().enumerate() {
                        let mut dst = d.row_mut(r);
                        dst += &g.row(i);
                    }
                    d
                });
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let n = self.shape(p).0;
                    let range = start..start + n;
                    emit(p, &|| g.slice(s![range.clone(), ..]).to_owned());
                    start += n;
                }
            }
        }
        out
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise tempered softmax on plain values (no graph).
pub fn softmax_rows(m: &Matrix, temperature: f64) -> Matrix {
    let mut out = m / temperature;
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row /= z;
    }
    out
}

/// Index of the largest entry of each row; ties resolve to the lowest index.
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
