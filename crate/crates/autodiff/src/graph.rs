//! Define-by-run computation graph.
//!
//! Nodes are appended in evaluation order, so the node list is a valid
//! topological order and the backward pass is a single reverse sweep.
//! A node only carries a gradient when at least one of its inputs does;
//! constants therefore act as stop-gradient boundaries.

use std::f64::consts::PI;

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

/// Index of a node inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive catalog. Constants live inside the variants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// `x·W + b` with `x: n×i`, `W: i×o`, `b: 1×o`.
    Affine,
    /// Column-wise concatenation of any number of `n×_` inputs.
    Concat,
    LeakyRelu { slope: f64 },
    Tanh,
    /// Elementwise with row/column/scalar broadcasting.
    Add,
    Sub,
    Mul,
    Scale(f64),
    AddScalar(f64),
    /// Row-wise squared L2 norm, `n×k → n×1`.
    SquaredNorm,
    /// Row-wise sum, `n×k → n×1`.
    SumCols,
    /// Mean over the batch (rows), `n×k → 1×k`.
    MeanRows,
    /// Diagonal Gaussian log-density of `a` under `N(mu, exp(log_sigma)^2)`,
    /// summed over columns: inputs `(a, mu, log_sigma)`, output `n×1`.
    GaussianLogDensity,
    Softplus,
    Exp,
    Clamp { lo: f64, hi: f64 },
    /// Elementwise minimum of two same-shape inputs.
    Minimum,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Affine => "affine",
            Primitive::Concat => "concat",
            Primitive::LeakyRelu { .. } => "leaky-relu",
            Primitive::Tanh => "tanh",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::AddScalar(_) => "add-scalar",
            Primitive::SquaredNorm => "squared-l2-norm",
            Primitive::SumCols => "sum-cols",
            Primitive::MeanRows => "mean-over-batch",
            Primitive::GaussianLogDensity => "diag-gaussian-log-density",
            Primitive::Softplus => "softplus",
            Primitive::Exp => "exp",
            Primitive::Clamp { .. } => "clamp",
            Primitive::Minimum => "minimum",
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Apply(Primitive),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    tensor: Tensor,
    label: Option<String>,
}

/// Gradients of one backward pass, restricted to gradient-requiring leaves.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    entries: Vec<(NodeId, Option<String>, Array2<f64>)>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Array2<f64>> {
        self.entries
            .iter()
            .find(|(n, _, _)| *n == id)
            .map(|(_, _, g)| g)
    }

    pub fn by_label(&self, label: &str) -> Option<&Array2<f64>> {
        self.entries
            .iter()
            .find(|(_, l, _)| l.as_deref() == Some(label))
            .map(|(_, _, g)| g)
    }

    /// Labels of every leaf that received a gradient slot.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().filter_map(|(_, l, _)| l.as_deref())
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, Option<&str>, &Array2<f64>)> {
        self.entries.iter().map(|(n, l, g)| (*n, l.as_deref(), g))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn dims(a: &Array2<f64>) -> [usize; 2] {
    let (r, c) = a.dim();
    [r, c]
}

/// Output shape for broadcasting two operands; each dimension must match
/// or be 1 on one side.
fn broadcast_dims(a: [usize; 2], b: [usize; 2]) -> Option<[usize; 2]> {
    let mut out = [0; 2];
    for k in 0..2 {
        out[k] = match (a[k], b[k]) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(grad: Array2<f64>, shape: [usize; 2]) -> Array2<f64> {
    let mut g = grad;
    if shape[0] == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape[1] == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn broadcast(a: &Array2<f64>, shape: [usize; 2]) -> Array2<f64> {
    a.broadcast((shape[0], shape[1]))
        .expect("broadcast shape checked")
        .to_owned()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total number of nodes, leaves included.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of primitive applications recorded so far.
    pub fn primitive_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::Apply(_)))
            .count()
    }

    pub fn constant(&mut self, value: Array2<f64>) -> NodeId {
        self.push_leaf(Tensor::constant(value), None)
    }

    pub fn scalar(&mut self, x: f64) -> NodeId {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// A gradient-requiring leaf, identified by `label` in [`Gradients`].
    pub fn param(&mut self, label: impl Into<String>, value: Array2<f64>) -> NodeId {
        self.push_leaf(Tensor::new(value, true), Some(label.into()))
    }

    /// Unlabelled gradient-requiring leaf.
    pub fn variable(&mut self, value: Array2<f64>) -> NodeId {
        self.push_leaf(Tensor::new(value, true), None)
    }

    fn push_leaf(&mut self, tensor: Tensor, label: Option<String>) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            tensor,
            label,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn tensor(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].tensor
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        self.nodes[id.0].tensor.value()
    }

    /// Value of a `1x1` node.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.value(id)[[0, 0]]
    }

    fn check(&self, id: NodeId) -> Result<&Array2<f64>> {
        self.nodes
            .get(id.0)
            .map(|n| n.tensor.value())
            .ok_or(AutodiffError::UnknownNode(id.0))
    }

    /// Applies a primitive, records it, and returns the output node.
    pub fn apply(&mut self, kind: Primitive, inputs: &[NodeId]) -> Result<NodeId> {
        let values = inputs
            .iter()
            .map(|&i| self.check(i))
            .collect::<Result<Vec<_>>>()?;
        let out = forward(kind, &values)?;
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].tensor.requires_grad());
        self.nodes.push(Node {
            op: Op::Apply(kind),
            inputs: inputs.to_vec(),
            tensor: Tensor::new(out, requires_grad),
            label: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Affine, &[x, w, b])
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Primitive::Concat, parts)
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId> {
        self.apply(Primitive::LeakyRelu { slope }, &[x])
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Tanh, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mul, &[a, b])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Primitive::Scale(c), &[x])
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Primitive::AddScalar(c), &[x])
    }

    pub fn squared_norm(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Primitive::SquaredNorm, &[x])
    }

    pub fn sum_cols(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Primitive::SumCols, &[x])
    }

    pub fn mean_rows(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MeanRows, &[x])
    }

    pub fn gaussian_log_density(
        &mut self,
        a: NodeId,
        mu: NodeId,
        log_sigma: NodeId,
    ) -> Result<NodeId> {
        self.apply(Primitive::GaussianLogDensity, &[a, mu, log_sigma])
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Softplus, &[x])
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Exp, &[x])
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        self.apply(Primitive::Clamp { lo, hi }, &[x])
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Minimum, &[a, b])
    }

    /// Mean of row-wise squared norms of `a - b`: the batch-averaged
    /// squared-error loss used throughout.
    pub fn mean_squared_error(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let d = self.sub(a, b)?;
        let n = self.squared_norm(d)?;
        self.mean_rows(n)
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Fills the gradient slot of every gradient-requiring leaf (zero when
    /// the leaf does not influence the loss) and returns those gradients.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        let loss_dims = dims(self.check(loss)?);
        if loss_dims != [1, 1] {
            return Err(AutodiffError::NonScalarLoss(loss_dims));
        }
        let mut adjoint: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        if self.nodes[loss.0].tensor.requires_grad() {
            adjoint[loss.0] = Some(Array2::ones((1, 1)));
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Op::Apply(kind) = node.op else { continue };
            if !node.tensor.requires_grad() {
                continue;
            }
            let Some(g) = adjoint[idx].take() else { continue };
            let wanted: Vec<bool> = node
                .inputs
                .iter()
                .map(|i| self.nodes[i.0].tensor.requires_grad())
                .collect();
            let inputs: Vec<&Array2<f64>> = node
                .inputs
                .iter()
                .map(|i| self.nodes[i.0].tensor.value())
                .collect();
            let grads = vjp(kind, &inputs, node.tensor.value(), g, &wanted);
            for (input, grad) in node.inputs.iter().zip(grads) {
                let Some(grad) = grad else { continue };
                match &mut adjoint[input.0] {
                    Some(acc) => *acc += &grad,
                    slot @ None => *slot = Some(grad),
                }
            }
        }

        let mut entries = Vec::new();
        for (idx, node) in self.nodes.iter_mut().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.tensor.requires_grad() {
                continue;
            }
            let g = adjoint
                .get_mut(idx)
                .and_then(Option::take)
                .unwrap_or_else(|| Array2::zeros(node.tensor.value().dim()));
            node.tensor.set_grad(g.clone());
            entries.push((NodeId(idx), node.label.clone(), g));
        }
        Ok(Gradients { entries })
    }
}

fn arity(kind: Primitive, values: &[&Array2<f64>], expected: usize) -> Result<()> {
    if values.len() != expected {
        return Err(AutodiffError::Arity {
            primitive: kind.name(),
            expected,
            got: values.len(),
        });
    }
    Ok(())
}

fn mismatch(kind: Primitive, values: &[&Array2<f64>]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        primitive: kind.name(),
        shapes: values.iter().map(|v| dims(v)).collect(),
    }
}

fn forward(kind: Primitive, v: &[&Array2<f64>]) -> Result<Array2<f64>> {
    use Primitive::*;
    match kind {
        Affine => {
            arity(kind, v, 3)?;
            let (x, w, b) = (v[0], v[1], v[2]);
            if x.ncols() != w.nrows() || b.nrows() != 1 || b.ncols() != w.ncols() {
                return Err(mismatch(kind, v));
            }
            Ok(x.dot(w) + b)
        }
        Concat => {
            if v.is_empty() {
                return Err(AutodiffError::Arity {
                    primitive: kind.name(),
                    expected: 1,
                    got: 0,
                });
            }
            let rows = v[0].nrows();
            if v.iter().any(|a| a.nrows() != rows) {
                return Err(mismatch(kind, v));
            }
            let cols: usize = v.iter().map(|a| a.ncols()).sum();
            let mut out = Array2::zeros((rows, cols));
            let mut at = 0;
            for a in v {
                out.slice_mut(s![.., at..at + a.ncols()]).assign(*a);
                at += a.ncols();
            }
            Ok(out)
        }
        LeakyRelu { slope } => {
            arity(kind, v, 1)?;
            Ok(v[0].mapv(|x| if x > 0.0 { x } else { slope * x }))
        }
        Tanh => {
            arity(kind, v, 1)?;
            Ok(v[0].mapv(f64::tanh))
        }
        Add | Sub | Mul => {
            arity(kind, v, 2)?;
            let shape = broadcast_dims(dims(v[0]), dims(v[1])).ok_or_else(|| mismatch(kind, v))?;
            let a = v[0].broadcast((shape[0], shape[1])).expect("checked");
            let b = v[1].broadcast((shape[0], shape[1])).expect("checked");
            Ok(match kind {
                Add => &a + &b,
                Sub => &a - &b,
                _ => &a * &b,
            })
        }
        Scale(c) => {
            arity(kind, v, 1)?;
            Ok(v[0] * c)
        }
        AddScalar(c) => {
            arity(kind, v, 1)?;
            Ok(v[0] + c)
        }
        SquaredNorm => {
            arity(kind, v, 1)?;
            Ok(v[0]
                .map_axis(Axis(1), |r| r.iter().map(|x| x * x).sum::<f64>())
                .insert_axis(Axis(1)))
        }
        SumCols => {
            arity(kind, v, 1)?;
            Ok(v[0].sum_axis(Axis(1)).insert_axis(Axis(1)))
        }
        MeanRows => {
            arity(kind, v, 1)?;
            if v[0].nrows() == 0 {
                return Err(mismatch(kind, v));
            }
            Ok(v[0].mean_axis(Axis(0)).expect("nonempty").insert_axis(Axis(0)))
        }
        GaussianLogDensity => {
            arity(kind, v, 3)?;
            let (a, mu, ls) = (v[0], v[1], v[2]);
            if a.dim() != mu.dim() || a.dim() != ls.dim() {
                return Err(mismatch(kind, v));
            }
            let mut out = Array2::zeros((a.nrows(), 1));
            for r in 0..a.nrows() {
                let mut acc = 0.0;
                for c in 0..a.ncols() {
                    let z = (a[[r, c]] - mu[[r, c]]) * (-ls[[r, c]]).exp();
                    acc += -0.5 * z * z - ls[[r, c]] - HALF_LN_2PI;
                }
                out[[r, 0]] = acc;
            }
            Ok(out)
        }
        Softplus => {
            arity(kind, v, 1)?;
            Ok(v[0].mapv(softplus))
        }
        Exp => {
            arity(kind, v, 1)?;
            Ok(v[0].mapv(f64::exp))
        }
        Clamp { lo, hi } => {
            arity(kind, v, 1)?;
            Ok(v[0].mapv(|x| x.clamp(lo, hi)))
        }
        Minimum => {
            arity(kind, v, 2)?;
            if v[0].dim() != v[1].dim() {
                return Err(mismatch(kind, v));
            }
            Ok(Zip::from(v[0]).and(v[1]).map_collect(|&a, &b| a.min(b)))
        }
    }
}

/// Vector-Jacobian products: gradient w.r.t. each input given the output
/// gradient `g`. Inputs with `wanted[i] == false` are skipped.
fn vjp(
    kind: Primitive,
    v: &[&Array2<f64>],
    out: &Array2<f64>,
    g: Array2<f64>,
    wanted: &[bool],
) -> Vec<Option<Array2<f64>>> {
    use Primitive::*;
    let want = |i: usize| wanted[i];
    match kind {
        Affine => {
            let (x, w) = (v[0], v[1]);
            vec![
                want(0).then(|| g.dot(&w.t())),
                want(1).then(|| x.t().dot(&g)),
                want(2).then(|| g.sum_axis(Axis(0)).insert_axis(Axis(0))),
            ]
        }
        Concat => {
            let mut at = 0;
            v.iter()
                .enumerate()
                .map(|(i, a)| {
                    let part = want(i).then(|| g.slice(s![.., at..at + a.ncols()]).to_owned());
                    at += a.ncols();
                    part
                })
                .collect()
        }
        LeakyRelu { slope } => {
            vec![Some(Zip::from(&g).and(v[0]).map_collect(|&g, &x| {
                if x > 0.0 {
                    g
                } else {
                    slope * g
                }
            }))]
        }
        Tanh => vec![Some(Zip::from(&g).and(out).map_collect(|&g, &y| g * (1.0 - y * y)))],
        Add | Sub | Mul => {
            let shape = dims(out);
            let (sa, sb) = (dims(v[0]), dims(v[1]));
            let ga = want(0).then(|| {
                let full = match kind {
                    Mul => &g * &v[1].broadcast((shape[0], shape[1])).expect("checked"),
                    _ => g.clone(),
                };
                reduce_to(full, sa)
            });
            let gb = want(1).then(|| {
                let full = match kind {
                    Add => g.clone(),
                    Sub => -&g,
                    _ => &g * &broadcast(v[0], shape),
                };
                reduce_to(full, sb)
            });
            vec![ga, gb]
        }
        Scale(c) => vec![Some(g * c)],
        AddScalar(_) => vec![Some(g)],
        SquaredNorm => vec![Some(v[0] * &g * 2.0)],
        SumCols => vec![Some(broadcast(&g, dims(v[0])))],
        MeanRows => {
            let n = v[0].nrows() as f64;
            vec![Some(broadcast(&(g / n), dims(v[0])))]
        }
        GaussianLogDensity => {
            let (a, mu, ls) = (v[0], v[1], v[2]);
            let (rows, cols) = a.dim();
            let mut ga = Array2::zeros((rows, cols));
            let mut gls = Array2::zeros((rows, cols));
            for r in 0..rows {
                let gr = g[[r, 0]];
                for c in 0..cols {
                    let inv = (-ls[[r, c]]).exp();
                    let z = (a[[r, c]] - mu[[r, c]]) * inv;
                    ga[[r, c]] = -z * inv * gr;
                    gls[[r, c]] = (z * z - 1.0) * gr;
                }
            }
            let gmu = want(1).then(|| -&ga);
            vec![want(0).then_some(ga), gmu, want(2).then_some(gls)]
        }
        Softplus => vec![Some(Zip::from(&g).and(v[0]).map_collect(|&g, &x| g * sigmoid(x)))],
        Exp => vec![Some(g * out)],
        Clamp { lo, hi } => vec![Some(Zip::from(&g).and(v[0]).map_collect(|&g, &x| {
            if (lo..=hi).contains(&x) {
                g
            } else {
                0.0
            }
        }))],
        Minimum => {
            let ga = Zip::from(&g)
                .and(v[0])
                .and(v[1])
                .map_collect(|&g, &a, &b| if a <= b { g } else { 0.0 });
            let gb = &g - &ga;
            vec![want(0).then_some(ga), want(1).then_some(gb)]
        }
    }
}

/// Standalone log-density of a diagonal Gaussian, used by callers that do
/// not need a graph.
pub fn gaussian_log_density(a: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    a.iter()
        .zip(mu)
        .zip(sigma)
        .map(|((a, m), s)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}
