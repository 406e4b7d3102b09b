//! Static computation graph with cached forward values and a reverse sweep.
//!
//! Nodes are appended in construction order, which is also a topological
//! order: every operand must already exist when an op is added, so the graph
//! is acyclic by construction. Shapes are inferred when a node is added and
//! re-checked against the feed on every [`Graph::evaluate`].

use std::collections::{BTreeMap, HashMap};

use super::kernels::{self, LOG_FLOOR};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Input(String),
    MatMul(NodeId, NodeId),
    AddBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Relu(NodeId),
    SqDist(NodeId, NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softmax(NodeId),
    Recip(NodeId),
    AddScalar(NodeId, f64),
    Scale(NodeId, f64),
    ScaleBy(NodeId, NodeId),
    Sum(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Relu(_) => "relu",
            Op::SqDist(..) => "sq_dist",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Softmax(_) => "softmax",
            Op::Recip(_) => "recip",
            Op::AddScalar(..) => "add_scalar",
            Op::Scale(..) => "scale",
            Op::ScaleBy(..) => "scale_by",
            Op::Sum(_) => "sum",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// Gradients keyed by input name.
pub type Gradients = BTreeMap<String, Tensor>;

/// A differentiable program over dense tensors.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    inputs: BTreeMap<String, NodeId>,
    outputs: BTreeMap<String, NodeId>,
    values: Vec<Tensor>,
}

fn is_scalar_shape(shape: &[usize]) -> bool {
    shape.iter().all(|&d| d == 1)
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.values.clear();
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn shape_of(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    fn matrix_shape(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        match self.shape_of(id) {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Shape {
                op,
                expected: vec![0, 0],
                found: other.to_vec(),
            }),
        }
    }

    /// Declares a named leaf. Every leaf receives a gradient on backward.
    pub fn input(&mut self, name: &str, shape: &[usize]) -> Result<NodeId> {
        if self.inputs.contains_key(name) {
            return Err(Error::DuplicateInput(name.to_string()));
        }
        let id = self.push(Op::Input(name.to_string()), shape.to_vec());
        self.inputs.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers `id` as a named output returned by [`Graph::evaluate`].
    pub fn output(&mut self, name: &str, id: NodeId) {
        self.outputs.insert(name.to_string(), id);
    }

    pub fn output_id(&self, name: &str) -> Option<NodeId> {
        self.outputs.get(name).copied()
    }

    pub fn input_names(&self) -> impl Iterator<Item = &str> {
        self.inputs.keys().map(String::as_str)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m) = self.matrix_shape(a, "matmul")?;
        let (m2, p) = self.matrix_shape(b, "matmul")?;
        if m != m2 {
            return Err(Error::Shape {
                op: "matmul",
                expected: vec![m, p],
                found: vec![m2, p],
            });
        }
        Ok(self.push(Op::MatMul(a, b), vec![n, p]))
    }

    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (n, m) = self.matrix_shape(x, "add_bias")?;
        if self.shape_of(bias) != [m] {
            return Err(Error::Shape {
                op: "add_bias",
                expected: vec![m],
                found: self.shape_of(bias).to_vec(),
            });
        }
        Ok(self.push(Op::AddBias(x, bias), vec![n, m]))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape_of(a), self.shape_of(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                expected: sa.to_vec(),
                found: sb.to_vec(),
            });
        }
        Ok(sa.to_vec())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "add")?;
        Ok(self.push(Op::Add(a, b), shape))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let shape = self.same_shape(a, b, "mul")?;
        Ok(self.push(Op::Mul(a, b), shape))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Relu(x), shape)
    }

    /// Pairwise squared Euclidean distances between rows of `a` and rows of `b`.
    pub fn sq_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, d) = self.matrix_shape(a, "sq_dist")?;
        let (k, d2) = self.matrix_shape(b, "sq_dist")?;
        if d != d2 {
            return Err(Error::Shape {
                op: "sq_dist",
                expected: vec![k, d],
                found: vec![k, d2],
            });
        }
        Ok(self.push(Op::SqDist(a, b), vec![n, k]))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Exp(x), shape)
    }

    /// `ln(max(x, 1e-12))`.
    pub fn log(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Log(x), shape)
    }

    /// Row-wise softmax of a matrix.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, k) = self.matrix_shape(x, "softmax")?;
        Ok(self.push(Op::Softmax(x), vec![n, k]))
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Recip(x), shape)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::AddScalar(x, c), shape)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let shape = self.shape_of(x).to_vec();
        self.push(Op::Scale(x, c), shape)
    }

    /// Multiplies `x` by the value of a one-element node.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if !is_scalar_shape(self.shape_of(s)) {
            return Err(Error::Shape {
                op: "scale_by",
                expected: vec![1],
                found: self.shape_of(s).to_vec(),
            });
        }
        let shape = self.shape_of(x).to_vec();
        Ok(self.push(Op::ScaleBy(x, s), shape))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        self.push(Op::Sum(x), Vec::new())
    }

    /// Runs the forward pass, caching every intermediate for [`Graph::backward`].
    ///
    /// Returns the values of all registered outputs.
    pub fn evaluate(&mut self, feed: &HashMap<&str, &Tensor>) -> Result<BTreeMap<String, Tensor>> {
        for name in feed.keys() {
            if !self.inputs.contains_key(*name) {
                return Err(Error::UnknownInput(name.to_string()));
            }
        }
        self.values.clear();
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = |id: NodeId| &values[id.0];
            let out = match &node.op {
                Op::Input(name) => {
                    let t = *feed.get(name.as_str()).ok_or_else(|| Error::MissingInput(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(Error::Shape {
                            op: "input",
                            expected: node.shape.clone(),
                            found: t.shape().to_vec(),
                        });
                    }
                    t.clone()
                }
                Op::MatMul(a, b) => kernels::matmul(v(*a), v(*b)),
                Op::AddBias(x, b) => kernels::add_row(v(*x), v(*b)),
                Op::Add(a, b) => zip_with(v(*a), v(*b), |x, y| x + y),
                Op::Mul(a, b) => zip_with(v(*a), v(*b), |x, y| x * y),
                Op::Relu(x) => kernels::relu(v(*x)),
                Op::SqDist(a, b) => kernels::sq_dists(v(*a), v(*b)),
                Op::Exp(x) => v(*x).map(f64::exp),
                Op::Log(x) => v(*x).map(kernels::guarded_ln),
                Op::Softmax(x) => kernels::softmax_rows(v(*x)),
                Op::Recip(x) => v(*x).map(|a| 1.0 / a),
                Op::AddScalar(x, c) => v(*x).map(|a| a + c),
                Op::Scale(x, c) => v(*x).map(|a| a * c),
                Op::ScaleBy(x, s) => {
                    let c = v(*s).item();
                    v(*x).map(|a| a * c)
                }
                Op::Sum(x) => Tensor::scalar(v(*x).sum()),
            };
            if !out.is_finite() {
                return Err(Error::NonFinite {
                    op: node.op.name().to_string(),
                });
            }
            values.push(out);
        }
        self.values = values;
        Ok(self
            .outputs
            .iter()
            .map(|(name, id)| (name.clone(), self.values[id.0].clone()))
            .collect())
    }

    /// Cached forward value of a node, if the graph has been evaluated.
    pub fn value(&self, id: NodeId) -> Option<&Tensor> {
        self.values.get(id.0)
    }

    /// Reverse sweep from `root`, returning the gradient of every input leaf.
    ///
    /// A scalar root is seeded with 1; any other root needs `seed` of the
    /// root's shape. Leaves the root does not depend on receive zeros.
    pub fn backward(&self, root: NodeId, seed: Option<&Tensor>) -> Result<Gradients> {
        if self.values.len() != self.nodes.len() {
            return Err(Error::NotEvaluated);
        }
        let root_shape = &self.nodes[root.0].shape;
        let seed = match seed {
            Some(s) if s.shape() == root_shape.as_slice() => s.clone(),
            Some(s) => {
                return Err(Error::Shape {
                    op: "backward seed",
                    expected: root_shape.clone(),
                    found: s.shape().to_vec(),
                })
            }
            None if is_scalar_shape(root_shape) => Tensor::full(root_shape, 1.0),
            None => {
                return Err(Error::NonScalarRoot {
                    shape: root_shape.clone(),
                })
            }
        };

        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(seed);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let val = |id: NodeId| &self.values[id.0];
            let out = &self.values[idx];
            match &self.nodes[idx].op {
                Op::Input(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, *a, kernels::matmul_nt(&g, val(*b)));
                    accumulate(&mut grads, *b, kernels::matmul_tn(val(*a), &g));
                }
                Op::AddBias(x, b) => {
                    let db = Tensor::vector(kernels::col_sums(&g));
                    accumulate(&mut grads, *b, db);
                    accumulate(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, zip_with(&g, val(*b), |x, y| x * y));
                    accumulate(&mut grads, *b, zip_with(&g, val(*a), |x, y| x * y));
                }
                Op::Relu(x) => {
                    let d = zip_with(&g, val(*x), |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    accumulate(&mut grads, *x, d);
                }
                Op::SqDist(a, b) => {
                    let (da, db) = sq_dist_backward(&g, val(*a), val(*b));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Exp(x) => accumulate(&mut grads, *x, zip_with(&g, out, |gi, yi| gi * yi)),
                Op::Log(x) => {
                    let d = zip_with(&g, val(*x), |gi, xi| if xi > LOG_FLOOR { gi / xi } else { 0.0 });
                    accumulate(&mut grads, *x, d);
                }
                Op::Softmax(x) => accumulate(&mut grads, *x, softmax_backward(&g, out)),
                Op::Recip(x) => accumulate(&mut grads, *x, zip_with(&g, out, |gi, yi| -gi * yi * yi)),
                Op::AddScalar(x, _) => accumulate(&mut grads, *x, g),
                Op::Scale(x, c) => accumulate(&mut grads, *x, g.map(|gi| gi * c)),
                Op::ScaleBy(x, s) => {
                    let c = val(*s).item();
                    let ds: f64 = g.data().iter().zip(val(*x).data()).map(|(a, b)| a * b).sum();
                    let ds = Tensor::full(self.shape_of(*s), ds);
                    accumulate(&mut grads, *x, g.map(|gi| gi * c));
                    accumulate(&mut grads, *s, ds);
                }
                Op::Sum(x) => {
                    let gv = g.item();
                    accumulate(&mut grads, *x, Tensor::full(self.shape_of(*x), gv));
                }
            }
        }

        Ok(self
            .inputs
            .iter()
            .map(|(name, id)| {
                let g = grads
                    .get_mut(id.0)
                    .and_then(Option::take)
                    .unwrap_or_else(|| Tensor::zeros(self.shape_of(*id)));
                (name.clone(), g)
            })
            .collect())
    }

    /// Backward from a registered output.
    pub fn backward_output(&self, name: &str) -> Result<Gradients> {
        let id = self
            .output_id(name)
            .ok_or_else(|| Error::invalid(format!("no output named `{name}`")))?;
        self.backward(id, None)
    }
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn softmax_backward(g: &Tensor, y: &Tensor) -> Tensor {
    let c = y.cols();
    let mut out = Vec::with_capacity(y.len());
    for (gr, yr) in g.data().chunks(c).zip(y.row_iter()) {
        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
        out.extend(gr.iter().zip(yr).map(|(gi, yi)| yi * (gi - dot)));
    }
    Tensor::from_parts(y.shape().to_vec(), out)
}

fn sq_dist_backward(g: &Tensor, a: &Tensor, b: &Tensor) -> (Tensor, Tensor) {
    let (n, d, k) = (a.rows(), a.cols(), b.rows());
    let mut da = vec![0.0; n * d];
    let mut db = vec![0.0; k * d];
    for i in 0..n {
        let ar = a.row(i);
        for j in 0..k {
            let w = 2.0 * g.get(i, j);
            if w == 0.0 {
                continue;
            }
            let br = b.row(j);
            for c in 0..d {
                let diff = w * (ar[c] - br[c]);
                da[i * d + c] += diff;
                db[j * d + c] -= diff;
            }
        }
    }
    (
        Tensor::from_parts(vec![n, d], da),
        Tensor::from_parts(vec![k, d], db),
    )
}
