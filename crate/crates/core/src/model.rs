//! The network: an MLP embedding φ, a linear softmax classifier f, and
//! learnable cluster centers μ living in the embedding's output space.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{kernels, Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Layer layout of the network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    /// Widths of the ReLU hidden layers of φ.
    pub hidden: Vec<usize>,
    /// Width of φ's output, the space where clustering happens.
    pub feature_dim: usize,
    pub classes: usize,
    /// Apply ReLU to φ's output layer as well.
    #[serde(default)]
    pub feature_relu: bool,
}

impl ModelSpec {
    pub const DEFAULT_HIDDEN: [usize; 2] = [64, 32];
    pub const DEFAULT_FEATURE_DIM: usize = 16;

    pub fn new(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            hidden: Self::DEFAULT_HIDDEN.to_vec(),
            feature_dim: Self::DEFAULT_FEATURE_DIM,
            classes,
            feature_relu: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid("model dimensions must be at least 1"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("model needs at least 2 classes"));
        }
        Ok(())
    }

    /// (fan_in, fan_out) of each layer of φ.
    fn embedding_layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.feature_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Which part of the network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Embedding,
    Classifier,
    Centers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// All trainable state. Layer weights are stored `fan_in × fan_out`.
///
/// Order: `phi.{i}.weight`, `phi.{i}.bias` for each embedding layer, then
/// `cls.weight`, `cls.bias`, then `centers` (K × d_z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    spec: ModelSpec,
    params: Vec<Param>,
}

pub const CENTERS: &str = "centers";

impl ModelParams {
    /// Scaled-uniform weights, zero biases, zero centers.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut dense = |name: String, kind, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Param {
                name: format!("{name}.weight"),
                kind,
                value: Tensor::from_parts(vec![fan_in, fan_out], w),
            });
            params.push(Param {
                name: format!("{name}.bias"),
                kind,
                value: Tensor::zeros(&[fan_out]),
            });
        };
        for (i, (fi, fo)) in spec.embedding_layers().into_iter().enumerate() {
            dense(format!("phi.{i}"), ParamKind::Embedding, fi, fo, &mut rng);
        }
        dense("cls".into(), ParamKind::Classifier, spec.feature_dim, spec.classes, &mut rng);
        params.push(Param {
            name: CENTERS.into(),
            kind: ParamKind::Centers,
            value: Tensor::zeros(&[spec.classes, spec.feature_dim]),
        });
        Ok(Self {
            spec: spec.clone(),
            params,
        })
    }

    /// Rebuilds params from explicit tensors, checking every shape against `spec`.
    pub fn from_params(spec: ModelSpec, params: Vec<Param>) -> Result<Self> {
        let template = Self::init(&spec, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (t, p) in template.params.iter().zip(&params) {
            if t.name != p.name || t.kind != p.kind {
                return Err(Error::invalid(format!("expected parameter `{}`, found `{}`", t.name, p.name)));
            }
            if t.value.shape() != p.value.shape() {
                return Err(Error::Shape {
                    op: "checkpoint",
                    expected: t.value.shape().to_vec(),
                    found: p.value.shape().to_vec(),
                });
            }
            if !p.value.is_finite() {
                return Err(Error::NonFinite { op: p.name.clone() });
            }
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn centers(&self) -> &Tensor {
        &self.params.last().expect("centers present").value
    }

    pub fn set_centers(&mut self, centers: Tensor) -> Result<()> {
        let slot = &mut self.params.last_mut().expect("centers present").value;
        if slot.shape() != centers.shape() {
            return Err(Error::Shape {
                op: "set_centers",
                expected: slot.shape().to_vec(),
                found: centers.shape().to_vec(),
            });
        }
        *slot = centers;
        Ok(())
    }

    fn layer(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.params[2 * i].value, &self.params[2 * i + 1].value)
    }

    fn embedding_depth(&self) -> usize {
        self.spec.hidden.len() + 1
    }

    /// Name → value view suitable as a graph feed.
    pub fn feed(&self) -> HashMap<&str, &Tensor> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value)).collect()
    }

    /// z = φ(x) for every row of `x`.
    pub fn embed(&self, x: &Tensor) -> Result<Tensor> {
        check_cols(x, self.spec.input_dim, "embed")?;
        let depth = self.embedding_depth();
        let mut h = x.clone();
        for i in 0..depth {
            let (w, b) = self.layer(i);
            h = kernels::add_row(&kernels::matmul(&h, w), b);
            if i + 1 < depth || self.spec.feature_relu {
                h = kernels::relu(&h);
            }
        }
        Ok(h)
    }

    /// p = softmax(f(z)).
    pub fn classify(&self, z: &Tensor) -> Result<Tensor> {
        check_cols(z, self.spec.feature_dim, "classify")?;
        let (w, b) = self.layer(self.embedding_depth());
        Ok(kernels::softmax_rows(&kernels::add_row(&kernels::matmul(z, w), b)))
    }

    /// Class probabilities straight from inputs.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        self.classify(&self.embed(x)?)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.predict_proba(x)?.argmax_rows())
    }
}

fn check_cols(x: &Tensor, cols: usize, op: &'static str) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != cols {
        return Err(Error::Shape {
            op,
            expected: vec![x.rows(), cols],
            found: x.shape().to_vec(),
        });
    }
    Ok(())
}

/// Soft assignment of features to centers:
/// `p̃_{ik} ∝ exp(1 / (1 + ‖z_i − μ_k‖²))`.
pub fn soft_assign(centers: &Tensor, z: &Tensor) -> Result<Tensor> {
    check_cols(z, centers.cols(), "soft_assign")?;
    let kernel = kernels::sq_dists(z, centers).map(|d| 1.0 / (1.0 + d));
    Ok(kernels::softmax_rows(&kernel))
}

/// Parameter leaves of a model inside a [`Graph`].
#[derive(Debug, Clone)]
pub struct ModelNodes {
    layers: Vec<(NodeId, NodeId)>,
    classifier: (NodeId, NodeId),
    pub centers: NodeId,
    feature_relu: bool,
}

impl ModelNodes {
    /// Declares one input leaf per parameter, named as in [`ModelParams`].
    pub fn declare(g: &mut Graph, params: &ModelParams) -> Result<Self> {
        let ids = params
            .params
            .iter()
            .map(|p| g.input(&p.name, p.value.shape()))
            .collect::<Result<Vec<_>>>()?;
        let depth = params.embedding_depth();
        let layers = (0..depth).map(|i| (ids[2 * i], ids[2 * i + 1])).collect();
        Ok(Self {
            layers,
            classifier: (ids[2 * depth], ids[2 * depth + 1]),
            centers: ids[2 * depth + 2],
            feature_relu: params.spec.feature_relu,
        })
    }

    pub fn embed(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let mm = g.matmul(h, w)?;
            h = g.add_bias(mm, b)?;
            if i + 1 < self.layers.len() || self.feature_relu {
                h = g.relu(h);
            }
        }
        Ok(h)
    }

    pub fn classify(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let (w, b) = self.classifier;
        let mm = g.matmul(z, w)?;
        let logits = g.add_bias(mm, b)?;
        g.softmax(logits)
    }

    pub fn soft_assign(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let d = g.sq_dist(z, self.centers)?;
        let shifted = g.add_scalar(d, 1.0);
        let kernel = g.recip(shifted);
        g.softmax(kernel)
    }
}
