//! Loss terms, their composition into the training objective, and the
//! λ / learning-rate schedules.
//!
//! Every loss exists twice: as a plain function over probability matrices
//! (used for reporting and as an oracle) and as a node inside the training
//! [`Graph`] built by [`SrdcLossGraph`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::diffcore::{kernels, Gradients, Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::model::{ModelNodes, ModelParams};

fn same_shape(a: &Tensor, b: &Tensor, op: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            op,
            expected: a.shape().to_vec(),
            found: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// `−(1/n) Σ_i Σ_k q_ik log p_ik`.
pub fn target_ce(p: &Tensor, q: &Tensor) -> Result<f64> {
    same_shape(p, q, "target_ce")?;
    let n = p.rows() as f64;
    let s: f64 = p.data().iter().zip(q.data()).map(|(&pv, &qv)| qv * kernels::guarded_ln(pv)).sum();
    Ok(-s / n)
}

/// `Σ_k ϱ_k log ϱ_k` with `ϱ_k` the mean assignment mass of cluster k.
/// Lies in `[−log K, 0]`.
pub fn balance_entropy(q: &Tensor) -> f64 {
    let n = q.rows() as f64;
    kernels::col_sums(q)
        .into_iter()
        .map(|m| {
            let rho = m / n;
            if rho > 0.0 {
                rho * rho.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// `(1/n) Σ_i Σ_k q_ik log(q_ik / p_ik)`, with `0 log 0 = 0`.
pub fn kl_divergence(q: &Tensor, p: &Tensor) -> Result<f64> {
    same_shape(q, p, "kl_divergence")?;
    let k = q.cols();
    let mut s = 0.0;
    for (idx, (&qv, &pv)) in q.data().iter().zip(p.data()).enumerate() {
        if qv <= 0.0 {
            continue;
        }
        if pv <= 0.0 {
            return Err(Error::SupportViolation {
                row: idx / k,
                column: idx % k,
            });
        }
        s += qv * (qv / pv).ln();
    }
    Ok((s / q.rows() as f64).max(0.0))
}

/// `−(1/n) Σ_j w_j log p_{j, y_j}`.
pub fn source_ce_weighted(p: &Tensor, labels: &[usize], weights: &[f64]) -> Result<f64> {
    if labels.len() != p.rows() || weights.len() != p.rows() {
        return Err(Error::Shape {
            op: "source_ce_weighted",
            expected: vec![p.rows()],
            found: vec![labels.len(), weights.len()],
        });
    }
    let mut s = 0.0;
    for (j, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        if y >= p.cols() {
            return Err(Error::LabelOutOfRange {
                label: y as i64,
                classes: p.cols(),
            });
        }
        s += w * kernels::guarded_ln(p.get(j, y));
    }
    Ok(-s / p.rows() as f64)
}

/// Target rows for the weighted source loss: row j is `w_j · onehot(y_j)`.
pub fn weighted_one_hot(labels: &[usize], weights: &[f64], classes: usize) -> Tensor {
    let mut t = Tensor::one_hot(labels, classes);
    for (j, &w) in weights.iter().enumerate() {
        t.data_mut()[j * classes + labels[j]] = w;
    }
    t
}

/// Per-term values of one objective evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub target_out: f64,
    pub target_feat: f64,
    pub source_out: f64,
    pub source_feat: f64,
    pub balance_out: f64,
    pub balance_feat: f64,
    pub lambda: f64,
    pub total: f64,
}

/// Combines the four differentiable terms with the source penalty λ:
/// `total = (target_out + target_feat) + λ (source_out + source_feat)`.
/// Balance terms are carried for reporting only.
pub fn srdc_total(components: LossBreakdown, lambda: f64) -> Result<LossBreakdown> {
    let LossBreakdown {
        target_out,
        target_feat,
        source_out,
        source_feat,
        balance_out,
        balance_feat,
        ..
    } = components;
    let all = [target_out, target_feat, source_out, source_feat, balance_out, balance_feat, lambda];
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "srdc_total".into(),
        });
    }
    Ok(LossBreakdown {
        lambda,
        total: (target_out + target_feat) + lambda * (source_out + source_feat),
        ..components
    })
}

/// Learning-rate and λ schedule constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleParams {
    pub eta0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            eta0: 0.001,
            alpha: 10.0,
            beta: 0.75,
            gamma: 10.0,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma > 0.0) {
            return Err(Error::Config(format!("invalid schedule parameters {self:?}")));
        }
        Ok(())
    }

    pub fn lambda(&self, progress: f64) -> f64 {
        lambda_schedule(progress, self.gamma)
    }

    pub fn lr(&self, progress: f64) -> f64 {
        lr_schedule(progress, self.eta0, self.alpha, self.beta)
    }
}

/// `λ_p = 2 / (1 + exp(−γ p)) − 1`.
pub fn lambda_schedule(progress: f64, gamma: f64) -> f64 {
    2.0 / (1.0 + (-gamma * progress).exp()) - 1.0
}

/// `η_p = η₀ (1 + α p)^(−β)`.
pub fn lr_schedule(progress: f64, eta0: f64, alpha: f64, beta: f64) -> f64 {
    eta0 * (1.0 + alpha * progress).powf(-beta)
}

/// Multipliers applied to the four differentiable terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermWeights {
    pub target_out: f64,
    pub target_feat: f64,
    pub source_out: f64,
    pub source_feat: f64,
}

/// Graph input names.
pub mod inputs {
    pub const X_TARGET: &str = "x_target";
    pub const X_SOURCE: &str = "x_source";
    pub const Q_OUT: &str = "q_out";
    pub const Q_FEAT: &str = "q_feat";
    pub const SOURCE_TARGETS: &str = "source_targets";
    pub const W_TARGET_OUT: &str = "w_target_out";
    pub const W_TARGET_FEAT: &str = "w_target_feat";
    pub const W_SOURCE_OUT: &str = "w_source_out";
    pub const W_SOURCE_FEAT: &str = "w_source_feat";
}

/// Values the trainer feeds per step besides the parameters.
pub struct LossBatch<'a> {
    pub x_target: &'a Tensor,
    pub x_source: &'a Tensor,
    pub q_out: &'a Tensor,
    pub q_feat: &'a Tensor,
    /// `w_j · onehot(y_j)` rows.
    pub source_targets: &'a Tensor,
    pub weights: TermWeights,
}

/// The joint objective over one target batch and one source batch.
pub struct SrdcLossGraph {
    graph: Graph,
    total: NodeId,
    target_probs: NodeId,
    target_soft: NodeId,
}

impl SrdcLossGraph {
    pub fn build(params: &ModelParams, target_batch: usize, source_batch: usize) -> Result<Self> {
        let spec = params.spec();
        let (d, k) = (spec.input_dim, spec.classes);
        let mut g = Graph::new();
        let nodes = ModelNodes::declare(&mut g, params)?;
        let xt = g.input(inputs::X_TARGET, &[target_batch, d])?;
        let xs = g.input(inputs::X_SOURCE, &[source_batch, d])?;
        let q_out = g.input(inputs::Q_OUT, &[target_batch, k])?;
        let q_feat = g.input(inputs::Q_FEAT, &[target_batch, k])?;
        let src = g.input(inputs::SOURCE_TARGETS, &[source_batch, k])?;

        let zt = nodes.embed(&mut g, xt)?;
        let pt = nodes.classify(&mut g, zt)?;
        let pt_soft = nodes.soft_assign(&mut g, zt)?;
        let zs = nodes.embed(&mut g, xs)?;
        let ps = nodes.classify(&mut g, zs)?;
        let ps_soft = nodes.soft_assign(&mut g, zs)?;

        let terms = [
            ("target_out", inputs::W_TARGET_OUT, ce_node(&mut g, pt, q_out, target_batch)?),
            ("target_feat", inputs::W_TARGET_FEAT, ce_node(&mut g, pt_soft, q_feat, target_batch)?),
            ("source_out", inputs::W_SOURCE_OUT, ce_node(&mut g, ps, src, source_batch)?),
            ("source_feat", inputs::W_SOURCE_FEAT, ce_node(&mut g, ps_soft, src, source_batch)?),
        ];
        let mut total = None;
        for (name, weight_name, node) in terms {
            g.output(name, node);
            let w = g.input(weight_name, &[1])?;
            let scaled = g.scale_by(node, w)?;
            total = Some(match total {
                None => scaled,
                Some(acc) => g.add(acc, scaled)?,
            });
        }
        let total = total.expect("four terms");
        g.output("total", total);
        g.output("target_probs", pt);
        g.output("target_soft", pt_soft);
        Ok(Self {
            graph: g,
            total,
            target_probs: pt,
            target_soft: pt_soft,
        })
    }

    /// Forward pass; returns every named output.
    pub fn evaluate(&mut self, params: &ModelParams, batch: &LossBatch<'_>) -> Result<BTreeMap<String, Tensor>> {
        let w = batch.weights;
        let scalars = [
            Tensor::vector(vec![w.target_out]),
            Tensor::vector(vec![w.target_feat]),
            Tensor::vector(vec![w.source_out]),
            Tensor::vector(vec![w.source_feat]),
        ];
        let mut feed: HashMap<&str, &Tensor> = params.feed();
        feed.insert(inputs::X_TARGET, batch.x_target);
        feed.insert(inputs::X_SOURCE, batch.x_source);
        feed.insert(inputs::Q_OUT, batch.q_out);
        feed.insert(inputs::Q_FEAT, batch.q_feat);
        feed.insert(inputs::SOURCE_TARGETS, batch.source_targets);
        feed.insert(inputs::W_TARGET_OUT, &scalars[0]);
        feed.insert(inputs::W_TARGET_FEAT, &scalars[1]);
        feed.insert(inputs::W_SOURCE_OUT, &scalars[2]);
        feed.insert(inputs::W_SOURCE_FEAT, &scalars[3]);
        self.graph.evaluate(&feed)
    }

    /// Gradient of the total objective with respect to every input leaf.
    pub fn backward(&self) -> Result<Gradients> {
        self.graph.backward(self.total, None)
    }

    /// Cached target-batch class probabilities from the last evaluate.
    pub fn target_probs(&self) -> Option<&Tensor> {
        self.graph.value(self.target_probs)
    }

    pub fn target_soft(&self) -> Option<&Tensor> {
        self.graph.value(self.target_soft)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }
}

fn ce_node(g: &mut Graph, probs: NodeId, targets: NodeId, n: usize) -> Result<NodeId> {
    let logp = g.log(probs);
    let prod = g.mul(targets, logp)?;
    let s = g.sum(prod);
    Ok(g.scale(s, -1.0 / n as f64))
}
