//! The alternating SRDC optimization.
//!
//! Each epoch runs mini-batch SGD on the joint objective with the auxiliary
//! distributions recomputed per target batch (from the second epoch on), then
//! refreshes the target K-means centers, the source sample weights and the
//! learnable cluster centers from full-data features.

mod history;
mod sgd;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use history::{EpochRecord, RunHistory, Validity, HISTORY_HEADER};
pub use sgd::{sgd_step, Sgd, NEW_LAYER_LR_SCALE};

use crate::clustering::{self, AuxiliaryState};
use crate::data::Dataset;
use crate::diffcore::{kernels, Tensor};
use crate::error::{Error, Result};
use crate::model::{soft_assign, ModelParams, ModelSpec};
use crate::objectives::{self, LossBatch, LossBreakdown, ScheduleParams, SrdcLossGraph, TermWeights};

/// Which column masses feed the closed-form auxiliary update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxNormalization {
    /// Masses over the current target mini-batch.
    #[default]
    Batch,
    /// Masses over the full target set, refreshed at the start of each epoch.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSelection {
    #[default]
    BestTargetAcc,
    FinalEpoch,
}

/// Components switched off for ablation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    /// λ forced to 0: target clustering only.
    pub no_source_reg: bool,
    /// Drop both feature-space clustering terms.
    pub no_feature_discrim: bool,
    /// Source weights stay at 1.
    pub no_soft_selection: bool,
    /// Supervised source cross-entropy only; no target terms.
    pub source_only: bool,
}

/// The named training variants compared in an ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SourceModel,
    NoSourceReg,
    NoFeatureDiscrim,
    NoSoftSelection,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::SourceModel,
        Variant::NoSourceReg,
        Variant::NoFeatureDiscrim,
        Variant::NoSoftSelection,
        Variant::Full,
    ];

    pub fn flags(self) -> AblationFlags {
        let mut f = AblationFlags::default();
        match self {
            Variant::SourceModel => f.source_only = true,
            Variant::NoSourceReg => f.no_source_reg = true,
            Variant::NoFeatureDiscrim => f.no_feature_discrim = true,
            Variant::NoSoftSelection => f.no_soft_selection = true,
            Variant::Full => {}
        }
        f
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::SourceModel => "source_model",
            Variant::NoSourceReg => "no_source_reg",
            Variant::NoFeatureDiscrim => "no_feature_discrim",
            Variant::NoSoftSelection => "no_soft_selection",
            Variant::Full => "full",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: ScheduleParams,
    pub seed: u64,
    pub ablation: AblationFlags,
    pub aux_normalization: AuxNormalization,
    pub model_selection: ModelSelection,
    /// φ comes from a checkpoint: classifier and centers train at 10× the rate.
    pub pretrained_embedding: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            momentum: 0.9,
            weight_decay: 1e-4,
            schedule: ScheduleParams::default(),
            seed: 0,
            ablation: AblationFlags::default(),
            aux_normalization: AuxNormalization::Batch,
            model_selection: ModelSelection::BestTargetAcc,
            pretrained_embedding: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..).contains(&self.weight_decay) {
            return Err(Error::Config("momentum must be in [0, 1) and weight_decay >= 0".into()));
        }
        self.schedule.validate()
    }

    pub fn with_variant(mut self, v: Variant) -> Self {
        self.ablation = v.flags();
        self
    }

    /// Effective λ at training progress `p`.
    pub fn lambda(&self, progress: f64) -> f64 {
        if self.ablation.source_only {
            1.0
        } else if self.ablation.no_source_reg {
            0.0
        } else {
            self.schedule.lambda(progress)
        }
    }

    fn term_weights(&self, lambda: f64) -> TermWeights {
        let feat = if self.ablation.no_feature_discrim { 0.0 } else { 1.0 };
        if self.ablation.source_only {
            TermWeights {
                target_out: 0.0,
                target_feat: 0.0,
                source_out: 1.0,
                source_feat: 0.0,
            }
        } else {
            TermWeights {
                target_out: 1.0,
                target_feat: feat,
                source_out: lambda,
                source_feat: feat * lambda,
            }
        }
    }
}

/// Index (1-based) of the epoch to keep. Ties on accuracy go to the earliest
/// epoch; without target accuracies the final epoch is used.
pub fn select_model(history: &[EpochRecord], mode: ModelSelection) -> Option<usize> {
    if history.is_empty() {
        return None;
    }
    match mode {
        ModelSelection::FinalEpoch => Some(history.len()),
        ModelSelection::BestTargetAcc => {
            let mut best: Option<(usize, f64)> = None;
            for (i, r) in history.iter().enumerate() {
                let Some(acc) = r.tgt_acc else { return Some(history.len()) };
                if best.is_none_or(|(_, b)| acc > b) {
                    best = Some((i + 1, acc));
                }
            }
            best.map(|(i, _)| i)
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the selected epoch.
    pub params: ModelParams,
    pub history: RunHistory,
    pub aux: AuxiliaryState,
}

/// Trains from freshly initialized parameters seeded by `config.seed`.
pub fn train(config: &TrainConfig, spec: &ModelSpec, source: &Dataset, target: &Dataset) -> Result<TrainOutcome> {
    let params = ModelParams::init(spec, config.seed)?;
    train_from(config, params, source, target)
}

/// Trains starting from `params`. The target's labels, if any, are read only
/// through [`crate::data::EvalLabels`] for per-epoch accuracy.
pub fn train_from(config: &TrainConfig, params: ModelParams, source: &Dataset, target: &Dataset) -> Result<TrainOutcome> {
    config.validate()?;
    let spec = params.spec().clone();
    spec.validate()?;
    for ds in [source, target] {
        if ds.dim() != spec.input_dim {
            return Err(Error::Shape {
                op: "train",
                expected: vec![ds.len(), spec.input_dim],
                found: vec![ds.len(), ds.dim()],
            });
        }
    }
    let ys = source.full_labels()?;
    source.check_labels(spec.classes)?;
    let target_eval = target.eval_labels();
    let unlabeled = target.without_labels();
    Trainer::new(config, params, source.features(), ys, unlabeled.features())?.run(target_eval.as_ref())
}

fn update_aux_guarded(p: &Tensor, mass: Option<&[f64]>) -> Result<Tensor> {
    let attempt = match mass {
        Some(m) => clustering::update_auxiliary_with_mass(p, m),
        None => clustering::update_auxiliary(p),
    };
    match attempt {
        Err(Error::DegenerateCluster { column }) => {
            warn!("cluster {column} received no probability mass; flooring probabilities");
            let floored = p.map(|v| v.max(kernels::LOG_FLOOR));
            let mass = mass.map(|m| m.iter().map(|v| v.max(kernels::LOG_FLOOR)).collect::<Vec<_>>());
            match mass {
                Some(m) => clustering::update_auxiliary_with_mass(&floored, &m),
                None => clustering::update_auxiliary(&floored),
            }
        }
        other => other,
    }
}

struct Trainer<'a> {
    config: &'a TrainConfig,
    params: ModelParams,
    xs: &'a Tensor,
    ys: Vec<usize>,
    xt: &'a Tensor,
    aux: AuxiliaryState,
    optimizer: Sgd,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    fn new(config: &'a TrainConfig, mut params: ModelParams, xs: &'a Tensor, ys: Vec<usize>, xt: &'a Tensor) -> Result<Self> {
        let k = params.spec().classes;
        let zs = params.embed(xs)?;
        let zt = params.embed(xt)?;
        let centroids = clustering::class_centroids(&zs, &ys, k)?;
        let km = clustering::target_centers(&zt, &centroids)?;
        params.set_centers(km.centers.clone())?;
        let q = Tensor::one_hot(&km.assignments, k);
        let aux = AuxiliaryState {
            q_out: q.clone(),
            q_feat: q,
            target_centers: km.centers,
            source_weights: vec![1.0; xs.rows()],
        };
        let optimizer = Sgd::new(&params, config.momentum, config.weight_decay, config.pretrained_embedding);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Ok(Self {
            config,
            params,
            xs,
            ys,
            xt,
            aux,
            optimizer,
            rng,
        })
    }

    fn run(mut self, target_eval: Option<&crate::data::EvalLabels>) -> Result<TrainOutcome> {
        let cfg = self.config;
        let b = cfg.batch_size;
        let (ns, nt) = (self.xs.rows(), self.xt.rows());
        let iters = ns.max(nt).div_ceil(b);
        let mut graph = SrdcLossGraph::build(&self.params, b, b)?;
        let mut history = RunHistory::default();
        let mut best: Option<(f64, ModelParams, usize)> = None;
        let mut order_s: Vec<usize> = (0..ns).collect();
        let mut order_t: Vec<usize> = (0..nt).collect();

        for epoch in 0..cfg.epochs {
            let started = Instant::now();
            let progress = epoch as f64 / cfg.epochs as f64;
            let lambda = cfg.lambda(progress);
            let lr = cfg.schedule.lr(progress);
            let weights = cfg.term_weights(lambda);
            let mut validity = Validity::default();

            let full_mass = if epoch > 0 && cfg.aux_normalization == AuxNormalization::Full {
                let zt = self.params.embed(self.xt)?;
                let p = self.params.classify(&zt)?;
                let pf = soft_assign(self.params.centers(), &zt)?;
                Some((kernels::col_sums(&p), kernels::col_sums(&pf)))
            } else {
                None
            };

            order_s.shuffle(&mut self.rng);
            order_t.shuffle(&mut self.rng);
            let mut sums = LossBreakdown::default();
            for it in 0..iters {
                let idx_t: Vec<usize> = (0..b).map(|j| order_t[(it * b + j) % nt]).collect();
                let idx_s: Vec<usize> = (0..b).map(|j| order_s[(it * b + j) % ns]).collect();
                let x_t = self.xt.select_rows(&idx_t);
                let x_s = self.xs.select_rows(&idx_s);

                let (q_out, q_feat) = if epoch == 0 {
                    (self.aux.q_out.select_rows(&idx_t), self.aux.q_feat.select_rows(&idx_t))
                } else {
                    let z = self.params.embed(&x_t)?;
                    let p = self.params.classify(&z)?;
                    let pf = soft_assign(self.params.centers(), &z)?;
                    validity.rows(&p);
                    validity.rows(&pf);
                    let masses = full_mass.as_ref();
                    let q_out = update_aux_guarded(&p, masses.map(|m| m.0.as_slice()))?;
                    let q_feat = update_aux_guarded(&pf, masses.map(|m| m.1.as_slice()))?;
                    (q_out, q_feat)
                };
                validity.rows(&q_out);
                validity.rows(&q_feat);

                let ys_b: Vec<usize> = idx_s.iter().map(|&j| self.ys[j]).collect();
                let w_b: Vec<f64> = idx_s.iter().map(|&j| self.aux.source_weights[j]).collect();
                let src_targets = objectives::weighted_one_hot(&ys_b, &w_b, self.params.spec().classes);
                let batch = LossBatch {
                    x_target: &x_t,
                    x_source: &x_s,
                    q_out: &q_out,
                    q_feat: &q_feat,
                    source_targets: &src_targets,
                    weights,
                };
                let out = graph.evaluate(&self.params, &batch)?;
                let grads = graph.backward()?;
                self.optimizer.step(&mut self.params, &grads, lr)?;

                let mask = |w: f64, v: f64| if w == 0.0 { 0.0 } else { v };
                sums.target_out += mask(weights.target_out, out["target_out"].item());
                sums.target_feat += mask(weights.target_feat, out["target_feat"].item());
                sums.source_out += mask(weights.source_out.max(cfg.ablation.no_source_reg as u8 as f64), out["source_out"].item());
                sums.source_feat += mask(
                    if cfg.ablation.no_feature_discrim || cfg.ablation.source_only { 0.0 } else { 1.0 },
                    out["source_feat"].item(),
                );
            }

            let record = self.end_epoch(epoch, iters, sums, lambda, lr, validity, target_eval, started)?;
            debug!(
                "epoch {} total {:.5} src_acc {:.4} tgt_acc {:?}",
                record.epoch, record.losses.total, record.src_acc, record.tgt_acc
            );
            // selection snapshot is taken before the centers are re-initialized
            let snapshot = self.params.clone();
            self.refresh_clusters()?;

            match (cfg.model_selection, record.tgt_acc) {
                (ModelSelection::BestTargetAcc, Some(acc)) => {
                    if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                        best = Some((acc, snapshot, record.epoch));
                    }
                }
                _ => best = Some((f64::NAN, snapshot, record.epoch)),
            }
            history.epochs.push(record);
        }

        let (_, params, selected) = best.expect("at least one epoch");
        history.selected_epoch = selected;
        debug_assert_eq!(select_model(&history.epochs, cfg.model_selection), Some(selected));
        Ok(TrainOutcome {
            params,
            history,
            aux: self.aux,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn end_epoch(
        &mut self,
        epoch: usize,
        iters: usize,
        sums: LossBreakdown,
        lambda: f64,
        lr: f64,
        mut validity: Validity,
        target_eval: Option<&crate::data::EvalLabels>,
        started: Instant,
    ) -> Result<EpochRecord> {
        let k = self.params.spec().classes;
        let zt = self.params.embed(self.xt)?;
        let p = self.params.classify(&zt)?;
        let pf = soft_assign(self.params.centers(), &zt)?;
        let q_out = update_aux_guarded(&p, None)?;
        let q_feat = update_aux_guarded(&pf, None)?;
        for m in [&p, &pf, &q_out, &q_feat] {
            validity.rows(m);
        }
        let kl_out = objectives::kl_divergence(&q_out, &p)?;
        let kl_feat = objectives::kl_divergence(&q_feat, &pf)?;
        validity.kl(kl_out);
        validity.kl(kl_feat);
        let balance_out = objectives::balance_entropy(&q_out);
        let balance_feat = objectives::balance_entropy(&q_feat);
        validity.balance(balance_out, k);
        validity.balance(balance_feat, k);
        validity.weights(&self.aux.source_weights);
        self.aux.q_out = q_out;
        self.aux.q_feat = q_feat;

        let n = iters as f64;
        let components = LossBreakdown {
            target_out: sums.target_out / n,
            target_feat: sums.target_feat / n,
            source_out: sums.source_out / n,
            source_feat: sums.source_feat / n,
            balance_out,
            balance_feat,
            ..Default::default()
        };
        let losses = objectives::srdc_total(components, lambda)?;
        if !(kl_out + balance_out).is_finite() {
            return Err(Error::NonFinite {
                op: format!("clustering objective at epoch {}", epoch + 1),
            });
        }

        let src_acc = accuracy(&self.params.predict(self.xs)?, &self.ys);
        let tgt_acc = target_eval.map(|l| l.accuracy(&p.argmax_rows()));
        Ok(EpochRecord {
            epoch: epoch + 1,
            losses,
            kl_out,
            kl_feat,
            lr,
            src_acc,
            tgt_acc,
            validity,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Target K-means centers, source weights and center re-initialization.
    fn refresh_clusters(&mut self) -> Result<()> {
        let k = self.params.spec().classes;
        let zs = self.params.embed(self.xs)?;
        let zt = self.params.embed(self.xt)?;
        let centroids = clustering::class_centroids(&zs, &self.ys, k)?;
        let km = clustering::target_centers(&zt, &centroids)?;
        let flags = self.config.ablation;
        if !(flags.no_soft_selection || flags.source_only) {
            self.aux.source_weights = clustering::source_weights(&zs, &self.ys, &km.centers)?;
        }
        self.aux.target_centers = km.centers;
        let mu = clustering::reinit_centers(&zs, &self.ys, &zt, &self.aux.q_feat)?;
        self.params.set_centers(mu)?;
        self.optimizer.reset_centers(&self.params);
        Ok(())
    }
}

fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    let hit = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    hit as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(acc: Option<f64>) -> EpochRecord {
        EpochRecord {
            epoch: 0,
            losses: LossBreakdown::default(),
            kl_out: 0.0,
            kl_feat: 0.0,
            lr: 0.0,
            src_acc: 0.0,
            tgt_acc: acc,
            validity: Validity::default(),
            wall_ms: 0.0,
        }
    }

    #[test]
    fn selection_rules() {
        let h: Vec<_> = [0.5, 0.9, 0.9].iter().map(|&a| rec(Some(a))).collect();
        assert_eq!(select_model(&h, ModelSelection::BestTargetAcc), Some(2));
        assert_eq!(select_model(&h, ModelSelection::FinalEpoch), Some(3));
        let mono: Vec<_> = [0.1, 0.2, 0.3].iter().map(|&a| rec(Some(a))).collect();
        assert_eq!(select_model(&mono, ModelSelection::BestTargetAcc), Some(3));
        assert_eq!(select_model(&[rec(None), rec(None)], ModelSelection::BestTargetAcc), Some(2));
        assert_eq!(select_model(&[], ModelSelection::FinalEpoch), None);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn lambda_policy_per_variant() {
        let c = TrainConfig::default();
        assert_eq!(c.clone().with_variant(Variant::NoSourceReg).lambda(0.7), 0.0);
        assert_eq!(c.clone().with_variant(Variant::SourceModel).lambda(0.0), 1.0);
        assert_eq!(c.lambda(0.0), 0.0);
        let w = TrainConfig::default().with_variant(Variant::NoFeatureDiscrim).term_weights(0.5);
        assert_eq!((w.target_feat, w.source_feat, w.source_out), (0.0, 0.0, 0.5));
    }
}
