use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig};
use crate::data::{self, Dataset, Domain};
use crate::error::{Error, Result};
use crate::evaluation::{self, EvalReport};
use crate::model::{ModelParams, ModelSpec, Param};
use crate::trainer::{self, AblationFlags, ModelSelection, RunHistory, TrainConfig, TrainOutcome, Variant};

pub const CHECKPOINT_FORMAT: &str = "srdc-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Fraction of the target kept for training under the inductive protocol.
pub const INDUCTIVE_SPLIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub params: Vec<Param>,
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        spec: params.spec().clone(),
        params: params.params().to_vec(),
    };
    write_json(path, &ck)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            path: path.into(),
            message: format!("unsupported checkpoint {} v{}", ck.format, ck.version),
        });
    }
    ModelParams::from_params(ck.spec, ck.params)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Writes `source.csv` and `target.csv` for one trial seed.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<(PathBuf, PathBuf)> {
    if !matches!(cfg.data, DataSource::Synthetic(_)) {
        return Err(Error::Config("gen-data needs a synthetic data source".into()));
    }
    let (source, target) = cfg.datasets(seed)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (sp, tp) = (out.join("source.csv"), out.join("target.csv"));
    data::save_csv(&source, &sp)?;
    data::save_csv(&target, &tp)?;
    Ok((sp, tp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub ablation: AblationFlags,
    pub epochs: usize,
    pub selected_epoch: usize,
    /// Target accuracy of the selected parameters; absent for an unlabeled target.
    pub target_accuracy: Option<f64>,
    pub final_target_accuracy: Option<f64>,
    pub source_accuracy: f64,
    pub target: Option<EvalReport>,
    /// Every epoch passed the probability, KL, balance and weight checks.
    pub validity_holds: bool,
    /// Worst `|row sum − 1|` over every probability matrix of the run.
    pub max_row_sum_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub variant: String,
    pub ablation: AblationFlags,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<RunReport>,
}

/// Row-sum tolerance used for the per-epoch validity flag.
const ROW_TOL: f64 = 1e-9;

fn base_params(cfg: &ExperimentConfig, spec: &ModelSpec, train_cfg: &mut TrainConfig) -> Result<ModelParams> {
    match &cfg.init_checkpoint {
        Some(path) => {
            let params = load_checkpoint(path)?;
            if params.spec() != spec {
                return Err(Error::Config(format!(
                    "checkpoint {} does not match the model layout",
                    path.display()
                )));
            }
            train_cfg.pretrained_embedding = true;
            Ok(params)
        }
        None => ModelParams::init(spec, train_cfg.seed),
    }
}

fn run_one(cfg: &ExperimentConfig, train_cfg: &TrainConfig, source: &Dataset, target: &Dataset, seed: u64) -> Result<TrainOutcome> {
    let spec = cfg.model_spec(source)?;
    let mut tc = train_cfg.clone();
    tc.seed = seed;
    let params = base_params(cfg, &spec, &mut tc)?;
    trainer::train_from(&tc, params, source, target)
}

fn write_run(dir: &Path, outcome: &TrainOutcome) -> Result<()> {
    save_checkpoint(&outcome.params, &dir.join("checkpoint.json"))?;
    write_file(&dir.join("history.csv"), &outcome.history.to_csv())
}

fn validity_holds(h: &RunHistory) -> bool {
    h.epochs.iter().all(|r| r.validity.holds(ROW_TOL))
}

fn run_report(seed: u64, flags: AblationFlags, outcome: &TrainOutcome, target: &Dataset) -> Result<RunReport> {
    let h = &outcome.history;
    let eval = if target.labels().is_some_and(|l| l.iter().any(Option::is_some)) {
        Some(evaluation::evaluate(&outcome.params, target)?)
    } else {
        None
    };
    Ok(RunReport {
        seed,
        ablation: flags,
        epochs: h.len(),
        selected_epoch: h.selected_epoch,
        target_accuracy: eval.as_ref().map(|e| e.accuracy),
        final_target_accuracy: h.final_record().and_then(|r| r.tgt_acc),
        source_accuracy: h.selected().map_or(f64::NAN, |r| r.src_acc),
        target: eval,
        validity_holds: validity_holds(h),
        max_row_sum_error: h.epochs.iter().map(|r| r.validity.max_row_sum_error).fold(0.0, f64::max),
    })
}

/// Trains once per configured seed under `out/seed-{s}` and writes the
/// aggregate `out/report.json`. `variant` overrides the config's ablation flags.
pub fn train(cfg: &ExperimentConfig, out: &Path, variant: Option<Variant>) -> Result<Aggregate> {
    let mut train_cfg = cfg.train.clone();
    if let Some(v) = variant {
        train_cfg.ablation = v.flags();
    }
    let name = Variant::ALL
        .into_iter()
        .find(|v| v.flags() == train_cfg.ablation)
        .map_or_else(|| "custom".to_string(), |v| v.to_string());
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let (source, target) = cfg.datasets(seed)?;
        info!("{name}: seed {seed}");
        let outcome = run_one(cfg, &train_cfg, &source, &target, seed)?;
        let dir = out.join(format!("seed-{seed}"));
        write_run(&dir, &outcome)?;
        let report = run_report(seed, train_cfg.ablation, &outcome, &target)?;
        write_json(&dir.join("report.json"), &report)?;
        runs.push(report);
    }
    let accuracies: Vec<f64> = runs.iter().filter_map(|r| r.target_accuracy).collect();
    let (mean, std) = mean_std(&accuracies);
    let agg = Aggregate {
        variant: name,
        ablation: train_cfg.ablation,
        seeds: cfg.seeds.clone(),
        accuracies,
        mean,
        std,
        runs,
    };
    write_json(&out.join("report.json"), &agg)?;
    Ok(agg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub mean: f64,
    pub std: f64,
    pub accuracies: Vec<f64>,
    pub runs: Vec<RunReport>,
}

/// Runs every variant over the seed set, from the source model up to full SRDC.
pub fn ablate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let agg = train(cfg, &out.join(v.name()), Some(v))?;
        rows.push(AblationRow {
            variant: v,
            mean: agg.mean,
            std: agg.std,
            accuracies: agg.accuracies,
            runs: agg.runs,
        });
    }
    let mut csv = String::from("variant,mean,std");
    for s in &cfg.seeds {
        let _ = write!(csv, ",seed_{s}");
    }
    csv.push('\n');
    for r in &rows {
        let _ = write!(csv, "{},{:?},{:?}", r.variant, r.mean, r.std);
        for a in &r.accuracies {
            let _ = write!(csv, ",{a:?}");
        }
        csv.push('\n');
    }
    write_file(&out.join("ablation.csv"), &csv)?;
    write_json(&out.join("ablation.json"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductiveTrial {
    pub seed: u64,
    /// Transductive accuracy on the target half used for training.
    pub srdc_train_acc: f64,
    /// Inductive accuracy on the held-out target half.
    pub srdc_test_acc: f64,
    pub source_only_train_acc: f64,
    pub source_only_test_acc: f64,
    /// Both runs passed the per-epoch validity checks.
    pub validity_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InductiveReport {
    pub trials: Vec<InductiveTrial>,
    pub srdc_test_acc: f64,
    pub srdc_test_std: f64,
    pub source_only_test_acc: f64,
    pub source_only_test_std: f64,
    pub srdc_train_acc: f64,
    pub source_only_train_acc: f64,
}

/// Splits each trial's target in half, trains SRDC and the source model on
/// the source plus the first half, and scores both halves. The final epoch is
/// kept, so the held-out half never influences training or selection.
pub fn inductive(cfg: &ExperimentConfig, out: &Path) -> Result<InductiveReport> {
    let mut train_cfg = cfg.train.clone();
    train_cfg.model_selection = ModelSelection::FinalEpoch;
    let source_cfg = train_cfg.clone().with_variant(Variant::SourceModel);
    let mut trials = Vec::new();
    for &seed in &cfg.seeds {
        let (source, target) = cfg.datasets(seed)?;
        let (t_train, t_test) = data::split(&target, INDUCTIVE_SPLIT, seed)?;
        let mut acc = [[0.0; 2]; 2];
        let mut valid = true;
        for (i, (tc, name)) in [(&train_cfg, "srdc"), (&source_cfg, "source_model")].into_iter().enumerate() {
            info!("inductive {name}: seed {seed}");
            let outcome = run_one(cfg, tc, &source, &t_train, seed)?;
            write_run(&out.join(format!("seed-{seed}")).join(name), &outcome)?;
            valid &= validity_holds(&outcome.history);
            acc[i][0] = evaluation::evaluate(&outcome.params, &t_train)?.accuracy;
            acc[i][1] = evaluation::evaluate(&outcome.params, &t_test)?.accuracy;
        }
        trials.push(InductiveTrial {
            seed,
            srdc_train_acc: acc[0][0],
            srdc_test_acc: acc[0][1],
            source_only_train_acc: acc[1][0],
            source_only_test_acc: acc[1][1],
            validity_holds: valid,
        });
    }
    let col = |f: fn(&InductiveTrial) -> f64| mean_std(&trials.iter().map(f).collect::<Vec<_>>());
    let (srdc_test_acc, srdc_test_std) = col(|t| t.srdc_test_acc);
    let (source_only_test_acc, source_only_test_std) = col(|t| t.source_only_test_acc);
    let report = InductiveReport {
        srdc_train_acc: col(|t| t.srdc_train_acc).0,
        source_only_train_acc: col(|t| t.source_only_train_acc).0,
        trials,
        srdc_test_acc,
        srdc_test_std,
        source_only_test_acc,
        source_only_test_std,
    };
    write_json(&out.join("inductive.json"), &report)?;
    Ok(report)
}

/// Scores a checkpoint on a labeled CSV and dumps a 2-D PCA of the embeddings.
/// Rows of the optional `source` file are appended to the embedding dump.
pub fn eval(checkpoint: &Path, dataset: &Path, source: Option<&Path>, out: &Path) -> Result<EvalReport> {
    let params = load_checkpoint(checkpoint)?;
    let k = params.spec().classes;
    let target = data::load_csv(dataset, Domain::Target, Some(k))?;
    let mut parts = vec![target];
    if let Some(p) = source {
        parts.push(data::load_csv(p, Domain::Source, Some(k))?);
    }
    for d in &parts {
        if d.dim() != params.spec().input_dim {
            return Err(Error::Shape {
                op: "eval",
                expected: vec![d.len(), params.spec().input_dim],
                found: vec![d.len(), d.dim()],
            });
        }
    }
    let report = evaluation::evaluate(&params, &parts[0])?;
    write_json(&out.join("report.json"), &report)?;

    let mut csv = String::from("true");
    for j in 1..=k {
        let _ = write!(csv, ",pred_{j}");
    }
    csv.push('\n');
    for (i, row) in report.confusion.iter().enumerate() {
        let _ = write!(csv, "{}", i + 1);
        for c in row {
            let _ = write!(csv, ",{c}");
        }
        csv.push('\n');
    }
    write_file(&out.join("confusion.csv"), &csv)?;

    let d = params.spec().input_dim;
    let mut all = Vec::new();
    let mut meta = Vec::new();
    for ds in &parts {
        all.extend_from_slice(ds.features().data());
        let preds = params.predict(ds.features())?;
        let labels = ds.labels();
        for (i, p) in preds.into_iter().enumerate() {
            let label = labels.and_then(|l| l[i]).map_or(-1, |l| l as i64 + 1);
            meta.push((label, p + 1, ds.domain));
        }
    }
    let x = crate::diffcore::Tensor::matrix(meta.len(), d, all)?;
    let z = params.embed(&x)?;
    let pcs = evaluation::pca_project(&z, 2)?;
    let mut csv = String::from("pc1,pc2,label,prediction,domain\n");
    for (i, (label, pred, domain)) in meta.iter().enumerate() {
        let _ = writeln!(csv, "{:?},{:?},{label},{pred},{domain}", pcs.get(i, 0), pcs.get(i, 1));
    }
    write_file(&out.join("embeddings.csv"), &csv)?;
    Ok(report)
}
