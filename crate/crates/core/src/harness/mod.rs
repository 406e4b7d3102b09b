//! Experiment driver behind the `srdc` binary: config files, checkpoints and
//! the `gen-data`, `train`, `ablate`, `inductive` and `eval` commands.
//!
//! Artifacts per command:
//!
//! - `gen-data`: `source.csv`, `target.csv`.
//! - `train`: `seed-{s}/{checkpoint.json,history.csv,report.json}` and an
//!   aggregate `report.json`.
//! - `ablate`: one `train` directory per variant plus `ablation.csv` and
//!   `ablation.json`.
//! - `inductive`: `seed-{s}/{srdc,source_model}/…` and `inductive.json`.
//! - `eval`: `report.json`, `confusion.csv`, `embeddings.csv`.
//!
//! A checkpoint is a JSON object
//! `{"format": "srdc-checkpoint", "version": 1, "spec": {...}, "params": [...]}`
//! where each parameter is `{"name", "kind", "value": {"shape", "data"}}` in
//! the order of [`crate::model::ModelParams`].

mod commands;
mod config;

pub use commands::{
    ablate, eval, gen_data, inductive, load_checkpoint, mean_std, save_checkpoint, train, AblationRow, Aggregate,
    Checkpoint, InductiveReport, InductiveTrial, RunReport, CHECKPOINT_FORMAT, CHECKPOINT_VERSION, INDUCTIVE_SPLIT,
};
pub use config::{DataSource, ExperimentConfig, FilePair, ModelArch, SCHEMA_VERSION};
