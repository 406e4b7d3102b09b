//! Structurally regularized deep clustering for unsupervised domain adaptation.
//!
//! A small dense network is trained to cluster unlabeled target data by
//! minimizing the KL divergence to closed-form auxiliary distributions, in both
//! the output space and the embedding space, while supervised training on
//! soft-selected source samples keeps the clusters aligned with the labels.
//!
//! ```no_run
//! use srdc::data::ShiftSpec;
//! use srdc::model::ModelSpec;
//! use srdc::trainer::{train, TrainConfig};
//!
//! let (source, target) = ShiftSpec::blobs_3x30(0).generate()?;
//! let spec = ModelSpec::new(source.dim(), 3);
//! let outcome = train(&TrainConfig::default(), &spec, &source, &target)?;
//! println!("{:?}", outcome.history.selected().and_then(|r| r.tgt_acc));
//! # Ok::<(), srdc::Error>(())
//! ```

pub mod clustering;
pub mod data;
pub mod diffcore;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod model;
pub mod objectives;
pub mod trainer;

pub use error::{Error, Result};
