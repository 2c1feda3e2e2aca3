//! Two-modality contrastive pretraining with class-aware pair sampling.
//!
//! The crate is organized around the lifecycle of one experiment:
//!
//! * [`dataset`] builds or loads paired two-modality feature sets,
//! * [`sampling`] turns a dataset into batch plans under one of six
//!   pairing strategies,
//! * [`encoder`] and [`loss`] provide the MLP towers and the symmetric
//!   InfoNCE objective,
//! * [`trainer`] runs the pretraining loop and owns checkpoints,
//! * [`eval`] scores frozen or finetuned encoders on label prediction,
//! * [`pseudolabel`] produces machine labels for label-free sampling,
//! * [`experiment`] orchestrates the full strategy sweep and aggregation.
//!
//! Everything is deterministic given the seeds in the various configs:
//! repeated runs produce bitwise identical checkpoints, reports and CSV.

pub mod classify;
pub mod dataset;
pub mod encoder;
pub mod eval;
pub mod experiment;
pub mod loss;
pub mod pseudolabel;
mod rng;
pub mod sampling;
pub mod stats;
pub mod trainer;

pub use dataset::{Dataset, Sample, SynthSpec};
pub use sampling::{BatchPlan, LabelSource, SamplerConfig, Strategy};
