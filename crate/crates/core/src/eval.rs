//! Downstream evaluation protocols.
//!
//! All three protocols score class prediction from modality A:
//!
//! * linear eval: the encoder stays frozen, an affine head is trained on
//!   its embeddings;
//! * finetune: a copy of the encoder and a fresh head train jointly;
//! * supervised baseline: a fresh encoder and head train jointly with no
//!   pretraining at all.
//!
//! `train_fraction` subsamples the training side per class (at least one
//! sample per class) for label-efficiency experiments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{fit_head, fit_joint, FitOpts, LinearHead};
use crate::dataset::{subset, Dataset, DatasetError};
use crate::encoder::{EncoderError, MlpEncoder};
use crate::rng;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid eval config: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    LinearEval,
    Finetune,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    pub epochs: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Per-class fraction of the training set actually used.
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    pub seed: u64,
}

fn default_fraction() -> f64 {
    1.0
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.epochs == 0 {
            return Err(EvalError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(EvalError::InvalidConfig(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(EvalError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(EvalError::InvalidConfig(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn hash(&self) -> u64 {
        crate::dataset::fnv1a64(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Which protocol produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportMode {
    Linear,
    Finetune,
    Supervised,
}

impl std::fmt::Display for ReportMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReportMode::Linear => write!(f, "linear"),
            ReportMode::Finetune => write!(f, "finetune"),
            ReportMode::Supervised => write!(f, "supervised"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    /// Name of the pretraining strategy this encoder came from.
    pub strategy: String,
    pub mode: ReportMode,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub per_class_count: Vec<usize>,
    pub seed: u64,
    pub config_hash: u64,
}

/// Dispatches on `cfg.mode`.
pub fn evaluate(
    encoder: &MlpEncoder,
    train: &Dataset,
    test: &Dataset,
    cfg: &EvalConfig,
    strategy: &str,
) -> Result<EvalReport, EvalError> {
    match cfg.mode {
        EvalMode::LinearEval => linear_eval(encoder, train, test, cfg, strategy),
        EvalMode::Finetune => finetune_eval(encoder, train, test, cfg, strategy),
    }
}

/// Trains an affine head on frozen-encoder embeddings and scores the test
/// set. The encoder is never touched.
pub fn linear_eval(
    encoder: &MlpEncoder,
    train: &Dataset,
    test: &Dataset,
    cfg: &EvalConfig,
    strategy: &str,
) -> Result<EvalReport, EvalError> {
    check_task(encoder, train, test, cfg)?;
    let sub = effective_train(train, cfg)?;
    let embs = embed_a(encoder, &sub)?;
    let labels: Vec<usize> = sub.samples().iter().map(|s| s.label).collect();
    let (head, _) = fit_head(&embs, &labels, sub.num_classes(), &fit_opts(cfg));
    let predictions = embed_a(encoder, test)?
        .iter()
        .map(|e| head.predict(e))
        .collect::<Vec<_>>();
    Ok(report(test, &predictions, ReportMode::Linear, cfg, strategy))
}

/// Trains a copy of the encoder jointly with a fresh head and scores the
/// test set.
pub fn finetune_eval(
    encoder: &MlpEncoder,
    train: &Dataset,
    test: &Dataset,
    cfg: &EvalConfig,
    strategy: &str,
) -> Result<EvalReport, EvalError> {
    check_task(encoder, train, test, cfg)?;
    let sub = effective_train(train, cfg)?;
    let features = raw_a(&sub);
    let labels: Vec<usize> = sub.samples().iter().map(|s| s.label).collect();
    let mut tuned = encoder.clone();
    let mut head = LinearHead::init(tuned.output_dim(), sub.num_classes(), cfg.seed);
    fit_joint(&mut tuned, &mut head, &features, &labels, &fit_opts(cfg))?;
    let predictions = raw_a(test)
        .iter()
        .map(|x| {
            let (e, _) = tuned.forward(x)?;
            Ok(head.predict(e.values()))
        })
        .collect::<Result<Vec<_>, EncoderError>>()?;
    Ok(report(test, &predictions, ReportMode::Finetune, cfg, strategy))
}

/// Trains a fresh encoder of the given widths end-to-end with a head; no
/// pretraining involved.
pub fn supervised_baseline(
    encoder_dims: &[usize],
    train: &Dataset,
    test: &Dataset,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    if encoder_dims.len() < 2 || encoder_dims[0] != train.dim_a() {
        return Err(EvalError::DimensionMismatch(format!(
            "encoder widths {encoder_dims:?} do not start at modality width {}",
            train.dim_a()
        )));
    }
    check_pair(train, test)?;
    let sub = effective_train(train, cfg)?;
    let features = raw_a(&sub);
    let labels: Vec<usize> = sub.samples().iter().map(|s| s.label).collect();
    let mut enc =
        MlpEncoder::init(encoder_dims, rng::derive(cfg.seed, &[rng::T_SUPERVISED]));
    let mut head = LinearHead::init(enc.output_dim(), sub.num_classes(), cfg.seed);
    fit_joint(&mut enc, &mut head, &features, &labels, &fit_opts(cfg))?;
    let predictions = raw_a(test)
        .iter()
        .map(|x| {
            let (e, _) = enc.forward(x)?;
            Ok(head.predict(e.values()))
        })
        .collect::<Result<Vec<_>, EncoderError>>()?;
    Ok(report(test, &predictions, ReportMode::Supervised, cfg, "supervised"))
}

/// Per-class subsample: `max(1, floor(fraction * class_size))` samples per
/// class, drawn without replacement.
pub fn stratified_fraction(
    ds: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<Dataset, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::InvalidConfig(format!(
            "train_fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let mut rng = rng::stream(seed, &[rng::T_FRACTION]);
    let mut ids = Vec::new();
    for members in ds.class_index() {
        if members.is_empty() {
            continue;
        }
        let k = ((fraction * members.len() as f64).floor() as usize).max(1);
        for idx in rand::seq::index::sample(&mut rng, members.len(), k) {
            ids.push(members[idx]);
        }
    }
    ids.sort_unstable();
    Ok(subset(ds, &ids)?)
}

fn fit_opts(cfg: &EvalConfig) -> FitOpts {
    FitOpts {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    }
}

fn check_task(
    encoder: &MlpEncoder,
    train: &Dataset,
    test: &Dataset,
    cfg: &EvalConfig,
) -> Result<(), EvalError> {
    cfg.validate()?;
    if encoder.input_dim() != train.dim_a() {
        return Err(EvalError::DimensionMismatch(format!(
            "encoder expects {}-dimensional input, modality A is {}",
            encoder.input_dim(),
            train.dim_a()
        )));
    }
    check_pair(train, test)
}

fn check_pair(train: &Dataset, test: &Dataset) -> Result<(), EvalError> {
    if train.dim_a() != test.dim_a() {
        return Err(EvalError::DimensionMismatch(format!(
            "train modality A is {}-dimensional, test is {}",
            train.dim_a(),
            test.dim_a()
        )));
    }
    if train.num_classes() != test.num_classes() {
        return Err(EvalError::DimensionMismatch(format!(
            "train has {} classes, test has {}",
            train.num_classes(),
            test.num_classes()
        )));
    }
    Ok(())
}

fn effective_train(train: &Dataset, cfg: &EvalConfig) -> Result<Dataset, EvalError> {
    if cfg.train_fraction < 1.0 {
        stratified_fraction(train, cfg.train_fraction, cfg.seed)
    } else {
        Ok(train.clone())
    }
}

fn raw_a(ds: &Dataset) -> Vec<Vec<f64>> {
    ds.samples()
        .iter()
        .map(|s| s.feat_a.iter().map(|&v| f64::from(v)).collect())
        .collect()
}

fn embed_a(encoder: &MlpEncoder, ds: &Dataset) -> Result<Vec<Vec<f64>>, EvalError> {
    raw_a(ds)
        .iter()
        .map(|x| {
            let (e, _) = encoder.forward(x)?;
            Ok(e.values().to_vec())
        })
        .collect()
}

fn report(
    test: &Dataset,
    predictions: &[usize],
    mode: ReportMode,
    cfg: &EvalConfig,
    strategy: &str,
) -> EvalReport {
    let c = test.num_classes();
    let mut correct = vec![0usize; c];
    let mut count = vec![0usize; c];
    for (s, &p) in test.samples().iter().zip(predictions) {
        count[s.label] += 1;
        if p == s.label {
            correct[s.label] += 1;
        }
    }
    let total_correct: usize = correct.iter().sum();
    let per_class: Vec<f64> = correct
        .iter()
        .zip(&count)
        .map(|(&k, &n)| if n == 0 { 0.0 } else { k as f64 / n as f64 })
        .collect();
    EvalReport {
        strategy: strategy.to_string(),
        mode,
        accuracy: total_correct as f64 / test.len() as f64,
        per_class_accuracy: per_class,
        per_class_count: count,
        seed: cfg.seed,
        config_hash: cfg.hash(),
    }
}
