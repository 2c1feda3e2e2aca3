//! Pseudo-label production for pretraining without ground truth.
//!
//! Two routes produce the `pseudo_label` field consumed by the pl-soft
//! strategy:
//!
//! * `corrupt_labels` keeps each true label with probability `keep` and
//!   otherwise draws uniformly from the other classes. This gives exact
//!   control over label quality: `keep = 1` is perfect, `keep = 1/C`
//!   makes the pseudo-label statistically independent of the truth.
//! * `train_proxy` fits a small classifier on modality B of a labeled
//!   corpus and stamps its predictions onto a target corpus.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{fit_joint, FitOpts, LinearHead};
use crate::dataset::{Dataset, DatasetError};
use crate::encoder::{EncoderError, MlpEncoder};
use crate::rng;

#[derive(Debug, Error)]
pub enum PseudoLabelError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Stamps noisy copies of the true labels onto a dataset.
pub fn corrupt_labels(ds: &Dataset, keep: f64, seed: u64) -> Result<Dataset, PseudoLabelError> {
    if !(0.0..=1.0).contains(&keep) {
        return Err(PseudoLabelError::InvalidParameter(format!(
            "keep probability must lie in [0, 1], got {keep}"
        )));
    }
    let c = ds.num_classes();
    if c < 2 {
        return Err(PseudoLabelError::InvalidParameter(
            "corruption needs at least two classes to flip between".into(),
        ));
    }
    let mut r = rng::stream(seed, &[rng::T_CORRUPT]);
    let labels: Vec<usize> = ds
        .samples()
        .iter()
        .map(|s| {
            if r.gen::<f64>() < keep {
                s.label
            } else {
                // Uniform over the c - 1 classes that are not the label.
                let draw = r.gen_range(0..c - 1);
                if draw >= s.label {
                    draw + 1
                } else {
                    draw
                }
            }
        })
        .collect();
    Ok(ds.with_pseudo_labels(&labels)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProxyConfig {
    /// Hidden widths of the proxy encoder.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    pub epochs: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            hidden: vec![64],
            embed_dim: 32,
            epochs: 30,
            learning_rate: 0.005,
            batch_size: 32,
            seed: 0,
        }
    }
}

pub struct ProxyOutcome {
    /// Target corpus with `pseudo_label` filled in on every sample.
    pub dataset: Dataset,
    /// Fraction of target samples whose pseudo-label matches the true
    /// label. Reporting only; nothing downstream reads the true labels.
    pub agreement: f64,
}

/// Trains a classifier on modality B of `labeled` and pseudo-labels
/// `target` with its predictions.
pub fn train_proxy(
    labeled: &Dataset,
    target: &Dataset,
    cfg: &ProxyConfig,
) -> Result<ProxyOutcome, PseudoLabelError> {
    if labeled.dim_b() != target.dim_b() {
        return Err(PseudoLabelError::InvalidParameter(format!(
            "labeled modality B is {}-dimensional, target is {}",
            labeled.dim_b(),
            target.dim_b()
        )));
    }
    if labeled.num_classes() > target.num_classes() {
        return Err(PseudoLabelError::InvalidParameter(format!(
            "proxy predicts {} classes but target only admits {}",
            labeled.num_classes(),
            target.num_classes()
        )));
    }
    if cfg.embed_dim == 0 || cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(PseudoLabelError::InvalidParameter(
            "embed_dim, epochs and batch_size must all be positive".into(),
        ));
    }
    let mut dims = vec![labeled.dim_b()];
    dims.extend_from_slice(&cfg.hidden);
    dims.push(cfg.embed_dim);
    let mut enc = MlpEncoder::init(&dims, rng::derive(cfg.seed, &[rng::T_PROXY]));
    let mut head = LinearHead::init(cfg.embed_dim, labeled.num_classes(), cfg.seed);
    let features: Vec<Vec<f64>> = labeled
        .samples()
        .iter()
        .map(|s| s.feat_b.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let labels: Vec<usize> = labeled.samples().iter().map(|s| s.label).collect();
    let opts = FitOpts {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    fit_joint(&mut enc, &mut head, &features, &labels, &opts)?;

    let mut predicted = Vec::with_capacity(target.len());
    let mut hits = 0usize;
    for s in target.samples() {
        let x: Vec<f64> = s.feat_b.iter().map(|&v| f64::from(v)).collect();
        let (e, _) = enc.forward(&x)?;
        let p = head.predict(e.values());
        if p == s.label {
            hits += 1;
        }
        predicted.push(p);
    }
    Ok(ProxyOutcome {
        dataset: target.with_pseudo_labels(&predicted)?,
        agreement: hits as f64 / target.len() as f64,
    })
}
