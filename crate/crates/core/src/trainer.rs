//! Contrastive pretraining: the two-tower loop, the optimizer, and
//! checkpoints.
//!
//! Training is bitwise reproducible: batch plans come from counter-derived
//! streams, accumulation orders are fixed, and checkpoints store the full
//! f64 state (parameters plus Adam moments), so a run interrupted at any
//! epoch boundary and resumed produces exactly the final state of an
//! uninterrupted run.
//!
//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! magic "AVCK" | version u32 | config_hash u64 | t u64 | next_epoch u64
//! | blob_len u64 | trailer_len u64 | parameter/moment blobs (f64 LE)
//! | JSON trailer (dims, history) | fnv1a64 of everything before it (u64)
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{fnv1a64, Dataset};
use crate::encoder::{EncoderError, MlpEncoder};
use crate::loss::{infonce_grad, infonce_loss, LossError};
use crate::rng;
use crate::sampling::{plan_epoch, SamplerConfig, SamplingError};

const MAGIC: &[u8; 4] = b"AVCK";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 8 + 8 + 8;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("sampling failed at epoch {epoch}, step {step}: {source}")]
    Sampling {
        epoch: u64,
        step: u64,
        source: SamplingError,
    },
    #[error("encoder failed at epoch {epoch}, step {step}: {source}")]
    Encoder {
        epoch: u64,
        step: u64,
        source: EncoderError,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("checkpoint was written under config hash {found:#018x}, expected {expected:#018x}")]
    ConfigHashMismatch { expected: u64, found: u64 },
    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    ChecksumMismatch,
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Adam moment decay rates and stabilizer.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// One Adam update with decoupled weight decay.
///
/// Decay shrinks parameters by `lr * weight_decay` before the
/// bias-corrected moment update is applied, so it never leaks into the
/// moment estimates. `t` is the 1-based step count including this step.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    learning_rate: f64,
    weight_decay: f64,
    adam: &AdamParams,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), m.len());
    assert_eq!(params.len(), v.len());
    assert!(t >= 1, "adam step count is 1-based");
    let bc1 = 1.0 - adam.beta1.powi(t as i32);
    let bc2 = 1.0 - adam.beta2.powi(t as i32);
    for i in 0..params.len() {
        if weight_decay != 0.0 {
            params[i] -= learning_rate * weight_decay * params[i];
        }
        m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * grads[i];
        v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * grads[i] * grads[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + adam.epsilon);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    /// Full width list for each tower, input first, embedding last. The
    /// two towers must end in the same embedding width.
    pub encoder_a_dims: Vec<usize>,
    pub encoder_b_dims: Vec<usize>,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self, ds: &Dataset) -> Result<(), TrainerError> {
        if self.epochs == 0 {
            return Err(TrainerError::InvalidConfig("epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainerError::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainerError::InvalidConfig(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(TrainerError::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        for (name, dims, input) in [
            ("encoder_a_dims", &self.encoder_a_dims, ds.dim_a()),
            ("encoder_b_dims", &self.encoder_b_dims, ds.dim_b()),
        ] {
            if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
                return Err(TrainerError::InvalidConfig(format!(
                    "{name} needs at least input and output widths, all positive"
                )));
            }
            if dims[0] != input {
                return Err(TrainerError::InvalidConfig(format!(
                    "{name} starts at {} but the modality is {input}-dimensional",
                    dims[0]
                )));
            }
        }
        if self.encoder_a_dims.last() != self.encoder_b_dims.last() {
            return Err(TrainerError::InvalidConfig(
                "towers must end in the same embedding width".into(),
            ));
        }
        self.sampler.validate(ds).map_err(|source| TrainerError::Sampling {
            epoch: 0,
            step: 0,
            source,
        })
    }

    /// Hash of everything that shapes the training trajectory. `epochs`
    /// only bounds the run length (prefixes coincide), so it is excluded,
    /// which lets a checkpoint taken at epoch k resume toward a longer
    /// horizon.
    pub fn hash(&self) -> u64 {
        let mut c = self.clone();
        c.epochs = 0;
        fnv1a64(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub mean_loss: f64,
}

/// Full training state at an epoch boundary.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_hash: u64,
    /// Adam steps taken so far (shared by both towers).
    pub t: u64,
    /// First epoch a resumed run would execute.
    pub next_epoch: u64,
    pub encoder_a: MlpEncoder,
    pub encoder_b: MlpEncoder,
    pub m_a: Vec<f64>,
    pub v_a: Vec<f64>,
    pub m_b: Vec<f64>,
    pub v_b: Vec<f64>,
    pub history: Vec<EpochStats>,
}

impl Checkpoint {
    pub fn verify_config(&self, cfg: &TrainConfig) -> Result<(), TrainerError> {
        let expected = cfg.hash();
        if self.config_hash != expected {
            return Err(TrainerError::ConfigHashMismatch {
                expected,
                found: self.config_hash,
            });
        }
        Ok(())
    }
}

/// Trains both towers from scratch for `cfg.epochs` epochs.
pub fn pretrain(ds: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint, TrainerError> {
    cfg.validate(ds)?;
    let encoder_a = MlpEncoder::init(&cfg.encoder_a_dims, rng::derive(cfg.seed, &[rng::T_ENCODER_A]));
    let encoder_b = MlpEncoder::init(&cfg.encoder_b_dims, rng::derive(cfg.seed, &[rng::T_ENCODER_B]));
    let (na, nb) = (encoder_a.num_params(), encoder_b.num_params());
    let state = Checkpoint {
        config_hash: cfg.hash(),
        t: 0,
        next_epoch: 0,
        encoder_a,
        encoder_b,
        m_a: vec![0.0; na],
        v_a: vec![0.0; na],
        m_b: vec![0.0; nb],
        v_b: vec![0.0; nb],
        history: Vec::new(),
    };
    run_epochs(ds, cfg, state)
}

/// Continues a checkpointed run until `cfg.epochs`. The config must hash
/// identically to the one the checkpoint was produced under.
pub fn resume(ds: &Dataset, cfg: &TrainConfig, ck: &Checkpoint) -> Result<Checkpoint, TrainerError> {
    cfg.validate(ds)?;
    ck.verify_config(cfg)?;
    if ck.next_epoch > cfg.epochs {
        return Err(TrainerError::InvalidConfig(format!(
            "checkpoint is already at epoch {}, config stops at {}",
            ck.next_epoch, cfg.epochs
        )));
    }
    run_epochs(ds, cfg, ck.clone())
}

fn run_epochs(
    ds: &Dataset,
    cfg: &TrainConfig,
    mut state: Checkpoint,
) -> Result<Checkpoint, TrainerError> {
    let adam = AdamParams::default();
    let mut params_a = state.encoder_a.params_flat();
    let mut params_b = state.encoder_b.params_flat();

    for epoch in state.next_epoch..cfg.epochs {
        let plans = plan_epoch(ds, &cfg.sampler, epoch)
            .map_err(|source| TrainerError::Sampling { epoch, step: 0, source })?;
        let mut loss_sum = 0.0;
        for plan in &plans {
            let b = plan.batch_size();
            let mut embs_a = Vec::with_capacity(b);
            let mut tapes_a = Vec::with_capacity(b);
            let mut embs_b = Vec::with_capacity(b);
            let mut tapes_b = Vec::with_capacity(b);
            for &(a_id, v_id) in &plan.pairs {
                let xa: Vec<f64> =
                    ds.sample(a_id).feat_a.iter().map(|&v| f64::from(v)).collect();
                let xb: Vec<f64> =
                    ds.sample(v_id).feat_b.iter().map(|&v| f64::from(v)).collect();
                let (ea, ta) = state.encoder_a.forward(&xa).map_err(|source| {
                    TrainerError::Encoder { epoch, step: plan.step, source }
                })?;
                let (eb, tb) = state.encoder_b.forward(&xb).map_err(|source| {
                    TrainerError::Encoder { epoch, step: plan.step, source }
                })?;
                embs_a.push(ea);
                tapes_a.push(ta);
                embs_b.push(eb);
                tapes_b.push(tb);
            }
            let (loss, sim) = infonce_loss(&embs_a, &embs_b, cfg.temperature)?;
            loss_sum += loss;
            let (ga, gv) = infonce_grad(&sim, &embs_a, &embs_b);

            let mut grad_a = vec![0.0; params_a.len()];
            for (tape, g) in tapes_a.iter().zip(&ga) {
                let row = state.encoder_a.backward(tape, g);
                for (acc, x) in grad_a.iter_mut().zip(&row.params) {
                    *acc += x;
                }
            }
            let mut grad_b = vec![0.0; params_b.len()];
            for (tape, g) in tapes_b.iter().zip(&gv) {
                let row = state.encoder_b.backward(tape, g);
                for (acc, x) in grad_b.iter_mut().zip(&row.params) {
                    *acc += x;
                }
            }

            state.t += 1;
            adam_step(
                &mut params_a,
                &grad_a,
                &mut state.m_a,
                &mut state.v_a,
                state.t,
                cfg.learning_rate,
                cfg.weight_decay,
                &adam,
            );
            adam_step(
                &mut params_b,
                &grad_b,
                &mut state.m_b,
                &mut state.v_b,
                state.t,
                cfg.learning_rate,
                cfg.weight_decay,
                &adam,
            );
            state.encoder_a.set_params_flat(&params_a);
            state.encoder_b.set_params_flat(&params_b);
        }
        state.history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / plans.len() as f64,
        });
        state.next_epoch = epoch + 1;
    }
    Ok(state)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Trailer {
    dims_a: Vec<usize>,
    dims_b: Vec<usize>,
    history: Vec<EpochStats>,
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), TrainerError> {
    let mut blobs: Vec<u8> = Vec::new();
    for part in [
        &ck.encoder_a.params_flat(),
        &ck.encoder_b.params_flat(),
        &ck.m_a,
        &ck.v_a,
        &ck.m_b,
        &ck.v_b,
    ] {
        for v in part.iter() {
            blobs.extend_from_slice(&v.to_le_bytes());
        }
    }
    let trailer = serde_json::to_vec(&Trailer {
        dims_a: ck.encoder_a.dims().to_vec(),
        dims_b: ck.encoder_b.dims().to_vec(),
        history: ck.history.clone(),
    })
    .map_err(|e| TrainerError::MalformedCheckpoint(e.to_string()))?;

    let mut bytes = Vec::with_capacity(HEADER_LEN + blobs.len() + trailer.len() + 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&ck.config_hash.to_le_bytes());
    bytes.extend_from_slice(&ck.t.to_le_bytes());
    bytes.extend_from_slice(&ck.next_epoch.to_le_bytes());
    bytes.extend_from_slice(&(blobs.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(trailer.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&blobs);
    bytes.extend_from_slice(&trailer);
    let checksum = fnv1a64(&bytes);
    bytes.extend_from_slice(&checksum.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainerError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(TrainerError::MalformedCheckpoint("bad magic".into()));
    }
    if bytes.len() < HEADER_LEN + 8 {
        return Err(TrainerError::ChecksumMismatch);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    let config_hash = u64_at(8);
    let t = u64_at(16);
    let next_epoch = u64_at(24);
    let blob_len = u64_at(32) as usize;
    let trailer_len = u64_at(40) as usize;
    let total = HEADER_LEN
        .checked_add(blob_len)
        .and_then(|v| v.checked_add(trailer_len))
        .and_then(|v| v.checked_add(8));
    if total != Some(bytes.len()) {
        return Err(TrainerError::ChecksumMismatch);
    }
    let body = &bytes[..bytes.len() - 8];
    if fnv1a64(body) != u64_at(bytes.len() - 8) {
        return Err(TrainerError::ChecksumMismatch);
    }
    if version != VERSION {
        return Err(TrainerError::UnsupportedVersion(version));
    }

    let trailer: Trailer = serde_json::from_slice(&body[HEADER_LEN + blob_len..])
        .map_err(|e| TrainerError::MalformedCheckpoint(e.to_string()))?;
    if trailer.dims_a.len() < 2 || trailer.dims_b.len() < 2 {
        return Err(TrainerError::MalformedCheckpoint("trailer dims too short".into()));
    }
    let count = |dims: &[usize]| dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum::<usize>();
    let (na, nb) = (count(&trailer.dims_a), count(&trailer.dims_b));
    if blob_len != 8 * (3 * na + 3 * nb) {
        return Err(TrainerError::MalformedCheckpoint(format!(
            "blob section holds {blob_len} bytes, dims require {}",
            8 * (3 * na + 3 * nb)
        )));
    }
    let mut cursor = HEADER_LEN;
    let mut take = |n: usize| -> Vec<f64> {
        let out = body[cursor..cursor + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += 8 * n;
        out
    };
    let pa = take(na);
    let pb = take(nb);
    let m_a = take(na);
    let v_a = take(na);
    let m_b = take(nb);
    let v_b = take(nb);

    let mut encoder_a = MlpEncoder::init(&trailer.dims_a, 0);
    encoder_a.set_params_flat(&pa);
    let mut encoder_b = MlpEncoder::init(&trailer.dims_b, 0);
    encoder_b.set_params_flat(&pb);

    Ok(Checkpoint {
        config_hash,
        t,
        next_epoch,
        encoder_a,
        encoder_b,
        m_a,
        v_a,
        m_b,
        v_b,
        history: trailer.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};
    use crate::sampling::Strategy;

    fn small_ds() -> Dataset {
        generate_synthetic(&SynthSpec {
            num_classes: 3,
            samples_per_class: 6,
            latent_dim: 4,
            dim_a: 6,
            dim_b: 5,
            seed: 3,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn small_cfg(epochs: u64) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            temperature: 0.07,
            encoder_a_dims: vec![6, 8, 4],
            encoder_b_dims: vec![5, 8, 4],
            sampler: SamplerConfig::new(Strategy::Random, 4, 17),
            seed: 9,
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // With zero decay the first bias-corrected update is exactly
        // lr * g / (|g| + eps), i.e. close to lr in magnitude.
        let mut p = vec![1.0, -2.0];
        let g = vec![0.5, -0.25];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_step(&mut p, &g, &mut m, &mut v, 1, 0.01, 0.0, &AdamParams::default());
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-6, "p[0] = {}", p[0]);
        assert!((p[1] - (-2.0 + 0.01)).abs() < 1e-6, "p[1] = {}", p[1]);
    }

    #[test]
    fn decay_is_decoupled_from_moments() {
        // Zero gradient: parameters shrink geometrically, moments stay 0.
        let mut p = vec![2.0];
        let g = vec![0.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adam_step(&mut p, &g, &mut m, &mut v, 1, 0.1, 0.5, &AdamParams::default());
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-12);
        assert_eq!(m[0], 0.0);
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let ds = small_ds();
        let cfg = small_cfg(8);
        let ck = pretrain(&ds, &cfg).unwrap();
        assert_eq!(ck.history.len(), 8);
        let first = ck.history.first().unwrap().mean_loss;
        let last = ck.history.last().unwrap().mean_loss;
        assert!(last < first, "loss did not move: {first} -> {last}");
        assert!(ck.history.iter().all(|e| e.mean_loss.is_finite()));

        let ck2 = pretrain(&ds, &cfg).unwrap();
        assert_eq!(ck.encoder_a.params_flat(), ck2.encoder_a.params_flat());
        assert_eq!(ck.history, ck2.history);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let ds = small_ds();
        let full = pretrain(&ds, &small_cfg(6)).unwrap();
        let half = pretrain(&ds, &small_cfg(3)).unwrap();
        let resumed = resume(&ds, &small_cfg(6), &half).unwrap();
        assert_eq!(full.t, resumed.t);
        assert_eq!(full.encoder_a.params_flat(), resumed.encoder_a.params_flat());
        assert_eq!(full.encoder_b.params_flat(), resumed.encoder_b.params_flat());
        assert_eq!(full.m_a, resumed.m_a);
        assert_eq!(full.v_b, resumed.v_b);
        assert_eq!(full.history, resumed.history);
    }

    #[test]
    fn resume_rejects_altered_config() {
        let ds = small_ds();
        let half = pretrain(&ds, &small_cfg(3)).unwrap();
        let mut altered = small_cfg(6);
        altered.learning_rate = 5e-4;
        match resume(&ds, &altered, &half) {
            Err(TrainerError::ConfigHashMismatch { .. }) => {}
            other => panic!("expected ConfigHashMismatch, got {other:?}"),
        }
        // A pure epoch extension is not an alteration.
        assert!(resume(&ds, &small_cfg(6), &half).is_ok());
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ds = small_ds();
        let ck = pretrain(&ds, &small_cfg(2)).unwrap();
        save_checkpoint(&ck, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config_hash, loaded.config_hash);
        assert_eq!(ck.t, loaded.t);
        assert_eq!(ck.next_epoch, loaded.next_epoch);
        assert_eq!(ck.encoder_a.params_flat(), loaded.encoder_a.params_flat());
        assert_eq!(ck.encoder_b.params_flat(), loaded.encoder_b.params_flat());
        assert_eq!(ck.m_a, loaded.m_a);
        assert_eq!(ck.v_a, loaded.v_a);
        assert_eq!(ck.m_b, loaded.m_b);
        assert_eq!(ck.v_b, loaded.v_b);
        assert_eq!(ck.history, loaded.history);
    }

    #[test]
    fn checkpoint_corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        let ds = small_ds();
        let ck = pretrain(&ds, &small_cfg(2)).unwrap();
        save_checkpoint(&ck, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        // Truncation.
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainerError::ChecksumMismatch)));

        // Bit flip in the blob section.
        let mut flipped = bytes.clone();
        flipped[HEADER_LEN + 10] ^= 0x40;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainerError::ChecksumMismatch)));

        // Wrong magic.
        let mut magic = bytes.clone();
        magic[0] = b'X';
        fs::write(&path, &magic).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainerError::MalformedCheckpoint(_))));

        // Future version, checksum recomputed so only the version trips.
        let mut vers = bytes.clone();
        vers[4..8].copy_from_slice(&2u32.to_le_bytes());
        let len = vers.len();
        let sum = fnv1a64(&vers[..len - 8]);
        vers[len - 8..].copy_from_slice(&sum.to_le_bytes());
        fs::write(&path, &vers).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(TrainerError::UnsupportedVersion(2))));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ds = small_ds();
        let mut cfg = small_cfg(1);
        cfg.encoder_a_dims = vec![7, 4];
        assert!(matches!(pretrain(&ds, &cfg), Err(TrainerError::InvalidConfig(_))));
        let mut cfg = small_cfg(1);
        cfg.encoder_b_dims = vec![5, 3];
        assert!(matches!(pretrain(&ds, &cfg), Err(TrainerError::InvalidConfig(_))));
        let mut cfg = small_cfg(1);
        cfg.learning_rate = 0.0;
        assert!(matches!(pretrain(&ds, &cfg), Err(TrainerError::InvalidConfig(_))));
        let mut cfg = small_cfg(1);
        cfg.sampler.batch_size = 100;
        assert!(matches!(pretrain(&ds, &cfg), Err(TrainerError::Sampling { .. })));
    }
}
