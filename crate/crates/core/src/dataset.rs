//! Paired two-modality datasets.
//!
//! A [`Dataset`] holds N samples, each carrying a class label and one
//! feature vector per modality. Real corpora are loaded from a manifest;
//! synthetic ones are generated from a latent class-prototype model that
//! gives precise control over how much of the signal is shared between
//! modalities, how spread out classes are, and how noisy each modality is.
//!
//! On-disk layout of a saved dataset:
//!
//! ```text
//! <dir>/
//!   manifest.json   sizes, labels, blob names, checksums
//!   feat_a.bin      N * dim_a little-endian f32, row-major
//!   feat_b.bin      N * dim_b little-endian f32, row-major
//! ```
//!
//! Synthetic generation model: each class c gets a latent prototype
//! `p_c ~ N(0, I)`. Sample i of class c draws a class-relative offset
//! `eps_i` and an instance vector `u_i`, forming the shared latent
//! `s_i = p_c + within_class_noise * eps_i + instance_coupling * u_i`.
//! Each modality observes a fixed random linear projection of `s_i` plus
//! its own observation noise. `instance_coupling` is the lever that moves
//! the correspondence signal between "which class" and "which instance".

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("class {label} has {available} samples, {requested} requested")]
    ClassTooSmall {
        label: usize,
        available: usize,
        requested: usize,
    },
    #[error("manifest malformed: {0}")]
    ManifestMalformed(String),
    #[error("feature blob {file}: expected {expected} bytes for {rows} x {cols} f32, found {actual}")]
    DimensionMismatch {
        file: String,
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("missing feature file {0}")]
    MissingFeatureFile(PathBuf),
    #[error("checksum mismatch for {file}: manifest has {expected:#018x}, blob hashes to {actual:#018x}")]
    ChecksumMismatch {
        file: String,
        expected: u64,
        actual: u64,
    },
    #[error("pseudo-labels absent from dataset")]
    PseudoLabelsMissing,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One sample: a class label plus one feature vector per modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub label: usize,
    pub pseudo_label: Option<usize>,
    pub feat_a: Vec<f32>,
    pub feat_b: Vec<f32>,
}

/// A validated collection of samples with dense ids `0..len`.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    num_classes: usize,
    dim_a: usize,
    dim_b: usize,
    // class_index[c] lists sample ids of class c in ascending order.
    class_index: Vec<Vec<usize>>,
}

impl Dataset {
    /// Validates samples and builds the class index.
    ///
    /// Requirements: at least one sample, ids dense and in order, labels
    /// (and pseudo-labels where present) within `0..num_classes`, feature
    /// dimensions consistent across samples, all values finite.
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Result<Self, DatasetError> {
        if samples.is_empty() {
            return Err(DatasetError::InvalidParameter("dataset is empty".into()));
        }
        if num_classes == 0 {
            return Err(DatasetError::InvalidParameter("num_classes is zero".into()));
        }
        let dim_a = samples[0].feat_a.len();
        let dim_b = samples[0].feat_b.len();
        if dim_a == 0 || dim_b == 0 {
            return Err(DatasetError::InvalidParameter(
                "feature dimensions must be positive".into(),
            ));
        }
        let mut class_index = vec![Vec::new(); num_classes];
        for (i, s) in samples.iter().enumerate() {
            if s.id != i {
                return Err(DatasetError::InvalidParameter(format!(
                    "sample at position {i} has id {}, ids must be dense and ordered",
                    s.id
                )));
            }
            if s.label >= num_classes {
                return Err(DatasetError::InvalidParameter(format!(
                    "sample {i} has label {} >= num_classes {num_classes}",
                    s.label
                )));
            }
            if let Some(p) = s.pseudo_label {
                if p >= num_classes {
                    return Err(DatasetError::InvalidParameter(format!(
                        "sample {i} has pseudo-label {p} >= num_classes {num_classes}"
                    )));
                }
            }
            if s.feat_a.len() != dim_a || s.feat_b.len() != dim_b {
                return Err(DatasetError::InvalidParameter(format!(
                    "sample {i} has inconsistent feature dimensions"
                )));
            }
            if s.feat_a.iter().chain(s.feat_b.iter()).any(|v| !v.is_finite()) {
                return Err(DatasetError::InvalidParameter(format!(
                    "sample {i} has a non-finite feature value"
                )));
            }
            class_index[s.label].push(i);
        }
        Ok(Dataset {
            samples,
            num_classes,
            dim_a,
            dim_b,
            class_index,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn sample(&self, id: usize) -> &Sample {
        &self.samples[id]
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Ids of every class, ascending within each class.
    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    /// Like [`Self::class_index`] but grouped by pseudo-label.
    ///
    /// Fails unless every sample carries a pseudo-label.
    pub fn pseudo_class_index(&self) -> Result<Vec<Vec<usize>>, DatasetError> {
        let mut index = vec![Vec::new(); self.num_classes];
        for s in &self.samples {
            match s.pseudo_label {
                Some(p) => index[p].push(s.id),
                None => return Err(DatasetError::PseudoLabelsMissing),
            }
        }
        Ok(index)
    }

    pub fn min_class_size(&self) -> usize {
        self.class_index.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn max_class_size(&self) -> usize {
        self.class_index.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Returns a copy with `pseudo_label` set on every sample.
    pub fn with_pseudo_labels(&self, labels: &[usize]) -> Result<Dataset, DatasetError> {
        if labels.len() != self.len() {
            return Err(DatasetError::InvalidParameter(format!(
                "{} pseudo-labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        let mut samples = self.samples.clone();
        for (s, &p) in samples.iter_mut().zip(labels) {
            if p >= self.num_classes {
                return Err(DatasetError::InvalidParameter(format!(
                    "pseudo-label {p} >= num_classes {}",
                    self.num_classes
                )));
            }
            s.pseudo_label = Some(p);
        }
        Dataset::new(samples, self.num_classes)
    }
}

/// Parameters of the synthetic two-modality generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub latent_dim: usize,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Scale of the per-sample offset from the class prototype.
    pub within_class_noise: f64,
    /// Weight of the instance vector shared by both modalities.
    pub instance_coupling: f64,
    /// Scale of per-modality observation noise.
    pub modality_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: 10,
            samples_per_class: 20,
            latent_dim: 16,
            dim_a: 48,
            dim_b: 48,
            within_class_noise: 0.35,
            instance_coupling: 0.6,
            modality_noise: 0.05,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        let positive = [
            ("num_classes", self.num_classes),
            ("samples_per_class", self.samples_per_class),
            ("latent_dim", self.latent_dim),
            ("dim_a", self.dim_a),
            ("dim_b", self.dim_b),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DatasetError::InvalidParameter(format!("{name} must be positive")));
            }
        }
        let scales = [
            ("within_class_noise", self.within_class_noise),
            ("instance_coupling", self.instance_coupling),
            ("modality_noise", self.modality_noise),
        ];
        for (name, v) in scales {
            if !v.is_finite() || v < 0.0 {
                return Err(DatasetError::InvalidParameter(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The fixed projections from latent space into each modality.
///
/// Held separately from [`SynthSpec`] so several datasets can share one
/// pair of projections (e.g. an out-of-domain corpus observed through the
/// same sensors).
#[derive(Debug, Clone)]
pub struct ModalityMaps {
    latent_dim: usize,
    dim_a: usize,
    dim_b: usize,
    map_a: Vec<f64>, // dim_a x latent_dim, row-major
    map_b: Vec<f64>,
}

impl ModalityMaps {
    pub fn from_seed(seed: u64, latent_dim: usize, dim_a: usize, dim_b: usize) -> Self {
        // Entries scaled by 1/sqrt(latent_dim) so projected vectors keep
        // roughly the magnitude of the latent.
        let scale = 1.0 / (latent_dim as f64).sqrt();
        let draw = |tag: u64, n: usize| -> Vec<f64> {
            let mut r = rng::stream(seed, &[tag]);
            (0..n)
                .map(|_| scale * r.sample::<f64, _>(StandardNormal))
                .collect()
        };
        ModalityMaps {
            latent_dim,
            dim_a,
            dim_b,
            map_a: draw(rng::T_MAP_A, dim_a * latent_dim),
            map_b: draw(rng::T_MAP_B, dim_b * latent_dim),
        }
    }

    fn project(map: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), cols);
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &map[r * cols..(r + 1) * cols];
            *o = row.iter().zip(x).map(|(m, v)| m * v).sum();
        }
        out
    }
}

/// Generates a synthetic dataset, drawing fresh modality projections from
/// the spec seed.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset, DatasetError> {
    let maps = ModalityMaps::from_seed(spec.seed, spec.latent_dim, spec.dim_a, spec.dim_b);
    generate_synthetic_with_maps(spec, &maps)
}

/// Generates a synthetic dataset observed through the given projections.
///
/// Prototypes and noise still come from `spec.seed`, so two specs with
/// different seeds and shared maps model distinct corpora seen through the
/// same sensors.
pub fn generate_synthetic_with_maps(
    spec: &SynthSpec,
    maps: &ModalityMaps,
) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    if maps.latent_dim != spec.latent_dim || maps.dim_a != spec.dim_a || maps.dim_b != spec.dim_b {
        return Err(DatasetError::InvalidParameter(format!(
            "modality maps are {}x({}/{}), spec wants {}x({}/{})",
            maps.latent_dim, maps.dim_a, maps.dim_b, spec.latent_dim, spec.dim_a, spec.dim_b
        )));
    }

    let d = spec.latent_dim;
    let mut proto_rng = rng::stream(spec.seed, &[rng::T_PROTOTYPES]);
    let prototypes: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| (0..d).map(|_| proto_rng.sample(StandardNormal)).collect())
        .collect();

    let mut noise_rng = rng::stream(spec.seed, &[rng::T_SAMPLES]);
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n).map(|_| noise_rng.sample::<f64, _>(StandardNormal)).collect()
    };

    let mut samples = Vec::with_capacity(spec.num_classes * spec.samples_per_class);
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let eps = draw(d);
            let inst = draw(d);
            let eta_a = draw(spec.dim_a);
            let eta_b = draw(spec.dim_b);
            let shared: Vec<f64> = (0..d)
                .map(|k| {
                    proto[k] + spec.within_class_noise * eps[k] + spec.instance_coupling * inst[k]
                })
                .collect();
            let clean_a = ModalityMaps::project(&maps.map_a, spec.dim_a, d, &shared);
            let clean_b = ModalityMaps::project(&maps.map_b, spec.dim_b, d, &shared);
            let feat_a: Vec<f32> = clean_a
                .iter()
                .zip(&eta_a)
                .map(|(v, n)| (v + spec.modality_noise * n) as f32)
                .collect();
            let feat_b: Vec<f32> = clean_b
                .iter()
                .zip(&eta_b)
                .map(|(v, n)| (v + spec.modality_noise * n) as f32)
                .collect();
            samples.push(Sample {
                id: samples.len(),
                label: c,
                pseudo_label: None,
                feat_a,
                feat_b,
            });
        }
    }
    Dataset::new(samples, spec.num_classes)
}

/// Selects `per_class` samples from every class, uniformly without
/// replacement, and re-densifies ids (original relative order kept).
pub fn balanced_subset(
    ds: &Dataset,
    per_class: usize,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if per_class == 0 {
        return Err(DatasetError::InvalidParameter("per_class must be positive".into()));
    }
    let mut rng = rng::stream(seed, &[rng::T_SUBSET]);
    let mut keep = Vec::with_capacity(per_class * ds.num_classes());
    for (label, members) in ds.class_index().iter().enumerate() {
        if members.len() < per_class {
            return Err(DatasetError::ClassTooSmall {
                label,
                available: members.len(),
                requested: per_class,
            });
        }
        for idx in rand::seq::index::sample(&mut rng, members.len(), per_class) {
            keep.push(members[idx]);
        }
    }
    keep.sort_unstable();
    rebuild(ds, &keep)
}

/// Stratified split: per class, `floor(train_fraction * size)` samples go
/// to the first dataset and the remainder to the second. Requires
/// `0 < train_fraction < 1`.
pub fn split(
    ds: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DatasetError::InvalidParameter(format!(
            "train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )));
    }
    let mut rng = rng::stream(seed, &[rng::T_SPLIT]);
    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    for members in ds.class_index() {
        let mut pool = members.clone();
        pool.shuffle(&mut rng);
        let n_train = (train_fraction * pool.len() as f64).floor() as usize;
        train_ids.extend_from_slice(&pool[..n_train]);
        val_ids.extend_from_slice(&pool[n_train..]);
    }
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(DatasetError::InvalidParameter(format!(
            "train_fraction {train_fraction} leaves an empty side of the split"
        )));
    }
    Ok((rebuild(ds, &train_ids)?, rebuild(ds, &val_ids)?))
}

/// Keeps exactly the given sample ids (strictly increasing), re-densifying
/// ids while preserving order.
pub fn subset(ds: &Dataset, ids: &[usize]) -> Result<Dataset, DatasetError> {
    if ids.is_empty() {
        return Err(DatasetError::InvalidParameter("subset is empty".into()));
    }
    for pair in ids.windows(2) {
        if pair[0] >= pair[1] {
            return Err(DatasetError::InvalidParameter(
                "subset ids must be strictly increasing".into(),
            ));
        }
    }
    if *ids.last().unwrap() >= ds.len() {
        return Err(DatasetError::InvalidParameter(format!(
            "subset id {} out of range for {} samples",
            ids.last().unwrap(),
            ds.len()
        )));
    }
    rebuild(ds, ids)
}

fn rebuild(ds: &Dataset, keep: &[usize]) -> Result<Dataset, DatasetError> {
    let samples = keep
        .iter()
        .enumerate()
        .map(|(new_id, &old_id)| {
            let s = ds.sample(old_id);
            Sample {
                id: new_id,
                label: s.label,
                pseudo_label: s.pseudo_label,
                feat_a: s.feat_a.clone(),
                feat_b: s.feat_b.clone(),
            }
        })
        .collect();
    Dataset::new(samples, ds.num_classes())
}

// ── Persistence ──────────────────────────────────────────────────────────

const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    num_samples: usize,
    num_classes: usize,
    dim_a: usize,
    dim_b: usize,
    labels: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pseudo_labels: Option<Vec<Option<usize>>>,
    feat_a: BlobRef,
    feat_b: BlobRef,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlobRef {
    file: String,
    fnv1a64: u64,
}

/// 64-bit FNV-1a over a byte slice.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn encode_blob(ds: &Dataset, pick: impl Fn(&Sample) -> &[f32]) -> Vec<u8> {
    let mut out = Vec::new();
    for s in ds.samples() {
        for v in pick(s) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Writes `manifest.json`, `feat_a.bin` and `feat_b.bin` into `dir`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let blob_a = encode_blob(ds, |s| &s.feat_a);
    let blob_b = encode_blob(ds, |s| &s.feat_b);
    let manifest = Manifest {
        num_samples: ds.len(),
        num_classes: ds.num_classes(),
        dim_a: ds.dim_a(),
        dim_b: ds.dim_b(),
        labels: ds.samples().iter().map(|s| s.label).collect(),
        pseudo_labels: if ds.samples().iter().any(|s| s.pseudo_label.is_some()) {
            Some(ds.samples().iter().map(|s| s.pseudo_label).collect())
        } else {
            None
        },
        feat_a: BlobRef {
            file: "feat_a.bin".into(),
            fnv1a64: fnv1a64(&blob_a),
        },
        feat_b: BlobRef {
            file: "feat_b.bin".into(),
            fnv1a64: fnv1a64(&blob_b),
        },
    };
    fs::write(dir.join("feat_a.bin"), &blob_a)?;
    fs::write(dir.join("feat_b.bin"), &blob_b)?;
    let mut f = fs::File::create(dir.join(MANIFEST_NAME))?;
    serde_json::to_writer_pretty(&mut f, &manifest)
        .map_err(|e| DatasetError::ManifestMalformed(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Loads a dataset from a manifest path or from a directory containing
/// `manifest.json`. Blob sizes and checksums are verified before any
/// sample is constructed.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST_NAME) } else { path.to_path_buf() };
    if !manifest_path.is_file() {
        return Err(DatasetError::MissingFeatureFile(manifest_path));
    }
    let text = fs::read_to_string(&manifest_path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::ManifestMalformed(e.to_string()))?;

    if manifest.labels.len() != manifest.num_samples {
        return Err(DatasetError::ManifestMalformed(format!(
            "{} labels for {} samples",
            manifest.labels.len(),
            manifest.num_samples
        )));
    }
    if let Some(p) = &manifest.pseudo_labels {
        if p.len() != manifest.num_samples {
            return Err(DatasetError::ManifestMalformed(format!(
                "{} pseudo-labels for {} samples",
                p.len(),
                manifest.num_samples
            )));
        }
    }

    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let read_blob = |blob: &BlobRef, cols: usize| -> Result<Vec<f32>, DatasetError> {
        let path = base.join(&blob.file);
        if !path.is_file() {
            return Err(DatasetError::MissingFeatureFile(path));
        }
        let bytes = fs::read(&path)?;
        let expected = manifest.num_samples * cols * 4;
        if bytes.len() != expected {
            return Err(DatasetError::DimensionMismatch {
                file: blob.file.clone(),
                rows: manifest.num_samples,
                cols,
                expected,
                actual: bytes.len(),
            });
        }
        let actual = fnv1a64(&bytes);
        if actual != blob.fnv1a64 {
            return Err(DatasetError::ChecksumMismatch {
                file: blob.file.clone(),
                expected: blob.fnv1a64,
                actual,
            });
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    };

    let flat_a = read_blob(&manifest.feat_a, manifest.dim_a)?;
    let flat_b = read_blob(&manifest.feat_b, manifest.dim_b)?;

    let samples: Vec<Sample> = (0..manifest.num_samples)
        .map(|i| Sample {
            id: i,
            label: manifest.labels[i],
            pseudo_label: manifest.pseudo_labels.as_ref().and_then(|p| p[i]),
            feat_a: flat_a[i * manifest.dim_a..(i + 1) * manifest.dim_a].to_vec(),
            feat_b: flat_b[i * manifest.dim_b..(i + 1) * manifest.dim_b].to_vec(),
        })
        .collect();

    Dataset::new(samples, manifest.num_classes).map_err(|e| match e {
        // Label-range and finiteness problems in a loaded file are manifest
        // defects, not programmer errors.
        DatasetError::InvalidParameter(msg) => DatasetError::ManifestMalformed(msg),
        other => other,
    })
}

/// Per-class sample counts, for quick summaries.
pub fn class_histogram(ds: &Dataset) -> BTreeMap<usize, usize> {
    ds.class_index()
        .iter()
        .enumerate()
        .map(|(c, m)| (c, m.len()))
        .collect()
}
