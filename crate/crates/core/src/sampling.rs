//! Batch pair sampling strategies.
//!
//! A batch plan is a list of `(a_id, v_id)` pairs: row i of the batch
//! feeds modality A of sample `a_id` into one encoder and modality B of
//! sample `v_id` into the other, and the diagonal of the resulting
//! similarity matrix is treated as positive. The strategies differ in how
//! they compose a batch:
//!
//! * `Random`: B distinct samples paired with themselves.
//! * `EasyNegative`: B distinct classes, one sample each, so every
//!   off-diagonal negative is a cross-class pair.
//! * `HardNegative`: one class, B distinct instances, so every negative
//!   is a within-class pair.
//! * `SoftPositive`: positives are same-class but different-instance
//!   pairs, turning class identity into the learning target.
//! * `SoftPositiveMix(p)`: per pair, soft-positive with probability p,
//!   exact-instance otherwise.
//! * `PlSoftPositive`: soft-positive grouped by machine-produced
//!   pseudo-labels instead of ground truth.
//!
//! Plans are deterministic given `(seed, epoch, step)`: each step draws
//! from its own counter-derived stream, so any single batch can be
//! regenerated without replaying the run. Plans serialize to JSON for
//! audit dumps.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::rng;

/// Bound on whole-class reassignment rounds while resolving distinctness
/// conflicts among soft-positive partners.
const MAX_CLASS_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("batch size {requested} exceeds dataset size {available}")]
    BatchTooLarge { requested: usize, available: usize },
    #[error("{requested} classes requested per batch, only {available} are non-empty")]
    MoreClassesRequestedThanExist { requested: usize, available: usize },
    #[error("no class has {requested} samples (largest has {largest})")]
    NoClassLargeEnough { requested: usize, largest: usize },
    #[error("could not assign distinct soft-positive partners in class {label} after {MAX_CLASS_ATTEMPTS} rounds")]
    PairingInfeasible { label: usize },
    #[error("pseudo-labels absent from dataset")]
    PseudoLabelsMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    EasyNegative,
    HardNegative,
    SoftPositive,
    SoftPositiveMix(f64),
    PlSoftPositive,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Random => write!(f, "random"),
            Strategy::EasyNegative => write!(f, "easy-negative"),
            Strategy::HardNegative => write!(f, "hard-negative"),
            Strategy::SoftPositive => write!(f, "soft-positive"),
            Strategy::SoftPositiveMix(p) => {
                write!(f, "soft-positive-mix-{}", (p * 100.0).round() as i64)
            }
            Strategy::PlSoftPositive => write!(f, "pl-soft-positive"),
        }
    }
}

/// Which per-sample grouping the class-aware strategies consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    #[default]
    GroundTruth,
    Pseudo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub strategy: Strategy,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub label_source: LabelSource,
}

impl SamplerConfig {
    pub fn new(strategy: Strategy, batch_size: usize, seed: u64) -> Self {
        SamplerConfig { strategy, batch_size, seed, label_source: LabelSource::GroundTruth }
    }

    /// `PlSoftPositive` always groups by pseudo-label; every other
    /// strategy honors `label_source`.
    pub fn effective_source(&self) -> LabelSource {
        match self.strategy {
            Strategy::PlSoftPositive => LabelSource::Pseudo,
            _ => self.label_source,
        }
    }

    /// Checks feasibility of this config against a concrete dataset.
    pub fn validate(&self, ds: &Dataset) -> Result<(), SamplingError> {
        if self.batch_size < 2 {
            return Err(SamplingError::InvalidConfig(format!(
                "batch_size must be at least 2, got {}",
                self.batch_size
            )));
        }
        if let Strategy::SoftPositiveMix(p) = self.strategy {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                return Err(SamplingError::InvalidConfig(format!(
                    "mix probability must lie in [0, 1], got {p}"
                )));
            }
        }
        let lists = class_lists(ds, self.effective_source())?;
        match self.strategy {
            Strategy::Random
            | Strategy::SoftPositive
            | Strategy::SoftPositiveMix(_)
            | Strategy::PlSoftPositive => {
                if self.batch_size > ds.len() {
                    return Err(SamplingError::BatchTooLarge {
                        requested: self.batch_size,
                        available: ds.len(),
                    });
                }
            }
            Strategy::EasyNegative => {
                let available = lists.iter().filter(|m| !m.is_empty()).count();
                if self.batch_size > available {
                    return Err(SamplingError::MoreClassesRequestedThanExist {
                        requested: self.batch_size,
                        available,
                    });
                }
            }
            Strategy::HardNegative => {
                let largest = lists.iter().map(Vec::len).max().unwrap_or(0);
                if self.batch_size > largest {
                    return Err(SamplingError::NoClassLargeEnough {
                        requested: self.batch_size,
                        largest,
                    });
                }
            }
        }
        Ok(())
    }
}

/// One batch worth of pairs, tagged with its position in the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub strategy: Strategy,
    pub epoch: u64,
    pub step: u64,
    /// Row i pairs modality A of `pairs[i].0` with modality B of
    /// `pairs[i].1`.
    pub pairs: Vec<(usize, usize)>,
}

impl BatchPlan {
    fn new(strategy: Strategy, pairs: Vec<(usize, usize)>) -> Self {
        BatchPlan { strategy, epoch: 0, step: 0, pairs }
    }

    pub fn batch_size(&self) -> usize {
        self.pairs.len()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    /// Checks the structural invariants this plan's strategy promises.
    /// `source` must be the sampler's effective label source.
    pub fn verify(&self, ds: &Dataset, source: LabelSource) -> Result<(), String> {
        let label_of = |id: usize| -> Result<usize, String> {
            let s = ds.sample(id);
            match source {
                LabelSource::GroundTruth => Ok(s.label),
                LabelSource::Pseudo => s.pseudo_label.ok_or_else(|| format!("sample {id} lacks a pseudo-label")),
            }
        };
        let mut seen_a = HashSet::new();
        let mut seen_v = HashSet::new();
        for &(a, v) in &self.pairs {
            if a >= ds.len() || v >= ds.len() {
                return Err(format!("pair ({a}, {v}) out of range for {} samples", ds.len()));
            }
            if !seen_a.insert(a) {
                return Err(format!("a-side id {a} repeats within the batch"));
            }
            if !seen_v.insert(v) {
                return Err(format!("v-side id {v} repeats within the batch"));
            }
        }
        let class_size = |id: usize| -> Result<usize, String> {
            let l = label_of(id)?;
            Ok(match source {
                LabelSource::GroundTruth => ds.class_index()[l].len(),
                LabelSource::Pseudo => ds
                    .samples()
                    .iter()
                    .filter(|s| s.pseudo_label == Some(l))
                    .count(),
            })
        };
        match self.strategy {
            Strategy::Random => {
                for &(a, v) in &self.pairs {
                    if a != v {
                        return Err(format!("random pair ({a}, {v}) is not an exact pair"));
                    }
                }
            }
            Strategy::EasyNegative => {
                let mut classes = HashSet::new();
                for &(a, v) in &self.pairs {
                    if a != v {
                        return Err(format!("easy-negative pair ({a}, {v}) is not an exact pair"));
                    }
                    if !classes.insert(label_of(a)?) {
                        return Err(format!("class of sample {a} repeats within the batch"));
                    }
                }
            }
            Strategy::HardNegative => {
                let first = label_of(self.pairs[0].0)?;
                for &(a, v) in &self.pairs {
                    if a != v {
                        return Err(format!("hard-negative pair ({a}, {v}) is not an exact pair"));
                    }
                    if label_of(a)? != first {
                        return Err(format!("sample {a} breaks the single-class batch"));
                    }
                }
            }
            Strategy::SoftPositive | Strategy::PlSoftPositive => {
                for &(a, v) in &self.pairs {
                    if label_of(a)? != label_of(v)? {
                        return Err(format!("pair ({a}, {v}) crosses classes"));
                    }
                    if a == v && class_size(a)? > 1 {
                        return Err(format!(
                            "pair ({a}, {v}) is an exact pair although its class has partners"
                        ));
                    }
                }
            }
            Strategy::SoftPositiveMix(_) => {
                for &(a, v) in &self.pairs {
                    if a != v && label_of(a)? != label_of(v)? {
                        return Err(format!("pair ({a}, {v}) crosses classes"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn class_lists<'d>(
    ds: &'d Dataset,
    source: LabelSource,
) -> Result<Cow<'d, [Vec<usize>]>, SamplingError> {
    match source {
        LabelSource::GroundTruth => Ok(Cow::Borrowed(ds.class_index())),
        LabelSource::Pseudo => ds
            .pseudo_class_index()
            .map(Cow::Owned)
            .map_err(|_| SamplingError::PseudoLabelsMissing),
    }
}

fn label_under(ds: &Dataset, source: LabelSource, id: usize) -> usize {
    match source {
        LabelSource::GroundTruth => ds.sample(id).label,
        // Presence was checked when the class lists were built.
        LabelSource::Pseudo => ds.sample(id).pseudo_label.expect("pseudo-label present"),
    }
}

/// B distinct samples, each paired with itself.
pub fn sample_random(
    ds: &Dataset,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<BatchPlan, SamplingError> {
    if batch_size > ds.len() {
        return Err(SamplingError::BatchTooLarge { requested: batch_size, available: ds.len() });
    }
    let pairs = rand::seq::index::sample(rng, ds.len(), batch_size)
        .into_iter()
        .map(|i| (i, i))
        .collect();
    Ok(BatchPlan::new(Strategy::Random, pairs))
}

/// B distinct classes, one exact pair each.
pub fn sample_easy_negative(
    ds: &Dataset,
    batch_size: usize,
    source: LabelSource,
    rng: &mut impl Rng,
) -> Result<BatchPlan, SamplingError> {
    let lists = class_lists(ds, source)?;
    let nonempty: Vec<&Vec<usize>> = lists.iter().filter(|m| !m.is_empty()).collect();
    if batch_size > nonempty.len() {
        return Err(SamplingError::MoreClassesRequestedThanExist {
            requested: batch_size,
            available: nonempty.len(),
        });
    }
    let pairs = rand::seq::index::sample(rng, nonempty.len(), batch_size)
        .into_iter()
        .map(|c| {
            let members = nonempty[c];
            let id = members[rng.gen_range(0..members.len())];
            (id, id)
        })
        .collect();
    Ok(BatchPlan::new(Strategy::EasyNegative, pairs))
}

/// B distinct instances of one class, exact pairs.
pub fn sample_hard_negative(
    ds: &Dataset,
    batch_size: usize,
    source: LabelSource,
    rng: &mut impl Rng,
) -> Result<BatchPlan, SamplingError> {
    let lists = class_lists(ds, source)?;
    let eligible: Vec<&Vec<usize>> = lists.iter().filter(|m| m.len() >= batch_size).collect();
    if eligible.is_empty() {
        return Err(SamplingError::NoClassLargeEnough {
            requested: batch_size,
            largest: lists.iter().map(Vec::len).max().unwrap_or(0),
        });
    }
    let members = eligible[rng.gen_range(0..eligible.len())];
    let pairs = rand::seq::index::sample(rng, members.len(), batch_size)
        .into_iter()
        .map(|i| (members[i], members[i]))
        .collect();
    Ok(BatchPlan::new(Strategy::HardNegative, pairs))
}

/// B distinct anchors, each paired with a different instance of its own
/// class. A class with a single member falls back to the exact pair.
pub fn sample_soft_positive(
    ds: &Dataset,
    batch_size: usize,
    source: LabelSource,
    rng: &mut impl Rng,
) -> Result<BatchPlan, SamplingError> {
    if batch_size > ds.len() {
        return Err(SamplingError::BatchTooLarge { requested: batch_size, available: ds.len() });
    }
    let anchors: Vec<usize> =
        rand::seq::index::sample(rng, ds.len(), batch_size).into_iter().collect();
    let soft = vec![true; anchors.len()];
    let vs = assign_soft_partners(ds, source, &anchors, &soft, false, rng)?;
    let pairs = anchors.into_iter().zip(vs).collect();
    Ok(BatchPlan::new(Strategy::SoftPositive, pairs))
}

/// Per pair: soft-positive with probability `p`, exact otherwise.
pub fn sample_soft_positive_mix(
    ds: &Dataset,
    batch_size: usize,
    p: f64,
    source: LabelSource,
    rng: &mut impl Rng,
) -> Result<BatchPlan, SamplingError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(SamplingError::InvalidConfig(format!(
            "mix probability must lie in [0, 1], got {p}"
        )));
    }
    if batch_size > ds.len() {
        return Err(SamplingError::BatchTooLarge { requested: batch_size, available: ds.len() });
    }
    let anchors: Vec<usize> =
        rand::seq::index::sample(rng, ds.len(), batch_size).into_iter().collect();
    let soft: Vec<bool> = (0..anchors.len()).map(|_| rng.gen::<f64>() < p).collect();
    let vs = assign_soft_partners(ds, source, &anchors, &soft, true, rng)?;
    let pairs = anchors.into_iter().zip(vs).collect();
    Ok(BatchPlan::new(Strategy::SoftPositiveMix(p), pairs))
}

/// Soft-positive over pseudo-labels. Identical pair logic; only the
/// grouping differs.
pub fn sample_pl_soft_positive(
    ds: &Dataset,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<BatchPlan, SamplingError> {
    let mut plan = sample_soft_positive(ds, batch_size, LabelSource::Pseudo, rng)?;
    plan.strategy = Strategy::PlSoftPositive;
    Ok(plan)
}

/// Picks a v-side partner for every anchor marked soft, keeping v-side ids
/// pairwise distinct across the whole batch.
///
/// Rows of one class are assigned together; when a row runs out of free
/// partners the class is re-drawn from scratch, up to [`MAX_CLASS_ATTEMPTS`]
/// rounds. Exact rows (mix strategy) occupy their own id on the v side
/// before any soft row is placed. With `exact_fallback` a row that is still
/// starved on the final round takes its own id, which a counting argument
/// shows is always free; without it the final round fails as infeasible.
fn assign_soft_partners(
    ds: &Dataset,
    source: LabelSource,
    anchors: &[usize],
    soft: &[bool],
    exact_fallback: bool,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, SamplingError> {
    let lists = class_lists(ds, source)?;
    let mut out = vec![usize::MAX; anchors.len()];
    // Rows needing a partner, grouped by class, in batch order. BTreeMap
    // fixes the class visit order so draws are reproducible.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    // v-side ids already taken within each class by exact rows.
    let mut taken: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    for (row, (&anchor, &is_soft)) in anchors.iter().zip(soft).enumerate() {
        let label = label_under(ds, source, anchor);
        if is_soft {
            groups.entry(label).or_default().push(row);
        } else {
            out[row] = anchor;
            taken.entry(label).or_default().insert(anchor);
        }
    }

    for (&label, rows) in &groups {
        let members = &lists[label];
        let base = taken.get(&label);
        let mut assigned = None;
        for attempt in 0..MAX_CLASS_ATTEMPTS {
            let last = attempt + 1 == MAX_CLASS_ATTEMPTS;
            if let Some(picks) =
                try_assign_class(anchors, rows, members, base, exact_fallback && last, rng)
            {
                assigned = Some(picks);
                break;
            }
        }
        match assigned {
            Some(picks) => {
                for (&row, pick) in rows.iter().zip(picks) {
                    out[row] = pick;
                }
            }
            None => return Err(SamplingError::PairingInfeasible { label }),
        }
    }
    Ok(out)
}

fn try_assign_class(
    anchors: &[usize],
    rows: &[usize],
    members: &[usize],
    base: Option<&HashSet<usize>>,
    fallback: bool,
    rng: &mut impl Rng,
) -> Option<Vec<usize>> {
    let mut used: HashSet<usize> = base.cloned().unwrap_or_default();
    let mut picks = Vec::with_capacity(rows.len());
    for &row in rows {
        let anchor = anchors[row];
        if members.len() == 1 {
            // Singleton class: the exact pair is the defined fallback.
            picks.push(anchor);
            used.insert(anchor);
            continue;
        }
        let candidates: Vec<usize> =
            members.iter().copied().filter(|&m| m != anchor && !used.contains(&m)).collect();
        let pick = if candidates.is_empty() {
            if !fallback {
                return None;
            }
            // Starvation means every other member is taken, and taken ids
            // outnumber prior rows otherwise, so the anchor itself is free.
            debug_assert!(!used.contains(&anchor));
            anchor
        } else {
            candidates[rng.gen_range(0..candidates.len())]
        };
        picks.push(pick);
        used.insert(pick);
    }
    Some(picks)
}

/// All batch plans of one epoch.
///
/// Deterministic given `(cfg.seed, epoch)`. The permutation-driven
/// strategies (`Random`, the soft-positive family) chunk one seeded
/// permutation of all ids into `floor(N / B)` plans, dropping the trailing
/// partial chunk, so every epoch visits each sample's a-side at most once.
/// `EasyNegative` draws `floor(C / B)` independent class batches and
/// `HardNegative` draws `floor(N / B)` independent single-class batches,
/// matching the per-epoch budget of the permutation strategies.
pub fn plan_epoch(
    ds: &Dataset,
    cfg: &SamplerConfig,
    epoch: u64,
) -> Result<Vec<BatchPlan>, SamplingError> {
    cfg.validate(ds)?;
    let b = cfg.batch_size;
    let source = cfg.effective_source();
    let step_rng = |step: usize| rng::stream(cfg.seed, &[rng::T_STEP, epoch, step as u64]);

    let mut plans = match cfg.strategy {
        Strategy::Random | Strategy::SoftPositive | Strategy::SoftPositiveMix(_) | Strategy::PlSoftPositive => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut rng::stream(cfg.seed, &[rng::T_EPOCH_ORDER, epoch]));
            let steps = ds.len() / b;
            let mut plans = Vec::with_capacity(steps);
            for step in 0..steps {
                let anchors = &order[step * b..(step + 1) * b];
                let mut r = step_rng(step);
                let plan = match cfg.strategy {
                    Strategy::Random => BatchPlan::new(
                        Strategy::Random,
                        anchors.iter().map(|&i| (i, i)).collect(),
                    ),
                    Strategy::SoftPositive | Strategy::PlSoftPositive => {
                        let soft = vec![true; anchors.len()];
                        let vs =
                            assign_soft_partners(ds, source, anchors, &soft, false, &mut r)?;
                        BatchPlan::new(
                            cfg.strategy,
                            anchors.iter().copied().zip(vs).collect(),
                        )
                    }
                    Strategy::SoftPositiveMix(p) => {
                        let soft: Vec<bool> =
                            (0..anchors.len()).map(|_| r.gen::<f64>() < p).collect();
                        let vs = assign_soft_partners(ds, source, anchors, &soft, true, &mut r)?;
                        BatchPlan::new(
                            cfg.strategy,
                            anchors.iter().copied().zip(vs).collect(),
                        )
                    }
                    _ => unreachable!(),
                };
                plans.push(plan);
            }
            plans
        }
        Strategy::EasyNegative => {
            let steps = ds.num_classes() / b;
            (0..steps)
                .map(|step| sample_easy_negative(ds, b, source, &mut step_rng(step)))
                .collect::<Result<Vec<_>, _>>()?
        }
        Strategy::HardNegative => {
            let steps = ds.len() / b;
            (0..steps)
                .map(|step| sample_hard_negative(ds, b, source, &mut step_rng(step)))
                .collect::<Result<Vec<_>, _>>()?
        }
    };
    for (step, plan) in plans.iter_mut().enumerate() {
        plan.epoch = epoch;
        plan.step = step as u64;
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthSpec};

    fn ds(classes: usize, per_class: usize) -> Dataset {
        generate_synthetic(&SynthSpec {
            num_classes: classes,
            samples_per_class: per_class,
            latent_dim: 4,
            dim_a: 4,
            dim_b: 4,
            seed: 11,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    fn r(seed: u64) -> rand_chacha::ChaCha8Rng {
        use rand_chacha::rand_core::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn strategy_json_forms() {
        assert_eq!(serde_json::to_string(&Strategy::Random).unwrap(), r#""random""#);
        assert_eq!(serde_json::to_string(&Strategy::EasyNegative).unwrap(), r#""easy-negative""#);
        assert_eq!(
            serde_json::to_string(&Strategy::SoftPositiveMix(0.5)).unwrap(),
            r#"{"soft-positive-mix":0.5}"#
        );
        let back: Strategy = serde_json::from_str(r#"{"soft-positive-mix":0.25}"#).unwrap();
        assert_eq!(back, Strategy::SoftPositiveMix(0.25));
        assert_eq!(Strategy::SoftPositiveMix(0.5).to_string(), "soft-positive-mix-50");
    }

    #[test]
    fn random_draws_distinct_exact_pairs() {
        let d = ds(3, 4);
        let plan = sample_random(&d, 6, &mut r(0)).unwrap();
        assert_eq!(plan.batch_size(), 6);
        plan.verify(&d, LabelSource::GroundTruth).unwrap();
        // Deterministic under the same stream.
        let again = sample_random(&d, 6, &mut r(0)).unwrap();
        assert_eq!(plan, again);
        assert!(matches!(
            sample_random(&d, 13, &mut r(0)),
            Err(SamplingError::BatchTooLarge { requested: 13, available: 12 })
        ));
    }

    #[test]
    fn easy_negative_spans_distinct_classes() {
        let d = ds(5, 3);
        let plan = sample_easy_negative(&d, 4, LabelSource::GroundTruth, &mut r(1)).unwrap();
        plan.verify(&d, LabelSource::GroundTruth).unwrap();
        assert!(matches!(
            sample_easy_negative(&d, 6, LabelSource::GroundTruth, &mut r(1)),
            Err(SamplingError::MoreClassesRequestedThanExist { requested: 6, available: 5 })
        ));
    }

    #[test]
    fn hard_negative_stays_in_one_class() {
        let d = ds(3, 5);
        let plan = sample_hard_negative(&d, 4, LabelSource::GroundTruth, &mut r(2)).unwrap();
        plan.verify(&d, LabelSource::GroundTruth).unwrap();
        assert!(matches!(
            sample_hard_negative(&d, 6, LabelSource::GroundTruth, &mut r(2)),
            Err(SamplingError::NoClassLargeEnough { requested: 6, largest: 5 })
        ));
    }

    #[test]
    fn soft_positive_always_pairs_across_instances() {
        // Small enough that conflicts are common: every batch must still
        // consist of same-class, different-instance pairs.
        let d = ds(2, 3);
        let mut rng = r(3);
        let mut cross = 0usize;
        let mut total = 0usize;
        for _ in 0..10_000 {
            let plan = sample_soft_positive(&d, 2, LabelSource::GroundTruth, &mut rng).unwrap();
            plan.verify(&d, LabelSource::GroundTruth).unwrap();
            for (a, v) in plan.pairs {
                total += 1;
                if a != v {
                    cross += 1;
                }
            }
        }
        // No singleton classes here, so the fallback can never fire.
        assert_eq!(cross, total);
    }

    #[test]
    fn soft_positive_singleton_falls_back_to_exact_pair() {
        let d = ds(4, 1);
        let plan = sample_soft_positive(&d, 3, LabelSource::GroundTruth, &mut r(4)).unwrap();
        for (a, v) in &plan.pairs {
            assert_eq!(a, v);
        }
        plan.verify(&d, LabelSource::GroundTruth).unwrap();
    }

    #[test]
    fn soft_positive_survives_whole_class_batches() {
        // Batch equal to the whole dataset forces a within-class
        // derangement; repeated draws must never fail or repeat a v-id.
        let d = ds(2, 3);
        let mut rng = r(5);
        for _ in 0..2_000 {
            let plan = sample_soft_positive(&d, 6, LabelSource::GroundTruth, &mut rng).unwrap();
            plan.verify(&d, LabelSource::GroundTruth).unwrap();
        }
    }

    #[test]
    fn mix_probability_extremes_and_middle() {
        let d = ds(2, 3);
        let mut rng = r(6);
        let zero = sample_soft_positive_mix(&d, 4, 0.0, LabelSource::GroundTruth, &mut rng).unwrap();
        assert!(zero.pairs.iter().all(|(a, v)| a == v));

        // In this dataset a soft row never degrades (partners always
        // available), so a != v exactly when the row drew soft.
        let mut soft_rows = 0usize;
        let mut rows = 0usize;
        for _ in 0..10_000 {
            let plan =
                sample_soft_positive_mix(&d, 2, 0.5, LabelSource::GroundTruth, &mut rng).unwrap();
            plan.verify(&d, LabelSource::GroundTruth).unwrap();
            for (a, v) in plan.pairs {
                rows += 1;
                if a != v {
                    soft_rows += 1;
                }
            }
        }
        let frac = soft_rows as f64 / rows as f64;
        // 3 sigma around p = 0.5 over 20k Bernoulli rows.
        assert!((frac - 0.5).abs() < 0.011, "soft fraction {frac}");

        let one = sample_soft_positive_mix(&d, 4, 1.0, LabelSource::GroundTruth, &mut rng).unwrap();
        assert!(one.pairs.iter().all(|(a, v)| a != v));

        assert!(matches!(
            sample_soft_positive_mix(&d, 4, 1.5, LabelSource::GroundTruth, &mut rng),
            Err(SamplingError::InvalidConfig(_))
        ));
    }

    #[test]
    fn random_collision_rate_matches_closed_form() {
        // P(batch of B distinct ids has no same-class pair) =
        // choose(C, B) * M^B / choose(C*M, B) for balanced classes.
        let d = ds(4, 5);
        let b = 3usize;
        let choose = |n: usize, k: usize| -> f64 {
            let mut v = 1.0;
            for i in 0..k {
                v *= (n - i) as f64 / (i + 1) as f64;
            }
            v
        };
        let p_clean = choose(4, b) * (5f64).powi(b as i32) / choose(20, b);
        let trials = 10_000;
        let mut rng = r(7);
        let mut clean = 0usize;
        for _ in 0..trials {
            let plan = sample_random(&d, b, &mut rng).unwrap();
            let mut labels: Vec<usize> =
                plan.pairs.iter().map(|&(a, _)| d.sample(a).label).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() == b {
                clean += 1;
            }
        }
        let observed = clean as f64 / trials as f64;
        let sigma = (p_clean * (1.0 - p_clean) / trials as f64).sqrt();
        assert!(
            (observed - p_clean).abs() <= 3.0 * sigma,
            "observed {observed}, expected {p_clean} within {}",
            3.0 * sigma
        );

        // Degenerate case: four distinct ids in two classes must always
        // contain a same-class pair.
        let d2 = ds(2, 5);
        for _ in 0..1_000 {
            let plan = sample_random(&d2, 4, &mut rng).unwrap();
            let mut labels: Vec<usize> =
                plan.pairs.iter().map(|&(a, _)| d2.sample(a).label).collect();
            labels.sort_unstable();
            labels.dedup();
            assert!(labels.len() < 4);
        }
    }

    #[test]
    fn pl_matches_soft_positive_when_pseudo_equals_truth() {
        let d = ds(3, 4);
        let labels: Vec<usize> = d.samples().iter().map(|s| s.label).collect();
        let pl_ds = d.with_pseudo_labels(&labels).unwrap();

        let soft_cfg = SamplerConfig::new(Strategy::SoftPositive, 4, 77);
        let pl_cfg = SamplerConfig::new(Strategy::PlSoftPositive, 4, 77);
        for epoch in 0..3 {
            let soft = plan_epoch(&pl_ds, &soft_cfg, epoch).unwrap();
            let pl = plan_epoch(&pl_ds, &pl_cfg, epoch).unwrap();
            assert_eq!(soft.len(), pl.len());
            for (s, p) in soft.iter().zip(&pl) {
                assert_eq!(s.pairs, p.pairs);
                assert_eq!(p.strategy, Strategy::PlSoftPositive);
            }
        }
    }

    #[test]
    fn pl_groups_by_pseudo_not_truth() {
        let d = ds(2, 4);
        // Pseudo-labels swap the two classes' second halves, so pseudo
        // groups mix true labels.
        let pseudo: Vec<usize> = d
            .samples()
            .iter()
            .map(|s| if s.id % 4 >= 2 { 1 - s.label } else { s.label })
            .collect();
        let pl_ds = d.with_pseudo_labels(&pseudo).unwrap();
        let mut rng = r(8);
        let mut crossed_truth = false;
        for _ in 0..200 {
            let plan = sample_pl_soft_positive(&pl_ds, 4, &mut rng).unwrap();
            plan.verify(&pl_ds, LabelSource::Pseudo).unwrap();
            for &(a, v) in &plan.pairs {
                assert_eq!(pl_ds.sample(a).pseudo_label, pl_ds.sample(v).pseudo_label);
                if pl_ds.sample(a).label != pl_ds.sample(v).label {
                    crossed_truth = true;
                }
            }
        }
        assert!(crossed_truth, "pseudo grouping never disagreed with ground truth");
    }

    #[test]
    fn pl_without_pseudo_labels_fails() {
        let d = ds(2, 4);
        assert!(matches!(
            sample_pl_soft_positive(&d, 4, &mut r(9)),
            Err(SamplingError::PseudoLabelsMissing)
        ));
        let cfg = SamplerConfig::new(Strategy::PlSoftPositive, 4, 0);
        assert!(matches!(plan_epoch(&d, &cfg, 0), Err(SamplingError::PseudoLabelsMissing)));
    }

    #[test]
    fn epoch_permutation_covers_every_id_once() {
        let d = ds(3, 4);
        let cfg = SamplerConfig::new(Strategy::Random, 4, 21);
        let plans = plan_epoch(&d, &cfg, 0).unwrap();
        assert_eq!(plans.len(), 3);
        let mut seen: Vec<usize> = plans.iter().flat_map(|p| p.pairs.iter().map(|&(a, _)| a)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        for (i, p) in plans.iter().enumerate() {
            assert_eq!(p.epoch, 0);
            assert_eq!(p.step, i as u64);
        }
        // Trailing partial chunk is dropped.
        let cfg5 = SamplerConfig::new(Strategy::Random, 5, 21);
        let plans5 = plan_epoch(&d, &cfg5, 0).unwrap();
        assert_eq!(plans5.len(), 2);
    }

    #[test]
    fn epochs_differ_and_are_reproducible() {
        let d = ds(3, 8);
        for strategy in [
            Strategy::Random,
            Strategy::EasyNegative,
            Strategy::HardNegative,
            Strategy::SoftPositive,
            Strategy::SoftPositiveMix(0.5),
        ] {
            let cfg = SamplerConfig::new(strategy, 2, 5);
            let e0 = plan_epoch(&d, &cfg, 0).unwrap();
            let e0_again = plan_epoch(&d, &cfg, 0).unwrap();
            let e1 = plan_epoch(&d, &cfg, 1).unwrap();
            assert_eq!(e0, e0_again);
            assert_ne!(e0, e1, "{strategy} produced identical epochs 0 and 1");
            for plan in e0 {
                plan.verify(&d, LabelSource::GroundTruth).unwrap();
            }
        }
    }

    #[test]
    fn easy_negative_epoch_budget_is_class_count() {
        let d = ds(6, 3);
        let cfg = SamplerConfig::new(Strategy::EasyNegative, 2, 5);
        let plans = plan_epoch(&d, &cfg, 0).unwrap();
        assert_eq!(plans.len(), 3);
    }

    #[test]
    fn plan_json_roundtrip() {
        let d = ds(2, 3);
        let plan = sample_random(&d, 3, &mut r(10)).unwrap();
        let line = plan.to_json_line();
        assert!(!line.contains('\n'));
        let back: BatchPlan = serde_json::from_str(&line).unwrap();
        assert_eq!(plan, back);
    }
}
