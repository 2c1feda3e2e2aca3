//! Sweep driver for the strategy comparison: generate data, pretrain one
//! encoder pair per (strategy, seed) cell, score both downstream protocols
//! and aggregate into a table with Welch significance against the random
//! baseline.
//!
//! Every cell derives its own seeds from the run seed, so cells are fully
//! independent and the whole sweep is a pure function of the config.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{generate_synthetic, split, Dataset, DatasetError, SynthSpec};
use crate::eval::{
    evaluate, supervised_baseline, EvalConfig, EvalError, EvalMode, EvalReport, ReportMode,
};
use crate::pseudolabel::{corrupt_labels, PseudoLabelError};
use crate::rng;
use crate::sampling::{LabelSource, SamplerConfig, Strategy};
use crate::stats::{mean, sample_std, welch_t_test};
use crate::trainer::{pretrain, TrainConfig, TrainerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    PseudoLabel(#[from] PseudoLabelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainParams {
    pub epochs: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub temperature: f64,
    /// Requested batch size; each cell caps it at what its strategy can
    /// support on the generated data (see `effective_batch`).
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
}

impl Default for PretrainParams {
    fn default() -> Self {
        PretrainParams {
            epochs: 50,
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            temperature: 0.07,
            batch_size: 32,
            hidden: vec![64],
            embed_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    pub epochs: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_fraction: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { epochs: 40, learning_rate: 0.01, batch_size: 32, train_fraction: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub data: SynthSpec,
    pub seeds: Vec<u64>,
    pub strategies: Vec<Strategy>,
    /// Pseudo-label quality for pl-soft-positive cells: probability that a
    /// sample's pseudo-label matches its true label.
    pub pl_keep: f64,
    /// Train share of the downstream split; pretraining sees the full
    /// (unlabeled) corpus.
    pub downstream_split: f64,
    pub pretrain: PretrainParams,
    pub eval: EvalParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::desk()
    }
}

impl ExperimentConfig {
    /// Small-data profile: runs the full sweep in minutes on one core.
    pub fn desk() -> Self {
        ExperimentConfig {
            data: SynthSpec::default(),
            seeds: vec![0, 1, 2, 3, 4],
            strategies: vec![
                Strategy::Random,
                Strategy::EasyNegative,
                Strategy::HardNegative,
                Strategy::SoftPositive,
                Strategy::SoftPositiveMix(0.5),
                Strategy::PlSoftPositive,
            ],
            pl_keep: 0.7,
            downstream_split: 0.8,
            pretrain: PretrainParams::default(),
            eval: EvalParams::default(),
        }
    }

    /// Full-scale profile matching the original experiment shape: 309
    /// balanced classes of 123 samples, batch 309 (hard-negative cells cap
    /// themselves at the class size, 123), lr 1e-4, 100 epochs. Hours of
    /// CPU time; use `desk` unless you mean it.
    pub fn paper() -> Self {
        ExperimentConfig {
            data: SynthSpec {
                num_classes: 309,
                samples_per_class: 123,
                latent_dim: 16,
                dim_a: 48,
                dim_b: 48,
                ..SynthSpec::default()
            },
            pretrain: PretrainParams {
                epochs: 100,
                learning_rate: 1e-4,
                batch_size: 309,
                hidden: vec![128, 64],
                embed_dim: 32,
                ..PretrainParams::default()
            },
            eval: EvalParams {
                epochs: 100,
                batch_size: 64,
                ..EvalParams::default()
            },
            ..ExperimentConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::InvalidConfig("no seeds given".into()));
        }
        if self.strategies.is_empty() {
            return Err(ExperimentError::InvalidConfig("no strategies given".into()));
        }
        if !(0.0..=1.0).contains(&self.pl_keep) {
            return Err(ExperimentError::InvalidConfig(format!(
                "pl_keep must lie in [0, 1], got {}",
                self.pl_keep
            )));
        }
        if !(self.downstream_split > 0.0 && self.downstream_split < 1.0) {
            return Err(ExperimentError::InvalidConfig(format!(
                "downstream_split must lie in (0, 1), got {}",
                self.downstream_split
            )));
        }
        Ok(())
    }
}

/// Largest batch a strategy can draw from `ds`: easy-negative needs one
/// class per row, hard-negative one instance per row from a single class.
pub fn effective_batch(requested: usize, strategy: Strategy, ds: &Dataset) -> usize {
    let cap = match strategy {
        Strategy::EasyNegative => ds.num_classes(),
        Strategy::HardNegative => ds.max_class_size(),
        _ => ds.len(),
    };
    requested.min(cap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: Strategy,
    pub run_seed: u64,
    pub final_loss: f64,
    pub linear: EvalReport,
    pub finetune: EvalReport,
}

/// Pretrains one (strategy, seed) cell and evaluates it both ways.
pub fn run_cell(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    run_seed: u64,
) -> Result<CellResult, ExperimentError> {
    cfg.validate()?;
    let ds = cell_dataset(cfg, strategy, run_seed)?;
    let (train, test) = split(&ds, cfg.downstream_split, rng::derive(run_seed, &[rng::T_SPLIT]))?;
    let ck = pretrain(&ds, &train_config(cfg, strategy, &ds, run_seed))?;
    let name = strategy.to_string();
    let linear = evaluate(
        &ck.encoder_a,
        &train,
        &test,
        &eval_config(cfg, EvalMode::LinearEval, run_seed, rng::T_EVAL_LINEAR),
        &name,
    )?;
    let finetune = evaluate(
        &ck.encoder_a,
        &train,
        &test,
        &eval_config(cfg, EvalMode::Finetune, run_seed, rng::T_EVAL_FINETUNE),
        &name,
    )?;
    Ok(CellResult {
        strategy,
        run_seed,
        final_loss: ck.history.last().map(|s| s.mean_loss).unwrap_or(f64::NAN),
        linear,
        finetune,
    })
}

/// Labeled end-to-end baseline on the same data as the cell runs.
pub fn run_supervised(cfg: &ExperimentConfig, run_seed: u64) -> Result<EvalReport, ExperimentError> {
    cfg.validate()?;
    let ds = cell_dataset(cfg, Strategy::Random, run_seed)?;
    let (train, test) = split(&ds, cfg.downstream_split, rng::derive(run_seed, &[rng::T_SPLIT]))?;
    let mut dims = vec![ds.dim_a()];
    dims.extend_from_slice(&cfg.pretrain.hidden);
    dims.push(cfg.pretrain.embed_dim);
    let ecfg = eval_config(cfg, EvalMode::Finetune, run_seed, rng::T_SUPERVISED);
    Ok(supervised_baseline(&dims, &train, &test, &ecfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub supervised: Vec<EvalReport>,
}

/// Runs every strategy in `cfg.strategies` across every seed, plus the
/// supervised baseline per seed.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, ExperimentError> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(cfg.strategies.len() * cfg.seeds.len());
    for &strategy in &cfg.strategies {
        for &seed in &cfg.seeds {
            cells.push(run_cell(cfg, strategy, seed)?);
        }
    }
    let supervised = cfg
        .seeds
        .iter()
        .map(|&seed| run_supervised(cfg, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult { config: cfg.clone(), cells, supervised })
}

impl SweepResult {
    pub fn reports(&self) -> Vec<EvalReport> {
        let mut out = Vec::with_capacity(self.cells.len() * 2 + self.supervised.len());
        for c in &self.cells {
            out.push(c.linear.clone());
            out.push(c.finetune.clone());
        }
        out.extend(self.supervised.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub linear_mean: Option<f64>,
    pub linear_std: Option<f64>,
    pub linear_p_vs_random: Option<f64>,
    pub finetune_mean: Option<f64>,
    pub finetune_std: Option<f64>,
    pub finetune_p_vs_random: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

fn strategy_rank(name: &str) -> u8 {
    match name {
        "random" => 0,
        "easy-negative" => 1,
        "hard-negative" => 2,
        "soft-positive" => 3,
        s if s.starts_with("soft-positive-mix") => 4,
        "pl-soft-positive" => 5,
        "supervised" => 7,
        _ => 6,
    }
}

/// Groups reports by (strategy, protocol) and summarizes each strategy as
/// one row. The supervised baseline is a single protocol, so its numbers
/// fill both column groups. Rows follow the table order of the original
/// comparison; unknown strategy names sort alphabetically before the
/// supervised row.
pub fn aggregate(reports: &[EvalReport]) -> SweepSummary {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(u8, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        let key = (strategy_rank(&r.strategy), r.strategy.clone());
        let entry = groups.entry(key).or_default();
        match r.mode {
            ReportMode::Linear => entry.0.push(r.accuracy),
            ReportMode::Finetune => entry.1.push(r.accuracy),
            ReportMode::Supervised => {
                entry.0.push(r.accuracy);
                entry.1.push(r.accuracy);
            }
        }
    }
    let baseline = groups
        .get(&(strategy_rank("random"), "random".to_string()))
        .cloned();
    let rows = groups
        .iter()
        .map(|((_, name), (linear, finetune))| {
            let p = |xs: &[f64], side: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
                if name == "random" {
                    return None;
                }
                let base = side(baseline.as_ref()?);
                welch_t_test(xs, base).ok().map(|w| w.p_value)
            };
            SummaryRow {
                strategy: name.clone(),
                runs: linear.len().max(finetune.len()),
                linear_mean: summary_mean(linear),
                linear_std: summary_std(linear),
                linear_p_vs_random: p(linear, |b| &b.0),
                finetune_mean: summary_mean(finetune),
                finetune_std: summary_std(finetune),
                finetune_p_vs_random: p(finetune, |b| &b.1),
            }
        })
        .collect();
    SweepSummary { rows }
}

fn summary_mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| mean(xs))
}

fn summary_std(xs: &[f64]) -> Option<f64> {
    (xs.len() >= 2).then(|| sample_std(xs))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Four-decimal CSV, one row per strategy. Pure function of the summary,
/// so reruns with the same seeds are byte-identical.
pub fn render_csv(summary: &SweepSummary) -> String {
    let mut out = String::from(
        "strategy,runs,linear_mean,linear_std,linear_p_vs_random,\
         finetune_mean,finetune_std,finetune_p_vs_random\n",
    );
    for r in &summary.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.strategy,
            r.runs,
            fmt_opt(r.linear_mean),
            fmt_opt(r.linear_std),
            fmt_opt(r.linear_p_vs_random),
            fmt_opt(r.finetune_mean),
            fmt_opt(r.finetune_std),
            fmt_opt(r.finetune_p_vs_random),
        ));
    }
    out
}

/// Aligned text table; `*` marks Welch p < 0.05 against the random row.
pub fn render_table(summary: &SweepSummary) -> String {
    let cell = |m: Option<f64>, s: Option<f64>, p: Option<f64>| -> String {
        let Some(m) = m else { return String::new() };
        let body = match s {
            Some(s) => format!("{m:.4} +- {s:.4}"),
            None => format!("{m:.4}"),
        };
        let star = if p.is_some_and(|p| p < 0.05) { "*" } else { "" };
        format!("{body}{star}")
    };
    let mut out = format!("{:<24} {:>4}  {:<20} {:<20}\n", "strategy", "runs", "linear", "finetune");
    for r in &summary.rows {
        out.push_str(&format!(
            "{:<24} {:>4}  {:<20} {:<20}\n",
            r.strategy,
            r.runs,
            cell(r.linear_mean, r.linear_std, r.linear_p_vs_random),
            cell(r.finetune_mean, r.finetune_std, r.finetune_p_vs_random),
        ));
    }
    out
}

fn cell_dataset(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    run_seed: u64,
) -> Result<Dataset, ExperimentError> {
    let mut spec = cfg.data.clone();
    spec.seed = rng::derive(cfg.data.seed, &[rng::T_DATA, run_seed]);
    let ds = generate_synthetic(&spec)?;
    if matches!(strategy, Strategy::PlSoftPositive) {
        Ok(corrupt_labels(&ds, cfg.pl_keep, rng::derive(run_seed, &[rng::T_PL]))?)
    } else {
        Ok(ds)
    }
}

fn train_config(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    ds: &Dataset,
    run_seed: u64,
) -> TrainConfig {
    let assemble = |input: usize| {
        let mut dims = vec![input];
        dims.extend_from_slice(&cfg.pretrain.hidden);
        dims.push(cfg.pretrain.embed_dim);
        dims
    };
    TrainConfig {
        epochs: cfg.pretrain.epochs,
        learning_rate: cfg.pretrain.learning_rate,
        weight_decay: cfg.pretrain.weight_decay,
        temperature: cfg.pretrain.temperature,
        encoder_a_dims: assemble(ds.dim_a()),
        encoder_b_dims: assemble(ds.dim_b()),
        sampler: SamplerConfig {
            strategy,
            batch_size: effective_batch(cfg.pretrain.batch_size, strategy, ds),
            seed: rng::derive(run_seed, &[rng::T_SAMPLER]),
            label_source: LabelSource::GroundTruth,
        },
        seed: rng::derive(run_seed, &[rng::T_TRAIN]),
    }
}

fn eval_config(cfg: &ExperimentConfig, mode: EvalMode, run_seed: u64, tag: u64) -> EvalConfig {
    EvalConfig {
        mode,
        epochs: cfg.eval.epochs,
        learning_rate: cfg.eval.learning_rate,
        batch_size: cfg.eval.batch_size,
        train_fraction: cfg.eval.train_fraction,
        seed: rng::derive(run_seed, &[tag]),
    }
}
