//! Command line front end. Every command reads a JSON config, writes its
//! artifacts under `--out`, and reports failures as one JSON line on
//! stderr: exit 1 for a config problem, 2 for a runtime fault. Reruns
//! with the same config and seed produce byte-identical artifacts; the
//! only timestamps live in the sidecar `run.log`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use avclab_core::dataset::{generate_synthetic, load_dataset, save_dataset, split, SynthSpec};
use avclab_core::eval::{evaluate, supervised_baseline, EvalConfig, EvalMode};
use avclab_core::experiment::{aggregate, render_csv, render_table, ExperimentConfig};
use avclab_core::pseudolabel::{corrupt_labels, train_proxy, ProxyConfig, PseudoLabelError};
use avclab_core::sampling::plan_epoch;
use avclab_core::trainer::{
    load_checkpoint, pretrain, resume, save_checkpoint, TrainConfig, TrainerError,
};

#[derive(Parser)]
#[command(name = "avclab", version, about = "Two-modality contrastive pretraining experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generates a synthetic paired dataset (manifest plus feature blobs).
    GenerateData {
        /// JSON dataset spec; defaults to the profile's data settings.
        #[arg(long, conflicts_with = "profile")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Pretrains both towers on a dataset and writes a checkpoint.
    Pretrain {
        #[command(flatten)]
        args: JobArgs,
        /// Also writes every batch plan to plans.jsonl, one JSON per line.
        #[arg(long)]
        dump_plans: bool,
    },
    /// Attaches pseudo-labels to a dataset, by corruption or by proxy.
    PseudoLabel {
        #[command(flatten)]
        args: JobArgs,
    },
    /// Scores a frozen checkpoint with a trained affine head.
    LinearEval {
        #[command(flatten)]
        args: JobArgs,
    },
    /// Scores a checkpoint after joint head-and-encoder training.
    FinetuneEval {
        #[command(flatten)]
        args: JobArgs,
    },
    /// Trains a fresh encoder with labels only; no pretraining.
    Supervised {
        #[command(flatten)]
        args: JobArgs,
    },
    /// Runs the full strategy-by-seed grid plus the supervised baseline.
    Sweep {
        /// Full experiment config; defaults to the chosen profile.
        #[arg(long, conflicts_with = "profile")]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        profile: Option<Profile>,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the config's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Aggregates a directory of report JSONs into a CSV and a table.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct JobArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

/// `pretrain` config: where the data lives and how to train on it.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PretrainJob {
    dataset: PathBuf,
    train: TrainConfig,
    /// Checkpoint to continue from; its config hash must match.
    #[serde(default)]
    resume_from: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PseudoLabelJob {
    dataset: PathBuf,
    method: PseudoMethod,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
enum PseudoMethod {
    /// Oracle labels kept with probability `keep`, otherwise resampled
    /// uniformly over the other classes.
    Corrupt {
        keep: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Classifier trained on a labeled dataset's modality B, applied to
    /// the target corpus.
    Proxy {
        labeled: PathBuf,
        #[serde(default)]
        proxy: ProxyConfig,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalJob {
    dataset: PathBuf,
    checkpoint: PathBuf,
    /// Strategy name recorded in the report.
    #[serde(default = "default_label")]
    label: String,
    #[serde(default = "default_split")]
    split: f64,
    #[serde(default)]
    split_seed: u64,
    #[serde(default = "default_eval_epochs")]
    epochs: u64,
    #[serde(default = "default_eval_lr")]
    learning_rate: f64,
    #[serde(default = "default_eval_batch")]
    batch_size: usize,
    #[serde(default = "default_fraction")]
    train_fraction: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SupervisedJob {
    dataset: PathBuf,
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    #[serde(default = "default_embed")]
    embed_dim: usize,
    #[serde(default = "default_split")]
    split: f64,
    #[serde(default)]
    split_seed: u64,
    #[serde(default = "default_eval_epochs")]
    epochs: u64,
    #[serde(default = "default_eval_lr")]
    learning_rate: f64,
    #[serde(default = "default_eval_batch")]
    batch_size: usize,
    #[serde(default = "default_fraction")]
    train_fraction: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportJob {
    /// Directory of EvalReport JSON files, e.g. a sweep's cells/.
    reports: PathBuf,
}

fn default_label() -> String {
    "pretrained".into()
}
fn default_split() -> f64 {
    0.8
}
fn default_eval_epochs() -> u64 {
    40
}
fn default_eval_lr() -> f64 {
    0.01
}
fn default_eval_batch() -> usize {
    32
}
fn default_fraction() -> f64 {
    1.0
}
fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_embed() -> usize {
    32
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

fn config_err(message: impl ToString) -> Failure {
    Failure { kind: "config", message: message.to_string(), code: 1 }
}

fn runtime_err(message: impl ToString) -> Failure {
    Failure { kind: "runtime", message: message.to_string(), code: 2 }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(config_err(e)),
    };
    let started = Instant::now();
    let (name, out) = describe(&cli.command);
    let out = out.clone();
    match dispatch(cli.command) {
        Ok(()) => match log_run(&out, name, started) {
            Ok(()) => ExitCode::SUCCESS,
            Err(f) => fail(f),
        },
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "kind": f.kind, "message": f.message }));
    ExitCode::from(f.code)
}

fn describe(command: &Command) -> (&'static str, &PathBuf) {
    match command {
        Command::GenerateData { out, .. } => ("generate-data", out),
        Command::Pretrain { args, .. } => ("pretrain", &args.out),
        Command::PseudoLabel { args } => ("pseudo-label", &args.out),
        Command::LinearEval { args } => ("linear-eval", &args.out),
        Command::FinetuneEval { args } => ("finetune-eval", &args.out),
        Command::Supervised { args } => ("supervised", &args.out),
        Command::Sweep { out, .. } => ("sweep", out),
        Command::Report { out, .. } => ("report", out),
    }
}

/// Appends the only timestamped line any command produces.
fn log_run(out: &Path, name: &str, started: Instant) -> Result<(), Failure> {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_err(runtime_err)?
        .as_secs();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join("run.log"))
        .map_err(runtime_err)?;
    writeln!(f, "{now} {name} ok {:.2}s", started.elapsed().as_secs_f64()).map_err(runtime_err)
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenerateData { config, profile, out, seed } => {
            run_generate(config, profile, seed, &out)
        }
        Command::Pretrain { args, dump_plans } => run_pretrain(args, dump_plans),
        Command::PseudoLabel { args } => run_pseudo_label(args),
        Command::LinearEval { args } => run_eval(args, EvalMode::LinearEval),
        Command::FinetuneEval { args } => run_eval(args, EvalMode::Finetune),
        Command::Supervised { args } => run_supervised(args),
        Command::Sweep { config, profile, out, seed } => run_sweep_cmd(config, profile, seed, &out),
        Command::Report { config, out } => run_report(&config, &out),
    }
}

fn parse_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(runtime_err)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| runtime_err(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime_err)?;
    text.push('\n');
    write_text(path, &text)
}

fn run_generate(
    config: Option<PathBuf>,
    profile: Option<Profile>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut spec: SynthSpec = match (config, profile) {
        (Some(path), _) => parse_config(&path)?,
        (None, Some(Profile::Paper)) => ExperimentConfig::paper().data,
        _ => ExperimentConfig::desk().data,
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let ds = generate_synthetic(&spec).map_err(|e| match e {
        avclab_core::dataset::DatasetError::InvalidParameter(_) => config_err(e),
        _ => runtime_err(e),
    })?;
    ensure_dir(out)?;
    save_dataset(&ds, out).map_err(runtime_err)?;
    write_json(&out.join("spec.json"), &spec)
}

fn run_pretrain(args: JobArgs, dump_plans: bool) -> Result<(), Failure> {
    let mut job: PretrainJob = parse_config(&args.config)?;
    if let Some(s) = args.seed {
        job.train.seed = s;
    }
    let ds = load_dataset(&job.dataset).map_err(runtime_err)?;
    job.train.validate(&ds).map_err(config_err)?;
    let ck = match &job.resume_from {
        Some(path) => {
            let prev = load_checkpoint(path).map_err(runtime_err)?;
            resume(&ds, &job.train, &prev).map_err(|e| match e {
                TrainerError::InvalidConfig(_) | TrainerError::ConfigHashMismatch { .. } => {
                    config_err(e)
                }
                _ => runtime_err(e),
            })?
        }
        None => pretrain(&ds, &job.train).map_err(runtime_err)?,
    };
    ensure_dir(&args.out)?;
    save_checkpoint(&ck, &args.out.join("checkpoint.ckpt")).map_err(runtime_err)?;

    let mut history = String::from("epoch,mean_loss\n");
    for row in &ck.history {
        history.push_str(&format!("{},{}\n", row.epoch, row.mean_loss));
    }
    write_text(&args.out.join("history.csv"), &history)?;

    if dump_plans {
        let mut lines = String::new();
        for epoch in 0..job.train.epochs {
            let plans = plan_epoch(&ds, &job.train.sampler, epoch).map_err(runtime_err)?;
            for plan in &plans {
                lines.push_str(&serde_json::to_string(plan).map_err(runtime_err)?);
                lines.push('\n');
            }
        }
        write_text(&args.out.join("plans.jsonl"), &lines)?;
    }
    Ok(())
}

fn run_pseudo_label(args: JobArgs) -> Result<(), Failure> {
    let mut job: PseudoLabelJob = parse_config(&args.config)?;
    if let Some(s) = args.seed {
        match &mut job.method {
            PseudoMethod::Corrupt { seed, .. } => *seed = s,
            PseudoMethod::Proxy { proxy, .. } => proxy.seed = s,
        }
    }
    let classify = |e: PseudoLabelError| match e {
        PseudoLabelError::InvalidParameter(_) => config_err(e),
        _ => runtime_err(e),
    };
    let ds = load_dataset(&job.dataset).map_err(runtime_err)?;
    let (labeled, summary) = match job.method {
        PseudoMethod::Corrupt { keep, seed } => {
            let labeled = corrupt_labels(&ds, keep, seed).map_err(classify)?;
            (labeled, serde_json::json!({ "method": "corrupt", "keep": keep }))
        }
        PseudoMethod::Proxy { labeled, proxy } => {
            let source = load_dataset(&labeled).map_err(runtime_err)?;
            let outcome = train_proxy(&source, &ds, &proxy).map_err(classify)?;
            (
                outcome.dataset,
                serde_json::json!({ "method": "proxy", "agreement": outcome.agreement }),
            )
        }
    };
    ensure_dir(&args.out)?;
    save_dataset(&labeled, &args.out).map_err(runtime_err)?;
    write_json(&args.out.join("pseudolabel.json"), &summary)
}

fn run_eval(args: JobArgs, mode: EvalMode) -> Result<(), Failure> {
    let mut job: EvalJob = parse_config(&args.config)?;
    if let Some(s) = args.seed {
        job.seed = s;
    }
    if !(job.split > 0.0 && job.split < 1.0) {
        return Err(config_err(format!("split must lie in (0, 1), got {}", job.split)));
    }
    let cfg = EvalConfig {
        mode,
        epochs: job.epochs,
        learning_rate: job.learning_rate,
        batch_size: job.batch_size,
        train_fraction: job.train_fraction,
        seed: job.seed,
    };
    cfg.validate().map_err(config_err)?;
    let ds = load_dataset(&job.dataset).map_err(runtime_err)?;
    let ck = load_checkpoint(&job.checkpoint).map_err(runtime_err)?;
    let (train, test) = split(&ds, job.split, job.split_seed).map_err(runtime_err)?;
    let report = evaluate(&ck.encoder_a, &train, &test, &cfg, &job.label).map_err(runtime_err)?;
    ensure_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)
}

fn run_supervised(args: JobArgs) -> Result<(), Failure> {
    let mut job: SupervisedJob = parse_config(&args.config)?;
    if let Some(s) = args.seed {
        job.seed = s;
    }
    if !(job.split > 0.0 && job.split < 1.0) {
        return Err(config_err(format!("split must lie in (0, 1), got {}", job.split)));
    }
    let cfg = EvalConfig {
        mode: EvalMode::LinearEval,
        epochs: job.epochs,
        learning_rate: job.learning_rate,
        batch_size: job.batch_size,
        train_fraction: job.train_fraction,
        seed: job.seed,
    };
    cfg.validate().map_err(config_err)?;
    let ds = load_dataset(&job.dataset).map_err(runtime_err)?;
    let (train, test) = split(&ds, job.split, job.split_seed).map_err(runtime_err)?;
    let mut dims = vec![ds.dim_a()];
    dims.extend_from_slice(&job.hidden);
    dims.push(job.embed_dim);
    let report = supervised_baseline(&dims, &train, &test, &cfg).map_err(runtime_err)?;
    ensure_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)
}

fn run_sweep_cmd(
    config: Option<PathBuf>,
    profile: Option<Profile>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), Failure> {
    let mut cfg: ExperimentConfig = match (config, profile) {
        (Some(path), _) => parse_config(&path)?,
        (None, Some(Profile::Paper)) => ExperimentConfig::paper(),
        _ => ExperimentConfig::desk(),
    };
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    cfg.validate().map_err(config_err)?;
    let result = avclab_core::experiment::run_sweep(&cfg).map_err(runtime_err)?;

    ensure_dir(out)?;
    let cells = out.join("cells");
    ensure_dir(&cells)?;
    write_json(&out.join("config.json"), &cfg)?;
    let mut losses = String::from("strategy,seed,final_loss\n");
    for cell in &result.cells {
        let stem = format!("{}-seed{}", cell.strategy, cell.run_seed);
        write_json(&cells.join(format!("{stem}-linear.json")), &cell.linear)?;
        write_json(&cells.join(format!("{stem}-finetune.json")), &cell.finetune)?;
        losses.push_str(&format!("{},{},{}\n", cell.strategy, cell.run_seed, cell.final_loss));
    }
    for (run_seed, report) in cfg.seeds.iter().zip(&result.supervised) {
        write_json(&cells.join(format!("supervised-seed{run_seed}.json")), report)?;
    }
    write_text(&out.join("losses.csv"), &losses)?;

    let summary = aggregate(&result.reports());
    write_text(&out.join("summary.csv"), &render_csv(&summary))?;
    write_text(&out.join("summary.txt"), &render_table(&summary))
}

fn run_report(config: &Path, out: &Path) -> Result<(), Failure> {
    let job: ReportJob = parse_config(config)?;
    let entries = fs::read_dir(&job.reports)
        .map_err(|e| runtime_err(format!("{}: {e}", job.reports.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(runtime_err(format!("no report JSONs in {}", job.reports.display())));
    }
    let mut reports = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = fs::read_to_string(path)
            .map_err(|e| runtime_err(format!("{}: {e}", path.display())))?;
        reports.push(
            serde_json::from_str(&text)
                .map_err(|e| runtime_err(format!("{}: {e}", path.display())))?,
        );
    }
    let summary = aggregate(&reports);
    ensure_dir(out)?;
    write_text(&out.join("summary.csv"), &render_csv(&summary))?;
    write_text(&out.join("summary.txt"), &render_table(&summary))
}
