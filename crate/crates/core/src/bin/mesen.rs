use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mesen::data::{
    generate_synthetic, ingest_csv, partition_users, sample_few_labels, split_by_user,
    write_csv_layout, IngestOptions, SynthSpec,
};
use mesen::eval::{
    evaluate, export_features, run_grid, write_loss_history, ExperimentGrid, GridData, Method,
};
use mesen::nets::{Checkpoint, FinetunedModel};
use mesen::pipeline::{finetune, pretrain_variant, train_supervised_baseline, PretrainVariant};
use mesen::{default_config, Error, PairedDataset, Result, TrainConfig};

const DEFAULT_FEATURE_DIM: usize = 64;

#[derive(Parser)]
#[command(name = "mesen", version, about = "Multimodal contrastive pretraining and few-label fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset as a CSV directory.
    GenData(GenData),
    /// Pretrain per-modality encoders on a paired dataset (labels ignored).
    Pretrain(Pretrain),
    /// Fine-tune one pretrained encoder with a few labels per class.
    Finetune(Finetune),
    /// Train the same architecture from scratch on the same few labels.
    Baseline(Baseline),
    /// Accuracy and macro F1 of a trained model on a labeled dataset.
    Eval(Eval),
    /// Run methods × label budgets × modalities × repetitions.
    Grid(Grid),
    /// Write projector outputs of one modality as CSV.
    ExportFeatures(ExportFeatures),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    classes: usize,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value_t = 20)]
    samples_per_user_per_class: usize,
    #[arg(long, default_value_t = 3)]
    channels: usize,
    #[arg(long, default_value_t = 32)]
    timesteps: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0.9)]
    correlation_strength: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DataArgs {
    /// CSV dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Window overlap when rows hold longer recordings.
    #[arg(long, default_value_t = 0)]
    overlap: usize,
}

impl DataArgs {
    fn load(&self) -> Result<PairedDataset> {
        ingest_csv(
            &self.data,
            None,
            &IngestOptions {
                overlap: self.overlap,
                class_count: None,
            },
        )
    }
}

#[derive(Args)]
struct Pretrain {
    #[command(flatten)]
    data: DataArgs,
    /// TOML file overriding default hyperparameters.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// mesen, intra_negatives, cmf_only, mpc_only or no_entropy.
    #[arg(long, default_value = "mesen")]
    variant: String,
    /// Also write the per-step loss breakdown as CSV.
    #[arg(long)]
    loss_history: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FewLabelArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    modality: String,
    #[arg(long)]
    labels_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Finetune {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    args: FewLabelArgs,
}

#[derive(Args)]
struct Baseline {
    #[command(flatten)]
    args: FewLabelArgs,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Defaults to the modality the model was trained on.
    #[arg(long)]
    modality: Option<String>,
}

#[derive(Args)]
struct Grid {
    #[command(flatten)]
    data: DataArgs,
    /// Separate labeled test set; without it, users are split off `--data`.
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Fraction of users held out for evaluation when no test set is given.
    #[arg(long, default_value_t = 0.3)]
    eval_fraction: f64,
    #[arg(long, value_delimiter = ',', default_value = "mesen,labeltrain")]
    methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    budgets: Vec<usize>,
    /// Defaults to the config's repetition count.
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated modality ids; all when omitted.
    #[arg(long, value_delimiter = ',')]
    modalities: Vec<String>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the results table as CSV.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExportFeatures {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    modality: String,
    #[arg(long)]
    out: PathBuf,
}

fn config_for(ds: &PairedDataset, file: Option<&Path>) -> Result<TrainConfig> {
    let base = default_config(ds.class_count, DEFAULT_FEATURE_DIM)?;
    overlay(base, file)
}

fn overlay(base: TrainConfig, file: Option<&Path>) -> Result<TrainConfig> {
    match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            base.merge_toml(&text)
        }
        None => Ok(base),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_owned(),
        source: e,
    }
}

fn parse_variant(s: &str) -> Result<PretrainVariant> {
    serde_json::from_value(json!(s)).map_err(|_| {
        Error::Input(format!(
            "unknown variant {s:?}, expected mesen, intra_negatives, cmf_only, mpc_only or no_entropy"
        ))
    })
}

fn emit(value: serde_json::Value) {
    println!("{value}");
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => {
            let mut spec = SynthSpec::two_modality(
                a.classes,
                a.users,
                a.samples_per_user_per_class,
                a.channels,
                a.timesteps,
            );
            spec.noise_sigma = a.noise_sigma;
            spec.correlation_strength = a.correlation_strength;
            let ds = generate_synthetic(&spec, a.seed)?;
            write_csv_layout(&ds, &a.out)?;
            emit(json!({"windows": ds.len(), "modalities": ds.modalities, "out": a.out}));
        }
        Command::Pretrain(a) => {
            let ds = a.data.load()?;
            let mut config = config_for(&ds, a.config.as_deref())?;
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            let variant = parse_variant(&a.variant)?;
            let ckpt = pretrain_variant(&ds.without_labels(), &config, variant)?;
            ckpt.save(&a.out)?;
            if let Some(path) = &a.loss_history {
                write_loss_history(&ckpt.loss_history, path)?;
            }
            let last = ckpt.loss_history.last();
            emit(json!({
                "out": a.out,
                "epochs": ckpt.epochs_completed,
                "final_l_pt": last.map(|b| b.l_pt),
                "usage_entropy": ckpt.final_epoch_usage_entropy(),
            }));
        }
        Command::Finetune(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            let f = a.args;
            let ds = f.data.load()?;
            let mut config = overlay(ckpt.config.clone(), f.config.as_deref())?;
            config.class_count = ds.class_count;
            config.seed = f.seed;
            let selection = sample_few_labels(&ds, f.labels_per_class, f.seed)?;
            let model = finetune(&ckpt, &f.modality, &ds, &selection, &config)?;
            model.save(&f.out)?;
            emit(json!({"out": f.out, "labeled": selection.len(), "labeling_rate": selection.labeling_rate}));
        }
        Command::Baseline(a) => {
            let f = a.args;
            let ds = f.data.load()?;
            let mut config = config_for(&ds, f.config.as_deref())?;
            config.seed = f.seed;
            let selection = sample_few_labels(&ds, f.labels_per_class, f.seed)?;
            let report = train_supervised_baseline(&f.modality, &ds, &selection, &config)?;
            report.model.save(&f.out)?;
            emit(json!({"out": f.out, "labeled": selection.len(), "labeling_rate": selection.labeling_rate}));
        }
        Command::Eval(a) => {
            let model = FinetunedModel::load(&a.model)?;
            let ds = a.data.load()?;
            let modality = a.modality.unwrap_or_else(|| model.modality_id.clone());
            let report = evaluate(&model, &ds, &modality)?;
            emit(serde_json::to_value(&report)?);
        }
        Command::Grid(a) => {
            let ds = a.data.load()?;
            let mut config = config_for(&ds, a.config.as_deref())?;
            if let Some(seed) = a.seed {
                config.seed = seed;
            }
            let data = match &a.test_data {
                Some(dir) => GridData {
                    test: ingest_csv(
                        dir,
                        None,
                        &IngestOptions {
                            overlap: a.data.overlap,
                            class_count: Some(ds.class_count),
                        },
                    )?,
                    train: ds,
                },
                None => {
                    let (train_users, eval_users) = partition_users(&ds, a.eval_fraction);
                    let split = split_by_user(&ds, &train_users, &eval_users, config.seed)?;
                    GridData {
                        train: split.train,
                        test: split.test,
                    }
                }
            };
            let grid = ExperimentGrid {
                methods: a
                    .methods
                    .iter()
                    .map(|m| m.parse::<Method>())
                    .collect::<Result<_>>()?,
                label_budgets: a.budgets,
                repetitions: a.reps.unwrap_or(config.repetitions),
                modalities: a.modalities,
                workers: a.workers,
            };
            let results = run_grid(&data, &grid, &config)?;
            print!("{}", results.to_text());
            if let Some(path) = &a.out_csv {
                results.write_csv(path)?;
            }
        }
        Command::ExportFeatures(a) => {
            let ckpt = Checkpoint::load(&a.checkpoint)?;
            let ds = a.data.load()?;
            export_features(&ckpt, &ds, &a.modality, &a.out)?;
            emit(json!({"out": a.out, "rows": ds.len()}));
        }
    }
    Ok(())
}

fn fail(kind: &str, message: String) -> ExitCode {
    eprintln!("{}", json!({"error": kind, "message": message}));
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim().to_owned()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
