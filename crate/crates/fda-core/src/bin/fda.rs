//! Command-line interface: prepare a dataset, train, evaluate, and compare
//! runs.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fda_core::backbone::{propagate_graph, Adjacency, EmbeddingTable};
use fda_core::config::{PartialRunConfig, RunConfig};
use fda_core::dataset::{self, DatasetManifest, InteractionDataset, SplitMode};
use fda_core::trainer::{BackboneKind, Trainer};
use fda_core::{checkpoint, metrics, report, FdaError, Result};

#[derive(Parser)]
#[command(
    name = "fda",
    about = "Fairness-aware recommender training via bi-level data augmentation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a rating file, binarize, filter, split, and attach group labels.
    Prepare(PrepareArgs),
    /// Train a model on a prepared dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a prepared dataset.
    Evaluate(EvaluateArgs),
    /// Compare two metrics files side by side.
    Report(ReportArgs),
}

/// Configuration sources and overrides, applied as: preset, then config
/// file, then these flags.
#[derive(Args)]
struct ConfigFlags {
    /// JSON config file with flat keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named defaults: movielens, lastfm, or synthetic.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Turn the data augmentation on or off.
    #[arg(long, value_parser = ["on", "off"])]
    fda: Option<String>,
    #[arg(long)]
    mask_ratio: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Model backbone: mf or graph.
    #[arg(long, value_parser = ["mf", "graph"])]
    backbone: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Evaluation cutoffs; may be repeated.
    #[arg(long = "k")]
    k_list: Vec<usize>,
    #[arg(long)]
    outer_lr: Option<f64>,
    #[arg(long)]
    inner_lr: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    kcore: Option<u32>,
    /// Split strategy: "80/20" or "70/10/20".
    #[arg(long)]
    split: Option<String>,
    /// Keep only the fake-click hypothesis terms.
    #[arg(long)]
    no_hypothesis2: bool,
    /// Keep only the fake-non-click hypothesis terms.
    #[arg(long)]
    no_hypothesis1: bool,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let cli = PartialRunConfig {
            seed: self.seed,
            fda: self.fda.as_deref().map(|s| s == "on"),
            mask_ratio: self.mask_ratio,
            epsilon: self.epsilon,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs,
            batch_size: self.batch_size,
            dim: self.dim,
            backbone: self.backbone.clone(),
            threads: self.threads,
            eval_every: self.eval_every,
            k_list: if self.k_list.is_empty() {
                None
            } else {
                Some(self.k_list.clone())
            },
            outer_lr: self.outer_lr,
            inner_lr: self.inner_lr,
            threshold: self.threshold,
            kcore: self.kcore,
            split: self.split.clone(),
            hypothesis1: if self.no_hypothesis1 { Some(false) } else { None },
            hypothesis2: if self.no_hypothesis2 { Some(false) } else { None },
            ..Default::default()
        };
        RunConfig::resolve(self.preset.as_deref(), self.config.as_deref(), &cli)
    }
}

#[derive(Args)]
struct PrepareArgs {
    /// Rating file (user, item, rating records).
    #[arg(long)]
    ratings: PathBuf,
    /// User profile file carrying the sensitive attribute.
    #[arg(long)]
    profiles: PathBuf,
    /// Attribute-to-group mapping, e.g. "M=0,F=1".
    #[arg(long)]
    map: String,
    /// Output directory for the prepared dataset.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the run.
    #[arg(long)]
    out: PathBuf,
    /// Resume from `<out>/checkpoint` if present.
    #[arg(long)]
    resume: bool,
    #[command(flatten)]
    cfg: ConfigFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prepared dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint directory to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory; metrics are printed when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluation cutoffs; may be repeated.
    #[arg(long = "k")]
    k_list: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Baseline metrics.csv.
    #[arg(long)]
    baseline: PathBuf,
    /// Candidate metrics.csv.
    #[arg(long)]
    candidate: PathBuf,
}

/// Resolves a possibly-relative input path against `FDA_DATA_DIR`.
fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() || path.exists() {
        return path.to_path_buf();
    }
    if let Ok(base) = std::env::var("FDA_DATA_DIR") {
        let joined = Path::new(&base).join(path);
        if joined.exists() {
            return joined;
        }
    }
    path.to_path_buf()
}

fn parse_group_map(spec: &str) -> Result<HashMap<String, u8>> {
    let mut out = HashMap::new();
    for part in spec.split(',') {
        let (attr, group) = part.split_once('=').ok_or_else(|| {
            FdaError::InvalidConfig(format!(
                "bad group mapping entry {part:?}, expected attribute=0 or attribute=1"
            ))
        })?;
        let g: u8 = group
            .trim()
            .parse()
            .map_err(|_| FdaError::InvalidConfig(format!("bad group id in {part:?}")))?;
        if g > 1 {
            return Err(FdaError::InvalidConfig(format!(
                "group id must be 0 or 1, found {g}"
            )));
        }
        out.insert(attr.trim().to_string(), g);
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| FdaError::io(path, e))
}

fn cmd_prepare(args: &PrepareArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let ratings_path = resolve_data_path(&args.ratings);
    let profiles_path = resolve_data_path(&args.profiles);
    let raw = dataset::load_ratings(&ratings_path, cfg.rating_format()?)?;
    let mut pairs = dataset::binarize(&raw, cfg.threshold);
    if cfg.kcore > 0 {
        pairs = dataset::kcore_filter(&pairs, cfg.kcore as usize);
    }
    if pairs.is_empty() {
        return Err(FdaError::InvalidDataset(
            "no positive interactions remain after binarization/filtering".to_string(),
        ));
    }
    let splits = dataset::split(&pairs, cfg.split_strategy()?, SplitMode::PerUser, cfg.seed);
    let profiles = dataset::load_profiles(&profiles_path)?;
    let mapping = parse_group_map(&args.map)?;
    let ds = dataset::build_dataset(&splits, &profiles, &mapping)?;
    let manifest = DatasetManifest {
        schema_version: dataset::DATASET_SCHEMA_VERSION,
        num_users: ds.num_users,
        num_items: ds.num_items,
        seed: cfg.seed,
        rating_threshold: cfg.threshold,
        kcore: cfg.kcore as usize,
        strategy: cfg.split_strategy()?,
        split_mode: SplitMode::PerUser,
        train_records: ds.train_pair_count(),
        validation_records: ds.validation_pair_count(),
        test_records: ds.test_pair_count(),
        dropped_cold_users: splits.dropped_cold_users.clone(),
    };
    dataset::save_prepared(&ds, &manifest, &args.out)?;
    write_file(&args.out.join("effective-config.json"), &cfg.effective_json())?;
    println!(
        "prepared {} users x {} items: {} train / {} validation / {} test records -> {}",
        ds.num_users,
        ds.num_items,
        manifest.train_records,
        manifest.validation_records,
        manifest.test_records,
        args.out.display()
    );
    Ok(())
}

fn eval_table_for(
    table: &EmbeddingTable,
    backbone: BackboneKind,
    ds: &InteractionDataset,
) -> EmbeddingTable {
    match backbone {
        BackboneKind::Mf => table.clone(),
        BackboneKind::Graph => propagate_graph(table, &Adjacency::from_train(ds), 1),
    }
}

fn write_run_outputs(
    out: &Path,
    table: &EmbeddingTable,
    ds: &InteractionDataset,
    k_list: &[usize],
    threads: usize,
) -> Result<()> {
    let per_k = report::evaluate_table(table, ds, k_list, threads)?;
    write_file(&out.join("metrics.csv"), &report::metrics_to_csv(&per_k))?;
    let mut js = Vec::new();
    for &k in k_list {
        let top = metrics::topk_with_threads(table, ds, k, threads);
        js.push(report::js_report(ds, &top)?);
    }
    write_file(
        &out.join("js_report.json"),
        &serde_json::to_string_pretty(&js)?,
    )?;
    for m in &per_k {
        println!(
            "k={:<3} hr={:.4} ndcg={:.4} dp={:.4} eo={:.4}",
            m.k, m.hr, m.ndcg, m.dp, m.eo
        );
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.cfg.resolve()?;
    let data_dir = resolve_data_path(&args.data);
    let (ds, _manifest) = dataset::load_prepared(&data_dir)?;
    let train_cfg = cfg.train_config()?;
    std::fs::create_dir_all(&args.out).map_err(|e| FdaError::io(&args.out, e))?;
    let ckpt_dir = args.out.join("checkpoint");

    let mut trainer = if args.resume && ckpt_dir.join("manifest.json").exists() {
        let data = checkpoint::load(&ckpt_dir)?;
        println!("resuming from epoch {}", data.manifest.next_epoch);
        let mut trainer = Trainer::resume(&ds, data)?;
        // explicit flags may extend a resumed run past its original horizon
        if let Some(epochs) = args.cfg.epochs {
            trainer.cfg.epochs = epochs;
        }
        if let Some(eval_every) = args.cfg.eval_every {
            trainer.cfg.eval_every = eval_every;
        }
        trainer.cfg.validate()?;
        trainer
    } else {
        Trainer::new(&ds, train_cfg)?
    };
    trainer.run_to_end()?;
    checkpoint::save(&ckpt_dir, &trainer.to_checkpoint())?;
    write_file(&args.out.join("effective-config.json"), &cfg.effective_json())?;
    if let Some(epoch) = trainer.best_epoch() {
        println!("best validation NDCG@20 at epoch {epoch}");
    }
    let table = eval_table_for(trainer.selected_table(), trainer.cfg.backbone, &ds);
    write_run_outputs(&args.out, &table, &ds, &trainer.cfg.k_list, cfg.threads)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let data_dir = resolve_data_path(&args.data);
    let (ds, _manifest) = dataset::load_prepared(&data_dir)?;
    let data = checkpoint::load(&args.checkpoint)?;
    data.validate_against(&ds)?;
    let k_list = if args.k_list.is_empty() {
        data.manifest.config.k_list.clone()
    } else {
        args.k_list.clone()
    };
    let table = eval_table_for(&data.table, data.manifest.backbone, &ds);
    match &args.out {
        Some(out) => {
            std::fs::create_dir_all(out).map_err(|e| FdaError::io(out, e))?;
            write_run_outputs(out, &table, &ds, &k_list, args.threads)
        }
        None => {
            let per_k = report::evaluate_table(&table, &ds, &k_list, args.threads)?;
            print!("{}", report::metrics_to_csv(&per_k));
            Ok(())
        }
    }
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let read = |p: &Path| -> Result<String> {
        std::fs::read_to_string(p).map_err(|e| FdaError::io(p, e))
    };
    let baseline = report::parse_metrics_csv(&read(&args.baseline)?)?;
    let candidate = report::parse_metrics_csv(&read(&args.candidate)?)?;
    let rows = report::compare(&baseline, &candidate)?;
    print!("{}", report::render_comparison(&rows));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
