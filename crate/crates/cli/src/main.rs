//! `engage`: synthetic data, feature export, training, prediction,
//! evaluation and feature ranking.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or
//! validation error, 3 training divergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use engage_core::eval::ForestConfig;
use engage_core::features::read_clip_feature_table;
use engage_core::ingest::{parse_frame_file, Split};
use engage_core::run::{
    clip_feature_rows, export_clip_features, load_run_manifest, rank_features, train_run,
    BackboneKind, Run, RunConfig, TaskMode,
};
use engage_core::synth::{generate, SynthConfig};
use engage_core::Error;

static RUN_DEFAULTS: LazyLock<RunConfig> = LazyLock::new(RunConfig::default);
static SYNTH_DEFAULTS: LazyLock<SynthConfig> = LazyLock::new(SynthConfig::default);

const DATA_DIR_ENV: &str = "ENGAGE_DATA_DIR";

#[derive(Parser)]
#[command(name = "engage", version, about = "Video-based engagement measurement")]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: per-frame files plus manifest.toml.
    Synth(SynthArgs),
    /// Export the clip-level feature table of every video in a manifest.
    Features(FeaturesArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Predict engagement for frame files or a manifest split.
    Predict(PredictArgs),
    /// Evaluate a run on a manifest split and write a report.
    Eval(EvalArgs),
    /// Rank clip features by random-forest out-of-bag permutation importance.
    RankFeatures(RankArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    FrameClassify,
    FrameOrdinal,
    ClipRegress,
}

impl From<ModeArg> for TaskMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::FrameClassify => TaskMode::FrameClassify,
            ModeArg::FrameOrdinal => TaskMode::FrameOrdinal,
            ModeArg::ClipRegress => TaskMode::ClipRegress,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Lstm,
    Tcn,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Validation => Some(Split::Validation),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = SYNTH_DEFAULTS.seed)]
    seed: u64,
    #[arg(long, default_value_t = SYNTH_DEFAULTS.num_classes)]
    classes: usize,
    #[arg(long, default_value_t = SYNTH_DEFAULTS.videos_per_class)]
    videos_per_class: usize,
    #[arg(long, default_value_t = SYNTH_DEFAULTS.frames_per_video)]
    frames: usize,
    #[arg(long, default_value_t = SYNTH_DEFAULTS.fps)]
    fps: f64,
    /// Emit continuous labels (0, 0.33, 0.66, 1.0) instead of classes.
    #[arg(long)]
    continuous: bool,
}

/// Flags shared by every command that featurizes videos.
#[derive(Args)]
struct FeatureFlags {
    /// Clip length in seconds.
    #[arg(long, default_value_t = RUN_DEFAULTS.clip_seconds)]
    clip_seconds: f64,
    /// Fractional overlap between consecutive clips.
    #[arg(long, default_value_t = RUN_DEFAULTS.overlap)]
    overlap: f64,
    /// AU45 intensity a peak must exceed to count as a blink.
    #[arg(long, default_value_t = RUN_DEFAULTS.blink_threshold)]
    blink_threshold: f64,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV table.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args)]
struct TrainArgs {
    /// Manifest file (required here or in --config).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    /// TOML run configuration (flags take precedence).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "frame-ordinal")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "tcn")]
    model: ModelArg,
    #[command(flatten)]
    features: FeatureFlags,
    #[arg(long, default_value_t = RUN_DEFAULTS.batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = RUN_DEFAULTS.learning_rate)]
    lr: f64,
    /// Maximum number of epochs.
    #[arg(long, default_value_t = RUN_DEFAULTS.epochs)]
    epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = RUN_DEFAULTS.patience)]
    patience: usize,
    #[arg(long, default_value_t = RUN_DEFAULTS.seed)]
    seed: u64,
    /// Ordinal mode: one backbone with C-1 threshold outputs.
    #[arg(long)]
    shared_ordinal_backbone: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Score the videos of this manifest instead of individual files.
    #[arg(long, conflicts_with = "files")]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    /// Frame rate assumed for frame files.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-frame feature files.
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Evaluate on another manifest than the training one.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Manifest whose videos are featurized.
    #[arg(long, required_unless_present = "table")]
    manifest: Option<PathBuf>,
    /// Clip feature table written by `features` (used instead of a manifest).
    #[arg(long, conflicts_with = "manifest")]
    table: Option<PathBuf>,
    /// Output directory for importance.{csv,json,svg}.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    #[arg(long, default_value_t = ForestConfig::default().trees)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    features: FeatureFlags,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::DivergedLoss { .. } => 3,
            Error::InvalidConfig(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn explicit(m: &ArgMatches, id: &str) -> bool {
    matches!(m.value_source(id), Some(ValueSource::CommandLine))
}

/// Flags given on the command line override values from the config file.
fn apply_feature_flags(cfg: &mut RunConfig, f: &FeatureFlags, m: &ArgMatches) {
    if explicit(m, "clip_seconds") {
        cfg.clip_seconds = f.clip_seconds;
    }
    if explicit(m, "overlap") {
        cfg.overlap = f.overlap;
    }
    if explicit(m, "blink_threshold") {
        cfg.blink_threshold = f.blink_threshold;
    }
}

fn base_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    })
}

fn with_data_dir(mut cfg: RunConfig) -> RunConfig {
    if cfg.data_dir.is_none() {
        cfg.data_dir = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
    }
    cfg
}

fn cmd_synth(a: &SynthArgs, m: &ArgMatches) -> Result<(), Failure> {
    let mut cfg = match &a.config {
        Some(p) => SynthConfig::from_toml_file(p)?,
        None => SynthConfig::default(),
    };
    if explicit(m, "seed") || a.config.is_none() {
        cfg.seed = a.seed;
    }
    if explicit(m, "classes") {
        cfg.num_classes = a.classes;
    }
    if explicit(m, "videos_per_class") {
        cfg.videos_per_class = a.videos_per_class;
    }
    if explicit(m, "frames") {
        cfg.frames_per_video = a.frames;
    }
    if explicit(m, "fps") {
        cfg.fps = a.fps;
    }
    if a.continuous {
        cfg.continuous = true;
    }
    let manifest = generate(&cfg, &a.out)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn cmd_features(a: &FeaturesArgs, m: &ArgMatches) -> Result<(), Failure> {
    let mut cfg = base_config(a.config.as_deref())?;
    apply_feature_flags(&mut cfg, &a.features, m);
    cfg.manifest = Some(a.manifest.clone());
    let cfg = with_data_dir(cfg);
    let manifest = load_run_manifest(&cfg)?;
    let rows = export_clip_features(&manifest, &cfg.feature_params(), &a.out)?;
    println!("wrote {rows} clip rows to {}", a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs, m: &ArgMatches) -> Result<(), Failure> {
    let mut cfg = base_config(a.config.as_deref())?;
    if let Some(p) = &a.manifest {
        cfg.manifest = Some(p.clone());
    }
    if cfg.manifest.is_none() {
        return Err(usage(
            "train needs --manifest (or `manifest` in --config)\n\nUsage: engage train --manifest <MANIFEST> --out <OUT> [OPTIONS]",
        ));
    }
    if explicit(m, "mode") || a.config.is_none() {
        cfg.mode = a.mode.into();
    }
    if explicit(m, "model") || a.config.is_none() {
        cfg.model = match a.model {
            ModelArg::Lstm => BackboneKind::Lstm,
            ModelArg::Tcn => BackboneKind::Tcn,
        };
    }
    apply_feature_flags(&mut cfg, &a.features, m);
    if explicit(m, "batch_size") {
        cfg.batch_size = a.batch_size;
    }
    if explicit(m, "lr") {
        cfg.learning_rate = a.lr;
    }
    if explicit(m, "epochs") {
        cfg.epochs = a.epochs;
    }
    if explicit(m, "patience") {
        cfg.patience = a.patience;
    }
    if explicit(m, "seed") {
        cfg.seed = a.seed;
    }
    if a.shared_ordinal_backbone {
        cfg.shared_ordinal_backbone = true;
    }
    let cfg = with_data_dir(cfg);
    let summary = train_run(&cfg, &a.out)?;
    println!("run: {}", a.out.display());
    println!("mode: {}", cfg.mode.as_str());
    println!(
        "videos: train {} / validation {} / test {} ({} excluded)",
        summary.train_videos,
        summary.validation_videos,
        summary.test_videos,
        summary.excluded_videos.len()
    );
    println!("parameters: {}", summary.parameters);
    for (i, (e, v)) in summary
        .best_epochs
        .iter()
        .zip(&summary.best_validation_metric)
        .enumerate()
    {
        println!("model {i}: best epoch {e}, validation metric {v:.6}");
    }
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<(), Failure> {
    let run = Run::open(&a.run)?;
    let mut rows: Vec<(String, engage_core::run::Prediction)> = Vec::new();
    if let Some(manifest) = &a.manifest {
        let mut cfg = run.config.clone();
        cfg.manifest = Some(manifest.clone());
        cfg.data_dir = None;
        let manifest = load_run_manifest(&with_data_dir(cfg))?;
        let split = a.split.split();
        for e in manifest
            .entries
            .iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
        {
            let mut series = e.load_series()?;
            series.fps = e.fps;
            rows.push((e.video_id.clone(), run.predict_series(&series)?));
        }
    } else if a.files.is_empty() {
        return Err(usage("predict needs frame files or --manifest"));
    } else {
        for f in &a.files {
            let mut series = parse_frame_file(f)?;
            series.fps = a.fps;
            rows.push((series.video_id.clone(), run.predict_series(&series)?));
        }
    }
    let sink: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| {
            Failure::from(Error::Io {
                context: format!("creating {}", p.display()),
                source: e,
            })
        })?),
        None => Box::new(std::io::stdout()),
    };
    let classes = rows.first().map_or(0, |r| r.1.probabilities.len());
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["video_id".to_string(), "prediction".to_string()];
    header.extend((0..classes).map(|c| format!("p{c}")));
    let io = |e: csv::Error| usage(format!("writing predictions: {e}"));
    w.write_record(&header).map_err(io)?;
    for (id, p) in &rows {
        let mut rec = vec![id.clone(), p.value.to_string()];
        rec.extend(p.probabilities.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
        .map_err(|e| usage(format!("writing predictions: {e}")))?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), Failure> {
    let split = a
        .split
        .split()
        .ok_or_else(|| usage("eval needs a single split (train, validation or test)"))?;
    let run = Run::open(&a.run)?;
    let report = match &a.manifest {
        Some(p) => {
            let mut cfg = run.config.clone();
            cfg.manifest = Some(p.clone());
            cfg.data_dir = None;
            let manifest = load_run_manifest(&with_data_dir(cfg))?;
            run.evaluate(split, Some(&manifest))?
        }
        None => run.evaluate(split, None)?,
    };
    print!("{}", report.to_text());
    println!(
        "report: {}",
        a.run.join(format!("eval-{}", split.as_str())).display()
    );
    Ok(())
}

fn cmd_rank(a: &RankArgs, m: &ArgMatches) -> Result<(), Failure> {
    let rows = match (&a.table, &a.manifest) {
        (Some(t), _) => read_clip_feature_table(t)?,
        (None, Some(p)) => {
            let mut cfg = RunConfig {
                manifest: Some(p.clone()),
                ..RunConfig::default()
            };
            apply_feature_flags(&mut cfg, &a.features, m);
            let cfg = with_data_dir(cfg);
            let manifest = load_run_manifest(&cfg)?;
            clip_feature_rows(&manifest, &cfg.feature_params(), a.split.split())?
        }
        (None, None) => return Err(usage("rank-features needs --manifest or --table")),
    };
    let forest = ForestConfig {
        trees: a.trees,
        mtry: None,
        seed: a.seed,
    };
    let ranking = rank_features(&rows, &forest, &a.out)?;
    for (k, e) in ranking.entries.iter().enumerate().take(10) {
        println!("{:2}. {:<28} {:.6}", k + 1, e.feature, e.score);
    }
    println!("importance: {}", a.out.join("importance.csv").display());
    Ok(())
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(()),
                _ => Err(Failure {
                    code: 1,
                    message: String::new(),
                }),
            };
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| usage(e.to_string()))?;
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(|e| usage(format!("--jobs: {e}")))?;
    }
    let sub = matches
        .subcommand()
        .map(|s| s.1)
        .expect("subcommand is required");
    match &cli.command {
        Command::Synth(a) => cmd_synth(a, sub),
        Command::Features(a) => cmd_features(a, sub),
        Command::Train(a) => cmd_train(a, sub),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::RankFeatures(a) => cmd_rank(a, sub),
    }
}

fn main() -> ExitCode {
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
