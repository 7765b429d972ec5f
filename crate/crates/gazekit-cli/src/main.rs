//! gazekit command-line interface.
//!
//! Subcommands: `ingest` (dataset directories to manifest), `split`
//! (train/validation/test assignment), `train`, `eval`, `personalize`
//! and `viz`. Exit codes: 0 success, 1 operational error, 2 validation
//! failures under `--strict`. All outputs are byte-deterministic for
//! fixed inputs, seeds and flags.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{resolve_dataset_root, PipelineConfig};
use gazekit::evalviz::{self, CsvRow, FrameResult, GroupBy, ScatterScene};
use gazekit::gazenet::{
    evaluate, extract_features, resume_training, train, Checkpoint, FeatureTriple,
    PreparedDataset, TrainOutcome,
};
use gazekit::ingest::{build_manifest, validate, Manifest};
use gazekit::personalize::{
    personalize_user, reports_to_table, select_top_users, CalibrationSplitSpec,
    CalibrationStrategy, Method, PersonalizationReport, SvrParams, SvrSearchOptions,
};
use gazekit::splits::{
    apply_filters, google_split, mit_split, split_stats, Roster, SplitAssignment, SplitId,
    SplitStrategy,
};

#[derive(Parser)]
#[command(name = "gazekit", version, about = "Smartphone gaze-tracking pipeline")]
struct Cli {
    /// Worker threads for preprocessing and per-user fits (default: all
    /// cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse participant directories into a manifest plus validation report.
    Ingest(IngestArgs),
    /// Build a train/validation/test assignment from a manifest.
    Split(SplitArgs),
    /// Train the gaze network.
    Train(TrainArgs),
    /// Evaluate a checkpoint: MED report and per-frame CSV.
    Eval(EvalArgs),
    /// Per-user personalization (SVR or similarity transform).
    Personalize(PersonalizeArgs),
    /// Render a gaze scatter SVG for one user.
    Viz(VizArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset root holding one directory per participant
    /// (GAZEKIT_DATA overrides the config file).
    #[arg(long)]
    root: Option<PathBuf>,
    /// Manifest output path (JSON Lines).
    #[arg(long)]
    out: PathBuf,
    /// Validation report path (default: `<out>.report.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Exit 2 when validation finds violations.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Google-split ratios as train,val,test.
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    /// Apply the config file's frame filters before splitting.
    #[arg(long)]
    config: Option<PathBuf>,
    /// MIT roster JSON (participant -> split); defaults to the dataset's
    /// own labels, falling back to a seeded roster.
    #[arg(long)]
    roster: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Stats JSON path (default: `<out>.stats.json`). The aligned table
    /// always prints to stdout.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Mit,
    Google,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from an existing checkpoint (step counter resumes).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Loss/MED log CSV (default: `<out>.log.csv`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    /// Which split to evaluate when --split is given.
    #[arg(long, value_enum, default_value = "test")]
    subset: SubsetArg,
    #[arg(long)]
    out: PathBuf,
    /// Optional per-frame CSV export.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetArg {
    Train,
    Validation,
    Test,
}

impl From<SubsetArg> for SplitId {
    fn from(s: SubsetArg) -> SplitId {
        match s {
            SubsetArg::Train => SplitId::Train,
            SubsetArg::Validation => SplitId::Validation,
            SubsetArg::Test => SplitId::Test,
        }
    }
}

#[derive(Args)]
struct PersonalizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    subset: SubsetArg,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "random-ratio")]
    strategy: StrategyCliArg,
    #[arg(long, default_value_t = 0.7)]
    fit_fraction: f64,
    #[arg(long, default_value_t = false)]
    no_shuffle: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    /// Personalize the top-N users by frame count.
    #[arg(long, default_value_t = 10)]
    users: usize,
    /// Personalize one specific user instead.
    #[arg(long)]
    user: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Svr,
    Affine,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Svr => Method::Svr,
            MethodArg::Affine => Method::Affine,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyCliArg {
    RandomRatio,
    UniqueGroundTruth,
    NoShuffle,
    Calibration13,
}

impl From<StrategyCliArg> for CalibrationStrategy {
    fn from(s: StrategyCliArg) -> CalibrationStrategy {
        match s {
            StrategyCliArg::RandomRatio => CalibrationStrategy::RandomRatio,
            StrategyCliArg::UniqueGroundTruth => CalibrationStrategy::UniqueGroundTruth,
            StrategyCliArg::NoShuffle => CalibrationStrategy::NoShuffle,
            StrategyCliArg::Calibration13 => CalibrationStrategy::Calibration13,
        }
    }
}

#[derive(Args)]
struct VizArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    subset: SubsetArg,
    #[arg(long)]
    user: String,
    /// Overlay correction segments from this method.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, default_value_t = 0.7)]
    fit_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    // Exit 1 on usage errors (clap defaults to 2, which is reserved for
    // validation failures here).
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: could not configure {workers} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Split(args) => cmd_split(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Personalize(args) => cmd_personalize(args),
        Command::Viz(args) => cmd_viz(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn load_split(path: &Path) -> Result<SplitAssignment> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading split {}", path.display()))?;
    SplitAssignment::from_json(&text).with_context(|| format!("parsing split {}", path.display()))
}

fn cmd_ingest(args: IngestArgs) -> Result<ExitCode> {
    let config = PipelineConfig::load_or_default(args.config.as_deref())?;
    let root = resolve_dataset_root(args.root, &config)
        .context("no dataset root: pass --root, set GAZEKIT_DATA, or configure dataset_root")?;
    if !root.is_dir() {
        bail!("dataset root {} does not exist", root.display());
    }
    let manifest = build_manifest(&root)?;
    if manifest.is_empty() {
        eprintln!("warning: no participant data found under {}", root.display());
    }
    manifest.save(&args.out)?;
    let report = validate(&manifest);
    let report_path = args
        .report
        .unwrap_or_else(|| args.out.with_extension("report.json"));
    write_text(&report_path, &serde_json::to_string_pretty(&report)?)?;
    println!(
        "ingested {} frames from {} participants; {} violations",
        manifest.len(),
        manifest.participants().len(),
        report.violations.len()
    );
    if args.strict && !report.is_clean() {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_split(args: SplitArgs) -> Result<ExitCode> {
    let config = PipelineConfig::load_or_default(args.config.as_deref())?;
    let manifest = load_manifest(&args.manifest)?;
    let outcome = apply_filters(&manifest, &config.filters);
    for (device, count) in &outcome.unknown_devices {
        eprintln!("warning: excluded {count} frames from unrecognized device {device:?}");
    }
    let filtered = outcome.manifest;
    if filtered.is_empty() {
        bail!("no frames left after filtering");
    }

    let assignment = match args.strategy {
        StrategyArg::Mit => {
            let roster = match &args.roster {
                Some(path) => {
                    let text = fs::read_to_string(path)
                        .with_context(|| format!("reading roster {}", path.display()))?;
                    serde_json::from_str::<Roster>(&text)
                        .with_context(|| format!("parsing roster {}", path.display()))?
                }
                None => {
                    let labeled = Roster::from_manifest(&filtered);
                    let participants: Vec<&str> = filtered.participants();
                    if participants
                        .iter()
                        .all(|p| labeled.assignment.contains_key(*p))
                    {
                        labeled
                    } else {
                        eprintln!(
                            "warning: dataset labels incomplete; using seeded roster (seed {})",
                            args.seed
                        );
                        Roster::seeded_random(&participants, args.seed)
                    }
                }
            };
            mit_split(&filtered, &roster)?
        }
        StrategyArg::Google => {
            let ratios: [f64; 3] = match &args.ratios {
                Some(r) if r.len() == 3 => [r[0], r[1], r[2]],
                Some(r) => bail!("--ratios needs exactly 3 values, got {}", r.len()),
                None => config.split.ratios,
            };
            google_split(&filtered, ratios, args.seed)?
        }
    };

    write_text(&args.out, &assignment.to_json())?;
    let stats = split_stats(&assignment, &filtered);
    let stats_path = args
        .stats
        .unwrap_or_else(|| args.out.with_extension("stats.json"));
    write_text(&stats_path, &serde_json::to_string_pretty(&stats)?)?;
    print!("{}", stats.to_table());
    for p in &assignment.train_only_participants {
        eprintln!("warning: participant {p} had < 3 distinct dots; assigned train-only");
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode> {
    let config = PipelineConfig::load_or_default(args.config.as_deref())?;
    let manifest = load_manifest(&args.manifest)?;
    let assignment = load_split(&args.split)?;
    let net_config = config.network.clone();
    net_config
        .validate()
        .context("invalid [network] configuration")?;

    let train_ds: PreparedDataset<f32> = PreparedDataset::from_manifest(
        &manifest,
        Some(&assignment),
        Some(SplitId::Train),
        net_config.crop_size,
    );
    let val_ds: PreparedDataset<f32> = PreparedDataset::from_manifest(
        &manifest,
        Some(&assignment),
        Some(SplitId::Validation),
        net_config.crop_size,
    );
    for s in train_ds.skipped.iter().chain(&val_ds.skipped) {
        eprintln!("warning: skipped {}: {}", s.key, s.reason);
    }
    println!(
        "training on {} frames, validating on {}",
        train_ds.len(),
        val_ds.len()
    );

    let outcome: TrainOutcome<f32> = match &args.resume {
        Some(path) => {
            let checkpoint = Checkpoint::<f32>::load(path)?;
            println!("resuming from step {}", checkpoint.step);
            resume_training(&checkpoint, &train_ds, Some(&val_ds))?
        }
        None => train(&train_ds, Some(&val_ds), &net_config)?,
    };

    outcome.checkpoint.save(&args.out)?;
    let log_path = args.log.unwrap_or_else(|| args.out.with_extension("log.csv"));
    let mut log = String::from("step,lr,train_loss,val_med_cm\n");
    for event in &outcome.log {
        log.push_str(&format!(
            "{},{},{},{}\n",
            event.step,
            event.lr,
            event.train_loss,
            event
                .val_med_cm
                .map_or(String::new(), |v| format!("{v}"))
        ));
    }
    write_text(&log_path, &log)?;
    println!(
        "saved checkpoint at step {} (best validation MED: {})",
        outcome.checkpoint.step,
        outcome
            .best_val_med_cm
            .map_or("n/a".to_string(), |m| format!("{m:.4} cm"))
    );
    Ok(ExitCode::SUCCESS)
}

fn prepared_subset(
    manifest: &Manifest,
    split: Option<&SplitAssignment>,
    subset: SubsetArg,
    crop_size: usize,
) -> PreparedDataset<f32> {
    PreparedDataset::from_manifest(manifest, split, split.map(|_| subset.into()), crop_size)
}

fn split_label(split: Option<&SplitAssignment>, subset: SubsetArg) -> String {
    match split {
        Some(_) => SplitId::from(subset).name().to_string(),
        None => "all".to_string(),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&args.manifest)?;
    let checkpoint = Checkpoint::<f32>::load(&args.checkpoint)?;
    let assignment = args.split.as_deref().map(load_split).transpose()?;
    let ds = prepared_subset(
        &manifest,
        assignment.as_ref(),
        args.subset,
        checkpoint.config.crop_size,
    );
    for s in &ds.skipped {
        eprintln!("warning: skipped {}: {}", s.key, s.reason);
    }
    let outcome = evaluate(&checkpoint, &ds)?;
    let label = split_label(assignment.as_ref(), args.subset);
    // Per-user designated calibration dots feed the non-calibration
    // sub-metric of the report; users with too few distinct dots simply
    // have no frames excluded.
    let mut calibration: BTreeMap<&str, std::collections::BTreeSet<i64>> = BTreeMap::new();
    let mut dots_by_user: BTreeMap<&str, Vec<(i64, [f64; 2])>> = BTreeMap::new();
    for f in &outcome.frames {
        dots_by_user
            .entry(f.participant.as_str())
            .or_default()
            .push((f.dot_id, f.truth));
    }
    for (user, dots) in &dots_by_user {
        let distinct: std::collections::BTreeSet<i64> = dots.iter().map(|d| d.0).collect();
        if distinct.len() > gazekit::personalize::CALIBRATION_DOT_COUNT {
            calibration.insert(
                user,
                gazekit::personalize::peripheral_calibration_dots(
                    dots,
                    gazekit::personalize::CALIBRATION_DOT_COUNT,
                )
                .into_iter()
                .collect(),
            );
        }
    }
    let frames: Vec<FrameResult> = outcome
        .frames
        .iter()
        .map(|f| FrameResult {
            key: f.key.clone(),
            participant: f.participant.clone(),
            device: f.device.clone(),
            split: label.clone(),
            dot_id: f.dot_id,
            error_cm: f.error_cm,
            is_calibration_dot: calibration
                .get(f.participant.as_str())
                .is_some_and(|dots| dots.contains(&f.dot_id)),
        })
        .collect();
    let report = evalviz::build_report(&frames, &[GroupBy::Device, GroupBy::User])
        .context("empty evaluation set")?;
    write_text(&args.out, &report.to_json())?;
    if let Some(csv_path) = &args.csv {
        let rows: Vec<CsvRow> = outcome
            .frames
            .iter()
            .map(|f| CsvRow {
                frame_key: f.key.clone(),
                truth: f.truth,
                base_pred: f.pred,
                personalized: None,
                error_cm: f.error_cm,
            })
            .collect();
        write_text(csv_path, &evalviz::export_csv(&rows))?;
    }
    println!("MED over {} frames: {:.4} cm", outcome.frames.len(), outcome.med_cm);
    Ok(ExitCode::SUCCESS)
}

fn features_by_user(features: Vec<FeatureTriple>) -> BTreeMap<String, Vec<FeatureTriple>> {
    let mut map: BTreeMap<String, Vec<FeatureTriple>> = BTreeMap::new();
    for f in features {
        map.entry(f.participant.clone()).or_default().push(f);
    }
    map
}

fn cmd_personalize(args: PersonalizeArgs) -> Result<ExitCode> {
    let pipeline = PipelineConfig::load_or_default(args.config.as_deref())?;
    let manifest = load_manifest(&args.manifest)?;
    let checkpoint = Checkpoint::<f32>::load(&args.checkpoint)?;
    let assignment = args.split.as_deref().map(load_split).transpose()?;
    let ds = prepared_subset(
        &manifest,
        assignment.as_ref(),
        args.subset,
        checkpoint.config.crop_size,
    );
    let features = extract_features(&checkpoint, &ds)?;
    let leakage_prone = assignment
        .as_ref()
        .is_some_and(|a| a.strategy == SplitStrategy::Google);

    let selected: Vec<String> = match &args.user {
        Some(user) => vec![user.clone()],
        None => select_top_users(&features, args.users),
    };
    if selected.is_empty() {
        bail!("no users available for personalization");
    }

    let split_spec = CalibrationSplitSpec {
        strategy: args.strategy.into(),
        fit_fraction: args.fit_fraction,
        shuffle: !args.no_shuffle,
        seed: args.seed,
        calibration_dots: pipeline.personalization.calibration_dots.clone(),
    };
    let svr_options = SvrSearchOptions {
        params: SvrParams::default(),
        epsilon_grid: pipeline.personalization.epsilon_grid.clone(),
        folds: args.folds,
    };

    let by_user = features_by_user(features);
    let mut reports: Vec<PersonalizationReport> = Vec::new();
    for user in &selected {
        let frames = by_user
            .get(user)
            .with_context(|| format!("user {user} has no frames in the selected subset"))?;
        let (report, _) = personalize_user(
            user,
            frames,
            args.method.into(),
            &split_spec,
            &svr_options,
            leakage_prone,
        )
        .with_context(|| format!("personalizing user {user}"))?;
        reports.push(report);
    }
    write_text(&args.out, &serde_json::to_string_pretty(&reports)?)?;
    print!("{}", reports_to_table(&reports));
    let mean_before =
        reports.iter().map(|r| r.med_before_cm).sum::<f64>() / reports.len() as f64;
    let mean_after = reports.iter().map(|r| r.med_after_cm).sum::<f64>() / reports.len() as f64;
    println!(
        "mean over {} users: {:.4} cm -> {:.4} cm{}",
        reports.len(),
        mean_before,
        mean_after,
        if leakage_prone {
            " (leakage-prone: google split shares participants with base training)"
        } else {
            ""
        }
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_viz(args: VizArgs) -> Result<ExitCode> {
    let manifest = load_manifest(&args.manifest)?;
    let checkpoint = Checkpoint::<f32>::load(&args.checkpoint)?;
    let assignment = args.split.as_deref().map(load_split).transpose()?;
    let ds = prepared_subset(
        &manifest,
        assignment.as_ref(),
        args.subset,
        checkpoint.config.crop_size,
    );
    let features = extract_features(&checkpoint, &ds)?;
    let by_user = features_by_user(features);
    let frames = by_user
        .get(&args.user)
        .with_context(|| format!("user {} has no frames in the selected subset", args.user))?;

    let mut scene = ScatterScene::default();
    let mut seen_dots = std::collections::BTreeSet::new();
    for f in frames {
        if seen_dots.insert(f.dot_id) {
            scene.truths.push((f.dot_id, f.truth[0], f.truth[1]));
        }
        scene
            .predictions
            .push((f.dot_id, f.base_pred[0], f.base_pred[1]));
    }
    if let Some(method) = args.method {
        let split_spec = CalibrationSplitSpec {
            fit_fraction: args.fit_fraction,
            seed: args.seed,
            ..CalibrationSplitSpec::default()
        };
        let (_, corrected) = personalize_user(
            &args.user,
            frames,
            method.into(),
            &split_spec,
            &SvrSearchOptions::default(),
            false,
        )?;
        for c in &corrected {
            scene
                .corrections
                .push(([c.base_pred[0], c.base_pred[1]], [c.corrected[0], c.corrected[1]]));
        }
    }
    let svg = evalviz::render_scatter(&scene)?;
    write_text(&args.out, &svg)?;
    println!(
        "wrote scene with {} dots and {} predictions to {}",
        scene.truths.len(),
        scene.predictions.len(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
