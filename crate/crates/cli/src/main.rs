use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use mobweigh::evaluate::{emit_report, evaluate, CvPlan, EvaluationReport, GridSpec, MetricSpace, ScalingMode};
use mobweigh::features::{write_feature_table, DatasetVariant};
use mobweigh::fsutil::{write_atomic, write_csv_atomic};
use mobweigh::ingest::{load_bundle, ColumnManifest};
use mobweigh::models::{ForestConfig, Kernel, LstmConfig, ModelConfig, ModelKind, SvrConfig};
use mobweigh::pipeline::{prepare, Prepared};
use mobweigh::preprocess::{CleaningPolicy, StudyWindow};
use mobweigh::stats::{analyze, write_summary};
use mobweigh::synth::{SynthConfig, SynthHerd};
use mobweigh::YearMonth;

/// Forecast next-month cattle weights from weigh events, animal records and weather.
#[derive(Parser)]
#[command(name = "mobweigh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic herd: animals.csv, weather.csv, weights.csv and manifest.json.
    Synth(SynthArgs),
    /// Clean the sources and write the monthly feature table (features.csv).
    Preprocess(PrepArgs),
    /// Cross-validate models over dataset variants and write metric tables and chart data.
    Run(RunArgs),
    /// Age-weight correlation, growth curve and weather regression (stats.csv).
    Stats(PrepArgs),
    /// Re-emit tables and chart data from an existing report.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 108)]
    animals: usize,
    /// First month of the study window (YYYY-MM).
    #[arg(long, default_value = "2022-02")]
    first_month: YearMonth,
    /// Last month of the study window (YYYY-MM).
    #[arg(long, default_value = "2022-10")]
    last_month: YearMonth,
    /// Probability that an animal is weighed on a given day.
    #[arg(long)]
    access_prob: Option<f64>,
    /// Standard deviation of weighing noise, kg.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Base average daily gain, kg/day.
    #[arg(long)]
    base_adg: Option<f64>,
    /// Extra kg/day per month of age.
    #[arg(long)]
    age_effect: Option<f64>,
    /// kg/day lost per degree above the heat threshold.
    #[arg(long)]
    heat_penalty: Option<f64>,
    /// kg/day gained per mm of daily rainfall.
    #[arg(long)]
    rain_boost: Option<f64>,
    /// Full generator configuration as JSON; other flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "MOBWEIGH_SEED", default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct PrepArgs {
    /// Column manifest describing the source files.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// First window month (YYYY-MM); overrides the manifest.
    #[arg(long, requires = "last_month")]
    first_month: Option<YearMonth>,
    /// Last window month (YYYY-MM); overrides the manifest.
    #[arg(long, requires = "first_month")]
    last_month: Option<YearMonth>,
    /// Robust z-score above which a weigh event is discarded.
    #[arg(long, default_value_t = 3.5)]
    outlier_z: f64,
    /// Largest tolerated month-over-month weight fall, as a fraction.
    #[arg(long, default_value_t = 0.10)]
    drop_pct: f64,
    /// Fail on empty monthly cells instead of filling them with the mob mean.
    #[arg(long)]
    no_impute: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    All,
    WeatherAndAge,
    WeatherOnly,
    AgeOnly,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    All,
    Forest,
    Svr,
    Lstm,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    FoldWise,
    PaperCompat,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Scaled,
    Kg,
    Both,
}

impl From<SpaceArg> for MetricSpace {
    fn from(s: SpaceArg) -> Self {
        match s {
            SpaceArg::Scaled => MetricSpace::Scaled,
            SpaceArg::Kg => MetricSpace::Kg,
            SpaceArg::Both => MetricSpace::Both,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    prep: PrepArgs,
    #[arg(long, value_enum, default_value = "all")]
    variant: Vec<VariantArg>,
    #[arg(long, value_enum, default_value = "all")]
    model: Vec<ModelArg>,
    /// JSON file of candidate configurations: {"forest": [...], "svr": [...], "lstm": [...]}.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Seed for fold assignment and for the built-in model grids.
    #[arg(long, env = "MOBWEIGH_SEED", default_value_t = 42)]
    seed: u64,
    /// Keep rows in file order when forming folds.
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long, value_enum, default_value = "fold-wise")]
    scaling: ScalingArg,
    #[arg(long, value_enum, default_value = "both")]
    metric_space: SpaceArg,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json written by `run`.
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    metric_space: SpaceArg,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct GridFile {
    #[serde(default)]
    forest: Vec<ForestConfig>,
    #[serde(default)]
    svr: Vec<SvrConfig>,
    #[serde(default)]
    lstm: Vec<LstmConfig>,
}

fn default_grid(kind: ModelKind, seed: u64) -> Vec<ModelConfig> {
    match kind {
        ModelKind::Forest => [None, Some(12)]
            .into_iter()
            .map(|max_depth| {
                ModelConfig::Forest(ForestConfig {
                    max_depth,
                    seed,
                    ..Default::default()
                })
            })
            .collect(),
        ModelKind::Svr => [(10.0, 0.1), (100.0, 0.1), (100.0, 1.0)]
            .into_iter()
            .map(|(c, gamma)| {
                ModelConfig::Svr(SvrConfig {
                    c,
                    epsilon: 0.01,
                    kernel: Kernel::Rbf { gamma },
                    ..Default::default()
                })
            })
            .collect(),
        ModelKind::Lstm => [0.05, 0.1]
            .into_iter()
            .map(|learning_rate| {
                ModelConfig::Lstm(LstmConfig {
                    learning_rate,
                    seed,
                    ..Default::default()
                })
            })
            .collect(),
        ModelKind::Mean => vec![ModelConfig::Mean],
    }
}

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn prepared(args: &PrepArgs) -> anyhow::Result<Prepared> {
    let manifest = ColumnManifest::load(&args.manifest)?;
    let window = match (args.first_month, args.last_month) {
        (Some(a), Some(b)) => Some(StudyWindow::new(a, b)?),
        _ => None,
    };
    let bundle = load_bundle(&manifest, window)?;
    let policy = CleaningPolicy {
        outlier_z_threshold: args.outlier_z,
        irregular_drop_pct: args.drop_pct,
        impute: !args.no_impute,
    };
    Ok(prepare(&bundle, &policy)?)
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("invalid generator config {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    cfg.n_animals = args.animals;
    cfg.window = StudyWindow::new(args.first_month, args.last_month)?;
    cfg.seed = args.seed;
    let overrides = [
        (args.access_prob, &mut cfg.daily_access_prob),
        (args.noise_sd, &mut cfg.measurement_noise_sd),
        (args.base_adg, &mut cfg.base_adg),
        (args.age_effect, &mut cfg.age_effect),
        (args.heat_penalty, &mut cfg.heat_penalty),
        (args.rain_boost, &mut cfg.rain_boost),
    ];
    for (value, field) in overrides {
        if let Some(v) = value {
            *field = v;
        }
    }
    ensure_dir(&args.out)?;
    let herd = SynthHerd::generate(&cfg)?;
    let files = herd.write(&args.out)?;
    println!(
        "wrote {} animals, {} weigh events and {} weather days; manifest at {}",
        herd.bundle.animals.len(),
        herd.bundle.events.len(),
        herd.bundle.weather.len(),
        files.manifest.display()
    );
    Ok(())
}

fn cmd_preprocess(args: &PrepArgs) -> anyhow::Result<()> {
    let prep = prepared(args)?;
    ensure_dir(&args.out)?;
    let path = args.out.join("features.csv");
    write_csv_atomic(&path, |buf| write_feature_table(buf, &prep.rows))?;
    let mut summary = serde_json::to_string_pretty(&serde_json::json!({
        "summary": prep.summary,
        "findings": prep.validation.findings,
    }))?;
    summary.push('\n');
    write_atomic(&args.out.join("preprocess_summary.json"), summary.as_bytes())?;
    let s = &prep.summary;
    println!(
        "{} eligible animals, {} retained, {} monthly records ({} imputed), {} feature rows -> {}",
        s.eligible_animals,
        s.retained_animals,
        s.monthly_records,
        s.imputed_cells,
        s.feature_rows,
        path.display()
    );
    Ok(())
}

fn selected_variants(args: &[VariantArg]) -> Vec<DatasetVariant> {
    if args.iter().any(|v| matches!(v, VariantArg::All)) {
        return DatasetVariant::ALL.to_vec();
    }
    DatasetVariant::ALL
        .into_iter()
        .filter(|v| {
            args.iter().any(|a| {
                matches!(
                    (a, v),
                    (VariantArg::WeatherAndAge, DatasetVariant::WeatherAndAge)
                        | (VariantArg::WeatherOnly, DatasetVariant::WeatherOnly)
                        | (VariantArg::AgeOnly, DatasetVariant::AgeOnly)
                        | (VariantArg::Baseline, DatasetVariant::Baseline)
                )
            })
        })
        .collect()
}

fn selected_models(args: &[ModelArg]) -> Vec<ModelKind> {
    if args.iter().any(|m| matches!(m, ModelArg::All)) {
        return ModelKind::COMPARED.to_vec();
    }
    ModelKind::COMPARED
        .into_iter()
        .filter(|k| {
            args.iter().any(|a| {
                matches!(
                    (a, k),
                    (ModelArg::Forest, ModelKind::Forest)
                        | (ModelArg::Svr, ModelKind::Svr)
                        | (ModelArg::Lstm, ModelKind::Lstm)
                )
            })
        })
        .collect()
}

fn grids(args: &RunArgs, models: &[ModelKind]) -> anyhow::Result<Vec<GridSpec>> {
    let file: Option<GridFile> = match &args.grid {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            Some(serde_json::from_str(&text).with_context(|| format!("invalid grid file {}", p.display()))?)
        }
        None => None,
    };
    let mut out = Vec::new();
    for &kind in models {
        let from_file: Vec<ModelConfig> = match (&file, kind) {
            (Some(f), ModelKind::Forest) => f.forest.iter().cloned().map(ModelConfig::Forest).collect(),
            (Some(f), ModelKind::Svr) => f.svr.iter().cloned().map(ModelConfig::Svr).collect(),
            (Some(f), ModelKind::Lstm) => f.lstm.iter().cloned().map(ModelConfig::Lstm).collect(),
            _ => Vec::new(),
        };
        let candidates = if from_file.is_empty() {
            default_grid(kind, args.seed)
        } else {
            from_file
        };
        out.push(GridSpec::new(candidates)?);
    }
    Ok(out)
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let variants = selected_variants(&args.variant);
    let models = selected_models(&args.model);
    if variants.is_empty() || models.is_empty() {
        bail!("no variants or models selected");
    }
    let grids = grids(args, &models)?;
    let prep = prepared(&args.prep)?;
    let plan = CvPlan {
        k: args.folds,
        seed: args.seed,
        shuffle: !args.no_shuffle,
    };
    let scaling = match args.scaling {
        ScalingArg::FoldWise => ScalingMode::FoldWise,
        ScalingArg::PaperCompat => ScalingMode::PaperCompat,
    };
    let report = evaluate(&prep.rows, &variants, &grids, &plan, scaling)?;
    ensure_dir(&args.prep.out)?;
    let written = emit_report(&report, &args.prep.out, args.metric_space.into())?;
    for e in &report.entries {
        println!(
            "{:<5} {:<16} test R2 {:.4}  RMSE {:.4}  MAE {:.4}  accuracy {:.2}%",
            e.model.label(),
            e.variant.slug(),
            e.result.test.r2,
            e.result.test.rmse,
            e.result.test.mae,
            e.result.test.accuracy_pct
        );
    }
    println!("wrote {} files to {}", written.len(), args.prep.out.display());
    Ok(())
}

fn cmd_stats(args: &PrepArgs) -> anyhow::Result<()> {
    let prep = prepared(args)?;
    let summary = analyze(&prep.rows)?;
    ensure_dir(&args.out)?;
    let path = args.out.join("stats.csv");
    write_csv_atomic(&path, |buf| write_summary(buf, &summary))?;
    println!(
        "age vs weight: r = {:.4}, p = {:.3e} (n = {}); wrote {}",
        summary.age_weight.r,
        summary.age_weight.p_value,
        summary.age_weight.n,
        path.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.from).with_context(|| format!("cannot read {}", args.from.display()))?;
    let report = EvaluationReport::from_json(&text)?;
    ensure_dir(&args.out)?;
    let written = emit_report(&report, &args.out, args.metric_space.into())?;
    println!("wrote {} files to {}", written.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Run(a) => cmd_run(a),
        Command::Stats(a) => cmd_stats(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
