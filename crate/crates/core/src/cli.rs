//! The `osp` command line. Settings resolve as flag (or its `OSP_*`
//! environment variable), then the `--config` TOML file, then the built-in
//! default. Everything is validated before any input file is opened.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::Deserialize;

use crate::data_io::{
    default_horizon, generate_synthetic, load_labeled_csv, load_m4_csv, load_model,
    save_labeled_csv, save_model, write_features, write_series, SyntheticSpec,
};
use crate::engine::{meta, osp_forecast, train_osp, ModelKind, OspMethod, CUSUM_THRESHOLD_95};
use crate::error::{OspError, Result};
use crate::evaluation::{evaluate_corpus, EvaluationConfig};
use crate::features::{extract_features, FeatureVector};
use crate::forecasters::{ForecasterKind, ForecasterSpec};
use crate::gbdt::{GbdtModel, GbdtParams, Objective};
use crate::labeler::{LabelKind, Labeler};
use crate::metrics::MaseScale;
use crate::series::{default_min_len, SegmentationConfig, TimeSeries};

#[derive(Debug, Parser)]
#[command(
    name = "osp",
    version,
    about = "Forecast from learned optimal starting points"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML file with default settings; flags take precedence.
    #[arg(long, global = true, env = "OSP_CONFIG")]
    pub config: Option<PathBuf>,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, env = "OSP_JOBS")]
    pub jobs: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true, env = "OSP_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the feature table of every series.
    Features(FeaturesArgs),
    /// Label the best starting interval of every series.
    Label(LabelArgs),
    /// Fit an interval model on a labelled set.
    Train(TrainArgs),
    /// Forecast every series from its predicted interval.
    Forecast(ForecastArgs),
    /// Compare interval models against the baselines on a holdout.
    Evaluate(EvaluateArgs),
    /// Write a synthetic structural-break corpus.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Series CSV: header, then `id,obs1,obs2,...` per row.
    #[arg(long, env = "OSP_INPUT")]
    pub input: PathBuf,

    /// Observations per seasonal cycle.
    #[arg(long, env = "OSP_FREQUENCY")]
    pub frequency: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Number of sub-intervals.
    #[arg(long, env = "OSP_M")]
    pub m: Option<usize>,

    /// Candidate starting points per sub-interval.
    #[arg(long, env = "OSP_N")]
    pub n: Option<usize>,

    /// Forecast horizon (defaults by frequency: 1->6, 4->8, 12->18, 52->13, 7->14, 24->48).
    #[arg(long, env = "OSP_HORIZON")]
    pub horizon: Option<usize>,

    /// Shortest suffix a candidate may leave.
    #[arg(long, env = "OSP_MIN_LEN")]
    pub min_len: Option<usize>,

    /// naive, snaive, ses, holt, hw, ets or theta.
    #[arg(long, env = "OSP_BASE_MODEL")]
    pub base_model: Option<String>,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// actual or average.
    #[arg(long, env = "OSP_LABEL")]
    pub label: Option<String>,

    /// cls or reg.
    #[arg(long, env = "OSP_OBJECTIVE")]
    pub objective: Option<String>,
}

#[derive(Debug, Args)]
pub struct GbdtArgs {
    #[arg(long, env = "OSP_ROUNDS")]
    pub rounds: Option<usize>,
    #[arg(long, env = "OSP_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "OSP_MAX_DEPTH")]
    pub max_depth: Option<usize>,
    #[arg(long, env = "OSP_MIN_SAMPLES_LEAF")]
    pub min_samples_leaf: Option<usize>,
    #[arg(long, env = "OSP_LAMBDA")]
    pub lambda: Option<f64>,
    #[arg(long, env = "OSP_GAMMA")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Output CSV (stdout when omitted).
    #[arg(long, env = "OSP_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub segment: SegmentArgs,
    /// suffix or full: which series scales the labeling MASE.
    #[arg(long, env = "OSP_MASE_SCALE")]
    pub mase_scale: Option<String>,
    #[arg(long, env = "OSP_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labelled CSV written by `label`.
    #[arg(long, env = "OSP_LABELS")]
    pub labels: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub gbdt: GbdtArgs,
    /// Where to write the model JSON.
    #[arg(long, env = "OSP_MODEL_OUT")]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub segment: SegmentArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Model JSON written by `train`.
    #[arg(long, env = "OSP_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "OSP_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    #[command(flatten)]
    pub segment: SegmentArgs,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Model JSON; repeat for several methods. Baselines run regardless.
    #[arg(long = "model", env = "OSP_MODELS", value_delimiter = ',')]
    pub models: Vec<PathBuf>,
    /// Significance threshold of the CUSUM change-point baseline.
    #[arg(long, env = "OSP_CUSUM_THRESHOLD")]
    pub cusum_threshold: Option<f64>,
    /// Per-series scores CSV (`series_id,method,mase,mape`; stdout when omitted).
    #[arg(long, env = "OSP_OUTPUT")]
    pub output: Option<PathBuf>,
    /// Per-method means CSV.
    #[arg(long, env = "OSP_SUMMARY")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// JSON generator spec; the flags below override its fields.
    #[arg(long, env = "OSP_SPEC")]
    pub spec: Option<PathBuf>,
    #[arg(long, env = "OSP_COUNT")]
    pub count: Option<usize>,
    #[arg(long, env = "OSP_LENGTH_MIN")]
    pub length_min: Option<usize>,
    #[arg(long, env = "OSP_LENGTH_MAX")]
    pub length_max: Option<usize>,
    #[arg(long, env = "OSP_FREQUENCY")]
    pub frequency: Option<usize>,
    #[arg(long, env = "OSP_BREAK_PROBABILITY")]
    pub break_probability: Option<f64>,
    #[arg(long, env = "OSP_OUTPUT")]
    pub output: Option<PathBuf>,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub frequency: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub horizon: Option<usize>,
    pub min_len: Option<usize>,
    pub base_model: Option<String>,
    pub mase_scale: Option<String>,
    pub label: Option<String>,
    pub objective: Option<String>,
    pub rounds: Option<usize>,
    pub learning_rate: Option<f64>,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub cusum_threshold: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OspError::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| OspError::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_M: usize = 5;
pub const DEFAULT_N: usize = 4;
pub const DEFAULT_FREQUENCY: usize = 1;
pub const DEFAULT_BASE_MODEL: &str = "ets";

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn resolve_frequency(flag: Option<usize>, file: &FileConfig) -> Result<usize> {
    let f = pick(flag, file.frequency, DEFAULT_FREQUENCY);
    if f < 1 {
        return Err(OspError::InvalidConfig("frequency must be >= 1".into()));
    }
    Ok(f)
}

fn resolve_segment(
    args: &SegmentArgs,
    frequency: usize,
    file: &FileConfig,
) -> Result<(SegmentationConfig, ForecasterSpec)> {
    let h = match args
        .horizon
        .or(file.horizon)
        .or_else(|| default_horizon(frequency))
    {
        Some(h) => h,
        None => {
            return Err(OspError::InvalidConfig(format!(
                "no default horizon for frequency {frequency}; pass --horizon"
            )))
        }
    };
    let m = pick(args.m, file.m, DEFAULT_M);
    let n = pick(args.n, file.n, DEFAULT_N);
    let min_len = pick(args.min_len, file.min_len, default_min_len(h, frequency));
    let config = SegmentationConfig::new(m, n, h, min_len)?;
    let kind: ForecasterKind = pick(
        args.base_model.clone(),
        file.base_model.clone(),
        DEFAULT_BASE_MODEL.into(),
    )
    .parse()?;
    let spec = ForecasterSpec::new(kind);
    spec.validate()?;
    if kind.is_seasonal() {
        config.check_frequency(frequency)?;
    }
    Ok((config, spec))
}

fn resolve_method(args: &MethodArgs, file: &FileConfig) -> Result<OspMethod> {
    let label: LabelKind =
        pick(args.label.clone(), file.label.clone(), "average".into()).parse()?;
    let model: ModelKind =
        pick(args.objective.clone(), file.objective.clone(), "cls".into()).parse()?;
    Ok(OspMethod::new(label, model))
}

fn resolve_gbdt(args: &GbdtArgs, seed: u64, file: &FileConfig) -> Result<GbdtParams> {
    let d = GbdtParams::default();
    let p = GbdtParams {
        rounds: pick(args.rounds, file.rounds, d.rounds),
        learning_rate: pick(args.learning_rate, file.learning_rate, d.learning_rate),
        max_depth: pick(args.max_depth, file.max_depth, d.max_depth),
        min_samples_leaf: pick(
            args.min_samples_leaf,
            file.min_samples_leaf,
            d.min_samples_leaf,
        ),
        lambda: pick(args.lambda, file.lambda, d.lambda),
        gamma: pick(args.gamma, file.gamma, d.gamma),
        seed,
    };
    p.validate()?;
    Ok(p)
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| OspError::io(p, e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_series(path: &Path, frequency: usize) -> Result<Vec<TimeSeries>> {
    let series = load_m4_csv(path, frequency)?;
    if series.is_empty() {
        return Err(OspError::InvalidValue(format!(
            "{}: no usable series",
            path.display()
        )));
    }
    info!("loaded {} series from {}", series.len(), path.display());
    Ok(series)
}

/// Method recorded in a model file, falling back to the objective plus the
/// requested label kind for models without metadata.
fn model_method(model: &GbdtModel, fallback: OspMethod) -> Result<OspMethod> {
    if let Some(name) = model.metadata.get(meta::METHOD) {
        return name.parse();
    }
    let kind = match model.objective {
        Objective::Multiclass { .. } => ModelKind::Classification,
        Objective::Regression => ModelKind::Regression,
    };
    Ok(OspMethod::new(fallback.label_kind, kind))
}

fn check_model_geometry(model: &GbdtModel, config: &SegmentationConfig, path: &Path) -> Result<()> {
    if let Some(m) = model.metadata.get(meta::M) {
        if m.parse::<usize>().ok() != Some(config.m) {
            return Err(OspError::InvalidConfig(format!(
                "{} was trained with m = {m}, but m = {}",
                path.display(),
                config.m
            )));
        }
    }
    Ok(())
}

enum Outcome {
    Success,
    Failure,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    match execute(cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Failure) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<Outcome> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let jobs = cli.jobs.or(file.jobs);
    let seed = pick(cli.seed, file.seed, 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j < 1 {
            return Err(OspError::InvalidConfig("jobs must be >= 1".into()));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| OspError::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Features(a) => cmd_features(a, &file),
        Command::Label(a) => cmd_label(a, &file),
        Command::Train(a) => cmd_train(a, seed, &file),
        Command::Forecast(a) => cmd_forecast(a, &file),
        Command::Evaluate(a) => cmd_evaluate(a, seed, &file),
        Command::Generate(a) => cmd_generate(a, seed, &file),
    })
}

fn cmd_features(args: &FeaturesArgs, file: &FileConfig) -> Result<Outcome> {
    let frequency = resolve_frequency(args.series.frequency, file)?;
    let series = load_series(&args.series.input, frequency)?;
    let results: Vec<Result<FeatureVector>> = series.par_iter().map(extract_features).collect();
    let mut rows = Vec::new();
    for (s, r) in series.iter().zip(results) {
        match r {
            Ok(fv) => rows.push((s.id().to_string(), fv)),
            Err(e) => warn!("skipping series {}: {e}", s.id()),
        }
    }
    if rows.is_empty() {
        return Err(OspError::InvalidValue(
            "no series long enough for feature extraction".into(),
        ));
    }
    write_features(output_writer(args.output.as_deref())?, &rows)?;
    Ok(Outcome::Success)
}

fn cmd_label(args: &LabelArgs, file: &FileConfig) -> Result<Outcome> {
    let frequency = resolve_frequency(args.series.frequency, file)?;
    let (config, spec) = resolve_segment(&args.segment, frequency, file)?;
    let scale: MaseScale = pick(
        args.mase_scale.clone(),
        file.mase_scale.clone(),
        "suffix".into(),
    )
    .parse()?;
    let series = load_series(&args.series.input, frequency)?;
    let set = Labeler::new(config, spec)
        .with_mase_scale(scale)
        .build_training_set(&series)?;
    match &args.output {
        Some(p) => save_labeled_csv(p, &set.examples)?,
        None => crate::data_io::write_labeled(output_writer(None)?, &set.examples)?,
    }
    eprintln!(
        "labelled {} series, skipped {}",
        set.examples.len(),
        set.skipped.len()
    );
    Ok(Outcome::Success)
}

fn cmd_train(args: &TrainArgs, seed: u64, file: &FileConfig) -> Result<Outcome> {
    let method = resolve_method(&args.method, file)?;
    let params = resolve_gbdt(&args.gbdt, seed, file)?;
    let examples = load_labeled_csv(&args.labels)?;
    let model = train_osp(&examples, method, &params)?;
    save_model(&args.model_out, &model)?;
    println!("trained {method} on {} examples", examples.len());
    println!("top features by gain:");
    for (name, gain) in model.feature_importance().into_iter().take(5) {
        println!("  {name:<20} {gain:.6}");
    }
    Ok(Outcome::Success)
}

fn cmd_forecast(args: &ForecastArgs, file: &FileConfig) -> Result<Outcome> {
    let frequency = resolve_frequency(args.series.frequency, file)?;
    let (config, spec) = resolve_segment(&args.segment, frequency, file)?;
    let fallback = resolve_method(&args.method, file)?;
    let model = load_model(&args.model)?;
    let method = model_method(&model, fallback)?;
    check_model_geometry(&model, &config, &args.model)?;
    let series = load_series(&args.series.input, frequency)?;

    let results: Vec<_> = series
        .par_iter()
        .map(|s| osp_forecast(s, &model, &config, &spec, method))
        .collect();
    let mut w = csv::WriterBuilder::new().from_writer(output_writer(args.output.as_deref())?);
    let mut header = vec!["series_id".to_string(), "method".into(), "interval".into()];
    header.extend((1..=config.h).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    let mut ok = 0;
    for (s, r) in series.iter().zip(results) {
        match r {
            Ok(r) => {
                let mut row = vec![
                    r.series_id,
                    method.name(),
                    r.predicted_interval.get().to_string(),
                ];
                row.extend(r.final_forecast.values.iter().map(|v| v.to_string()));
                w.write_record(&row)?;
                ok += 1;
            }
            Err(e) => warn!("series {} failed: {e}", s.id()),
        }
    }
    w.flush().map_err(|e| OspError::io("<output>", e))?;
    eprintln!("forecast {ok} of {} series", series.len());
    Ok(if ok == 0 {
        Outcome::Failure
    } else {
        Outcome::Success
    })
}

fn cmd_evaluate(args: &EvaluateArgs, seed: u64, file: &FileConfig) -> Result<Outcome> {
    let frequency = resolve_frequency(args.series.frequency, file)?;
    let (config, spec) = resolve_segment(&args.segment, frequency, file)?;
    let fallback = resolve_method(&args.method, file)?;
    let threshold = pick(
        args.cusum_threshold,
        file.cusum_threshold,
        CUSUM_THRESHOLD_95,
    );
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(OspError::InvalidConfig(
            "CUSUM threshold must be positive".into(),
        ));
    }
    let mut models = Vec::new();
    for path in &args.models {
        let model = load_model(path)?;
        check_model_geometry(&model, &config, path)?;
        let method = model_method(&model, fallback)?;
        if models.iter().any(|(m, _)| *m == method) {
            return Err(OspError::InvalidConfig(format!(
                "two models for method {method}"
            )));
        }
        models.push((method, model));
    }
    let series = load_series(&args.series.input, frequency)?;
    let mut eval = EvaluationConfig::new(config, spec, seed);
    eval.cusum_threshold = threshold;
    let report = evaluate_corpus(&series, &models, &eval)?;

    report.write_scores(output_writer(args.output.as_deref())?)?;
    if let Some(p) = &args.summary {
        report.write_summary(output_writer(Some(p))?)?;
    }
    for f in &report.failures {
        let kind = if f.hard { "failed" } else { "skipped" };
        eprintln!("{kind}: {} ({}): {}", f.series_id, f.method, f.reason);
    }
    if args.output.is_some() {
        print!("{}", report.render_table());
    } else {
        eprint!("{}", report.render_table());
    }
    Ok(if report.has_hard_failures() {
        Outcome::Failure
    } else {
        Outcome::Success
    })
}

fn cmd_generate(args: &GenerateArgs, seed: u64, _file: &FileConfig) -> Result<Outcome> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| OspError::io(p, e))?;
            serde_json::from_str(&text)?
        }
        None => SyntheticSpec::default(),
    };
    spec.seed = seed;
    if let Some(c) = args.count {
        spec.count = c;
    }
    if let Some(l) = args.length_min {
        spec.length.0 = l;
    }
    if let Some(l) = args.length_max {
        spec.length.1 = l;
    }
    if let Some(f) = args.frequency {
        spec.frequency = f;
    }
    if let Some(p) = args.break_probability {
        spec.break_probability = p;
    }
    let series = generate_synthetic(&spec)?;
    write_series(output_writer(args.output.as_deref())?, &series)?;
    Ok(Outcome::Success)
}
