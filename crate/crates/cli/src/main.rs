//! `cryptopulse`: command-line driver for the forecasting pipeline.

mod error;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use cryptopulse::data::{parse_raw_price_csv, DatasetLayout, Manifest};
use cryptopulse::indicators::{compute_feature_rows, write_feature_csv};
use cryptopulse::model::{read_predictions_csv, write_predictions_csv};
use cryptopulse::sentiment::{
    default_example_bank, label_articles, load_example_bank, ChatClient, HttpChatClient, LabelCache, LabelerConfig,
    LlmSettings, MockClient, PromptConfig, ReplayClient, SentimentLabel,
};
use cryptopulse::synthetic;
use cryptopulse::train::{
    build_report, collect_results, evaluate_run, execute_runs, load_run_result, run_dir, train_and_record,
    BatchOptions, ModelKind, RunManifest, RunSpec, RunStatus, Section, TrainConfig, MANIFEST_FILE, PREDICTIONS_FILE,
};
use cryptopulse::Variant;

use error::CliError;

// Writes to stdout, dropping output once the reader has gone away (e.g. `| head`).
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "cryptopulse", version, about = "Next-day cryptocurrency close forecasting")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw price CSVs and news into the canonical dataset layout
    Ingest(IngestArgs),
    /// Write per-asset feature CSVs (prices plus the seven indicators)
    Indicators(IndicatorsArgs),
    /// Label news articles and fill the sentiment cache
    LabelSentiment(LabelArgs),
    /// Train one (model, asset, variant, seed) cell, or a grid of them
    Train(TrainArgs),
    /// Re-score recorded runs from their checkpoints
    Evaluate(EvaluateArgs),
    /// Train the full, xs and xi variants and report them side by side
    Ablate(AblateArgs),
    /// Aggregate completed runs into a results table
    Report(ReportArgs),
    /// Emit prediction and error charts as SVG plus CSV
    Plot(PlotArgs),
    /// Generate a synthetic dataset
    Synth(SynthArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of raw price CSVs, one per asset; the symbol is the file stem
    #[arg(long)]
    prices: PathBuf,
    /// News JSONL with date, title and content fields
    #[arg(long)]
    news: Option<PathBuf>,
    /// Output dataset directory
    #[arg(long)]
    out: PathBuf,
    /// Target assets in report order (default: every ingested symbol, sorted)
    #[arg(long, value_delimiter = ',')]
    targets: Vec<String>,
    /// Macro assets (default: the first five targets)
    #[arg(long = "macro", value_delimiter = ',')]
    macro_symbols: Vec<String>,
    /// Observation window length in days
    #[arg(long, default_value_t = 7)]
    window: usize,
    /// Leave a target out of its own macro block
    #[arg(long)]
    exclude_target_from_macro: bool,
}

#[derive(Args)]
struct IndicatorsArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Assets to process (default: targets and macro assets)
    #[arg(long, value_delimiter = ',')]
    asset: Vec<String>,
    /// Output directory (default: <data>/features)
    #[arg(long)]
    out: Option<PathBuf>,
    /// TOML config whose [indicators] table sets the lookbacks
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Client: live, mock:<label> or replay:<file>
    #[arg(long, default_value = "live")]
    llm: String,
    /// TOML file with endpoint, api_key, model and timeout_secs
    #[arg(long)]
    llm_config: Option<PathBuf>,
    /// Chat-completion endpoint (overrides file and environment)
    #[arg(long)]
    endpoint: Option<String>,
    /// Model identifier sent with each request
    #[arg(long)]
    llm_model: Option<String>,
    /// Concurrent requests
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Attempts per article before it is recorded as failed
    #[arg(long, default_value_t = 5)]
    max_attempts: u32,
    /// Minimum spacing between requests, in milliseconds
    #[arg(long, default_value_t = 50)]
    min_interval_ms: u64,
    /// Traders named in the prompt
    #[arg(long, default_value_t = 3)]
    traders: usize,
    /// Examples per label
    #[arg(long, default_value_t = 1)]
    shots: usize,
    /// Few-shot example bank JSONL (default: <data>/sentiment/examples.jsonl, else built-in)
    #[arg(long)]
    examples: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct HyperArgs {
    /// TOML training config
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Seeds for grid runs
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory
    #[arg(long, required_unless_present = "manifest")]
    data: Option<PathBuf>,
    /// Root of the run directories
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long)]
    asset: Option<String>,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    variant: Variant,
    /// Seed of a single run (default: every configured seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Every model and target asset (restricted by --model/--asset if given)
    #[arg(long)]
    all: bool,
    /// Retrain runs that are already complete
    #[arg(long)]
    force: bool,
    /// Parallel training runs
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Pool all targets into one training set per model, variant and seed
    #[arg(long)]
    shared: bool,
    /// Repeat the run a manifest describes
    #[arg(long, conflicts_with_all = ["all", "model", "asset", "seed", "data"])]
    manifest: Option<PathBuf>,
    /// Output directory for --manifest (default: the manifest's directory)
    #[arg(long, requires = "manifest")]
    out: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    #[arg(long)]
    asset: Option<String>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Section to score: train, validation or test
    #[arg(long, default_value = "test", value_parser = parse_section)]
    section: Section,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    #[arg(long, value_parser = parse_model, default_value = "cryptopulse", value_delimiter = ',')]
    model: Vec<ModelKind>,
    /// Assets (default: every target)
    #[arg(long, value_delimiter = ',')]
    asset: Vec<String>,
    #[arg(long, value_parser = parse_variant, default_value = "full,xs,xi", value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long)]
    force: bool,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    hyper: HyperArgs,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    /// Dataset whose target order sets the row order (default: alphabetical)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report only the first k assets and add their average row
    #[arg(long)]
    top: Option<usize>,
    /// Directory for report.csv and report.txt (default: the runs root)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
    #[arg(long, value_parser = parse_model, default_value = "cryptopulse")]
    model: ModelKind,
    #[arg(long)]
    asset: String,
    #[arg(long, value_parser = parse_variant, default_value = "full")]
    variant: Variant,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (default: <runs>/plots)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Smooth periodic target with leading macro copies
    Sinusoid,
    /// Random walk whose news sentiment reveals the next move
    SentimentSign,
    /// Correlated random walks, six assets
    Market,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 600)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

fn parse_section(s: &str) -> Result<Section, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { error::USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Indicators(a) => indicators(a),
        Command::LabelSentiment(a) => label_sentiment(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Ablate(a) => ablate(a),
        Command::Report(a) => report(a),
        Command::Plot(a) => plot_run(a),
        Command::Synth(a) => synth(a),
    }
}

fn ingest(a: IngestArgs) -> Result<(), CliError> {
    let layout = DatasetLayout::new(&a.out);
    let mut found = Vec::new();
    let entries = fs::read_dir(&a.prices).map_err(|e| CliError::data(format!("{}: {e}", a.prices.display())))?;
    for entry in entries {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("csv")) != Some(true) {
            continue;
        }
        let symbol = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::data(format!("{}: unusable file name", path.display())))?
            .to_ascii_uppercase();
        let f = fs::File::open(&path)?;
        let series = parse_raw_price_csv(f, &symbol, &path.display().to_string())?;
        layout.write_series(&series)?;
        outln!("{symbol}: {} days {} .. {}", series.len(), series.bars()[0].date, series.bars()[series.len() - 1].date);
        found.push(symbol);
    }
    if found.is_empty() {
        return Err(CliError::data(format!("no CSV files in {}", a.prices.display())));
    }
    found.sort();
    let upper = |v: Vec<String>| v.into_iter().map(|s| s.to_ascii_uppercase()).collect::<Vec<_>>();
    let targets = if a.targets.is_empty() { found.clone() } else { upper(a.targets) };
    let macro_symbols = if a.macro_symbols.is_empty() {
        targets.iter().take(5).cloned().collect()
    } else {
        upper(a.macro_symbols)
    };
    for s in targets.iter().chain(&macro_symbols) {
        if !found.contains(s) {
            return Err(CliError::data(format!("{s} has no price file in {}", a.prices.display())));
        }
    }
    let manifest = Manifest {
        target_symbols: targets,
        macro_symbols,
        window_length: a.window,
        exclude_target_from_macro: a.exclude_target_from_macro,
    };
    manifest.validate()?;
    layout.write_manifest(&manifest)?;
    if let Some(news) = a.news {
        let articles = cryptopulse::data::load_news_jsonl(&news)?;
        let f = fs::File::create(layout.news_path())?;
        cryptopulse::data::write_news_jsonl(&articles, std::io::BufWriter::new(f))?;
        outln!("news: {} articles", articles.len());
    }
    outln!("wrote {}", layout.root.display());
    Ok(())
}

fn indicators(a: IndicatorsArgs) -> Result<(), CliError> {
    let layout = DatasetLayout::new(&a.data);
    let manifest = layout.read_manifest()?;
    let cfg = TrainConfig::resolve(a.config.as_deref(), env_var)?;
    let assets = if a.asset.is_empty() {
        let mut v = manifest.target_symbols.clone();
        for m in &manifest.macro_symbols {
            if !v.contains(m) {
                v.push(m.clone());
            }
        }
        v
    } else {
        a.asset
    };
    let out = a.out.unwrap_or_else(|| layout.root.join("features"));
    fs::create_dir_all(&out)?;
    for s in assets {
        let series = layout.load_series(&s)?;
        let rows = compute_feature_rows(&series, &cfg.indicators)?;
        let path = out.join(format!("{s}.csv"));
        write_feature_csv(&rows, fs::File::create(&path)?).map_err(|e| CliError::data(e.to_string()))?;
        outln!("{s}: {} rows -> {}", rows.len(), path.display());
    }
    Ok(())
}

fn env_var(k: &str) -> Option<String> {
    std::env::var(k).ok()
}

fn llm_settings(a: &LabelArgs) -> Result<LlmSettings, CliError> {
    // flags > file > environment > defaults
    let mut s = LlmSettings::default().with_env();
    if let Some(path) = &a.llm_config {
        let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let file: LlmSettingsFile =
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        s.endpoint = file.endpoint.unwrap_or(s.endpoint);
        s.api_key = file.api_key.or(s.api_key);
        s.model = file.model.unwrap_or(s.model);
        s.timeout_secs = file.timeout_secs.unwrap_or(s.timeout_secs);
    }
    if let Some(e) = &a.endpoint {
        s.endpoint = e.clone();
    }
    if let Some(m) = &a.llm_model {
        s.model = m.clone();
    }
    Ok(s)
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct LlmSettingsFile {
    endpoint: Option<String>,
    api_key: Option<String>,
    model: Option<String>,
    timeout_secs: Option<u64>,
}

fn label_sentiment(a: LabelArgs) -> Result<(), CliError> {
    let layout = DatasetLayout::new(&a.data);
    let articles = layout.load_news()?;
    let client: Box<dyn ChatClient> = match a.llm.split_once(':') {
        None if a.llm == "live" => Box::new(HttpChatClient::new(llm_settings(&a)?)),
        Some(("mock", label)) => {
            let label: SentimentLabel = label.parse().map_err(|_| CliError::usage(format!("bad mock label {label:?}")))?;
            Box::new(MockClient::new(label))
        }
        Some(("replay", file)) => {
            Box::new(ReplayClient::from_file(Path::new(file)).map_err(|e| CliError::usage(e.to_string()))?)
        }
        _ => return Err(CliError::usage(format!("--llm must be live, mock:<label> or replay:<file>, got {:?}", a.llm))),
    };
    let bank_path = a.examples.clone().unwrap_or_else(|| layout.examples_path());
    let bank = if bank_path.exists() {
        load_example_bank(&bank_path)?
    } else if a.examples.is_some() {
        return Err(CliError::usage(format!("{}: no such example bank", bank_path.display())));
    } else {
        default_example_bank()
    };
    let prompt = PromptConfig::new(a.traders, a.shots, &bank)?;
    let mut cache = LabelCache::open(&layout.label_cache_path())?;
    let cfg = LabelerConfig {
        max_attempts: a.max_attempts,
        workers: a.workers,
        min_request_interval: std::time::Duration::from_millis(a.min_interval_ms),
        ..LabelerConfig::default()
    };
    let report = label_articles(&articles, &prompt, client.as_ref(), &mut cache, &cfg)?;
    outln!(
        "{} articles: {} from cache, {} newly labelled, {} failed, {} client calls ({})",
        report.outcomes.len(),
        report.cache_hits(),
        report.outcomes.len() - report.cache_hits() - report.failure_count(),
        report.failure_count(),
        report.client_calls,
        if client.is_live() { "live" } else { "offline" }
    );
    if report.failure_count() > 0 {
        return Err(CliError::new(
            error::EXTERNAL,
            format!("{} articles could not be labelled; rerun to retry them", report.failure_count()),
        ));
    }
    Ok(())
}

fn resolve_config(h: &HyperArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::resolve(h.config.as_deref(), env_var)?;
    if let Some(v) = h.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = h.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = h.lr0 {
        cfg.lr0 = v;
    }
    if let Some(v) = h.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = h.d_model {
        cfg.d_model = v;
    }
    if let Some(v) = h.patience {
        cfg.patience = v;
    }
    if !h.seeds.is_empty() {
        cfg.seeds = h.seeds.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_statuses(statuses: &[(RunSpec, RunStatus)]) -> Result<(), CliError> {
    let mut first_failure = None;
    for (spec, st) in statuses {
        let tag = format!("{} {} {} seed{}", spec.model, spec.asset, spec.variant, spec.seed);
        match st {
            RunStatus::Completed(r) => outln!(
                "done     {tag}: test MAE {:.4} MSE {:.4} CORR {:.4} (best epoch {})",
                r.test.mae, r.test.mse, r.test.corr, r.best_epoch
            ),
            RunStatus::Skipped(r) => outln!("skipped  {tag}: already complete (test MAE {:.4})", r.test.mae),
            RunStatus::Failed(msg) => {
                outln!("failed   {tag}: {msg}");
                first_failure.get_or_insert_with(|| msg.clone());
            }
        }
    }
    match first_failure {
        None => Ok(()),
        Some(msg) => {
            let failed = statuses.iter().filter(|(_, s)| matches!(s, RunStatus::Failed(_))).count();
            let code = if msg.contains("diverged") || msg.contains("non-finite") {
                error::NUMERIC
            } else {
                error::DATA
            };
            Err(CliError::new(code, format!("{failed} run(s) failed; first: {msg}")))
        }
    }
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    if let Some(path) = &a.manifest {
        let manifest = RunManifest::load(path)?;
        let dir = a
            .out
            .clone()
            .unwrap_or_else(|| path.parent().map(Path::to_path_buf).unwrap_or_default());
        let before = load_run_result(path.parent().unwrap_or(Path::new(".")))?;
        let r = train_and_record(&manifest, &dir)?;
        outln!(
            "reproduced {} {} {} seed{}: test MAE {} MSE {} CORR {}",
            manifest.model, manifest.asset, manifest.variant, manifest.seed, r.test.mae, r.test.mse, r.test.corr
        );
        if let Some(b) = before {
            let diff = [b.test.mae - r.test.mae, b.test.mse - r.test.mse, b.test.corr - r.test.corr]
                .iter()
                .fold(0.0f64, |m, d| m.max(d.abs()));
            outln!("max |difference| from the recorded metrics: {diff:e}");
        }
        return Ok(());
    }
    let data = a.data.as_ref().expect("clap enforces --data");
    let layout = DatasetLayout::new(data);
    let ds = layout.read_manifest()?;
    let cfg = resolve_config(&a.hyper)?;
    let models = match (a.all, a.model) {
        (_, Some(m)) => vec![m],
        (true, None) => ModelKind::ALL.to_vec(),
        (false, None) => return Err(CliError::usage("--model is required unless --all is given")),
    };
    let assets = match (a.all, &a.asset) {
        (_, Some(s)) => vec![s.clone()],
        (true, None) => ds.target_symbols.clone(),
        (false, None) => return Err(CliError::usage("--asset is required unless --all is given")),
    };
    for s in &assets {
        if !ds.target_symbols.contains(s) {
            return Err(CliError::usage(format!("{s} is not a target asset of {}", data.display())));
        }
    }
    let seeds = a.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    let specs = RunSpec::grid(&models, &assets, &[a.variant], &seeds);
    let opts = BatchOptions {
        force: a.force,
        workers: a.workers,
        shared: a.shared,
    };
    let statuses = execute_runs(&specs, &layout, &cfg, &a.runs, &opts)?;
    print_statuses(&statuses)
}

fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let results = collect_results(&a.runs)?;
    let selected: Vec<_> = results
        .iter()
        .filter(|r| a.model.is_none_or(|m| m == r.manifest.model))
        .filter(|r| a.asset.as_ref().is_none_or(|s| *s == r.manifest.asset))
        .filter(|r| a.variant.is_none_or(|v| v == r.manifest.variant))
        .collect();
    if selected.is_empty() {
        return Err(CliError::data(format!("no completed runs under {} match", a.runs.display())));
    }
    outln!("asset,model,variant,seed,MAE,MSE,CORR");
    for r in selected {
        let dir = run_dir(&a.runs, &r.manifest.spec());
        let (m, _) = evaluate_run(&dir, a.section)?;
        outln!(
            "{},{},{},{},{},{},{}",
            r.manifest.asset, r.manifest.model, r.manifest.variant, r.manifest.seed, m.mae, m.mse, m.corr
        );
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let layout = DatasetLayout::new(&a.data);
    let ds = layout.read_manifest()?;
    let cfg = resolve_config(&a.hyper)?;
    let assets = if a.asset.is_empty() { ds.target_symbols.clone() } else { a.asset.clone() };
    let specs = RunSpec::grid(&a.model, &assets, &a.variants, &cfg.seeds);
    let opts = BatchOptions {
        force: a.force,
        workers: a.workers,
        shared: false,
    };
    let statuses = execute_runs(&specs, &layout, &cfg, &a.runs, &opts)?;
    let outcome = print_statuses(&statuses);
    let results: Vec<_> = statuses
        .into_iter()
        .filter_map(|(_, s)| match s {
            RunStatus::Completed(r) | RunStatus::Skipped(r) => Some(r),
            RunStatus::Failed(_) => None,
        })
        .collect();
    out!("{}", build_report(&results, &assets, &[]).to_text());
    outcome
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let results = collect_results(&a.runs)?;
    if results.is_empty() {
        return Err(CliError::data(format!("no completed runs under {}", a.runs.display())));
    }
    let mut assets: Vec<String> = match &a.data {
        Some(d) => DatasetLayout::new(d).read_manifest()?.target_symbols,
        None => {
            let mut v: Vec<String> = results.iter().map(|r| r.manifest.asset.clone()).collect();
            v.sort();
            v.dedup();
            v
        }
    };
    let tops = match a.top {
        Some(k) => {
            if k == 0 || k > assets.len() {
                return Err(CliError::usage(format!("--top {k} needs between 1 and {} assets", assets.len())));
            }
            assets.truncate(k);
            vec![k]
        }
        None => vec![10, 15, 20],
    };
    let report = build_report(&results, &assets, &tops);
    let out = a.out.unwrap_or_else(|| a.runs.clone());
    fs::create_dir_all(&out)?;
    report
        .write_csv(fs::File::create(out.join("report.csv"))?)
        .map_err(|e| CliError::data(e.to_string()))?;
    let text = report.to_text();
    fs::write(out.join("report.txt"), &text)?;
    out!("{text}");
    Ok(())
}

fn plot_run(a: PlotArgs) -> Result<(), CliError> {
    let spec = RunSpec {
        model: a.model,
        asset: a.asset.clone(),
        variant: a.variant,
        seed: a.seed,
    };
    let dir = run_dir(&a.runs, &spec);
    if !dir.join(MANIFEST_FILE).exists() {
        return Err(CliError::data(format!("no run at {}", dir.display())));
    }
    let records = read_predictions_csv(fs::File::open(dir.join(PREDICTIONS_FILE))?).map_err(CliError::data)?;
    let out = a.out.unwrap_or_else(|| a.runs.join("plots"));
    fs::create_dir_all(&out)?;
    let stem = format!("{}_{}_{}_seed{}", a.model, a.asset, a.variant, a.seed);
    write_predictions_csv(&records, fs::File::create(out.join(format!("{stem}.csv")))?)
        .map_err(|e| CliError::data(e.to_string()))?;
    let labels: Vec<String> = records.iter().map(|r| r.date.to_string()).collect();
    let svg = plot::line_chart(
        &format!("{} {} ({}, seed {}): normalised close", a.asset, a.model, a.variant, a.seed),
        &labels,
        &[
            ("true", records.iter().map(|r| r.truth).collect()),
            ("predicted", records.iter().map(|r| r.pred).collect()),
        ],
    );
    fs::write(out.join(format!("{stem}.svg")), svg)?;

    let results = collect_results(&a.runs)?;
    let report = build_report(&results, std::slice::from_ref(&a.asset), &[]);
    let bars: Vec<(String, f64)> = report
        .rows
        .iter()
        .map(|r| (format!("{} {}", r.model, r.variant), r.mae))
        .collect();
    let mut csv = String::from("model,variant,MAE\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{},{}\n", r.model, r.variant, r.mae));
    }
    fs::write(out.join(format!("mae_{}.csv", a.asset)), csv)?;
    fs::write(
        out.join(format!("mae_{}.svg", a.asset)),
        plot::bar_chart(&format!("{}: test MAE by model", a.asset), &bars),
    )?;
    outln!("wrote charts for {stem} to {}", out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let layout = DatasetLayout::new(&a.out);
    match a.kind {
        SynthKind::Sinusoid => {
            synthetic::write_layout(&synthetic::sinusoid(a.days), &layout)?;
        }
        SynthKind::SentimentSign => {
            synthetic::write_layout(&synthetic::sentiment_sign(a.days, a.seed), &layout)?;
        }
        SynthKind::Market => {
            let symbols = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF"];
            let series = synthetic::random_market(&symbols, a.days, a.seed);
            for s in &series {
                layout.write_series(s)?;
            }
            let names: Vec<String> = symbols.iter().map(|s| s.to_string()).collect();
            layout.write_manifest(&Manifest::new(names.clone(), names[..5].to_vec()))?;
        }
    }
    outln!("wrote {}", layout.root.display());
    Ok(())
}
