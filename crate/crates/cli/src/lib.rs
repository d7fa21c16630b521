//! `uapr` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use uapr_core::io::{
    read_descriptor_file, read_report, write_descriptor_file, write_report, ReportDocument, ReportFormat,
    Timing,
};
use uapr_core::protocol::{BATCH_REVISIT_RADIUS, SESSION_EXCLUSION_WINDOW, SESSION_REVISIT_RADIUS};
use uapr_core::synth::{generate, Layout, WorldSpec};
use uapr_core::{
    run_batch, run_session, split_by_error_type, LabeledRun, Method, MethodConfig, MlsConvention,
    ProtocolConfig, UncertaintySource,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

pub const DEFAULT_TOP_K: usize = 25;
pub const SEED_ENV: &str = "UAPR_SEED";

#[derive(Debug, Parser)]
#[command(name = "uapr", version, about = "Evaluate uncertainty estimates for place recognition")]
struct Cli {
    /// Worker threads for evaluation (default: available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score every query against a fixed database.
    EvalBatch(EvalBatchArgs),
    /// Score a single timed run against its own past.
    EvalSession(EvalSessionArgs),
    /// Generate a synthetic world from a JSON spec.
    Synth(SynthArgs),
    /// Export the curves of a report as CSV files.
    Curves(ReportDirArgs),
    /// Re-evaluate a report separately for each error type.
    SplitErrors(ReportDirArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Standard,
    Ppe,
    Stun,
    Dropout,
    Ensemble,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Standard => Method::Standard,
            MethodArg::Ppe => Method::Ppe,
            MethodArg::Stun => Method::Stun,
            MethodArg::Dropout => Method::Dropout,
            MethodArg::Ensemble => Method::Ensemble,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    NegativeMeanSimilarity,
    SimilarityVariance,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MlsArg {
    Difference,
    Sum,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Structured,
    CsvCurves,
}

#[derive(Debug, Args)]
struct MethodArgs {
    #[arg(long, value_enum)]
    method: MethodArg,

    /// Candidate list length kept per query.
    #[arg(long, default_value_t = DEFAULT_TOP_K, value_parser = parse_top_k)]
    top_k: usize,

    /// Uncertainty reported by the dropout and ensemble methods.
    #[arg(long, value_enum, default_value = "negative-mean-similarity")]
    uncertainty_source: SourceArg,

    /// Mean term of the mutual likelihood score.
    #[arg(long, value_enum, default_value = "difference")]
    mls_convention: MlsArg,
}

impl MethodArgs {
    fn config(&self) -> MethodConfig {
        MethodConfig::new(self.method.into(), self.top_k)
            .with_uncertainty_source(match self.uncertainty_source {
                SourceArg::NegativeMeanSimilarity => UncertaintySource::NegativeMeanSimilarity,
                SourceArg::SimilarityVariance => UncertaintySource::SimilarityVariance,
            })
            .with_mls_convention(match self.mls_convention {
                MlsArg::Difference => MlsConvention::Difference,
                MlsArg::Sum => MlsConvention::Sum,
            })
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Report path (a directory for csv-curves).
    #[arg(long)]
    out: PathBuf,

    #[arg(long, value_enum, default_value = "structured")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct EvalBatchArgs {
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    database: PathBuf,
    /// Revisit radius in meters.
    #[arg(long, default_value_t = BATCH_REVISIT_RADIUS, value_parser = parse_radius)]
    radius: f64,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct EvalSessionArgs {
    #[arg(long)]
    run: PathBuf,
    /// Exclusion window in seconds.
    #[arg(long, default_value_t = SESSION_EXCLUSION_WINDOW, value_parser = parse_window)]
    exclusion: f64,
    /// Revisit radius in meters.
    #[arg(long, default_value_t = SESSION_REVISIT_RADIUS, value_parser = parse_radius)]
    radius: f64,
    #[command(flatten)]
    method: MethodArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON world spec.
    #[arg(long)]
    spec: PathBuf,
    /// Output files are named `<prefix>_queries.uapr` and `<prefix>_database.uapr`,
    /// or `<prefix>_run.uapr` for session worlds.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Debug, Args)]
struct ReportDirArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_top_k(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(k),
        Ok(_) => Err("must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_radius(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(r) if r > 0.0 => Ok(r),
        Ok(_) => Err("must be positive".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_window(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(w) if w >= 0.0 && w.is_finite() => Ok(w),
        Ok(_) => Err("must be finite and non-negative".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Invocation problem found after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n.into());
    }
    let pool = pool.build().context("starting worker pool")?;
    match cli.command {
        Command::EvalBatch(args) => pool.install(|| eval_batch(&args)),
        Command::EvalSession(args) => pool.install(|| eval_session(&args)),
        Command::Synth(args) => synth(&args),
        Command::Curves(args) => curves(&args),
        Command::SplitErrors(args) => split_errors(&args),
    }
}

fn load(path: &Path, what: &str) -> Result<uapr_core::DescriptorSet> {
    read_descriptor_file(path).with_context(|| format!("reading {what} file {}", path.display()))
}

fn emit(report: &ReportDocument, output: &OutputArgs) -> Result<()> {
    let format = match output.format {
        FormatArg::Structured => ReportFormat::Structured,
        FormatArg::CsvCurves => ReportFormat::CsvCurves,
    };
    write_report(report, &output.out, format)
        .with_context(|| format!("writing report to {}", output.out.display()))?;
    print_summary(report);
    Ok(())
}

fn fmt_metric(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn print_summary(report: &ReportDocument) {
    let m = &report.metrics;
    let c = &report.counts;
    println!(
        "{:<9} queries {:>6}  skipped {:>5}  R@1 {:>6}  R@{} {:>6}  AuROC {:>6}  AuER {:>7}",
        report.method.method.name(),
        c.total,
        c.skipped_empty_visible,
        fmt_metric(m.recall_at_1, 2),
        m.k,
        fmt_metric(m.recall_at_k, 2),
        fmt_metric(m.auroc, 2),
        fmt_metric(m.auer, 4),
    );
}

fn eval_batch(args: &EvalBatchArgs) -> Result<()> {
    let queries = load(&args.queries, "query")?;
    let database = load(&args.database, "database")?;
    let protocol = ProtocolConfig::batch().with_radius(args.radius);
    let method = args.method.config();
    let start = Instant::now();
    let run = run_batch(&queries, &database, &protocol, &method)
        .with_context(|| format!("evaluating {}", args.queries.display()))?;
    let timing = Timing::new(start.elapsed(), run.counts.total);
    let inputs = vec![args.queries.display().to_string(), args.database.display().to_string()];
    emit(&ReportDocument::new(method, protocol, inputs, &run, timing), &args.output)
}

fn eval_session(args: &EvalSessionArgs) -> Result<()> {
    let set = load(&args.run, "run")?;
    let protocol = ProtocolConfig::session().with_radius(args.radius).with_exclusion_window(args.exclusion);
    let method = args.method.config();
    let start = Instant::now();
    let run = run_session(&set, &protocol, &method)
        .with_context(|| format!("evaluating {}", args.run.display()))?;
    let timing = Timing::new(start.elapsed(), run.counts.total);
    let inputs = vec![args.run.display().to_string()];
    emit(&ReportDocument::new(method, protocol, inputs, &run, timing), &args.output)
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn synth(args: &SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec)
        .with_context(|| format!("reading spec {}", args.spec.display()))?;
    let mut spec: WorldSpec =
        serde_json::from_str(&text).with_context(|| format!("parsing spec {}", args.spec.display()))?;
    if let Ok(seed) = std::env::var(SEED_ENV) {
        spec.seed = seed
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{SEED_ENV}={seed:?} is not an unsigned integer")))?;
    }
    let data = generate(&spec).context("generating world")?;
    if let Some(parent) = args.out_prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let outputs = match spec.layout {
        Layout::Batch => vec![
            (prefixed(&args.out_prefix, "_queries.uapr"), &data.queries),
            (prefixed(&args.out_prefix, "_database.uapr"), &data.database),
        ],
        Layout::Session { .. } => vec![(prefixed(&args.out_prefix, "_run.uapr"), &data.queries)],
    };
    for (path, set) in outputs {
        write_descriptor_file(set, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("{} ({} entries, {} members)", path.display(), set.len(), set.member_count());
    }
    Ok(())
}

fn load_report(path: &Path) -> Result<ReportDocument> {
    read_report(path).with_context(|| format!("reading report {}", path.display()))
}

fn curves(args: &ReportDirArgs) -> Result<()> {
    let report = load_report(&args.report)?;
    let files = write_report(&report, &args.out_dir, ReportFormat::CsvCurves)
        .with_context(|| format!("writing curves to {}", args.out_dir.display()))?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn split_errors(args: &ReportDirArgs) -> Result<()> {
    let report = load_report(&args.report)?;
    let (incorrect_match, no_match) = split_by_error_type(&report.labeled_run());
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let parts: [(&str, &LabeledRun); 2] = [("incorrect_match", &incorrect_match), ("no_match", &no_match)];
    for (name, run) in parts {
        let sub = report.with_run(run);
        let path = args.out_dir.join(format!("{name}.json"));
        write_report(&sub, &path, ReportFormat::Structured)
            .with_context(|| format!("writing {}", path.display()))?;
        println!(
            "{name:<16} predictions {:>6}  AuROC {:>6}  AuER {:>7}  -> {}",
            run.predictions.len(),
            fmt_metric(sub.metrics.auroc, 2),
            fmt_metric(sub.metrics.auer, 4),
            path.display()
        );
    }
    Ok(())
}
