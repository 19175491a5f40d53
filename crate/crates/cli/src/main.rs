use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use coderag_core::config::RunConfig;
use coderag_core::harness::{self, HarnessError};
use coderag_core::report::{self, Baseline, GroupBy, OutputFormat, ReportError, ReportSpec};
use coderag_core::sandbox::SandboxConfig;
use coderag_core::strategy::Strategy;

/// Evaluation harness for LLM code generation on unit-tested benchmarks.
#[derive(Parser)]
#[command(name = "coderag", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chunk the configured documentation and source roots.
    Ingest(ConfigArg),
    /// Build dense and BM25 indexes over ingested chunks.
    Index(ConfigArg),
    /// Evaluate the suite under the configured strategy.
    Run(RunArgs),
    /// Sweep retrieval depth, corpora and scoring cascades.
    AblateRetrieval(AblateArgs),
    /// Render summary or tier tables and charts from results files.
    Report(ReportArgs),
    /// Run every canonical solution through the sandbox.
    Selfcheck(SelfcheckArgs),
    /// Compare repeated runs of one configuration.
    Consistency(ConsistencyArgs),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    repeats: Option<u32>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    max_repairs: Option<u32>,
    #[arg(long)]
    generator_model: Option<String>,
    #[arg(long)]
    repair_model: Option<String>,
    /// Per-attempt sandbox timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, short)]
    config: PathBuf,
    /// Directory for per-cell results files and `ablation.csv`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Results files to aggregate.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value = "csv,markdown,svg", value_delimiter = ',')]
    format: Vec<String>,
    #[arg(long, default_value = "model")]
    group_by: GroupBy,
    #[arg(long, default_value = "report")]
    out_dir: PathBuf,
    /// Label for a reference row rendered without a runtime cell.
    #[arg(long, requires = "baseline_rate")]
    baseline_label: Option<String>,
    /// Pass rate of the reference row, in [0, 1].
    #[arg(long, requires = "baseline_label")]
    baseline_rate: Option<f64>,
}

#[derive(Args)]
struct SelfcheckArgs {
    /// Task suite; taken from the config when omitted.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Interpreter command, e.g. `python3` or `/opt/venv/bin/python`.
    #[arg(long)]
    python: Option<String>,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    RunConfig::load(path).map_err(|e| HarnessError::Config(e.to_string()))
}

fn revalidate(cfg: &RunConfig) -> Result<(), HarnessError> {
    cfg.validate().map_err(|e| HarnessError::Config(e.to_string()))
}

fn report_err(e: ReportError) -> HarnessError {
    match e {
        ReportError::Io { .. } => HarnessError::Infra(e.to_string()),
        ReportError::Results(ref r) if matches!(r, coderag_core::results::ResultsError::Io { .. }) => {
            HarnessError::Infra(e.to_string())
        }
        other => HarnessError::Config(other.to_string()),
    }
}

fn cmd_run(args: RunArgs) -> Result<u8, HarnessError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(o) = args.output {
        cfg.output_path = o;
    }
    cfg.resume |= args.resume;
    if let Some(n) = args.repeats {
        cfg.repeats = n;
    }
    if let Some(n) = args.concurrency {
        cfg.concurrency = n;
    }
    if let Some(s) = args.strategy {
        cfg.strategy = s;
    }
    if let Some(n) = args.max_repairs {
        cfg.agent.max_repairs = n;
    }
    if let Some(m) = args.generator_model {
        cfg.agent.generator_model = m;
    }
    if let Some(m) = args.repair_model {
        cfg.agent.repair_model = Some(m);
    }
    if let Some(t) = args.timeout {
        cfg.sandbox.timeout = t;
    }
    revalidate(&cfg)?;
    let outcome = harness::execute_run(&cfg)?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    println!(
        "{} record(s) written, {} task(s) already complete, {} harness error(s)",
        outcome.written, outcome.skipped, outcome.harness_errors
    );
    Ok(if outcome.harness_errors > 0 { 1 } else { 0 })
}

fn cmd_ablate(args: AblateArgs) -> Result<u8, HarnessError> {
    let mut cfg = load_config(&args.config)?;
    if let Some(n) = args.concurrency {
        cfg.concurrency = n;
    }
    revalidate(&cfg)?;
    let rows = harness::ablate_retrieval(&cfg, &args.out_dir)?;
    let csv_path = args.out_dir.join("ablation.csv");
    std::fs::write(&csv_path, report::ablation_csv(&rows))
        .map_err(|e| HarnessError::Infra(format!("{}: {e}", csv_path.display())))?;
    println!("wrote {} ({} cells)", csv_path.display(), rows.len());
    Ok(if rows.iter().any(|r| r.harness_errors > 0) { 1 } else { 0 })
}

fn cmd_report(args: ReportArgs) -> Result<u8, HarnessError> {
    let formats = args
        .format
        .iter()
        .filter(|f| !f.trim().is_empty())
        .map(|f| f.trim().parse::<OutputFormat>())
        .collect::<Result<BTreeSet<_>, _>>()
        .map_err(report_err)?;
    let baseline = match (args.baseline_label, args.baseline_rate) {
        (Some(label), Some(pass_rate)) => Some(Baseline { label, pass_rate }),
        _ => None,
    };
    let spec = ReportSpec { inputs: args.inputs, group_by: args.group_by, baseline, formats, out_dir: args.out_dir };
    let written = match spec.group_by {
        GroupBy::Tier => report::render_tier_breakdown(&spec),
        _ => report::render_summary(&spec),
    }
    .map_err(report_err)?;
    for w in written {
        println!("wrote {}", w.display());
    }
    Ok(0)
}

fn cmd_selfcheck(args: SelfcheckArgs) -> Result<u8, HarnessError> {
    let cfg = match &args.config {
        Some(p) => Some(load_config(p)?),
        None => None,
    };
    let suite_path = args
        .suite
        .or_else(|| cfg.as_ref().map(|c| c.suite_path.clone()))
        .ok_or_else(|| HarnessError::Config("selfcheck needs --suite or --config".into()))?;
    let mut sandbox = cfg.map(|c| c.sandbox).unwrap_or_else(SandboxConfig::default);
    if let Some(t) = args.timeout {
        sandbox.timeout = t;
    }
    if let Some(py) = args.python {
        sandbox.interpreter_command = py.split_whitespace().map(String::from).collect();
    }
    sandbox.validate().map_err(|e| HarnessError::Config(format!("sandbox: {e}")))?;
    let suite = harness::load_suite(&suite_path)?;
    let report = harness::selfcheck(&suite, &sandbox, args.concurrency.max(1));
    for f in &report.failures {
        eprintln!("FAIL {} [{}]: {}", f.task_id, f.status.as_str(), f.feedback.lines().last().unwrap_or(""));
    }
    println!("{}/{} canonical pass", report.passed, report.total);
    if report.failures.iter().any(|f| f.status == coderag_core::ExecStatus::HarnessError) {
        return Err(HarnessError::Infra("sandbox faults during selfcheck".into()));
    }
    Ok(if report.all_passed() { 0 } else { 1 })
}

fn cmd_consistency(args: ConsistencyArgs) -> Result<u8, HarnessError> {
    let r = report::consistency_check(&args.inputs).map_err(report_err)?;
    print!("{}", r.to_markdown());
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8, HarnessError> {
    match cli.command {
        Command::Ingest(a) => {
            let cfg = load_config(&a.config)?;
            for r in harness::ingest(&cfg)? {
                println!("{}: {} chunk(s)", r.corpus, r.chunks);
            }
            Ok(0)
        }
        Command::Index(a) => {
            let cfg = load_config(&a.config)?;
            let gateway = Arc::new(harness::build_gateway(&cfg)?);
            for r in harness::index(&cfg, &gateway)? {
                println!("{}: {} chunk(s), dense {}, bm25 {}", r.corpus, r.chunks, r.dense, r.sparse);
            }
            Ok(0)
        }
        Command::Run(a) => cmd_run(a),
        Command::AblateRetrieval(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
        Command::Selfcheck(a) => cmd_selfcheck(a),
        Command::Consistency(a) => cmd_consistency(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CODERAG_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
