//! End-to-end operations behind the command-line subcommands.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Serialize;

use crate::config::RunConfig;
use crate::gateway::{resolve_embedder, Gateway, GatewayRerankScorer, MockScript, RetryPolicy};
use crate::record::RunRecord;
use crate::report::AblationRow;
use crate::results::{evaluate_suite, repeat_path, ResultsError, ResultsHeader, ResultsWriter};
use crate::retrieval::{
    ingest_corpus, Bm25Index, Bm25Params, Corpus, DenseIndex, FusionWeights, IndexDir, RetrievalError,
    RetrievalPipelineConfig, Retriever, StageKind,
};
use crate::sandbox::{assemble_payload, ExecStatus, SandboxConfig, SandboxPool};
use crate::strategy::{strategy_label, AgentConfig, Strategy, StrategyRunner};
use crate::task::{load_tasks, TaskSuite};
use crate::HARNESS_VERSION;

/// Failure classes that map onto process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infra(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Infra(_) => 3,
        }
    }
}

impl From<ResultsError> for HarnessError {
    fn from(e: ResultsError) -> Self {
        match e {
            ResultsError::HeaderMismatch { .. } => HarnessError::Config(e.to_string()),
            other => HarnessError::Infra(other.to_string()),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

pub fn load_suite(path: &Path) -> Result<TaskSuite, HarnessError> {
    load_tasks(path).map_err(config_err)
}

pub fn build_gateway(cfg: &RunConfig) -> Result<Gateway, HarnessError> {
    let mock = match &cfg.gateway.mock_script {
        Some(p) => Some(MockScript::from_path(p).map_err(config_err)?),
        None => None,
    };
    let mut retry = RetryPolicy::default();
    if let Some(n) = cfg.gateway.max_attempts {
        retry.max_attempts = n;
    }
    let mut gw = Gateway::from_env(retry, mock);
    for (provider, ms) in &cfg.gateway.min_interval_ms {
        gw = gw.with_rate_limit(provider, Duration::from_millis(*ms));
    }
    if let Some(log) = &cfg.gateway.call_log {
        gw = gw.with_call_log(log).map_err(|e| HarnessError::Infra(format!("call log {}: {e}", log.display())))?;
    }
    Ok(gw)
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub corpus: Corpus,
    pub chunks: usize,
}

/// Chunks the configured corpus roots into the index directory.
pub fn ingest(cfg: &RunConfig) -> Result<Vec<IngestReport>, HarnessError> {
    let store = IndexDir::new(&cfg.index_dir);
    let mut out = Vec::new();
    for (corpus, roots) in [(Corpus::Docs, &cfg.corpora.docs), (Corpus::Code, &cfg.corpora.code)] {
        if roots.is_empty() {
            continue;
        }
        let ext = cfg.corpora.extensions.get(corpus.as_str()).map(Vec::as_slice);
        let chunks = ingest_corpus(roots, corpus, cfg.corpora.chunking, ext).map_err(config_err)?;
        store.save_chunks(corpus, &chunks).map_err(|e| HarnessError::Infra(e.to_string()))?;
        tracing::info!(corpus = corpus.as_str(), chunks = chunks.len(), "ingested");
        out.push(IngestReport { corpus, chunks: chunks.len() });
    }
    if out.is_empty() {
        return Err(HarnessError::Config("corpora: no docs or code roots configured".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexReport {
    pub corpus: Corpus,
    pub chunks: usize,
    pub dense: bool,
    pub sparse: bool,
}

/// Builds dense and sparse indexes for every ingested corpus.
pub fn index(cfg: &RunConfig, gateway: &Arc<Gateway>) -> Result<Vec<IndexReport>, HarnessError> {
    let store = IndexDir::new(&cfg.index_dir);
    let embedder = resolve_embedder(gateway, &cfg.embedder);
    let metric = cfg.retrieval.as_ref().map(|r| r.metric).unwrap_or_default();
    let mut out = Vec::new();
    for corpus in [Corpus::Docs, Corpus::Code] {
        if !store.chunks_path(corpus).exists() {
            continue;
        }
        let chunks: Vec<Arc<_>> =
            store.load_chunks(corpus).map_err(|e| HarnessError::Infra(e.to_string()))?.into_iter().map(Arc::new).collect();
        let dense = DenseIndex::<f32>::build(chunks.clone(), embedder.as_ref()).map_err(|e| match e {
            RetrievalError::Embedding(_) => HarnessError::Infra(e.to_string()),
            other => config_err(other),
        })?;
        store.save_dense(corpus, &dense, metric, Some(cfg.corpora.chunking)).map_err(|e| HarnessError::Infra(e.to_string()))?;
        let sparse = !chunks.is_empty();
        if sparse {
            let bm25 = Bm25Index::<f64>::build(chunks.clone(), Bm25Params::default()).map_err(config_err)?;
            store.save_sparse(corpus, &bm25).map_err(|e| HarnessError::Infra(e.to_string()))?;
        }
        tracing::info!(corpus = corpus.as_str(), chunks = chunks.len(), embedder = %cfg.embedder, "indexed");
        out.push(IndexReport { corpus, chunks: chunks.len(), dense: true, sparse });
    }
    if out.is_empty() {
        return Err(HarnessError::Config(format!(
            "no chunk store under {}; run `coderag ingest` first",
            cfg.index_dir.display()
        )));
    }
    Ok(out)
}

/// Loads the indexes a retrieval config needs, or a configuration error
/// naming the command that builds them.
pub fn load_retriever(
    cfg: &RunConfig,
    rcfg: &RetrievalPipelineConfig,
    gateway: &Arc<Gateway>,
    suite: &TaskSuite,
) -> Result<Retriever, HarnessError> {
    let store = IndexDir::new(&cfg.index_dir);
    let mut retriever = Retriever::new(resolve_embedder(gateway, &cfg.embedder)).with_leakage_solutions(suite.canonical_solutions());
    if let Some(model) = &cfg.gateway.cross_encoder {
        retriever = retriever.with_cross_scorer(Arc::new(GatewayRerankScorer::new(Arc::clone(gateway), model.clone())));
    }
    for &corpus in &rcfg.corpora {
        let idx = store.load_corpus(corpus, &cfg.embedder).map_err(|e| {
            HarnessError::Config(format!("{e}; run `coderag index --config <file>` to build it"))
        })?;
        retriever = retriever.with_index(corpus, idx);
    }
    retriever
        .check(rcfg)
        .map_err(|e| HarnessError::Config(format!("{e}; run `coderag ingest` and `coderag index` for this config")))?;
    Ok(retriever)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub written: usize,
    pub skipped: usize,
    pub harness_errors: usize,
}

pub fn results_header(cfg: &RunConfig, agent: &AgentConfig, suite: &TaskSuite) -> ResultsHeader {
    ResultsHeader {
        config_hash: cfg.config_hash(),
        suite_hash: suite.content_hash(),
        harness_version: HARNESS_VERSION.to_string(),
        strategy: strategy_label(cfg.strategy, agent),
        model: agent.model_label(),
    }
}

/// Runs `strategy` over the suite with `agent`, writing `output` (resuming
/// it when asked). Returns the number of records written and their harness
/// error count.
#[allow(clippy::too_many_arguments)]
fn run_into_file(
    runner: &StrategyRunner<'_>,
    suite: &TaskSuite,
    strategy: Strategy,
    agent: &AgentConfig,
    header: &ResultsHeader,
    output: &Path,
    resume: bool,
    concurrency: usize,
) -> Result<(usize, usize, usize), HarnessError> {
    let (mut writer, done) = if resume {
        ResultsWriter::resume(output, header)?
    } else {
        (ResultsWriter::create(output, header)?, HashSet::new())
    };
    let skipped = suite.iter().filter(|t| done.contains(&t.task_id)).count();
    let mut harness_errors = 0;
    let written = evaluate_suite(runner, suite, strategy, agent, concurrency, &done, |r: RunRecord| {
        if r.final_status == ExecStatus::HarnessError {
            harness_errors += 1;
        }
        writer.append(&r)
    })
    .map_err(config_err)??;
    Ok((written, skipped, harness_errors))
}

/// The `run` subcommand: every repeat of the configured evaluation.
pub fn execute_run(cfg: &RunConfig) -> Result<RunOutcome, HarnessError> {
    let suite = load_suite(&cfg.suite_path)?;
    let gateway = Arc::new(build_gateway(cfg)?);
    let agent = cfg.agent_config();
    let retriever = match &agent.retrieval {
        Some(r) => Some(load_retriever(cfg, r, &gateway, &suite)?),
        None => None,
    };
    let pool = SandboxPool::new(cfg.sandbox.clone(), Some(cfg.concurrency));
    let mut runner = StrategyRunner::new(&gateway, &pool);
    if let Some(r) = &retriever {
        runner = runner.with_retriever(r);
    }
    runner.preflight(cfg.strategy, &agent).map_err(config_err)?;
    let header = results_header(cfg, &agent, &suite);
    let mut outcome = RunOutcome { files: Vec::new(), written: 0, skipped: 0, harness_errors: 0 };
    for rep in 1..=cfg.repeats {
        let path = repeat_path(&cfg.output_path, rep, cfg.repeats);
        let (written, skipped, errors) =
            run_into_file(&runner, &suite, cfg.strategy, &agent, &header, &path, cfg.resume, cfg.concurrency)?;
        tracing::info!(file = %path.display(), written, skipped, harness_errors = errors, "run complete");
        outcome.files.push(path);
        outcome.written += written;
        outcome.skipped += skipped;
        outcome.harness_errors += errors;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckFailure {
    pub task_id: String,
    pub status: ExecStatus,
    pub feedback: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckReport {
    pub total: usize,
    pub passed: usize,
    pub failures: Vec<SelfcheckFailure>,
}

impl SelfcheckReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Runs every canonical solution through the sandbox.
pub fn selfcheck(suite: &TaskSuite, sandbox: &SandboxConfig, concurrency: usize) -> SelfcheckReport {
    let pool = SandboxPool::new(sandbox.clone(), Some(concurrency));
    let tasks = suite.tasks();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(vec![None; tasks.len()]);
    std::thread::scope(|scope| {
        for _ in 0..concurrency.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let r = pool.execute(&assemble_payload(task, &task.canonical_solution));
                results.lock().expect("selfcheck lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("selfcheck lock");
    let mut failures = Vec::new();
    for (task, r) in tasks.iter().zip(results) {
        let r = r.expect("every task executed");
        if !r.passed() {
            failures.push(SelfcheckFailure { task_id: task.task_id.clone(), status: r.status, feedback: r.feedback });
        }
    }
    SelfcheckReport { total: tasks.len(), passed: tasks.len() - failures.len(), failures }
}

pub const ABLATION_DEPTHS: [usize; 4] = [4, 10, 20, 30];

/// The scoring cascades swept by `ablate-retrieval`.
pub fn ablation_cascades() -> Vec<(Vec<StageKind>, Option<FusionWeights>)> {
    use StageKind::*;
    vec![
        (vec![Dense], None),
        (vec![Dense, Bm25, CosineRerank], None),
        (vec![Dense, Bm25, CosineRerank, CrossRerank], None),
        (vec![Dense, Bm25], Some(FusionWeights::default())),
    ]
}

pub fn ablation_corpora() -> Vec<Vec<Corpus>> {
    vec![vec![Corpus::Docs], vec![Corpus::Docs, Corpus::Code]]
}

fn cascade_label(stages: &[StageKind], fusion: Option<FusionWeights>) -> String {
    let names: Vec<String> = stages.iter().map(ToString::to_string).collect();
    match fusion {
        Some(w) => format!("fusion({}:{})", w.w_dense, w.w_sparse),
        None => names.join(">"),
    }
}

/// Sweeps depth, corpora and cascade around the configured retrieval
/// settings. Each cell's results file goes under `out_dir`.
pub fn ablate_retrieval(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<AblationRow>, HarnessError> {
    if cfg.strategy == Strategy::ZeroShot {
        return Err(HarnessError::Config("strategy: ablate-retrieval needs strategy = \"rag\" or \"agent\"".into()));
    }
    let suite = load_suite(&cfg.suite_path)?;
    let gateway = Arc::new(build_gateway(cfg)?);
    let pool = SandboxPool::new(cfg.sandbox.clone(), Some(cfg.concurrency));
    let base = cfg.retrieval.clone().unwrap_or_default();
    let mut rows = Vec::new();
    for corpora in ablation_corpora() {
        for (cascade, fusion) in ablation_cascades() {
            let mut rcfg = RetrievalPipelineConfig { corpora: corpora.clone(), cascade: cascade.clone(), fusion, ..base.clone() };
            let retriever = load_retriever(cfg, &rcfg, &gateway, &suite)?;
            for depth in ABLATION_DEPTHS {
                rcfg.depth_k = depth;
                rcfg.candidate_pool = base.candidate_pool.map(|p| p.max(depth));
                let mut cell = cfg.clone();
                cell.retrieval = Some(rcfg.clone());
                let agent = cell.agent_config();
                let runner = StrategyRunner::new(&gateway, &pool).with_retriever(&retriever);
                let header = results_header(&cell, &agent, &suite);
                let corpora_label = corpora.iter().map(|c| c.as_str()).collect::<Vec<_>>().join("+");
                let cascade_name = cascade_label(&cascade, fusion);
                let file = out_dir.join(format!(
                    "{}__{}__k{}.jsonl",
                    corpora_label.replace('+', "-"),
                    cascade_name.replace(['>', '(', ')', ':'], "_"),
                    depth
                ));
                let mut records = Vec::new();
                let mut writer = ResultsWriter::create(&file, &header)?;
                evaluate_suite(&runner, &suite, cell.strategy, &agent, cell.concurrency, &HashSet::new(), |r| {
                    writer.append(&r)?;
                    records.push(r);
                    Ok(())
                })
                .map_err(config_err)??;
                tracing::info!(corpora = %corpora_label, cascade = %cascade_name, depth, "ablation cell done");
                rows.push(AblationRow::from_records(corpora_label, cascade_name, depth, &records));
            }
        }
    }
    Ok(rows)
}
