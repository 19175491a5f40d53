//! Corpus ingestion, dense and sparse indexing, and the retrieval cascades
//! used to build prompt context.

mod bm25;
mod chunking;
mod dense;
mod embed;
mod fusion;
mod leakage;
mod pipeline;
mod rerank;
mod store;
mod tokenize;

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use bm25::{Bm25Index, Bm25Params};
pub use chunking::{chunk_code, chunk_document, ingest_corpus, ChunkingParams};
pub use dense::{DenseIndex, Metric};
pub use embed::{EmbedError, Embedder, HashEmbedder};
pub use fusion::{fuse_scores, normalize_scores, FusionWeights};
pub use leakage::{leakage_filter, shingle_jaccard, LeakageFilter, SHINGLE_SIZE};
pub use pipeline::{render_context, CorpusIndex, RetrievalPipelineConfig, RetrievedContext, Retriever, StageKind};
pub use rerank::{rerank, CosineScorer, LexicalOverlapScorer, PairScorer};
pub use store::{corpus_hash, read_chunks, write_chunks, IndexDir};
pub use tokenize::{code_tokens, tokenize};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid chunking parameters: max_lines={max_lines}, overlap_lines={overlap_lines}")]
    Chunking { max_lines: usize, overlap_lines: usize },
    #[error("no files matched under {0}")]
    NoFiles(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("index was built with embedder `{index}` but query uses `{query}`")]
    EmbedderMismatch { index: String, query: String },
    #[error("cannot build a BM25 index over zero chunks")]
    EmptyCorpus,
    #[error("embedding failed: {0}")]
    Embedding(#[from] EmbedError),
    #[error("{stage} stage failed: {message}")]
    Scorer { stage: String, message: String },
    #[error("rerank requires at least one candidate")]
    NoCandidates,
    #[error("missing {kind} index for corpus `{corpus}`; run `coderag index` first")]
    MissingIndex { corpus: Corpus, kind: &'static str },
    #[error("invalid retrieval config: {0}")]
    Config(String),
    #[error("corrupt index file {path}: {message}")]
    Corrupt { path: String, message: String },
}

/// Which corpus a chunk was ingested from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Corpus {
    Docs,
    Code,
}

impl Corpus {
    pub fn as_str(self) -> &'static str {
        match self {
            Corpus::Docs => "docs",
            Corpus::Code => "code",
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Corpus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "docs" => Ok(Corpus::Docs),
            "code" => Ok(Corpus::Code),
            other => Err(format!("unknown corpus `{other}`")),
        }
    }
}

/// 1-based inclusive line range within the source file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_line: usize,
    pub end_line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub corpus: Corpus,
    pub source_path: String,
    pub span: Span,
    pub text: String,
    pub token_estimate: usize,
}

impl Chunk {
    /// Builds a chunk from the lines `start_line..=start_line + lines.len() - 1`.
    pub fn from_lines(corpus: Corpus, source_path: &str, start_line: usize, lines: &[&str]) -> Option<Self> {
        if lines.is_empty() {
            return None;
        }
        let text = lines.join("\n");
        if text.trim().is_empty() {
            return None;
        }
        let end_line = start_line + lines.len() - 1;
        Some(Self {
            chunk_id: format!("{corpus}:{source_path}:{start_line}-{end_line}"),
            corpus,
            source_path: source_path.to_string(),
            span: Span { start_line, end_line },
            token_estimate: estimate_tokens(&text),
            text,
        })
    }
}

/// Rough token count used for context budgeting (about four characters per token).
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

/// Cascade stage that produced a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Dense,
    Bm25,
    Fusion,
    CosineRerank,
    CrossRerank,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Dense => "dense",
            Stage::Bm25 => "bm25",
            Stage::Fusion => "fusion",
            Stage::CosineRerank => "cosine_rerank",
            Stage::CrossRerank => "cross_rerank",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChunk<F = f64> {
    pub chunk: Arc<Chunk>,
    pub score: F,
    pub stage: Stage,
}

impl<F: Scalar> ScoredChunk<F> {
    pub fn new(chunk: Arc<Chunk>, score: F, stage: Stage) -> Self {
        Self { chunk, score, stage }
    }

    pub fn id(&self) -> &str {
        &self.chunk.chunk_id
    }

    pub fn to_f64(&self) -> ScoredChunk<f64> {
        ScoredChunk { chunk: Arc::clone(&self.chunk), score: self.score.to_f64_lossy(), stage: self.stage }
    }
}

/// Ranking order: score descending (NaN last), then chunk id ascending.
pub fn rank_order<F: Scalar>(a: &ScoredChunk<F>, b: &ScoredChunk<F>) -> Ordering {
    let by_score = match (a.score.is_nan(), b.score.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal),
    };
    by_score.then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
}

pub fn sort_ranked<F: Scalar>(items: &mut [ScoredChunk<F>]) {
    items.sort_by(rank_order);
}
