use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    fuse_scores, rerank, sort_ranked, Bm25Index, Corpus, CosineScorer, DenseIndex, Embedder, FusionWeights,
    LeakageFilter, LexicalOverlapScorer, Metric, PairScorer, RetrievalError, ScoredChunk, Stage,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Dense,
    Bm25,
    CosineRerank,
    CrossRerank,
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageKind::Dense => "dense",
            StageKind::Bm25 => "bm25",
            StageKind::CosineRerank => "cosine_rerank",
            StageKind::CrossRerank => "cross_rerank",
        })
    }
}

impl FromStr for StageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dense" => Ok(StageKind::Dense),
            "bm25" => Ok(StageKind::Bm25),
            "cosine_rerank" | "cosine" => Ok(StageKind::CosineRerank),
            "cross_rerank" | "cross" => Ok(StageKind::CrossRerank),
            other => Err(format!("unknown cascade stage `{other}`")),
        }
    }
}

fn default_corpora() -> Vec<Corpus> {
    vec![Corpus::Docs]
}
fn default_depth() -> usize {
    4
}
fn default_cascade() -> Vec<StageKind> {
    vec![StageKind::Dense]
}
fn default_true() -> bool {
    true
}
fn default_leakage_threshold() -> f64 {
    LeakageFilter::DEFAULT_THRESHOLD
}

/// One retrieval cascade: which corpora, which stages, how deep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalPipelineConfig {
    #[serde(default = "default_corpora")]
    pub corpora: Vec<Corpus>,
    #[serde(default = "default_depth")]
    pub depth_k: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_cascade")]
    pub cascade: Vec<StageKind>,
    /// Weighted score fusion; applies when the cascade holds both dense and bm25.
    #[serde(default)]
    pub fusion: Option<FusionWeights>,
    /// Candidates fetched by the first stage; defaults to `4 * depth_k`.
    #[serde(default)]
    pub candidate_pool: Option<usize>,
    #[serde(default = "default_true")]
    pub leakage_filter_on: bool,
    #[serde(default = "default_leakage_threshold")]
    pub leakage_threshold: f64,
    /// Upper bound on the summed token estimates of rendered chunks.
    #[serde(default)]
    pub context_token_cap: Option<usize>,
}

impl Default for RetrievalPipelineConfig {
    fn default() -> Self {
        Self {
            corpora: default_corpora(),
            depth_k: default_depth(),
            metric: Metric::default(),
            cascade: default_cascade(),
            fusion: None,
            candidate_pool: None,
            leakage_filter_on: true,
            leakage_threshold: default_leakage_threshold(),
            context_token_cap: None,
        }
    }
}

impl RetrievalPipelineConfig {
    pub fn pool(&self) -> usize {
        self.candidate_pool.unwrap_or(4 * self.depth_k).max(self.depth_k)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let err = |m: String| Err(RetrievalError::Config(m));
        if self.corpora.is_empty() {
            return err("corpora must name at least one corpus".into());
        }
        if self.depth_k == 0 {
            return err("depth_k must be at least 1".into());
        }
        if let Some(pool) = self.candidate_pool {
            if pool < self.depth_k {
                return err(format!("candidate_pool ({pool}) must be >= depth_k ({})", self.depth_k));
            }
        }
        match self.cascade.first() {
            None => return err("cascade must not be empty".into()),
            Some(StageKind::Dense | StageKind::Bm25) => {}
            Some(other) => return err(format!("cascade must begin with dense or bm25, not {other}")),
        }
        if let Some(w) = &self.fusion {
            w.validate()?;
            if !(self.cascade.contains(&StageKind::Dense) && self.cascade.contains(&StageKind::Bm25)) {
                return err("fusion requires both dense and bm25 stages in the cascade".into());
            }
        }
        if !(self.leakage_threshold > 0.0 && self.leakage_threshold <= 1.0) {
            return err(format!("leakage_threshold must lie in (0, 1], got {}", self.leakage_threshold));
        }
        Ok(())
    }

    /// Compact label such as `docs+code|dense>bm25>cosine_rerank|k=4`.
    pub fn label(&self) -> String {
        let corpora: Vec<&str> = self.corpora.iter().map(|c| c.as_str()).collect();
        let stages: Vec<String> = self.cascade.iter().map(|s| s.to_string()).collect();
        let fusion = match &self.fusion {
            Some(w) => format!("|fusion={}:{}", w.w_dense, w.w_sparse),
            None => String::new(),
        };
        format!("{}|{}{}|k={}", corpora.join("+"), stages.join(">"), fusion, self.depth_k)
    }
}

/// Built indexes for one corpus.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex {
    pub dense: Option<DenseIndex<f32>>,
    pub sparse: Option<Bm25Index<f64>>,
}

/// Context block plus the chunks rendered into it, in rank order.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedContext {
    pub block: String,
    pub chunks: Vec<ScoredChunk<f64>>,
}

impl RetrievedContext {
    pub fn chunk_ids(&self) -> Vec<String> {
        self.chunks.iter().map(|c| c.chunk.chunk_id.clone()).collect()
    }
}

/// Executes retrieval cascades over a set of immutable indexes.
pub struct Retriever {
    indexes: BTreeMap<Corpus, CorpusIndex>,
    embedder: Arc<dyn Embedder>,
    cross_scorer: Arc<dyn PairScorer>,
    leakage_solutions: Vec<String>,
}

impl Retriever {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            indexes: BTreeMap::new(),
            embedder,
            cross_scorer: Arc::new(LexicalOverlapScorer),
            leakage_solutions: Vec::new(),
        }
    }

    pub fn with_index(mut self, corpus: Corpus, index: CorpusIndex) -> Self {
        self.indexes.insert(corpus, index);
        self
    }

    pub fn with_cross_scorer(mut self, scorer: Arc<dyn PairScorer>) -> Self {
        self.cross_scorer = scorer;
        self
    }

    /// Reference solutions checked by the leakage filter.
    pub fn with_leakage_solutions(mut self, solutions: Vec<String>) -> Self {
        self.leakage_solutions = solutions;
        self
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    /// Checks that every index the config needs is present.
    pub fn check(&self, cfg: &RetrievalPipelineConfig) -> Result<(), RetrievalError> {
        cfg.validate()?;
        for corpus in &cfg.corpora {
            let idx = self.indexes.get(corpus);
            if cfg.cascade.contains(&StageKind::Dense) && idx.and_then(|i| i.dense.as_ref()).is_none() {
                return Err(RetrievalError::MissingIndex { corpus: *corpus, kind: "dense" });
            }
            if cfg.cascade.contains(&StageKind::Bm25) && idx.and_then(|i| i.sparse.as_ref()).is_none() {
                return Err(RetrievalError::MissingIndex { corpus: *corpus, kind: "bm25" });
            }
            if let Some(dense) = idx.and_then(|i| i.dense.as_ref()) {
                dense.ensure_embedder(self.embedder.as_ref())?;
            }
        }
        Ok(())
    }

    /// True when every configured corpus index holds zero chunks.
    pub fn is_empty_for(&self, cfg: &RetrievalPipelineConfig) -> bool {
        cfg.corpora.iter().all(|c| {
            self.indexes.get(c).is_none_or(|i| {
                i.dense.as_ref().is_none_or(|d| d.is_empty()) && i.sparse.as_ref().is_none_or(|s| s.is_empty())
            })
        })
    }

    fn dense_search(&self, cfg: &RetrievalPipelineConfig, query: &str, k: usize) -> Result<Vec<ScoredChunk<f64>>, RetrievalError> {
        let mut all = Vec::new();
        let mut qvec: Option<Vec<f32>> = None;
        for corpus in &cfg.corpora {
            let dense = self.indexes[corpus].dense.as_ref().expect("checked");
            if qvec.is_none() {
                qvec = Some(dense.embed_query(self.embedder.as_ref(), query)?);
            }
            all.extend(dense.query(qvec.as_ref().expect("set"), k, cfg.metric)?.iter().map(ScoredChunk::to_f64));
        }
        sort_ranked(&mut all);
        all.truncate(k);
        Ok(all)
    }

    fn sparse_search(&self, cfg: &RetrievalPipelineConfig, query: &str, k: usize) -> Vec<ScoredChunk<f64>> {
        let mut all: Vec<ScoredChunk<f64>> = cfg
            .corpora
            .iter()
            .flat_map(|c| self.indexes[c].sparse.as_ref().expect("checked").query(query, k))
            .collect();
        sort_ranked(&mut all);
        all.truncate(k);
        all
    }

    fn dense_rescore(
        &self,
        cfg: &RetrievalPipelineConfig,
        query: &str,
        candidates: Vec<ScoredChunk<f64>>,
    ) -> Result<Vec<ScoredChunk<f64>>, RetrievalError> {
        let mut qvec: Option<Vec<f32>> = None;
        let mut out = Vec::with_capacity(candidates.len());
        for c in candidates {
            let dense = self.indexes[&c.chunk.corpus].dense.as_ref().expect("checked");
            if qvec.is_none() {
                qvec = Some(dense.embed_query(self.embedder.as_ref(), query)?);
            }
            let score = dense.score_chunk(&c.chunk.chunk_id, qvec.as_ref().expect("set"), cfg.metric)?;
            out.push(ScoredChunk::new(c.chunk, score.map_or(f64::NEG_INFINITY, f64::from), Stage::Dense));
        }
        sort_ranked(&mut out);
        Ok(out)
    }

    fn sparse_rescore(&self, query: &str, candidates: Vec<ScoredChunk<f64>>) -> Vec<ScoredChunk<f64>> {
        let mut out: Vec<ScoredChunk<f64>> = candidates
            .into_iter()
            .map(|c| {
                let sparse = self.indexes[&c.chunk.corpus].sparse.as_ref().expect("checked");
                let score = sparse.score_chunk(query, &c.chunk.chunk_id).unwrap_or(0.0);
                ScoredChunk::new(c.chunk, score, Stage::Bm25)
            })
            .collect();
        sort_ranked(&mut out);
        out
    }

    /// Runs the full cascade and returns the ranked chunks before rendering.
    pub fn rank(&self, cfg: &RetrievalPipelineConfig, query: &str) -> Result<Vec<ScoredChunk<f64>>, RetrievalError> {
        self.check(cfg)?;
        let pool = cfg.pool();
        let mut stages = cfg.cascade.iter();
        let first = *stages.next().expect("validated non-empty");
        let mut current = match first {
            StageKind::Dense => self.dense_search(cfg, query, pool)?,
            StageKind::Bm25 => self.sparse_search(cfg, query, pool),
            _ => unreachable!("validated first stage"),
        };
        let mut seen_first = HashSet::from([first]);
        for &stage in stages {
            match stage {
                StageKind::Dense | StageKind::Bm25 if !seen_first.contains(&stage) => {
                    seen_first.insert(stage);
                    current = match (cfg.fusion, stage) {
                        (Some(w), StageKind::Bm25) => {
                            let sparse = self.sparse_search(cfg, query, pool);
                            fuse_scores(&current, &sparse, w, pool)?
                        }
                        (Some(w), _) => {
                            let dense = self.dense_search(cfg, query, pool)?;
                            fuse_scores(&dense, &current, w, pool)?
                        }
                        (None, StageKind::Bm25) => self.sparse_rescore(query, current),
                        (None, _) => self.dense_rescore(cfg, query, current)?,
                    };
                }
                StageKind::Dense => current = self.dense_rescore(cfg, query, current)?,
                StageKind::Bm25 => current = self.sparse_rescore(query, current),
                StageKind::CosineRerank if !current.is_empty() => {
                    let scorer = CosineScorer::new(self.embedder.as_ref());
                    current = rerank(query, current, &scorer, Stage::CosineRerank)?;
                }
                StageKind::CrossRerank if !current.is_empty() => {
                    current = rerank(query, current, self.cross_scorer.as_ref(), Stage::CrossRerank)?;
                }
                StageKind::CosineRerank | StageKind::CrossRerank => {}
            }
        }
        if cfg.leakage_filter_on && !self.leakage_solutions.is_empty() {
            current = LeakageFilter::new(&self.leakage_solutions, cfg.leakage_threshold).apply(current);
        }
        Ok(current)
    }

    /// Ranks, truncates to `depth_k` and renders the context block.
    pub fn retrieve_context(&self, cfg: &RetrievalPipelineConfig, query: &str) -> Result<RetrievedContext, RetrievalError> {
        let mut ranked = self.rank(cfg, query)?;
        ranked.truncate(cfg.depth_k);
        if let Some(cap) = cfg.context_token_cap {
            let mut used = 0;
            ranked.retain(|c| {
                let fits = used + c.chunk.token_estimate <= cap;
                if fits {
                    used += c.chunk.token_estimate;
                }
                fits
            });
        }
        Ok(RetrievedContext { block: render_context(&ranked), chunks: ranked })
    }
}

/// Renders chunks as provenance-headed fenced sections. Empty input renders
/// an empty string.
pub fn render_context(chunks: &[ScoredChunk<f64>]) -> String {
    if chunks.is_empty() {
        return String::new();
    }
    let mut out = String::from("Reference material retrieved for this task:\n\n");
    for (i, c) in chunks.iter().enumerate() {
        let chunk = &c.chunk;
        let fence = if chunk.text.contains("```") { "~~~~" } else { "```" };
        let lang = match chunk.corpus {
            Corpus::Code => "python",
            Corpus::Docs => "",
        };
        out.push_str(&format!(
            "### [{}] {}/{} (lines {}-{}) id={}\n{fence}{lang}\n{}\n{fence}\n\n",
            i + 1,
            chunk.corpus,
            chunk.source_path,
            chunk.span.start_line,
            chunk.span.end_line,
            chunk.chunk_id,
            chunk.text.trim_end(),
        ));
    }
    out
}
