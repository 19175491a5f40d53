use std::collections::BTreeSet;

use super::tokenize::tokenize;
use super::{sort_ranked, Embedder, RetrievalError, ScoredChunk, Stage};

/// Scores query/document pairs for reranking.
pub trait PairScorer: Send + Sync {
    fn id(&self) -> &str;

    /// One score per document, higher is more relevant.
    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, String>;
}

/// Counts distinct query tokens that occur in the document. Stand-in for a
/// cross-encoder that needs no model weights.
#[derive(Debug, Clone, Default)]
pub struct LexicalOverlapScorer;

impl PairScorer for LexicalOverlapScorer {
    fn id(&self) -> &str {
        "lexical-overlap"
    }

    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, String> {
        let q: BTreeSet<String> = tokenize(query).into_iter().collect();
        Ok(documents
            .iter()
            .map(|d| {
                let doc: BTreeSet<String> = tokenize(d).into_iter().collect();
                q.intersection(&doc).count() as f64
            })
            .collect())
    }
}

/// Cosine similarity between embeddings of the query and each document.
pub struct CosineScorer<'a> {
    embedder: &'a dyn Embedder,
}

impl<'a> CosineScorer<'a> {
    pub fn new(embedder: &'a dyn Embedder) -> Self {
        Self { embedder }
    }
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

impl PairScorer for CosineScorer<'_> {
    fn id(&self) -> &str {
        self.embedder.id()
    }

    fn score(&self, query: &str, documents: &[&str]) -> Result<Vec<f64>, String> {
        let mut texts = Vec::with_capacity(documents.len() + 1);
        texts.push(query.to_string());
        texts.extend(documents.iter().map(|d| d.to_string()));
        let vectors = self.embedder.embed(&texts).map_err(|e| e.to_string())?;
        if vectors.len() != texts.len() {
            return Err(format!("embedder returned {} vectors for {} texts", vectors.len(), texts.len()));
        }
        Ok(vectors[1..].iter().map(|v| cosine(&vectors[0], v)).collect())
    }
}

/// Re-sorts `candidates` by `scorer`. Membership never changes; a single
/// candidate is returned untouched.
pub fn rerank(
    query: &str,
    candidates: Vec<ScoredChunk<f64>>,
    scorer: &dyn PairScorer,
    stage: Stage,
) -> Result<Vec<ScoredChunk<f64>>, RetrievalError> {
    match candidates.len() {
        0 => return Err(RetrievalError::NoCandidates),
        1 => return Ok(candidates),
        _ => {}
    }
    let docs: Vec<&str> = candidates.iter().map(|c| c.chunk.text.as_str()).collect();
    let scores = scorer
        .score(query, &docs)
        .map_err(|message| RetrievalError::Scorer { stage: stage.to_string(), message })?;
    if scores.len() != candidates.len() {
        return Err(RetrievalError::Scorer {
            stage: stage.to_string(),
            message: format!("scorer returned {} scores for {} candidates", scores.len(), candidates.len()),
        });
    }
    let mut out: Vec<ScoredChunk<f64>> = candidates
        .into_iter()
        .zip(scores)
        .map(|(c, s)| ScoredChunk::new(c.chunk, s, stage))
        .collect();
    sort_ranked(&mut out);
    Ok(out)
}
