use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{sort_ranked, Chunk, Embedder, RetrievalError, ScoredChunk, Stage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Euclidean distance, reported negated so that larger is better.
    #[default]
    L2,
    Cosine,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L2 => "l2",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "l2" => Ok(Metric::L2),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Exact (brute-force) vector index over chunk embeddings. Immutable once built.
#[derive(Debug, Clone)]
pub struct DenseIndex<F: Scalar = f32> {
    embedder_id: String,
    dim: usize,
    chunks: Vec<Arc<Chunk>>,
    vectors: Vec<F>,
    norms: Vec<F>,
    rows: HashMap<String, usize>,
}

impl<F: Scalar> DenseIndex<F> {
    pub fn from_vectors(
        embedder_id: impl Into<String>,
        chunks: Vec<Arc<Chunk>>,
        vectors: Vec<Vec<F>>,
    ) -> Result<Self, RetrievalError> {
        if chunks.len() != vectors.len() {
            return Err(RetrievalError::Dimension { expected: chunks.len(), got: vectors.len() });
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(dim * vectors.len());
        let mut norms = Vec::with_capacity(vectors.len());
        for v in &vectors {
            if v.len() != dim {
                return Err(RetrievalError::Dimension { expected: dim, got: v.len() });
            }
            norms.push(v.iter().map(|x| *x * *x).sum::<F>().sqrt());
            flat.extend_from_slice(v);
        }
        let rows = chunks.iter().enumerate().map(|(i, c)| (c.chunk_id.clone(), i)).collect();
        Ok(Self { embedder_id: embedder_id.into(), dim, chunks, vectors: flat, norms, rows })
    }

    /// Embeds every chunk with `embedder` and indexes the results.
    pub fn build(chunks: Vec<Arc<Chunk>>, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let raw = if texts.is_empty() { Vec::new() } else { embedder.embed(&texts)? };
        let vectors = raw
            .into_iter()
            .map(|v| v.into_iter().map(|x| F::from_f64_lossy(f64::from(x))).collect())
            .collect();
        Self::from_vectors(embedder.id(), chunks, vectors)
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Arc<Chunk>] {
        &self.chunks
    }

    pub fn vector(&self, row: usize) -> &[F] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub(crate) fn raw_vectors(&self) -> &[F] {
        &self.vectors
    }

    fn similarity(&self, row: usize, query: &[F], query_norm: F, metric: Metric) -> F {
        let v = self.vector(row);
        match metric {
            Metric::L2 => {
                let d2: F = v.iter().zip(query).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                F::zero() - d2.sqrt()
            }
            Metric::Cosine => {
                let denom = self.norms[row] * query_norm;
                if denom == F::zero() {
                    F::zero()
                } else {
                    v.iter().zip(query).map(|(a, b)| *a * *b).sum::<F>() / denom
                }
            }
        }
    }

    fn check_dim(&self, query: &[F]) -> Result<(), RetrievalError> {
        if !self.is_empty() && query.len() != self.dim {
            return Err(RetrievalError::Dimension { expected: self.dim, got: query.len() });
        }
        Ok(())
    }

    /// Exact top-`k` search. An empty index yields an empty list.
    pub fn query(&self, query: &[F], k: usize, metric: Metric) -> Result<Vec<ScoredChunk<F>>, RetrievalError> {
        self.check_dim(query)?;
        let qn = query.iter().map(|x| *x * *x).sum::<F>().sqrt();
        let mut scored: Vec<ScoredChunk<F>> = (0..self.len())
            .map(|row| ScoredChunk::new(Arc::clone(&self.chunks[row]), self.similarity(row, query, qn, metric), Stage::Dense))
            .collect();
        sort_ranked(&mut scored);
        scored.truncate(k);
        Ok(scored)
    }

    /// Embeds `text` with `embedder`, refusing embedders other than the one
    /// the index was built with.
    pub fn query_text(
        &self,
        embedder: &dyn Embedder,
        text: &str,
        k: usize,
        metric: Metric,
    ) -> Result<Vec<ScoredChunk<F>>, RetrievalError> {
        self.ensure_embedder(embedder)?;
        let q = self.embed_query(embedder, text)?;
        self.query(&q, k, metric)
    }

    pub(crate) fn ensure_embedder(&self, embedder: &dyn Embedder) -> Result<(), RetrievalError> {
        if embedder.id() != self.embedder_id {
            return Err(RetrievalError::EmbedderMismatch { index: self.embedder_id.clone(), query: embedder.id().into() });
        }
        Ok(())
    }

    pub(crate) fn embed_query(&self, embedder: &dyn Embedder, text: &str) -> Result<Vec<F>, RetrievalError> {
        Ok(embedder.embed_one(text)?.into_iter().map(|x| F::from_f64_lossy(f64::from(x))).collect())
    }

    /// Similarity of one indexed chunk to `query`; `None` if the chunk is not indexed.
    pub fn score_chunk(&self, chunk_id: &str, query: &[F], metric: Metric) -> Result<Option<F>, RetrievalError> {
        self.check_dim(query)?;
        let qn = query.iter().map(|x| *x * *x).sum::<F>().sqrt();
        Ok(self.rows.get(chunk_id).map(|&row| self.similarity(row, query, qn, metric)))
    }
}
