//! Okapi BM25 over chunk token streams.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::{sort_ranked, Chunk, RetrievalError, ScoredChunk, Stage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params<F = f64> {
    /// Term-frequency saturation.
    pub k1: F,
    /// Document-length normalization strength.
    pub b: F,
}

impl<F: Scalar> Default for Bm25Params<F> {
    fn default() -> Self {
        Self { k1: F::from_f64_lossy(1.5), b: F::from_f64_lossy(0.75) }
    }
}

#[derive(Debug, Clone)]
pub struct Bm25Index<F: Scalar = f64> {
    params: Bm25Params<F>,
    chunks: Vec<Arc<Chunk>>,
    doc_len: Vec<u32>,
    avgdl: F,
    /// term -> (doc row, term frequency), rows ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    rows: HashMap<String, usize>,
}

impl<F: Scalar> Bm25Index<F> {
    pub fn build(chunks: Vec<Arc<Chunk>>, params: Bm25Params<F>) -> Result<Self, RetrievalError> {
        if chunks.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut doc_len = Vec::with_capacity(chunks.len());
        for (row, chunk) in chunks.iter().enumerate() {
            let tokens = tokenize(&chunk.text);
            doc_len.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((row as u32, count));
            }
        }
        Self::from_parts(params, chunks, doc_len, postings)
    }

    pub(crate) fn from_parts(
        params: Bm25Params<F>,
        chunks: Vec<Arc<Chunk>>,
        doc_len: Vec<u32>,
        postings: BTreeMap<String, Vec<(u32, u32)>>,
    ) -> Result<Self, RetrievalError> {
        if chunks.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avgdl = F::from_f64_lossy(total as f64 / doc_len.len() as f64);
        let rows = chunks.iter().enumerate().map(|(i, c)| (c.chunk_id.clone(), i)).collect();
        Ok(Self { params, chunks, doc_len, avgdl, postings, rows })
    }

    pub fn params(&self) -> Bm25Params<F> {
        self.params
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

    pub(crate) fn doc_lengths(&self) -> &[u32] {
        &self.doc_len
    }

    pub(crate) fn postings(&self) -> &BTreeMap<String, Vec<(u32, u32)>> {
        &self.postings
    }

    /// Smoothed inverse document frequency `ln(1 + (N - df + 0.5) / (df + 0.5))`.
    pub fn idf(&self, term: &str) -> F {
        let n = F::from_usize_lossy(self.len());
        let df = F::from_usize_lossy(self.postings.get(term).map_or(0, Vec::len));
        let half = F::from_f64_lossy(0.5);
        (F::one() + (n - df + half) / (df + half)).ln()
    }

    fn term_weight(&self, tf: u32, len: u32) -> F {
        let Bm25Params { k1, b } = self.params;
        let tf = F::from_f64_lossy(f64::from(tf));
        let len = F::from_f64_lossy(f64::from(len));
        let norm = if self.avgdl > F::zero() { len / self.avgdl } else { F::one() };
        tf * (k1 + F::one()) / (tf + k1 * (F::one() - b + b * norm))
    }

    fn query_terms(query: &str) -> BTreeSet<String> {
        tokenize(query).into_iter().collect()
    }

    /// BM25 score of every document with a nonzero score, keyed by row.
    fn accumulate(&self, terms: &BTreeSet<String>) -> BTreeMap<usize, F> {
        let mut acc: BTreeMap<usize, F> = BTreeMap::new();
        for term in terms {
            let Some(list) = self.postings.get(term) else { continue };
            let idf = self.idf(term);
            for &(row, tf) in list {
                let w = idf * self.term_weight(tf, self.doc_len[row as usize]);
                let slot = acc.entry(row as usize).or_insert_with(F::zero);
                *slot = *slot + w;
            }
        }
        acc
    }

    /// Score of one indexed chunk; `None` if the chunk is not in this index.
    pub fn score_chunk(&self, query: &str, chunk_id: &str) -> Option<F> {
        let row = *self.rows.get(chunk_id)?;
        let terms = Self::query_terms(query);
        let mut total = F::zero();
        for term in &terms {
            if let Some(list) = self.postings.get(term) {
                if let Ok(pos) = list.binary_search_by_key(&(row as u32), |&(r, _)| r) {
                    total = total + self.idf(term) * self.term_weight(list[pos].1, self.doc_len[row]);
                }
            }
        }
        Some(total)
    }

    /// Top-`k` documents by BM25; documents scoring zero are excluded.
    pub fn query(&self, query: &str, k: usize) -> Vec<ScoredChunk<F>> {
        let terms = Self::query_terms(query);
        let mut scored: Vec<ScoredChunk<F>> = self
            .accumulate(&terms)
            .into_iter()
            .filter(|(_, s)| *s > F::zero())
            .map(|(row, s)| ScoredChunk::new(Arc::clone(&self.chunks[row]), s, Stage::Bm25))
            .collect();
        sort_ranked(&mut scored);
        scored.truncate(k);
        scored
    }
}
