use std::collections::HashSet;

use super::tokenize::code_tokens;
use super::ScoredChunk;
use crate::scalar::Scalar;

/// Shingle width in code tokens.
pub const SHINGLE_SIZE: usize = 8;

/// Contiguous `SHINGLE_SIZE`-token windows. Texts shorter than one window
/// yield their whole token sequence as a single shingle.
fn shingles(text: &str) -> HashSet<Vec<&str>> {
    let tokens = code_tokens(text);
    if tokens.is_empty() {
        return HashSet::new();
    }
    if tokens.len() < SHINGLE_SIZE {
        return HashSet::from([tokens]);
    }
    tokens.windows(SHINGLE_SIZE).map(<[&str]>::to_vec).collect()
}

fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Jaccard similarity of the two texts' token-shingle sets.
pub fn shingle_jaccard(a: &str, b: &str) -> f64 {
    jaccard(&shingles(a), &shingles(b))
}

/// Removes chunks that near-duplicate any reference solution.
#[derive(Debug, Clone)]
pub struct LeakageFilter {
    solutions: Vec<HashSet<Vec<String>>>,
    threshold: f64,
}

impl LeakageFilter {
    pub const DEFAULT_THRESHOLD: f64 = 0.6;

    pub fn new<S: AsRef<str>>(solutions: &[S], threshold: f64) -> Self {
        assert!(threshold > 0.0 && threshold <= 1.0, "leakage threshold must lie in (0, 1]");
        let solutions = solutions
            .iter()
            .map(|s| shingles(s.as_ref()).into_iter().map(|sh| sh.into_iter().map(String::from).collect()).collect())
            .filter(|set: &HashSet<Vec<String>>| !set.is_empty())
            .collect();
        Self { solutions, threshold }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_leak(&self, text: &str) -> bool {
        let own: HashSet<Vec<String>> =
            shingles(text).into_iter().map(|sh| sh.into_iter().map(String::from).collect()).collect();
        self.solutions.iter().any(|sol| jaccard(&own, sol) >= self.threshold)
    }

    pub fn apply<F: Scalar>(&self, chunks: Vec<ScoredChunk<F>>) -> Vec<ScoredChunk<F>> {
        chunks.into_iter().filter(|c| !self.is_leak(&c.chunk.text)).collect()
    }
}

pub fn leakage_filter<F: Scalar, S: AsRef<str>>(
    chunks: Vec<ScoredChunk<F>>,
    solutions: &[S],
    threshold: f64,
) -> Vec<ScoredChunk<F>> {
    LeakageFilter::new(solutions, threshold).apply(chunks)
}
