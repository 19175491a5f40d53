use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{sort_ranked, Chunk, RetrievalError, ScoredChunk, Stage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_dense: f64,
    pub w_sparse: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self { w_dense: 2.0, w_sparse: 1.0 }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !ok(self.w_dense) || !ok(self.w_sparse) || (self.w_dense == 0.0 && self.w_sparse == 0.0) {
            return Err(RetrievalError::Config(format!(
                "fusion weights must be non-negative and not both zero (got {} / {})",
                self.w_dense, self.w_sparse
            )));
        }
        Ok(())
    }
}

/// Rescales scores into `[0, 1]` over the list's own range.
///
/// The lower end of the range is `min(0, lowest score)`, so for non-negative
/// score families (BM25, positive similarities) a zero score stays at zero
/// and the top score maps to one. A list whose range is empty maps to all ones.
pub fn normalize_scores<F: Scalar>(scores: &[F]) -> Vec<F> {
    let Some(hi) = scores.iter().copied().reduce(F::max) else {
        return Vec::new();
    };
    let lo = scores.iter().copied().fold(F::zero(), F::min);
    let range = hi - lo;
    if !(range > F::zero()) {
        return vec![F::one(); scores.len()];
    }
    scores.iter().map(|s| (*s - lo) / range).collect()
}

/// Weighted sum of normalized dense and sparse scores. A chunk missing from
/// one list contributes zero from that side. Returns the top `k`.
pub fn fuse_scores<F: Scalar>(
    dense: &[ScoredChunk<F>],
    sparse: &[ScoredChunk<F>],
    weights: FusionWeights,
    k: usize,
) -> Result<Vec<ScoredChunk<F>>, RetrievalError> {
    weights.validate()?;
    let wd = F::from_f64_lossy(weights.w_dense);
    let ws = F::from_f64_lossy(weights.w_sparse);
    let mut fused: BTreeMap<String, (Arc<Chunk>, F)> = BTreeMap::new();
    for (list, w) in [(dense, wd), (sparse, ws)] {
        let raw: Vec<F> = list.iter().map(|s| s.score).collect();
        for (item, norm) in list.iter().zip(normalize_scores(&raw)) {
            let slot = fused
                .entry(item.chunk.chunk_id.clone())
                .or_insert_with(|| (Arc::clone(&item.chunk), F::zero()));
            slot.1 = slot.1 + w * norm;
        }
    }
    let mut out: Vec<ScoredChunk<F>> = fused
        .into_values()
        .map(|(chunk, score)| ScoredChunk::new(chunk, score, Stage::Fusion))
        .collect();
    sort_ranked(&mut out);
    out.truncate(k);
    Ok(out)
}
