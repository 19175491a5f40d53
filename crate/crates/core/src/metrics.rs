//! pass@k estimation and per-suite summaries.

use std::collections::BTreeMap;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::record::RunRecord;
use crate::sandbox::ExecStatus;
use crate::task::{Difficulty, TaskSuite};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("invalid pass@k parameters: n={n}, c={c}, k={k} (need 0 <= c <= n and 1 <= k <= n)")]
    Parameters { n: u64, c: u64, k: u64 },
    #[error("no records to summarize")]
    NoRecords,
    #[error("records span multiple strategies: {0:?}")]
    MixedStrategies(Vec<String>),
    #[error("record references task `{0}` which is not in the suite")]
    UnknownTask(String),
    #[error("record for task `{0}` carries no difficulty tier")]
    MissingTier(String),
}

/// Unbiased pass@k estimator `1 - C(n-c, k) / C(n, k)` evaluated in any
/// numeric field, using the product form `prod_{i=n-c+1}^{n} (1 - k/i)`.
///
/// With an exact rational type the result is exact.
pub fn pass_at_k_in<T>(n: u64, c: u64, k: u64) -> Result<T, MetricError>
where
    T: Num + FromPrimitive + Copy,
{
    if c > n || k == 0 || k > n {
        return Err(MetricError::Parameters { n, c, k });
    }
    if n - c < k {
        return Ok(T::one());
    }
    let kt = T::from_u64(k).ok_or(MetricError::Parameters { n, c, k })?;
    let mut miss = T::one();
    for i in (n - c + 1)..=n {
        let it = T::from_u64(i).ok_or(MetricError::Parameters { n, c, k })?;
        miss = miss * (T::one() - kt / it);
    }
    Ok(T::one() - miss)
}

pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricError> {
    pass_at_k_in::<f64>(n, c, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub overall_pass_rate: f64,
    pub per_tier_pass_rate: BTreeMap<Difficulty, f64>,
    pub per_tier_task_count: BTreeMap<Difficulty, usize>,
    pub task_count: usize,
    pub total_wall_time: f64,
    pub per_strategy_label: String,
    pub samples_per_task: u64,
    pub k_of_pass_at_k: u64,
    pub harness_errors: usize,
}

#[derive(Default)]
struct TaskTally {
    samples: u64,
    correct: u64,
}

/// Aggregates run records into pass@k rates overall and by tier.
///
/// Records sharing a task id are treated as independent samples of that task.
/// Harness errors count as samples but never as correct ones.
pub fn summarize(suite: &TaskSuite, records: &[RunRecord], k: u64) -> Result<EvalSummary, MetricError> {
    summarize_with(records, k, |r| {
        suite.get(&r.task_id).map(|t| t.difficulty).ok_or_else(|| MetricError::UnknownTask(r.task_id.clone()))
    })
}

/// Like [`summarize`] but takes tiers from the records themselves.
pub fn summarize_records(records: &[RunRecord], k: u64) -> Result<EvalSummary, MetricError> {
    summarize_with(records, k, |r| r.difficulty.ok_or_else(|| MetricError::MissingTier(r.task_id.clone())))
}

fn summarize_with(
    records: &[RunRecord],
    k: u64,
    tier_of: impl Fn(&RunRecord) -> Result<Difficulty, MetricError>,
) -> Result<EvalSummary, MetricError> {
    if records.is_empty() {
        return Err(MetricError::NoRecords);
    }
    let mut labels: Vec<String> = records.iter().map(|r| r.strategy.clone()).collect();
    labels.sort();
    labels.dedup();
    if labels.len() > 1 {
        return Err(MetricError::MixedStrategies(labels));
    }

    let mut tallies: BTreeMap<&str, (Difficulty, TaskTally)> = BTreeMap::new();
    let mut total_wall_time = 0.0;
    let mut harness_errors = 0;
    for record in records {
        let difficulty = tier_of(record)?;
        let entry = tallies
            .entry(record.task_id.as_str())
            .or_insert_with(|| (difficulty, TaskTally::default()));
        entry.1.samples += 1;
        if record.final_status == ExecStatus::Pass {
            entry.1.correct += 1;
        }
        if record.final_status == ExecStatus::HarnessError {
            harness_errors += 1;
        }
        total_wall_time += record.wall_time_total;
    }

    let mut overall = 0.0;
    let mut tier_sums: BTreeMap<Difficulty, (f64, usize)> = BTreeMap::new();
    let mut samples_per_task = u64::MAX;
    for (difficulty, tally) in tallies.values() {
        let rate = pass_at_k(tally.samples, tally.correct, k)?;
        overall += rate;
        let slot = tier_sums.entry(*difficulty).or_default();
        slot.0 += rate;
        slot.1 += 1;
        samples_per_task = samples_per_task.min(tally.samples);
    }
    let task_count = tallies.len();
    Ok(EvalSummary {
        overall_pass_rate: overall / task_count as f64,
        per_tier_pass_rate: tier_sums.iter().map(|(d, (sum, n))| (*d, sum / *n as f64)).collect(),
        per_tier_task_count: tier_sums.iter().map(|(d, (_, n))| (*d, *n)).collect(),
        task_count,
        total_wall_time,
        per_strategy_label: labels.remove(0),
        samples_per_task,
        k_of_pass_at_k: k,
        harness_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(pass_at_k(1, 1, 1).unwrap(), 1.0);
        assert!((pass_at_k(5, 2, 1).unwrap() - 0.4).abs() < 1e-15);
        assert!((pass_at_k(5, 2, 3).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(pass_at_k(5, 0, 5).unwrap(), 0.0);
        assert_eq!(pass_at_k(5, 1, 5).unwrap(), 1.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(pass_at_k(3, 4, 1).is_err());
        assert!(pass_at_k(3, 1, 4).is_err());
        assert!(pass_at_k(3, 1, 0).is_err());
    }

    #[test]
    fn large_n_is_stable() {
        let v = pass_at_k(10_000, 1234, 100).unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        assert!((pass_at_k(10_000, 1234, 1).unwrap() - 0.1234).abs() < 1e-12);
    }
}
