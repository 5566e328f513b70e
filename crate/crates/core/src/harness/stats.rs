//! Dead-end statistics, seed aggregation and paired tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::env::LogRecord;
use crate::error::{DdrError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadEndCounts {
    pub failed: usize,
    pub failed_with_dead_end: usize,
}

impl DeadEndCounts {
    /// `None` when nothing failed.
    pub fn ratio(&self) -> Option<f64> {
        (self.failed > 0).then(|| self.failed_with_dead_end as f64 / self.failed as f64)
    }

    pub fn add(&mut self, other: DeadEndCounts) {
        self.failed += other.failed;
        self.failed_with_dead_end += other.failed_with_dead_end;
    }
}

/// Counts failed episodes, and those among them whose match count hit zero
/// on an executed exchange.
pub fn dead_end_counts(records: &[LogRecord]) -> DeadEndCounts {
    let mut hit_zero = BTreeSet::new();
    let mut failed = BTreeSet::new();
    for r in records {
        match r {
            LogRecord::Exchange { episode, n: 0, .. } => {
                hit_zero.insert(*episode);
            }
            LogRecord::EpisodeEnd { episode, outcome, .. } if !outcome.is_success() => {
                failed.insert(*episode);
            }
            _ => {}
        }
    }
    DeadEndCounts {
        failed: failed.len(),
        failed_with_dead_end: failed.intersection(&hit_zero).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadEndStats {
    /// Mean of the per-seed ratios; `None` when no seed had a failure.
    pub ratio: Option<f64>,
    pub stddev: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
}

/// Dead-end ratio among failed dialogues, one log set per seed.
pub fn dead_end_stats(logs_per_seed: &[Vec<LogRecord>]) -> DeadEndStats {
    stats_from_counts(&logs_per_seed.iter().map(|l| dead_end_counts(l)).collect::<Vec<_>>())
}

pub fn stats_from_counts(counts: &[DeadEndCounts]) -> DeadEndStats {
    let per_seed: Vec<Option<f64>> = counts.iter().map(DeadEndCounts::ratio).collect();
    let known: Vec<f64> = per_seed.iter().flatten().copied().collect();
    if known.is_empty() {
        return DeadEndStats {
            ratio: None,
            stddev: None,
            per_seed,
        };
    }
    let (mean, sd) = mean_sd(&known);
    DeadEndStats {
        ratio: Some(mean),
        stddev: Some(sd),
        per_seed,
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: usize,
    /// One-sided p-value for `mean(a - b) > 0`.
    pub p_value: f64,
}

/// One-sided paired t-test of `a > b`.
pub fn paired_t_test_greater(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(DdrError::Precondition("paired test needs two equal samples of size >= 2".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_sd(&diffs);
    let df = diffs.len() - 1;
    if sd == 0.0 {
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        let t = if mean > 0.0 { f64::INFINITY } else if mean < 0.0 { f64::NEG_INFINITY } else { 0.0 };
        return Ok(PairedTest {
            mean_diff: mean,
            sd_diff: 0.0,
            t,
            df,
            p_value: p,
        });
    }
    let t = mean / (sd / (diffs.len() as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| DdrError::Precondition(e.to_string()))?;
    Ok(PairedTest {
        mean_diff: mean,
        sd_diff: sd,
        t,
        df,
        p_value: 1.0 - dist.cdf(t),
    })
}

/// Groups values by key and returns (mean, sd, count) per key. Values are
/// sorted within a group first, so the result does not depend on input order.
pub fn aggregate<K: Ord + Clone>(items: impl IntoIterator<Item = (K, f64)>) -> BTreeMap<K, (f64, f64, usize)> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (k, v) in items {
        groups.entry(k).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|(k, mut vs)| {
            vs.sort_by(f64::total_cmp);
            let (m, s) = mean_sd(&vs);
            (k, (m, s, vs.len()))
        })
        .collect()
}
