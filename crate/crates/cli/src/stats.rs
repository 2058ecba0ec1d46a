//! Order statistics for seed sweeps.

use cotask_core::SharingStrategy;
use serde::{Deserialize, Serialize};

use crate::commands::RunScore;

/// Linear-interpolation quantile of sorted data, `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: SharingStrategy,
    pub task: String,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Per-seed scores in run order.
    pub values: Vec<f64>,
}

/// One row per (strategy, task) in the given orders.
pub fn summarize(runs: &[RunScore], strategies: &[SharingStrategy], tasks: &[String]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for &strategy in strategies {
        for (t, task) in tasks.iter().enumerate() {
            let values: Vec<f64> = runs
                .iter()
                .filter(|r| r.strategy == strategy)
                .filter_map(|r| r.weighted_f1.get(t).copied())
                .collect();
            if values.is_empty() {
                continue;
            }
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            rows.push(SummaryRow {
                strategy,
                task: task.clone(),
                median: quantile(&sorted, 0.5),
                q1: quantile(&sorted, 0.25),
                q3: quantile(&sorted, 0.75),
                values,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[0.7]), 0.7);
    }

    #[test]
    fn quartiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.75), 4.0);
    }

    #[test]
    fn one_row_per_strategy_and_task() {
        let runs: Vec<RunScore> = (0..2)
            .flat_map(|seed| {
                [SharingStrategy::SingleTask, SharingStrategy::CoTaskAware].map(|strategy| RunScore {
                    strategy,
                    seed,
                    threshold: 0.5,
                    weighted_f1: vec![seed as f64, 1.0],
                })
            })
            .collect();
        let tasks = vec!["symptom".to_string(), "figurative".to_string()];
        let rows = summarize(&runs, &[SharingStrategy::SingleTask, SharingStrategy::CoTaskAware], &tasks);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].median, 0.5);
        assert_eq!(rows[1].median, 1.0);
    }
}
