use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Algorithm;
use crate::envs::RankingModel;
use crate::error::Result;
use crate::metrics::{CycleMetrics, MetricKind};

/// One evaluated cycle; also one row of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub cycle_id: u64,
    pub ranking_model: RankingModel,
    pub algorithm: Algorithm,
    pub metric_kind: MetricKind,
    pub metric_value: f64,
    pub n_tests: usize,
    pub n_failures: usize,
    /// Steps spent training on this cycle after it was evaluated.
    pub training_steps: u64,
    pub training_time_s: f64,
    pub seed: u64,
}

impl CycleResult {
    pub fn metrics(&self) -> CycleMetrics {
        CycleMetrics {
            cycle_id: self.cycle_id,
            metric_kind: self.metric_kind,
            value: self.metric_value,
            n_tests: self.n_tests,
            n_failures: self.n_failures,
        }
    }
}

pub const RESULTS_HEADER: [&str; 10] = [
    "cycle_id",
    "ranking_model",
    "algorithm",
    "metric_kind",
    "metric_value",
    "n_tests",
    "n_failures",
    "training_steps",
    "training_time_s",
    "seed",
];

pub fn write_results<W: std::io::Write>(results: &[CycleResult], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn persist_results(results: &[CycleResult], path: &Path) -> Result<()> {
    write_results(results, File::create(path)?)
}

pub fn load_results(path: &Path) -> Result<Vec<CycleResult>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<CycleResult>, _>>()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MetricStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { n, mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub dataset: String,
    pub ranking_model: RankingModel,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub evaluated_cycles: usize,
    pub apfd: Option<MetricStats>,
    pub nrpa: Option<MetricStats>,
    /// Over all evaluated cycles, whichever metric each one used.
    pub overall: Option<MetricStats>,
    pub total_training_steps: u64,
    pub total_training_time_s: f64,
}

impl ExperimentSummary {
    pub fn new(
        dataset: impl Into<String>,
        ranking_model: RankingModel,
        algorithm: Algorithm,
        seed: u64,
        results: &[CycleResult],
    ) -> Self {
        let values = |kind: Option<MetricKind>| -> Vec<f64> {
            results
                .iter()
                .filter(|r| kind.is_none_or(|k| r.metric_kind == k))
                .map(|r| r.metric_value)
                .collect()
        };
        Self {
            dataset: dataset.into(),
            ranking_model,
            algorithm,
            seed,
            evaluated_cycles: results.len(),
            apfd: MetricStats::of(&values(Some(MetricKind::Apfd))),
            nrpa: MetricStats::of(&values(Some(MetricKind::Nrpa))),
            overall: MetricStats::of(&values(None)),
            total_training_steps: results.iter().map(|r| r.training_steps).sum(),
            total_training_time_s: results.iter().map(|r| r.training_time_s).sum(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(cycle_id: u64, kind: MetricKind, value: f64) -> CycleResult {
        CycleResult {
            cycle_id,
            ranking_model: RankingModel::PairwiseMerge,
            algorithm: Algorithm::ActorCritic,
            metric_kind: kind,
            metric_value: value,
            n_tests: 12,
            n_failures: usize::from(kind == MetricKind::Apfd),
            training_steps: 3000,
            training_time_s: 0.125,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let results = vec![
            result(2, MetricKind::Nrpa, 0.1 + 0.2),
            result(3, MetricKind::Apfd, 1.0 / 3.0),
            result(4, MetricKind::Nrpa, 1.0),
            result(7, MetricKind::Apfd, 0.9166666666666666),
        ];
        persist_results(&results, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next().unwrap(), RESULTS_HEADER.join(","));
        assert!(text.contains(",pairwise_merge,actor_critic,NRPA,"));
        assert_eq!(load_results(&path).unwrap(), results);
    }

    #[test]
    fn empty_results_give_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        persist_results(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), RESULTS_HEADER.join(",") + "\n");
        assert!(load_results(&path).unwrap().is_empty());
    }

    #[test]
    fn summary_splits_metric_kinds() {
        let results = vec![
            result(2, MetricKind::Nrpa, 1.0),
            result(3, MetricKind::Apfd, 0.5),
            result(4, MetricKind::Nrpa, 0.8),
        ];
        let s = ExperimentSummary::new("d", RankingModel::PairwiseMerge, Algorithm::ActorCritic, 9, &results);
        let nrpa = s.nrpa.unwrap();
        assert_eq!(nrpa.n, 2);
        assert!((nrpa.mean - 0.9).abs() < 1e-12);
        assert!((nrpa.std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.apfd.unwrap().std, 0.0);
        assert_eq!(s.overall.unwrap().n, 3);
        assert_eq!(s.total_training_steps, 9000);
        assert!(MetricStats::of(&[]).is_none());
    }
}
