//! CI execution histories: cycles of test-case records, their feature
//! vectors and the optimal reference ranking.

mod io;
mod synth;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, read_log_rows, write_dataset_csv, ColumnMapping};
pub use synth::{synthesize_dataset, synthesize_rows, FailRule, NoiseMode, SynthSpec, TestsPerCycle};
pub(crate) use synth::seeded_shuffle;

/// Default length of the verdict history window.
pub const DEFAULT_HISTORY_LEN: usize = 4;

/// Cycles with fewer test cases than this are not evaluated.
pub const DEFAULT_MIN_CYCLE_SIZE: usize = 6;

/// Feature value used for padding rows and already-selected rows.
pub const DUMMY_FEATURE: f64 = -1.0;

/// One raw execution log line, before history features are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub cycle_id: u64,
    pub test_id: String,
    pub verdict: u8,
    pub duration: f64,
    pub features: Vec<f64>,
}

/// A test case as seen at one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseRecord {
    pub test_id: String,
    /// 1 = fail, 0 = pass. This is the label and never enters an observation.
    pub verdict: u8,
    /// Mean of the durations of all previous executions (0 on first run).
    pub exec_time: f64,
    /// Last `H` verdicts, most recent first, zero padded.
    pub history: Vec<u8>,
    /// Cycles elapsed since the test first appeared.
    pub age: u64,
    pub code_features: Vec<f64>,
    /// Duration measured in this cycle. Only feeds the running mean of later
    /// cycles.
    pub duration: f64,
}

impl TestCaseRecord {
    pub fn is_failing(&self) -> bool {
        self.verdict == 1
    }

    pub fn feature_dim(&self) -> usize {
        2 + self.history.len() + self.code_features.len()
    }

    /// `[exec_time, age, history.., code_features..]`
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.feature_dim());
        self.write_observation(&mut obs);
        obs
    }

    pub fn write_observation(&self, out: &mut Vec<f64>) {
        out.push(self.exec_time);
        out.push(self.age as f64);
        out.extend(self.history.iter().map(|&v| f64::from(v)));
        out.extend_from_slice(&self.code_features);
    }
}

pub fn build_observation(record: &TestCaseRecord) -> Vec<f64> {
    record.observation()
}

/// Observation of a padding (or already selected) test case.
pub fn dummy_observation(feature_dim: usize) -> Vec<f64> {
    vec![DUMMY_FEATURE; feature_dim]
}

/// Total order used for the optimal ranking: failing first, then shorter
/// execution time, then test id.
pub fn priority_cmp(a: &TestCaseRecord, b: &TestCaseRecord) -> Ordering {
    b.verdict
        .cmp(&a.verdict)
        .then_with(|| a.exec_time.total_cmp(&b.exec_time))
        .then_with(|| a.test_id.cmp(&b.test_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiCycle {
    pub cycle_id: u64,
    pub records: Vec<TestCaseRecord>,
    pub failed: bool,
}

impl CiCycle {
    pub fn new(cycle_id: u64, records: Vec<TestCaseRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("cycle without test cases"));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.test_id.as_str()) {
                return Err(Error::DuplicateRecord {
                    cycle_id,
                    test_id: r.test_id.clone(),
                });
            }
            if r.verdict > 1 {
                return Err(Error::InvalidConfig(format!(
                    "verdict {} of `{}` is not binary",
                    r.verdict, r.test_id
                )));
            }
        }
        let failed = records.iter().any(TestCaseRecord::is_failing);
        Ok(Self {
            cycle_id,
            records,
            failed,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_failures(&self) -> usize {
        self.records.iter().filter(|r| r.is_failing()).count()
    }

    pub fn test_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.test_id.as_str())
    }

    pub fn record(&self, test_id: &str) -> Option<&TestCaseRecord> {
        self.records.iter().find(|r| r.test_id == test_id)
    }

    /// Verdicts keyed by test id.
    pub fn verdicts(&self) -> HashMap<&str, u8> {
        self.records
            .iter()
            .map(|r| (r.test_id.as_str(), r.verdict))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Simple,
    Enriched,
}

/// Ground truth of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMeta {
    pub spec: SynthSpec,
    /// Fraction of generated logs whose verdict is 1.
    pub fail_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub kind: DatasetKind,
    pub cycles: Vec<CiCycle>,
    pub history_len: usize,
    pub code_dim: usize,
    pub feature_dim: usize,
    pub max_tests: usize,
    pub synth: Option<SynthMeta>,
}

impl Dataset {
    /// Groups raw rows into cycles and derives history, age and mean
    /// execution time from each test's earlier rows.
    pub fn from_rows(name: impl Into<String>, rows: Vec<LogRow>, history_len: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyInput("dataset without rows"));
        }
        let code_dim = rows[0].features.len();
        let mut grouped: BTreeMap<u64, Vec<LogRow>> = BTreeMap::new();
        for row in rows {
            if row.features.len() != code_dim {
                return Err(Error::InvalidConfig(format!(
                    "test `{}` in cycle {} has {} code features, expected {}",
                    row.test_id,
                    row.cycle_id,
                    row.features.len(),
                    code_dim
                )));
            }
            grouped.entry(row.cycle_id).or_default().push(row);
        }

        #[derive(Default)]
        struct TestState {
            first_cycle: u64,
            total_duration: f64,
            runs: u64,
            /// Most recent last.
            verdicts: Vec<u8>,
        }

        let mut state: HashMap<String, TestState> = HashMap::new();
        let mut cycles = Vec::with_capacity(grouped.len());
        for (cycle_id, rows) in grouped {
            let mut records = Vec::with_capacity(rows.len());
            for row in &rows {
                let st = state.get(&row.test_id);
                let (exec_time, age, history) = match st {
                    None => (0.0, 0, vec![0; history_len]),
                    Some(st) => {
                        let mut history: Vec<u8> =
                            st.verdicts.iter().rev().take(history_len).copied().collect();
                        history.resize(history_len, 0);
                        (
                            st.total_duration / st.runs as f64,
                            cycle_id - st.first_cycle,
                            history,
                        )
                    }
                };
                records.push(TestCaseRecord {
                    test_id: row.test_id.clone(),
                    verdict: row.verdict,
                    exec_time,
                    history,
                    age,
                    code_features: row.features.clone(),
                    duration: row.duration,
                });
            }
            let cycle = CiCycle::new(cycle_id, records)?;
            for row in rows {
                let st = state.entry(row.test_id).or_insert_with(|| TestState {
                    first_cycle: cycle_id,
                    ..TestState::default()
                });
                st.total_duration += row.duration;
                st.runs += 1;
                st.verdicts.push(row.verdict);
            }
            cycles.push(cycle);
        }

        let max_tests = cycles.iter().map(CiCycle::len).max().unwrap_or(0);
        Ok(Self {
            name: name.into(),
            kind: if code_dim == 0 {
                DatasetKind::Simple
            } else {
                DatasetKind::Enriched
            },
            cycles,
            history_len,
            code_dim,
            feature_dim: 2 + history_len + code_dim,
            max_tests,
            synth: None,
        })
    }

    pub fn n_logs(&self) -> usize {
        self.cycles.iter().map(CiCycle::len).sum()
    }

    pub fn fail_rate(&self) -> f64 {
        let logs = self.n_logs();
        if logs == 0 {
            return 0.0;
        }
        let fails: usize = self.cycles.iter().map(CiCycle::n_failures).sum();
        fails as f64 / logs as f64
    }

    pub fn n_failed_cycles(&self) -> usize {
        self.cycles.iter().filter(|c| c.failed).count()
    }

    /// Keeps only cycles with at least `min_size` test cases.
    pub fn filter_cycles(&self, min_size: usize) -> Result<Self> {
        filter_cycles(self, min_size)
    }
}

pub fn filter_cycles(ds: &Dataset, min_size: usize) -> Result<Dataset> {
    if min_size == 0 {
        return Err(Error::InvalidConfig("min cycle size must be at least 1".into()));
    }
    let cycles: Vec<CiCycle> = ds
        .cycles
        .iter()
        .filter(|c| c.len() >= min_size)
        .cloned()
        .collect();
    if cycles.is_empty() {
        return Err(Error::NoEvaluableCycles { min_size });
    }
    Ok(Dataset {
        max_tests: cycles.iter().map(CiCycle::len).max().unwrap_or(0),
        cycles,
        ..ds.clone()
    })
}

/// An ordering of a cycle's test cases. Rank 1 is executed first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedSequence {
    ids: Vec<String>,
}

impl RankedSequence {
    pub fn new(ids: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::RankingMismatch(format!("`{id}` appears twice")));
            }
        }
        Ok(Self { ids })
    }

    /// Builds a ranking from record positions within `cycle`.
    pub fn from_indices(cycle: &CiCycle, order: &[usize]) -> Self {
        Self {
            ids: order
                .iter()
                .map(|&i| cycle.records[i].test_id.clone())
                .collect(),
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// 1-based rank of `test_id`.
    pub fn idx(&self, test_id: &str) -> Option<usize> {
        self.ids.iter().position(|t| t == test_id).map(|p| p + 1)
    }

    /// 1-based ranks keyed by test id.
    pub fn ranks(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i + 1))
            .collect()
    }

    pub fn reversed(&self) -> Self {
        Self {
            ids: self.ids.iter().rev().cloned().collect(),
        }
    }

    /// True when this is a permutation of the cycle's test ids.
    pub fn is_permutation_of(&self, cycle: &CiCycle) -> bool {
        if self.ids.len() != cycle.len() {
            return false;
        }
        let ids: HashSet<&str> = self.ids.iter().map(String::as_str).collect();
        ids.len() == cycle.len() && cycle.test_ids().all(|t| ids.contains(t))
    }
}

/// Record positions of `cycle` in optimal order.
pub fn optimal_order(cycle: &CiCycle) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cycle.len()).collect();
    order.sort_by(|&a, &b| priority_cmp(&cycle.records[a], &cycle.records[b]));
    order
}

pub fn optimal_ranking(cycle: &CiCycle) -> RankedSequence {
    RankedSequence::from_indices(cycle, &optimal_order(cycle))
}
