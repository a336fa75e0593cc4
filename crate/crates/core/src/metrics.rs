//! Ranking quality: RPA/NRPA against the optimal order, APFD for failing
//! cycles, and the common-language effect size between two score samples.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{optimal_ranking, CiCycle, RankedSequence};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricKind {
    Apfd,
    Nrpa,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Apfd => "APFD",
            MetricKind::Nrpa => "NRPA",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "APFD" => Ok(MetricKind::Apfd),
            "NRPA" => Ok(MetricKind::Nrpa),
            other => Err(Error::InvalidConfig(format!("unknown metric kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle_id: u64,
    pub metric_kind: MetricKind,
    pub value: f64,
    pub n_tests: usize,
    pub n_failures: usize,
}

/// 1-based ranks of `s_o`'s items, after checking both sequences cover the
/// same ids.
fn reference_ranks<'a>(s: &RankedSequence, s_o: &'a RankedSequence) -> Result<HashMap<&'a str, usize>> {
    if s.is_empty() {
        return Err(Error::EmptyInput("ranking"));
    }
    if s.len() != s_o.len() {
        return Err(Error::RankingMismatch(format!(
            "{} ranked items against {} in the reference",
            s.len(),
            s_o.len()
        )));
    }
    let ranks = s_o.ranks();
    if let Some(missing) = s.ids().iter().find(|t| !ranks.contains_key(t.as_str())) {
        return Err(Error::RankingMismatch(format!("`{missing}` not in the reference")));
    }
    Ok(ranks)
}

/// Rank percentile average of `s` with respect to `s_o`.
///
/// Each item contributes `(k - idx(s, m) + 1) * (k - idx(s_o, m) + 1)`,
/// normalised by `k^2 (k + 1) / 2`.
pub fn rpa(s: &RankedSequence, s_o: &RankedSequence) -> Result<f64> {
    let ranks = reference_ranks(s, s_o)?;
    let k = s.len() as f64;
    let total: f64 = s
        .ids()
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let own = (i + 1) as f64;
            let reference = ranks[m.as_str()] as f64;
            (k - own + 1.0) * (k - reference + 1.0)
        })
        .sum();
    Ok(total / (k * k * (k + 1.0) / 2.0))
}

pub fn nrpa(s: &RankedSequence, s_o: &RankedSequence) -> Result<f64> {
    Ok(rpa(s, s_o)? / rpa(s_o, s_o)?)
}

/// APFD with one fault per failing test.
pub fn apfd(s: &RankedSequence, verdicts: &HashMap<&str, u8>) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptyInput("ranking"));
    }
    let mut weighted = 0usize;
    let mut faults = 0usize;
    for (i, t) in s.ids().iter().enumerate() {
        let v = *verdicts
            .get(t.as_str())
            .ok_or_else(|| Error::RankingMismatch(format!("no verdict for `{t}`")))?;
        if v == 1 {
            weighted += i + 1;
            faults += 1;
        }
    }
    if faults == 0 {
        return Err(Error::ApfdUndefined);
    }
    let n = s.len() as f64;
    Ok(1.0 - weighted as f64 / (n * faults as f64) + 1.0 / (2.0 * n))
}

/// APFD when the cycle has failures, NRPA otherwise.
pub fn metric_for_cycle(s: &RankedSequence, cycle: &CiCycle) -> Result<CycleMetrics> {
    if !s.is_permutation_of(cycle) {
        return Err(Error::RankingMismatch(format!(
            "ranking is not a permutation of cycle {}",
            cycle.cycle_id
        )));
    }
    let n_failures = cycle.n_failures();
    let (metric_kind, value) = if n_failures > 0 {
        (MetricKind::Apfd, apfd(s, &cycle.verdicts())?)
    } else {
        (MetricKind::Nrpa, nrpa(s, &optimal_ranking(cycle))?)
    };
    Ok(CycleMetrics {
        cycle_id: cycle.cycle_id,
        metric_kind,
        value,
        n_tests: cycle.len(),
        n_failures,
    })
}

/// Probability that a score drawn from `a` beats one drawn from `b`, ties
/// counting one half.
pub fn cle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("effect size sample"));
    }
    let mut wins = 0.0;
    for x in a {
        for y in b {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (a.len() * b.len()) as f64)
}
