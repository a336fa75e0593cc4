use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Dataset, LogRow, SynthMeta, DEFAULT_HISTORY_LEN};
use crate::error::{Error, Result};

/// How a generated verdict is decided from the test's features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailRule {
    /// Fail iff code feature `feature` (1-based) exceeds `threshold`.
    Threshold { feature: usize, threshold: f64 },
    /// Fail with a fixed probability, independent of the features.
    Bernoulli(f64),
}

impl FailRule {
    pub fn verdict(&self, features: &[f64], rng: &mut impl Rng) -> u8 {
        let fails = match *self {
            FailRule::Threshold { feature, threshold } => features[feature - 1] > threshold,
            FailRule::Bernoulli(p) => rng.random_bool(p),
        };
        u8::from(fails)
    }
}

impl fmt::Display for FailRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailRule::Threshold { feature, threshold } => write!(f, "f{feature}>{threshold}"),
            FailRule::Bernoulli(p) => write!(f, "p={p}"),
        }
    }
}

impl FromStr for FailRule {
    type Err = Error;

    /// Accepts `f<N>><threshold>` or `p=<probability>`.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidConfig(format!("fail rule `{s}`: expected `f<N>>x` or `p=x`"));
        if let Some(p) = s.strip_prefix("p=") {
            let p: f64 = p.parse().map_err(|_| bad())?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("fail probability {p} outside [0, 1]")));
            }
            return Ok(FailRule::Bernoulli(p));
        }
        let (lhs, rhs) = s.split_once('>').ok_or_else(bad)?;
        let feature: usize = lhs
            .strip_prefix('f')
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        if feature == 0 {
            return Err(bad());
        }
        let threshold: f64 = rhs.parse().map_err(|_| bad())?;
        Ok(FailRule::Threshold { feature, threshold })
    }
}

impl Serialize for FailRule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FailRule {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How `noise` corrupts the rule's verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Every verdict is inverted with probability `noise`.
    #[default]
    Flip,
    /// Failing verdicts turn into passes with probability `noise`
    /// (faults that do not manifest). Passing verdicts never change.
    Mask,
}

/// Either a fixed count or an inclusive `min-max` range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestsPerCycle {
    pub min: usize,
    pub max: usize,
}

impl TestsPerCycle {
    pub fn fixed(n: usize) -> Self {
        Self { min: n, max: n }
    }
}

impl Serialize for TestsPerCycle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.min == self.max {
            s.serialize_u64(self.min as u64)
        } else {
            s.collect_str(&format_args!("{}-{}", self.min, self.max))
        }
    }
}

impl<'de> Deserialize<'de> for TestsPerCycle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Range(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Self::fixed(n as usize)),
            Raw::Range(s) => {
                let parse = |v: &str| v.trim().parse::<usize>().map_err(serde::de::Error::custom);
                match s.split_once('-') {
                    Some((a, b)) => Ok(Self {
                        min: parse(a)?,
                        max: parse(b)?,
                    }),
                    None => Ok(Self::fixed(parse(&s)?)),
                }
            }
        }
    }
}

/// Parameters of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub cycles: usize,
    pub tests_per_cycle: TestsPerCycle,
    /// Number of code features per record.
    pub feature_dim: usize,
    pub fail_rule: FailRule,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub noise_mode: NoiseMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_history_len")]
    pub history_len: usize,
}

fn default_history_len() -> usize {
    DEFAULT_HISTORY_LEN
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidConfig(m));
        if self.cycles == 0 {
            return invalid("cycles must be at least 1".into());
        }
        let TestsPerCycle { min, max } = self.tests_per_cycle;
        if min == 0 || min > max {
            return invalid(format!("tests_per_cycle range {min}-{max} is empty"));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return invalid(format!("noise {} outside [0, 1]", self.noise));
        }
        if let FailRule::Threshold { feature, threshold } = self.fail_rule {
            if feature > self.feature_dim {
                return invalid(format!(
                    "fail rule uses f{feature} but feature_dim is {}",
                    self.feature_dim
                ));
            }
            if !threshold.is_finite() {
                return invalid("fail rule threshold must be finite".into());
            }
        }
        Ok(())
    }
}

/// Generates raw log rows for `spec`. Tests come from a fixed pool so that
/// history features carry over between cycles; code features are drawn
/// uniformly from `[0, 1)` each cycle.
pub fn synthesize_rows(spec: &SynthSpec) -> Result<Vec<LogRow>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool = spec.tests_per_cycle.max;
    let width = pool.to_string().len().max(3);
    let ids: Vec<String> = (1..=pool).map(|i| format!("t{i:0width$}")).collect();
    let base_duration: Vec<f64> = (0..pool).map(|_| rng.random_range(0.5..10.0)).collect();

    let mut rows = Vec::new();
    for cycle in 1..=spec.cycles as u64 {
        let n = rng.random_range(spec.tests_per_cycle.min..=spec.tests_per_cycle.max);
        let mut chosen: Vec<usize> = (0..pool).collect::<Vec<_>>().choose_multiple(&mut rng, n).copied().collect();
        chosen.sort_unstable();
        for t in chosen {
            let features: Vec<f64> = (0..spec.feature_dim).map(|_| rng.random::<f64>()).collect();
            let mut verdict = spec.fail_rule.verdict(&features, &mut rng);
            let corrupt = rng.random::<f64>() < spec.noise;
            if corrupt {
                verdict = match spec.noise_mode {
                    NoiseMode::Flip => 1 - verdict,
                    NoiseMode::Mask => 0,
                };
            }
            let duration = base_duration[t] * rng.random_range(0.9..1.1);
            rows.push(LogRow {
                cycle_id: cycle,
                test_id: ids[t].clone(),
                verdict,
                duration,
                features,
            });
        }
    }
    Ok(rows)
}

pub fn synthesize_dataset(spec: &SynthSpec) -> Result<Dataset> {
    let rows = synthesize_rows(spec)?;
    let fails = rows.iter().filter(|r| r.verdict == 1).count();
    let fail_rate = fails as f64 / rows.len() as f64;
    let mut ds = Dataset::from_rows("synthetic", rows, spec.history_len)?;
    ds.synth = Some(SynthMeta {
        spec: spec.clone(),
        fail_rate,
    });
    Ok(ds)
}

/// Deterministically shuffles `items` with a seed.
pub(crate) fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}
