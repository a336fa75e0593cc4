//! Run manifests: the TOML file passed to `ciprio run --config`.
//!
//! ```toml
//! jobs = 2
//!
//! [[dataset]]
//! name = "paint"
//! path = "paint.csv"            # canonical CSV, or any layout via [dataset.mapping]
//!
//! [[dataset]]
//! name = "toy"
//! synth = { cycles = 40, tests_per_cycle = "10-20", feature_dim = 3, fail_rule = "f1>0.9" }
//!
//! [[experiment]]
//! dataset = "paint"
//! seeds = [1, 2]
//! ranking_model = "pairwise_selection"
//! algorithm = "dqn"
//! ```
//!
//! Every `[[experiment]]` key other than `dataset` and `seeds` belongs to
//! the experiment configuration and is checked against its schema.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ciprio::dataset::{load_dataset, synthesize_dataset, ColumnMapping, Dataset, SynthSpec, DEFAULT_HISTORY_LEN};
use ciprio::orchestrator::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::Invalid;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    out: Option<PathBuf>,
    jobs: Option<usize>,
    #[serde(default)]
    dataset: Vec<DatasetEntry>,
    #[serde(default)]
    experiment: Vec<toml::Table>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub name: String,
    pub path: Option<PathBuf>,
    pub mapping: Option<ColumnMapping>,
    pub synth: Option<SynthSpec>,
    pub history_len: Option<usize>,
}

/// One experiment after seeds have been expanded.
#[derive(Debug, Clone, Serialize)]
pub struct PlannedExperiment {
    pub dataset: String,
    pub config: ExperimentConfig,
}

impl PlannedExperiment {
    /// File stem shared by every artifact of this experiment.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_{}_seed{}",
            sanitize(&self.dataset),
            self.config.ranking_model,
            self.config.algorithm,
            self.config.seed
        )
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub min_cycle_size: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    /// Seconds since the Unix epoch when the manifest was resolved.
    pub timestamp: u64,
    pub datasets: Vec<DatasetEntry>,
    pub experiments: Vec<PlannedExperiment>,
}

impl RunManifest {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Invalid(format!("cannot read config {}: {e}", path.display())))?;
        let raw: RawManifest =
            toml::from_str(&text).map_err(|e| Invalid(format!("{}: {}", path.display(), e.message())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::resolve(raw, path, base, overrides)
    }

    fn resolve(raw: RawManifest, path: &Path, base: &Path, overrides: &Overrides) -> Result<Self> {
        let mut names = BTreeSet::new();
        let mut datasets = Vec::new();
        for mut entry in raw.dataset {
            if !names.insert(entry.name.clone()) {
                return Err(Invalid(format!("dataset `{}` defined twice", entry.name)).into());
            }
            match (&entry.path, &entry.synth) {
                (Some(p), None) => {
                    let p = base.join(p);
                    if !p.is_file() {
                        return Err(Invalid(format!("dataset `{}`: {} does not exist", entry.name, p.display())).into());
                    }
                    entry.path = Some(p);
                }
                (None, Some(spec)) => spec.validate().map_err(|e| Invalid(format!("dataset `{}`: {e}", entry.name)))?,
                _ => {
                    return Err(Invalid(format!("dataset `{}` needs exactly one of `path` or `synth`", entry.name)).into())
                }
            }
            datasets.push(entry);
        }
        if raw.experiment.is_empty() {
            return Err(Invalid("the manifest defines no [[experiment]]".into()).into());
        }

        let mut experiments = Vec::new();
        for (i, table) in raw.experiment.into_iter().enumerate() {
            let n = i + 1;
            for planned in expand(table, overrides).map_err(|m| Invalid(format!("experiment {n}: {m}")))? {
                if !names.contains(&planned.dataset) {
                    return Err(Invalid(format!("experiment {n}: unknown dataset `{}`", planned.dataset)).into());
                }
                planned.config.validate().map_err(|e| Invalid(format!("experiment {n}: {e}")))?;
                experiments.push(planned);
            }
        }
        let mut stems = BTreeSet::new();
        for e in &experiments {
            if !stems.insert(e.stem()) {
                return Err(Invalid(format!("experiment `{}` is listed more than once", e.stem())).into());
            }
        }

        let out = overrides
            .out
            .clone()
            .or_else(|| raw.out.map(|o| base.join(o)))
            .ok_or_else(|| Invalid("no output directory: pass --out or set `out` in the manifest".into()))?;
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Ok(Self {
            config_path: path.to_path_buf(),
            out,
            jobs: overrides.jobs.or(raw.jobs).unwrap_or(0),
            timestamp,
            datasets,
            experiments,
        })
    }

    /// Loads or generates every dataset the manifest names.
    pub fn load_datasets(&self) -> Result<HashMap<String, Dataset>> {
        let mut out = HashMap::new();
        for entry in &self.datasets {
            let history_len = entry.history_len.unwrap_or(DEFAULT_HISTORY_LEN);
            let mut ds = match (&entry.path, &entry.synth) {
                (Some(path), _) => load_dataset(path, &entry.mapping.clone().unwrap_or_default(), history_len)
                    .with_context(|| format!("dataset `{}`", entry.name))?,
                (None, Some(spec)) => {
                    let mut spec = spec.clone();
                    if let Some(h) = entry.history_len {
                        spec.history_len = h;
                    }
                    synthesize_dataset(&spec).with_context(|| format!("dataset `{}`", entry.name))?
                }
                (None, None) => unreachable!("checked while resolving"),
            };
            ds.name = entry.name.clone();
            out.insert(entry.name.clone(), ds);
        }
        Ok(out)
    }
}

/// Splits one `[[experiment]]` table into a configuration per seed.
fn expand(mut table: toml::Table, overrides: &Overrides) -> std::result::Result<Vec<PlannedExperiment>, String> {
    let dataset = match table.remove("dataset") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err("`dataset` must be a string".into()),
        None => return Err("missing key `dataset`".into()),
    };
    let seeds: Option<Vec<u64>> = match table.remove("seeds") {
        Some(v) => Some(v.try_into().map_err(|_| "`seeds` must be a list of nonnegative integers".to_string())?),
        None => None,
    };
    if seeds.is_some() && table.contains_key("seed") {
        return Err("set either `seed` or `seeds`, not both".into());
    }
    let mut config: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| e.message().to_string())?;
    if let Some(m) = overrides.min_cycle_size {
        config.min_cycle_size = m;
    }
    let seeds = match (overrides.seed, seeds) {
        (Some(s), _) => vec![s],
        (None, Some(s)) if s.is_empty() => return Err("`seeds` is empty".into()),
        (None, Some(s)) => s,
        (None, None) => vec![config.seed],
    };
    Ok(seeds
        .into_iter()
        .map(|seed| PlannedExperiment {
            dataset: dataset.clone(),
            config: ExperimentConfig { seed, ..config.clone() },
        })
        .collect())
}
