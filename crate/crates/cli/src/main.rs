mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use ciprio::dataset::{load_dataset, synthesize_dataset, write_dataset_csv, ColumnMapping, Dataset, SynthSpec, DEFAULT_HISTORY_LEN};
use ciprio::envs::RankingModel;
use ciprio::orchestrator::{
    load_results, persist_results, run_experiments, Algorithm, CycleResult, ExperimentSummary, MetricStats,
};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use manifest::{Overrides, RunManifest};

/// Bad input or configuration. Exits with status 1.
#[derive(Debug)]
pub struct Invalid(pub String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

#[derive(Parser)]
#[command(name = "ciprio", version, about = "Reinforcement-learning test case prioritization for CI")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `cycle_id,test_id,verdict,duration,f1..fK`
    Canonical,
    /// Semicolon separated `Cycle;Name;Verdict;Duration` exports, as in
    /// the Paint-Control and IOFROL datasets.
    Retecs,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a raw execution log and write it in canonical form.
    Ingest {
        input: PathBuf,
        /// Canonical CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// TOML column mapping; overrides --format.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "canonical")]
        format: Format,
    },
    /// Generate a synthetic dataset from a TOML spec.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Canonical CSV to write. Generator metadata goes next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every experiment of a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the manifest's `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run every experiment with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Experiments in flight at once; 0 uses every core.
        #[arg(long)]
        jobs: Option<usize>,
        /// Cycles with fewer test cases are dropped [default: 6].
        #[arg(long)]
        min_cycle_size: Option<usize>,
    },
    /// Plot results files and compare them pairwise.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CIPRIO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Ingest { input, out, config, format } => ingest(&input, &out, config.as_deref(), format),
        Command::Synth { config, out, seed } => synth(&config, &out, seed),
        Command::Run { config, out, seed, jobs, min_cycle_size } => run(
            &config,
            &Overrides {
                out,
                seed,
                jobs,
                min_cycle_size,
            },
        ),
        Command::Report { results, out } => report(&results, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let validation = e.chain().any(|c| {
        c.is::<Invalid>() || c.downcast_ref::<ciprio::Error>().is_some_and(ciprio::Error::is_validation)
    });
    if validation {
        1
    } else {
        2
    }
}

fn summary_line(ds: &Dataset) -> String {
    format!("cycles={}, logs={}, fail_rate={:.4}", ds.cycles.len(), ds.n_logs(), ds.fail_rate())
}

fn ingest(input: &Path, out: &Path, config: Option<&Path>, format: Format) -> Result<()> {
    if !input.is_file() {
        return Err(Invalid(format!("{} does not exist", input.display())).into());
    }
    let mapping = match config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| Invalid(format!("{}: {}", path.display(), e.message())))?
        }
        None => match format {
            Format::Canonical => ColumnMapping::default(),
            Format::Retecs => ColumnMapping {
                cycle_id: "Cycle".into(),
                test_id: "Name".into(),
                verdict: "Verdict".into(),
                duration: "Duration".into(),
                features: Some(Vec::new()),
                delimiter: ';',
            },
        },
    };
    let ds = load_dataset(input, &mapping, DEFAULT_HISTORY_LEN).with_context(|| format!("ingesting {}", input.display()))?;
    write_dataset_csv(&ds, out).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", summary_line(&ds));
    Ok(())
}

fn synth(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(config).map_err(|e| Invalid(format!("cannot read config {}: {e}", config.display())))?;
    let mut spec: SynthSpec =
        toml::from_str(&text).map_err(|e| Invalid(format!("{}: {}", config.display(), e.message())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let ds = synthesize_dataset(&spec)?;
    write_dataset_csv(&ds, out).with_context(|| format!("writing {}", out.display()))?;
    let meta = out.with_extension("meta.json");
    fs::write(&meta, serde_json::to_string_pretty(&ds.synth)?).with_context(|| format!("writing {}", meta.display()))?;
    println!("{}", summary_line(&ds));
    Ok(())
}

/// Stats pooled over every seed of one dataset, model and algorithm.
#[derive(Serialize)]
struct Cell {
    dataset: String,
    ranking_model: RankingModel,
    algorithm: Algorithm,
    seeds: Vec<u64>,
    apfd: Option<MetricStats>,
    nrpa: Option<MetricStats>,
    overall: Option<MetricStats>,
}

#[derive(Serialize)]
struct Summary {
    cells: Vec<Cell>,
    experiments: Vec<ExperimentSummary>,
}

fn cells(experiments: &[(String, &ciprio::orchestrator::ExperimentConfig, Vec<CycleResult>)]) -> Vec<Cell> {
    let mut groups: BTreeMap<(String, &str, &str), Vec<usize>> = BTreeMap::new();
    for (i, (ds, cfg, _)) in experiments.iter().enumerate() {
        groups
            .entry((ds.clone(), cfg.ranking_model.as_str(), cfg.algorithm.as_str()))
            .or_default()
            .push(i);
    }
    groups
        .into_values()
        .map(|idx| {
            let pooled: Vec<&CycleResult> = idx.iter().flat_map(|&i| &experiments[i].2).collect();
            let values = |kind: Option<ciprio::metrics::MetricKind>| -> Vec<f64> {
                pooled
                    .iter()
                    .filter(|r| kind.is_none_or(|k| r.metric_kind == k))
                    .map(|r| r.metric_value)
                    .collect()
            };
            let (ds, cfg, _) = &experiments[idx[0]];
            Cell {
                dataset: ds.clone(),
                ranking_model: cfg.ranking_model,
                algorithm: cfg.algorithm,
                seeds: idx.iter().map(|&i| experiments[i].1.seed).collect(),
                apfd: MetricStats::of(&values(Some(ciprio::metrics::MetricKind::Apfd))),
                nrpa: MetricStats::of(&values(Some(ciprio::metrics::MetricKind::Nrpa))),
                overall: MetricStats::of(&values(None)),
            }
        })
        .collect()
}

fn run(config: &Path, overrides: &Overrides) -> Result<()> {
    let manifest = RunManifest::load(config, overrides)?;
    fs::create_dir_all(&manifest.out)
        .map_err(|e| Invalid(format!("output directory {} is not writable: {e}", manifest.out.display())))?;
    let datasets = manifest.load_datasets()?;
    let jobs: Vec<(&Dataset, ciprio::orchestrator::ExperimentConfig)> = manifest
        .experiments
        .iter()
        .map(|e| (&datasets[&e.dataset], e.config.clone()))
        .collect();
    info!("running {} experiments", jobs.len());
    let outcomes = run_experiments(&jobs, manifest.jobs);

    let mut done = Vec::new();
    let mut first_error = None;
    for (planned, outcome) in manifest.experiments.iter().zip(outcomes) {
        let stem = planned.stem();
        match outcome {
            Ok(results) => {
                let path = manifest.out.join(format!("{stem}.csv"));
                persist_results(&results, &path).with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
                done.push((planned.dataset.clone(), &planned.config, results));
            }
            Err(e) => {
                eprintln!("experiment {stem} failed: {e}");
                first_error.get_or_insert(anyhow::Error::new(e).context(format!("experiment {stem}")));
            }
        }
    }
    let summary = Summary {
        cells: cells(&done),
        experiments: done
            .iter()
            .map(|(ds, cfg, results)| ExperimentSummary::new(ds.clone(), cfg.ranking_model, cfg.algorithm, cfg.seed, results))
            .collect(),
    };
    fs::write(manifest.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    fs::write(manifest.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn report(paths: &[PathBuf], out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Invalid(format!("output directory {} is not writable: {e}", out.display())))?;
    let mut loaded = Vec::new();
    for path in paths {
        if !path.is_file() {
            return Err(Invalid(format!("{} does not exist", path.display())).into());
        }
        let results = load_results(path).with_context(|| format!("reading {}", path.display()))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let rows = report::plot_table(&results);
        fs::write(out.join(format!("{name}.svg")), report::plot_svg(&name, &rows))?;
        fs::write(out.join(format!("{name}.csv")), report::plot_csv(&rows))?;
        loaded.push((name, results));
    }
    if loaded.len() < 2 {
        return Ok(());
    }
    let mut table = String::from("experiment_a,experiment_b,shared_cycles,cle\n");
    for (i, (a, ra)) in loaded.iter().enumerate() {
        for (b, rb) in &loaded[i + 1..] {
            match report::overlap_cle(ra, rb) {
                Some((n, value)) => {
                    println!("cle({a}, {b}) = {value:.4} over {n} cycles");
                    table.push_str(&format!("{a},{b},{n},{value}\n"));
                }
                None => {
                    warn!("{a} and {b} share no cycles; skipping CLE");
                    eprintln!("warning: {a} and {b} share no cycles; CLE skipped");
                }
            }
        }
    }
    fs::write(out.join("cle.csv"), table)?;
    Ok(())
}
