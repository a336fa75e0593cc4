use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ciprio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ciprio")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const LOG: &str = "\
cycle_id,test_id,verdict,duration,f1
1,a,0,1.0,0.1
1,b,1,2.0,0.9
2,a,0,1.5,0.2
2,b,0,2.5,0.3
2,c,1,0.5,0.8
";

#[test]
fn ingest_prints_summary_and_writes_canonical_csv() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "log.csv", LOG);
    let out = dir.path().join("canonical.csv");
    let o = ciprio(&["ingest", s(&input), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "cycles=2, logs=5, fail_rate=0.4000");
    let again = ciprio(&["ingest", s(&out), "--out", s(&dir.path().join("again.csv"))]);
    assert_eq!(stdout(&again), stdout(&o));
    assert_eq!(fs::read(&out).unwrap(), fs::read(dir.path().join("again.csv")).unwrap());
}

#[test]
fn ingest_reads_semicolon_exports() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "paint.csv", "Id;Name;Duration;CalcPrio;LastRun;Verdict;Cycle\n1;x;2;0;2016-01-01;0;1\n2;y;3;0;2016-01-01;1;1\n");
    let o = ciprio(&["ingest", s(&input), "--format", "retecs", "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "cycles=1, logs=2, fail_rate=0.5000");
}

#[test]
fn ingest_names_missing_column() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "bad.csv", "cycle_id,test_id,duration\n1,a,1.0\n");
    let o = ciprio(&["ingest", s(&input), "--out", s(&dir.path().join("o.csv"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`verdict`"), "{}", stderr(&o));
}

#[test]
fn ingest_fail_rate_matches_generator() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        dir.path(),
        "spec.toml",
        "cycles = 200\ntests_per_cycle = 50\nfeature_dim = 2\nfail_rule = \"p=0.1\"\nseed = 4\n",
    );
    let data = dir.path().join("synthetic.csv");
    let o = ciprio(&["synth", "--config", s(&spec), "--out", s(&data)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("synthetic.meta.json")).unwrap()).unwrap();
    let truth = meta["fail_rate"].as_f64().unwrap();

    let o = ciprio(&["ingest", s(&data), "--out", s(&dir.path().join("copy.csv"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let line = stdout(&o);
    let reported: f64 = line.trim().rsplit('=').next().unwrap().parse().unwrap();
    assert!((reported - truth).abs() < 5e-5, "{reported} vs {truth}");
    // 10_000 Bernoulli(0.1) draws: sd 0.003
    assert!((reported - 0.1).abs() < 0.009, "{reported}");
}

fn toy_manifest(dir: &Path, rule: &str, experiments: &str) -> PathBuf {
    write(
        dir,
        "run.toml",
        &format!(
            "[[dataset]]\nname = \"toy\"\nsynth = {{ cycles = 12, tests_per_cycle = \"6-14\", feature_dim = 2, fail_rule = \"{rule}\", seed = 3 }}\n{experiments}"
        ),
    )
}

const ORACLE_AND_RANDOM: &str = "
[[experiment]]
dataset = \"toy\"
ranking_model = \"listwise\"
algorithm = \"oracle\"

[[experiment]]
dataset = \"toy\"
ranking_model = \"listwise\"
algorithm = \"random\"
seeds = [1, 2]
";

#[test]
fn run_oracle_reaches_nrpa_one_without_failures() {
    let dir = TempDir::new().unwrap();
    let m = toy_manifest(dir.path(), "p=0", ORACLE_AND_RANDOM);
    let out = dir.path().join("out");
    let o = ciprio(&["run", "--config", s(&m), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let oracle = summary["experiments"]
        .as_array()
        .unwrap()
        .iter()
        .find(|e| e["algorithm"] == "oracle")
        .unwrap();
    assert_eq!(oracle["nrpa"]["mean"].as_f64(), Some(1.0));
    assert!(oracle["apfd"].is_null());
    assert_eq!(summary["cells"].as_array().unwrap().len(), 2);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn seeds_get_distinct_files_and_reruns_are_identical() {
    let dir = TempDir::new().unwrap();
    let m = toy_manifest(dir.path(), "f1>0.7", ORACLE_AND_RANDOM);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&ciprio(&["run", "--config", s(&m), "--out", s(&a), "--jobs", "2"])), 0);
    assert_eq!(code(&ciprio(&["run", "--config", s(&m), "--out", s(&b), "--jobs", "1"])), 0);
    let r1 = a.join("toy_listwise_random_seed1.csv");
    let r2 = a.join("toy_listwise_random_seed2.csv");
    assert!(r1.is_file() && r2.is_file());
    assert_ne!(fs::read(&r1).unwrap(), fs::read(&r2).unwrap());
    for name in ["toy_listwise_oracle_seed0.csv", "toy_listwise_random_seed1.csv", "toy_listwise_random_seed2.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn learning_experiment_runs_from_manifest() {
    let dir = TempDir::new().unwrap();
    let exp = "[[experiment]]\ndataset = \"toy\"\nranking_model = \"pairwise_merge\"\nalgorithm = \"dqn\"\nbudget_factor = 5\nseed = 1\n";
    let m = toy_manifest(dir.path(), "f1>0.7", exp);
    let out = dir.path().join("out");
    let o = ciprio(&["run", "--config", s(&m), "--out", s(&out), "--min-cycle-size", "8"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("toy_pairwise_merge_dqn_seed1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("cycle_id,ranking_model,algorithm,metric_kind,metric_value,n_tests,n_failures,training_steps,training_time_s,seed")
    );
    for line in lines {
        let n_tests: usize = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(n_tests >= 8, "{line}");
    }
}

#[test]
fn seed_flag_overrides_manifest_seeds() {
    let dir = TempDir::new().unwrap();
    let m = toy_manifest(dir.path(), "f1>0.7", ORACLE_AND_RANDOM);
    let out = dir.path().join("out");
    assert_eq!(code(&ciprio(&["run", "--config", s(&m), "--out", s(&out), "--seed", "42"])), 0);
    assert!(out.join("toy_listwise_random_seed42.csv").is_file());
    assert!(out.join("toy_listwise_oracle_seed42.csv").is_file());
    assert!(!out.join("toy_listwise_random_seed1.csv").exists());
}

#[test]
fn validation_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let unknown = toy_manifest(
        dir.path(),
        "f1>0.7",
        "[[experiment]]\ndataset = \"toy\"\nranking_model = \"listwise\"\nalgorithm = \"dqn\"\nbuget_cap = 5\n",
    );
    let o = ciprio(&["run", "--config", s(&unknown), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("buget_cap"), "{}", stderr(&o));

    let pointwise_dqn = toy_manifest(
        dir.path(),
        "f1>0.7",
        "[[experiment]]\ndataset = \"toy\"\nranking_model = \"pointwise\"\nalgorithm = \"dqn\"\n",
    );
    assert_eq!(code(&ciprio(&["run", "--config", s(&pointwise_dqn), "--out", s(&dir.path().join("o"))])), 1);

    let missing = write(
        dir.path(),
        "missing.toml",
        "[[dataset]]\nname = \"x\"\npath = \"nope.csv\"\n[[experiment]]\ndataset = \"x\"\nranking_model = \"listwise\"\nalgorithm = \"random\"\n",
    );
    let o = ciprio(&["run", "--config", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope.csv"));

    assert_eq!(code(&ciprio(&["run"])), 1);
    assert_eq!(code(&ciprio(&["frobnicate"])), 1);
    assert_eq!(code(&ciprio(&["--help"])), 0);
}

#[test]
fn runtime_failure_exits_two() {
    let dir = TempDir::new().unwrap();
    let m = toy_manifest(dir.path(), "f1>0.7", ORACLE_AND_RANDOM);
    let out = dir.path().join("out");
    // a directory where a results file should go
    fs::create_dir_all(out.join("toy_listwise_oracle_seed0.csv")).unwrap();
    let o = ciprio(&["run", "--config", s(&m), "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn report_plots_and_compares() {
    let dir = TempDir::new().unwrap();
    let m = toy_manifest(dir.path(), "f1>0.7", ORACLE_AND_RANDOM);
    let out = dir.path().join("out");
    assert_eq!(code(&ciprio(&["run", "--config", s(&m), "--out", s(&out)])), 0);
    let oracle = out.join("toy_listwise_oracle_seed0.csv");
    let random = out.join("toy_listwise_random_seed1.csv");
    let rep = dir.path().join("report");

    let o = ciprio(&["report", s(&oracle), s(&random), "--out", s(&rep)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for stem in ["toy_listwise_oracle_seed0", "toy_listwise_random_seed1"] {
        let svg = fs::read_to_string(rep.join(format!("{stem}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
        let table = fs::read_to_string(rep.join(format!("{stem}.csv"))).unwrap();
        let results = fs::read_to_string(out.join(format!("{stem}.csv"))).unwrap();
        let plotted: Vec<String> = table.lines().skip(1).map(String::from).collect();
        let expected: Vec<String> = results
            .lines()
            .skip(1)
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                format!("{},{},{}", f[0], f[3], f[4])
            })
            .collect();
        assert_eq!(plotted, expected);
    }
    let cle = fs::read_to_string(rep.join("cle.csv")).unwrap();
    let row: Vec<&str> = cle.lines().nth(1).unwrap().split(',').collect();
    let value: f64 = row[3].parse().unwrap();
    assert!(value >= 0.9, "oracle vs random cle {value}");

    let same = dir.path().join("same");
    let copy = dir.path().join("copy.csv");
    fs::copy(&random, &copy).unwrap();
    assert_eq!(code(&ciprio(&["report", s(&random), s(&copy), "--out", s(&same)])), 0);
    let cle = fs::read_to_string(same.join("cle.csv")).unwrap();
    assert_eq!(cle.lines().nth(1).unwrap().rsplit(',').next(), Some("0.5"));

    let single = dir.path().join("single");
    assert_eq!(code(&ciprio(&["report", s(&oracle), "--out", s(&single)])), 0);
    assert!(single.join("toy_listwise_oracle_seed0.svg").is_file());
    assert!(!single.join("cle.csv").exists());
}

#[test]
fn report_warns_on_disjoint_cycles() {
    let dir = TempDir::new().unwrap();
    let header = "cycle_id,ranking_model,algorithm,metric_kind,metric_value,n_tests,n_failures,training_steps,training_time_s,seed\n";
    let a = write(dir.path(), "a.csv", &format!("{header}1,listwise,random,NRPA,0.5,6,0,0,0,0\n"));
    let b = write(dir.path(), "b.csv", &format!("{header}2,listwise,random,NRPA,0.7,6,0,0,0,0\n"));
    let o = ciprio(&["report", s(&a), s(&b), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("share no cycles"), "{}", stderr(&o));
    let cle = fs::read_to_string(dir.path().join("r/cle.csv")).unwrap();
    assert_eq!(cle.lines().count(), 1);
}
