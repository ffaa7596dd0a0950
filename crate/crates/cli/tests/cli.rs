use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rssac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rssac"))
        .args(args)
        .env("RSSAC_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rssac(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn read_jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

struct Row {
    cells: Vec<String>,
}

impl Row {
    fn col(&self, header: &[String], name: &str) -> &str {
        let i = header.iter().position(|h| h == name).unwrap();
        &self.cells[i]
    }

    fn num(&self, header: &[String], name: &str) -> f64 {
        self.col(header, name).parse().unwrap()
    }
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Row>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split('\t')
        .map(String::from)
        .collect();
    let rows = lines
        .map(|l| Row {
            cells: l.split('\t').map(String::from).collect(),
        })
        .collect();
    (header, rows)
}

const STATIC_FIELD: &str = "
[scenario]
kind = \"static_field\"
goal_radius = 0.0
[scenario.static_field]
humans = 6
";

#[test]
fn run_writes_a_complete_record() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "[output]\nstate_log = true\n");
    let out = dir.path().join("out");
    ok(&["run", "--config", s(&config), "--out", s(&out)]);
    let record = read_json(&out.join("episode.json"));
    for field in [
        "controller",
        "seed",
        "goal",
        "min_distance",
        "normalized_goal_distance",
        "collided",
        "yielded",
        "failed",
        "planning_cycles",
    ] {
        assert!(record.get(field).is_some(), "missing {field}");
    }
    assert!(record["min_distance"].as_f64().unwrap() > 0.0);
    let log = fs::read_to_string(out.join("states.csv")).unwrap();
    assert!(log.starts_with("time,robot_x"));
    assert_eq!(log.lines().count(), 1 + 701);
}

#[test]
fn missing_config_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere").join("absent.toml");
    let out = rssac(&["run", "--config", s(&missing)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(s(&missing)), "{err}");
}

#[test]
fn invalid_config_names_the_field() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "[rssac]\nepsilons = [0.0, 0.04, 0.02]\n");
    let out = rssac(&["run", "--config", s(&config)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epsilons"), "{err}");

    let config = write_config(
        dir.path(),
        "[scenario]\nkind = \"dataset_replay\"\n[scenario.dataset]\npath = \"gone.txt\"\n",
    );
    let out = rssac(&["run", "--config", s(&config)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gone.txt"), "{err}");
}

#[test]
fn seed_matters_only_for_stochastic_scenarios() {
    let dir = TempDir::new().unwrap();
    let record = |config: &Path, seed: &str, extra: &[&str]| {
        let out = dir.path().join(format!("seed{seed}"));
        let mut args = vec![
            "run",
            "--config",
            s(config),
            "--seed",
            seed,
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        let mut v = read_json(&out.join("episode.json"));
        v.as_object_mut().unwrap().remove("seed");
        v
    };
    let stochastic = write_config(dir.path(), "");
    assert_ne!(record(&stochastic, "1", &[]), record(&stochastic, "2", &[]));

    let static_path = dir.path().join("static.toml");
    fs::write(&static_path, STATIC_FIELD).unwrap();
    let a = record(&static_path, "1", &["--controller", "zero"]);
    let b = record(&static_path, "2", &["--controller", "zero"]);
    assert_eq!(a, b);
}

#[test]
fn single_run_bench_has_zero_spread() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench");
    ok(&[
        "bench",
        "--runs",
        "1",
        "--controller",
        "rssac,zero",
        "--out",
        s(&out),
    ]);
    let (header, rows) = read_table(&out.join("bench.tsv"));
    assert_eq!(header, ["controller", "metric", "mean", "std", "n"]);
    assert_eq!(rows.len(), 8);
    for row in &rows {
        assert_eq!(row.num(&header, "std"), 0.0);
        assert_eq!(row.col(&header, "n"), "1");
    }
    let (_, timing) = read_table(&out.join("timing.tsv"));
    assert_eq!(timing.len(), 2);
}

#[test]
fn same_seed_gives_identical_files_and_means_match_records() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        STATIC_FIELD
            .replace("goal_radius = 0.0", "goal_radius = 1.0")
            .as_str(),
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "bench",
            "--config",
            s(&config),
            "--runs",
            "3",
            "--seed",
            "11",
            "--controller",
            "nominal_only,zero",
            "--out",
            s(&out),
        ]);
        out
    };
    let a = run("a");
    let b = run("b");
    for file in ["bench.tsv", "episodes.jsonl"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }

    let (header, rows) = read_table(&a.join("bench.tsv"));
    let records = read_jsonl(&a.join("episodes.jsonl"));
    assert_eq!(records.len(), 6);
    for (controller, metric, field) in [
        ("nominal_only", "min_distance", "min_distance"),
        (
            "nominal_only",
            "normalized_goal_distance",
            "normalized_goal_distance",
        ),
        ("zero", "min_distance", "min_distance"),
        (
            "zero",
            "normalized_goal_distance",
            "normalized_goal_distance",
        ),
    ] {
        let values: Vec<f64> = records
            .iter()
            .filter(|r| r["controller"] == controller)
            .map(|r| r[field].as_f64().unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let row = rows
            .iter()
            .find(|r| {
                r.col(&header, "controller") == controller && r.col(&header, "metric") == metric
            })
            .unwrap();
        let reported = row.num(&header, "mean");
        assert!(
            (reported - mean).abs() <= 1e-12 * mean.abs().max(1.0),
            "{controller} {metric}"
        );
    }
}

#[test]
fn sweep_of_one_value_matches_bench() {
    let dir = TempDir::new().unwrap();
    let sweep = dir.path().join("sweep");
    let bench = dir.path().join("bench");
    ok(&[
        "sweep",
        "--sigma",
        "0.5",
        "--runs",
        "2",
        "--seed",
        "4",
        "--out",
        s(&sweep),
    ]);
    ok(&[
        "bench",
        "--sigma",
        "0.5",
        "--runs",
        "2",
        "--seed",
        "4",
        "--controller",
        "rssac",
        "--out",
        s(&bench),
    ]);

    let (sh, srows) = read_table(&sweep.join("sweep.tsv"));
    let (bh, brows) = read_table(&bench.join("bench.tsv"));
    assert_eq!(&sh[2..], &bh[..]);
    assert_eq!(srows.len(), brows.len());
    for (s, b) in srows.iter().zip(&brows) {
        assert_eq!(s.col(&sh, "parameter"), "sigma");
        assert_eq!(s.num(&sh, "value"), 0.5);
        assert_eq!(&s.cells[2..], &b.cells[..]);
    }
    let mut srec = read_jsonl(&sweep.join("episodes.jsonl"));
    for r in &mut srec {
        let o = r.as_object_mut().unwrap();
        assert_eq!(o.remove("parameter").unwrap(), "sigma");
        o.remove("value");
    }
    assert_eq!(srec, read_jsonl(&bench.join("episodes.jsonl")));
}

#[test]
fn sigma_sweep_rows_and_yield_recount() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sweep");
    ok(&[
        "sweep",
        "--sigma",
        "0,0.5,1.0",
        "--runs",
        "3",
        "--out",
        s(&out),
    ]);
    let (header, rows) = read_table(&out.join("sweep.tsv"));
    let yields: Vec<&Row> = rows
        .iter()
        .filter(|r| r.col(&header, "metric") == "yield_probability")
        .collect();
    assert_eq!(yields.len(), 3);
    let records = read_jsonl(&out.join("episodes.jsonl"));
    for row in yields {
        let value = row.num(&header, "value");
        let flags: Vec<bool> = records
            .iter()
            .filter(|r| r["value"].as_f64() == Some(value))
            .map(|r| r["yielded"].as_bool().unwrap())
            .collect();
        assert_eq!(flags.len(), 3);
        let fraction = flags.iter().filter(|y| **y).count() as f64 / 3.0;
        assert_eq!(row.num(&header, "mean"), fraction);
    }
}

#[test]
fn bad_sweep_values_are_rejected() {
    let out = rssac(&["sweep", "--sigma=-1", "--runs", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    let out = rssac(&["sweep", "--runs", "1"]);
    assert!(!out.status.success());
}

#[test]
fn dumped_config_reloads_to_the_same_run() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        "seed = 9\n[rssac]\nsigma = 0.5\nsamples = 12\n[cost]\nalpha = 80.0\n",
    );
    let first = dir.path().join("first");
    ok(&["run", "--config", s(&config), "--out", s(&first)]);
    let dumped = first.join("config.toml");
    let second = dir.path().join("second");
    ok(&["run", "--config", s(&dumped), "--out", s(&second)]);
    let mut a: toml::Table = toml::from_str(&fs::read_to_string(&dumped).unwrap()).unwrap();
    let mut b: toml::Table =
        toml::from_str(&fs::read_to_string(second.join("config.toml")).unwrap()).unwrap();
    a.remove("output");
    b.remove("output");
    assert_eq!(a, b);
    assert_eq!(
        read_json(&first.join("episode.json")),
        read_json(&second.join("episode.json"))
    );
}
