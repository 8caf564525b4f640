use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use routekit::clustering::{fit_kmeans, KMeansConfig};
use routekit::evaluation::{default_lambda_grid, metrics, peak_quality, sweep};
use routekit::features::cluster_error_features;
use routekit::routing::{cluster_gamma, PoolEntry};
use routekit::synth::{generate_stream, MixtureSpec};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_routekit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Two clusters on the x axis; `cheap` is best on the left, `strong` on the right.
fn two_llm_fixture(dir: &Path) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
    let prompts = write(
        dir,
        "prompts.jsonl",
        concat!(
            "{\"id\":\"a\",\"embedding\":[-1.0,0.0]}\n",
            "{\"id\":\"b\",\"embedding\":[-2.0,0.5]}\n",
            "{\"id\":\"c\",\"embedding\":[1.5,0.0]}\n",
            "{\"id\":\"d\",\"embedding\":[2.0,-0.5]}\n",
        ),
    );
    let model = write(
        dir,
        "model.json",
        "{\"k\":2,\"seed\":0,\"inertia\":0.0,\"centroids\":[[-1.5,0.0],[1.5,0.0]]}",
    );
    let features = write(
        dir,
        "features.jsonl",
        concat!(
            "{\"llm_id\":\"cheap\",\"kind\":\"cluster_error\",\"values\":[0.2,0.6],\"support\":[10,10]}\n",
            "{\"llm_id\":\"strong\",\"kind\":\"cluster_error\",\"values\":[0.3,0.1],\"support\":[10,10]}\n",
        ),
    );
    let pool = write(dir, "pool.csv", "llm_id,cost\ncheap,1\nstrong,4\n");
    (prompts, model, features, pool)
}

#[test]
fn route_picks_lowest_error_at_zero_lambda() {
    let tmp = TempDir::new().unwrap();
    let (prompts, model, features, pool) = two_llm_fixture(tmp.path());
    let base = [
        "route",
        "--model",
        s(&model),
        "--features",
        s(&features),
        "--pool",
        s(&pool),
        "--prompts",
        s(&prompts),
    ];
    let stdout = ok(&[&base[..], &["--lambda", "0"]].concat());
    let chosen: Vec<String> = stdout
        .lines()
        .map(|l| {
            serde_json::from_str::<Value>(l).unwrap()["llm_id"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(chosen, ["cheap", "cheap", "strong", "strong"]);

    // 0.6 + 1*lambda < 0.1 + 4*lambda once lambda > 1/6.
    let stdout = ok(&[&base[..], &["--lambda", "0.2"]].concat());
    let first: Value = serde_json::from_str(stdout.lines().nth(2).unwrap()).unwrap();
    assert_eq!(first["llm_id"], "cheap");
    let scores: Vec<f64> = first["adjusted_scores"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!((scores[0] - 0.8).abs() < 1e-12 && (scores[1] - 0.9).abs() < 1e-12);
}

#[test]
fn constant_quality_curve_reports_that_quality() {
    let tmp = TempDir::new().unwrap();
    let (prompts, model, features, pool) = two_llm_fixture(tmp.path());
    let labels = write(
        tmp.path(),
        "labels.csv",
        "prompt_id,cheap,strong\na,0.25,0.25\nb,0.25,0.25\nc,0.25,0.25\nd,0.25,0.25\n",
    );
    let curve = tmp.path().join("curve.csv");
    ok(&[
        "sweep",
        "--model",
        s(&model),
        "--features",
        s(&features),
        "--pool",
        s(&pool),
        "--prompts",
        s(&prompts),
        "--labels",
        s(&labels),
        "--out",
        s(&curve),
    ]);
    let text = fs::read_to_string(&curve).unwrap();
    assert!(text.starts_with("lambda,mean_cost,norm_cost,mean_quality\n"));
    let report: Value = serde_json::from_str(&ok(&["report", "--curve", s(&curve), "--labels", s(&labels)])).unwrap();
    assert!((report["area"].as_f64().unwrap() - 0.75).abs() < 1e-9);
    assert!((report["area_50"].as_f64().unwrap() - 0.75).abs() < 1e-9);
    // Peak quality is reached by routing everything to the cheap model.
    assert!((report["qnc"].as_f64().unwrap() - 0.25).abs() < 1e-9);
}

#[test]
fn zero_router_sweep_with_budgets() {
    let tmp = TempDir::new().unwrap();
    let (prompts, _, features, pool) = two_llm_fixture(tmp.path());
    let labels = write(
        tmp.path(),
        "labels.csv",
        "prompt_id,cheap,strong\na,1,0\nb,0,0\nc,1,0\nd,0,1\n",
    );
    let stdout = ok(&[
        "sweep",
        "--router",
        "zero",
        "--features",
        s(&features),
        "--pool",
        s(&pool),
        "--prompts",
        s(&prompts),
        "--labels",
        s(&labels),
        "--budgets",
        "1,2.5,4",
    ]);
    let rows: Vec<Vec<f64>> = stdout
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(
        stdout.lines().next().unwrap(),
        "budget,mean_cost,norm_cost,mean_quality"
    );
    // Expected quality mixes the two hull models linearly in the budget.
    let (q_cheap, q_strong) = (0.5, 0.75);
    for (row, p) in rows.iter().zip([1.0, 0.5, 0.0]) {
        assert!((row[3] - (p * q_cheap + (1.0 - p) * q_strong)).abs() < 1e-9, "{row:?}");
    }
}

fn spec() -> MixtureSpec {
    MixtureSpec {
        k_true: 3,
        pis: vec![0.3, 0.3, 0.4],
        centers: vec![vec![-4.0, 0.0], vec![4.0, 0.0], vec![0.0, 5.0]],
        spread: 1.0,
        llm_error_table: vec![vec![0.1, 0.6, 0.5], vec![0.5, 0.1, 0.4], vec![0.2, 0.2, 0.2]],
        llm_costs: vec![1.0, 1.0, 3.0],
        within_cluster_jitter: 0.1,
        seed: 5,
    }
}

struct Pipeline {
    dir: PathBuf,
}

impl Pipeline {
    fn p(&self, rel: &str) -> String {
        self.dir.join(rel).to_str().unwrap().to_string()
    }

    fn run(dir: &Path, spec_path: &Path) -> Self {
        let pl = Pipeline { dir: dir.to_path_buf() };
        ok(&[
            "synth",
            "--spec",
            s(spec_path),
            "--out",
            s(dir),
            "--n-train",
            "600",
            "--n-val",
            "400",
            "--n-test",
            "300",
        ]);
        ok(&[
            "cluster",
            "--prompts",
            &pl.p("train/prompts.jsonl"),
            "--k",
            "3",
            "--seed",
            "1",
            "--out",
            &pl.p("model.json"),
        ]);
        ok(&[
            "embed-llm",
            "--model",
            &pl.p("model.json"),
            "--prompts",
            &pl.p("val/prompts.jsonl"),
            "--labels",
            &pl.p("val/labels.csv"),
            "--out",
            &pl.p("features.jsonl"),
        ]);
        ok(&[
            "sweep",
            "--model",
            &pl.p("model.json"),
            "--features",
            &pl.p("features.jsonl"),
            "--pool",
            &pl.p("test/pool.csv"),
            "--prompts",
            &pl.p("test/prompts.jsonl"),
            "--labels",
            &pl.p("test/labels.csv"),
            "--out",
            &pl.p("curve.csv"),
        ]);
        ok(&[
            "report",
            "--curve",
            &pl.p("curve.csv"),
            "--labels",
            &pl.p("test/labels.csv"),
            "--out",
            &pl.p("report.json"),
        ]);
        pl
    }
}

#[test]
fn cli_pipeline_matches_library_pipeline() {
    let tmp = TempDir::new().unwrap();
    let spec = spec();
    let spec_path = write(tmp.path(), "spec.json", &serde_json::to_string(&spec).unwrap());
    let pl = Pipeline::run(&tmp.path().join("run"), &spec_path);
    let report: Value = serde_json::from_str(&fs::read_to_string(pl.p("report.json")).unwrap()).unwrap();

    let train = generate_stream(&spec, 600, 0, "tr").unwrap();
    let val = generate_stream(&spec, 400, 1, "va").unwrap();
    let test = generate_stream(&spec, 300, 2, "te").unwrap();
    let model = fit_kmeans(&train.embeddings(), &KMeansConfig::new(3, 1)).unwrap();
    let feats = cluster_error_features(&model, &val.embeddings(), &val.labels, &spec.llm_ids()).unwrap();
    let pool: Vec<PoolEntry> = feats
        .into_iter()
        .zip(&spec.llm_costs)
        .map(|(f, &c)| PoolEntry::new(f, c))
        .collect();
    let curve = sweep(
        &cluster_gamma(model),
        &test.embeddings(),
        &test.labels,
        &pool,
        &default_lambda_grid(&spec.llm_costs),
    )
    .unwrap();
    let m = metrics(&curve, peak_quality(&test.labels).unwrap()).unwrap();
    for (key, want) in [("area", m.area), ("area_50", m.area_50)] {
        let got = report[key].as_f64().unwrap();
        assert!((got - want).abs() < 1e-7, "{key}: cli {got} vs library {want}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let spec_path = write(tmp.path(), "spec.json", &serde_json::to_string(&spec()).unwrap());
    let a = Pipeline::run(&tmp.path().join("a"), &spec_path);
    let b = Pipeline::run(&tmp.path().join("b"), &spec_path);
    for f in [
        "train/prompts.jsonl",
        "test/labels.csv",
        "model.json",
        "features.jsonl",
        "curve.csv",
        "report.json",
    ] {
        assert_eq!(fs::read(a.p(f)).unwrap(), fs::read(b.p(f)).unwrap(), "{f}");
    }
    let leftovers: Vec<_> = fs::read_dir(&a.dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn learned_map_and_tune_run_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let spec_path = write(tmp.path(), "spec.json", &serde_json::to_string(&spec()).unwrap());
    let pl = Pipeline::run(&tmp.path().join("run"), &spec_path);
    ok(&[
        "cluster",
        "--prompts",
        &pl.p("train/prompts.jsonl"),
        "--k",
        "3",
        "--out",
        &pl.p("m2.json"),
        "--map-out",
        &pl.p("map.json"),
        "--labels",
        &pl.p("train/labels.csv"),
        "--epochs",
        "3",
    ]);
    let map: Value = serde_json::from_str(&fs::read_to_string(pl.p("map.json")).unwrap()).unwrap();
    assert_eq!(map["k"], 3);
    let decisions = ok(&[
        "route",
        "--router",
        "learned",
        "--model",
        &pl.p("map.json"),
        "--features",
        &pl.p("features.jsonl"),
        "--pool",
        &pl.p("test/pool.csv"),
        "--prompts",
        &pl.p("test/prompts.jsonl"),
        "--lambda",
        "0.05",
    ]);
    assert_eq!(decisions.lines().count(), 300);

    let tune = ok(&[
        "tune",
        "--router",
        "cluster",
        "--train-prompts",
        &pl.p("train/prompts.jsonl"),
        "--train-labels",
        &pl.p("train/labels.csv"),
        "--val-prompts",
        &pl.p("val/prompts.jsonl"),
        "--val-labels",
        &pl.p("val/labels.csv"),
        "--pool",
        &pl.p("val/pool.csv"),
        "--candidates",
        "2,3,4",
    ]);
    let lines: Vec<&str> = tune.lines().collect();
    assert_eq!(lines[0], "k,area,selected");
    assert_eq!(lines.len(), 4);
    assert_eq!(lines.iter().filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn validate_summarizes_a_dataset() {
    let tmp = TempDir::new().unwrap();
    let (prompts, _, _, pool) = two_llm_fixture(tmp.path());
    let labels = write(
        tmp.path(),
        "labels.csv",
        "prompt_id,cheap,strong\na,1,\nb,0,0\nc,,0\nd,0,1\n",
    );
    let doc: Value = serde_json::from_str(&ok(&[
        "validate",
        "--prompts",
        s(&prompts),
        "--labels",
        s(&labels),
        "--pool",
        s(&pool),
    ]))
    .unwrap();
    assert_eq!(doc["n_prompts"], 4);
}

#[test]
fn compare_runs_a_sign_test() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("trial,ours,base\n");
    for t in 0..8 {
        csv.push_str(&format!("{t},0.{},0.1\n", 5 + t % 3));
    }
    let input = write(tmp.path(), "trials.csv", &csv);
    let doc: Value =
        serde_json::from_str(&ok(&["compare", "--input", s(&input), "--a", "ours", "--b", "base"])).unwrap();
    assert_eq!(doc["wins"], 8);
    // Two-sided exact binomial: 2 * 0.5^8.
    assert!((doc["p_value"].as_f64().unwrap() - 2.0 / 256.0).abs() < 1e-9);
}

#[test]
fn errors_exit_nonzero_with_a_json_message() {
    let tmp = TempDir::new().unwrap();
    let (prompts, model, features, pool) = two_llm_fixture(tmp.path());

    let missing = run(&[
        "cluster",
        "--prompts",
        s(&tmp.path().join("nope.jsonl")),
        "--k",
        "2",
        "--out",
        s(&tmp.path().join("m.json")),
    ]);
    assert_eq!(missing.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "io");

    let bad = write(
        tmp.path(),
        "bad.csv",
        "prompt_id,cheap,strong\na,1.5,0\nb,0,0\nc,0,0\nd,0,0\n",
    );
    let out = run(&[
        "validate",
        "--prompts",
        s(&prompts),
        "--labels",
        s(&bad),
        "--pool",
        s(&pool),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(serde_json::from_slice::<Value>(&out.stderr).unwrap()["message"]
        .as_str()
        .unwrap()
        .contains("cheap"));

    let neg = run(&[
        "route",
        "--model",
        s(&model),
        "--features",
        s(&features),
        "--pool",
        s(&pool),
        "--prompts",
        s(&prompts),
        "--lambda=-1",
    ]);
    assert_eq!(neg.status.code(), Some(1));

    let usage = run(&["route", "--lambda", "0"]);
    assert_eq!(usage.status.code(), Some(2));
}
