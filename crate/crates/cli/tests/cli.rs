use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lipest::train::init_mlp;
use lipest::{breakpoint_oracle_1d, grid_oracle, GridSpec, Hyperbox, Mlp, NormPair};
use serde_json::Value;
use tempfile::TempDir;

fn lipest(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipest"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = lipest(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn save_random_model(dir: &Path, name: &str, arch: &[usize], seed: u64) -> PathBuf {
    let path = dir.join(name);
    init_mlp(arch, seed).unwrap().save_json(&path).unwrap();
    path
}

fn without(mut v: Value, key: &str) -> Value {
    v.as_object_mut().unwrap().remove(key);
    v
}

#[test]
fn gen_data_writes_requested_points() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "gen-data",
            "--dim",
            "2",
            "--spheres",
            "3",
            "--points",
            "800",
            "--seed",
            "1",
            "--out",
            "d.json",
        ],
        dir.path(),
    );
    let data = read_json(dir.path().join("d.json"));
    assert_eq!(data["inputs"].as_array().unwrap().len(), 800);
    assert_eq!(data["targets"].as_array().unwrap().len(), 800);
    assert_eq!(data["meta"]["spheres"].as_array().unwrap().len(), 3);
    let manifest = read_json(dir.path().join("d.json.manifest.json"));
    assert_eq!(manifest["command"], "gen-data");
    assert_eq!(manifest["seed"], 1);
}

#[test]
fn gen_data_without_spheres_is_all_positive_mean() {
    let dir = TempDir::new().unwrap();
    ok(
        &[
            "gen-data",
            "--dim",
            "3",
            "--spheres",
            "0",
            "--points",
            "2000",
            "--out",
            "d.json",
        ],
        dir.path(),
    );
    let data = read_json(dir.path().join("d.json"));
    let targets: Vec<f64> = data["targets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t[0].as_f64().unwrap())
        .collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
}

#[test]
fn missing_out_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = lipest(&["gen-data", "--dim", "2"], dir.path());
    assert_eq!(exit_code(&out), 2);
    assert!(stderr(&out).contains("--out"));
    assert!(stderr(&out).contains("Usage: lipest gen-data"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(
        exit_code(&lipest(&["estimate", "--bogus", "1"], dir.path())),
        2
    );
}

#[test]
fn train_is_reproducible_and_rejects_zero_epochs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok(
        &[
            "gen-data", "--dim", "2", "--points", "100", "--seed", "1", "--out", "d.json",
        ],
        d,
    );
    let train = |out: &str| {
        ok(
            &[
                "train", "--data", "d.json", "--arch", "2,8,1", "--lr", "5e-3", "--epochs", "50",
                "--seed", "1", "--out", out,
            ],
            d,
        )
    };
    train("a.json");
    train("b.json");
    let a = std::fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.json")).unwrap());
    let net = Mlp::load_json(d.join("a.json")).unwrap();
    assert_eq!(net.arch(), vec![2, 8, 1]);
    let manifest = read_json(d.join("a.json.manifest.json"));
    let (first, last) = (
        manifest["results"]["initial_loss"].as_f64().unwrap(),
        manifest["results"]["final_loss"].as_f64().unwrap(),
    );
    assert!(last < first, "{first} -> {last}");

    let out = lipest(
        &[
            "train", "--data", "d.json", "--arch", "2,8,1", "--epochs", "0", "--out", "c.json",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 2);
    assert!(!d.join("c.json").exists());
}

#[test]
fn train_accepts_csv_data() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    std::fs::write(d.join("d.csv"), "x0,y\n-1,2\n0,0\n1,2\n").unwrap();
    ok(
        &[
            "train", "--data", "d.csv", "--arch", "1,4,1", "--epochs", "5", "--out", "m.json",
        ],
        d,
    );
    assert_eq!(Mlp::load_json(d.join("m.json")).unwrap().input_dim(), 1);
}

#[test]
fn partitioned_report_lists_every_cell() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m7.json", &[7, 8, 8, 1], 3);
    ok(
        &[
            "estimate",
            "--model",
            "m7.json",
            "--alg",
            "partitioned",
            "--k",
            "2",
            "--samples",
            "1000",
            "--out",
            "r.json",
        ],
        d,
    );
    let report = read_json(d.join("r.json"));
    assert_eq!(report["regions"].as_array().unwrap().len(), 128);
    assert_eq!(report["samples_used"], 1000);
    assert_eq!(report["algorithm"], "partitioned");
}

#[test]
fn unsupported_norm_pair_exits_with_domain_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m.json", &[2, 4, 1], 0);
    let out = lipest(
        &[
            "estimate", "--model", "m.json", "--alpha", "inf", "--beta", "1", "--out", "r.json",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 3);
    assert!(
        stderr(&out).contains("unsupported norm pair"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn large_grid_is_refused() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m7.json", &[7, 4, 1], 0);
    let out = lipest(
        &[
            "oracle", "--model", "m7.json", "--mode", "grid", "--grid", "400", "--out", "o.json",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 3);
    assert!(stderr(&out).contains("400^7"), "{}", stderr(&out));
}

#[test]
fn oracle_matches_the_library() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let m1 = save_random_model(d, "m1.json", &[1, 8, 8, 1], 5);
    ok(
        &[
            "oracle",
            "--model",
            "m1.json",
            "--mode",
            "breakpoints",
            "--out",
            "b.json",
        ],
        d,
    );
    let report = read_json(d.join("b.json"));
    let net = Mlp::load_json(&m1).unwrap();
    let interval = Hyperbox::cube(1, -1.0, 1.0).unwrap();
    let exact = breakpoint_oracle_1d(&net, &interval, NormPair::inf_inf()).unwrap();
    assert_eq!(report["value"].as_f64().unwrap(), exact.value);
    assert_eq!(
        report["breakpoint_count"].as_u64().unwrap() as usize,
        report["breakpoints"].as_array().unwrap().len()
    );

    let m2 = save_random_model(d, "m2.json", &[2, 8, 1], 6);
    ok(
        &[
            "oracle",
            "--model",
            "m2.json",
            "--grid",
            "50",
            "--alpha",
            "2",
            "--beta",
            "2",
            "--threads",
            "2",
            "--out",
            "g.json",
        ],
        d,
    );
    let net = Mlp::load_json(&m2).unwrap();
    let square = Hyperbox::cube(2, -1.0, 1.0).unwrap();
    let pair = NormPair::new(lipest::NormTag::Two, lipest::NormTag::Two).unwrap();
    let grid = grid_oracle(&net, &square, &GridSpec::new(50), pair).unwrap();
    let report = read_json(d.join("g.json"));
    assert_eq!(report["value"].as_f64().unwrap(), grid.value);
    let argmax: Vec<f64> = report["argmax"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(argmax, grid.argmax);
}

#[test]
fn heatmap_agrees_with_grid_oracle() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m.json", &[2, 16, 16, 1], 2);
    ok(
        &[
            "heatmap", "--model", "m.json", "--grid", "40", "--out", "h.csv",
        ],
        d,
    );
    ok(
        &[
            "oracle", "--model", "m.json", "--grid", "40", "--out", "o.json",
        ],
        d,
    );
    let text = std::fs::read_to_string(d.join("h.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,norm"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1600);
    // Row-major: the first coordinate changes slowest.
    assert_eq!(rows[0][..2], [-1.0, -1.0]);
    assert_eq!(rows[1][0], -1.0);
    assert_eq!(rows[40][0], rows[41][0]);
    assert!(rows[40][0] > -1.0);
    let max = rows.iter().map(|r| r[2]).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max, read_json(d.join("o.json"))["value"].as_f64().unwrap());
}

#[test]
fn heatmap_needs_two_inputs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m3.json", &[3, 4, 1], 0);
    let out = lipest(
        &[
            "heatmap", "--model", "m3.json", "--grid", "10", "--out", "h.csv",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 3);
}

#[test]
fn io_errors_name_the_path() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let out = lipest(
        &["estimate", "--model", "missing.json", "--out", "r.json"],
        d,
    );
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("missing.json"));

    save_random_model(d, "m.json", &[2, 4, 1], 0);
    let out = lipest(
        &[
            "estimate",
            "--model",
            "m.json",
            "--samples",
            "10",
            "--out",
            "no/such/dir/r.json",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("no/such/dir/r.json"));

    std::fs::write(d.join("bad.json"), "{\"layers\": 3}").unwrap();
    let out = lipest(&["estimate", "--model", "bad.json", "--out", "r.json"], d);
    assert_eq!(exit_code(&out), 4);
    assert!(stderr(&out).contains("bad.json"));
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m.json", &[2, 4, 1], 0);
    std::fs::write(
        d.join("cfg.json"),
        r#"{"model": "m.json", "samples": 300, "seed": 4, "alg": "uniform", "out": "r.json"}"#,
    )
    .unwrap();
    ok(&["estimate", "--config", "cfg.json", "--seed", "9"], d);
    let report = read_json(d.join("r.json"));
    assert_eq!(report["samples_used"], 300);
    assert_eq!(report["seed"], 9);
    assert_eq!(report["algorithm"], "uniform");
    assert_eq!(report["norm_pair"], serde_json::json!(["inf", "inf"]));

    std::fs::write(d.join("typo.json"), r#"{"samplez": 3}"#).unwrap();
    let out = lipest(
        &[
            "estimate",
            "--config",
            "typo.json",
            "--model",
            "m.json",
            "--out",
            "r.json",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn manifest_replays_the_run() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m.json", &[2, 16, 16, 1], 1);
    ok(
        &[
            "estimate",
            "--model",
            "m.json",
            "--alg",
            "ucb",
            "--samples",
            "3000",
            "--seed",
            "7",
            "--out",
            "r.json",
        ],
        d,
    );
    let first = read_json(d.join("r.json"));
    let manifest = read_json(d.join("r.json.manifest.json"));
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["inputs"], serde_json::json!(["m.json"]));
    assert_eq!(manifest["results"]["estimate"], first["estimate"]);
    std::fs::rename(d.join("r.json.manifest.json"), d.join("run.json")).unwrap();
    ok(&["estimate", "--config", "run.json"], d);
    assert_eq!(
        without(first, "wall_time_s"),
        without(read_json(d.join("r.json")), "wall_time_s")
    );

    let out = lipest(&["oracle", "--config", "run.json"], d);
    assert_eq!(
        exit_code(&out),
        2,
        "a manifest of another command is rejected"
    );
}

fn write_suite(d: &Path, name: &str, text: &str) {
    std::fs::write(d.join(name), text).unwrap();
}

fn csv_without_wall_time(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .map(|l| {
            let mut fields: Vec<String> = l.split(',').map(str::to_string).collect();
            fields.remove(7);
            fields
        })
        .collect()
}

#[test]
fn bench_writes_one_row_per_run_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_suite(
        d,
        "suite.json",
        r#"{"entries": [
            {"name": "scalar", "arch": [1, 8, 8, 1], "seeds": [0, 1, 2],
             "budgets": [100, 500], "algorithms": ["uniform", "partitioned", "ucb"],
             "reference": {"kind": "breakpoints"}},
            {"name": "trained", "arch": [2, 8, 1], "seeds": [4],
             "budgets": [400], "algorithms": ["ucb"],
             "train": {"lr": 0.005, "epochs": 20}, "data": {"points": 50},
             "reference": {"kind": "grid", "points_per_dim": 30}}
        ]}"#,
    );
    ok(&["bench", "--suite", "suite.json", "--out", "a.csv"], d);
    ok(
        &[
            "bench",
            "--suite",
            "suite.json",
            "--threads",
            "2",
            "--out",
            "b.csv",
        ],
        d,
    );
    let a = csv_without_wall_time(&d.join("a.csv"));
    assert_eq!(a, csv_without_wall_time(&d.join("b.csv")));
    assert_eq!(a.len(), 1 + 3 * 2 * 3 + 1);
    assert_eq!(
        a[0].join(","),
        "entry,net_seed,algorithm,budget,estimate,reference,relative_error,status"
    );
    for row in &a[1..] {
        assert_eq!(row.last().unwrap(), "ok");
        let est: f64 = row[4].parse().unwrap();
        let reference: f64 = row[5].parse().unwrap();
        let rel: f64 = row[6].parse().unwrap();
        assert_eq!(rel, (reference - est) / reference);
        if row[0] == "scalar" {
            assert!(est <= reference + 1e-12);
        }
    }
    let manifest = read_json(d.join("a.csv.manifest.json"));
    assert_eq!(manifest["results"]["runs"], 19);
}

#[test]
fn bench_continues_past_failed_runs() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_suite(
        d,
        "suite.json",
        r#"{"entries": [
            {"name": "bad", "arch": [2, 4, 1], "seeds": [0], "budgets": [10],
             "algorithms": ["uniform"], "reference": {"kind": "breakpoints"}},
            {"name": "good", "arch": [1, 4, 1], "seeds": [0], "budgets": [10],
             "algorithms": ["uniform"], "reference": {"kind": "breakpoints"}}
        ]}"#,
    );
    let out = ok(&["bench", "--suite", "suite.json", "--out", "r.csv"], d);
    assert!(stderr(&out).contains("1 of 2 runs failed"));
    let text = std::fs::read_to_string(d.join("r.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(
        lines[1].starts_with("bad,") && lines[1].contains("failed: reference"),
        "{}",
        lines[1]
    );
    assert!(
        lines[2].starts_with("good,") && lines[2].ends_with(",ok"),
        "{}",
        lines[2]
    );
}

#[test]
fn empty_suite_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    write_suite(d, "empty.json", r#"{"entries": []}"#);
    assert_eq!(
        exit_code(&lipest(
            &["bench", "--suite", "empty.json", "--out", "r.csv"],
            d
        )),
        2
    );
    write_suite(d, "blank.json", "");
    assert_eq!(
        exit_code(&lipest(
            &["bench", "--suite", "blank.json", "--out", "r.csv"],
            d
        )),
        2
    );
    write_suite(
        d,
        "noseeds.json",
        r#"{"entries": [{"arch": [1, 4, 1], "seeds": [], "budgets": [10],
            "algorithms": ["ucb"], "reference": {"kind": "breakpoints"}}]}"#,
    );
    assert_eq!(
        exit_code(&lipest(
            &["bench", "--suite", "noseeds.json", "--out", "r.csv"],
            d
        )),
        2
    );
    assert!(!d.join("r.csv").exists());
}

#[test]
fn help_documents_every_flag() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["estimate", "--help"], dir.path());
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--model",
        "--domain",
        "--alg",
        "--samples",
        "--alpha",
        "--beta",
        "--k",
        "--c",
        "--tm",
        "--n0",
        "--seed",
        "--sigma-mode",
        "--threads",
        "--out",
        "--config",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn custom_domain_file_is_used() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    save_random_model(d, "m.json", &[2, 4, 1], 0);
    std::fs::write(d.join("box.json"), r#"{"low": [0, 0], "high": [0.5, 2]}"#).unwrap();
    ok(
        &[
            "estimate",
            "--model",
            "m.json",
            "--domain",
            "box.json",
            "--alg",
            "uniform",
            "--samples",
            "200",
            "--out",
            "r.json",
        ],
        d,
    );
    let report = read_json(d.join("r.json"));
    let x: Vec<f64> = report["argmax"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(
        (0.0..=0.5).contains(&x[0]) && (0.0..=2.0).contains(&x[1]),
        "{x:?}"
    );

    std::fs::write(
        d.join("box3.json"),
        r#"{"low": [0, 0, 0], "high": [1, 1, 1]}"#,
    )
    .unwrap();
    let out = lipest(
        &[
            "estimate",
            "--model",
            "m.json",
            "--domain",
            "box3.json",
            "--out",
            "r.json",
        ],
        d,
    );
    assert_eq!(exit_code(&out), 3);
}
