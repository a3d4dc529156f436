use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::CommandFactory;
use netdiff_cli::run::sha256_hex;
use netdiff_cli::Cli;

const COMMANDS: [&str; 8] =
    ["graph", "gaussian", "simulate", "girsanov-check", "ci-scan", "approx", "hc-lab", "reproduce-paper"];
const FLAGS: [&str; 4] = ["--config", "--out", "--seed", "--replicas"];

const GOLDEN_COV: [[f64; 5]; 5] = [
    [0.3611, 0.2388, 0.1435, 0.0767, 0.0324],
    [0.2388, 0.5046, 0.3156, 0.1759, 0.0767],
    [0.1435, 0.3156, 0.5370, 0.3156, 0.1435],
    [0.0767, 0.1759, 0.3156, 0.5046, 0.2388],
    [0.0324, 0.0767, 0.1435, 0.2388, 0.3611],
];

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn dir(&self) -> PathBuf {
        let line = self.stdout.lines().find_map(|l| l.strip_prefix("run directory: ")).expect("run directory line");
        PathBuf::from(line)
    }
}

fn netdiff(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_netdiff")).args(args).output().expect("binary runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn with_config(dir: &Path, name: &str, config: &str, command: &str, extra: &[&str]) -> Run {
    let file = dir.join(name);
    std::fs::write(&file, config).unwrap();
    let out = dir.join("runs");
    let mut args = vec![command, "--config", file.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    netdiff(&args)
}

fn csv_matrix(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').skip(1).map(|x| x.parse().unwrap()).collect()).collect()
}

#[test]
fn help_lists_every_command_and_flag() {
    let top = netdiff(&["--help"]);
    assert_eq!(top.code, 0);
    for name in COMMANDS.iter().chain(&FLAGS) {
        assert!(top.stdout.contains(name), "top-level help misses {name}");
    }
    for command in COMMANDS {
        let sub = netdiff(&[command, "--help"]);
        assert_eq!(sub.code, 0);
        for flag in FLAGS {
            assert!(sub.stdout.contains(flag), "`{command} --help` misses {flag}");
        }
    }
}

#[test]
fn every_argument_has_help_text() {
    let cli = Cli::command();
    let mut undocumented = Vec::new();
    for cmd in std::iter::once(&cli).chain(cli.get_subcommands()) {
        if cmd.get_about().is_none() {
            undocumented.push(format!("command {}", cmd.get_name()));
        }
        for arg in cmd.get_arguments() {
            if arg.get_help().is_none() {
                undocumented.push(format!("{} {}", cmd.get_name(), arg.get_id()));
            }
        }
    }
    assert!(undocumented.is_empty(), "{undocumented:?}");
    let names: Vec<&str> = cli.get_subcommands().map(|c| c.get_name()).collect();
    assert_eq!(names, COMMANDS);
}

#[test]
fn gaussian_on_path5_matches_the_published_covariance() {
    let tmp = tempfile::tempdir().unwrap();
    let config = r#"{
        "graph": {"kind": "path", "n": 5},
        "gaussian": {
            "times": [2],
            "conditionals": [{"target": ["1", "3"], "given": ["2"]}],
            "expect": {"conditionals": [[[0.2481, -0.0058], [-0.0058, 0.3397]]], "tol": 1e-4}
        }
    }"#;
    let run = with_config(tmp.path(), "p5.json", config, "gaussian", &[]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    let cov = csv_matrix(&std::fs::read_to_string(run.dir().join("covariance_t2.csv")).unwrap());
    for i in 0..5 {
        for j in 0..5 {
            assert!((cov[i][j] - GOLDEN_COV[i][j]).abs() < 1e-4, "({i},{j}): {}", cov[i][j]);
        }
    }
    assert!(run.stdout.contains("check PASS: conditional 1 at t=2"));
}

#[test]
fn graph_reports_the_second_boundary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = r#"{"graph": {"kind": "path", "n": 5}, "graph_report": {"sets": [["1"]]}}"#;
    let run = with_config(tmp.path(), "g.json", config, "graph", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.dir().join("graph_report.json")).unwrap()).unwrap();
    assert_eq!(report["sets"][0]["boundary"], serde_json::json!(["2"]));
    assert_eq!(report["sets"][0]["second_boundary"], serde_json::json!(["2", "3"]));
    assert!(run.stdout.contains("A={1}: boundary {2}, second boundary {2,3}"));
}

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "run.log")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let config = r#"{
        "graph": {"kind": "cycle", "n": 4},
        "drift": "nbr_avg(tanh(y)) - x",
        "diffusion": 0.8,
        "initial": {"kind": "product", "default": {"kind": "normal", "mean": 0, "std": 1}},
        "grid": {"t_max": 1, "steps": 20},
        "replicas": 50,
        "seed": 9
    }"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = with_config(a.path(), "c.json", config, "simulate", &[]);
    let rb = with_config(b.path(), "c.json", config, "simulate", &[]);
    assert_eq!((ra.code, rb.code), (0, 0), "{}", ra.stderr);
    assert_eq!(ra.dir().file_name(), rb.dir().file_name());
    let (fa, fb) = (artifact_bytes(&ra.dir()), artifact_bytes(&rb.dir()));
    assert_eq!(fa, fb);
    assert!(fa.contains_key("ensemble.bin") && ra.dir().join("run.log").exists());

    let manifest: serde_json::Value = serde_json::from_slice(&fa["manifest.json"]).unwrap();
    for entry in manifest["artifacts"].as_array().unwrap() {
        let name = entry["path"].as_str().unwrap();
        assert_eq!(entry["sha256"].as_str().unwrap(), sha256_hex(&fa[name]), "{name}");
    }
    assert_eq!(manifest["artifacts"].as_array().unwrap().len() + 1, fa.len());

    let reseeded = with_config(a.path(), "c.json", config, "simulate", &["--seed", "10"]);
    assert_eq!(reseeded.code, 0);
    assert_ne!(reseeded.dir(), ra.dir());
    assert_ne!(artifact_bytes(&reseeded.dir())["ensemble.bin"], fa["ensemble.bin"]);
}

#[test]
fn exit_codes_follow_the_outcome() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = with_config(tmp.path(), "u.json", r#"{"graph": {"kind": "path", "n": 3}, "colour": 2}"#, "graph", &[]);
    assert_eq!(unknown.code, 2, "{}", unknown.stderr);
    assert!(unknown.stderr.contains("colour"));

    assert_eq!(netdiff(&["graph", "--out", tmp.path().to_str().unwrap()]).code, 2);
    let bad_label = r#"{"graph": {"kind": "path", "n": 3}, "graph_report": {"sets": [["9"]]}}"#;
    assert_eq!(with_config(tmp.path(), "l.json", bad_label, "graph", &[]).code, 2);

    let wrong = r#"{"graph": {"kind": "path", "n": 5},
        "gaussian": {"times": [2], "expect": {"covariance": [[1,0,0,0,0],[0,1,0,0,0],[0,0,1,0,0],[0,0,0,1,0],[0,0,0,0,1]], "tol": 1e-4}}}"#;
    let failed = with_config(tmp.path(), "w.json", wrong, "gaussian", &[]);
    assert_eq!(failed.code, 1, "{}", failed.stderr);
    assert!(failed.stdout.contains("check FAIL"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(failed.dir().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], serde_json::json!(false));

    let explosive = r#"{"graph": {"kind": "path", "n": 2}, "drift": "1000*x",
        "initial": {"kind": "product", "default": {"kind": "point", "value": 1}},
        "grid": {"t_max": 200, "steps": 200}, "replicas": 2}"#;
    let blown = with_config(tmp.path(), "e.json", explosive, "simulate", &[]);
    assert_eq!(blown.code, 3, "{}", blown.stderr);
    assert!(blown.stderr.contains("non-finite"));
}

#[test]
fn ci_scan_finds_second_order_structure_on_path_space() {
    let tmp = tempfile::tempdir().unwrap();
    let config = r#"{"graph": {"kind": "path", "n": 5}, "drift": "nbr_sum(y) - 2*x",
        "grid": {"t_max": 2, "steps": 7}, "ci_scan": {"expect": {"1": false, "2": true}}}"#;
    let run = with_config(tmp.path(), "ci.json", config, "ci-scan", &[]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    let csv = std::fs::read_to_string(run.dir().join("ci_reports.csv")).unwrap();
    assert!(csv.starts_with("set,order,mode,statistic,verdict\n"));
}

#[test]
fn graph_files_resolve_relative_to_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("tri.txt"), "a b\nb c\nc a\n").unwrap();
    let config = r#"{"graph": {"kind": "file", "path": "tri.txt"}, "graph_report": {"sets": [["a"]]}}"#;
    let run = with_config(tmp.path(), "f.json", config, "graph", &[]);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let stored = std::fs::read_to_string(run.dir().join("config.json")).unwrap();
    assert!(stored.contains("edge_list"), "{stored}");
}

#[test]
fn hc_lab_search_finds_a_grid_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let config = r#"{"graph": {"kind": "grid", "rows": 3, "cols": 3}, "seed": 1,
        "hc_lab": {"suite": "search", "subset": ["1_0", "1_1", "1_2"], "expect_found": true}}"#;
    let run = with_config(tmp.path(), "hc.json", config, "hc-lab", &[]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    assert!(run.dir().join("witness_model.json").exists());
}

#[test]
fn reproduce_paper_passes_every_golden_check() {
    let tmp = tempfile::tempdir().unwrap();
    let run = netdiff(&["reproduce-paper", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}{}", run.stdout, run.stderr);
    let table = netdiff_cli::golden::table();
    assert!(run.stdout.contains(&format!("{0} of {0} golden checks passed", table.len())));
    for entry in &table {
        assert!(run.stdout.contains(&format!("check PASS: {}", entry.id)), "{}", entry.id);
    }
}
