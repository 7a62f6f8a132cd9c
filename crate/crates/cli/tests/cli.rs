use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stochmatch"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TRIANGLE: &str = "n 3\n0 1 0.5\n1 2 0.5\n0 2 0.5\n";

fn edge_lines(text: &str) -> usize {
    text.lines().filter(|l| !l.starts_with('n') && !l.starts_with('#') && !l.trim().is_empty()).count()
}

#[test]
fn certain_single_edge_is_kept() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", "n 2\n0 1 1.0\n");
    let out = dir.path().join("h.txt");
    ok(&["sparsify", "--input", s(&g), "--R", "3", "--out", s(&out)]);
    assert_eq!(edge_lines(&std::fs::read_to_string(&out).unwrap()), 1);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("h.txt.json")).unwrap()).unwrap();
    assert_eq!(meta["rounds"], 3);
    assert_eq!(meta["h_edges"], 1);
    assert_eq!(meta["max_degree"], 1);
    // q = 1 on the only edge, so it is crucial under any thresholds
    assert_eq!(meta["q"][0], 1.0);
    assert_eq!(meta["crucial"], 1);
    assert_eq!(meta["h"], serde_json::json!([0]));
}

#[test]
fn empty_graph_gives_empty_subgraph() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", "n 4\n");
    let text = ok(&["sparsify", "--input", s(&g), "--R", "2"]);
    assert_eq!(edge_lines(&text), 0);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", "n 5\n0 1 0.4\n1 2 0.6\n2 3 0.3\n3 4 0.7\n4 0 0.5\n0 2 0.2\n");
    for args in [
        vec!["sparsify", "--R", "4", "--seed", "9"],
        vec!["evaluate", "--R", "1,4", "--samples", "500", "--seed", "9"],
        vec!["lca-stats", "--lca", "tmis", "--sweeps", "4", "--threads", "2"],
    ] {
        let mut full = args.clone();
        full.extend(["--input", s(&g)]);
        assert_eq!(ok(&full), ok(&full), "{args:?}");
    }
}

#[test]
fn full_subgraph_has_ratio_one() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TRIANGLE);
    let text = ok(&["evaluate", "--input", s(&g), "--h-file", s(&g), "--exact"]);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4].parse::<f64>().unwrap(), 1.0);
    assert_eq!(row[6], "exact");
}

#[test]
fn triangle_with_one_edge_exact_ratio() {
    // E[μ(G_p)] = 7/8 and the single kept edge contributes 1/2, so 4/7
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TRIANGLE);
    let h = write(&dir, "h.txt", "n 3\n0 1 0.5\n");
    let text = ok(&["evaluate", "--input", s(&g), "--h-file", s(&h), "--exact"]);
    let ratio: f64 = text.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
    assert!((ratio - 4.0 / 7.0).abs() < 1e-6, "{ratio}");
}

#[test]
fn r_sweep_writes_one_row_per_value() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TRIANGLE);
    let text = ok(&["evaluate", "--input", s(&g), "--R", "1,2,4,8", "--samples", "300"]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,m,p,R,ratio,stderr,mode");
    let rs: Vec<String> = lines.map(|l| l.split(',').nth(3).unwrap().to_string()).collect();
    assert_eq!(rs, ["1", "2", "4", "8"]);
}

#[test]
fn self_only_ledger_is_all_ones() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TRIANGLE);
    let text = ok(&["lca-stats", "--input", s(&g), "--lca", "self-only", "--sweeps", "3"]);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        for v in r.split(',').skip(1) {
            assert_eq!(v.parse::<f64>().unwrap(), 1.0, "{r}");
        }
    }
}

#[test]
fn verify_writes_claim_report() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TRIANGLE);
    let out = dir.path().join("report.json");
    let args = [
        "verify", "--input", s(&g), "--trials", "4", "--eps", "0.3", "--R", "8", "--tau-minus", "0.15", "--tau-plus", "0.3", "--out",
        s(&out),
    ];
    ok(&args);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["trials"], 4);
    assert!(!report["claims"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_is_read_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TRIANGLE);
    let cfg = write(&dir, "c.json", &format!(r#"{{"input": "{}", "R": [1, 2], "samples": 200}}"#, s(&g)));
    let text = ok(&["evaluate", "--config", s(&cfg)]);
    assert_eq!(text.lines().count(), 3);
    let text = ok(&["evaluate", "--config", s(&cfg), "--R", "5"]);
    assert_eq!(text.lines().count(), 2);

    let bad = write(&dir, "bad.json", r#"{"rounds_typo": 3}"#);
    assert_eq!(run(&["evaluate", "--config", s(&bad)]).status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["sparsify", "--input", "/nonexistent/graph.txt"]).status.code(), Some(2));
    assert_eq!(run(&["sparsify"]).status.code(), Some(2));
    let g = write(&dir, "g.txt", TRIANGLE);
    assert_eq!(run(&["sparsify", "--input", s(&g), "--eps", "1.5"]).status.code(), Some(2));
    let h = write(&dir, "h.txt", "n 4\n0 3 0.5\n");
    assert_eq!(run(&["evaluate", "--input", s(&g), "--h-file", s(&h)]).status.code(), Some(2));
    // 25 edges is above the exhaustive enumeration cap
    let mut big = String::from("n 26\n");
    for i in 0..25 {
        big.push_str(&format!("{i} {} 0.5\n", i + 1));
    }
    let big = write(&dir, "big.txt", &big);
    assert_eq!(run(&["evaluate", "--input", s(&big), "--R", "1", "--exact"]).status.code(), Some(1));
}
