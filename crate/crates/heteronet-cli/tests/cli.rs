//! End-to-end tests of the command-line pipeline: exit codes, output
//! formats, determinism, and the verify round trip.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heteronet"))
}

fn graph(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../graphs")
        .join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("heteronet-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("command runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn analyze_eligible_graph_exits_zero() {
    let out = run(bin().arg("analyze").arg(graph("kirk_silber.json")));
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("splitting vertex: xi2 (order 2)"), "{text}");
    assert!(text.contains("cycle: (xi1, xi2, xi3)"), "{text}");
    assert!(text.contains("cycle: (xi1, xi2, xi4)"), "{text}");
    assert!(text.contains("eligible: true"), "{text}");
}

#[test]
fn analyze_delta_clique_graph_exits_two() {
    let dir = scratch("analyze2");
    let out_json = dir.join("report.json");
    let out = run(bin()
        .arg("analyze")
        .arg(graph("b3b3c4.json"))
        .arg("--out")
        .arg(&out_json));
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("delta-clique: (xi2, xi3, xi4)"), "{text}");
    assert!(text.contains("delta-clique: (xi3, xi4, xi1)"), "{text}");
    // JSON report landed with a run manifest.
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(report["gate"]["eligible"], serde_json::json!(false));
    assert!(report["manifest_hash"].is_string());
    assert!(dir.join("report.run.json").exists());
}

#[test]
fn analyze_two_cycle_graph_exits_two() {
    let out = run(bin().arg("analyze").arg(graph("b2b2.txt")));
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("2-cycle: {a, b}"));
}

#[test]
fn analyze_malformed_file_exits_one() {
    let dir = scratch("analyze-bad");
    let bad = dir.join("bad.txt");
    fs::write(&bad, "xi1 => xi2\n").unwrap();
    let out = run(bin().arg("analyze").arg(&bad));
    assert_eq!(out.status.code(), Some(1));
    let selfloop = dir.join("loop.txt");
    fs::write(&selfloop, "3 -> 3\n").unwrap();
    let out = run(bin().arg("analyze").arg(&selfloop));
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("1-cycle at vertex 3"), "{err}");
}

#[test]
fn analyze_dot_export() {
    let dir = scratch("dot");
    let dot_path = dir.join("graph.dot");
    let out = run(bin()
        .arg("analyze")
        .arg(graph("three_cycle.txt"))
        .arg("--dot")
        .arg(&dot_path));
    assert_eq!(out.status.code(), Some(0));
    let dot = fs::read_to_string(&dot_path).unwrap();
    assert!(dot.contains("\"1\" -> \"2\";"), "{dot}");
    assert_eq!(dot.matches("->").count(), 3);
}

#[test]
fn realize_writes_manifest_with_separating_node() {
    let dir = scratch("realize");
    let out_path = dir.join("system.json");
    let out = run(bin()
        .arg("realize")
        .arg(graph("kirk_silber.json"))
        .arg("--out")
        .arg(&out_path));
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(manifest["verified"], serde_json::json!(true));
    assert_eq!(manifest["epsilon"], serde_json::json!(0.02));
    let eqs = manifest["equilibria"].as_array().unwrap();
    let zeta = eqs
        .iter()
        .find(|e| e["kind"] == serde_json::json!("separating-node"))
        .expect("zeta present");
    let loc = zeta["location"].as_array().unwrap();
    let c2 = loc[2].as_f64().unwrap().powi(2);
    assert!((c2 - 1.0 / 2.05).abs() < 1e-9, "c^2 = {c2}");
}

#[test]
fn realize_rejects_bad_epsilon_and_ineligible_graphs() {
    let dir = scratch("realize-bad");
    let out_path = dir.join("system.json");
    let out = run(bin()
        .arg("realize")
        .arg(graph("kirk_silber.json"))
        .arg("--epsilon")
        .arg("1.5")
        .arg("--out")
        .arg(&out_path));
    assert_eq!(out.status.code(), Some(1));
    let out = run(bin()
        .arg("realize")
        .arg(graph("b3b3c4.json"))
        .arg("--out")
        .arg(&out_path));
    assert_eq!(out.status.code(), Some(1));
    // Forcing works and tags the manifest unverified.
    let out = run(bin()
        .arg("realize")
        .arg(graph("b3b3c4.json"))
        .arg("--force")
        .arg("--out")
        .arg(&out_path));
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(manifest["verified"], serde_json::json!(false));
    assert_eq!(manifest["forced"], serde_json::json!(true));
}

fn realize_kirk_silber(dir: &Path) -> PathBuf {
    let out_path = dir.join("system.json");
    let out = run(bin()
        .arg("realize")
        .arg(graph("kirk_silber.json"))
        .arg("--out")
        .arg(&out_path));
    assert_eq!(out.status.code(), Some(0));
    out_path
}

#[test]
fn simulate_writes_csv_sidecar_and_sections() {
    let dir = scratch("simulate");
    let system = realize_kirk_silber(&dir);
    let traj = dir.join("traj.csv");
    let out = run(bin()
        .arg("simulate")
        .arg(&system)
        .arg("--node")
        .arg("xi2")
        .arg("--sde")
        .arg("1e-5")
        .arg("--time")
        .arg("2000")
        .arg("--seed")
        .arg("11")
        .arg("--section")
        .arg("x1^2<0.1")
        .arg("--out")
        .arg(&traj));
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let csv = fs::read_to_string(&traj).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,x1,x2,x3,x4");
    assert_eq!(csv.lines().count(), 1 + 10_001); // header + T/h + 1 rows
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("traj.terminal.json")).unwrap()).unwrap();
    assert_eq!(sidecar["terminal"]["status"], serde_json::json!("max-time"));
    assert_eq!(sidecar["steps"], serde_json::json!(10_000));
    let section = fs::read_to_string(dir.join("traj.section.csv")).unwrap();
    assert!(
        section.lines().count() > 100,
        "section file has visit states"
    );
    assert!(dir.join("traj.run.json").exists());
}

#[test]
fn simulate_rejects_bad_initial_state() {
    let dir = scratch("simulate-bad");
    let system = realize_kirk_silber(&dir);
    let out = run(bin()
        .arg("simulate")
        .arg(&system)
        .arg("--x0")
        .arg("0.1,0.2")
        .arg("--out")
        .arg(dir.join("t.csv")));
    assert_eq!(out.status.code(), Some(1));
    let out = run(bin()
        .arg("simulate")
        .arg(&system)
        .arg("--node")
        .arg("nope")
        .arg("--out")
        .arg(dir.join("t.csv")));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn seeded_simulate_reruns_are_byte_identical() {
    let dir = scratch("determinism");
    let system = realize_kirk_silber(&dir);
    let run_once = |name: &str| -> Vec<u8> {
        let traj = dir.join(name);
        let out = run(bin()
            .arg("simulate")
            .arg(&system)
            .arg("--node")
            .arg("xi2")
            .arg("--sde")
            .arg("1e-5")
            .arg("--time")
            .arg("500")
            .arg("--seed")
            .arg("99")
            .arg("--out")
            .arg(&traj));
        assert_eq!(out.status.code(), Some(0));
        fs::read(&traj).unwrap()
    };
    let a = run_once("a.csv");
    let b = run_once("b.csv");
    assert_eq!(a, b);
}

#[test]
fn markov_reports_and_chain_csv() {
    let dir = scratch("markov");
    let system = realize_kirk_silber(&dir);
    let report_path = dir.join("markov.json");
    let out = run(bin()
        .arg("markov")
        .arg(&system)
        .arg("--samples")
        .arg("40")
        .arg("--seed")
        .arg("3")
        .arg("--out")
        .arg(&report_path));
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["samples_per_node"], serde_json::json!(40));
    let notes = report["notes"].as_array().unwrap();
    assert!(
        notes
            .iter()
            .any(|n| n.as_str().unwrap().contains("low sample count")),
        "low-sample warning expected"
    );
    let chain_csv = fs::read_to_string(dir.join("markov.chain.csv")).unwrap();
    let mut lines = chain_csv.lines();
    assert_eq!(lines.next().unwrap(), "state,xi1,xi2,xi3,xi4,escape");
    assert_eq!(chain_csv.lines().count(), 6);
    // Sigma* is the whole graph here.
    assert_eq!(
        report["sigma_star"]["vertices"].as_array().unwrap().len(),
        4
    );
}

#[test]
fn markov_exit_three_when_unresolved() {
    let dir = scratch("markov3");
    let system = realize_kirk_silber(&dir);
    // A horizon far too short to resolve any sample.
    let out = run(bin()
        .arg("markov")
        .arg(&system)
        .arg("--samples")
        .arg("10")
        .arg("--max-time")
        .arg("5")
        .arg("--out")
        .arg(dir.join("m.json")));
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
    assert!(
        !dir.join("m.json").exists(),
        "no partial outputs on refusal"
    );
}

#[test]
fn report_prints_summary() {
    let dir = scratch("report");
    let system = realize_kirk_silber(&dir);
    let out = run(bin().arg("report").arg(&system));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("absorbing annulus"), "{text}");
    assert!(text.contains("zeta(xi3,xi4)"), "{text}");
    assert!(text.contains("[verified]"), "{text}");
}

#[test]
fn verify_confirms_realize_and_markov_runs() {
    let dir = scratch("verify");
    let system = realize_kirk_silber(&dir);
    let out = run(bin().arg("verify").arg(dir.join("system.run.json")));
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("OK (byte-identical)"));

    let report_path = dir.join("markov.json");
    let out = run(bin()
        .arg("markov")
        .arg(&system)
        .arg("--samples")
        .arg("20")
        .arg("--seed")
        .arg("5")
        .arg("--out")
        .arg(&report_path));
    assert_eq!(out.status.code(), Some(0));
    let out = run(bin().arg("verify").arg(dir.join("markov.run.json")));
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let text = stdout(&out);
    assert_eq!(text.matches("OK (byte-identical)").count(), 2); // report + chain csv
}
