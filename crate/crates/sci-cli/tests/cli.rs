//! End-to-end tests for the `sci` binary: exit codes, artifact layout,
//! and byte-level determinism of the outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sci_core::cluster::{synthetic_common_funder_graph, write_wallet_graph};
use sci_core::dgp::generate_named;
use sci_core::ingest::{build_tape, write_trades_csv, ShockSpec, MS_PER_MINUTE};

const BIN: &str = env!("CARGO_BIN_EXE_sci");
const SEED: u64 = 7;

fn run(args: &[&str], out_dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .args(["--out", out_dir.to_str().unwrap()])
        .env_remove("SCI_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes a simulated tape for one path of the named regime and returns
/// (csv path, shock_ms, window minutes).
fn write_tape(dir: &Path, dgp: &str) -> (PathBuf, i64, u32) {
    let dataset = generate_named(&[dgp], 1, SEED).unwrap();
    let spec = ShockSpec {
        shock_ms: 0,
        window_minutes: 240,
        bin_minutes: 5,
    };
    let tape = build_tape(&dataset.paths[0], &spec).unwrap();
    let path = dir.join(format!("{dgp}.csv"));
    let mut buf = Vec::new();
    write_trades_csv(&tape, &mut buf).unwrap();
    fs::write(&path, buf).unwrap();
    (path, 0, 240)
}

#[test]
fn simulate_is_byte_identical_across_reruns_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (sub, threads) in [("a", "1"), ("b", "8"), ("c", "1")] {
        let dir = tmp.path().join(sub);
        let out = Command::new(BIN)
            .args(["--seed", "11", "--n-per-dgp", "5", "simulate", "--dgps", "informed,liquidity"])
            .args(["--out", dir.to_str().unwrap()])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert_success(&out);
        outputs.push(fs::read(dir.join("dataset.jsonl")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "thread count changed the dataset");
    assert_eq!(outputs[0], outputs[2], "rerun changed the dataset");
    assert!(!outputs[0].is_empty());
}

#[test]
fn unknown_dgp_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--dgps", "informed,mystery"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mystery"), "stderr: {stderr}");
}

#[test]
fn unknown_experiment_id_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["experiment", "exp9"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exp9"));
}

#[test]
fn compute_reports_components_and_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let (tape, shock_ms, window) = write_tape(tmp.path(), "informed");
    let out = run(
        &[
            "compute",
            "--trades",
            tape.to_str().unwrap(),
            "--shock-ms",
            &shock_ms.to_string(),
            "--window-min",
            &window.to_string(),
            "--tau",
            "0.27",
            "--bootstrap",
            "50",
        ],
        tmp.path(),
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("compute_report.json")).unwrap())
            .unwrap();
    let r = &report["report"];
    let sci = r["components"]["sci"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&sci));
    assert_eq!(r["above_threshold"].as_bool().unwrap(), sci > 0.27);
    assert_eq!(r["no_trade"], false);
    assert_eq!(r["malformed_rows"], 0);
    let ci_lo = r["bootstrap"]["sci_ci"]["lo"].as_f64().unwrap();
    let ci_hi = r["bootstrap"]["sci_ci"]["hi"].as_f64().unwrap();
    assert!(ci_lo <= ci_hi);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verdict at tau"), "stdout: {stdout}");
}

#[test]
fn compute_with_graph_reports_clustered_hhi_at_least_raw() {
    let tmp = tempfile::tempdir().unwrap();
    let (tape, shock_ms, window) = write_tape(tmp.path(), "informed");
    // Half the tape's wallets share one funder, so clustering must merge
    // them and weakly raise the concentration measure.
    let dataset = generate_named(&["informed"], 1, SEED).unwrap();
    let wallets: Vec<String> = dataset.paths[0]
        .trader_flows
        .entries()
        .keys()
        .cloned()
        .collect();
    let graph = synthetic_common_funder_graph(&wallets, 0.5, "funder");
    let graph_path = tmp.path().join("wallets.graph");
    let mut buf = Vec::new();
    write_wallet_graph(&graph, &mut buf).unwrap();
    fs::write(&graph_path, buf).unwrap();

    let out = run(
        &[
            "compute",
            "--trades",
            tape.to_str().unwrap(),
            "--shock-ms",
            &shock_ms.to_string(),
            "--window-min",
            &window.to_string(),
            "--graph",
            graph_path.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("compute_report.json")).unwrap())
            .unwrap();
    let c = &report["report"]["clustering"];
    let raw = c["hhi_raw"].as_f64().unwrap();
    let clustered = c["hhi_clustered"].as_f64().unwrap();
    assert!(clustered >= raw - 1e-12, "clustered {clustered} < raw {raw}");
    assert!(c["n_clusters_nontrivial"].as_u64().unwrap() >= 1);
}

#[test]
fn compute_shock_after_tape_end_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (tape, ..) = write_tape(tmp.path(), "informed");
    let shock_ms = 240 * MS_PER_MINUTE + 60 * MS_PER_MINUTE;
    let out = run(
        &[
            "compute",
            "--trades",
            tape.to_str().unwrap(),
            "--shock-ms",
            &shock_ms.to_string(),
            "--window-min",
            "60",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trades inside the shock window"));
}

#[test]
fn compute_with_only_unclassifiable_trades_reports_zero_index() {
    // Sides are blank and the price never moves, so the tick rule cannot
    // classify anything: the window counts as no-trade and the index is 0.
    let tmp = tempfile::tempdir().unwrap();
    let tape = tmp.path().join("flat.csv");
    fs::write(
        &tape,
        "ts_ms,price,size,side,wallet\n\
         0,0.5,10,,w1\n\
         60000,0.5,10,,w2\n\
         120000,0.5,10,,w1\n",
    )
    .unwrap();
    let out = run(
        &[
            "compute",
            "--trades",
            tape.to_str().unwrap(),
            "--shock-ms",
            "0",
            "--window-min",
            "60",
        ],
        tmp.path(),
    );
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("compute_report.json")).unwrap())
            .unwrap();
    let r = &report["report"];
    assert_eq!(r["no_trade"], true);
    assert_eq!(r["components"]["sci"].as_f64().unwrap(), 0.0);
    assert_eq!(r["sides_filled_by_tick_rule"], 0);
}

#[test]
fn monitor_writes_series_and_alarm_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (tape, ..) = write_tape(tmp.path(), "informed");
    let out = run(
        &[
            "monitor",
            "--trades",
            tape.to_str().unwrap(),
            "--start-ms",
            "0",
            "--duration-min",
            "240",
            "--window-min",
            "60",
            "--tau",
            "0.27",
        ],
        tmp.path(),
    );
    assert_success(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibrated on simulated regimes"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("monitor_report.json")).unwrap())
            .unwrap();
    let r = &report["report"];
    // 48 bins, 12-bin trailing window: 37 bins carry a defined index.
    assert_eq!(r["defined_bins"], 37);
    let series = fs::read_to_string(tmp.path().join("monitor_series.csv")).unwrap();
    assert_eq!(series.lines().count(), 38, "header plus one row per defined bin");
    assert!(series.starts_with("bin,ts_ms,sci,pr,ts,hhi_flow,above"));
}

#[test]
fn monitor_on_empty_tape_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let tape = tmp.path().join("empty.csv");
    fs::write(&tape, "ts_ms,price,size,side,wallet\n").unwrap();
    let out = run(
        &["monitor", "--trades", tape.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trades parsed"));
}

#[test]
fn missing_tape_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(
        &["compute", "--trades", "/nonexistent.csv", "--shock-ms", "0"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn manifest_overrides_and_envelope_hash_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest_path = tmp.path().join("run.toml");
    fs::write(
        &manifest_path,
        "seed = 99\nn_per_dgp = 4\n\n[simulate]\ndgps = [\"disagreement\"]\n",
    )
    .unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let out = run(
            &["--manifest", manifest_path.to_str().unwrap(), "simulate"],
            dir,
        );
        assert_success(&out);
    }
    let a = fs::read(dir_a.join("dataset.jsonl")).unwrap();
    let b = fs::read(dir_b.join("dataset.jsonl")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let header: serde_json::Value =
        serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(header["master_seed"], 99);
    assert_eq!(text.lines().count(), 1 + 4, "header plus four paths");
}

#[test]
fn bad_manifest_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest_path = tmp.path().join("run.toml");
    fs::write(&manifest_path, "seed = 99\nbogus_field = 1\n").unwrap();
    let out = run(
        &["--manifest", manifest_path.to_str().unwrap(), "simulate"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}
