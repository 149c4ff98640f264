//! Command implementations: each writes self-describing artifacts (the
//! manifest hash and seed are embedded in every report) into the output
//! directory and prints a short summary to stdout.

use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sci_core::cluster::{build_cluster_map, hhi_robustness_report, parse_wallet_graph, ClusterConfig};
use sci_core::dgp::{builtin_spec, generate_dataset, write_dataset_jsonl, N_BINS};
use sci_core::eval::{
    rolling_trace, run_exp1, run_exp2, run_exp3, run_exp4_sweep, run_exp4_window, score_dataset,
    Exp1Report, Exp2Report, Exp3Report, Exp4SweepReport, Exp4WindowReport,
};
use sci_core::ingest::{
    bin_series, bootstrap_trade_sci, compute_shock_sci, parse_trades, tick_rule_classify,
    ShockSpec, TradeBootstrap, MS_PER_MINUTE,
};
use sci_core::metrics::{
    alarm_summary, rolling_sci, weighted_sci, AlarmSummary, LogitPath, SciComponents, Weights,
};

use crate::manifest::RunManifest;
use crate::CliError;

/// Bins per trailing window in the representative rolling traces
/// (60 minutes of 5-minute bins).
const TRACE_WINDOW_BINS: usize = 12;
const TRACE_DGPS: [&str; 3] = ["informed", "liquidity", "disagreement"];

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    manifest_sha256: &'a str,
    seed: u64,
    report: T,
}

fn out_path(manifest: &RunManifest, name: &str) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(&manifest.out_dir);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir.join(name))
}

fn write_json<T: Serialize>(
    manifest: &RunManifest,
    name: &str,
    report: &T,
) -> Result<PathBuf, CliError> {
    let path = out_path(manifest, name)?;
    let envelope = Envelope {
        manifest_sha256: &manifest.sha256(),
        seed: manifest.seed,
        report,
    };
    let mut file = BufWriter::new(
        File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    );
    serde_json::to_writer_pretty(&mut file, &envelope)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    file.write_all(b"\n")
        .and_then(|_| file.flush())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_text(manifest: &RunManifest, name: &str, body: &str) -> Result<PathBuf, CliError> {
    let path = out_path(manifest, name)?;
    let header = format!(
        "manifest sha256: {}\nseed: {}\n\n",
        manifest.sha256(),
        manifest.seed
    );
    std::fs::write(&path, header + body)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(path)
}

pub fn simulate(manifest: &RunManifest) -> Result<(), CliError> {
    let specs = manifest
        .simulate
        .dgps
        .iter()
        .map(|n| builtin_spec(n))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = generate_dataset(&specs, manifest.n_per_dgp, manifest.seed)?;
    let path = out_path(manifest, "dataset.jsonl")?;
    let file = BufWriter::new(
        File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    );
    write_dataset_jsonl(&dataset, file)?;
    println!(
        "wrote {} paths ({} DGPs x {}) to {}",
        dataset.len(),
        specs.len(),
        manifest.n_per_dgp,
        path.display()
    );
    Ok(())
}

fn write_plot_csv(
    manifest: &RunManifest,
    name: &str,
    header: &str,
    rows: impl Iterator<Item = String>,
) -> Result<PathBuf, CliError> {
    let path = out_path(manifest, name)?;
    let mut file = BufWriter::new(
        File::create(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
    );
    let io_err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    writeln!(file, "{header}").map_err(io_err)?;
    for row in rows {
        writeln!(file, "{row}").map_err(io_err)?;
    }
    file.flush().map_err(io_err)?;
    Ok(path)
}

fn exp1_text(r: &Exp1Report) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "Baseline separation, N = {} per DGP, window = {} bins\n\n",
        r.n_per_dgp, r.window_bins
    ));
    s.push_str("DGP                  label  mean PR  mean TS  mean HHI  mean SCI\n");
    for d in &r.summaries {
        s.push_str(&format!(
            "{:<20} {:>5}  {:>7.3}  {:>7.3}  {:>8.4}  {:>8.3}\n",
            d.dgp, d.label, d.mean_pr, d.mean_ts, d.mean_hhi, d.mean_sci
        ));
    }
    s.push_str(&format!(
        "\nAUC = {:.4}  (95% CI [{:.4}, {:.4}], {} resamples)\n",
        r.auc, r.auc_ci.lo, r.auc_ci.hi, r.auc_ci.resamples
    ));
    s.push_str(&format!(
        "Youden tau* = {:.3}  TPR = {:.3}  FPR = {:.3}\n",
        r.operating_point.tau, r.operating_point.tpr, r.operating_point.fpr
    ));
    s
}

fn exp2_text(r: &Exp2Report) -> String {
    let mut s = format!(
        "Out-of-distribution stress, N = {} per DGP, tau = {:.3}\n\n",
        r.n_per_dgp, r.tau
    );
    s.push_str("DGP                    label  mean SCI  P(SCI>tau)  predicted  error\n");
    for v in &r.verdicts {
        s.push_str(&format!(
            "{:<22} {:>5}  {:>8.3}  {:>10.3}  {:>9}  {}\n",
            v.dgp,
            v.label,
            v.mean_sci,
            v.frac_above_tau,
            if v.predicted_informed { "informed" } else { "noise" },
            v.error_type.as_deref().unwrap_or("-")
        ));
    }
    s.push_str(&format!(
        "\ncombined OOD AUC = {:.4}  (95% CI [{:.4}, {:.4}])\n",
        r.ood_auc, r.ood_auc_ci.lo, r.ood_auc_ci.hi
    ));
    s
}

fn exp3_text(r: &Exp3Report) -> String {
    let mut s = format!("Ablations over all eight DGPs, N = {} per DGP\n\n", r.n_per_dgp);
    s.push_str(&format!("logistic (5-fold CV)   {:.4}\n", r.logistic.cv_auc));
    s.push_str(&format!("SCI (multiplicative)   {:.4}\n", r.auc_sci));
    s.push_str(&format!("additive mean          {:.4}\n", r.auc_additive));
    s.push_str(&format!("PR only                {:.4}\n", r.auc_pr));
    s.push_str(&format!("(1-TS) only            {:.4}\n", r.auc_one_minus_ts));
    s.push_str(&format!("(1-HHI) only           {:.4}\n", r.auc_one_minus_hhi));
    s.push_str(&format!(
        "\nlogistic coefficients (intercept, PR, 1-TS, 1-HHI): {:?}\n",
        r.logistic.coefficients
    ));
    s
}

fn exp4_window_text(r: &Exp4WindowReport) -> String {
    let mut s = format!("Window sensitivity, N = {} per DGP\n\n", r.n_per_dgp);
    s.push_str("window (min)  AUC     tau*\n");
    for w in &r.windows {
        s.push_str(&format!(
            "{:>12}  {:.4}  {:.3}\n",
            w.window_bins * 5,
            w.auc,
            w.tau
        ));
    }
    s
}

fn exp4_sweep_text(r: &Exp4SweepReport) -> String {
    let mut s = format!("Parameter sweeps, N = {} per DGP\n\n", r.n_per_dgp);
    s.push_str("AR coefficient sweep (informed vs swept liquidity):\n  phi      AUC\n");
    for p in &r.phi_sweep {
        s.push_str(&format!("  {:>6.2}  {:.4}\n", p.phi, p.auc));
    }
    s.push_str("\nDirichlet concentration sweep (informed mean flow HHI):\n  alpha    mean HHI\n");
    for a in &r.alpha_sweep {
        s.push_str(&format!("  {:>6.2}  {:.5}\n", a.alpha, a.mean_hhi));
    }
    s
}

fn experiment_plot_data(manifest: &RunManifest, r: &Exp1Report) -> Result<(), CliError> {
    write_plot_csv(
        manifest,
        "exp1_roc.csv",
        "threshold,fpr,tpr",
        r.roc
            .iter()
            .map(|p| format!("{},{},{}", p.threshold, p.fpr, p.tpr)),
    )?;
    // Per-DGP raw SCI values; binning into histograms is rendering.
    let specs = sci_core::dgp::BASELINE_NAMES
        .iter()
        .map(|n| builtin_spec(n))
        .collect::<Result<Vec<_>, _>>()?;
    let dataset = generate_dataset(&specs, manifest.n_per_dgp, manifest.seed)?;
    let scored = score_dataset(&dataset, N_BINS)?;
    for name in sci_core::dgp::BASELINE_NAMES {
        write_plot_csv(
            manifest,
            &format!("exp1_sci_{name}.csv"),
            "sci",
            scored
                .iter()
                .filter(|s| s.dgp == name)
                .map(|s| format!("{}", s.components.sci)),
        )?;
    }
    // Rolling traces mirror the time-varying illustration: one path per
    // representative regime, 60-minute trailing window.
    for name in TRACE_DGPS {
        let spec = builtin_spec(name)?;
        let single = generate_dataset(&[spec], 1, manifest.seed)?;
        let trace = rolling_trace(&single.paths[0], TRACE_WINDOW_BINS)?;
        write_plot_csv(
            manifest,
            &format!("exp1_trace_{name}.csv"),
            "bin,minutes,sci,pr,ts,hhi_flow",
            trace.iter().enumerate().filter_map(|(t, c)| {
                c.as_ref().map(|c| {
                    format!(
                        "{},{},{},{},{},{}",
                        t,
                        t * 5,
                        c.sci,
                        c.pr,
                        c.ts,
                        c.hhi_flow
                    )
                })
            }),
        )?;
    }
    Ok(())
}

pub fn experiment(manifest: &RunManifest, id: &str) -> Result<(), CliError> {
    let n = manifest.n_per_dgp;
    let seed = manifest.seed;
    let cfg = &manifest.experiment;
    let (json_path, text) = match id {
        "exp1" => {
            let r = run_exp1(n, seed, cfg.bootstrap)?;
            experiment_plot_data(manifest, &r)?;
            (write_json(manifest, "exp1_report.json", &r)?, exp1_text(&r))
        }
        "exp2" => {
            let r = run_exp2(n, seed, cfg.bootstrap)?;
            (write_json(manifest, "exp2_report.json", &r)?, exp2_text(&r))
        }
        "exp3" => {
            let r = run_exp3(n, seed)?;
            (write_json(manifest, "exp3_report.json", &r)?, exp3_text(&r))
        }
        "exp4-window" => {
            let r = run_exp4_window(n, seed, &cfg.windows)?;
            (write_json(manifest, "exp4_window_report.json", &r)?, exp4_window_text(&r))
        }
        "exp4-sweep" => {
            let r = run_exp4_sweep(n, seed, &cfg.phi_grid, &cfg.alpha_grid)?;
            write_plot_csv(
                manifest,
                "exp4_sweep_phi.csv",
                "phi,auc",
                r.phi_sweep.iter().map(|p| format!("{},{}", p.phi, p.auc)),
            )?;
            write_plot_csv(
                manifest,
                "exp4_sweep_alpha.csv",
                "alpha,mean_hhi",
                r.alpha_sweep
                    .iter()
                    .map(|a| format!("{},{}", a.alpha, a.mean_hhi)),
            )?;
            (write_json(manifest, "exp4_sweep_report.json", &r)?, exp4_sweep_text(&r))
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown experiment id {other:?} (expected exp1, exp2, exp3, exp4-window, exp4-sweep)"
            )))
        }
    };
    let text_name = json_path
        .file_stem()
        .and_then(|s| s.to_str())
        .expect("report path has a stem")
        .to_string()
        + ".txt";
    write_text(manifest, &text_name, &text)?;
    print!("{text}");
    println!("\nreports written to {}", manifest.out_dir);
    Ok(())
}

#[derive(Serialize)]
struct ComputeReport {
    components: SciComponents,
    weighted_sci: f64,
    weights: [f64; 3],
    tau: f64,
    above_threshold: bool,
    no_trade: bool,
    trades_in_window: usize,
    sides_filled_by_tick_rule: usize,
    clipped_prices: usize,
    malformed_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    clustering: Option<ClusteringReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bootstrap: Option<TradeBootstrap>,
}

#[derive(Serialize)]
struct ClusteringReport {
    hhi_raw: f64,
    hhi_clustered: f64,
    gap: f64,
    n_clusters_nontrivial: usize,
}

pub fn compute(
    manifest: &RunManifest,
    trades_path: &Path,
    shock_ms: i64,
    graph_path: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = &manifest.compute;
    let file = File::open(trades_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", trades_path.display())))?;
    let parsed = parse_trades(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", trades_path.display())))?;
    let mut trades = parsed.trades;
    let filled = tick_rule_classify(&mut trades);
    let spec = ShockSpec {
        shock_ms,
        window_minutes: cfg.window_minutes,
        bin_minutes: cfg.bin_minutes,
    };
    let series = bin_series(&trades, &spec)?;

    let clustering = match graph_path {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let graph = parse_wallet_graph(BufReader::new(file))?;
            let map = build_cluster_map(&graph, &ClusterConfig::default());
            let robustness = hhi_robustness_report(&series.flows, &map)?;
            let mut cluster_sizes = std::collections::BTreeMap::new();
            for wallet in series.flows.entries().keys() {
                if let Some(c) = map.cluster_of(wallet) {
                    *cluster_sizes.entry(c.to_string()).or_insert(0usize) += 1;
                }
            }
            Some((
                map,
                ClusteringReport {
                    hhi_raw: robustness.hhi_raw,
                    hhi_clustered: robustness.hhi_clustered,
                    gap: robustness.gap,
                    n_clusters_nontrivial: cluster_sizes.values().filter(|&&n| n > 1).count(),
                },
            ))
        }
        None => None,
    };
    let (map, cluster_report) = match clustering {
        Some((m, r)) => (Some(m), Some(r)),
        None => (None, None),
    };

    let components = compute_shock_sci(&series, map.as_ref())?;
    let weights = Weights::normalized(cfg.weights[0], cfg.weights[1], cfg.weights[2])?;
    let weighted = if components.no_trade {
        0.0
    } else {
        weighted_sci(components.pr, components.ts, components.hhi_flow, &weights)?
    };
    let bootstrap = if cfg.bootstrap > 0 {
        Some(bootstrap_trade_sci(
            &trades,
            &spec,
            map.as_ref(),
            cfg.bootstrap,
            0.95,
            manifest.seed,
        )?)
    } else {
        None
    };

    let report = ComputeReport {
        components,
        weighted_sci: weighted,
        weights: cfg.weights,
        tau: cfg.tau,
        above_threshold: components.sci > cfg.tau,
        no_trade: components.no_trade,
        trades_in_window: series.trades_in_window,
        sides_filled_by_tick_rule: filled,
        clipped_prices: parsed.clipped,
        malformed_rows: parsed.malformed,
        clustering: cluster_report,
        bootstrap,
    };
    let path = write_json(manifest, "compute_report.json", &report)?;
    println!(
        "SCI = {:.4}  (PR {:.4}, TS {:.4}, HHI {:.4}){}",
        report.components.sci,
        report.components.pr,
        report.components.ts,
        report.components.hhi_flow,
        if report.no_trade { "  [no-trade window]" } else { "" }
    );
    println!(
        "verdict at tau = {:.3}: {}",
        report.tau,
        if report.above_threshold { "above threshold" } else { "below threshold" }
    );
    if let Some(c) = &report.clustering {
        println!(
            "clustered HHI {:.4} vs raw {:.4} (gap {:.4})",
            c.hhi_clustered, c.hhi_raw, c.gap
        );
    }
    if let Some(b) = &report.bootstrap {
        println!(
            "trade bootstrap 95% CI for SCI: [{:.4}, {:.4}] ({} resamples)",
            b.sci_ci.lo, b.sci_ci.hi, b.sci_ci.resamples
        );
    }
    println!("report written to {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct MonitorReport {
    window_minutes: u32,
    bin_minutes: u32,
    tau: f64,
    alarm: AlarmSummary,
    defined_bins: usize,
}

pub fn monitor(
    manifest: &RunManifest,
    trades_path: &Path,
    start_ms: Option<i64>,
    duration_min: Option<u32>,
) -> Result<(), CliError> {
    let cfg = &manifest.monitor;
    eprintln!(
        "warning: tau = {:.3} is calibrated on simulated regimes, not empirically",
        cfg.tau
    );
    let file = File::open(trades_path)
        .map_err(|e| CliError::Data(format!("{}: {e}", trades_path.display())))?;
    let parsed = parse_trades(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", trades_path.display())))?;
    let mut trades = parsed.trades;
    if trades.is_empty() {
        return Err(CliError::Data(format!(
            "{}: tape contains no valid trades",
            trades_path.display()
        )));
    }
    tick_rule_classify(&mut trades);

    let start = start_ms.unwrap_or(trades[0].ts_ms);
    let duration = match duration_min {
        Some(d) => d,
        None => {
            let span_ms = trades.last().expect("nonempty after parse").ts_ms - start;
            let bins = span_ms / (cfg.bin_minutes as i64 * MS_PER_MINUTE) + 1;
            (bins as u32) * cfg.bin_minutes
        }
    };
    let w_bins = (cfg.window_minutes / cfg.bin_minutes) as usize;
    let spec = ShockSpec {
        shock_ms: start,
        window_minutes: duration,
        bin_minutes: cfg.bin_minutes,
    };
    if spec.n_bins() < w_bins {
        return Err(CliError::Data(format!(
            "tape spans {} bins, shorter than the {}-bin monitoring window",
            spec.n_bins(),
            w_bins
        )));
    }
    let series = bin_series(&trades, &spec)?;
    let prices = LogitPath::from_probabilities(&series.prices, cfg.bin_minutes)?;
    let trace = rolling_sci(&prices, &series.volumes, &series.flows_by_bin, w_bins)?;
    let sci_series: Vec<f64> = trace
        .iter()
        .filter_map(|c| c.as_ref().map(|c| c.sci))
        .collect();
    let alarm = alarm_summary(&sci_series, cfg.tau, cfg.bin_minutes);

    write_plot_csv(
        manifest,
        "monitor_series.csv",
        "bin,ts_ms,sci,pr,ts,hhi_flow,above",
        trace.iter().enumerate().filter_map(|(t, c)| {
            c.as_ref().map(|c| {
                format!(
                    "{},{},{},{},{},{},{}",
                    t,
                    start + t as i64 * cfg.bin_minutes as i64 * MS_PER_MINUTE,
                    c.sci,
                    c.pr,
                    c.ts,
                    c.hhi_flow,
                    u8::from(c.sci > cfg.tau)
                )
            })
        }),
    )?;
    let report = MonitorReport {
        window_minutes: cfg.window_minutes,
        bin_minutes: cfg.bin_minutes,
        tau: cfg.tau,
        alarm,
        defined_bins: sci_series.len(),
    };
    let path = write_json(manifest, "monitor_report.json", &report)?;
    match report.alarm.onset {
        Some(onset) => println!(
            "alarm onset at bin {onset}, duration {} min{}, decay {}",
            report.alarm.duration_minutes,
            if report.alarm.sustained { " (sustained)" } else { "" },
            match report.alarm.decay_minutes {
                Some(d) => format!("{d} min after peak"),
                None => "not reached".to_string(),
            }
        ),
        None => println!("no alarm: SCI never exceeded tau"),
    }
    println!("series and report written to {}", path.display());
    Ok(())
}
