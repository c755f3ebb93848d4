mod config;
mod svg;

use clap::{Parser, Subcommand};
use config::{ConfigError, RunConfig, Setup, SweepSpec};
use phi_yamabe::conformal::ConformalFactor;
use phi_yamabe::flow::{
    detect_convergence, fit_gap_rate, run_flow, ConvergenceReport, FlowError, FlowTrace, FlowVariant, TraceRecord,
    GAP_FLOOR,
};
use phi_yamabe::io::{load_trace_csv, save_json, save_trace_csv, IoError, SnapshotFile, TimeColumn};
use phi_yamabe::rescale::{build_reparam, reparam_snapshots, two_route_comparison, verify_cyf, CyfResidual, RescaleError, TwoRouteReport};
use phi_yamabe::verify::{run_all, SuiteResult, VerifyOptions};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 1;
const EXIT_FLOW: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_SWEEP: u8 = 4;

/// Checkpoints used by `rescale-check` for the direct-vs-reparametrized comparison.
const RESCALE_SEGMENTS: usize = 4;

#[derive(Parser)]
#[command(name = "phi-yamabe", version, about = "Yamabe flow and CYF± simulator on model Φ-manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a flow and write the trace, snapshots and convergence report.
    Run { config: PathBuf },
    /// Run the identity and property suites.
    Verify {
        config: PathBuf,
        #[arg(long, hide = true)]
        inject_bad_stencil: bool,
    },
    /// Compare the reparametrized unnormalized flow with a direct CYF⁺ run.
    RescaleCheck { config: PathBuf },
    /// Run every combination of a parameter grid.
    Sweep { config: PathBuf, sweep: PathBuf },
    /// Summarize a trace CSV.
    Report { trace: PathBuf },
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("flow failed: {0}")]
    Flow(#[from] FlowError),
    #[error("rescaling failed: {0}")]
    Rescale(#[from] RescaleError),
    #[error("output: {0}")]
    Io(#[from] IoError),
    #[error("{0}")]
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => EXIT_CONFIG,
            Failure::Flow(_) | Failure::Rescale(_) => EXIT_FLOW,
            Failure::Verify(_) => EXIT_VERIFY,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify {
            config,
            inject_bad_stencil,
        } => cmd_verify(&config, inject_bad_stencil),
        Command::RescaleCheck { config } => cmd_rescale_check(&config),
        Command::Sweep { config, sweep } => cmd_sweep(&config, &sweep),
        Command::Report { trace } => cmd_report(&trace),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn configure_threads() {
    let threads = std::env::var("PHI_YAMABE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    if let Some(n) = threads {
        // ignore the error from a pool that is already initialized
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn ensure_parent(path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunOutput<'a> {
    config: &'a RunConfig,
    steps: usize,
    bounds: (f64, f64),
    report: &'a ConvergenceReport,
    snapshots: SnapshotFile,
}

fn initial_bracket(trace: &FlowTrace) -> (f64, f64) {
    (trace.initial().s_inf, trace.initial().s_sup)
}

/// Runs one configured flow and writes its outputs.
fn execute(cfg: &RunConfig) -> Result<(ConvergenceReport, usize), Failure> {
    let Setup { manifold, grid, flow } = cfg.setup()?;
    let u0 = ConformalFactor::constant(grid.len(), 1.0).expect("positive constant");
    let trace = run_flow(&manifold, &grid, &flow, u0)?;
    let report = detect_convergence(&manifold, &grid, &trace.final_state, initial_bracket(&trace), flow.tol_converge);
    let out = &cfg.outputs;
    ensure_parent(&out.csv_path)?;
    save_trace_csv(&out.csv_path, &trace.records, TimeColumn::T)?;
    ensure_parent(&out.json_path)?;
    save_json(
        &out.json_path,
        &RunOutput {
            config: cfg,
            steps: trace.steps,
            bounds: trace.bounds,
            report: &report,
            snapshots: SnapshotFile::of_trace(grid.nodes(), &trace),
        },
    )?;
    if let Some(path) = &out.svg_path {
        ensure_parent(path)?;
        let doc = svg::render(&trace.records, grid.nodes(), &trace.snapshots, "t");
        std::fs::write(path, doc).map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok((report, trace.steps))
}

fn describe(report: &ConvergenceReport) -> String {
    if report.converged {
        format!("converged, S* = {:.6}", report.s_star)
    } else {
        format!(
            "not converged at t = {}, S* ≈ {:.6} (relative variation {:.3e})",
            report.t, report.s_star, report.relative_variation
        )
    }
}

fn cmd_run(path: &Path) -> Result<u8, Failure> {
    let cfg = RunConfig::load(path)?;
    let (report, steps) = execute(&cfg)?;
    println!("{} flow, {} steps to t = {}", cfg.flow.variant, steps, report.t);
    println!("{}", describe(&report));
    println!(
        "S_sup = {:.9}, S_inf = {:.9}, yamabe residual {:.3e}",
        report.s_sup, report.s_inf, report.residual_sup
    );
    println!("trace: {}", cfg.outputs.csv_path.display());
    Ok(0)
}

fn print_suites(results: &[SuiteResult]) {
    println!("{:<26} {:<6} {:>12} {:>12}  detail", "suite", "result", "value", "threshold");
    for r in results {
        println!(
            "{:<26} {:<6} {:>12.4e} {:>12.4e}  {}",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.value,
            r.threshold,
            r.detail
        );
    }
}

fn cmd_verify(path: &Path, bad_stencil: bool) -> Result<u8, Failure> {
    let cfg = RunConfig::load(path)?;
    let Setup { manifold, .. } = cfg.setup()?;
    let options = VerifyOptions {
        seed: cfg.seed,
        bad_stencil,
    };
    let results = run_all(&manifold, cfg.grid.x_min, cfg.grid.x_max, cfg.grid.n, options);
    print_suites(&results);
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Verify(format!("{failed} of {} suites failed", results.len())));
    }
    println!("all {} suites passed", results.len());
    Ok(0)
}

#[derive(Serialize)]
struct RescaleOutput<'a> {
    config: &'a RunConfig,
    passed: bool,
    threshold: f64,
    tau_max: f64,
    two_route: TwoRouteReport,
    cyf_residual: CyfResidual,
}

fn cmd_rescale_check(path: &Path) -> Result<u8, Failure> {
    let cfg = RunConfig::load(path)?;
    let Setup {
        manifold,
        grid,
        mut flow,
    } = cfg.setup()?;
    // the map integrates S_sup by the trapezoid rule, so sample it every
    // step while keeping the configured snapshot cadence
    flow.variant = FlowVariant::Unnormalized;
    flow.snapshot_every = flow.snapshot_every.saturating_mul(flow.record_every);
    flow.record_every = 1;
    let u0 = ConformalFactor::constant(grid.len(), 1.0).expect("positive constant");
    let trace = run_flow(&manifold, &grid, &flow, u0.clone())?;
    let map = build_reparam(manifold.eta, &trace)?;
    let normalized = reparam_snapshots(&trace, &map);
    let cyf_residual = verify_cyf(&manifold, &grid, &normalized)?;
    let two_route = two_route_comparison(&manifold, &grid, &u0, flow.t_end, RESCALE_SEGMENTS, &flow)?;
    let passed = two_route.max <= cfg.rescale_threshold;

    let out = &cfg.outputs;
    ensure_parent(&out.csv_path)?;
    let records = normalized.records(&manifold, &grid)?;
    save_trace_csv(&out.csv_path, &records, TimeColumn::Tau)?;
    if let Some(path) = &out.svg_path {
        ensure_parent(path)?;
        let doc = svg::render(&records, grid.nodes(), &normalized.snapshots, "tau");
        std::fs::write(path, doc).map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?;
    }
    println!("reparametrized range: tau in [0, {:.6}] for t in [0, {}]", map.tau_max(), flow.t_end);
    for (tau, d) in two_route.taus.iter().zip(&two_route.discrepancy) {
        println!("tau = {tau:.6}: |u_direct - u_reparam| = {d:.3e}");
    }
    println!("max CYF+ residual of reparametrized snapshots: {:.3e}", cyf_residual.max);
    println!(
        "two-route discrepancy {:.3e} (threshold {:.1e}): {}",
        two_route.max,
        cfg.rescale_threshold,
        if passed { "pass" } else { "FAIL" }
    );
    ensure_parent(&out.json_path)?;
    save_json(
        &out.json_path,
        &RescaleOutput {
            config: &cfg,
            passed,
            threshold: cfg.rescale_threshold,
            tau_max: map.tau_max(),
            two_route,
            cyf_residual,
        },
    )?;
    if passed {
        Ok(0)
    } else {
        Err(Failure::Verify("reparametrized and direct flows disagree".into()))
    }
}

#[derive(Serialize)]
struct SweepRow {
    label: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<ConvergenceReport>,
    csv_path: PathBuf,
}

#[derive(Serialize)]
struct SweepSummary {
    runs: usize,
    failed: usize,
    rows: Vec<SweepRow>,
}

fn cmd_sweep(config: &Path, sweep: &Path) -> Result<u8, Failure> {
    let base = RunConfig::load(config)?;
    let spec = SweepSpec::load(sweep)?;
    let points = spec.expand(&base)?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|p| match execute(&p.config) {
            Ok((report, _)) => SweepRow {
                label: p.label.clone(),
                status: if report.converged { "converged" } else { "not_converged" },
                error: None,
                report: Some(report),
                csv_path: p.config.outputs.csv_path.clone(),
            },
            Err(e) => SweepRow {
                label: p.label.clone(),
                status: "failed",
                error: Some(e.to_string()),
                report: None,
                csv_path: p.config.outputs.csv_path.clone(),
            },
        })
        .collect();
    let failed = rows.iter().filter(|r| r.status == "failed").count();
    for r in &rows {
        match (&r.report, &r.error) {
            (Some(rep), _) => println!("{:<40} {:<14} S* = {:.6}", r.label, r.status, rep.s_star),
            (None, Some(e)) => println!("{:<40} {:<14} {e}", r.label, r.status),
            _ => {}
        }
    }
    let summary_path = base.outputs.with_suffix("_sweep").json_path;
    ensure_parent(&summary_path)?;
    save_json(
        &summary_path,
        &SweepSummary {
            runs: rows.len(),
            failed,
            rows,
        },
    )?;
    println!("summary: {}", summary_path.display());
    Ok(if failed > 0 { EXIT_SWEEP } else { 0 })
}

fn cmd_report(path: &Path) -> Result<u8, Failure> {
    let (time, records) = load_trace_csv(path)?;
    let name = time.name();
    let first = records[0];
    let last = *records.last().expect("nonempty trace");
    let max_sup_increase = records.windows(2).map(|w| w[1].s_sup - w[0].s_sup).fold(0.0, f64::max);
    let max_inf_decrease = records.windows(2).map(|w| w[0].s_inf - w[1].s_inf).fold(0.0, f64::max);
    println!("{} records, {name} in [{}, {}]", records.len(), first.t, last.t);
    let row = |label: &str, a: f64, b: f64| println!("{label:<10} {a:>20.12e} -> {b:>20.12e}");
    row("S_sup", first.s_sup, last.s_sup);
    row("S_inf", first.s_inf, last.s_inf);
    row("gap", first.gap, last.gap);
    row("u_min", first.u_min, last.u_min);
    row("u_max", first.u_max, last.u_max);
    row("dtu_norm", first.dtu_norm, last.dtu_norm);
    println!("max S_sup increase {max_sup_increase:.3e}, max S_inf decrease {max_inf_decrease:.3e}");
    match fit_window(&records) {
        Some((lo, hi)) => match fit_gap_rate(&records, lo, hi) {
            Ok(fit) => println!(
                "gap ≈ {:.4e} exp({:.4} {name}) over [{lo:.3}, {hi:.3}] ({} records)",
                fit.c, fit.rate, fit.samples
            ),
            Err(e) => println!("gap fit unavailable: {e}"),
        },
        None => println!("gap fit unavailable: too few records above the floor"),
    }
    Ok(0)
}

/// Window from 20% into the trace up to the last record well above the gap floor.
fn fit_window(records: &[TraceRecord]) -> Option<(f64, f64)> {
    let t0 = records[0].t;
    let hi = records
        .iter()
        .take_while(|r| r.gap > 1e3 * GAP_FLOOR)
        .last()
        .map(|r| r.t)?;
    let lo = t0 + 0.2 * (hi - t0);
    (hi > lo).then_some((lo, hi))
}
