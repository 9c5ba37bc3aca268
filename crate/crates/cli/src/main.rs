//! Command-line front end.
//!
//! Exit codes: `0` success, `1` solver non-convergence (reports are still
//! written), `2` input error. Diagnostics go to standard error; reports to
//! standard output or the requested files.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use ibrflow_core::io::{
    emit_report, parse_network, parse_scenario, resolve_scenario, ReportFormat, ReportSource,
};
use ibrflow_core::netmodel::validate;
use ibrflow_core::phasor::Phasor;
use ibrflow_core::scsolver::{solve_sc, sweep, FaultKind, FaultSpec, ScOptions, ScResult};
use ibrflow_core::{solve_pf, NetworkModel, PfOptions, ScError};

#[derive(Parser)]
#[command(
    name = "ibrflow",
    version,
    about = "Multiphase power flow and steady-state short-circuit solver for inverter-dominated networks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the power flow and print the bus/converter table.
    Pf {
        /// Network file (JSON).
        network: PathBuf,
        /// Newton tolerance override (pu).
        #[arg(long)]
        tol: Option<f64>,
        /// Newton iteration cap override.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Write the machine-readable result here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the iteration trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve one short circuit and print the per-converter report.
    Sc {
        /// Network file (JSON).
        network: PathBuf,
        /// Faulted bus id.
        #[arg(long)]
        bus: String,
        /// Fault kind: AG BG CG AB BC CA ABG BCG CAG ABC ABCG.
        #[arg(long)]
        kind: String,
        /// Per-phase fault impedance, pu (e.g. "0.01", "0.01+0.05j").
        #[arg(long)]
        zf: Option<String>,
        /// Ground-tie impedance for grounded kinds, pu.
        #[arg(long)]
        zg: Option<String>,
        /// Outer-loop tolerance (pu); IBRFLOW_TOL is honored when unset.
        #[arg(long)]
        tol: Option<f64>,
        /// Outer-loop iteration cap.
        #[arg(long)]
        max_iter: Option<usize>,
        /// Write the machine-readable result here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-iteration trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run every fault of a scenario file; write result and trace bundles.
    Sweep {
        /// Network file (JSON).
        network: PathBuf,
        /// Scenario file (JSON).
        scenario: PathBuf,
    },
    /// Structural validation; prints OK or the issue list.
    Validate {
        /// Network file (JSON).
        network: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Input problems become `Err` (exit 2); solved-but-diverged becomes
/// `Ok(ExitCode 1)` after the reports are written.
fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.cmd {
        Cmd::Pf { network, tol, max_iter, out, trace } => {
            let net = load_network(&network)?;
            let mut opts = PfOptions::default();
            if let Some(t) = tol {
                opts.tol = t;
            }
            if let Some(m) = max_iter {
                opts.max_iter = m;
            }
            let sol = match solve_pf(&net, &opts) {
                Ok(sol) => sol,
                Err(e @ ibrflow_core::PfError::NonConvergence { .. }) => {
                    eprintln!("error: {e}");
                    return Ok(ExitCode::from(1));
                }
                Err(e) => return Err(e.to_string()),
            };
            let src = ReportSource::Pf { net: &net, sol: &sol };
            print_bytes(&emit_report(&src, ReportFormat::Table));
            if let Some(path) = out {
                write_file(&path, &emit_report(&src, ReportFormat::Machine))?;
            }
            if let Some(path) = trace {
                write_file(&path, &emit_report(&src, ReportFormat::Trace))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Sc { network, bus, kind, zf, zg, tol, max_iter, out, trace } => {
            let net = load_network(&network)?;
            let kind = FaultKind::from_str(&kind)?;
            let spec = FaultSpec {
                bus,
                kind,
                z_phase: parse_complex_arg(zf.as_deref(), "--zf")?,
                z_ground: parse_complex_arg(zg.as_deref(), "--zg")?,
            };
            let opts = sc_options(tol, max_iter)?;
            let (result, converged) = match solve_sc(&net, &spec, &opts) {
                Ok(r) => (r, true),
                Err(ScError::NonConvergence { result }) => (*result, false),
                Err(e) => return Err(e.to_string()),
            };
            let src = ReportSource::Sc { result: &result };
            print_bytes(&emit_report(&src, ReportFormat::Table));
            if let Some(path) = out {
                write_file(&path, &emit_report(&src, ReportFormat::Machine))?;
            }
            if let Some(path) = trace {
                write_file(&path, &emit_report(&src, ReportFormat::Trace))?;
            }
            if converged {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "error: short-circuit loop did not converge in {} iterations \
                     (max voltage change {:.3e} pu)",
                    result.iterations, result.max_delta_v
                );
                Ok(ExitCode::from(1))
            }
        }
        Cmd::Sweep { network, scenario } => run_sweep(&network, &scenario),
        Cmd::Validate { network } => {
            let path_err = |e: ibrflow_core::ParseError| e.to_string();
            // Validate wants the raw issue list even when parsing would
            // reject the model, so bypass parse_network's error mapping
            // only for the validation stage.
            let net = load_network_lenient(&network).map_err(path_err)?;
            let report = validate(&net);
            if report.is_ok() {
                println!("OK");
                for issue in &report.issues {
                    println!("{issue}");
                }
                Ok(ExitCode::SUCCESS)
            } else {
                for issue in &report.issues {
                    eprintln!("{issue}");
                }
                Err(format!(
                    "{} validation error(s) in {}",
                    report.errors().count(),
                    network.display()
                ))
            }
        }
    }
}

fn load_network(path: &Path) -> Result<NetworkModel, String> {
    parse_network(path).map_err(|e| e.to_string())
}

/// Parse without failing on validation errors; `validate` reports them
/// itself with severities.
fn load_network_lenient(path: &Path) -> Result<NetworkModel, ibrflow_core::ParseError> {
    match parse_network(path) {
        Ok(net) => Ok(net),
        Err(ibrflow_core::ParseError::Semantic(_)) => {
            // Re-read so the full issue list (not the first error) prints.
            let text = std::fs::read_to_string(path).map_err(|source| {
                ibrflow_core::ParseError::Io { path: path.display().to_string(), source }
            })?;
            let file: ibrflow_core::NetworkFile = serde_json::from_str(&text).map_err(|source| {
                ibrflow_core::ParseError::Malformed { path: path.display().to_string(), source }
            })?;
            ibrflow_core::io::network_from_file_unchecked(&file)
        }
        Err(e) => Err(e),
    }
}

fn sc_options(tol: Option<f64>, max_iter: Option<usize>) -> Result<ScOptions, String> {
    let mut opts = ScOptions::default();
    if let Some(t) = tol {
        opts.tol = t;
    } else if let Ok(env_tol) = std::env::var("IBRFLOW_TOL") {
        opts.tol = env_tol
            .parse()
            .map_err(|_| format!("IBRFLOW_TOL is not a number: '{env_tol}'"))?;
    }
    if let Some(m) = max_iter {
        opts.max_iter = m;
    }
    Ok(opts)
}

/// Accepts "0.05", "0.01+0.3j", "-0.1-0.2j", "0.3j"; absent means zero.
fn parse_complex_arg(arg: Option<&str>, flag: &str) -> Result<Phasor, String> {
    let Some(text) = arg else {
        return Ok(Phasor::new(0.0, 0.0));
    };
    parse_complex(text).ok_or_else(|| {
        format!("{flag}: cannot parse '{text}' (expected RE, IMj, or RE+IMj)")
    })
}

fn parse_complex(text: &str) -> Option<Phasor> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if let Some(im_part) = t.strip_suffix('j').or_else(|| t.strip_suffix('i')) {
        // Split at the last +/- that is not a leading sign or exponent sign.
        let bytes = im_part.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            if (bytes[k] == b'+' || bytes[k] == b'-')
                && bytes[k - 1] != b'e'
                && bytes[k - 1] != b'E'
            {
                split = Some(k);
                break;
            }
        }
        match split {
            Some(k) => {
                let re: f64 = im_part[..k].parse().ok()?;
                let im: f64 = im_part[k..].parse().ok()?;
                Some(Phasor::new(re, im))
            }
            None => {
                let im: f64 = im_part.parse().ok()?;
                Some(Phasor::new(0.0, im))
            }
        }
    } else {
        let re: f64 = t.parse().ok()?;
        Some(Phasor::new(re, 0.0))
    }
}

fn print_bytes(bytes: &[u8]) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(bytes);
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn run_sweep(network: &Path, scenario: &Path) -> Result<ExitCode, String> {
    let net = load_network(network)?;
    let scn = parse_scenario(scenario).map_err(|e| e.to_string())?;
    let rs = resolve_scenario(&scn, &net).map_err(|e| e.to_string())?;

    let dir = rs
        .outputs
        .dir
        .clone()
        .map(PathBuf::from)
        .or_else(|| scenario.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let prefix = rs.outputs.prefix.clone().unwrap_or_else(|| {
        scenario
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "sweep".to_string())
    });

    // Explicit faults first, then the expanded sweep axes.
    let mut outcomes: Vec<(FaultSpec, Result<ScResult, ScError>)> = Vec::new();
    for spec in &rs.faults {
        outcomes.push((spec.clone(), solve_sc(&net, spec, &rs.sc)));
    }
    if let Some((buses, kinds, zs)) = &rs.sweep {
        for o in sweep(&net, buses, kinds, zs, &rs.sc) {
            outcomes.push((o.fault, o.result));
        }
    }

    let mut any_diverged = false;
    let mut any_failed = false;
    let mut bundle = Vec::new();
    for (i, (spec, outcome)) in outcomes.iter().enumerate() {
        let label = format!("{} {} zf={}", spec.bus, spec.kind, spec.z_phase);
        let entry = match outcome {
            Ok(r) => {
                println!(
                    "[{i}] {label}: converged in {} iterations, |I_fault| max {:.3} pu",
                    r.iterations,
                    r.fault_current.max_mag()
                );
                write_trace(&dir, &prefix, i, spec, r)?;
                serde_json::json!({"fault": spec, "converged": true, "result": r})
            }
            Err(ScError::NonConvergence { result }) => {
                any_diverged = true;
                println!(
                    "[{i}] {label}: DID NOT CONVERGE in {} iterations (max voltage change {:.3e} pu)",
                    result.iterations, result.max_delta_v
                );
                write_trace(&dir, &prefix, i, spec, result)?;
                serde_json::json!({"fault": spec, "converged": false, "result": result})
            }
            Err(e) => {
                any_failed = true;
                println!("[{i}] {label}: error: {e}");
                serde_json::json!({"fault": spec, "converged": false, "error": e.to_string()})
            }
        };
        bundle.push(entry);
    }

    let doc = serde_json::json!({
        "kind": "sweep_result",
        "schema_version": ibrflow_core::io::SCHEMA_VERSION,
        "scenarios": bundle,
    });
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("bundle serialization is infallible");
    bytes.push(b'\n');
    let bundle_path = dir.join(format!("{prefix}_results.json"));
    write_file(&bundle_path, &bytes)?;
    println!("wrote {}", bundle_path.display());

    if any_failed {
        Err("one or more scenarios failed to solve".to_string())
    } else if any_diverged {
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn write_trace(
    dir: &Path,
    prefix: &str,
    i: usize,
    spec: &FaultSpec,
    r: &ScResult,
) -> Result<(), String> {
    let name = format!("{prefix}_trace_{i:03}_{}_{}.csv", spec.bus, spec.kind);
    write_file(
        &dir.join(name),
        &emit_report(&ReportSource::Sc { result: r }, ReportFormat::Trace),
    )
}
