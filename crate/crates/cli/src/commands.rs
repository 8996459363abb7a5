//! Command implementations and exit-code mapping.

use std::path::Path;
use std::time::Instant;

use causalcert::catalog::{qs_dpovm, qs_witness, Scenario, ALL_SCENARIOS};
use causalcert::process::ScenarioParams;
use causalcert::sdp::certify::{apply_witness, check_witness, CertificationResult, CertifyOptions, WitnessFamily, WitnessReport};
use causalcert::sdp::solver::SolverSettings;
use causalcert::sdp::{threshold_scan, ScanOptions, ScanResult};
use causalcert::{Error, ValidationReport};
use serde::Serialize;
use thiserror::Error;

use crate::target::Target;
use crate::{Command, OutputArgs, SolverArgs};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_PARSE: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;
pub const EXIT_BRACKET: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Io(_) => EXIT_PARSE,
            CliError::Lib(e) => lib_exit_code(e),
        }
    }
}

fn lib_exit_code(e: &Error) -> u8 {
    match e {
        Error::Solver(_) | Error::SolverStatus { .. } => EXIT_SOLVER,
        Error::InvalidBracket(_) => EXIT_BRACKET,
        Error::Algebra(_) | Error::InvalidParam(_) | Error::Invalid(_) | Error::Frame(_) | Error::NotAWitness(_) => {
            EXIT_VALIDATION
        }
    }
}

pub fn run(command: Command) -> Result<u8, CliError> {
    match command {
        Command::List(out) => list(&out),
        Command::Validate { target, output } => validate(&target.resolve()?, &output),
        Command::Certify { target, r, solver, output } => certify(&target.resolve()?, r, &solver, &output),
        Command::Scan { target, lo, hi, width, solver, output } => {
            scan(&target.resolve()?, lo, hi, width, &solver, &output)
        }
        Command::Reproduce { scenarios, solver, output } => reproduce(&scenarios, &solver, &output),
        Command::WitnessVerify { witness, target, r, output } => witness_verify(&witness, &target.resolve()?, r, &output),
    }
}

fn certify_options(solver: &SolverArgs) -> Result<CertifyOptions, CliError> {
    let mut opts = CertifyOptions::default();
    if let Some(tol) = solver.tol {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(CliError::Parse(format!("solver tolerance must lie in (0, 1), got {tol}")));
        }
        opts.solver = SolverSettings { tol, ..opts.solver };
    }
    Ok(opts)
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn write_artifact<T: Serialize>(out: &OutputArgs, name: &str, value: &T) -> Result<(), CliError> {
    if let Some(dir) = &out.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), json(value))?;
    }
    Ok(())
}

fn print_report(report: &ValidationReport) {
    for c in &report.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        println!("  [{mark}] {}: {:.3e} (tol {:.1e})", c.name, c.residual, c.tolerance);
    }
}

#[derive(Serialize)]
struct ScenarioInfo {
    name: &'static str,
    cone: &'static str,
    reference_threshold: f64,
    tolerance: f64,
    bracket: (f64, f64),
}

fn list(out: &OutputArgs) -> Result<u8, CliError> {
    let mut rows = Vec::new();
    for s in ALL_SCENARIOS {
        let cone = s.instance(&ScenarioParams::default())?.cone.kind.name();
        rows.push(ScenarioInfo {
            name: s.name(),
            cone,
            reference_threshold: s.reference_threshold(),
            tolerance: s.tolerance(),
            bracket: s.bracket(),
        });
    }
    if out.json {
        println!("{}", json(&rows));
    } else {
        println!("{:<12} {:<20} {:>10} {:>7}  bracket", "scenario", "cone", "reference", "± tol");
        for r in &rows {
            println!(
                "{:<12} {:<20} {:>10.5} {:>7.3}  [{}, {}]",
                r.name, r.cone, r.reference_threshold, r.tolerance, r.bracket.0, r.bracket.1
            );
        }
    }
    write_artifact(out, "scenarios.json", &rows)?;
    Ok(0)
}

fn validate(target: &Target, out: &OutputArgs) -> Result<u8, CliError> {
    let report = target.report()?;
    if out.json {
        println!("{}", json(&report));
    } else {
        println!("{target}: {}", if report.is_valid() { "valid" } else { "INVALID" });
        print_report(&report);
    }
    write_artifact(out, "validation.json", &report)?;
    Ok(if report.is_valid() { 0 } else { EXIT_VALIDATION })
}

fn print_result(label: &str, res: &CertificationResult) {
    println!("{label}");
    println!("  cone:              {}", res.cone.name());
    println!("  robustness:        {:.9}", res.robustness);
    println!("  signed robustness: {:.9}", res.signed_robustness);
    println!("  verdict:           {}", res.verdict.as_str());
    println!("  status:            {:?}", res.status);
    println!("  duality gap:       {:.3e}", res.duality_gap);
    println!("  iterations:        {} ({:.0} ms)", res.iterations, res.solve_time_ms);
}

fn certify(target: &Target, r: f64, solver: &SolverArgs, out: &OutputArgs) -> Result<u8, CliError> {
    let opts = certify_options(solver)?;
    let res = target.instance(r)?.certify(&opts)?;
    if out.json {
        println!("{}", json(&res));
    } else {
        print_result(&format!("{target} at r = {r}"), &res);
    }
    write_artifact(out, "certificate.json", &res)?;
    if let (Some(w), Some(dir)) = (&res.witness, &out.out) {
        write_artifact(out, "witness.json", w)?;
        if !out.json {
            println!("  witness:           {}", dir.join("witness.json").display());
        }
    }
    Ok(0)
}

fn run_scan(target: &Target, lo: f64, hi: f64, width: f64, opts: &CertifyOptions) -> Result<ScanResult, CliError> {
    if width.is_nan() || width <= 0.0 {
        return Err(CliError::Parse(format!("scan width must be positive, got {width}")));
    }
    let base = target.instance(0.0)?;
    let scan_opts = ScanOptions { width, margin: opts.margin };
    Ok(threshold_scan(|r| base.remixed(r)?.certify(opts), lo, hi, scan_opts)?)
}

fn scan(
    target: &Target,
    lo: Option<f64>,
    hi: Option<f64>,
    width: f64,
    solver: &SolverArgs,
    out: &OutputArgs,
) -> Result<u8, CliError> {
    let opts = certify_options(solver)?;
    let (d_lo, d_hi) = target.bracket();
    let res = run_scan(target, lo.unwrap_or(d_lo), hi.unwrap_or(d_hi), width, &opts)?;
    if out.json {
        println!("{}", json(&res));
    } else {
        println!("{target}: threshold {:.5} (bracket [{:.5}, {:.5}])", res.threshold, res.r_lo, res.r_hi);
        for p in &res.probes {
            let v = if p.noncausal { "noncausal" } else { "not certified" };
            println!("  r = {:.6}: robustness {:+.6e}, {v}", p.r, p.signed_robustness);
        }
    }
    write_artifact(out, "scan.json", &res)?;
    Ok(0)
}

#[derive(Serialize)]
struct ReproRow {
    scenario: &'static str,
    threshold: Option<f64>,
    reference: f64,
    tolerance: f64,
    matches: bool,
    error: Option<String>,
    seconds: f64,
}

#[derive(Serialize)]
struct WitnessRow {
    object: &'static str,
    value: f64,
    reference: f64,
    matches: bool,
}

#[derive(Serialize)]
struct Reproduction {
    thresholds: Vec<ReproRow>,
    witness: Vec<WitnessRow>,
}

/// The built-in switch witness on the switch D-POVM and on its noise.
fn witness_rows() -> Result<Vec<WitnessRow>, CliError> {
    let s = qs_witness()?;
    let (e, noise) = qs_dpovm(0.0)?;
    let target = -(2.0 - 2.0 * (2.0f64 / 3.0).sqrt());
    let row = |object, value: f64, reference: f64| WitnessRow { object, value, reference, matches: (value - reference).abs() < 1e-8 };
    Ok(vec![
        row("S_QS * E_QS", apply_witness(&s, &e)?, target),
        row("S_QS * E_noise", apply_witness(&s, &noise)?, 1.0),
    ])
}

fn reproduce(names: &[String], solver: &SolverArgs, out: &OutputArgs) -> Result<u8, CliError> {
    let opts = certify_options(solver)?;
    let scenarios: Vec<Scenario> = if names.is_empty() {
        ALL_SCENARIOS.to_vec()
    } else {
        names
            .iter()
            .map(|n| n.parse().map_err(|e: Error| CliError::Parse(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    let mut rows = Vec::new();
    let mut code = 0;
    if !out.json {
        println!("{:<12} {:>10} {:>10} {:>7} {:>8}  result", "scenario", "threshold", "reference", "± tol", "time");
    }
    for s in scenarios {
        let start = Instant::now();
        let outcome = s.scan(&ScenarioParams::default(), None, &opts, ScanOptions::default());
        let seconds = start.elapsed().as_secs_f64();
        let row = match outcome {
            Ok(res) => {
                let matches = (res.threshold - s.reference_threshold()).abs() <= s.tolerance();
                if !matches && code == 0 {
                    code = EXIT_VALIDATION;
                }
                ReproRow {
                    scenario: s.name(),
                    threshold: Some(res.threshold),
                    reference: s.reference_threshold(),
                    tolerance: s.tolerance(),
                    matches,
                    error: None,
                    seconds,
                }
            }
            Err(e) => {
                if code == 0 {
                    code = lib_exit_code(&e);
                }
                ReproRow {
                    scenario: s.name(),
                    threshold: None,
                    reference: s.reference_threshold(),
                    tolerance: s.tolerance(),
                    matches: false,
                    error: Some(e.to_string()),
                    seconds,
                }
            }
        };
        if !out.json {
            let t = row.threshold.map_or("-".to_string(), |t| format!("{t:.5}"));
            let verdict = match (&row.error, row.matches) {
                (Some(e), _) => format!("ERROR {e}"),
                (None, true) => "match".to_string(),
                (None, false) => "MISMATCH".to_string(),
            };
            println!(
                "{:<12} {:>10} {:>10.5} {:>7.3} {:>7.1}s  {verdict}",
                row.scenario, t, row.reference, row.tolerance, row.seconds
            );
        }
        rows.push(row);
    }
    let witness = witness_rows()?;
    if !out.json {
        println!();
        println!("{:<16} {:>10} {:>10}  result", "witness", "value", "reference");
        for w in &witness {
            let verdict = if w.matches { "match" } else { "MISMATCH" };
            println!("{:<16} {:>10.5} {:>10.5}  {verdict}", w.object, w.value, w.reference);
        }
    }
    if code == 0 && witness.iter().any(|w| !w.matches) {
        code = EXIT_VALIDATION;
    }
    let report = Reproduction { thresholds: rows, witness };
    if out.json {
        println!("{}", json(&report));
    }
    write_artifact(out, "thresholds.json", &report)?;
    Ok(code)
}

#[derive(Serialize)]
struct WitnessCheck {
    membership: WitnessReport,
    /// S * E for the target object.
    value: f64,
    /// Lower bound on the robustness implied by the witness.
    robustness_bound: f64,
}

fn witness_verify(path: &Path, target: &Target, r: f64, out: &OutputArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let s: WitnessFamily =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let inst = target.instance(r)?;
    let membership = check_witness(&s, &inst.cone, Some(&inst.noise))?;
    let value = apply_witness(&s, &inst.object)?;
    let check = WitnessCheck { robustness_bound: -value, value, membership };
    if out.json {
        println!("{}", json(&check));
    } else {
        println!("{}: witness {}", path.display(), if check.membership.valid { "valid" } else { "INVALID" });
        for o in &check.membership.orders {
            println!(
                "  order {}: {:?}, min eigenvalue {:.3e}, span residual {:.3e}{}",
                o.order,
                o.method,
                o.min_eigenvalue,
                o.span_residual,
                if o.passed { "" } else { " FAIL" }
            );
        }
        if let Some(n) = check.membership.normalization {
            println!("  S * N = {n:.9}");
        }
        println!("  S * E = {value:.9} on {target} at r = {r} (robustness ≥ {:.9})", -value);
    }
    write_artifact(out, "witness-check.json", &check)?;
    Ok(if check.membership.valid { 0 } else { EXIT_VALIDATION })
}
