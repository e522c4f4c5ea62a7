//! Command-line front end.
//!
//! Exit codes: `0` success, `1` configuration error, `2` non-convergence,
//! `3` empty diagnostic target.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::diagnostics::{
    curve_csv, default_tau, diagnostics_report, dyadic_radii, find_branch_points, nondeg_csv,
    DiagnosticsReport,
};
use crate::error::Error;
use crate::grid::io::{read_field, write_atomic, write_field, FieldHeader};
use crate::grid::{build_grid, Point};
use crate::moduli::{GrowthModuli, ScaleParams};
use crate::radial::integrate_one_phase;
use crate::scaling::{weiss_trace, ScaleOptions, WeissTrace};
use crate::solver::{solve, solve_cascadic, BoundaryData, SolveConfig};

pub const FIELD_FILE: &str = "field.logfb";
pub const SOLVE_TRACE_FILE: &str = "solve_trace.csv";
pub const REPORT_FILE: &str = "report.json";
pub const WEISS_FILE: &str = "weiss_trace.csv";
pub const PROFILE_FILE: &str = "profile.csv";
pub const THREADS_VAR: &str = "LOGFB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "logfb", version, about = "Two-phase log-obstacle minimizers and regularity diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Minimize the energy on the unit disk and write the field.
    Solve(SolveArgs),
    /// Diagnostics, Weiss trace and curves of a field file.
    Report(ReportArgs),
    /// Integrate the one-phase radial profile.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// Nodes per side (odd).
    #[arg(long = "N", default_value_t = 257)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lp: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lm: f64,
    /// Functional scale; 0 selects the classical limit.
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// `cosine:k:A`, `classical-1d:c` or `explicit:<file>`.
    #[arg(long)]
    pub bc: String,
    /// Comma-separated, strictly decreasing regularization widths.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20_000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub grad_tol: f64,
    /// Solve coarse-to-fine down to this many nodes per side.
    #[arg(long)]
    pub cascade: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub field: PathBuf,
    /// `origin`, `auto-branch` or `x,y`.
    #[arg(long, default_value = "auto-branch")]
    pub center: String,
    /// Largest radius `2^-from`.
    #[arg(long, default_value_t = 2)]
    pub r_from: u32,
    /// Smallest radius `2^-to`.
    #[arg(long, default_value_t = 6)]
    pub r_to: u32,
    /// Ring quadrature points of the Weiss energy.
    #[arg(long, default_value_t = 2048)]
    pub m: usize,
    /// Smallest admissible radius in grid cells.
    #[arg(long, default_value_t = 4.0)]
    pub min_cells: f64,
    /// Log power of the growth modulus.
    #[arg(long, default_value_t = 1)]
    pub j: u32,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub delta: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl CliError {
    fn config(key: &str, e: impl fmt::Display) -> Self {
        CliError {
            code: 1,
            message: format!("config error in {key}: {e}"),
        }
    }
}

fn from_lib(key: &str, e: Error) -> CliError {
    match e {
        Error::Integration(_) => CliError {
            code: 2,
            message: format!("{key}: {e}"),
        },
        other => CliError::config(key, other),
    }
}

/// Validated solve configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub n: usize,
    pub solve: SolveConfig,
    pub cascade: Option<usize>,
    pub out: PathBuf,
}

pub fn parse_boundary(spec: &str, n: usize) -> Result<BoundaryData, CliError> {
    let key = "--bc";
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| CliError::config(key, format!("`{s}`: {e}")));
    match parts.as_slice() {
        ["cosine", k, a] => Ok(BoundaryData::Cosine {
            k: k.parse().map_err(|e| CliError::config(key, format!("`{k}`: {e}")))?,
            amplitude: num(a)?,
        }),
        ["classical-1d", c] => Ok(BoundaryData::Classical1d { c: num(c)? }),
        ["explicit", rest @ ..] if !rest.is_empty() => {
            let path = Path::new(spec.split_once(':').map_or("", |p| p.1));
            if !path.is_file() {
                return Err(CliError::config(key, format!("file {} does not exist", path.display())));
            }
            let (f, _) = read_field(path).map_err(|e| CliError::config(key, e))?;
            if f.grid().n() != n {
                return Err(CliError::config(
                    key,
                    format!("{} has N={}, expected N={n}", path.display(), f.grid().n()),
                ));
            }
            Ok(BoundaryData::Explicit(f))
        }
        _ => Err(CliError::config(
            key,
            format!("`{spec}` is not one of cosine:k:A, classical-1d:c, explicit:<file>"),
        )),
    }
}

impl RunConfig {
    pub fn from_args(a: &SolveArgs) -> Result<Self, CliError> {
        build_grid(a.n).map_err(|e| CliError::config("--N", e))?;
        let params = ScaleParams::new(a.lp, a.lm)
            .and_then(|p| p.with_scale(a.r))
            .map_err(|e| CliError::config("--lp/--lm/--r", e))?;
        let boundary = parse_boundary(&a.bc, a.n)?;
        let mut solve = SolveConfig::new(params, boundary);
        if let Some(eps) = &a.eps {
            solve.eps_schedule = eps.clone();
        }
        solve.max_iters = a.max_iters;
        solve.grad_tol = a.grad_tol;
        solve.validate().map_err(|e| CliError::config("--eps/--max-iters/--grad-tol", e))?;
        if let Some(c) = a.cascade {
            build_grid(c).map_err(|e| CliError::config("--cascade", e))?;
        }
        Ok(RunConfig {
            n: a.n,
            solve,
            cascade: a.cascade,
            out: a.out.clone(),
        })
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::config("--out", Error::io(dir, e)))
}

fn emit(path: PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(&path, bytes).map_err(|e| CliError::config("--out", e))
}

pub fn cmd_solve(a: &SolveArgs) -> Result<String, CliError> {
    let cfg = RunConfig::from_args(a)?;
    let grid = build_grid(cfg.n).map_err(|e| CliError::config("--N", e))?;
    let sol = match cfg.cascade {
        Some(c) => solve_cascadic(&cfg.solve, &grid, c),
        None => solve(&cfg.solve, &grid),
    }
    .map_err(|e| from_lib("solve", e))?;
    ensure_dir(&cfg.out)?;
    let p = cfg.solve.params;
    let header = FieldHeader {
        lambda_plus: p.lambda_plus,
        lambda_minus: p.lambda_minus,
        r: p.r,
        converged: sol.trace.converged,
    };
    let field_path = cfg.out.join(FIELD_FILE);
    write_field(&field_path, &sol.field, &header).map_err(|e| CliError::config("--out", e))?;
    emit(cfg.out.join(SOLVE_TRACE_FILE), sol.trace.to_csv().as_bytes())?;
    let energy = sol.trace.stage_energy.last().copied().unwrap_or(f64::NAN);
    let summary = format!(
        "converged={} stages={} energy={energy:e} field={}",
        sol.trace.converged,
        sol.trace.stage_eps.len(),
        field_path.display()
    );
    if sol.trace.converged {
        Ok(summary)
    } else {
        Err(CliError {
            code: 2,
            message: format!("solver did not converge; {summary}"),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct WeissSummary {
    pub min_monotone_increment: f64,
    pub min_forward_increment: f64,
    pub max_abs_w: f64,
}

/// The JSON document written by `report`.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub n: usize,
    pub params: ScaleParams,
    pub converged: bool,
    pub branch_points: Vec<Point>,
    #[serde(flatten)]
    pub diagnostics: DiagnosticsReport,
    pub weiss: WeissTrace,
    pub weiss_summary: WeissSummary,
}

fn parse_center(spec: &str) -> Result<Option<Point>, CliError> {
    match spec {
        "origin" => Ok(Some([0.0, 0.0])),
        "auto-branch" => Ok(None),
        other => {
            let xs: Vec<f64> = other
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::config("--center", format!("`{other}`: {e}")))?;
            match xs.as_slice() {
                [x, y] if x.is_finite() && y.is_finite() => Ok(Some([*x, *y])),
                _ => Err(CliError::config("--center", format!("`{other}` is not origin, auto-branch or x,y"))),
            }
        }
    }
}

pub fn build_report(a: &ReportArgs) -> Result<ReportDocument, CliError> {
    if !a.field.is_file() {
        return Err(CliError::config("--field", format!("file {} does not exist", a.field.display())));
    }
    if a.r_from > a.r_to {
        return Err(CliError::config("--r-from/--r-to", "need r-from <= r-to"));
    }
    let center_spec = parse_center(&a.center)?;
    let (u, header) = read_field(&a.field).map_err(|e| CliError::config("--field", e))?;
    let params = ScaleParams::new(header.lambda_plus, header.lambda_minus)
        .and_then(|p| p.with_scale(header.r))
        .map_err(|e| CliError::config("--field", e))?;
    let h = u.grid().h();
    let branch_points = find_branch_points(&u, default_tau(h)).map_err(|e| CliError::config("--field", e))?;
    let center = match center_spec {
        Some(c) => c,
        None => *branch_points
            .iter()
            .min_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])))
            .ok_or_else(|| CliError {
                code: 3,
                message: "auto-branch: the field has no branch point".into(),
            })?,
    };
    let radii = dyadic_radii(a.r_from, a.r_to);
    let diagnostics = diagnostics_report(&u, center, &radii, &params).map_err(|e| from_lib("report", e))?;
    let c_hat = if diagnostics.fits.c_hat > 0.0 { diagnostics.fits.c_hat } else { 1.0 };
    let moduli = GrowthModuli::new(c_hat, a.j).map_err(|e| CliError::config("--j", e))?;
    let opts = ScaleOptions {
        m: a.m,
        min_cells: a.min_cells,
    };
    let decreasing: Vec<f64> = radii.iter().rev().copied().collect();
    let weiss = weiss_trace(&u, center, &params, &decreasing, &moduli, &opts).map_err(|e| from_lib("weiss", e))?;
    let weiss_summary = WeissSummary {
        min_monotone_increment: weiss.min_monotone_increment(),
        min_forward_increment: weiss.min_forward_increment(),
        max_abs_w: weiss.max_abs_w(),
    };
    Ok(ReportDocument {
        n: u.grid().n(),
        params,
        converged: header.converged,
        branch_points,
        diagnostics,
        weiss,
        weiss_summary,
    })
}

pub fn cmd_report(a: &ReportArgs) -> Result<String, CliError> {
    let doc = build_report(a)?;
    ensure_dir(&a.out)?;
    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::config("report", e))?;
    emit(a.out.join(REPORT_FILE), json.as_bytes())?;
    emit(a.out.join(WEISS_FILE), doc.weiss.to_csv().as_bytes())?;
    let d = &doc.diagnostics;
    emit(a.out.join("growth.csv"), curve_csv(&d.growth).as_bytes())?;
    emit(a.out.join("nondeg_plus.csv"), nondeg_csv(&d.nondeg_plus).as_bytes())?;
    emit(a.out.join("nondeg_minus.csv"), nondeg_csv(&d.nondeg_minus).as_bytes())?;
    emit(a.out.join("grad_modulus.csv"), curve_csv(&d.grad_modulus).as_bytes())?;
    emit(a.out.join("blowup_residual.csv"), curve_csv(&d.blowup_residual).as_bytes())?;
    Ok(format!(
        "center=({:e},{:e}) p_growth={} report={}",
        d.center[0],
        d.center[1],
        d.fits.p_growth.map_or("none".into(), |p| format!("{p:.4}")),
        a.out.join(REPORT_FILE).display()
    ))
}

pub fn cmd_oracle(a: &OracleArgs) -> Result<String, CliError> {
    let prof = integrate_one_phase(a.n, a.lambda, a.rho_max, a.delta).map_err(|e| from_lib("oracle", e))?;
    let hi = 1e-2f64.min(0.1 * a.rho_max);
    let coef = prof.blowup_coefficient(1e-6, hi).map_err(|e| from_lib("oracle", e))?;
    ensure_dir(&a.out)?;
    emit(a.out.join(PROFILE_FILE), prof.to_csv().as_bytes())?;
    Ok(format!(
        "blowup_coefficient={coef:.6} n={} lambda={} start_offset={:e} nodes={}",
        a.n,
        a.lambda,
        prof.start_offset,
        prof.nodes.len()
    ))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let k: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| CliError::config(THREADS_VAR, format!("`{v}` is not a positive integer")))?;
    // a pool configured earlier in the process keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Report(a) => cmd_report(a),
        Command::Oracle(a) => cmd_oracle(a),
    });
    match result {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("logfb: {e}");
            e.code
        }
    }
}
