//! Command-line front end: `check`, `solve`, `sweep` and `selftest`.
//!
//! Exit codes: 0 on success, 1 when the run itself fails (inadmissible
//! data, leaving the solution space, no convergence, a failed invariant),
//! 2 on configuration or output-directory errors.

pub mod config;
pub mod output;
pub mod selftest;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::boundary::{check_admissibility, AdmissibilityReport};
use crate::error::Error;
use crate::solver::{dump_field, solve, Slab};
use crate::verify::{contraction_study, solution_checks, terminal_alpha};
use crate::vgrid::selfcheck;
use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Environment variable holding the default worker-thread count.
pub const THREADS_ENV: &str = "ESBGK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "esbgk", version, about = "Stationary ES-BGK slab solver and verification suite")]
pub struct Cli {
    /// Worker threads (overrides the config file and ESBGK_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving the output files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Audit the boundary data and write quantities.json.
    Check(RunArgs),
    /// Run the Picard iteration and write profiles.csv, summary.json, checks.json.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Also write field.bin and field.json.
        #[arg(long)]
        dump_field: bool,
    },
    /// Solve for every τ in sweep.taus and write sweep.csv and checks.json.
    Sweep(RunArgs),
    /// Run the built-in invariant suite.
    Selftest {
        /// Optional directory for selftest.json.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
        }
    };
    run(cli)
}

fn thread_count(cli: Option<usize>, cfg: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = cli.or(cfg) {
        return if n == 0 { Err("thread count must be at least 1".into()) } else { Ok(Some(n)) };
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {s:?}")),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` in a pool of the requested size.
fn with_threads<R: Send>(n: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, String> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = n {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| e.to_string())?;
    Ok(pool.install(f))
}

fn config_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    EXIT_CONFIG
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Selftest { out_dir, inject_fault } => {
            let threads = match thread_count(cli.threads, None) {
                Ok(t) => t,
                Err(e) => return config_error(e),
            };
            if let Some(d) = &out_dir {
                if let Err(e) = output::prepare_out_dir(d) {
                    return config_error(format!("output directory {}: {e}", d.display()));
                }
            }
            match with_threads(threads, || cmd_selftest(out_dir.as_deref(), inject_fault.as_deref())) {
                Ok(code) => code,
                Err(e) => config_error(e),
            }
        }
        Command::Check(args) => dispatch(cli.threads, &args, cmd_check),
        Command::Solve { run, dump_field } => {
            dispatch(cli.threads, &run, |cfg, out| cmd_solve(cfg, out, dump_field || cfg.dump_field))
        }
        Command::Sweep(args) => dispatch(cli.threads, &args, cmd_sweep),
    }
}

fn dispatch(threads: Option<usize>, args: &RunArgs, f: impl FnOnce(&RunConfig, &Path) -> i32 + Send) -> i32 {
    let cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let threads = match thread_count(threads, cfg.threads) {
        Ok(t) => t,
        Err(e) => return config_error(e),
    };
    if let Err(e) = output::prepare_out_dir(&args.out_dir) {
        return config_error(format!("output directory {}: {e}", args.out_dir.display()));
    }
    match with_threads(threads, || f(&cfg, &args.out_dir)) {
        Ok(code) => code,
        Err(e) => config_error(e),
    }
}

/// Exit code for an error raised while setting up or running a command.
fn error_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

fn write_or_report<T: Serialize>(path: &Path, value: &T) -> bool {
    match output::write_json(path, value) {
        Ok(()) => true,
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", path.display());
            false
        }
    }
}

fn setup(cfg: &RunConfig) -> Result<(crate::vgrid::VelocityGrid, crate::boundary::BoundaryData), Error> {
    let grid = cfg.build_grid()?;
    let b = cfg.boundary_data(&grid)?;
    Ok((grid, b))
}

fn cmd_check(cfg: &RunConfig, out: &Path) -> i32 {
    let (grid, b) = match setup(cfg) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    let scfg = match cfg.solver_config() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let tau = scfg.tau();
    let report = check_admissibility(&b, tau, &grid);
    let quad = selfcheck(&grid, 1e-8);
    let doc = json!({
        "tau": tau,
        "kappa": scfg.kappa,
        "nu": scfg.nu,
        "quantities": report.quantities,
        "conditions": {
            "non_concentration": report.non_concentration,
            "transverse_momentum": report.transverse_momentum,
            "gamma": report.gamma,
        },
        "quantities_error": report.quantities_error,
        "tail_mass_fraction": report.tail_mass_fraction,
        "printed_constants": report.remark4,
        "quadrature_selfcheck": quad,
        "admissible": report.admissible,
    });
    if !write_or_report(&out.join("quantities.json"), &doc) {
        return EXIT_CONFIG;
    }
    if report.admissible {
        println!("admissible at tau = {tau}");
        EXIT_OK
    } else {
        let failed = failed_conditions(&report);
        eprintln!("inadmissible at tau = {tau}: failed {}", failed.join(", "));
        EXIT_FAILURE
    }
}

fn failed_conditions(r: &AdmissibilityReport) -> Vec<&'static str> {
    [
        (!r.non_concentration.pass).then_some("non-concentration"),
        (!r.transverse_momentum.pass).then_some("transverse-momentum"),
        (!r.gamma.pass).then_some("gamma"),
    ]
    .into_iter()
    .flatten()
    .collect()
}

fn failure_summary(e: &Error, tau: f64, wall: f64) -> serde_json::Value {
    let (kind, extra) = match e {
        Error::TauTooSmall { iteration, condition } => {
            ("tau-too-small", json!({ "iteration": iteration, "failed_condition": condition }))
        }
        Error::NonConvergence { iterations, last_distance, alphas } => {
            ("non-convergence", json!({ "iterations": iterations, "last_distance": last_distance, "alphas": alphas }))
        }
        Error::Inadmissible(_) => ("inadmissible", json!({})),
        Error::Vacuum { .. } => ("vacuum", json!({})),
        Error::DegenerateTensor { .. } => ("degenerate-tensor", json!({})),
        Error::Singularity(_) => ("singularity", json!({})),
        _ => ("error", json!({})),
    };
    json!({
        "status": "failed",
        "error_kind": kind,
        "message": e.to_string(),
        "details": extra,
        "tau": tau,
        "wall_time_s": wall,
    })
}

fn cmd_solve(cfg: &RunConfig, out: &Path, dump: bool) -> i32 {
    let start = Instant::now();
    let scfg = match cfg.solver_config() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let tau = scfg.tau();
    let fail = |e: Error| -> i32 {
        eprintln!("error: {e}");
        let code = error_code(&e);
        if code == EXIT_FAILURE {
            write_or_report(&out.join("summary.json"), &failure_summary(&e, tau, start.elapsed().as_secs_f64()));
        }
        code
    };
    let (grid, b) = match setup(cfg) {
        Ok(x) => x,
        Err(e) => return fail(e),
    };
    let audit = check_admissibility(&b, tau, &grid);
    if !audit.admissible {
        let failed = failed_conditions(&audit);
        let e = Error::Inadmissible(format!("failed {} at tau = {tau}", failed.join(", ")));
        eprintln!("error: {e}");
        let mut doc = failure_summary(&e, tau, start.elapsed().as_secs_f64());
        doc["details"] = json!({ "failed_conditions": failed, "admissibility": audit });
        write_or_report(&out.join("summary.json"), &doc);
        return EXIT_FAILURE;
    }
    let slab = match Slab::new(grid, cfg.n_x, b, scfg) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let sol = match solve(&slab) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    let checks = match solution_checks(&sol.field, &sol.moments, &slab) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Err(e) = output::write_profiles(&out.join("profiles.csv"), &sol.moments, &checks.flux) {
        eprintln!("error: cannot write profiles.csv: {e}");
        return EXIT_CONFIG;
    }
    if dump {
        if let Err(e) = dump_field(&sol.field, &slab.x, &slab.grid, &out.join("field.bin"), &out.join("field.json")) {
            eprintln!("error: cannot write field dump: {e}");
            return EXIT_CONFIG;
        }
    }
    let r = &sol.report;
    let summary = json!({
        "status": "converged",
        "tau": tau,
        "kappa": slab.cfg.kappa,
        "nu": slab.cfg.nu,
        "n_x": slab.x.n_x(),
        "grid_counts": slab.grid.counts(),
        "initial": r.initial,
        "iterations": r.iterations,
        "distances": r.distances,
        "alphas": r.alphas,
        "max_alpha": r.max_alpha(),
        "terminal_alpha": terminal_alpha(r),
        "threshold": r.threshold,
        "omega_all_pass": r.omega_all_pass(),
        "omega_verdicts": r.omega_reports.iter().map(|o| o.pass).collect::<Vec<_>>(),
        "mild_residual": checks.mild_residual,
        "entropy_max": checks.entropy_max,
        "bound_margins": checks.theorem_bounds,
        "quantities": slab.quantities,
        "wall_time_s": start.elapsed().as_secs_f64(),
    });
    let full = json!({ "solve_report": r, "checks": checks, "admissibility": audit });
    if !write_or_report(&out.join("summary.json"), &summary) || !write_or_report(&out.join("checks.json"), &full) {
        return EXIT_CONFIG;
    }
    let ok = r.omega_all_pass() && checks.theorem_bounds.pass && checks.entropy_pass;
    println!(
        "converged in {} iterations (max alpha {:.4}, mild residual {:.3e})",
        r.iterations,
        r.max_alpha(),
        checks.mild_residual
    );
    if ok {
        EXIT_OK
    } else {
        eprintln!("converged field failed a post-hoc check; see checks.json");
        EXIT_FAILURE
    }
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> i32 {
    let taus = &cfg.sweep.taus;
    if taus.is_empty() {
        return config_error("sweep.taus is empty");
    }
    let scfg = match cfg.solver_config() {
        Ok(s) => s,
        Err(e) => return config_error(e),
    };
    let (grid, b) = match setup(cfg) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    // The base configuration only carries grids, data and tolerances; each
    // row replaces τ.
    let base_cfg = match crate::solver::SolverConfig::from_tau(taus[taus.len() - 1], scfg.nu) {
        Ok(c) => c.with_tol(scfg.tol).with_max_iter(scfg.max_iter).with_enforce(scfg.omega_enforce),
        Err(e) => return config_error(e),
    };
    let slab = match Slab::new(grid, cfg.n_x, b, base_cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    let study = match contraction_study(&slab, taus, scfg.nu) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    if let Err(e) = output::write_sweep(&out.join("sweep.csv"), &study.rows) {
        eprintln!("error: cannot write sweep.csv: {e}");
        return EXIT_CONFIG;
    }
    if !write_or_report(&out.join("checks.json"), &json!({ "contraction_study": study })) {
        return EXIT_CONFIG;
    }
    let converged = study.rows.iter().filter(|r| r.converged).count();
    println!("{} of {} rows converged", converged, study.rows.len());
    EXIT_OK
}

fn cmd_selftest(out: Option<&Path>, fault: Option<&str>) -> i32 {
    let start = Instant::now();
    let items = match selftest::run(fault) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return error_code(&e);
        }
    };
    for i in &items {
        println!("{} {} (metric {:.3e}, tol {})", if i.pass { "PASS" } else { "FAIL" }, i.name, i.metric, i.tol);
    }
    let pass = items.iter().all(|i| i.pass);
    if let Some(dir) = out {
        let doc = json!({ "items": items, "pass": pass, "wall_time_s": start.elapsed().as_secs_f64() });
        if !write_or_report(&dir.join("selftest.json"), &doc) {
            return EXIT_CONFIG;
        }
    }
    if pass {
        EXIT_OK
    } else {
        let failed: Vec<&str> = items.iter().filter(|i| !i.pass).map(|i| i.name).collect();
        eprintln!("selftest failed: {}", failed.join(", "));
        EXIT_FAILURE
    }
}
