//! Post-hoc checks on converged fields and the τ sweep.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::TheoremQuantities;
use crate::error::{Error, Result};
use crate::gaussian::{cancellation_residual, entropy_production, envelope_check, Gaussian};
use crate::moments::{tensor_sandwich_check, ut_bounds_check, MomentSet};
use crate::solver::{
    apply_phi, distance, field_raw_moments, omega_membership, solve, DistributionField, OmegaReport, Slab, SolveReport,
    SolverConfig, SpatialGrid, OMEGA_REL_TOL,
};
use crate::vgrid::VelocityGrid;

/// Distances below this fraction of (1 + d₀) are treated as roundoff when
/// picking the terminal contraction ratio.
pub const ALPHA_NOISE_FLOOR: f64 = 1e-12;

pub const FLUX_COLUMNS: [&str; 5] = ["flux_mass", "flux_mom1", "flux_mom2", "flux_mom3", "flux_energy"];

/// ∫f·v₁·(1, v₁, v₂, v₃, |v|²) at every spatial node.
#[derive(Debug, Clone, Serialize)]
pub struct FluxTable {
    pub x: Vec<f64>,
    /// rows[m] = [mass, mom1, mom2, mom3, energy]
    pub rows: Vec<[f64; 5]>,
    /// (max_x - min_x) / max(|mean|, scale), per column.
    pub drift: [f64; 5],
    pub scale: f64,
}

impl FluxTable {
    pub fn max_drift(&self) -> f64 {
        self.drift.iter().copied().fold(0.0, f64::max)
    }
}

pub fn flux_invariants(f: &DistributionField, x: &SpatialGrid, grid: &VelocityGrid, scale: f64) -> Result<FluxTable> {
    if f.n_v() != grid.len() || f.n_x() != x.n_x() {
        return Err(Error::Shape { expected: x.n_x() * grid.len(), got: f.values().len() });
    }
    let rows: Vec<[f64; 5]> = (0..f.n_x())
        .into_par_iter()
        .map(|m| {
            let s = f.slice(m);
            let col = |j: usize| {
                grid.sum_nodes(|k| {
                    let v = grid.velocity(k);
                    let w = match j {
                        0 => 1.0,
                        1..=3 => v[j - 1],
                        _ => grid.speed2(k),
                    };
                    s[k] * v[0] * w
                })
            };
            [col(0), col(1), col(2), col(3), col(4)]
        })
        .collect();
    let mut drift = [0.0; 5];
    for (j, d) in drift.iter_mut().enumerate() {
        let vals = rows.iter().map(|r| r[j]);
        let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.clone().fold(f64::INFINITY, f64::min);
        let mean = vals.sum::<f64>() / rows.len() as f64;
        *d = (max - min) / mean.abs().max(scale);
    }
    Ok(FluxTable { x: x.nodes(), rows, drift, scale })
}

/// d(Φ(f), f).
pub fn mild_residual(f: &DistributionField, slab: &Slab) -> Result<f64> {
    let phi = apply_phi(f, slab)?;
    distance(&phi, f, &slab.grid)
}

/// The bounds stated for the solution: a_l ≤ ρ ≤ a_u, c_l ≤ E ≤ c_u and
/// ρ·E - (∫f v₁)² ≥ γ_l, with E = ∫f|v|².
#[derive(Debug, Clone, Serialize)]
pub struct TheoremBoundsReport {
    pub rho_lower_margin: f64,
    pub rho_upper_margin: f64,
    pub energy_lower_margin: f64,
    pub energy_upper_margin: f64,
    pub gamma_margin: f64,
    pub pass: bool,
}

pub fn theorem_bounds_check(
    f: &DistributionField,
    grid: &VelocityGrid,
    q: &TheoremQuantities,
) -> Result<TheoremBoundsReport> {
    let raw = field_raw_moments(f, grid)?;
    let mut r = TheoremBoundsReport {
        rho_lower_margin: f64::INFINITY,
        rho_upper_margin: f64::INFINITY,
        energy_lower_margin: f64::INFINITY,
        energy_upper_margin: f64::INFINITY,
        gamma_margin: f64::INFINITY,
        pass: false,
    };
    for rm in &raw {
        let (rho, e, j1) = (rm.mass, rm.energy(), rm.momentum[0]);
        r.rho_lower_margin = r.rho_lower_margin.min(rho - q.a_l);
        r.rho_upper_margin = r.rho_upper_margin.min(q.a_u - rho);
        r.energy_lower_margin = r.energy_lower_margin.min(e - q.c_l);
        r.energy_upper_margin = r.energy_upper_margin.min(q.c_u - e);
        r.gamma_margin = r.gamma_margin.min(rho * e - j1 * j1 - q.gamma_l);
    }
    let (ta, tc) = (OMEGA_REL_TOL * q.a_u, OMEGA_REL_TOL * q.c_u);
    r.pass = r.rho_lower_margin >= -ta
        && r.rho_upper_margin >= -ta
        && r.energy_lower_margin >= -tc
        && r.energy_upper_margin >= -tc
        && r.gamma_margin >= -OMEGA_REL_TOL * q.a_u * q.c_u;
    Ok(r)
}

/// max over x and i ∈ {2, 3} of |∫f v_i dv|.
pub fn transverse_momentum_max(f: &DistributionField, grid: &VelocityGrid) -> Result<f64> {
    let raw = field_raw_moments(f, grid)?;
    Ok(raw.iter().flat_map(|r| [r.momentum[1].abs(), r.momentum[2].abs()]).fold(0.0, f64::max))
}

/// Last contraction ratio whose numerator is above the roundoff floor.
pub fn terminal_alpha(report: &SolveReport) -> Option<f64> {
    let d = &report.distances;
    let d0 = d.first().copied().unwrap_or(0.0);
    let floor = ALPHA_NOISE_FLOOR * (1.0 + d0);
    (1..d.len()).rev().find(|&j| d[j - 1] > 0.0 && d[j] > floor).map(|j| d[j] / d[j - 1])
}

/// Per-spatial-node diagnostics of a converged field.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionChecks {
    pub omega: OmegaReport,
    pub theorem_bounds: TheoremBoundsReport,
    pub mild_residual: f64,
    pub entropy_max: f64,
    pub entropy_pass: bool,
    pub sandwich_pass: bool,
    pub ut_bounds_min_margin: f64,
    pub ut_bounds_pass: bool,
    pub envelope_min_log_slack: f64,
    pub envelope_local_min_log_slack: f64,
    pub envelope_pass: bool,
    pub cancellation_max_relative: f64,
    pub transverse_momentum_max: f64,
    pub flux: FluxTable,
}

/// Tolerance on the entropy production of a converged field.
pub const ENTROPY_TOL: f64 = 1e-8;

pub fn solution_checks(f: &DistributionField, moments: &[MomentSet], slab: &Slab) -> Result<SolutionChecks> {
    let grid = &slab.grid;
    let q = &slab.quantities;
    let per_x: Vec<(f64, bool, f64, f64, f64, bool, f64)> = moments
        .par_iter()
        .enumerate()
        .map(|(m, ms)| -> Result<_> {
            let s = f.slice(m);
            let ent = entropy_production(s, ms, grid)?;
            let sandwich = tensor_sandwich_check(ms).pass;
            let ut = ut_bounds_check(ms, q, q.gamma_l).min_margin;
            let env = envelope_check(ms, grid, q)?;
            let canc = cancellation_residual(s, ms, grid)?.max_relative();
            Ok((ent, sandwich, ut, env.min_log_slack, env.local_min_log_slack, env.pass, canc))
        })
        .collect::<Result<_>>()?;
    let fold_max = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let fold_min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let entropy_max = fold_max(&mut per_x.iter().map(|r| r.0));
    let ut_min = fold_min(&mut per_x.iter().map(|r| r.2));
    Ok(SolutionChecks {
        omega: omega_membership(f, grid, q),
        theorem_bounds: theorem_bounds_check(f, grid, q)?,
        mild_residual: mild_residual(f, slab)?,
        entropy_max,
        entropy_pass: entropy_max <= ENTROPY_TOL,
        sandwich_pass: per_x.iter().all(|r| r.1),
        ut_bounds_min_margin: ut_min,
        ut_bounds_pass: ut_min >= 0.0,
        envelope_min_log_slack: fold_min(&mut per_x.iter().map(|r| r.3)),
        envelope_local_min_log_slack: fold_min(&mut per_x.iter().map(|r| r.4)),
        envelope_pass: per_x.iter().all(|r| r.5),
        cancellation_max_relative: fold_max(&mut per_x.iter().map(|r| r.6)),
        transverse_momentum_max: transverse_momentum_max(f, grid)?,
        flux: flux_invariants(f, &slab.x, grid, q.a_u + q.c_u)?,
    })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub converged: bool,
    pub iterations: usize,
    pub max_alpha: f64,
    pub terminal_alpha: f64,
    pub transverse_momentum_max: f64,
    pub flux_drift: f64,
    pub error: Option<String>,
}

/// Least-squares fit α ≈ C·(ln τ + 1)/τ over converged rows.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionFit {
    pub c: f64,
    pub rms_residual: f64,
    pub rows_used: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionStudy {
    pub nu: f64,
    pub rows: Vec<SweepRow>,
    pub terminal_alpha_decreasing: bool,
    pub all_alpha_below_one: bool,
    pub fit: Option<ContractionFit>,
}

fn sweep_row(base: &Slab, tau: f64, nu: f64) -> SweepRow {
    let failed = |iterations: usize, alphas: &[f64], e: String| SweepRow {
        tau,
        converged: false,
        iterations,
        max_alpha: alphas.iter().copied().fold(f64::NAN, f64::max),
        terminal_alpha: alphas.last().copied().unwrap_or(f64::NAN),
        transverse_momentum_max: f64::NAN,
        flux_drift: f64::NAN,
        error: Some(e),
    };
    let cfg = match SolverConfig::from_tau(tau, nu) {
        Ok(c) => SolverConfig { kappa: c.kappa, nu, ..base.cfg },
        Err(e) => return failed(0, &[], e.to_string()),
    };
    let slab = match base.with_config(cfg) {
        Ok(s) => s,
        Err(e) => return failed(0, &[], e.to_string()),
    };
    match solve(&slab) {
        Ok(sol) => {
            let q = &slab.quantities;
            let tm = transverse_momentum_max(&sol.field, &slab.grid).unwrap_or(f64::NAN);
            let drift = flux_invariants(&sol.field, &slab.x, &slab.grid, q.a_u + q.c_u)
                .map(|t| t.max_drift())
                .unwrap_or(f64::NAN);
            SweepRow {
                tau,
                converged: true,
                iterations: sol.report.iterations,
                max_alpha: sol.report.max_alpha(),
                terminal_alpha: terminal_alpha(&sol.report).unwrap_or(f64::NAN),
                transverse_momentum_max: tm,
                flux_drift: drift,
                error: None,
            }
        }
        Err(Error::NonConvergence { iterations, alphas, .. }) => {
            failed(iterations, &alphas, format!("no convergence after {iterations} iterations"))
        }
        Err(Error::TauTooSmall { iteration, condition }) => {
            failed(iteration, &[], format!("left the solution space at iterate {iteration}: {condition}"))
        }
        Err(e) => failed(0, &[], e.to_string()),
    }
}

/// Solves at every τ (in parallel) with the grids, data and tolerances of
/// `base`. Failures are recorded per row.
pub fn contraction_study(base: &Slab, taus: &[f64], nu: f64) -> Result<ContractionStudy> {
    if taus.is_empty() {
        return Err(Error::Config("tau list is empty".into()));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(format!("taus must be strictly ascending, got {taus:?}")));
    }
    let rows: Vec<SweepRow> = taus.par_iter().map(|&tau| sweep_row(base, tau, nu)).collect();
    let conv: Vec<&SweepRow> = rows.iter().filter(|r| r.converged).collect();
    let terminal_alpha_decreasing = conv.windows(2).all(|w| w[1].terminal_alpha < w[0].terminal_alpha);
    let all_alpha_below_one = conv.iter().all(|r| r.max_alpha < 1.0);
    let fit = fit_contraction(&conv);
    Ok(ContractionStudy { nu, rows, terminal_alpha_decreasing, all_alpha_below_one, fit })
}

fn fit_contraction(rows: &[&SweepRow]) -> Option<ContractionFit> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.terminal_alpha.is_finite())
        .map(|r| ((r.tau.ln() + 1.0) / r.tau, r.terminal_alpha))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), (g, y)| (a + g * y, b + g * g));
    let c = sxy / sxx;
    let ss: f64 = pts.iter().map(|(g, y)| (y - c * g).powi(2)).sum();
    Some(ContractionFit { c, rms_residual: (ss / pts.len() as f64).sqrt(), rows_used: pts.len() })
}

/// sup_{x,v} |M_ν(f) - M_ν(g)|·e^{B|v|²} / d(f, g); zero when f = g.
pub fn lipschitz_probe(
    f: &DistributionField,
    g: &DistributionField,
    grid: &VelocityGrid,
    nu: f64,
    b: f64,
) -> Result<f64> {
    let d = distance(f, g, grid)?;
    if d == 0.0 {
        return Ok(0.0);
    }
    let mf = crate::solver::field_moments(f, grid, nu)?;
    let mg = crate::solver::field_moments(g, grid, nu)?;
    let sup = mf
        .par_iter()
        .zip(mg.par_iter())
        .map(|(a, c)| -> Result<f64> {
            let (ga, gc) = (Gaussian::new(a)?, Gaussian::new(c)?);
            Ok(grid
                .velocities()
                .iter()
                .zip(0..)
                .map(|(&v, k)| (ga.at(v) - gc.at(v)).abs() * (b * grid.speed2(k)).exp())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(sup / d)
}
