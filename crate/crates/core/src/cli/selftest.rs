//! Built-in invariant suite on small grids.

use serde::Serialize;

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::gaussian::{evaluate, maxwellian, Gaussian};
use crate::linalg::Sym3;
use crate::moments::{compute_moments, tensor_sandwich_check, MomentSet};
use crate::solver::{apply_phi, distance, initial_field, InitialKind, Slab, SolverConfig};
use crate::vgrid::{selfcheck, GridSpec, Rule, VelocityGrid};

pub const INVARIANTS: [&str; 7] = [
    "quadrature",
    "moment-matching",
    "nu0-collapse",
    "positivity",
    "trace-identity",
    "distance-axioms",
    "tensor-sandwich",
];

#[derive(Debug, Clone, Serialize)]
pub struct SelftestItem {
    pub name: &'static str,
    /// Worst normalized error; the check passes when it is ≤ `tol`.
    pub metric: f64,
    pub tol: f64,
    pub pass: bool,
}

fn sample_moment_sets() -> Vec<MomentSet> {
    let thetas = [
        Sym3::from_upper([1.0, 0.0, 0.0, 1.0, 0.0, 1.0]),
        Sym3::from_upper([1.4, 0.2, -0.1, 0.9, 0.05, 1.1]),
        Sym3::from_upper([0.8, -0.15, 0.1, 1.3, 0.2, 0.7]),
    ];
    let us = [[0.0, 0.0, 0.0], [0.4, -0.2, 0.1], [-0.3, 0.25, -0.35]];
    let nus = [-0.4, 0.0, 0.3, 0.8];
    let mut out = Vec::new();
    for (i, th) in thetas.iter().enumerate() {
        for (j, &nu) in nus.iter().enumerate() {
            out.push(MomentSet::from_parts(0.5 + i as f64 + 0.25 * j as f64, us[(i + j) % 3], *th, nu));
        }
    }
    out
}

fn moment_matching(grid: &VelocityGrid) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for m in sample_moment_sets() {
        let g = evaluate(&m, grid)?;
        let r = compute_moments(&g, grid, m.nu)?;
        let rel = |a: f64, b: f64, s: f64| (a - b).abs() / s;
        let mut e: f64 = rel(r.rho, m.rho, m.rho) / 1e-6;
        for i in 0..3 {
            e = e.max(rel(r.rho * r.u[i], m.rho * m.u[i], m.rho) / 1e-6);
        }
        let energy = |x: &MomentSet| x.rho * (3.0 * x.t + x.speed2_u());
        e = e.max(rel(energy(&r), energy(&m), energy(&m)) / 1e-6);
        let scale = m.t_nu.max_abs();
        let central = r.theta.scale(r.rho);
        e = e.max(central.max_abs_diff(&m.t_nu.scale(m.rho)) / (m.rho * scale) / 1e-5);
        worst = worst.max(e);
    }
    Ok(worst)
}

fn nu0_collapse(grid: &VelocityGrid) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for m in sample_moment_sets() {
        let m0 = m.with_nu(0.0);
        let g = Gaussian::new(&m0)?;
        let (mut diff, mut peak): (f64, f64) = (0.0, 0.0);
        for &v in grid.velocities() {
            let iso = maxwellian(m0.rho, m0.u, m0.t, v);
            diff = diff.max((g.at(v) - iso).abs());
            peak = peak.max(iso);
        }
        worst = worst.max(diff / peak);
    }
    Ok(worst)
}

fn small_slab() -> Result<Slab> {
    let b = BoundaryData::remark4_family(1.0, 0.6, 0.5, 2.0)?;
    let spec = GridSpec::new([12, 8, 8], 6.0, 0.0, Rule::GaussLegendre).with_breakpoints(&b.breakpoints());
    Slab::new(VelocityGrid::build(&spec)?, 9, b, SolverConfig::from_tau(20.0, 0.3)?)
}

fn positivity(slab: &Slab) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for kind in [InitialKind::Constant, InitialKind::Attenuated] {
        let out = apply_phi(&initial_field(slab, kind), slab)?;
        let min = out.values().iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.max(if min >= 0.0 { 0.0 } else { 1.0 + min.abs() });
    }
    Ok(worst)
}

fn trace_identity(slab: &Slab) -> Result<f64> {
    let f = apply_phi(&initial_field(slab, InitialKind::Constant), slab)?;
    let mut worst: f64 = 0.0;
    for m in 0..f.n_x() {
        let ms = compute_moments(f.slice(m), &slab.grid, slab.cfg.nu)?;
        worst = worst.max((ms.theta.trace() - 3.0 * ms.t).abs() / ms.t);
    }
    Ok(worst / 1e-14)
}

fn distance_axioms(slab: &Slab) -> Result<f64> {
    let f = initial_field(slab, InitialKind::Constant);
    let g = initial_field(slab, InitialKind::Attenuated);
    let h = apply_phi(&f, slab)?;
    let grid = &slab.grid;
    let (dff, dfg, dgf) = (distance(&f, &f, grid)?, distance(&f, &g, grid)?, distance(&g, &f, grid)?);
    let (dfh, dhg) = (distance(&f, &h, grid)?, distance(&h, &g, grid)?);
    let direct = (0..f.n_x()).map(|m| grid.sum_nodes(|k| f.get(m, k) * (1.0 + grid.speed2(k)))).fold(0.0, f64::max);
    let homog = (distance(&f.scaled(2.0), &f, grid)? - direct).abs() / direct;
    let mut e = dff.abs() + (dfg - dgf).abs() / dfg + homog;
    if dfg > dfh + dhg {
        e += 1.0;
    }
    Ok(e / 1e-14)
}

fn tensor_sandwich() -> f64 {
    let mut failures = 0usize;
    let mut count = 0usize;
    for m in sample_moment_sets() {
        for nu in [-0.49, -0.25, 0.0, 0.5, 0.9] {
            count += 1;
            if !tensor_sandwich_check(&m.with_nu(nu)).pass {
                failures += 1;
            }
        }
    }
    failures as f64 / count as f64
}

/// Runs the suite. `fault` names an invariant whose metric is corrupted,
/// which must make that invariant fail.
pub fn run(fault: Option<&str>) -> Result<Vec<SelftestItem>> {
    if let Some(name) = fault {
        if !INVARIANTS.contains(&name) {
            return Err(Error::Config(format!("unknown invariant {name:?}; expected one of {INVARIANTS:?}")));
        }
    }
    let grid = VelocityGrid::build(&GridSpec::production())?;
    let slab = small_slab()?;
    let quad = selfcheck(&grid, 1e-8);
    let mut items = vec![
        ("quadrature", quad.max_rel_err() / 1e-8),
        ("moment-matching", moment_matching(&grid)?),
        ("nu0-collapse", nu0_collapse(&grid)? / 1e-14),
        ("positivity", positivity(&slab)?),
        ("trace-identity", trace_identity(&slab)?),
        ("distance-axioms", distance_axioms(&slab)?),
        ("tensor-sandwich", tensor_sandwich()),
    ];
    for (name, metric) in items.iter_mut() {
        if Some(*name) == fault {
            *metric += 10.0;
        }
    }
    Ok(items
        .into_iter()
        .map(|(name, metric)| {
            let tol = if name == "positivity" || name == "tensor-sandwich" { 0.0 } else { 1.0 };
            SelftestItem { name, metric, tol, pass: metric <= tol }
        })
        .collect())
}
