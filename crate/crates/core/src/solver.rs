//! Spatial discretization, the solution map Φ and the Picard iteration.
//!
//! Φ freezes the density and the ellipsoidal Gaussian of its input and
//! integrates the linear transport equation along each characteristic.
//! On a cell [x_m, x_{m+1}] the optical depth is linear (trapezoid rule on
//! ρ) and the source ρ·M_ν is interpolated linearly, so the cell update is
//! exact for that data:
//!
//! ```text
//! out[m+1] = e^{-μ}·out[m] + κ·(φa(μ)·g[m] + φb(μ)·g[m+1]),
//! μ = dx·(ρ[m] + ρ[m+1]) / (2τ|v₁|),   κ = dx / (τ|v₁|),
//! φa(μ) = (1 - e^{-μ}(1 + μ)) / μ²,     φb(μ) = (μ - 1 + e^{-μ}) / μ².
//! ```
//!
//! Every coefficient is nonnegative, so Φ preserves positivity node by node.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::boundary::{theorem_quantities, BoundaryData, TheoremQuantities};
use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::moments::{moments_from_raw, raw_moments, validate_nu, MomentSet, RawMoments};
use crate::vgrid::VelocityGrid;

/// Relative tolerance of the Ω comparisons.
pub const OMEGA_REL_TOL: f64 = 1e-8;

/// Uniform grid on [0, 1] including both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpatialGrid {
    n_x: usize,
    dx: f64,
}

impl SpatialGrid {
    pub fn new(n_x: usize) -> Result<Self> {
        if n_x < 2 {
            return Err(Error::Config(format!("n_x must be at least 2, got {n_x}")));
        }
        Ok(Self { n_x, dx: 1.0 / (n_x - 1) as f64 })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn node(&self, m: usize) -> f64 {
        if m + 1 == self.n_x {
            1.0
        } else {
            m as f64 * self.dx
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_x).map(|m| self.node(m)).collect()
    }
}

/// f(x_m, v_k), stored x-major: `values[m * n_v + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    n_x: usize,
    n_v: usize,
    values: Vec<f64>,
}

impl DistributionField {
    pub fn new(n_x: usize, n_v: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_x * n_v {
            return Err(Error::Shape { expected: n_x * n_v, got: values.len() });
        }
        Ok(Self { n_x, n_v, values })
    }

    pub fn zeros(n_x: usize, n_v: usize) -> Self {
        Self { n_x, n_v, values: vec![0.0; n_x * n_v] }
    }

    /// The same slice at every spatial node.
    pub fn constant(n_x: usize, slice: &[f64]) -> Self {
        let mut values = Vec::with_capacity(n_x * slice.len());
        for _ in 0..n_x {
            values.extend_from_slice(slice);
        }
        Self { n_x, n_v: slice.len(), values }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn slice(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_v..(m + 1) * self.n_v]
    }

    pub fn slice_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.values[m * self.n_v..(m + 1) * self.n_v]
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.values[m * self.n_v + k]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { n_x: self.n_x, n_v: self.n_v, values: self.values.iter().map(|x| x * s).collect() }
    }

    fn check_grid(&self, grid: &VelocityGrid) -> Result<()> {
        if self.n_v != grid.len() {
            return Err(Error::Shape { expected: grid.len(), got: self.n_v });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaEnforce {
    #[default]
    Strict,
    Warn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    pub kappa: f64,
    pub nu: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub omega_enforce: OmegaEnforce,
}

impl SolverConfig {
    pub fn new(kappa: f64, nu: f64) -> Result<Self> {
        let cfg = Self { kappa, nu, tol: 1e-10, max_iter: 200, omega_enforce: OmegaEnforce::Strict };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration with τ fixed directly; κ = τ/(1-ν).
    pub fn from_tau(tau: f64, nu: f64) -> Result<Self> {
        validate_nu(nu)?;
        Self::new(tau / (1.0 - nu), nu)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_enforce(mut self, e: OmegaEnforce) -> Self {
        self.omega_enforce = e;
        self
    }

    pub fn tau(&self) -> f64 {
        self.kappa * (1.0 - self.nu)
    }

    pub fn validate(&self) -> Result<()> {
        validate_nu(self.nu)?;
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.tau() > 0.0) {
            return Err(Error::Config(format!("tau = kappa(1-nu) must be positive, got {}", self.tau())));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything one Φ application needs, fixed for a run.
#[derive(Debug, Clone)]
pub struct Slab {
    pub grid: VelocityGrid,
    pub x: SpatialGrid,
    pub boundary: BoundaryData,
    pub f_lr: Vec<f64>,
    pub quantities: TheoremQuantities,
    pub cfg: SolverConfig,
}

impl Slab {
    pub fn new(grid: VelocityGrid, n_x: usize, boundary: BoundaryData, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let x = SpatialGrid::new(n_x)?;
        let f_lr = boundary.sample(&grid)?;
        let quantities = theorem_quantities(&boundary, cfg.tau(), &grid)?;
        Ok(Self { grid, x, boundary, f_lr, quantities, cfg })
    }

    /// Same data and grids with a different solver configuration.
    pub fn with_config(&self, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let quantities = theorem_quantities(&self.boundary, cfg.tau(), &self.grid)?;
        Ok(Self { cfg, quantities, ..self.clone() })
    }

    pub fn tau(&self) -> f64 {
        self.cfg.tau()
    }
}

/// Source term used by Φ. `Zero` drops the Gaussian and keeps only the
/// attenuated inflow; it exists for testing the transport part alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Gaussian,
    Zero,
}

const SERIES_CUTOFF: f64 = 0.5;

/// The cell weights (φa, φb) of the upstream and downstream source values.
pub fn cell_weights(mu: f64) -> (f64, f64) {
    if mu < SERIES_CUTOFF {
        // Alternating series; 18 terms reach roundoff for μ < 0.5.
        let (mut a, mut b) = (0.0, 0.0);
        let mut pow = 1.0;
        let mut fact = 2.0;
        for n in 2..20u32 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            a += sign * (n - 1) as f64 / fact * pow;
            b += sign / fact * pow;
            pow *= mu;
            fact *= (n + 1) as f64;
        }
        (a, b)
    } else {
        let e = (-mu).exp();
        let mu2 = mu * mu;
        ((1.0 - e * (1.0 + mu)) / mu2, (mu - 1.0 + e) / mu2)
    }
}

/// Raw moments of every spatial slice.
pub fn field_raw_moments(f: &DistributionField, grid: &VelocityGrid) -> Result<Vec<RawMoments>> {
    f.check_grid(grid)?;
    (0..f.n_x()).into_par_iter().map(|m| raw_moments(f.slice(m), grid)).collect()
}

/// Moment sets of every spatial slice.
pub fn field_moments(f: &DistributionField, grid: &VelocityGrid, nu: f64) -> Result<Vec<MomentSet>> {
    let raw = field_raw_moments(f, grid)?;
    raw.iter().enumerate().map(|(m, r)| moments_from_raw(r, nu, m)).collect()
}

/// Φ(f).
pub fn apply_phi(f: &DistributionField, slab: &Slab) -> Result<DistributionField> {
    apply_phi_with(f, slab, Source::Gaussian)
}

pub fn apply_phi_with(f: &DistributionField, slab: &Slab, source: Source) -> Result<DistributionField> {
    let raw = field_raw_moments(f, &slab.grid)?;
    phi_from_raw(&raw, slab, source)
}

fn phi_from_raw(raw: &[RawMoments], slab: &Slab, source: Source) -> Result<DistributionField> {
    let grid = &slab.grid;
    let (nx, nv) = (slab.x.n_x(), grid.len());
    if raw.len() != nx {
        return Err(Error::Shape { expected: nx, got: raw.len() });
    }
    let nu = slab.cfg.nu;
    let tau = slab.tau();
    let dx = slab.x.dx();
    let moments: Vec<MomentSet> =
        raw.iter().enumerate().map(|(m, r)| moments_from_raw(r, nu, m)).collect::<Result<_>>()?;

    let mut src = vec![0.0; nx * nv];
    if source == Source::Gaussian {
        src.par_chunks_mut(nv).zip(moments.par_iter()).try_for_each(|(row, m)| -> Result<()> {
            let g = Gaussian::new(m)?;
            g.fill(grid, row);
            row.iter_mut().for_each(|x| *x *= m.rho);
            Ok(())
        })?;
    }

    // Per-(v₁ node, cell) coefficients [E, κφa, κφb].
    let n1 = grid.nodes_v1.len();
    let ncell = nx - 1;
    let mut coef = vec![[0.0; 3]; n1 * ncell];
    for (i, &v1) in grid.nodes_v1.iter().enumerate() {
        let speed = tau * v1.abs();
        for m in 0..ncell {
            let mu = 0.5 * dx * (moments[m].rho + moments[m + 1].rho) / speed;
            let kap = dx / speed;
            let (a, b) = cell_weights(mu);
            coef[i * ncell + m] = [(-mu).exp(), kap * a, kap * b];
        }
    }

    // Sweep into a v-major scratch array, one characteristic per chunk.
    let line = grid.line_len();
    let f_lr = &slab.f_lr;
    let mut sweep = vec![0.0; nv * nx];
    sweep.par_chunks_mut(nx).enumerate().for_each(|(k, col)| {
        let i = k / line;
        let c = &coef[i * ncell..(i + 1) * ncell];
        if grid.nodes_v1[i] > 0.0 {
            col[0] = f_lr[k];
            for m in 0..ncell {
                let [e, a, b] = c[m];
                col[m + 1] = e * col[m] + a * src[m * nv + k] + b * src[(m + 1) * nv + k];
            }
        } else {
            col[nx - 1] = f_lr[k];
            for m in (0..ncell).rev() {
                let [e, a, b] = c[m];
                col[m] = e * col[m + 1] + a * src[(m + 1) * nv + k] + b * src[m * nv + k];
            }
        }
    });

    let mut out = vec![0.0; nx * nv];
    out.par_chunks_mut(nv).enumerate().for_each(|(m, row)| {
        for (k, o) in row.iter_mut().enumerate() {
            *o = sweep[k * nx + m];
        }
    });
    DistributionField::new(nx, nv, out)
}

/// sup over x of ∫|f - g|(1 + |v|²) dv.
pub fn distance(f: &DistributionField, g: &DistributionField, grid: &VelocityGrid) -> Result<f64> {
    f.check_grid(grid)?;
    if f.n_x() != g.n_x() || f.n_v() != g.n_v() {
        return Err(Error::Shape { expected: f.values.len(), got: g.values.len() });
    }
    let per_x: Vec<f64> = (0..f.n_x())
        .into_par_iter()
        .map(|m| {
            let (a, b) = (f.slice(m), g.slice(m));
            grid.sum_nodes(|k| (a[k] - b[k]).abs() * (1.0 + grid.speed2(k)))
        })
        .collect();
    Ok(per_x.into_iter().fold(0.0, f64::max))
}

/// Per-condition worst margins of the solution-space membership test.
/// Margins are signed: negative means violated before tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct OmegaReport {
    /// (A)
    pub min_value: f64,
    pub min_value_x: usize,
    pub nonnegative: bool,
    /// (B): min over x of ρ - a_l, a_u - ρ, E - c_l, c_u - E with E = ∫f|v|².
    pub rho_lower_margin: f64,
    pub rho_upper_margin: f64,
    pub energy_lower_margin: f64,
    pub energy_upper_margin: f64,
    pub bounds_x: usize,
    pub rho_tol: f64,
    pub energy_tol: f64,
    pub bounds: bool,
    /// (C): min over x of ρ·E - |∫fv|² - γ_l.
    pub gamma_margin: f64,
    pub gamma_x: usize,
    pub gamma_tol: f64,
    pub gamma: bool,
    pub pass: bool,
}

impl OmegaReport {
    /// Name and margin of the first failed condition, if any.
    pub fn failed_condition(&self) -> Option<String> {
        if !self.nonnegative {
            return Some(format!("(A) nonnegativity: min value {:e} at x index {}", self.min_value, self.min_value_x));
        }
        if !self.bounds {
            let worst = [
                ("rho >= a_l", self.rho_lower_margin, self.rho_tol),
                ("rho <= a_u", self.rho_upper_margin, self.rho_tol),
                ("energy >= c_l", self.energy_lower_margin, self.energy_tol),
                ("energy <= c_u", self.energy_upper_margin, self.energy_tol),
            ]
            .into_iter()
            .find(|(_, m, t)| *m < -t)
            .map(|(n, m, _)| format!("{n} (margin {m:e})"))
            .unwrap_or_default();
            return Some(format!("(B) bounds: {worst} near x index {}", self.bounds_x));
        }
        if !self.gamma {
            return Some(format!(
                "(C) rho*E - |J|^2 >= gamma_l: margin {:e} at x index {}",
                self.gamma_margin, self.gamma_x
            ));
        }
        None
    }
}

fn omega_from_raw(raw: &[RawMoments], f: &DistributionField, q: &TheoremQuantities) -> OmegaReport {
    let (min_value, min_value_x) = (0..f.n_x())
        .map(|m| (f.slice(m).iter().copied().fold(f64::INFINITY, f64::min), m))
        .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a });
    let mut r = OmegaReport {
        min_value,
        min_value_x,
        nonnegative: min_value >= 0.0,
        rho_lower_margin: f64::INFINITY,
        rho_upper_margin: f64::INFINITY,
        energy_lower_margin: f64::INFINITY,
        energy_upper_margin: f64::INFINITY,
        bounds_x: 0,
        rho_tol: OMEGA_REL_TOL * q.a_u,
        energy_tol: OMEGA_REL_TOL * q.c_u,
        bounds: true,
        gamma_margin: f64::INFINITY,
        gamma_x: 0,
        gamma_tol: OMEGA_REL_TOL * q.a_u * q.c_u,
        gamma: true,
        pass: true,
    };
    let mut worst_b = f64::INFINITY;
    for (m, rm) in raw.iter().enumerate() {
        let rho = rm.mass;
        let e = rm.energy();
        let margins = [rho - q.a_l, q.a_u - rho, e - q.c_l, q.c_u - e];
        r.rho_lower_margin = r.rho_lower_margin.min(margins[0]);
        r.rho_upper_margin = r.rho_upper_margin.min(margins[1]);
        r.energy_lower_margin = r.energy_lower_margin.min(margins[2]);
        r.energy_upper_margin = r.energy_upper_margin.min(margins[3]);
        let normalized = (margins[0] / r.rho_tol)
            .min(margins[1] / r.rho_tol)
            .min(margins[2] / r.energy_tol)
            .min(margins[3] / r.energy_tol);
        if normalized < worst_b {
            worst_b = normalized;
            r.bounds_x = m;
        }
        let j2: f64 = rm.momentum.iter().map(|p| p * p).sum();
        let g = rho * e - j2 - q.gamma_l;
        if g < r.gamma_margin {
            r.gamma_margin = g;
            r.gamma_x = m;
        }
    }
    let nan = |x: f64| x.is_nan();
    r.bounds = worst_b >= -1.0 && !nan(worst_b);
    r.gamma = r.gamma_margin >= -r.gamma_tol && !nan(r.gamma_margin);
    r.pass = r.nonnegative && r.bounds && r.gamma;
    r
}

/// Checks (A), (B), (C) at every spatial node. Never fails.
pub fn omega_membership(f: &DistributionField, grid: &VelocityGrid, q: &TheoremQuantities) -> OmegaReport {
    match field_raw_moments(f, grid) {
        Ok(raw) => omega_from_raw(&raw, f, q),
        Err(_) => {
            let nan_raw = vec![RawMoments { mass: f64::NAN, momentum: [f64::NAN; 3], second: [f64::NAN; 6] }; f.n_x()];
            let mut r = omega_from_raw(&nan_raw, f, q);
            r.nonnegative = false;
            r.pass = false;
            r
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// f₀(x, v) = f_LR(v).
    Constant,
    /// f₀ = e^{-a_u·x/(τ v₁)}·f_L for v₁ > 0 and the mirror for v₁ < 0.
    Attenuated,
}

pub fn initial_field(slab: &Slab, kind: InitialKind) -> DistributionField {
    let grid = &slab.grid;
    match kind {
        InitialKind::Constant => DistributionField::constant(slab.x.n_x(), &slab.f_lr),
        InitialKind::Attenuated => {
            let (nx, nv) = (slab.x.n_x(), grid.len());
            let scale = slab.quantities.a_u / slab.tau();
            let mut out = DistributionField::zeros(nx, nv);
            for m in 0..nx {
                let x = slab.x.node(m);
                let row = out.slice_mut(m);
                for (k, o) in row.iter_mut().enumerate() {
                    let v1 = grid.velocity(k)[0];
                    let depth = if v1 > 0.0 { x } else { 1.0 - x };
                    *o = (-scale * depth / v1.abs()).exp() * slab.f_lr[k];
                }
            }
            out
        }
    }
}

/// The constant extension if it lies in Ω, otherwise the attenuated one.
pub fn initial_iterate(slab: &Slab) -> Result<(DistributionField, InitialKind)> {
    for kind in [InitialKind::Constant, InitialKind::Attenuated] {
        let f0 = initial_field(slab, kind);
        let rep = omega_membership(&f0, &slab.grid, &slab.quantities);
        if rep.pass {
            return Ok((f0, kind));
        }
        log::info!("initial iterate {kind:?} rejected: {}", rep.failed_condition().unwrap_or_default());
    }
    Err(Error::Inadmissible("neither the constant nor the attenuated extension lies in the solution space".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub initial: InitialKind,
    pub iterations: usize,
    /// d(f_{n+1}, f_n) for n = 0, 1, ...
    pub distances: Vec<f64>,
    /// distances[n+1] / distances[n] where distances[n] > 0.
    pub alphas: Vec<f64>,
    pub converged: bool,
    /// Membership report of every iterate f_1, f_2, ...
    pub omega_reports: Vec<OmegaReport>,
    /// Stopping threshold tol·(1 + d(f_1, f_0)).
    pub threshold: f64,
    /// d(Φ(f*), f*) of the returned field.
    pub mild_residual: f64,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn max_alpha(&self) -> f64 {
        self.alphas.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn omega_all_pass(&self) -> bool {
        self.omega_reports.iter().all(|r| r.pass)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: DistributionField,
    pub moments: Vec<MomentSet>,
    pub report: SolveReport,
}

fn alphas_of(d: &[f64]) -> Vec<f64> {
    d.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
}

/// Picard iteration from the default initial iterate.
pub fn solve(slab: &Slab) -> Result<Solution> {
    let (f0, kind) = initial_iterate(slab)?;
    solve_from(slab, f0, kind)
}

/// Picard iteration from a given initial iterate.
pub fn solve_from(slab: &Slab, f0: DistributionField, initial: InitialKind) -> Result<Solution> {
    let start = Instant::now();
    let grid = &slab.grid;
    let q = &slab.quantities;
    let cfg = &slab.cfg;
    let mut f = f0;
    let mut raw = field_raw_moments(&f, grid)?;
    let mut distances = Vec::new();
    let mut omega_reports = Vec::new();
    let mut threshold = f64::INFINITY;
    for n in 0..cfg.max_iter {
        let next = phi_from_raw(&raw, slab, Source::Gaussian)?;
        let d = distance(&next, &f, grid)?;
        let next_raw = field_raw_moments(&next, grid)?;
        let omega = omega_from_raw(&next_raw, &next, q);
        if !omega.pass {
            let condition = omega.failed_condition().unwrap_or_default();
            match cfg.omega_enforce {
                OmegaEnforce::Strict => {
                    return Err(Error::TauTooSmall { iteration: n + 1, condition });
                }
                OmegaEnforce::Warn => log::warn!("iterate {} left the solution space: {condition}", n + 1),
            }
        }
        omega_reports.push(omega);
        distances.push(d);
        if n == 0 {
            threshold = cfg.tol * (1.0 + d);
        }
        f = next;
        raw = next_raw;
        if !d.is_finite() {
            break;
        }
        if d <= threshold {
            let residual_field = phi_from_raw(&raw, slab, Source::Gaussian)?;
            let mild_residual = distance(&residual_field, &f, grid)?;
            let moments = raw.iter().enumerate().map(|(m, r)| moments_from_raw(r, cfg.nu, m)).collect::<Result<_>>()?;
            let report = SolveReport {
                initial,
                iterations: n + 1,
                alphas: alphas_of(&distances),
                distances,
                converged: true,
                omega_reports,
                threshold,
                mild_residual,
                wall_time_s: start.elapsed().as_secs_f64(),
            };
            return Ok(Solution { field: f, moments, report });
        }
    }
    Err(Error::NonConvergence {
        iterations: distances.len(),
        last_distance: distances.last().copied().unwrap_or(f64::NAN),
        alphas: alphas_of(&distances),
    })
}

/// Sidecar describing a binary field dump.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldLayout {
    pub dtype: String,
    pub order: Vec<String>,
    pub shape: [usize; 4],
    pub x: Vec<f64>,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub v3: Vec<f64>,
}

/// Writes the field as little-endian f64 in (x, v₁, v₂, v₃) row-major
/// order, with a JSON sidecar.
pub fn dump_field(
    f: &DistributionField,
    x: &SpatialGrid,
    grid: &VelocityGrid,
    bin_path: &Path,
    json_path: &Path,
) -> Result<()> {
    f.check_grid(grid)?;
    let mut bytes = Vec::with_capacity(8 * f.values.len());
    for v in &f.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(bin_path, bytes)?;
    let c = grid.counts();
    let layout = FieldLayout {
        dtype: "float64-le".into(),
        order: ["x", "v1", "v2", "v3"].map(String::from).to_vec(),
        shape: [x.n_x(), c[0], c[1], c[2]],
        x: x.nodes(),
        v1: grid.nodes_v1.clone(),
        v2: grid.nodes_v2.clone(),
        v3: grid.nodes_v3.clone(),
    };
    std::fs::write(json_path, serde_json::to_string_pretty(&layout)?)?;
    Ok(())
}

/// Reads a dump written by [`dump_field`].
pub fn load_field(bin_path: &Path, json_path: &Path) -> Result<(DistributionField, FieldLayout)> {
    let layout: FieldLayout = serde_json::from_str(&std::fs::read_to_string(json_path)?)?;
    let bytes = std::fs::read(bin_path)?;
    let n_v = layout.shape[1] * layout.shape[2] * layout.shape[3];
    if bytes.len() != 8 * layout.shape[0] * n_v {
        return Err(Error::Shape { expected: layout.shape[0] * n_v, got: bytes.len() / 8 });
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((DistributionField::new(layout.shape[0], n_v, values)?, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgrid::{GridSpec, Rule};

    fn small_slab(tau: f64, nu: f64) -> Slab {
        let b = BoundaryData::remark4_family(1.0, 1.0, 1.0, 2.0).unwrap();
        let spec = GridSpec::new([12, 8, 8], 6.0, 0.0, Rule::GaussLegendre).with_breakpoints(&b.breakpoints());
        let grid = VelocityGrid::build(&spec).unwrap();
        Slab::new(grid, 9, b, SolverConfig::from_tau(tau, nu).unwrap()).unwrap()
    }

    #[test]
    fn spatial_grid_endpoints() {
        let x = SpatialGrid::new(7).unwrap();
        assert_eq!(x.node(0), 0.0);
        assert_eq!(x.node(6), 1.0);
        assert!(x.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(SpatialGrid::new(1).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(1.0, 1.0).is_err());
        assert!(SolverConfig::new(-1.0, 0.0).is_err());
        assert!(SolverConfig::new(1.0, 0.0).unwrap().with_tol(0.0).validate().is_err());
        let c = SolverConfig::from_tau(10.0, 0.5).unwrap();
        assert!((c.kappa - 20.0).abs() < 1e-12 && (c.tau() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn cell_weights_branches_agree() {
        for mu in [1e-8, 1e-3, 0.05, 0.4999999, 0.5, 0.7, 3.0, 40.0] {
            let (a, b) = cell_weights(mu);
            // φa + φb = (1 - e^{-μ})/μ
            let total = -(-mu).exp_m1() / mu;
            assert!((a + b - total).abs() < 1e-14, "mu {mu}");
            assert!(a > 0.0 && b > 0.0);
        }
        let (a0, b0) = cell_weights(0.0);
        assert_eq!((a0, b0), (0.5, 0.5));
        let mu = 0.49;
        let (a, b) = cell_weights(mu);
        let e = (-mu).exp();
        assert!((a - (1.0 - e * (1.0 + mu)) / (mu * mu)).abs() < 1e-14);
        assert!((b - (mu - 1.0 + e) / (mu * mu)).abs() < 1e-14);
    }

    #[test]
    fn boundary_traces_hold_exactly() {
        let slab = small_slab(20.0, 0.0);
        let f0 = initial_field(&slab, InitialKind::Constant);
        let out = apply_phi(&f0, &slab).unwrap();
        let last = slab.x.n_x() - 1;
        for k in 0..slab.grid.len() {
            if slab.grid.velocity(k)[0] > 0.0 {
                assert_eq!(out.get(0, k), slab.f_lr[k]);
            } else {
                assert_eq!(out.get(last, k), slab.f_lr[k]);
            }
            for m in 0..=last {
                assert!(out.get(m, k) >= 0.0);
            }
        }
    }

    #[test]
    fn zero_source_is_pure_attenuation() {
        let slab = small_slab(5.0, 0.0);
        let a = 3.0;
        let n_v = slab.grid.len();
        // constant density a: scale a normalized Maxwellian slice
        let mw = slab.grid.sample(|v| crate::gaussian::maxwellian(a, [0.0; 3], 1.0, v));
        let rho = slab.grid.integrate(&mw, crate::vgrid::Weight::One).unwrap();
        let mw: Vec<f64> = mw.iter().map(|x| x * a / rho).collect();
        let f = DistributionField::constant(slab.x.n_x(), &mw);
        let out = apply_phi_with(&f, &slab, Source::Zero).unwrap();
        for m in 0..slab.x.n_x() {
            let x = slab.x.node(m);
            for k in 0..n_v {
                let v1 = slab.grid.velocity(k)[0];
                let depth = if v1 > 0.0 { x } else { 1.0 - x };
                let exact = (-a * depth / (slab.tau() * v1.abs())).exp() * slab.f_lr[k];
                assert!((out.get(m, k) - exact).abs() <= 1e-13 * exact.max(1e-300));
            }
        }
    }

    #[test]
    fn distance_axioms() {
        let slab = small_slab(20.0, 0.0);
        let f = initial_field(&slab, InitialKind::Attenuated);
        assert_eq!(distance(&f, &f, &slab.grid).unwrap(), 0.0);
        let d = distance(&f.scaled(2.0), &f, &slab.grid).unwrap();
        let direct = (0..slab.x.n_x())
            .map(|m| slab.grid.sum_nodes(|k| f.get(m, k) * (1.0 + slab.grid.speed2(k))))
            .fold(0.0, f64::max);
        assert!((d - direct).abs() <= 1e-14 * direct);
        let g = DistributionField::zeros(2, slab.grid.len());
        assert!(matches!(distance(&f, &g, &slab.grid), Err(Error::Shape { .. })));
    }

    #[test]
    fn omega_detects_constructed_violations() {
        let slab = small_slab(100.0, 0.0);
        let (f0, kind) = initial_iterate(&slab).unwrap();
        assert_eq!(kind, InitialKind::Constant);
        assert!(omega_membership(&f0, &slab.grid, &slab.quantities).pass);
        let big = omega_membership(&f0.scaled(10.0), &slab.grid, &slab.quantities);
        assert!(!big.bounds && big.rho_upper_margin < 0.0);
        let mut neg = f0.clone();
        neg.values_mut()[5] = -1e-3;
        let r = omega_membership(&neg, &slab.grid, &slab.quantities);
        assert!(!r.nonnegative && !r.pass);
        assert!(r.failed_condition().unwrap().starts_with("(A)"));
    }

    #[test]
    fn attenuated_start_satisfies_bounds() {
        let slab = small_slab(3.0, 0.0);
        let f = initial_field(&slab, InitialKind::Attenuated);
        let r = omega_membership(&f, &slab.grid, &slab.quantities);
        assert!(r.nonnegative && r.bounds, "{r:?}");
    }

    #[test]
    fn small_problem_converges() {
        let slab = small_slab(50.0, 0.0);
        let sol = solve(&slab).unwrap();
        let rep = &sol.report;
        assert!(rep.converged && rep.omega_all_pass());
        assert!(rep.max_alpha() < 1.0);
        assert!(rep.mild_residual <= 2.0 * rep.threshold);
    }

    #[test]
    fn tiny_tau_is_reported_not_hidden() {
        let slab =
            small_slab(1e-3, 0.0).with_config(SolverConfig::from_tau(1e-3, 0.0).unwrap().with_max_iter(50)).unwrap();
        let err = solve(&slab).unwrap_err();
        assert!(
            matches!(err, Error::TauTooSmall { .. } | Error::NonConvergence { .. } | Error::Inadmissible(_)),
            "{err}"
        );
    }

    #[test]
    fn dump_round_trip() {
        let slab = small_slab(20.0, 0.0);
        let f = initial_field(&slab, InitialKind::Attenuated);
        let dir = std::env::temp_dir().join(format!("esbgk-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (b, j) = (dir.join("field.bin"), dir.join("field.json"));
        dump_field(&f, &slab.x, &slab.grid, &b, &j).unwrap();
        let (g, layout) = load_field(&b, &j).unwrap();
        assert_eq!(g, f);
        assert_eq!(layout.shape, [9, 12, 8, 8]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
