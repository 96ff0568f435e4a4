//! Macroscopic fields of a velocity distribution and the temperature tensor.

use serde::Serialize;

use crate::boundary::TheoremQuantities;
use crate::error::{Error, Result};
use crate::linalg::{KahanSum, Sym3};
use crate::vgrid::VelocityGrid;

/// Lower and upper eigenvalue factors of the temperature tensor relative
/// to T: min{1-ν, 1+2ν} and max{1-ν, 1+2ν}.
pub fn sandwich_constants(nu: f64) -> (f64, f64) {
    let (a, b) = (1.0 - nu, 1.0 + 2.0 * nu);
    (a.min(b), a.max(b))
}

/// Checks that ν lies in the open interval (-1/2, 1).
pub fn validate_nu(nu: f64) -> Result<()> {
    if nu.is_finite() && nu > -0.5 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("relaxation parameter nu must be in (-1/2, 1), got {nu}")))
    }
}

/// Macroscopic state at one spatial point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSet {
    pub rho: f64,
    pub u: [f64; 3],
    pub t: f64,
    pub theta: Sym3,
    pub t_nu: Sym3,
    pub nu: f64,
}

impl MomentSet {
    /// Assembles a moment set from (ρ, U, Θ); T = tr(Θ)/3 and
    /// T_ν = (1-ν)·T·Id + ν·Θ.
    pub fn from_parts(rho: f64, u: [f64; 3], theta: Sym3, nu: f64) -> Self {
        let t = theta.trace() / 3.0;
        Self { rho, u, t, theta, t_nu: temperature_tensor(t, &theta, nu), nu }
    }

    /// Isotropic state: Θ = T·Id.
    pub fn isotropic(rho: f64, u: [f64; 3], t: f64, nu: f64) -> Self {
        Self::from_parts(rho, u, Sym3::diag([t, t, t]), nu)
    }

    /// Same macroscopic state with a different relaxation parameter.
    pub fn with_nu(&self, nu: f64) -> Self {
        Self::from_parts(self.rho, self.u, self.theta, nu)
    }

    pub fn speed2_u(&self) -> f64 {
        self.u.iter().map(|x| x * x).sum()
    }
}

pub fn temperature_tensor(t: f64, theta: &Sym3, nu: f64) -> Sym3 {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = nu * theta.get(i, j);
        }
        m[i][i] += (1.0 - nu) * t;
    }
    Sym3(m)
}

/// Raw moments ∫f·(1, v, v⊗v) of one velocity slice.
#[derive(Debug, Clone, Copy)]
pub struct RawMoments {
    pub mass: f64,
    pub momentum: [f64; 3],
    /// Unique entries (xx, xy, xz, yy, yz, zz) of ∫f v⊗v.
    pub second: [f64; 6],
}

pub fn raw_moments(f: &[f64], grid: &VelocityGrid) -> Result<RawMoments> {
    if f.len() != grid.len() {
        return Err(Error::Shape { expected: grid.len(), got: f.len() });
    }
    let mut mass = KahanSum::new();
    let mut mom = [KahanSum::new(); 3];
    let mut sec = [KahanSum::new(); 6];
    for (k, &fk) in f.iter().enumerate() {
        let wf = grid.weight(k) * fk;
        let v = grid.velocity(k);
        mass.add(wf);
        for i in 0..3 {
            mom[i].add(wf * v[i]);
        }
        sec[0].add(wf * v[0] * v[0]);
        sec[1].add(wf * v[0] * v[1]);
        sec[2].add(wf * v[0] * v[2]);
        sec[3].add(wf * v[1] * v[1]);
        sec[4].add(wf * v[1] * v[2]);
        sec[5].add(wf * v[2] * v[2]);
    }
    Ok(RawMoments { mass: mass.value(), momentum: mom.map(|s| s.value()), second: sec.map(|s| s.value()) })
}

impl RawMoments {
    /// ∫f|v|².
    pub fn energy(&self) -> f64 {
        self.second[0] + self.second[3] + self.second[5]
    }
}

/// Moments of a nonnegative slice. Fails with a vacuum error if the density
/// is not positive and with a degenerate-tensor error if T_ν is not SPD.
pub fn compute_moments(f: &[f64], grid: &VelocityGrid, nu: f64) -> Result<MomentSet> {
    let raw = raw_moments(f, grid)?;
    moments_from_raw(&raw, nu, 0)
}

pub(crate) fn moments_from_raw(raw: &RawMoments, nu: f64, x_index: usize) -> Result<MomentSet> {
    let rho = raw.mass;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Vacuum { x_index, rho });
    }
    let u = raw.momentum.map(|p| p / rho);
    let s = raw.second;
    let central = [
        s[0] / rho - u[0] * u[0],
        s[1] / rho - u[0] * u[1],
        s[2] / rho - u[0] * u[2],
        s[3] / rho - u[1] * u[1],
        s[4] / rho - u[1] * u[2],
        s[5] / rho - u[2] * u[2],
    ];
    let theta = Sym3::from_upper(central);
    let m = MomentSet::from_parts(rho, u, theta, nu);
    let eig = m.t_nu.eigenvalues();
    if !(eig[0] > 0.0) {
        return Err(Error::degenerate(eig[0], m.t_nu.det()));
    }
    Ok(m)
}

/// Result of checking the eigenvalue sandwich C¹_ν·T ≤ λ(T_ν) ≤ C²_ν·T.
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub eigenvalues: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn tensor_sandwich_check(m: &MomentSet) -> SandwichReport {
    let (c1, c2) = sandwich_constants(m.nu);
    let eigenvalues = m.t_nu.eigenvalues();
    let (lower, upper) = (c1 * m.t, c2 * m.t);
    let tol = 1e-10 * m.t.abs();
    let pass = m.rho > 0.0 && eigenvalues.iter().all(|&l| l >= lower - tol && l <= upper + tol);
    SandwichReport { eigenvalues, lower, upper, tol, pass }
}

/// Bulk-velocity and temperature bounds implied by membership in the
/// solution space.
#[derive(Debug, Clone, Serialize)]
pub struct UtBoundsReport {
    pub u_norm: f64,
    pub u_max: f64,
    pub t: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Smallest of the three margins (u_max - |U|, T - t_min, t_max - T).
    pub min_margin: f64,
    pub pass: bool,
}

/// |U| ≤ (a_u + c_u)/(2a_ℓ) and γ_ℓ/(3a_u²) ≤ T ≤ c_u/(3a_ℓ).
pub fn ut_bounds_check(m: &MomentSet, q: &TheoremQuantities, gamma_l: f64) -> UtBoundsReport {
    let u_norm = m.speed2_u().sqrt();
    let u_max = (q.a_u + q.c_u) / (2.0 * q.a_l);
    let t_min = gamma_l / (3.0 * q.a_u * q.a_u);
    let t_max = q.c_u / (3.0 * q.a_l);
    let min_margin = (u_max - u_norm).min(m.t - t_min).min(t_max - m.t);
    UtBoundsReport { u_norm, u_max, t: m.t, t_min, t_max, min_margin, pass: min_margin >= 0.0 }
}
