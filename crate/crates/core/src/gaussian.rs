//! The ellipsoidal Gaussian
//! ρ/√det(2π T_ν) · exp(-(v-U)ᵀ T_ν⁻¹ (v-U)/2)
//! and diagnostics of its moment-matching, envelope and entropy properties.

use serde::Serialize;
use std::f64::consts::PI;

use crate::boundary::TheoremQuantities;
use crate::error::{Error, Result};
use crate::linalg::{KahanSum, Sym3};
use crate::moments::{sandwich_constants, MomentSet};
use crate::vgrid::VelocityGrid;

/// Floor applied to f before taking its logarithm.
pub const LOG_FLOOR: f64 = 1e-300;

/// Inverse, determinant and smallest eigenvalue of an SPD 3×3 matrix.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpdFactor {
    pub matrix: Sym3,
    pub inverse: Sym3,
    pub det: f64,
    pub min_eig: f64,
}

/// Closed-form inverse of a symmetric 3×3 matrix. The matrix is first
/// equilibrated to unit diagonal, inverted by the adjugate formula, and
/// scaled back.
pub fn spd_factor(a: &Sym3) -> Result<SpdFactor> {
    let m = &a.0;
    for i in 0..3 {
        for j in 0..3 {
            if m[i][j] != m[j][i] || !m[i][j].is_finite() {
                return Err(Error::Config("spd_factor: matrix is not symmetric and finite".into()));
            }
        }
    }
    let diag = [m[0][0], m[1][1], m[2][2]];
    let min_eig = a.eigenvalues()[0];
    if diag.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::degenerate(min_eig, a.det()));
    }
    let (inverse, det) = if a.is_diagonal() {
        (Sym3::diag(diag.map(|d| 1.0 / d)), diag[0] * diag[1] * diag[2])
    } else {
        let s = diag.map(|d| 1.0 / d.sqrt());
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = if i == j { 1.0 } else { m[i][j] * s[i] * s[j] };
            }
        }
        let det_b = Sym3(b).det();
        if !(det_b > 0.0) {
            return Err(Error::degenerate(min_eig, det_b * diag[0] * diag[1] * diag[2]));
        }
        let adj = [
            b[1][1] * b[2][2] - b[1][2] * b[1][2],
            b[0][2] * b[1][2] - b[0][1] * b[2][2],
            b[0][1] * b[1][2] - b[0][2] * b[1][1],
            b[0][0] * b[2][2] - b[0][2] * b[0][2],
            b[0][1] * b[0][2] - b[0][0] * b[1][2],
            b[0][0] * b[1][1] - b[0][1] * b[0][1],
        ];
        let inv_b = Sym3::from_upper(adj.map(|c| c / det_b));
        let mut inv = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                inv[i][j] = inv_b.0[i][j] * s[i] * s[j];
            }
        }
        (Sym3(inv), det_b * diag[0] * diag[1] * diag[2])
    };
    if !(det > 0.0) || !(min_eig > 0.0) {
        return Err(Error::degenerate(min_eig, det));
    }
    Ok(SpdFactor { matrix: *a, inverse, det, min_eig })
}

/// Precomputed evaluator for one moment set; shared across nodes.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian {
    pub prefactor: f64,
    pub u: [f64; 3],
    pub factor: SpdFactor,
}

impl Gaussian {
    pub fn new(m: &MomentSet) -> Result<Self> {
        let factor = spd_factor(&m.t_nu)?;
        let prefactor = m.rho / ((2.0 * PI).powi(3) * factor.det).sqrt();
        Ok(Self { prefactor, u: m.u, factor })
    }

    #[inline]
    pub fn at(&self, v: [f64; 3]) -> f64 {
        let d = [v[0] - self.u[0], v[1] - self.u[1], v[2] - self.u[2]];
        self.prefactor * (-0.5 * self.factor.inverse.quad_form(d)).exp()
    }

    /// ln of the value at v, without underflow.
    #[inline]
    pub fn ln_at(&self, v: [f64; 3]) -> f64 {
        let d = [v[0] - self.u[0], v[1] - self.u[1], v[2] - self.u[2]];
        self.prefactor.ln() - 0.5 * self.factor.inverse.quad_form(d)
    }

    pub fn fill(&self, grid: &VelocityGrid, out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(grid.velocities()) {
            *o = self.at(v);
        }
    }
}

/// M_ν at every node of the grid.
pub fn evaluate(m: &MomentSet, grid: &VelocityGrid) -> Result<Vec<f64>> {
    let g = Gaussian::new(m)?;
    let mut out = vec![0.0; grid.len()];
    g.fill(grid, &mut out);
    Ok(out)
}

/// Isotropic Maxwellian ρ/(2πT)^{3/2}·exp(-|v-U|²/(2T)).
pub fn maxwellian(rho: f64, u: [f64; 3], t: f64, v: [f64; 3]) -> f64 {
    let d2: f64 = (0..3).map(|i| (v[i] - u[i]).powi(2)).sum();
    rho / (2.0 * PI * t).powf(1.5) * (-d2 / (2.0 * t)).exp()
}

/// ∫(M_ν(f) - f)·(1, v, |v|²) together with the natural scales
/// (ρ, ρ, ρ, ρ, ρ(3T + |U|²)).
#[derive(Debug, Clone, Serialize)]
pub struct CancellationResidual {
    pub residual: [f64; 5],
    pub scale: [f64; 5],
}

impl CancellationResidual {
    pub fn max_relative(&self) -> f64 {
        self.residual.iter().zip(&self.scale).fold(0.0, |a, (r, s)| a.max(r.abs() / s))
    }
}

pub fn cancellation_residual(f: &[f64], m: &MomentSet, grid: &VelocityGrid) -> Result<CancellationResidual> {
    if f.len() != grid.len() {
        return Err(Error::Shape { expected: grid.len(), got: f.len() });
    }
    let g = Gaussian::new(m)?;
    let mut acc = [KahanSum::new(); 5];
    for k in 0..grid.len() {
        let v = grid.velocity(k);
        let d = grid.weight(k) * (g.at(v) - f[k]);
        acc[0].add(d);
        acc[1].add(d * v[0]);
        acc[2].add(d * v[1]);
        acc[3].add(d * v[2]);
        acc[4].add(d * grid.speed2(k));
    }
    let e = m.rho * (3.0 * m.t + m.speed2_u());
    Ok(CancellationResidual { residual: acc.map(|a| a.value()), scale: [m.rho, m.rho, m.rho, m.rho, e] })
}

/// Pointwise envelope M_ν(1+|v|²) ≤ A·exp(-B|v|²), checked in log form.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    /// B = 1/(4·C²_ν·T_max), T_max = c_u/(3a_ℓ).
    pub b: f64,
    /// ln A with A built from the uniform bounds on ρ, |U| and T.
    pub ln_a: f64,
    pub min_log_slack: f64,
    pub max_log_slack: f64,
    /// Same envelope with constants from this moment set's own (ρ, U, T).
    pub local_b: f64,
    pub local_ln_a: f64,
    pub local_min_log_slack: f64,
    pub pass: bool,
}

/// ln sup_{s≥0} (1+s)·e^{-βs}.
fn ln_poly_exp_sup(beta: f64) -> f64 {
    if beta >= 1.0 {
        0.0
    } else {
        beta - 1.0 - beta.ln()
    }
}

fn envelope_ln_a(rho: f64, u2: f64, t_lo: f64, t_hi: f64, c1: f64, c2: f64) -> f64 {
    rho.ln() - 1.5 * (2.0 * PI * c1 * t_lo).ln()
        + 3.0 * u2 / (2.0 * c2 * t_lo)
        + ln_poly_exp_sup(1.0 / (8.0 * c2 * t_hi))
}

pub fn envelope_check(m: &MomentSet, grid: &VelocityGrid, q: &TheoremQuantities) -> Result<EnvelopeReport> {
    let g = Gaussian::new(m)?;
    let (c1, c2) = sandwich_constants(m.nu);
    let t_max = q.c_u / (3.0 * q.a_l);
    let t_min = q.gamma_l / (3.0 * q.a_u * q.a_u);
    let u_max = (q.a_u + q.c_u) / (2.0 * q.a_l);
    let b = 1.0 / (4.0 * c2 * t_max);
    let ln_a = envelope_ln_a(q.a_u, u_max * u_max, t_min, t_max, c1, c2);
    let local_b = 1.0 / (4.0 * c2 * m.t);
    let local_ln_a = envelope_ln_a(m.rho, m.speed2_u(), m.t, m.t, c1, c2);

    let (mut lo, mut hi, mut local_lo) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for (k, &v) in grid.velocities().iter().enumerate() {
        let s2 = grid.speed2(k);
        let lhs = g.ln_at(v) + (1.0 + s2).ln();
        let slack = ln_a - b * s2 - lhs;
        lo = lo.min(slack);
        hi = hi.max(slack);
        local_lo = local_lo.min(local_ln_a - local_b * s2 - lhs);
    }
    Ok(EnvelopeReport {
        b,
        ln_a,
        min_log_slack: lo,
        max_log_slack: hi,
        local_b,
        local_ln_a,
        local_min_log_slack: local_lo,
        pass: lo >= 0.0 && lo.is_finite(),
    })
}

/// ∫(M_ν(f) - f)·ln f dv, with ln f floored at ln(1e-300).
pub fn entropy_production(f: &[f64], m: &MomentSet, grid: &VelocityGrid) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::Shape { expected: grid.len(), got: f.len() });
    }
    let g = Gaussian::new(m)?;
    Ok(grid.sum_nodes(|k| (g.at(grid.velocity(k)) - f[k]) * f[k].max(LOG_FLOOR).ln()))
}
