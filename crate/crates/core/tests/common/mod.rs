//! Shared test helpers: a brute-force evaluation of the solution map and
//! random generators.
#![allow(dead_code)]

use esbgk::boundary::BoundaryData;
use esbgk::solver::{apply_phi, DistributionField, Slab, SolverConfig};
use esbgk::vgrid::{GridSpec, Rule, VelocityGrid};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Gauss–Legendre rule on [0, 1], by Newton iteration on P_n.
pub fn gl01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        out.push((0.5 * (1.0 - z), 0.5 * w));
    }
    out
}

/// One velocity slice's macroscopic state, computed with nalgebra.
pub struct OracleState {
    pub rho: f64,
    pub u: Vector3<f64>,
    pub t_nu: Matrix3<f64>,
}

pub fn oracle_state(f: &[f64], nodes: &[[f64; 3]], weights: &[f64], nu: f64) -> OracleState {
    let mut rho = 0.0;
    let mut j = Vector3::zeros();
    let mut s = Matrix3::zeros();
    for ((fk, v), w) in f.iter().zip(nodes).zip(weights) {
        let v = Vector3::new(v[0], v[1], v[2]);
        rho += w * fk;
        j += *w * *fk * v;
        s += *w * *fk * v * v.transpose();
    }
    let u = j / rho;
    let theta = s / rho - u * u.transpose();
    let t = theta.trace() / 3.0;
    let t_nu = (1.0 - nu) * t * Matrix3::identity() + nu * theta;
    OracleState { rho, u, t_nu }
}

/// M_ν at v for the given state.
pub fn oracle_gaussian(st: &OracleState, v: [f64; 3]) -> f64 {
    let inv = st.t_nu.try_inverse().expect("T_nu invertible");
    let det = st.t_nu.determinant();
    let d = Vector3::new(v[0], v[1], v[2]) - st.u;
    let q = (d.transpose() * inv * d)[(0, 0)];
    st.rho / ((2.0 * PI).powi(3) * det).sqrt() * (-0.5 * q).exp()
}

/// A spatial profile given by nodal values, with the density interpreted
/// cellwise by its trapezoid average and the source interpolated linearly.
pub struct Profiles {
    pub xs: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Profiles {
    /// ∫_a^b ρ̄ for a ≤ b.
    pub fn depth(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for c in 0..self.xs.len() - 1 {
            let (l, r) = (self.xs[c].max(a), self.xs[c + 1].min(b));
            if r > l {
                total += (r - l) * 0.5 * (self.rho[c] + self.rho[c + 1]);
            }
        }
        total
    }
}

/// Direct nested-quadrature evaluation of the solution map on the inflow
/// formulation: for v₁ > 0,
///   Φf(x) = e^{-D(0,x)/(τ v₁)} f_L + ∫₀ˣ e^{-D(y,x)/(τ v₁)} ρ(y) M(y) / (τ v₁) dy,
/// and the mirror for v₁ < 0.
pub fn oracle_phi(
    f: &[Vec<f64>],
    f_lr: &[f64],
    nodes: &[[f64; 3]],
    weights: &[f64],
    tau: f64,
    nu: f64,
) -> Vec<Vec<f64>> {
    let n_x = f.len();
    let xs: Vec<f64> = (0..n_x).map(|m| m as f64 / (n_x - 1) as f64).collect();
    let states: Vec<OracleState> = f.iter().map(|s| oracle_state(s, nodes, weights, nu)).collect();
    let prof = Profiles { xs: xs.clone(), rho: states.iter().map(|s| s.rho).collect() };
    let src: Vec<Vec<f64>> =
        states.iter().map(|s| nodes.iter().map(|&v| s.rho * oracle_gaussian(s, v)).collect()).collect();
    let rule = gl01(24);
    let mut out = vec![vec![0.0; nodes.len()]; n_x];
    for (k, v) in nodes.iter().enumerate() {
        let speed = tau * v[0].abs();
        for (m, &x) in xs.iter().enumerate() {
            let (lo, hi) = if v[0] > 0.0 { (0.0, x) } else { (x, 1.0) };
            let atten = |y: f64| {
                if v[0] > 0.0 {
                    (-prof.depth(y, x) / speed).exp()
                } else {
                    (-prof.depth(x, y) / speed).exp()
                }
            };
            let mut acc = atten(if v[0] > 0.0 { 0.0 } else { 1.0 }) * f_lr[k];
            for c in 0..n_x - 1 {
                let (a, b) = (xs[c].max(lo), xs[c + 1].min(hi));
                if b <= a {
                    continue;
                }
                let h = xs[c + 1] - xs[c];
                // sub-panels keep the kernel resolved at large optical depth
                let sub = 64;
                let len = (b - a) / sub as f64;
                for p in 0..sub {
                    let a0 = a + p as f64 * len;
                    for &(t, w) in &rule {
                        let y = a0 + len * t;
                        let s = (y - xs[c]) / h;
                        let g = (1.0 - s) * src[c][k] + s * src[c + 1][k];
                        acc += len * w * atten(y) * g / speed;
                    }
                }
            }
            out[m][k] = acc;
        }
    }
    out
}

/// Worst relative deviation between `apply_phi` and [`oracle_phi`] on a
/// random midpoint-grid instance.
pub fn micro(n_x: usize, counts: [usize; 3], tau: f64, nu: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = VelocityGrid::build(&GridSpec::new(counts, 3.0, 1.6, Rule::Midpoint)).unwrap();
    let f_lr: Vec<f64> = (0..grid.len()).map(|_| 0.2 + rng.gen::<f64>()).collect();
    let b = BoundaryData::tabulated(f_lr.clone(), 0.0, &grid).unwrap();
    let slab = Slab::new(grid.clone(), n_x, b, SolverConfig::from_tau(tau, nu).unwrap()).unwrap();
    let rows: Vec<Vec<f64>> =
        (0..n_x).map(|_| (0..grid.len()).map(|_| 0.1 + 2.0 * rng.gen::<f64>()).collect()).collect();
    let f = DistributionField::new(n_x, grid.len(), rows.concat()).unwrap();
    let got = apply_phi(&f, &slab).unwrap();
    let want = oracle_phi(&rows, &f_lr, grid.velocities(), grid.weights(), tau, nu);
    let mut worst: f64 = 0.0;
    for (m, row) in want.iter().enumerate() {
        for (k, w) in row.iter().enumerate() {
            worst = worst.max((got.get(m, k) - w).abs() / w.abs());
        }
    }
    worst
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// A random SPD matrix with eigenvalues in [lo, hi] (times `t`).
pub fn random_spd(rng: &mut ChaCha8Rng, t: f64, lo: f64, hi: f64) -> [[f64; 3]; 3] {
    let a = Matrix3::from_fn(|_, _| uniform(rng, -1.0, 1.0));
    let q = a.qr().q();
    let d = Matrix3::from_diagonal(&Vector3::from_fn(|_, _| t * uniform(rng, lo, hi)));
    let m = q * d * q.transpose();
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    out
}
