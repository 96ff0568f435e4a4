//! Small fixed-size numerics: symmetric 3×3 matrices and compensated sums.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Neumaier-compensated accumulator. Summation order is the caller's order,
/// so identical inputs in identical order give bit-identical results.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator, in iteration order.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = KahanSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Symmetric 3×3 real matrix, stored densely with exact symmetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym3(pub [[f64; 3]; 3]);

impl Sym3 {
    pub fn zeros() -> Self {
        Sym3([[0.0; 3]; 3])
    }

    pub fn identity() -> Self {
        Self::diag([1.0, 1.0, 1.0])
    }

    pub fn diag(d: [f64; 3]) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            m[i][i] = d[i];
        }
        Sym3(m)
    }

    /// Builds a symmetric matrix from an arbitrary one as (M + Mᵀ)/2.
    pub fn symmetrize(m: [[f64; 3]; 3]) -> Self {
        let mut s = m;
        for i in 0..3 {
            for j in (i + 1)..3 {
                let a = 0.5 * (m[i][j] + m[j][i]);
                s[i][j] = a;
                s[j][i] = a;
            }
        }
        Sym3(s)
    }

    /// Builds from the six unique entries (xx, xy, xz, yy, yz, zz).
    pub fn from_upper(u: [f64; 6]) -> Self {
        Sym3([[u[0], u[1], u[2]], [u[1], u[3], u[4]], [u[2], u[4], u[5]]])
    }

    /// The six unique entries (xx, xy, xz, yy, yz, zz).
    pub fn upper(&self) -> [f64; 6] {
        let m = &self.0;
        [m[0][0], m[0][1], m[0][2], m[1][1], m[1][2], m[2][2]]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = self.0;
        m.iter_mut().flatten().for_each(|x| *x *= s);
        Sym3(m)
    }

    pub fn add(&self, other: &Sym3) -> Self {
        let mut m = self.0;
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += other.0[i][j];
            }
        }
        Sym3(m)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |a, &x| a.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &Sym3) -> f64 {
        self.0.iter().flatten().zip(other.0.iter().flatten()).fold(0.0_f64, |a, (&x, &y)| a.max((x - y).abs()))
    }

    /// Plain matrix product (not symmetric in general).
    pub fn matmul(&self, other: &Sym3) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                *o = (0..3).map(|k| self.0[i][k] * other.0[k][j]).sum();
            }
        }
        out
    }

    /// dᵀ·M·d.
    #[inline]
    pub fn quad_form(&self, d: [f64; 3]) -> f64 {
        let m = &self.0;
        m[0][0] * d[0] * d[0]
            + m[1][1] * d[1] * d[1]
            + m[2][2] * d[2] * d[2]
            + 2.0 * (m[0][1] * d[0] * d[1] + m[0][2] * d[0] * d[2] + m[1][2] * d[1] * d[2])
    }

    pub fn is_diagonal(&self) -> bool {
        self.0[0][1] == 0.0 && self.0[0][2] == 0.0 && self.0[1][2] == 0.0
    }

    /// Eigenvalues in ascending order, by the trigonometric method for
    /// symmetric 3×3 matrices.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let m = &self.0;
        if self.is_diagonal() {
            let mut d = [m[0][0], m[1][1], m[2][2]];
            d.sort_by(f64::total_cmp);
            return d;
        }
        let scale = self.max_abs();
        if scale == 0.0 || !scale.is_finite() {
            return [scale; 3];
        }
        let a = self.scale(1.0 / scale);
        let a = &a.0;
        let p1 = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p < 1e-300 {
            return [q * scale; 3];
        }
        let mut b = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let r = (Sym3(b).det() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e_max = q + 2.0 * p * phi.cos();
        let e_min = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
        let e_mid = 3.0 * q - e_max - e_min;
        let mut e = [e_min * scale, e_mid * scale, e_max * scale];
        e.sort_by(f64::total_cmp);
        e
    }
}
