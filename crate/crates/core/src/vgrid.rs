//! Velocity-space tensor-product quadrature.
//!
//! The v₁ axis is built from two mirrored sets of panels on
//! `[-v_max, -eps_v1]` and `[eps_v1, v_max]`; panel edges can be pinned to
//! the jump locations of the boundary data so that indicator functions never
//! straddle a panel. The transverse axes cover `[-v_max, v_max]`.
//!
//! Nodes are flattened in row-major `(v₁, v₂, v₃)` order with v₁ ascending,
//! so all nodes with v₁ < 0 come first and occupy exactly the first half.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::KahanSum;

/// One-dimensional quadrature rule used on each panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    GaussLegendre,
    Midpoint,
}

fn default_v1_rule() -> Rule {
    Rule::GaussLegendre
}

fn default_transverse_rule() -> Rule {
    Rule::Midpoint
}

/// Grid construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Node counts along (v₁, v₂, v₃). The v₁ count must be even.
    pub counts: [usize; 3],
    pub v_max: f64,
    #[serde(default)]
    pub eps_v1: f64,
    /// Rule on the v₁ panels.
    #[serde(default = "default_v1_rule")]
    pub rule: Rule,
    /// Rule on the v₂ and v₃ axes.
    #[serde(default = "default_transverse_rule")]
    pub transverse_rule: Rule,
    /// Extra v₁ panel edges on the positive side (mirrored to the negative side).
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

impl GridSpec {
    pub fn new(counts: [usize; 3], v_max: f64, eps_v1: f64, rule: Rule) -> Self {
        Self { counts, v_max, eps_v1, rule, transverse_rule: default_transverse_rule(), breakpoints: Vec::new() }
    }

    /// The production grid: 48×24×24 nodes on `[-8, 8]³`.
    pub fn production() -> Self {
        Self::new([48, 24, 24], 8.0, 0.0, Rule::GaussLegendre)
    }

    pub fn with_breakpoints(mut self, bps: &[f64]) -> Self {
        self.breakpoints.extend_from_slice(bps);
        self
    }

    pub fn with_transverse_rule(mut self, rule: Rule) -> Self {
        self.transverse_rule = rule;
        self
    }
}

/// Weights accepted by [`VelocityGrid::integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    One,
    /// v_i for i in 0..3.
    V(usize),
    Speed2,
    OnePlusSpeed2,
    InvAbsV1,
    InvAbsV1OnePlusSpeed2,
}

impl Weight {
    pub fn is_singular(self) -> bool {
        matches!(self, Weight::InvAbsV1 | Weight::InvAbsV1OnePlusSpeed2)
    }
}

/// Immutable velocity quadrature grid.
#[derive(Debug, Clone)]
pub struct VelocityGrid {
    pub nodes_v1: Vec<f64>,
    pub nodes_v2: Vec<f64>,
    pub nodes_v3: Vec<f64>,
    pub weights_v1: Vec<f64>,
    pub weights_v2: Vec<f64>,
    pub weights_v3: Vec<f64>,
    pub v_max: f64,
    pub eps_v1: f64,
    spec: GridSpec,
    vel: Vec<[f64; 3]>,
    weight: Vec<f64>,
    speed2: Vec<f64>,
}

/// Gauss–Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn panel_rule(rule: Rule, a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    match rule {
        Rule::Midpoint => {
            let h = (b - a) / n as f64;
            ((0..n).map(|i| a + h * (i as f64 + 0.5)).collect(), vec![h; n])
        }
        Rule::GaussLegendre => {
            let (x, w) = gauss_legendre(n);
            let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
            (x.iter().map(|t| c + r * t).collect(), w.iter().map(|wi| r * wi).collect())
        }
    }
}

/// Splits `total` nodes over panels of the given lengths by the largest
/// remainder method. Gauss–Legendre panels get nodes in proportion to
/// √length, midpoint panels in proportion to length.
fn allocate(lengths: &[f64], total: usize, rule: Rule) -> Vec<usize> {
    let score: Vec<f64> = lengths.iter().map(|&l| if rule == Rule::GaussLegendre { l.sqrt() } else { l }).collect();
    let min_each = if rule == Rule::GaussLegendre && total >= 2 * lengths.len() { 2 } else { 1 };
    let free = total - min_each * lengths.len();
    let s: f64 = score.iter().sum();
    let ideal: Vec<f64> = score.iter().map(|x| free as f64 * x / s).collect();
    let mut n: Vec<usize> = ideal.iter().map(|x| x.floor() as usize).collect();
    let mut left = free - n.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        n[i] += 1;
        left -= 1;
    }
    n.iter().map(|k| k + min_each).collect()
}

impl VelocityGrid {
    /// Builds the grid, validating the parameters.
    pub fn build(spec: &GridSpec) -> Result<Self> {
        let [n1, n2, n3] = spec.counts;
        if n1 < 2 || n2 < 2 || n3 < 2 {
            return Err(Error::Config(format!("grid counts must be >= 2, got {:?}", spec.counts)));
        }
        if n1 % 2 != 0 {
            return Err(Error::Config(format!("v1 count must be even, got {n1}")));
        }
        if !(spec.v_max.is_finite() && spec.v_max > 0.0) {
            return Err(Error::Config(format!("v_max must be positive, got {}", spec.v_max)));
        }
        if !(spec.eps_v1.is_finite() && spec.eps_v1 >= 0.0 && spec.eps_v1 < spec.v_max) {
            return Err(Error::Config(format!(
                "eps_v1 must satisfy 0 <= eps_v1 < v_max, got eps_v1={} v_max={}",
                spec.eps_v1, spec.v_max
            )));
        }
        if spec.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("non-finite breakpoint".into()));
        }

        // positive-side panel edges
        let mut edges = vec![spec.eps_v1, spec.v_max];
        if spec.eps_v1 > 0.0 && 2.0 * spec.eps_v1 < spec.v_max {
            edges.push(2.0 * spec.eps_v1);
        }
        edges.extend(spec.breakpoints.iter().map(|b| b.abs()).filter(|&b| b > spec.eps_v1 && b < spec.v_max));
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * spec.v_max);
        let lengths: Vec<f64> = edges.windows(2).map(|e| e[1] - e[0]).collect();
        let half = n1 / 2;
        if lengths.len() > half {
            return Err(Error::Config(format!(
                "{} v1 panels need at least {} nodes on each side, got {half}",
                lengths.len(),
                lengths.len()
            )));
        }
        let alloc = allocate(&lengths, half, spec.rule);
        let (mut pos_x, mut pos_w) = (Vec::with_capacity(half), Vec::with_capacity(half));
        for (e, &k) in edges.windows(2).zip(&alloc) {
            let (x, w) = panel_rule(spec.rule, e[0], e[1], k);
            pos_x.extend(x);
            pos_w.extend(w);
        }
        let mut nodes_v1: Vec<f64> = pos_x.iter().rev().map(|x| -x).collect();
        nodes_v1.extend_from_slice(&pos_x);
        let mut weights_v1: Vec<f64> = pos_w.iter().rev().copied().collect();
        weights_v1.extend_from_slice(&pos_w);

        let (nodes_v2, weights_v2) = panel_rule(spec.transverse_rule, -spec.v_max, spec.v_max, n2);
        let (nodes_v3, weights_v3) = panel_rule(spec.transverse_rule, -spec.v_max, spec.v_max, n3);

        let n = n1 * n2 * n3;
        let mut vel = Vec::with_capacity(n);
        let mut weight = Vec::with_capacity(n);
        let mut speed2 = Vec::with_capacity(n);
        for i in 0..n1 {
            for j in 0..n2 {
                for k in 0..n3 {
                    let v = [nodes_v1[i], nodes_v2[j], nodes_v3[k]];
                    vel.push(v);
                    weight.push(weights_v1[i] * weights_v2[j] * weights_v3[k]);
                    speed2.push(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
                }
            }
        }
        let grid = Self {
            nodes_v1,
            nodes_v2,
            nodes_v3,
            weights_v1,
            weights_v2,
            weights_v3,
            v_max: spec.v_max,
            eps_v1: spec.eps_v1,
            spec: spec.clone(),
            vel,
            weight,
            speed2,
        };
        grid.check_invariants()?;
        Ok(grid)
    }

    fn check_invariants(&self) -> Result<()> {
        let all_w = self.weights_v1.iter().chain(&self.weights_v2).chain(&self.weights_v3);
        if all_w.clone().any(|&w| !(w > 0.0)) {
            return Err(Error::Config("non-positive quadrature weight".into()));
        }
        let n1 = self.nodes_v1.len();
        for i in 0..n1 {
            let v = self.nodes_v1[i];
            if v == 0.0 || v.abs() < self.eps_v1 {
                return Err(Error::Config(format!("v1 node {v} inside the exclusion band")));
            }
            if self.nodes_v1[n1 - 1 - i] != -v || self.weights_v1[n1 - 1 - i] != self.weights_v1[i] {
                return Err(Error::Config("v1 nodes are not mirror symmetric".into()));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.nodes_v1.len(), self.nodes_v2.len(), self.nodes_v3.len()]
    }

    /// Total number of velocity nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    /// Nodes per v₁ line (n₂·n₃).
    #[inline]
    pub fn line_len(&self) -> usize {
        self.nodes_v2.len() * self.nodes_v3.len()
    }

    /// Index of the v₁ abscissa of a flattened node.
    #[inline]
    pub fn v1_index(&self, node: usize) -> usize {
        node / self.line_len()
    }

    /// Flattened index range of nodes with v₁ > 0.
    pub fn positive_range(&self) -> std::ops::Range<usize> {
        self.len() / 2..self.len()
    }

    /// Flattened index range of nodes with v₁ < 0.
    pub fn negative_range(&self) -> std::ops::Range<usize> {
        0..self.len() / 2
    }

    /// Flattened index of the node mirrored in v₁ (v₂, v₃ unchanged).
    pub fn mirror_v1(&self, node: usize) -> usize {
        let l = self.line_len();
        let i = node / l;
        (self.nodes_v1.len() - 1 - i) * l + node % l
    }

    #[inline]
    pub fn velocity(&self, node: usize) -> [f64; 3] {
        self.vel[node]
    }

    #[inline]
    pub fn weight(&self, node: usize) -> f64 {
        self.weight[node]
    }

    #[inline]
    pub fn speed2(&self, node: usize) -> f64 {
        self.speed2[node]
    }

    pub fn velocities(&self) -> &[[f64; 3]] {
        &self.vel
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Samples a function of velocity at every node.
    pub fn sample<F: Fn([f64; 3]) -> f64>(&self, f: F) -> Vec<f64> {
        self.vel.iter().map(|&v| f(v)).collect()
    }

    /// Compensated quadrature sum Σ w_k·term(k) in fixed node order.
    #[inline]
    pub fn sum_nodes<F: Fn(usize) -> f64>(&self, term: F) -> f64 {
        let mut acc = KahanSum::new();
        for (k, &w) in self.weight.iter().enumerate() {
            acc.add(w * term(k));
        }
        acc.value()
    }

    fn weight_value(&self, weight: Weight, k: usize) -> f64 {
        let v = self.vel[k];
        match weight {
            Weight::One => 1.0,
            Weight::V(i) => v[i],
            Weight::Speed2 => self.speed2[k],
            Weight::OnePlusSpeed2 => 1.0 + self.speed2[k],
            Weight::InvAbsV1 => 1.0 / v[0].abs(),
            Weight::InvAbsV1OnePlusSpeed2 => (1.0 + self.speed2[k]) / v[0].abs(),
        }
    }

    fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Shape { expected: self.len(), got: values.len() });
        }
        Ok(())
    }

    /// ∫ values·weight dv. Singular weights require `eps_v1 > 0`; use
    /// [`integrate_banded`](Self::integrate_banded) for data with a declared
    /// vanishing band.
    pub fn integrate(&self, values: &[f64], weight: Weight) -> Result<f64> {
        self.integrate_banded(values, weight, 0.0)
    }

    /// As [`integrate`](Self::integrate), with the declaration that `values`
    /// vanish for |v₁| < `band`. The declaration is checked on the nodes.
    pub fn integrate_banded(&self, values: &[f64], weight: Weight, band: f64) -> Result<f64> {
        self.check_len(values)?;
        if let Weight::V(i) = weight {
            if i > 2 {
                return Err(Error::Config(format!("velocity component {i} out of range")));
            }
        }
        if weight.is_singular() && self.eps_v1 <= 0.0 {
            if band <= 0.0 {
                return Err(Error::Singularity("eps_v1 = 0 and no vanishing band declared".into()));
            }
            let bad = (0..self.len()).find(|&k| self.vel[k][0].abs() < band && values[k] != 0.0);
            if let Some(k) = bad {
                return Err(Error::Singularity(format!(
                    "declared vanishing band {band} violated at v1 = {}",
                    self.vel[k][0]
                )));
            }
        }
        Ok(self.sum_nodes(|k| values[k] * self.weight_value(weight, k)))
    }
}

/// One line of the quadrature self-check.
#[derive(Debug, Clone, Serialize)]
pub struct MomentCheck {
    pub moment: &'static str,
    pub value: f64,
    pub exact: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckReport {
    pub tol: f64,
    pub moments: Vec<MomentCheck>,
    pub pass: bool,
}

impl SelfcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.moments.iter().fold(0.0, |a, m| a.max(m.rel_err))
    }
}

/// Integrates {1, v₁², |v|², |v|⁴} against exp(-|v|²/2) and compares with
/// (2π)^{3/2}·{1, 1, 3, 15}.
pub fn selfcheck(grid: &VelocityGrid, tol: f64) -> SelfcheckReport {
    let norm = (2.0 * std::f64::consts::PI).powf(1.5);
    let g: Vec<f64> = (0..grid.len()).map(|k| (-0.5 * grid.speed2(k)).exp()).collect();
    type Case<'a> = (&'static str, f64, Box<dyn Fn(usize) -> f64 + 'a>);
    let cases: [Case; 4] = [
        ("1", 1.0, Box::new(|_| 1.0)),
        ("v1^2", 1.0, Box::new(|k| grid.velocity(k)[0].powi(2))),
        ("|v|^2", 3.0, Box::new(|k| grid.speed2(k))),
        ("|v|^4", 15.0, Box::new(|k| grid.speed2(k).powi(2))),
    ];
    let moments: Vec<MomentCheck> = cases
        .iter()
        .map(|(name, factor, w)| {
            let value = grid.sum_nodes(|k| g[k] * w(k));
            let exact = factor * norm;
            let rel_err = ((value - exact) / exact).abs();
            MomentCheck { moment: name, value, exact, rel_err, pass: rel_err <= tol }
        })
        .collect();
    let pass = moments.iter().all(|m| m.pass);
    SelfcheckReport { tol, moments, pass }
}
