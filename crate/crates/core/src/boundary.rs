//! Inflow boundary data, the derived quantities that control the
//! solution space, and the admissibility audit of the data.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vgrid::{VelocityGrid, Weight};

/// Relative growth of the 1/|v₁| integral, under halving of the exclusion
/// radius, above which the data are flagged as concentrating at v₁ = 0.
pub const DIVERGENCE_GROWTH_LIMIT: f64 = 0.05;

/// Threshold, relative to a_u, on the transverse momentum of the inflow data.
pub const TRANSVERSE_MOMENTUM_TOL: f64 = 1e-12;

/// Inflow data f_L (v₁ > 0) and f_R (v₁ < 0).
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryData {
    /// f_L = C_L·1{r₁ ≤ v₁ ≤ r₂}·e^{-(v₂²+v₃²)/2}, f_R its mirror with C_R.
    Remark4 { c_l: f64, c_r: f64, r1: f64, r2: f64 },
    /// f_LR sampled on the nodes of a specific grid.
    Tabulated { values: Vec<f64>, vanish_band: f64 },
}

impl BoundaryData {
    pub fn remark4_family(c_l: f64, c_r: f64, r1: f64, r2: f64) -> Result<Self> {
        let ok = [c_l, c_r, r1, r2].iter().all(|x| x.is_finite()) && c_l > 0.0 && c_r > 0.0 && r1 > 0.0 && r2 > r1;
        if !ok {
            return Err(Error::Config(format!(
                "remark4 data need C_L, C_R > 0 and 0 < r1 < r2, got ({c_l}, {c_r}, {r1}, {r2})"
            )));
        }
        Ok(BoundaryData::Remark4 { c_l, c_r, r1, r2 })
    }

    /// Tabulated f_LR on the nodes of `grid`.
    pub fn tabulated(values: Vec<f64>, vanish_band: f64, grid: &VelocityGrid) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("tabulated data must be finite and nonnegative".into()));
        }
        if values.iter().all(|&x| x == 0.0) {
            return Err(Error::Config("tabulated data are identically zero".into()));
        }
        if !(vanish_band >= 0.0 && vanish_band.is_finite()) {
            return Err(Error::Config(format!("vanish_band must be >= 0, got {vanish_band}")));
        }
        Ok(BoundaryData::Tabulated { values, vanish_band })
    }

    /// Radius around v₁ = 0 on which the data vanish.
    pub fn vanish_band(&self) -> f64 {
        match self {
            BoundaryData::Remark4 { r1, .. } => *r1,
            BoundaryData::Tabulated { vanish_band, .. } => *vanish_band,
        }
    }

    /// v₁ locations where the data jump; grids should put panel edges there.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            BoundaryData::Remark4 { r1, r2, .. } => vec![*r1, *r2],
            BoundaryData::Tabulated { vanish_band, .. } if *vanish_band > 0.0 => vec![*vanish_band],
            BoundaryData::Tabulated { .. } => Vec::new(),
        }
    }

    /// Value of f_LR at velocity v (closed-form families only).
    pub fn remark4_value(c_l: f64, c_r: f64, r1: f64, r2: f64, v: [f64; 3]) -> f64 {
        let transverse = (-0.5 * (v[1] * v[1] + v[2] * v[2])).exp();
        if v[0] >= r1 && v[0] <= r2 {
            c_l * transverse
        } else if v[0] <= -r1 && v[0] >= -r2 {
            c_r * transverse
        } else {
            0.0
        }
    }

    /// f_LR at every node of `grid`.
    pub fn sample(&self, grid: &VelocityGrid) -> Result<Vec<f64>> {
        match self {
            BoundaryData::Remark4 { c_l, c_r, r1, r2 } => {
                Ok(grid.sample(|v| Self::remark4_value(*c_l, *c_r, *r1, *r2, v)))
            }
            BoundaryData::Tabulated { values, .. } => {
                if values.len() != grid.len() {
                    return Err(Error::Shape { expected: grid.len(), got: values.len() });
                }
                Ok(values.clone())
            }
        }
    }

    /// Both amplitudes multiplied by λ.
    pub fn scaled(&self, lambda: f64) -> Self {
        match self {
            BoundaryData::Remark4 { c_l, c_r, r1, r2 } => {
                BoundaryData::Remark4 { c_l: c_l * lambda, c_r: c_r * lambda, r1: *r1, r2: *r2 }
            }
            BoundaryData::Tabulated { values, vanish_band } => BoundaryData::Tabulated {
                values: values.iter().map(|x| x * lambda).collect(),
                vanish_band: *vanish_band,
            },
        }
    }

    /// Fraction of the data's mass lying outside the truncated box
    /// |v_i| ≤ v_max (closed-form families only).
    pub fn tail_mass_fraction(&self, v_max: f64) -> Option<f64> {
        match self {
            BoundaryData::Remark4 { r1, r2, .. } => {
                let inside_1d = statrs::function::erf::erf(v_max / 2f64.sqrt());
                let v1_inside = ((r2.min(v_max) - r1).max(0.0)) / (r2 - r1);
                Some(1.0 - v1_inside * inside_1d * inside_1d)
            }
            BoundaryData::Tabulated { .. } => None,
        }
    }

    /// Reads tabulated data from a CSV with header `v1,v2,v3,f`, one row
    /// per grid node in the grid's node order.
    pub fn from_csv<P: AsRef<Path>>(path: P, grid: &VelocityGrid, vanish_band: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let headers = rdr.headers()?.clone();
        let expected = ["v1", "v2", "v3", "f"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
            return Err(Error::Config(format!(
                "tabulated data header must be v1,v2,v3,f, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut values = Vec::with_capacity(grid.len());
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if row >= grid.len() {
                return Err(Error::Shape { expected: grid.len(), got: row + 1 });
            }
            let mut nums = [0.0; 4];
            for (i, n) in nums.iter_mut().enumerate() {
                *n = rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("row {}: column {}: {e}", row + 2, expected[i])))?;
            }
            let v = grid.velocity(row);
            for i in 0..3 {
                if (nums[i] - v[i]).abs() > 1e-12 * v[i].abs().max(1.0) {
                    return Err(Error::Config(format!(
                        "row {}: node ({}, {}, {}) does not match grid node {:?}",
                        row + 2,
                        nums[0],
                        nums[1],
                        nums[2],
                        v
                    )));
                }
            }
            values.push(nums[3]);
        }
        Self::tabulated(values, vanish_band, grid)
    }

    /// Writes f_LR on the grid nodes in the format read by [`from_csv`](Self::from_csv).
    pub fn write_csv<P: AsRef<Path>>(&self, path: P, grid: &VelocityGrid) -> Result<()> {
        let values = self.sample(grid)?;
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["v1", "v2", "v3", "f"])?;
        for (k, f) in values.iter().enumerate() {
            let v = grid.velocity(k);
            w.write_record([
                format!("{:.17e}", v[0]),
                format!("{:.17e}", v[1]),
                format!("{:.17e}", v[2]),
                format!("{:.17e}", f),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Quantities derived from the inflow data at a given τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremQuantities {
    /// 2∫f_LR
    pub a_u: f64,
    /// ∫e^{-a_u/(τ|v₁|)} f_LR
    pub a_l: f64,
    /// ∫f_LR/|v₁|
    pub a_s: f64,
    /// 2∫f_LR|v|²
    pub c_u: f64,
    /// ∫e^{-a_u/(τ|v₁|)} f_LR|v|²
    pub c_l: f64,
    /// ∫f_LR|v|²/|v₁|
    pub c_s: f64,
    /// Product of the attenuated inflow fluxes of f_L and f_R.
    pub gamma_l: f64,
    pub tau: f64,
}

impl TheoremQuantities {
    fn all_finite(&self) -> bool {
        [self.a_u, self.a_l, self.a_s, self.c_u, self.c_l, self.c_s, self.gamma_l].iter().all(|x| x.is_finite())
    }
}

/// The quantities with a_u computed from the data.
pub fn theorem_quantities(b: &BoundaryData, tau: f64, grid: &VelocityGrid) -> Result<TheoremQuantities> {
    let f = b.sample(grid)?;
    let a_u = 2.0 * grid.integrate(&f, Weight::One)?;
    quantities_with_au(&f, b.vanish_band(), tau, grid, a_u)
}

/// The quantities with a_u held fixed at `a_u` in the attenuation factor.
pub fn theorem_quantities_with_au(
    b: &BoundaryData,
    tau: f64,
    grid: &VelocityGrid,
    a_u: f64,
) -> Result<TheoremQuantities> {
    let f = b.sample(grid)?;
    quantities_with_au(&f, b.vanish_band(), tau, grid, a_u)
}

fn quantities_with_au(f: &[f64], band: f64, tau: f64, grid: &VelocityGrid, a_u_attn: f64) -> Result<TheoremQuantities> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let a_u = 2.0 * grid.integrate(f, Weight::One)?;
    let c_u = 2.0 * grid.integrate(f, Weight::Speed2)?;
    let a_s = grid.integrate_banded(f, Weight::InvAbsV1, band)?;
    let f_speed2: Vec<f64> = (0..grid.len()).map(|k| f[k] * grid.speed2(k)).collect();
    let c_s = grid.integrate_banded(&f_speed2, Weight::InvAbsV1, band)?;
    let attn = |k: usize| (-a_u_attn / (tau * grid.velocity(k)[0].abs())).exp();
    let a_l = grid.sum_nodes(|k| attn(k) * f[k]);
    let c_l = grid.sum_nodes(|k| attn(k) * f[k] * grid.speed2(k));
    let flux = |range: std::ops::Range<usize>| {
        let mut acc = crate::linalg::KahanSum::new();
        for k in range {
            acc.add(grid.weight(k) * attn(k) * f[k] * grid.velocity(k)[0].abs());
        }
        acc.value()
    };
    let gamma_l = flux(grid.positive_range()) * flux(grid.negative_range());
    let q = TheoremQuantities { a_u, a_l, a_s, c_u, c_l, c_s, gamma_l, tau };
    if !q.all_finite() {
        return Err(Error::Inadmissible(format!("non-finite theorem quantities: {q:?}")));
    }
    if !(a_u > 0.0) {
        return Err(Error::Inadmissible("boundary data carry no mass on the grid".into()));
    }
    Ok(q)
}

/// Integrability of the data against (1+|v|²)/|v₁|.
#[derive(Debug, Clone, Serialize)]
pub struct NonConcentration {
    pub singular_integral: Option<f64>,
    /// "vanishing-band", "exclusion-probe" or "uncertified".
    pub method: &'static str,
    /// Integral with exclusion radius eps_v1 and with 2·eps_v1.
    pub probe_inner: Option<f64>,
    pub probe_outer: Option<f64>,
    pub probe_growth: Option<f64>,
    pub message: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransverseMomentum {
    /// ∫f_L v_i dv for i = 2, 3.
    pub left: [f64; 2],
    /// ∫f_R v_i dv for i = 2, 3.
    pub right: [f64; 2],
    /// Σ over v₁ lines of w₁·|∫f v_i dv₂dv₃|, both half-spaces, i = 2, 3.
    pub line_l1: [f64; 2],
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaCondition {
    pub gamma_l: f64,
    pub pass: bool,
}

/// Published closed-form constants of the `remark4` family next to the
/// values of the defining integrals.
#[derive(Debug, Clone, Serialize)]
pub struct Remark4Constants {
    pub a_u_printed: f64,
    pub a_u_quadrature: f64,
    pub a_u_ratio: f64,
    pub gamma_bound_printed: f64,
    /// π²·C_L·C_R·(r₂²-r₁²)²·e^{-2a_u/(τ r₁)}, from the defining integrals.
    pub gamma_bound_rederived: f64,
    pub gamma_l: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub quantities: Option<TheoremQuantities>,
    pub quantities_error: Option<String>,
    pub non_concentration: NonConcentration,
    pub transverse_momentum: TransverseMomentum,
    pub gamma: GammaCondition,
    pub tail_mass_fraction: Option<f64>,
    pub remark4: Option<Remark4Constants>,
    pub admissible: bool,
}

fn non_concentration(b: &BoundaryData, grid: &VelocityGrid, f: &[f64]) -> NonConcentration {
    let band = b.vanish_band();
    let weighted = |cut: f64| {
        grid.sum_nodes(|k| {
            let v1 = grid.velocity(k)[0].abs();
            if v1 >= cut {
                f[k] * (1.0 + grid.speed2(k)) / v1
            } else {
                0.0
            }
        })
    };
    let integral = grid.integrate_banded(f, Weight::InvAbsV1OnePlusSpeed2, band);
    let singular_integral = integral.as_ref().ok().copied();
    if band > 0.0 {
        let pass = matches!(singular_integral, Some(x) if x.is_finite());
        return NonConcentration {
            singular_integral,
            method: "vanishing-band",
            probe_inner: None,
            probe_outer: None,
            probe_growth: None,
            message: match &integral {
                Ok(_) => format!("data vanish for |v1| < {band}; weight bounded by 1/{band}"),
                Err(e) => e.to_string(),
            },
            pass,
        };
    }
    if grid.eps_v1 > 0.0 {
        let inner = weighted(grid.eps_v1);
        let outer = weighted(2.0 * grid.eps_v1);
        let growth = if outer > 0.0 {
            (inner - outer) / outer
        } else if inner > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        let pass = inner.is_finite() && growth <= DIVERGENCE_GROWTH_LIMIT;
        return NonConcentration {
            singular_integral,
            method: "exclusion-probe",
            probe_inner: Some(inner),
            probe_outer: Some(outer),
            probe_growth: Some(growth),
            message: format!(
                "1/|v1| integral grows by {:.3}% when the exclusion radius halves from {} to {} (limit {}%)",
                100.0 * growth,
                2.0 * grid.eps_v1,
                grid.eps_v1,
                100.0 * DIVERGENCE_GROWTH_LIMIT
            ),
            pass,
        };
    }
    NonConcentration {
        singular_integral: None,
        method: "uncertified",
        probe_inner: None,
        probe_outer: None,
        probe_growth: None,
        message: "eps_v1 = 0 and no vanishing band declared; integrability cannot be certified".into(),
        pass: false,
    }
}

fn transverse_momentum(grid: &VelocityGrid, f: &[f64], a_u: f64) -> TransverseMomentum {
    let half_moment = |range: std::ops::Range<usize>, i: usize| {
        let mut acc = crate::linalg::KahanSum::new();
        for k in range {
            acc.add(grid.weight(k) * f[k] * grid.velocity(k)[i]);
        }
        acc.value()
    };
    let (pos, neg) = (grid.positive_range(), grid.negative_range());
    let left = [half_moment(pos.clone(), 1), half_moment(pos, 2)];
    let right = [half_moment(neg.clone(), 1), half_moment(neg, 2)];
    let l = grid.line_len();
    let mut line_l1 = [0.0; 2];
    for (c, comp) in [1usize, 2].into_iter().enumerate() {
        let mut acc = crate::linalg::KahanSum::new();
        for (i, w1) in grid.weights_v1.iter().enumerate() {
            let mut line = crate::linalg::KahanSum::new();
            for k in i * l..(i + 1) * l {
                line.add(grid.weight(k) / w1 * f[k] * grid.velocity(k)[comp]);
            }
            acc.add(w1 * line.value().abs());
        }
        line_l1[c] = acc.value();
    }
    let threshold = TRANSVERSE_MOMENTUM_TOL * a_u;
    let pass = line_l1.iter().all(|x| *x <= threshold) && left.iter().chain(&right).all(|x| x.abs() <= threshold);
    TransverseMomentum { left, right, line_l1, threshold, pass }
}

/// Audits the three hypotheses on the inflow data. Never fails; errors in
/// computing the quantities are recorded in the report.
pub fn check_admissibility(b: &BoundaryData, tau: f64, grid: &VelocityGrid) -> AdmissibilityReport {
    let f = b.sample(grid).unwrap_or_else(|e| {
        log::error!("boundary data could not be sampled: {e}");
        vec![0.0; grid.len()]
    });
    let (quantities, quantities_error) = match theorem_quantities(b, tau, grid) {
        Ok(q) => (Some(q), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let a_u = quantities.map(|q| q.a_u).unwrap_or_else(|| 2.0 * grid.sum_nodes(|k| f[k]));
    let mut non_conc = non_concentration(b, grid, &f);
    if let Some(q) = &quantities {
        if !(q.a_s.is_finite() && q.c_s.is_finite()) {
            non_conc.pass = false;
        }
    } else if non_conc.pass {
        non_conc.pass = false;
        non_conc.message = quantities_error.clone().unwrap_or_default();
    }
    let transverse = transverse_momentum(grid, &f, a_u);
    let gamma_l = quantities.map(|q| q.gamma_l).unwrap_or(f64::NAN);
    let gamma = GammaCondition { gamma_l, pass: gamma_l > 0.0 };
    let tail = b.tail_mass_fraction(grid.v_max);
    if let Some(t) = tail {
        if t > 1e-12 {
            log::warn!("boundary data mass beyond v_max = {} is {t:e} of the total", grid.v_max);
        }
    }
    let remark4 = match (b, &quantities) {
        (BoundaryData::Remark4 { c_l, c_r, r1, r2 }, Some(q)) => {
            let a_u_printed = PI * (c_l + c_r) * (r2 - r1);
            let dr2 = r2 * r2 - r1 * r1;
            Some(Remark4Constants {
                a_u_printed,
                a_u_quadrature: q.a_u,
                a_u_ratio: q.a_u / a_u_printed,
                gamma_bound_printed: PI * PI / 4.0
                    * c_l
                    * c_r
                    * (-4.0 * (c_l + c_r) * (r2 - r1) / (tau * r1)).exp()
                    * dr2
                    * dr2,
                gamma_bound_rederived: PI * PI * c_l * c_r * dr2 * dr2 * (-2.0 * q.a_u / (tau * r1)).exp(),
                gamma_l: q.gamma_l,
            })
        }
        _ => None,
    };
    let admissible = quantities.is_some() && non_conc.pass && transverse.pass && gamma.pass;
    AdmissibilityReport {
        quantities,
        quantities_error,
        non_concentration: non_conc,
        transverse_momentum: transverse,
        gamma,
        tail_mass_fraction: tail,
        remark4,
        admissible,
    }
}

/// Empirical threshold on τ below which the solver probe fails, found by
/// geometric bisection on `[tau_lo, tau_hi]` until the bracket ratio is
/// below `1 + rel_tol`. The result is an observation about the discrete
/// iteration, not a rigorous bound.
pub fn min_tau_estimate<F>(
    b: &BoundaryData,
    grid: &VelocityGrid,
    tau_lo: f64,
    tau_hi: f64,
    rel_tol: f64,
    mut probe: F,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    if !(tau_lo > 0.0 && tau_hi > tau_lo && rel_tol > 0.0) {
        return Err(Error::Config(format!(
            "min_tau_estimate needs 0 < tau_lo < tau_hi and rel_tol > 0, got [{tau_lo}, {tau_hi}], {rel_tol}"
        )));
    }
    let audit = check_admissibility(b, tau_hi, grid);
    if !audit.admissible {
        return Err(Error::Inadmissible(format!("data not admissible at tau_hi = {tau_hi}")));
    }
    if !probe(tau_hi)? {
        return Err(Error::Inadmissible(format!("solver probe fails even at tau_hi = {tau_hi}")));
    }
    if probe(tau_lo)? {
        return Ok(tau_lo);
    }
    let (mut lo, mut hi) = (tau_lo, tau_hi);
    while hi / lo > 1.0 + rel_tol {
        let mid = (lo * hi).sqrt();
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vgrid::{GridSpec, Rule};

    fn grid_for(b: &BoundaryData) -> VelocityGrid {
        VelocityGrid::build(&GridSpec::production().with_breakpoints(&b.breakpoints())).unwrap()
    }

    #[test]
    fn remark4_construction() {
        let b = BoundaryData::remark4_family(1.0, 1.0, 1.0, 2.0).unwrap();
        let g = grid_for(&b);
        let f = b.sample(&g).unwrap();
        for k in 0..g.len() {
            assert_eq!(f[k], f[g.mirror_v1(k)]);
        }
        let b2 = BoundaryData::remark4_family(1.0, 2.0, 0.5, 1.0).unwrap();
        let v = [0.75, 0.1, 0.2];
        let fl = BoundaryData::remark4_value(1.0, 2.0, 0.5, 1.0, v);
        let fr = BoundaryData::remark4_value(1.0, 2.0, 0.5, 1.0, [-v[0], v[1], v[2]]);
        assert_eq!(fr, 2.0 * fl);
        assert_eq!(b2.vanish_band(), 0.5);
        assert!(BoundaryData::remark4_family(1.0, 1.0, 0.0, 2.0).is_err());
        assert!(BoundaryData::remark4_family(1.0, 1.0, 2.0, 2.0).is_err());
        assert!(BoundaryData::remark4_family(-1.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn a_u_matches_separable_integral() {
        let b = BoundaryData::remark4_family(1.0, 1.0, 1.0, 2.0).unwrap();
        let q = theorem_quantities(&b, 100.0, &grid_for(&b)).unwrap();
        assert!((q.a_u - 8.0 * PI).abs() < 1e-10 * q.a_u, "a_u = {}", q.a_u);
        assert!(q.a_l <= q.a_u / 2.0 && q.c_l <= q.c_u / 2.0);
    }

    #[test]
    fn large_tau_limits() {
        let b = BoundaryData::remark4_family(1.0, 1.0, 1.0, 2.0).unwrap();
        let q = theorem_quantities(&b, 1e12, &grid_for(&b)).unwrap();
        assert!((q.a_l - q.a_u / 2.0).abs() < 1e-9 * q.a_u);
        assert!((q.c_l - q.c_u / 2.0).abs() < 1e-9 * q.c_u);
    }

    #[test]
    fn c_l_comparable_to_c_u_at_tau_100() {
        let b = BoundaryData::remark4_family(1.0, 1.0, 1.0, 2.0).unwrap();
        let q = theorem_quantities(&b, 100.0, &grid_for(&b)).unwrap();
        assert!(q.c_l >= q.c_u / 8.0);
    }

    #[test]
    fn quantities_nondecreasing_in_tau() {
        let b = BoundaryData::remark4_family(1.0, 0.5, 0.5, 2.5).unwrap();
        let g = grid_for(&b);
        let mut prev: Option<TheoremQuantities> = None;
        for tau in [0.5, 1.0, 3.0, 10.0, 100.0, 1e4] {
            let q = theorem_quantities(&b, tau, &g).unwrap();
            if let Some(p) = prev {
                assert!(q.a_l >= p.a_l && q.c_l >= p.c_l && q.gamma_l >= p.gamma_l);
            }
            prev = Some(q);
        }
    }

    #[test]
    fn linear_quantities_scale() {
        let b = BoundaryData::remark4_family(1.0, 0.7, 1.0, 2.0).unwrap();
        let g = grid_for(&b);
        let q = theorem_quantities(&b, 50.0, &g).unwrap();
        let lambda = 3.0;
        let q3 = theorem_quantities_with_au(&b.scaled(lambda), 50.0, &g, q.a_u).unwrap();
        for (a, b) in [(q.a_u, q3.a_u), (q.a_s, q3.a_s), (q.c_u, q3.c_u), (q.c_s, q3.c_s), (q.a_l, q3.a_l)] {
            assert!((b - lambda * a).abs() <= 1e-13 * b);
        }
        assert!((q3.gamma_l - lambda * lambda * q.gamma_l).abs() <= 1e-13 * q3.gamma_l);
    }

    #[test]
    fn remark4_is_admissible_and_gamma_bound_holds() {
        let b = BoundaryData::remark4_family(1.0, 2.0, 0.5, 1.5).unwrap();
        let r = check_admissibility(&b, 30.0, &grid_for(&b));
        assert!(r.admissible, "{r:?}");
        assert!(r.transverse_momentum.line_l1.iter().all(|x| *x <= 1e-14 * r.quantities.unwrap().a_u));
        let k = r.remark4.unwrap();
        assert!((k.a_u_ratio - 4.0).abs() < 1e-9);
        assert!(k.gamma_l >= k.gamma_bound_rederived);
        assert!(k.gamma_bound_printed > 0.0);
    }

    #[test]
    fn singular_without_band_is_not_certified() {
        let g = VelocityGrid::build(&GridSpec::new([16, 8, 8], 6.0, 0.0, Rule::GaussLegendre)).unwrap();
        let values = g.sample(|v| (-0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2])).exp());
        let b = BoundaryData::tabulated(values, 0.0, &g).unwrap();
        let r = check_admissibility(&b, 10.0, &g);
        assert!(!r.admissible);
        assert!(!r.non_concentration.pass);
        assert!(r.quantities_error.is_some());
    }

    #[test]
    fn tabulated_validation() {
        let g = VelocityGrid::build(&GridSpec::new([4, 4, 4], 2.0, 0.0, Rule::Midpoint)).unwrap();
        assert!(BoundaryData::tabulated(vec![0.0; g.len()], 0.0, &g).is_err());
        assert!(BoundaryData::tabulated(vec![1.0; 3], 0.0, &g).is_err());
        let mut v = vec![1.0; g.len()];
        v[0] = -1.0;
        assert!(BoundaryData::tabulated(v, 0.0, &g).is_err());
    }

    #[test]
    fn min_tau_bisection_on_synthetic_probe() {
        let b = BoundaryData::remark4_family(1.0, 1.0, 1.0, 2.0).unwrap();
        let g = VelocityGrid::build(
            &GridSpec::new([12, 6, 6], 8.0, 0.0, Rule::GaussLegendre).with_breakpoints(&[1.0, 2.0]),
        )
        .unwrap();
        let k = min_tau_estimate(&b, &g, 0.01, 1000.0, 0.01, |t| Ok(t >= 3.7)).unwrap();
        assert!((3.7..=3.7 * 1.011).contains(&k));
        let err = min_tau_estimate(&b, &g, 0.01, 1.0, 0.01, |t| Ok(t >= 3.7));
        assert!(matches!(err, Err(Error::Inadmissible(_))));
    }
}
