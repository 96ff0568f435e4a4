//! JSON run configuration.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::boundary::BoundaryData;
use crate::error::{Error, Result};
use crate::solver::{OmegaEnforce, SolverConfig};
use crate::vgrid::{GridSpec, VelocityGrid};

fn default_grid() -> GridSpec {
    GridSpec::production()
}

fn default_n_x() -> usize {
    64
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    /// Knudsen number; exactly one of `kappa` and `tau` must be given.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub omega_enforce: OmegaEnforce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BoundarySection {
    Remark4 {
        c_l: f64,
        c_r: f64,
        r1: f64,
        r2: f64,
    },
    Tabulated {
        path: PathBuf,
        #[serde(default)]
        vanish_band: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub taus: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_grid")]
    pub grid: GridSpec,
    #[serde(default = "default_n_x")]
    pub n_x: usize,
    pub solver: SolverSection,
    pub boundary: BoundarySection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub dump_field: bool,
    /// Directory against which relative paths in the file are resolved.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 {
            return Err(Error::Config(format!("n_x must be at least 2, got {}", self.n_x)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        match (self.solver.kappa, self.solver.tau) {
            (Some(_), Some(_)) => return Err(Error::Config("give either solver.kappa or solver.tau, not both".into())),
            (None, None) => return Err(Error::Config("solver.kappa or solver.tau is required".into())),
            _ => {}
        }
        self.solver_config()?;
        if let BoundarySection::Remark4 { c_l, c_r, r1, r2 } = self.boundary {
            BoundaryData::remark4_family(c_l, c_r, r1, r2)?;
        }
        if self.sweep.taus.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("sweep.taus must be positive".into()));
        }
        if self.sweep.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sweep.taus must be strictly ascending".into()));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> Result<SolverConfig> {
        let s = &self.solver;
        let base = match (s.kappa, s.tau) {
            (Some(k), _) => SolverConfig::new(k, s.nu)?,
            (None, Some(t)) => SolverConfig::from_tau(t, s.nu)?,
            (None, None) => return Err(Error::Config("solver.kappa or solver.tau is required".into())),
        };
        let cfg = base.with_tol(s.tol).with_max_iter(s.max_iter).with_enforce(s.omega_enforce);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configured grid with the data's jump locations added as panel edges.
    pub fn build_grid(&self) -> Result<VelocityGrid> {
        let mut spec = self.grid.clone();
        match self.boundary {
            BoundarySection::Remark4 { r1, r2, .. } => spec = spec.with_breakpoints(&[r1, r2]),
            BoundarySection::Tabulated { vanish_band, .. } if vanish_band > 0.0 => {
                spec = spec.with_breakpoints(&[vanish_band])
            }
            BoundarySection::Tabulated { .. } => {}
        }
        VelocityGrid::build(&spec)
    }

    pub fn boundary_data(&self, grid: &VelocityGrid) -> Result<BoundaryData> {
        match &self.boundary {
            BoundarySection::Remark4 { c_l, c_r, r1, r2 } => BoundaryData::remark4_family(*c_l, *c_r, *r1, *r2),
            BoundarySection::Tabulated { path, vanish_band } => {
                let full = if path.is_absolute() { path.clone() } else { self.base_dir.join(path) };
                BoundaryData::from_csv(&full, grid, *vanish_band).map_err(|e| match e {
                    Error::Io(io) => Error::Config(format!("cannot read {}: {io}", full.display())),
                    Error::Csv(c) => Error::Config(format!("cannot parse {}: {c}", full.display())),
                    other => other,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "solver": {"kappa": 50.0},
        "boundary": {"kind": "remark4", "c_l": 1, "c_r": 1, "r1": 1, "r2": 2}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(c.grid, GridSpec::production());
        assert_eq!(c.n_x, 64);
        let s = c.solver_config().unwrap();
        assert_eq!((s.tol, s.max_iter, s.omega_enforce), (1e-10, 200, OmegaEnforce::Strict));
        let g = c.build_grid().unwrap();
        assert_eq!(g.len(), 48 * 24 * 24);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("\"kappa\"", "\"kapa\"");
        assert!(RunConfig::from_json(&bad, Path::new(".")).is_err());
        let bad = MINIMAL.replace("\"r2\": 2", "\"r2\": 2, \"r3\": 4");
        assert!(RunConfig::from_json(&bad, Path::new(".")).is_err());
        let bad = MINIMAL.replace("\"solver\"", "\"extra\": 1, \"solver\"");
        assert!(RunConfig::from_json(&bad, Path::new(".")).is_err());
    }

    #[test]
    fn ranges_are_validated() {
        for (from, to) in [
            ("\"kappa\": 50.0", "\"kappa\": 50.0, \"nu\": 1.0"),
            ("\"kappa\": 50.0", "\"kappa\": 50.0, \"tau\": 3.0"),
            ("\"kappa\": 50.0", "\"tol\": 1e-8"),
            ("\"r1\": 1", "\"r1\": 3"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(RunConfig::from_json(&text, Path::new(".")), Err(Error::Config(_))), "{to}");
        }
    }

    #[test]
    fn tau_sets_kappa() {
        let text = MINIMAL.replace("\"kappa\": 50.0", "\"tau\": 10.0, \"nu\": 0.5");
        let c = RunConfig::from_json(&text, Path::new(".")).unwrap();
        let s = c.solver_config().unwrap();
        assert!((s.kappa - 20.0).abs() < 1e-12);
    }
}
