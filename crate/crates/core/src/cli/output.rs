//! Artifact writers. Floating-point columns use 17 significant digits.

use serde::Serialize;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::moments::MomentSet;
use crate::verify::{FluxTable, SweepRow};

pub const PROFILE_COLUMNS: [&str; 17] = [
    "x",
    "rho",
    "U1",
    "U2",
    "U3",
    "T",
    "Theta11",
    "Theta12",
    "Theta13",
    "Theta22",
    "Theta23",
    "Theta33",
    "flux_mass",
    "flux_mom1",
    "flux_mom2",
    "flux_mom3",
    "flux_energy",
];

pub const SWEEP_COLUMNS: [&str; 8] =
    ["tau", "converged", "iterations", "max_alpha", "terminal_alpha", "transverse_momentum_max", "flux_drift", "error"];

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_profiles(path: &Path, moments: &[MomentSet], flux: &FluxTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PROFILE_COLUMNS)?;
    for (m, ms) in moments.iter().enumerate() {
        let th = ms.theta.upper();
        let mut row = vec![flux.x[m], ms.rho, ms.u[0], ms.u[1], ms.u[2], ms.t];
        row.extend_from_slice(&th);
        row.extend_from_slice(&flux.rows[m]);
        w.write_record(row.into_iter().map(num))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SWEEP_COLUMNS)?;
    for r in rows {
        w.write_record([
            num(r.tau),
            r.converged.to_string(),
            r.iterations.to_string(),
            num(r.max_alpha),
            num(r.terminal_alpha),
            num(r.transverse_momentum_max),
            num(r.flux_drift),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Fails early if files cannot be created in `dir`.
pub fn prepare_out_dir(dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let probe = dir.join(".esbgk-write-probe");
    std::fs::File::create(&probe)?.write_all(b"")?;
    std::fs::remove_file(probe)
}
