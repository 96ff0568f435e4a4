use std::path::Path;
use std::process::{Command, Output};

use esbgk::boundary::BoundaryData;
use esbgk::gaussian::maxwellian;
use esbgk::vgrid::{GridSpec, Rule, VelocityGrid};
use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_esbgk");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ESBGK_THREADS").output().expect("binary runs")
}

fn small_grid() -> Value {
    json!({ "counts": [16, 8, 8], "v_max": 6.0, "rule": "gauss-legendre", "breakpoints": [1.0, 2.0] })
}

fn remark4() -> Value {
    json!({ "kind": "remark4", "c_l": 1.0, "c_r": 1.0, "r1": 1.0, "r2": 2.0 })
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
    (headers, rows)
}

#[test]
fn check_accepts_the_reference_family() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &json!({ "solver": { "tau": 100.0 }, "boundary": remark4() }));
    let out_dir = dir.path().to_str().unwrap();
    let out = run(&["check", "--config", &cfg, "--out-dir", out_dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let q = read_json(&dir.path().join("quantities.json"));
    assert_eq!(q["admissible"], json!(true));
    for key in ["a_u", "a_l", "a_s", "c_u", "c_l", "c_s", "gamma_l", "tau"] {
        assert!(q["quantities"][key].is_f64(), "missing {key}");
    }
    assert_eq!(q["conditions"]["non_concentration"]["pass"], json!(true));
}

#[test]
fn check_rejects_a_half_maxwellian_near_grazing_speeds() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GridSpec::new([16, 8, 8], 6.0, 0.05, Rule::GaussLegendre);
    let grid = VelocityGrid::build(&spec).unwrap();
    let values = grid.sample(|v| if v[0] != 0.0 { maxwellian(1.0, [0.0; 3], 1.0, v) } else { 0.0 });
    let data = dir.path().join("inflow.csv");
    BoundaryData::tabulated(values, 0.0, &grid).unwrap().write_csv(&data, &grid).unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({
            "grid": { "counts": [16, 8, 8], "v_max": 6.0, "eps_v1": 0.05 },
            "solver": { "tau": 100.0 },
            "boundary": { "kind": "tabulated", "path": data },
        }),
    );
    let out = run(&["check", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let q = read_json(&dir.path().join("quantities.json"));
    assert_eq!(q["admissible"], json!(false));
    assert_eq!(q["conditions"]["non_concentration"]["pass"], json!(false));
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-concentration"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"solver\": ").unwrap();
    let out_dir = dir.path().to_str().unwrap();
    assert_eq!(run(&["check", "--config", bad.to_str().unwrap(), "--out-dir", out_dir]).status.code(), Some(2));

    let cfg = write_config(
        dir.path(),
        &json!({ "grid": small_grid(), "solver": { "tau": 100.0 }, "boundary": remark4(), "sweep": { "taus": [] } }),
    );
    assert_eq!(run(&["sweep", "--config", &cfg, "--out-dir", out_dir]).status.code(), Some(2));

    let blocker = dir.path().join("not-a-dir");
    std::fs::write(&blocker, "").unwrap();
    let nested = blocker.join("out");
    assert_eq!(run(&["check", "--config", &cfg, "--out-dir", nested.to_str().unwrap()]).status.code(), Some(2));

    let both = write_config(dir.path(), &json!({ "solver": { "tau": 1.0, "kappa": 1.0 }, "boundary": remark4() }));
    assert_eq!(run(&["check", "--config", &both, "--out-dir", out_dir]).status.code(), Some(2));
}

#[test]
fn selftest_passes_and_detects_injected_faults() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["selftest", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&dir.path().join("selftest.json"));
    assert_eq!(doc["pass"], json!(true));
    assert_eq!(doc["items"].as_array().unwrap().len(), 7);

    let faulty = run(&["selftest", "--inject-fault", "tensor-sandwich"]);
    assert_eq!(faulty.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&faulty.stderr).contains("tensor-sandwich"));
    assert_eq!(run(&["selftest", "--inject-fault", "bogus"]).status.code(), Some(2));
}

#[test]
fn solve_writes_artifacts_with_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({ "grid": small_grid(), "n_x": 17, "solver": { "tau": 100.0, "nu": 0.3 }, "boundary": remark4() }),
    );
    let out = run(&["solve", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap(), "--dump-field"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let (headers, rows) = read_csv(&dir.path().join("profiles.csv"));
    assert_eq!(headers, esbgk::cli::output::PROFILE_COLUMNS.map(str::to_owned));
    assert_eq!(rows.len(), 17);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[16][0].parse::<f64>().unwrap(), 1.0);
    for row in &rows {
        let vals: Vec<f64> = row.iter().map(|s| s.parse().unwrap()).collect();
        assert!(vals[1] > 0.0 && vals[5] > 0.0);
        let trace = vals[6] + vals[9] + vals[11];
        assert!((trace - 3.0 * vals[5]).abs() <= 1e-12 * vals[5]);
    }

    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["status"], json!("converged"));
    assert_eq!(s["n_x"], json!(17));
    let iters = s["iterations"].as_u64().unwrap() as usize;
    assert_eq!(s["distances"].as_array().unwrap().len(), iters);
    assert_eq!(s["omega_all_pass"], json!(true));
    assert!(s["mild_residual"].as_f64().unwrap() <= s["threshold"].as_f64().unwrap());
    assert!(s["entropy_max"].as_f64().unwrap() <= 1e-8);
    assert!(s["max_alpha"].as_f64().unwrap() < 1.0);

    let checks = read_json(&dir.path().join("checks.json"));
    assert!(checks["solve_report"].is_object() && checks["checks"].is_object());

    let layout = read_json(&dir.path().join("field.json"));
    let shape: Vec<usize> = layout["shape"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect();
    assert_eq!(shape[0], 17);
    assert_eq!(shape[1], 16);
    let bytes = std::fs::metadata(dir.path().join("field.bin")).unwrap().len() as usize;
    assert_eq!(bytes, 8 * shape.iter().product::<usize>());
    assert_eq!(layout["v1"].as_array().unwrap().len(), 16);
}

#[test]
fn sweep_writes_one_row_per_tau() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({
            "grid": small_grid(), "n_x": 17, "solver": { "tau": 1000.0 }, "boundary": remark4(),
            "sweep": { "taus": [10.0, 100.0, 1000.0] },
        }),
    );
    let out = run(&["sweep", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (headers, rows) = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(headers, esbgk::cli::output::SWEEP_COLUMNS.map(str::to_owned));
    assert_eq!(rows.len(), 3);
    let alphas: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(alphas.windows(2).all(|w| w[1] < w[0]), "{alphas:?}");
    assert!(rows.iter().all(|r| r[1] == "true" && r[7].is_empty()));
    let doc = read_json(&dir.path().join("checks.json"));
    assert_eq!(doc["contraction_study"]["terminal_alpha_decreasing"], json!(true));
}

#[test]
fn small_knudsen_number_reports_the_failed_condition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({ "grid": small_grid(), "n_x": 17, "solver": { "kappa": 0.001 }, "boundary": remark4() }),
    );
    let out = run(&["solve", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["status"], json!("failed"));
    let failed = s["details"]["failed_conditions"].as_array().unwrap();
    assert!(!failed.is_empty());
    assert!(!dir.path().join("profiles.csv").exists());
}

#[test]
fn sweep_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &json!({
            "grid": small_grid(), "n_x": 17, "solver": { "tau": 100.0, "nu": 0.5 }, "boundary": remark4(),
            "sweep": { "taus": [10.0, 100.0, 1000.0] },
        }),
    );
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(threads);
        let status = run(&["--threads", threads, "sweep", "--config", &cfg, "--out-dir", out.to_str().unwrap()]);
        assert_eq!(status.status.code(), Some(0));
        outputs.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

/// The column tables in docs/artifacts.md are the contract read by the
/// plotting scripts; they must list exactly the columns that are written.
#[test]
fn documented_columns_match_the_writers() {
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/artifacts.md")).unwrap();
    let table = |heading: &str| -> Vec<String> {
        let start = doc.find(heading).unwrap_or_else(|| panic!("missing section {heading}"));
        doc[start..]
            .lines()
            .skip_while(|l| !l.starts_with("| column"))
            .skip(2)
            .take_while(|l| l.starts_with('|'))
            .map(|l| l.split('|').nth(1).unwrap().trim().trim_matches('`').to_owned())
            .collect()
    };
    assert_eq!(table("## profiles.csv"), esbgk::cli::output::PROFILE_COLUMNS.map(str::to_owned));
    assert_eq!(table("## sweep.csv"), esbgk::cli::output::SWEEP_COLUMNS.map(str::to_owned));
}

#[test]
fn shipped_reference_config_is_admissible() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.json");
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["check", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
