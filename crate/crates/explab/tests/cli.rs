use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn explab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_explab")).args(args).output().expect("run explab")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("explab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, body: &str) -> PathBuf {
    let path = scratch(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("missing {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn infer_reports_efficiency_and_source() {
    let out = explab(&["infer", "--measured-db", "-3.5", "--transmission", "1", "--qe", "0.95", "--visibility", "0.99"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!((value(&text, "eta") - 0.931095).abs() < 1e-9);
    assert!((value(&text, "source_db") + 3.917567).abs() < 1e-5);

    let out = explab(&["infer", "--measured-db", "0", "--transmission", "0.5", "--qe", "0.9", "--visibility", "0.9"]);
    assert!(out.status.success());
    assert_eq!(value(&stdout(&out), "source_db"), 0.0);
}

#[test]
fn infer_rejects_inconsistent_measurement() {
    let out = explab(&["infer", "--measured-db", "-10", "--transmission", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn zero_steps_is_a_config_error() {
    let cfg = write_config("steps.toml", "tier = \"shear\"\n");
    let csv = scratch("steps.csv");
    let out = explab(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--param", "shear_g", "--from", "0", "--to", "1", "--steps", "0",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let cfg = write_config("typo.toml", "[drive]\npower_mW = 6\n");
    let out = explab(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power_mW"));
}

#[test]
fn failed_simulation_exits_three() {
    let cfg = write_config(
        "dark.toml",
        "[atom]\nground_relax_khz = 0\n[drive]\npower_mw = 0\n[field]\nb_x_mg = 0\n[analysis]\nslices = 2\n",
    );
    let out = explab(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_shear_tier_override() {
    let cfg = write_config("tier.toml", "[shear]\ng = 2.0\nslices = 10\n");
    let out = explab(&["simulate", "--config", cfg.to_str().unwrap(), "--tier", "shear"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("tier=shear"));
    assert!((value(&text, "min_db") + 7.655513).abs() < 1e-5);
}

#[test]
fn scan_then_tomography() {
    let cfg = write_config("scan.toml", "tier = \"shear\"\n[shear]\ng = 1.0\nslices = 10\n");
    let scan = scratch("scan.csv");
    let wigner = scratch("wigner.csv");
    let out = explab(&["scan-phase", "--config", cfg.to_str().unwrap(), "--points", "24", "--out", scan.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&scan).unwrap();
    assert!(text.starts_with("phi_rad,variance_snu,samples\n"));
    assert_eq!(text.lines().count(), 25);

    let out = explab(&["tomo", "--scan", scan.to_str().unwrap(), "--out", wigner.to_str().unwrap(), "--n", "11"]);
    assert!(out.status.success());
    let fitted = stdout(&out);
    // shear g = 1: Σ = ¼ [[1, -1], [-1, 2]]
    assert!((value(&fitted, "sigma_xx") - 0.25).abs() < 1e-8);
    assert!((value(&fitted, "sigma_pp") - 0.5).abs() < 1e-8);
    assert!((value(&fitted, "sigma_xp") + 0.25).abs() < 1e-8);
    let w = std::fs::read_to_string(&wigner).unwrap();
    assert!(w.starts_with("# half_width=1.50000000e0\n# n=11\n"));
    assert_eq!(w.lines().count(), 13);
}

#[test]
fn tomography_needs_three_phases() {
    let scan = write_config("two_phase.csv", "phi_rad,variance_snu,samples\n0,1,0\n1,1,0\n");
    let out = explab(&["tomo", "--scan", scan.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_is_reproducible() {
    let cfg = write_config(
        "repro.toml",
        "[analysis]\nslices = 20\n[sweep]\nparam = \"b_z_mG\"\nfrom = 0\nto = 200\nsteps = 3\n",
    );
    let a = scratch("repro_a.csv");
    let b = scratch("repro_b.csv");
    for path in [&a, &b] {
        let out = explab(&["sweep", "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn plot_matches_golden_file() {
    let svg = scratch("golden.svg");
    let out = explab(&["plot", "--in", fixture("two_point.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read(&svg).unwrap(), std::fs::read(fixture("two_point.svg")).unwrap());
}

#[test]
fn plot_without_rows_fails() {
    let csv = write_config("empty.csv", "param,value,min_db,max_db,angle_rad,error\n");
    let out = explab(&["plot", "--in", csv.to_str().unwrap(), "--out", scratch("empty.svg").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            explab::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
