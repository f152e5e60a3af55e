use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mond-equilib"))
        .arg("--out")
        .arg(dir)
        .arg("--no-timestamp")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout_value(o: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text
        .lines()
        .find(|l| l.split('=').next().map(str::trim) == Some(key))
        .unwrap_or_else(|| panic!("no `{key}` in {text}"));
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn solve_by_central_density_matches_deep_parabola() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["solve", "--central", "0.001"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = stdout_value(&o, "M");
    assert!((m / 1.06e-6 - 1.0).abs() < 0.05, "M = {m}");
    assert!(t.path().join("model.snap").exists());
    let energies = csv_rows(&t.path().join("energies.csv"));
    assert_eq!(energies[4][0], "h_value");
}

#[test]
fn solve_round_trip_through_mass() {
    let t = TempDir::new().unwrap();
    let first = run(t.path(), &["solve", "--central", "0.37"]);
    let m = stdout_value(&first, "M");
    let back = run(t.path(), &["solve", "--mass", &format!("{m:.17e}")]);
    assert_eq!(code(&back), 0);
    let s = stdout_value(&back, "s");
    assert!((s / 0.37 - 1.0).abs() < 1e-6, "s = {s}");
}

#[test]
fn solve_flag_errors() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(t.path(), &["solve", "--mass", "0"])), 2);
    assert_eq!(
        code(&run(t.path(), &["solve", "--mass", "1", "--central", "1"])),
        2
    );
    assert_eq!(code(&run(t.path(), &["solve"])), 2);
}

#[test]
fn mass_curve_defaults_and_validation() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["mass-curve"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&t.path().join("mass_curve.csv"));
    assert_eq!(rows.len(), 60);
    let masses: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(masses.windows(2).all(|w| w[1] > w[0]));
    let fits = csv_rows(&t.path().join("fits.csv"));
    let deep = fits.iter().find(|r| r[0] == "deep").unwrap();
    let p: f64 = deep[5].parse().unwrap();
    assert!((p - 2.0).abs() <= 0.02, "{p}");

    assert_eq!(code(&run(t.path(), &["mass-curve", "--points", "1"])), 2);
    assert_eq!(code(&run(t.path(), &["mass-curve", "--s-min", "0"])), 2);
}

#[test]
fn outputs_are_reproducible_without_timestamp() {
    let t = TempDir::new().unwrap();
    let read = |name: &str| fs::read(t.path().join(name)).unwrap();
    run(t.path(), &["mass-curve", "--points", "8"]);
    let (a, b) = (read("mass_curve.csv"), read("fits.csv"));
    run(t.path(), &["mass-curve", "--points", "8"]);
    assert_eq!(a, read("mass_curve.csv"));
    assert_eq!(b, read("fits.csv"));

    let stamped = Command::new(env!("CARGO_BIN_EXE_mond-equilib"))
        .arg("--out")
        .arg(t.path())
        .args(["mass-curve", "--points", "8"])
        .output()
        .unwrap();
    assert!(stamped.status.success());
    let text = fs::read_to_string(t.path().join("mass_curve.csv")).unwrap();
    assert!(text.starts_with("# generated"));
}

#[test]
fn config_file_and_overrides() {
    let t = TempDir::new().unwrap();
    let cfg = t.path().join("run.cfg");
    fs::write(&cfg, "lambda.family = simple\ngrid.resolution = 800\n").unwrap();
    let o = run(
        t.path(),
        &["--config", cfg.to_str().unwrap(), "solve", "--central", "1"],
    );
    assert_eq!(code(&o), 0);
    let echoed = fs::read_to_string(t.path().join("run.config")).unwrap();
    assert!(echoed.contains("lambda.family = simple"));

    fs::write(&cfg, "lambda.flavour = simple\n").unwrap();
    assert_eq!(
        code(&run(
            t.path(),
            &["--config", cfg.to_str().unwrap(), "solve", "--central", "1"]
        )),
        2
    );
    assert_eq!(
        code(&run(
            t.path(),
            &["--set", "ansatz.exponent=-1", "solve", "--central", "1"]
        )),
        2
    );
}

#[test]
fn verify_potential_reports_qumond_rows() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["verify", "potential"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = csv_rows(&t.path().join("verify.csv"));
    assert!(rows
        .iter()
        .any(|r| r[0] == "qumond_direct_vs_radial" && r[1] == "pass"));
    assert!(rows.iter().all(|r| r[1] == "pass"));
}

#[test]
fn verify_rejects_corrupted_snapshot() {
    let t = TempDir::new().unwrap();
    run(t.path(), &["solve", "--central", "1"]);
    let snap = fs::read_to_string(t.path().join("model.snap")).unwrap();
    let bad = t.path().join("bad.snap");
    fs::write(&bad, &snap[..snap.len() / 2]).unwrap();
    assert_eq!(
        code(&run(
            t.path(),
            &["verify", "potential", "--model", bad.to_str().unwrap()]
        )),
        2
    );
    fs::write(
        &bad,
        snap.replacen("lambda.family = sqrt", "lambda.family = cubic", 1),
    )
    .unwrap();
    assert_eq!(
        code(&run(
            t.path(),
            &["verify", "potential", "--model", bad.to_str().unwrap()]
        )),
        2
    );
    assert_eq!(code(&run(t.path(), &["verify", "everything"])), 2);
}

#[test]
fn lift_and_perturb() {
    let t = TempDir::new().unwrap();
    let o = run(t.path(), &["lift"]);
    assert_eq!(code(&o), 0);
    let lift = csv_rows(&t.path().join("lift.csv"));
    let get = |k: &str| -> f64 { lift.iter().find(|r| r[0] == k).unwrap()[1].parse().unwrap() };
    assert!((get("reduced_n") - 2.0).abs() < 1e-3);
    assert!(get("h_rel_diff") < 1e-6);
    assert!(get("density_mismatch") < 1e-6);

    assert_eq!(code(&run(t.path(), &["perturb", "--eps", "0.5"])), 2);
    let model = t.path().join("lift.snap");
    let args = [
        "perturb",
        "--eps",
        "0",
        "--t-end",
        "1",
        "--shells",
        "2000",
        "--model",
        model.to_str().unwrap(),
    ];
    let o = run(t.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let diag = csv_rows(&t.path().join("diagnostics.csv"));
    assert_eq!(diag.len(), 5);
    let summary = csv_rows(&t.path().join("summary.csv"));
    let drift: f64 = summary.iter().find(|r| r[0] == "energy_drift").unwrap()[2]
        .parse()
        .unwrap();
    assert!(drift < 1e-3);
    let first = fs::read(t.path().join("diagnostics.csv")).unwrap();
    run(t.path(), &args);
    assert_eq!(first, fs::read(t.path().join("diagnostics.csv")).unwrap());
}

#[test]
fn perturb_rejects_a_fluid_snapshot_that_is_not_a_reduction() {
    let t = TempDir::new().unwrap();
    run(t.path(), &["solve", "--central", "1"]);
    let model = t.path().join("model.snap");
    let o = run(
        t.path(),
        &[
            "perturb",
            "--eps",
            "0.01",
            "--shells",
            "1000",
            "--model",
            model.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 2);
}
