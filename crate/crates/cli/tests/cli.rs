use std::path::Path;
use std::process::{Command, Output};

fn tonegap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tonegap")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = tonegap(args);
    assert!(
        out.status.success(),
        "tonegap {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn schedule_prints_worked_example() {
    let out = ok(&["schedule", "--gaps", "24:26,29:30,32,34:35"]);
    let order: Vec<&str> = out.lines().take(4).map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(order, ["32:32", "29:30", "34:35", "24:26"]);
    assert!(out.contains("rounds: 3"));
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cap = dir.path().join("cap.txt");
    ok(&["simulate", "--preset", "gap2", "--seed", "5", "--out", s(&cap)]);
    let text = std::fs::read_to_string(&cap).unwrap();
    assert!(text.starts_with("f0_hz = 2401000000\ndelta_f_hz = 1000000\nK = 80\n"));
    assert_eq!(text.lines().count(), 4 + 80);
    let out = ok(&["estimate", s(&cap), "--mode", "mps,wps,zero_pad"]);
    for mode in ["mps", "wps", "zero_pad"] {
        let line = out.lines().find(|l| l.starts_with(mode)).unwrap();
        let d: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
        assert!((0.0..30.0).contains(&d), "{line}");
    }
}

#[test]
fn benchmark_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["benchmark", "--preset", "gap3", "--seed", "8", "--mode", "mps,wps", "--realizations", "12", "--out", s(out)]);
    }
    for f in ["runs.csv", "summary.txt", "cdf_mps.csv", "cdf_wps.csv"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert_eq!(x, y, "{f} differs");
    }
    let runs = std::fs::read_to_string(a.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 24);
}

#[test]
fn config_file_and_rician_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "seed = 4\nrealizations = 5\nschemes = [\"wps\"]\npreset = \"gap1\"\nrician_sweep_db = [-5.0, 5.0]\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    ok(&["benchmark", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert!(out_dir.join("rician_-5_runs.csv").exists());
    assert!(out_dir.join("rician_5_summary.txt").exists());
}

#[test]
fn sweep_smoothing_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["sweep-smoothing", "--realizations", "4", "--fractions", "0.1,0.5", "--out", s(dir.path())]);
    assert!(out.contains("  0.1    9"));
    let csv = std::fs::read_to_string(dir.path().join("smoothing.csv")).unwrap();
    assert!(csv.starts_with("fraction,L,median_abs_m,rmse_m,failures\n0.1,9,"));
    assert!(csv.contains("\n0.5,41,"));
}

#[test]
fn train_recover_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bank = dir.path().join("bank.bin");
    let out = ok(&["train-nn", "--max-width", "3", "--train-size", "500", "--epochs", "2", "--out", s(&bank)]);
    assert_eq!(out.lines().filter(|l| l.contains("validation nmse")).count(), 6);
    let cap = dir.path().join("cap.txt");
    ok(&["simulate", "--preset", "gap1", "--out", s(&cap)]);
    let filled = dir.path().join("filled.txt");
    ok(&["recover", s(&cap), "--mode", "nn", "--bank", s(&bank), "--out", s(&filled)]);
    let text = std::fs::read_to_string(&filled).unwrap();
    assert!(text.lines().skip(4).all(|l| l.split(',').nth(1) == Some("1")));
    let est = ok(&["estimate", s(&filled), "--mode", "reference"]);
    assert!(est.starts_with("reference"), "{est}");
    assert!(ok(&["benchmark", "--preset", "gap1", "--mode", "nn", "--bank", s(&bank), "--realizations", "3", "--out", s(dir.path())])
        .contains("nn "));
}

#[test]
fn errors_are_reported() {
    let out = tonegap(&["benchmark", "--preset", "gap9", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("gap9"));
    let out = tonegap(&["benchmark", "--mode", "nn", "--realizations", "2", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "f0_hz = 2.4e9\ndelta_f_hz = 1e6\nK = 2\n0,1,0,1,0,1\n").unwrap();
    let out = tonegap(&["estimate", s(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"), "{out:?}");
}
