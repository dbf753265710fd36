use std::path::Path;
use std::process::{Command, Output};

use reciprocal_cli::commands::{CHAMPION_FILE, COMPARE_CSV, HISTORY_CSV, HISTORY_SVG, SWEEP_CSV};

const SMALL: &str = "population = 6\ngenerations = 2\ntraining_angles = [60.0, 180.0]\nclassifier_samples = 200\n";

fn reciprocal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reciprocal")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn train_writes_three_stamped_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = reciprocal(&["--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap(), "train"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for name in [CHAMPION_FILE, HISTORY_CSV, HISTORY_SVG] {
        let line = first_line(&out.join(name));
        assert!(line.contains("reciprocal 0.1.0 config="), "{name}: {line}");
        assert!(line.contains("seed=3 run=train-"), "{name}: {line}");
    }
    let history = std::fs::read_to_string(out.join(HISTORY_CSV)).unwrap();
    assert_eq!(history.lines().count(), 2 + 2);
}

#[test]
fn sweep_has_one_row_per_angle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert!(reciprocal(&["--config", &cfg, "--out", out, "train"]).status.success());
    let genome = format!("{out}/{CHAMPION_FILE}");
    let res = reciprocal(&["--config", &cfg, "--out", out, "--genome", &genome, "--angles", "1:180:1", "sweep"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(Path::new(out).join(SWEEP_CSV)).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# reciprocal"));
    assert_eq!(lines.next().unwrap(), "theta,r_star,feasible,d_min,strategy,delta_v,phi,evaluations");
    assert_eq!(lines.count(), 180);
}

#[test]
fn compare_with_empty_angle_list_is_empty_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert!(reciprocal(&["--config", &cfg, "--out", out, "train"]).status.success());
    assert!(reciprocal(&["--config", &cfg, "--out", out, "--angles", "", "pso"]).status.success());
    let genome = format!("{out}/{CHAMPION_FILE}");
    let pso = format!("{out}/pso.csv");
    let res = reciprocal(&["--config", &cfg, "--out", out, "--genome", &genome, "compare", "--pso", &pso]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let text = std::fs::read_to_string(Path::new(out).join(COMPARE_CSV)).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "generatons = 3\n");
    let res = reciprocal(&["--config", &cfg, "train"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("generatons"));

    let cfg = write_config(dir.path(), "population = 1\n");
    assert_eq!(reciprocal(&["--config", &cfg, "train"]).status.code(), Some(2));
    assert_eq!(reciprocal(&["--angles", "0:10:1", "pso"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = dir.path().join("out");
    let res = reciprocal(&["--out", out.to_str().unwrap(), "--genome", missing.to_str().unwrap(), "sweep"]);
    assert_eq!(res.status.code(), Some(3));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"version\": 1, \"genome\": {}}").unwrap();
    let res =
        reciprocal(&["--out", out.to_str().unwrap(), "--genome", bad.to_str().unwrap(), "validate", "--theta", "90"]);
    assert_eq!(res.status.code(), Some(3));
}
