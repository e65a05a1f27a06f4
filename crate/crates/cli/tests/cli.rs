use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffcontact"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn column(csv_path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn unknown_preset_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--preset", "Pendulum"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("BP5") && err.contains("Gyro"), "{err}");
}

#[test]
fn missing_dataset_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["fit"], dir.path()).status.code(), Some(4));
    let missing = dir.path().join("absent.json");
    let o = run(&["eval", "--dataset", missing.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bad_options_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--preset", "CP3", "--dt", "-0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["simulate", "--preset", "CP3", "--variant", "cm", "--epsilon", "0.1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"preset": "CP3", "unknown_key": 1}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = run(&["simulate", "--preset", "CP3", "--seed", "7", "--steps", "50"], out);
        assert!(o.status.success());
    }
    for f in ["trajectory.json", "energy.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn elastic_balls_keep_energy() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--preset", "BP5-e", "--steps", "100", "--seed", "3"], dir.path());
    assert!(o.status.success());
    let e = column(&dir.path().join("energy.csv"), "E");
    assert_eq!(e.len(), 101);
    for v in &e {
        assert!((v - e[0]).abs() <= 1e-4 * e[0].abs(), "{v} vs {}", e[0]);
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"preset": "CP3", "sim": {"n_steps": 20}}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(column(&dir.path().join("energy.csv"), "t").len(), 21);
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--steps", "10"], dir.path());
    assert!(o.status.success());
    assert_eq!(column(&dir.path().join("energy.csv"), "t").len(), 11);
}

#[test]
fn eval_with_truth_has_no_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--preset", "CP3", "--trajectories", "10", "--seed", "2"], dir.path());
    assert!(o.status.success());
    let data = dir.path().join("dataset.json");
    let o = run(&["eval", "--dataset", data.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for r in column(&dir.path().join("relative_errors.csv"), "rel_err") {
        assert!(r <= 1e-8, "{r}");
    }
    let learned = column(&dir.path().join("eval.csv"), "mu_learned");
    assert_eq!(learned, column(&dir.path().join("eval.csv"), "mu_true"));
}

#[test]
fn short_fit_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["generate", "--preset", "BP5", "--trajectories", "4", "--seed", "5"], dir.path());
    assert!(o.status.success());
    let data = dir.path().join("dataset.json");
    let o = run(&["fit", "--dataset", data.to_str().unwrap(), "--epochs", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(column(&dir.path().join("losses.csv"), "loss").len(), 3);
    let fit = dir.path().join("fit.json");
    let o = run(&["eval", "--dataset", data.to_str().unwrap(), "--fit", fit.to_str().unwrap()], dir.path());
    assert!(o.status.success());
}

#[test]
fn plan_best_so_far_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plan", "--task", "billiards", "--iters", "10"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let best = column(&dir.path().join("loss.csv"), "best");
    assert_eq!(best.len(), 11);
    assert!(best.windows(2).all(|w| w[1] <= w[0]));
    assert!(dir.path().join("rollout.json").exists());
}

#[test]
fn exported_presets_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["export-presets"], dir.path());
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("gyro.json")).unwrap();
    let p = diffcontact::systems::parse_preset(&text).unwrap();
    assert_eq!(p, diffcontact::systems::preset("Gyro").unwrap());
}
