//! CLI integration: exit codes, file outputs, and env-controlled threading.

use std::path::Path;
use std::process::Command;

fn soco_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_soco"))
}

fn write_config(dir: &Path, output_prefix: &str, samples: usize) -> std::path::PathBuf {
    let config = serde_json::json!({
        "spec": {"k": [[1.0]], "beta": 0.8, "horizon": 16},
        "impulse": {"kind": "explicit", "taps": [1.0, 0.5]},
        "noise": {"family": "uniform-bounded", "r_e": [[1.0 / 3.0]], "epsilon": 1.0},
        "y_hat": {"kind": "sinusoid", "amplitude": [1.0], "period": 8.0},
        "algorithms": [{"name": "afhc", "w": 3}, {"name": "opt"}, {"name": "sta"}],
        "samples": samples,
        "seed": 7,
        "output": output_prefix
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn run_produces_outputs_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("exp").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 12);
    let out = soco_bin()
        .args(["run", "--config", config.to_str().unwrap(), "--check"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(format!("{prefix}.samples.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sample,seed,algorithm,w,cost_total,cost_tracking,cost_switching,cost_opt,cost_sta,regret,comp_diff,g1,g2"
    );
    // 12 samples x 3 algorithms.
    assert_eq!(lines.count(), 36);
    assert!(Path::new(&format!("{prefix}.summary.json")).exists());
    assert!(Path::new(&format!("{prefix}.config.json")).exists());
    // OPT rows leave w and g1/g2 empty.
    let opt_row = csv.lines().find(|l| l.contains(",OPT,")).unwrap();
    assert!(opt_row.ends_with(",,"));
}

#[test]
fn config_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("echo").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 5);
    let ok = soco_bin()
        .args(["run", "--config", config.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(ok.success());
    // Re-running from the echoed config reproduces every byte.
    let echoed = format!("{prefix}.config.json");
    let first_csv = std::fs::read(format!("{prefix}.samples.csv")).unwrap();
    let first_summary = std::fs::read(format!("{prefix}.summary.json")).unwrap();
    let ok = soco_bin()
        .args(["run", "--config", &echoed])
        .status()
        .unwrap();
    assert!(ok.success());
    assert_eq!(first_csv, std::fs::read(format!("{prefix}.samples.csv")).unwrap());
    assert_eq!(
        first_summary,
        std::fs::read(format!("{prefix}.summary.json")).unwrap()
    );
    let echo_again = std::fs::read_to_string(&echoed).unwrap();
    let reparsed: serde_json::Value = serde_json::from_str(&echo_again).unwrap();
    assert_eq!(reparsed["samples"], 5);
}

#[test]
fn montecarlo_overrides_sample_count() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("mc").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 3);
    let out = soco_bin()
        .args([
            "montecarlo",
            "--config",
            config.to_str().unwrap(),
            "--samples",
            "9",
            "--check",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = std::fs::read_to_string(format!("{prefix}.samples.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, 9 * 3);
    // The echoed config reflects the override.
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{prefix}.config.json")).unwrap())
            .unwrap();
    assert_eq!(echo["samples"], 9);
}

#[test]
fn validation_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = serde_json::json!({
        "spec": {"k": [[1.0]], "beta": 0.8, "horizon": 4},
        "impulse": {"kind": "iid"},
        "noise": {"family": "gaussian", "r_e": [[1.0]]},
        "y_hat": {"kind": "constant", "value": [0.0]},
        "algorithms": [{"name": "afhc", "w": 9}],
        "samples": 3,
        "seed": 1,
        "output": dir.path().join("bad").to_str().unwrap()
    });
    let path = dir.path().join("bad.json");
    std::fs::write(&path, serde_json::to_string(&bad).unwrap()).unwrap();
    let out = soco_bin()
        .args(["run", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("algorithms[0]"), "stderr: {stderr}");
}

#[test]
fn bounds_prints_exact_report() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("b").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 2);
    let out = soco_bin()
        .args(["bounds", "--config", config.to_str().unwrap(), "--w", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let report: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(report["w"], 3);
    for key in ["fw_norm", "F_w", "V", "B", "alpha1", "alpha2", "V1", "V2"] {
        assert!(report[key].is_number(), "missing {key}");
    }
    assert!(report["epsilon"].as_f64().unwrap() > 0.0);
}

#[test]
fn realize_dumps_consistent_world() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("r").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 2);
    let out = soco_bin()
        .args(["realize", "--config", config.to_str().unwrap(), "--seed", "99"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let dump: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(dump["seed"], 99);
    let y = dump["y"].as_array().unwrap();
    let y_hat = dump["y_hat"].as_array().unwrap();
    let e = dump["innovations"].as_array().unwrap();
    assert_eq!(y.len(), 16);
    // y_1 = ŷ_1 + e(1) for the first step (taps beyond 0 see no history).
    let y0 = y[0][0].as_f64().unwrap();
    let p0 = y_hat[0][0].as_f64().unwrap();
    let e0 = e[0][0].as_f64().unwrap();
    assert!((y0 - p0 - e0).abs() < 1e-12);
    // Bounded family: every innovation is strictly inside (-1, 1).
    for row in e {
        assert!(row[0].as_f64().unwrap().abs() < 1.0);
    }
}

#[test]
fn tail_and_sweep_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("t").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 40);
    let out = soco_bin()
        .args([
            "tail",
            "--config",
            config.to_str().unwrap(),
            "--u-grid",
            "0:20:10",
            "--check",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let tail = std::fs::read_to_string(format!("{prefix}.tail.csv")).unwrap();
    assert!(tail.lines().count() >= 5); // comment + header + 3 grid rows
    assert!(tail.contains("u,empirical,std_error,bound_two_term,bound_simplified"));

    let out = soco_bin()
        .args([
            "sweep-window",
            "--config",
            config.to_str().unwrap(),
            "--w",
            "0,1,3",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    let sweep = std::fs::read_to_string(format!("{prefix}.sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn soco_threads_env_does_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("th").to_str().unwrap().to_string();
    let config = write_config(dir.path(), &prefix, 20);
    let mut bytes = Vec::new();
    for threads in ["1", "4"] {
        let ok = soco_bin()
            .env("SOCO_THREADS", threads)
            .args(["run", "--config", config.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(ok.success());
        bytes.push((
            std::fs::read(format!("{prefix}.samples.csv")).unwrap(),
            std::fs::read(format!("{prefix}.summary.json")).unwrap(),
            std::fs::read(format!("{prefix}.config.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}
