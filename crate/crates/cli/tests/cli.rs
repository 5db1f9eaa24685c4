use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_echo-lab"));
    for var in [
        "ECHOLAB_CONFIG",
        "ECHOLAB_SEED",
        "ECHOLAB_OUT_DIR",
        "ECHOLAB_FORMAT",
        "ECHOLAB_DURATION",
    ] {
        cmd.env_remove(var);
    }
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    std::fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = r#"
duration = "4.2 s"

[source]
mean_pairs_per_pulse = 0.05

[franson]

[memory]
storage_time = "1936 ns"
"#;

#[test]
fn witness_reproduces_the_reference_value() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &[
            "witness",
            "--visibility",
            "0.760",
            "--visibility-sigma",
            "0.018",
            "--g2",
            "7.16",
            "--g2-sigma",
            "0.10",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = json(dir.path().join("witness.json"));
    let row = &doc["rows"][0];
    assert!((row["w"].as_f64().unwrap() + 0.271).abs() < 1e-3);
    assert!((row["w_sigma"].as_f64().unwrap() - 0.009).abs() < 1e-3);
    assert_eq!(row["entangled"], Value::Bool(true));
    assert_eq!(doc["provenance"]["config_sha256"], "none");
}

#[test]
fn memory_theory_row_at_reference_depth() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["memory-theory", "--depth", "2.1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = json(dir.path().join("square_optimum.json"));
    let eta = doc["rows"][0]["eta_opt"].as_f64().unwrap();
    assert!((eta - 0.174).abs() < 1e-3, "{eta}");
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), SMALL);
    let config = config.to_str().unwrap();
    let read = |name: &str| std::fs::read(dir.path().join(name).join("tags.etag")).unwrap();
    for (name, seed) in [("a", "3"), ("b", "3"), ("c", "4")] {
        let out = bin()
            .args(["--config", config, "--seed", seed, "--out-dir"])
            .arg(dir.path().join(name))
            .arg("simulate")
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn environment_overrides_match_flags() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), SMALL);
    let flag = bin()
        .args([
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "9",
            "--out-dir",
        ])
        .arg(dir.path().join("flag"))
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(code(&flag), 0, "{}", stderr(&flag));
    let env = bin()
        .env("ECHOLAB_CONFIG", &config)
        .env("ECHOLAB_SEED", "9")
        .env("ECHOLAB_OUT_DIR", dir.path().join("env"))
        .env("ECHOLAB_FORMAT", "csv")
        .arg("simulate")
        .output()
        .unwrap();
    assert_eq!(code(&env), 0, "{}", stderr(&env));
    let tags = |d: &str| std::fs::read(dir.path().join(d).join("tags.etag")).unwrap();
    assert_eq!(tags("flag"), tags("env"));
    assert!(dir.path().join("env").join("tags.csv").exists());
}

#[test]
fn simulate_then_analyze_with_provenance() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), SMALL);
    let config = config.to_str().unwrap();
    let out = run(
        dir.path(),
        &[
            "--config", config, "--seed", "5", "--format", "csv", "simulate",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = run(
        dir.path(),
        &[
            "--config",
            config,
            "--seed",
            "5",
            "--format",
            "csv",
            "analyze",
            "--input",
            dir.path().join("tags.csv").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let text = std::fs::read_to_string(dir.path().join("figures.csv")).unwrap();
    let sha = sha_line(&text);
    assert_eq!(sha.len(), 64);
    assert!(text.contains("# seed=5"));
    assert!(text.lines().any(|l| l.starts_with("center_coincidences,")));
    let histogram = std::fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert_eq!(sha_line(&histogram), sha);
    assert!(histogram.lines().any(|l| l == "tau_s,counts"));
}

fn sha_line(text: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix("# config_sha256="))
        .expect("provenance line")
        .to_string()
}

#[test]
fn delay_mismatch_warns_at_load() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "[franson]\ndelay_signal = \"40 ns\"\n");
    let out = run(
        dir.path(),
        &[
            "--config",
            config.to_str().unwrap(),
            "witness",
            "--visibility",
            "0.5",
            "--g2",
            "3",
        ],
    );
    assert_eq!(code(&out), 0);
    assert!(
        stderr(&out).contains("interferometer delays"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn config_errors_exit_with_code_3_and_name_the_field() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), "[source]\nperiod = \"32 MHz\"\n");
    let out = run(
        dir.path(),
        &["--config", config.to_str().unwrap(), "simulate"],
    );
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("source.period"), "{}", stderr(&out));

    let config = write_config(dir.path(), "[memory]\npeak_depth = -1.0\n");
    let out = run(
        dir.path(),
        &["--config", config.to_str().unwrap(), "simulate"],
    );
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn missing_files_exit_with_code_4() {
    let dir = TempDir::new().unwrap();
    let out = run(
        dir.path(),
        &["--config", "/nonexistent/echo.toml", "simulate"],
    );
    assert_eq!(code(&out), 4);
    let out = run(
        dir.path(),
        &["analyze", "--input", "/nonexistent/tags.etag"],
    );
    assert_eq!(code(&out), 4);
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 2);
    assert_eq!(code(&run(dir.path(), &["--duration", "5", "simulate"])), 2);
    assert_eq!(code(&run(dir.path(), &["paper-check", "--only", "42"])), 2);
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn runtime_errors_exit_with_code_1() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["witness", "--visibility", "1.5", "--g2", "3"]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn optimize_tm_lists_the_reference_storage_times() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["optimize-tm", "--side-period", "315 ns"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let doc = json(dir.path().join("storage_candidates.json"));
    let times: Vec<f64> = doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["storage_time_s"].as_f64().unwrap() * 1e9)
        .collect();
    for t in [336.0, 1296.0, 1616.0, 1936.0] {
        assert!(times.iter().any(|x| (x - t).abs() < 1e-6), "{t} missing");
    }
    let row = doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| (r["storage_time_s"].as_f64().unwrap() - 1936e-9).abs() < 1e-15)
        .unwrap();
    assert_eq!(row["mode_count"].as_f64().unwrap(), 60.5);
    assert_eq!(row["tbp"].as_f64().unwrap(), 484.0);
}

#[test]
fn paper_check_reports_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["paper-check", "--only", "1,2,7,8"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let first = std::fs::read(dir.path().join("paper_check.json")).unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("[PASS]").count(), 4);
    let again = run(dir.path(), &["paper-check", "--only", "1,2,7,8"]);
    assert_eq!(code(&again), 0);
    assert_eq!(
        std::fs::read(dir.path().join("paper_check.json")).unwrap(),
        first
    );
}

#[test]
fn paper_check_failures_exit_with_code_5() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), &["paper-check", "--only", "3b"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    if stdout.contains("[FAIL]") {
        assert_eq!(code(&out), 5);
    } else {
        assert_eq!(code(&out), 0);
    }
}
