use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coverify"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("coverify-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn classical_density_is_zero() {
    let o = run(&["oracle", "check", data("classic12.sys").to_str().unwrap(), "--density"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn oracle_summary_and_bias() {
    let path = data("small.sys");
    let o = run(&["oracle", "check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("covers: no"));
    let o = run(&["oracle", "check", path.to_str().unwrap(), "--bias", "5"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "75/56");
}

#[test]
fn shearer_default_holds() {
    let o = run(&["stage1-shearer"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("chain holds for 45 primes"));
}

#[test]
fn shearer_fails_past_the_threshold() {
    let o = run(&["stage1-shearer", "--pmax", "641"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("chain fails at 631"));
    let o = run(&["stage1-shearer", "--pmax", "619"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn lll_certifies_small_instance() {
    let o = run(&["lll", "--instance", data("small.sys").to_str().unwrap(), "--M", "2.95"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["weights_certified"], true);
    let d = v["density_lower_bound"].as_f64().unwrap();
    assert!(d > 0.0 && d <= 32.0 / 55.0);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["stage1-shearer", "--pmax", "x"]).status.code(), Some(2));
    let missing = run(&["oracle", "check", "/nonexistent.sys"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad = tmp("bad.sys");
    std::fs::write(&bad, "0 mod 5\nnonsense\n").unwrap();
    let o = run(&["oracle", "check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn config_override_is_validated() {
    let cfg = tmp("bad.toml");
    std::fs::write(&cfg, "bins = 0\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "stage1-shearer"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_roundtrips_through_cli() {
    let o = run(&["config"]);
    assert_eq!(o.status.code(), Some(0));
    let path = tmp("default.toml");
    std::fs::write(&path, stdout(&o)).unwrap();
    let again = run(&["--config", path.to_str().unwrap(), "config"]);
    assert_eq!(stdout(&again), stdout(&o));
}

/// Fewer bins and no sieving keeps this quick; the verdict logic is the same.
fn quick_config() -> PathBuf {
    let text = stdout(&run(&["config"]))
        .replace("bins = 100", "bins = 20")
        .replace("windows = [2, 3]", "windows = []");
    let path = tmp("quick.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn prove_is_deterministic_and_rechecks() {
    let cfg = quick_config();
    let a = tmp("a.json");
    let b = tmp("b.json");
    let oa = run(&["--config", cfg.to_str().unwrap(), "prove", "-o", a.to_str().unwrap()]);
    let ob = run(&["--config", cfg.to_str().unwrap(), "prove", "-o", b.to_str().unwrap()]);
    assert_eq!(oa.status.code(), ob.status.code());
    let ta = std::fs::read(&a).unwrap();
    assert_eq!(ta, std::fs::read(&b).unwrap());

    let report: serde_json::Value = serde_json::from_slice(&ta).unwrap();
    assert_eq!(report["schema"], "coverify.proof-report/1");
    let proved = report["verdict"] == "proved";
    assert_eq!(oa.status.code(), Some(if proved { 0 } else { 1 }));
    if !proved {
        assert!(stderr(&oa).contains("FAIL ["));
    }

    let re = run(&["report", a.to_str().unwrap()]);
    assert_eq!(re.status.code(), oa.status.code());
    assert!(stdout(&re).contains("verdict:"));

    let mut tampered = report.clone();
    tampered["verdict"] = serde_json::json!(if proved { "not_proved" } else { "proved" });
    let t = tmp("tampered.json");
    std::fs::write(&t, serde_json::to_string(&tampered).unwrap()).unwrap();
    let re = run(&["report", t.to_str().unwrap()]);
    assert_eq!(re.status.code(), Some(1));
    assert!(stderr(&re).contains("disagree"));
}

#[test]
fn default_prove_names_failing_inequalities() {
    let out = tmp("full.json");
    let o = run(&["prove", "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("FAIL [stages i >= 2] all 5050 bins"));
    assert!(!err.contains("FAIL [stage 1]"));
    assert!(!err.contains("FAIL [window"));
}
