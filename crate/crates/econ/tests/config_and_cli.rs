use std::fs;
use std::process::Command;

use econ::config::RunConfig;
use econ::error::exit;
use econ_core::predictor::Ablation;

fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn environment_overrides_file_values() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.toml");
    fs::write(&p, "[predictor]\nwindow = 7\nlr = 0.01\n").unwrap();
    let cfg = RunConfig::load(Some(&p), env(&[("ECON_PREDICTOR__WINDOW", "10"), ("HOME", "/root")])).unwrap();
    assert_eq!(cfg.predictor.window, 10);
    assert_eq!(cfg.predictor.lr, 0.01);
    assert_eq!(cfg.run, RunConfig::default().run);
}

#[test]
fn ablation_list_parses_from_toml() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.toml");
    fs::write(&p, "[run]\nablations = [\"none\", \"full\"]\n").unwrap();
    let cfg = RunConfig::load(Some(&p), Vec::new()).unwrap();
    assert_eq!(cfg.run.ablations, vec![Ablation::None, Ablation::Full]);
}

#[test]
fn unknown_keys_and_bad_values_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.toml");
    fs::write(&p, "[predictor]\nwindw = 7\n").unwrap();
    assert_eq!(RunConfig::load(Some(&p), Vec::new()).unwrap_err().exit_code(), exit::CONFIG);
    for (k, v) in [("ECON_PREDICTOR__WINDOW", "20"), ("ECON_BOGUS", "1"), ("ECON_LABELS__MOVE_BAND", "-1")] {
        let e = RunConfig::load(None, env(&[(k, v)])).unwrap_err();
        assert_eq!(e.exit_code(), exit::CONFIG, "{k}: {e}");
    }
}

#[test]
fn saved_config_reloads_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.toml");
    let mut cfg = RunConfig::default();
    cfg.predictor.window = 9;
    cfg.run.ablations = vec![Ablation::A];
    fs::write(&p, cfg.to_toml()).unwrap();
    assert_eq!(RunConfig::load(Some(&p), Vec::new()).unwrap(), cfg);
}

fn econ() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_econ"));
    c.env_remove("ECON_PREDICTOR__WINDOW");
    c
}

#[test]
fn cli_rejects_out_of_range_window_with_code_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = econ()
        .args(["run", "--out"])
        .arg(&out)
        .env("ECON_PREDICTOR__WINDOW", "20")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("window"));
    assert!(!out.exists());
}

#[test]
fn cli_reports_missing_inputs_with_code_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = econ().args(["train", "--out"]).arg(tmp.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cli_usage_errors_exit_2() {
    let o = econ().args(["train", "--ablation", "half"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cli_prints_documented_defaults() {
    let o = econ().args(["config", "--defaults"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[predictor]") && text.contains("# "));
    let table: toml::Table = text.parse().unwrap();
    assert!(table.contains_key("synth"));
}
