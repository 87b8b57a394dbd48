use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use econ::config::RunConfig;
use econ::error::exit;
use econ::pipeline::{check_dag, manifests, read_metrics, Manifest, Pipeline, StageStatus};
use econ::report::render;
use econ_core::predictor::Ablation;

fn small_config(seed: u64, dir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.seed = seed;
    cfg.run.out_dir = dir.to_path_buf();
    cfg.synth.n_stocks = 6;
    cfg.synth.m_sectors = 3;
    cfg.synth.n_days = 160;
    cfg.pretrain.model.k = 8;
    cfg.pretrain.model.max_epochs = 3;
    cfg.pretrain.max_examples = 300;
    cfg.predictor.hidden = 8;
    cfg.predictor.fused_dim = 8;
    cfg.predictor.max_epochs = 3;
    cfg
}

fn run(cfg: RunConfig, dir: &Path) -> Pipeline {
    let mut p = Pipeline::new(cfg, dir).unwrap();
    p.run_all().unwrap();
    p
}

fn status(p: &Pipeline, stage: &str) -> StageStatus {
    p.history.iter().find(|(s, _)| s == stage).map(|(_, st)| *st).unwrap_or_else(|| panic!("{stage} did not run"))
}

#[test]
fn rerun_with_same_inputs_skips_every_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let first = run(small_config(3, &dir), &dir);
    assert!(first.history.iter().all(|(_, s)| *s == StageStatus::Ran));
    let metrics = fs::read(first.dir.metrics(Ablation::Full)).unwrap();

    let second = run(small_config(3, &dir), &dir);
    assert_eq!(second.history.len(), first.history.len());
    assert!(second.history.iter().all(|(_, s)| *s == StageStatus::Skipped), "{:?}", second.history);
    assert_eq!(fs::read(second.dir.metrics(Ablation::Full)).unwrap(), metrics);

    let ms = manifests(&second.dir).unwrap();
    assert_eq!(ms.len(), 3 + 2 * Ablation::ALL.len() + 1);
    check_dag(&ms).unwrap();
}

#[test]
fn config_change_reruns_only_downstream_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    run(small_config(4, &dir), &dir);
    let mut cfg = small_config(4, &dir);
    cfg.predictor.lr *= 0.5;
    let p = run(cfg, &dir);
    for stage in ["synth", "filter", "pretrain-sector"] {
        assert_eq!(status(&p, stage), StageStatus::Skipped, "{stage}");
    }
    for ab in Ablation::ALL {
        assert_eq!(status(&p, &format!("train-{ab}")), StageStatus::Ran);
    }
}

#[test]
fn edited_output_triggers_a_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let first = run(small_config(5, &dir), &dir);
    let assoc = fs::read(first.dir.association()).unwrap();
    fs::write(first.dir.association(), b"{}").unwrap();
    let mut p = Pipeline::new(small_config(5, &dir), &dir).unwrap();
    assert_eq!(p.filter().unwrap(), StageStatus::Ran);
    assert_eq!(fs::read(p.dir.association()).unwrap(), assoc);
    p.force = true;
    assert_eq!(p.synth().unwrap(), StageStatus::Ran);
}

#[test]
fn missing_upstream_output_fails_with_input_code() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut p = Pipeline::new(small_config(6, &dir), &dir).unwrap();
    let e = p.train(Ablation::Full).unwrap_err();
    assert_eq!(e.exit_code(), exit::INPUT);
    assert!(e.to_string().contains("train-full"), "{e}");
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut cfg = small_config(1, &dir);
    cfg.predictor.window = 20;
    let e = Pipeline::new(cfg, &dir).err().unwrap();
    assert_eq!(e.exit_code(), exit::CONFIG);
    assert!(!dir.exists());
}

fn manifest(stage: &str, inputs: &[&str], outputs: &[&str]) -> Manifest {
    let digests = |names: &[&str]| names.iter().map(|n| (n.to_string(), "0".to_string())).collect::<BTreeMap<_, _>>();
    Manifest {
        stage: stage.into(),
        config_digest: String::new(),
        inputs: digests(inputs),
        outputs: digests(outputs),
    }
}

#[test]
fn dag_check_finds_cycles_and_double_producers() {
    let a = manifest("a", &["ext"], &["x"]);
    let b = manifest("b", &["x"], &["y"]);
    check_dag(&[a.clone(), b.clone()]).unwrap();
    let c = manifest("c", &["y"], &["ext"]);
    assert!(check_dag(&[a.clone(), b.clone(), c]).is_err());
    let d = manifest("d", &[], &["y"]);
    assert!(check_dag(&[a, b, d]).is_err());
}

fn report_csv(out: &Path) -> String {
    fs::read_to_string(out.join("report.csv")).unwrap()
}

#[test]
fn report_rows_follow_ablation_order_and_flag_config_differences() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(small_config(7, &a), &a);
    let mut cfg = small_config(8, &b);
    cfg.run.ablations = vec![Ablation::I];
    run(cfg, &b);

    let out = tmp.path().join("single");
    let rep = render(std::slice::from_ref(&b), &out).unwrap();
    assert_eq!(rep.rows.len(), 1);
    assert_eq!(rep.rows[0].ablation, Ablation::I);
    assert!(!rep.has_config_diff);
    assert!(!report_csv(&out).lines().next().unwrap().contains("config_diff"));

    let rep = render(std::slice::from_ref(&a), &tmp.path().join("four")).unwrap();
    let order: Vec<Ablation> = rep.rows.iter().map(|r| r.ablation).collect();
    assert_eq!(order, Ablation::ALL.to_vec());
    let m = read_metrics(&econ::pipeline::RunDir::new(&a), Ablation::Full).unwrap();
    assert_eq!(rep.rows[0].movement_accuracy, m.movement.map(|r| r.accuracy));

    let out = tmp.path().join("both");
    let rep = render(&[a.clone(), b.clone()], &out).unwrap();
    assert_eq!(rep.rows.len(), 5);
    assert!(rep.has_config_diff);
    let diff = rep.rows[0].config_diff.as_deref().unwrap();
    assert!(diff.contains("run.seed"), "{diff}");
    assert!(!diff.contains("out_dir"), "{diff}");
    assert!(report_csv(&out).lines().next().unwrap().contains("config_diff"));
    for f in &rep.files {
        assert!(f.exists(), "{}", f.display());
    }
}

#[test]
fn report_marks_missing_metrics_as_absent() {
    let tmp = tempfile::tempdir().unwrap();
    let missing: PathBuf = tmp.path().join("never-ran");
    let out = tmp.path().join("out");
    let rep = render(&[missing], &out).unwrap();
    assert_eq!(rep.rows.len(), Ablation::ALL.len());
    assert!(rep.rows.iter().all(|r| r.movement_accuracy.is_none()));
    let csv = report_csv(&out);
    assert!(csv.lines().skip(1).all(|l| l.contains("absent")), "{csv}");
}
