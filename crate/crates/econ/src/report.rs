//! Comparison tables and plots across run directories.
//!
//! `report.csv` has one row per (run, model variant) with movement and
//! volatility metrics, ordered full, A, I, none. When the runs' configs
//! differ, a `config_diff` column lists each run's differing keys.
//! `summary.csv` averages each variant over runs. Plots go to
//! `plots/<run>/`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use econ_core::filter::KChoice;
use econ_core::predictor::Ablation;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::{EconError, Result};
use crate::io;
use crate::pipeline::{read_association, read_metrics, read_pretrain_log, read_train_log, MetricsFile, PredictionRow, RunDir};
use crate::plot::{line_chart, Series};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: String,
    pub ablation: Ablation,
    pub seed: Option<u64>,
    pub movement_accuracy: Option<f64>,
    pub movement_mcc: Option<f64>,
    pub volatility_accuracy: Option<f64>,
    pub volatility_mcc: Option<f64>,
    pub volatility_auc: Option<f64>,
    pub majority_baseline: Option<f64>,
    pub config_diff: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub has_config_diff: bool,
    pub files: Vec<PathBuf>,
}

/// Distinct display names for the run directories.
fn labels(runs: &[PathBuf]) -> Vec<String> {
    let base: Vec<String> = runs
        .iter()
        .map(|r| r.file_name().map_or_else(|| "run".to_string(), |n| n.to_string_lossy().into_owned()))
        .collect();
    base.iter()
        .enumerate()
        .map(|(i, b)| if base.iter().filter(|x| *x == b).count() > 1 { format!("{b}-{i}") } else { b.clone() })
        .collect()
}

/// Files written by [`render`] for these runs.
pub fn output_files(out: &Path, runs: &[PathBuf]) -> Vec<PathBuf> {
    let mut files = vec![out.join("report.csv"), out.join("summary.csv")];
    for label in labels(runs) {
        let d = out.join("plots").join(label);
        files.extend([d.join("k_curve.svg"), d.join("training_curves.svg"), d.join("roc.svg")]);
    }
    files
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.to_string());
        }
    }
}

fn run_config(dir: &RunDir) -> Option<Table> {
    io::read_text(&dir.config()).ok()?.parse().ok()
}

fn ablations_of(config: Option<&Table>) -> Vec<Ablation> {
    config
        .and_then(|c| c.get("run")?.get("ablations")?.as_array().cloned())
        .map(|a| a.iter().filter_map(|v| v.as_str()?.parse().ok()).collect())
        .filter(|a: &Vec<Ablation>| !a.is_empty())
        .unwrap_or_else(|| Ablation::ALL.to_vec())
}

/// Per-run `key=value` lists of the config keys that differ between runs.
fn config_diffs(configs: &[Option<Table>]) -> Vec<Option<String>> {
    let flat: Vec<BTreeMap<String, String>> = configs
        .iter()
        .map(|c| {
            let mut m = BTreeMap::new();
            if let Some(t) = c {
                flatten("", &Value::Table(t.clone()), &mut m);
            }
            m.remove("run.out_dir");
            m
        })
        .collect();
    let keys: std::collections::BTreeSet<&String> = flat.iter().flat_map(|m| m.keys()).collect();
    let differing: Vec<&String> = keys
        .into_iter()
        .filter(|k| flat.iter().map(|m| m.get(*k)).collect::<std::collections::BTreeSet<_>>().len() > 1)
        .collect();
    if differing.is_empty() {
        return vec![None; configs.len()];
    }
    flat.iter()
        .map(|m| {
            Some(
                differing
                    .iter()
                    .map(|k| format!("{k}={}", m.get(*k).map_or("absent", String::as_str)))
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })
        .collect()
}

fn row(run: &str, ab: Ablation, m: Option<&MetricsFile>, diff: Option<String>) -> ReportRow {
    ReportRow {
        run: run.to_string(),
        ablation: ab,
        seed: m.map(|m| m.seed),
        movement_accuracy: m.and_then(|m| m.movement.as_ref()).map(|r| r.accuracy),
        movement_mcc: m.and_then(|m| m.movement.as_ref()).map(|r| r.mcc),
        volatility_accuracy: m.and_then(|m| m.volatility.as_ref()).map(|r| r.accuracy),
        volatility_mcc: m.and_then(|m| m.volatility.as_ref()).map(|r| r.mcc),
        volatility_auc: m.and_then(|m| m.volatility.as_ref()?.auc),
        majority_baseline: m.map(|m| m.baselines.majority_test_accuracy),
        config_diff: diff,
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| format!("{x:.4}"))
}

fn write_rows(path: &Path, rows: &[ReportRow], with_diff: bool) -> Result<()> {
    let mut header = vec![
        "run",
        "model",
        "seed",
        "movement_accuracy",
        "movement_mcc",
        "volatility_accuracy",
        "volatility_mcc",
        "volatility_auc",
        "majority_baseline",
    ];
    if with_diff {
        header.push("config_diff");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt_err = |e: csv::Error| EconError::format(path, e);
    w.write_record(&header).map_err(fmt_err)?;
    for r in rows {
        let mut rec = vec![
            r.run.clone(),
            r.ablation.to_string(),
            r.seed.map_or_else(|| "absent".to_string(), |s| s.to_string()),
            cell(r.movement_accuracy),
            cell(r.movement_mcc),
            cell(r.volatility_accuracy),
            cell(r.volatility_mcc),
            cell(r.volatility_auc),
            cell(r.majority_baseline),
        ];
        if with_diff {
            rec.push(r.config_diff.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(fmt_err)?;
    }
    let bytes = w.into_inner().map_err(|e| EconError::format(path, e))?;
    io::write_text(path, &String::from_utf8(bytes).expect("csv is utf-8"))
}

fn mean_std(vals: &[f64]) -> Option<(f64, f64)> {
    if vals.is_empty() {
        return None;
    }
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    Some((m, var.sqrt()))
}

fn write_summary(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt_err = |e: csv::Error| EconError::format(path, e);
    let metrics: [(&str, fn(&ReportRow) -> Option<f64>); 5] = [
        ("movement_accuracy", |r| r.movement_accuracy),
        ("movement_mcc", |r| r.movement_mcc),
        ("volatility_accuracy", |r| r.volatility_accuracy),
        ("volatility_mcc", |r| r.volatility_mcc),
        ("volatility_auc", |r| r.volatility_auc),
    ];
    let mut header = vec!["model".to_string(), "runs".to_string()];
    for (name, _) in &metrics {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header).map_err(fmt_err)?;
    for ab in Ablation::ALL {
        let group: Vec<&ReportRow> = rows.iter().filter(|r| r.ablation == ab).collect();
        if group.is_empty() {
            continue;
        }
        let mut rec = vec![ab.to_string(), group.iter().filter(|r| r.seed.is_some()).count().to_string()];
        for (_, get) in &metrics {
            let vals: Vec<f64> = group.iter().filter_map(|r| get(r)).collect();
            match mean_std(&vals) {
                Some((m, s)) => rec.extend([format!("{m:.4}"), format!("{s:.4}")]),
                None => rec.extend(["absent".to_string(), "absent".to_string()]),
            }
        }
        w.write_record(&rec).map_err(fmt_err)?;
    }
    let bytes = w.into_inner().map_err(|e| EconError::format(path, e))?;
    io::write_text(path, &String::from_utf8(bytes).expect("csv is utf-8"))
}

/// ROC points of `scores` against binary `labels`, thresholds descending,
/// tied scores stepping together. `None` unless both classes are present.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Option<Vec<(f64, f64)>> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / neg, tp / pos));
    }
    Some(points)
}

fn read_predictions(path: &Path) -> Option<Vec<PredictionRow>> {
    let mut rdr = csv::Reader::from_path(path).ok()?;
    rdr.deserialize().collect::<std::result::Result<Vec<PredictionRow>, _>>().ok()
}

fn plots(dir: &RunDir, ablations: &[Ablation], out: &Path) -> Result<()> {
    let k_series: Vec<Series> = read_association(dir)
        .ok()
        .map(|a| {
            let points = a
                .k_curve
                .iter()
                .filter_map(|p| Some((match p.k {
                    KChoice::Top(n) => n as f64,
                    KChoice::All => 11.0,
                }, p.cramers_v?)))
                .collect();
            vec![Series { name: "Cramér's V".into(), points }]
        })
        .unwrap_or_default();
    io::write_text(&out.join("k_curve.svg"), &line_chart("Association by tweets kept (11 = all)", "k", "V", &k_series))?;

    let mut curves = Vec::new();
    if let Ok(log) = read_pretrain_log(dir) {
        curves.push(Series {
            name: "sector val acc".into(),
            points: log.iter().map(|e| (e.epoch as f64, e.val_accuracy)).collect(),
        });
    }
    for &ab in ablations {
        if let Ok(log) = read_train_log(dir, ab) {
            curves.push(Series {
                name: format!("{ab} train acc"),
                points: log.iter().map(|e| (e.epoch as f64, e.train_accuracy)).collect(),
            });
            curves.push(Series {
                name: format!("{ab} val acc"),
                points: log.iter().map(|e| (e.epoch as f64, e.val_accuracy)).collect(),
            });
        }
    }
    io::write_text(&out.join("training_curves.svg"), &line_chart("Training curves", "epoch", "accuracy", &curves))?;

    let mut roc = Vec::new();
    for &ab in ablations {
        if let Some(rows) = read_predictions(&dir.predictions(ab)) {
            let scores: Vec<f64> = rows.iter().map(|r| r.volatility_prob).collect();
            let labels: Vec<bool> = rows.iter().map(|r| r.volatility == 1).collect();
            if let Some(points) = roc_points(&scores, &labels) {
                roc.push(Series { name: ab.to_string(), points });
            }
        }
    }
    io::write_text(&out.join("roc.svg"), &line_chart("Abnormal volatility ROC (test)", "false positive rate", "true positive rate", &roc))
}

/// Writes the comparison tables and plots for `runs` into `out`. Missing
/// metrics are reported as `absent`.
pub fn render(runs: &[PathBuf], out: &Path) -> Result<Report> {
    if runs.is_empty() {
        return Err(EconError::Config("report needs at least one run directory".into()));
    }
    let names = labels(runs);
    let dirs: Vec<RunDir> = runs.iter().map(RunDir::new).collect();
    let configs: Vec<Option<Table>> = dirs.iter().map(run_config).collect();
    let diffs = config_diffs(&configs);
    let has_config_diff = diffs.iter().any(Option::is_some);
    let mut rows = Vec::new();
    for (i, dir) in dirs.iter().enumerate() {
        let abs = ablations_of(configs[i].as_ref());
        for &ab in &abs {
            let m = read_metrics(dir, ab).ok();
            rows.push((ab.index(), i, row(&names[i], ab, m.as_ref(), diffs[i].clone())));
        }
        plots(dir, &abs, &out.join("plots").join(&names[i]))?;
    }
    rows.sort_by_key(|(a, i, _)| (*a, *i));
    let rows: Vec<ReportRow> = rows.into_iter().map(|(_, _, r)| r).collect();
    write_rows(&out.join("report.csv"), &rows, has_config_diff)?;
    write_summary(&out.join("summary.csv"), &rows)?;
    Ok(Report {
        rows,
        has_config_diff,
        files: output_files(out, runs),
    })
}
