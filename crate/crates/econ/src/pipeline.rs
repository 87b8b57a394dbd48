//! Resumable stages over a run directory.
//!
//! Every stage declares its input files, the configuration sections it
//! depends on and its output files. After a stage runs it writes
//! `manifests/<stage>.json` with SHA-256 digests of all three; a later run
//! whose digests match skips the stage.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use econ_core::experiment::{
    baselines, build_panel, day_embeddings, masked_corpus, prepare, run_evaluate, run_filter, run_pretrain, run_train,
    stage_seed, Baselines, FilteredTweet, Prepared,
};
use econ_core::filter::{AssociationReport, LexiconScorer};
use econ_core::ingest::synth_generate;
use econ_core::metrics::MetricsReport;
use econ_core::panel::Panel;
use econ_core::predictor::{predict, Ablation, EpochLog};
use econ_core::selfaware::SelfAwareEpoch;
use econ_core::text::Vocabulary;
use econ_core::types::{MacroSeries, PriceBar, SectorMap, Tweet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_agrud, load_selfaware, save_agrud, save_selfaware};
use crate::config::{DataSource, RunConfig, ScorerKind};
use crate::error::{EconError, Result};
use crate::io;

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.file("config.toml")
    }
    pub fn data_dir(&self) -> PathBuf {
        self.file("data")
    }
    pub fn filtered(&self) -> PathBuf {
        self.file("filtered.jsonl")
    }
    pub fn association(&self) -> PathBuf {
        self.file("association.json")
    }
    pub fn vocab(&self) -> PathBuf {
        self.file("vocab.tsv")
    }
    pub fn selfaware(&self) -> PathBuf {
        self.file("selfaware.ckpt.json")
    }
    pub fn pretrain_log(&self) -> PathBuf {
        self.file("pretrain_log.jsonl")
    }
    pub fn agrud(&self, ab: Ablation) -> PathBuf {
        self.file(&format!("agrud_{ab}.ckpt.json"))
    }
    pub fn train_log(&self, ab: Ablation) -> PathBuf {
        self.file(&format!("train_log_{ab}.jsonl"))
    }
    pub fn metrics(&self, ab: Ablation) -> PathBuf {
        self.file(&format!("metrics_{ab}.json"))
    }
    pub fn predictions(&self, ab: Ablation) -> PathBuf {
        self.file(&format!("predictions_{ab}.csv"))
    }
    pub fn manifest(&self, stage: &str) -> PathBuf {
        self.file("manifests").join(format!("{stage}.json"))
    }
    pub fn report_dir(&self) -> PathBuf {
        self.file("report")
    }
}

/// Input data files of a run.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub prices: PathBuf,
    pub tweets: PathBuf,
    pub macro_series: PathBuf,
    pub sectors: PathBuf,
    pub trend_windows: Option<PathBuf>,
}

impl DataPaths {
    pub fn resolve(cfg: &RunConfig, dir: &RunDir) -> DataPaths {
        match cfg.data.source {
            DataSource::Synth => {
                let d = dir.data_dir();
                DataPaths {
                    prices: d.join("prices.csv"),
                    tweets: d.join("tweets.jsonl"),
                    macro_series: d.join("macro.csv"),
                    sectors: d.join("sectors.csv"),
                    trend_windows: Some(d.join("trend_windows.csv")),
                }
            }
            DataSource::Files => DataPaths {
                prices: cfg.data.prices.clone(),
                tweets: cfg.data.tweets.clone(),
                macro_series: cfg.data.macro_series.clone(),
                sectors: cfg.data.sectors.clone(),
                trend_windows: (!cfg.data.trend_windows.as_os_str().is_empty()).then(|| cfg.data.trend_windows.clone()),
            },
        }
    }

    pub fn all(&self) -> Vec<PathBuf> {
        let mut v = vec![self.prices.clone(), self.tweets.clone(), self.macro_series.clone(), self.sectors.clone()];
        v.extend(self.trend_windows.clone());
        v
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub prices: Vec<PriceBar>,
    pub tweets: Vec<Tweet>,
    pub macro_series: Vec<MacroSeries>,
    pub sector_map: SectorMap,
}

pub fn load_dataset(paths: &DataPaths, trading_hours: bool) -> Result<Dataset> {
    let mut macro_series = io::load_macro(&paths.macro_series)?;
    if let Some(tw) = &paths.trend_windows {
        macro_series.extend(io::load_trend_windows(tw)?);
    }
    macro_series.sort_by(|a, b| (&a.keyword, a.source).cmp(&(&b.keyword, b.source)));
    Ok(Dataset {
        prices: io::load_prices(&paths.prices)?,
        tweets: io::load_tweets(&paths.tweets, trading_hours)?,
        macro_series,
        sector_map: io::load_sectors(&paths.sectors)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| EconError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Test-split metrics of one model, with the reference baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub ablation: Ablation,
    pub seed: u64,
    pub best_epoch: usize,
    pub movement: Option<MetricsReport>,
    pub volatility: Option<MetricsReport>,
    pub train_movement_accuracy: Option<f64>,
    pub baselines: Baselines,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub ticker: String,
    pub date: NaiveDate,
    pub movement_prob: f64,
    /// 1 up, 0 down, empty when excluded.
    pub movement: Option<u8>,
    pub volatility_prob: f64,
    pub volatility: u8,
}

struct Stage {
    name: String,
    inputs: Vec<PathBuf>,
    config: String,
    outputs: Vec<PathBuf>,
}

pub struct Pipeline {
    pub cfg: RunConfig,
    pub dir: RunDir,
    /// Rerun stages even when their manifest matches.
    pub force: bool,
    pub history: Vec<(String, StageStatus)>,
}

impl Pipeline {
    pub fn new(cfg: RunConfig, dir: impl Into<PathBuf>) -> Result<Pipeline> {
        cfg.validate()?;
        let dir = RunDir::new(dir);
        fs::create_dir_all(&dir.root).map_err(|e| EconError::io(&dir.root, e))?;
        let text = cfg.to_toml();
        if io::read_text(&dir.config()).ok().as_deref() != Some(text.as_str()) {
            io::write_text(&dir.config(), &text)?;
        }
        Ok(Pipeline {
            cfg,
            dir,
            force: false,
            history: Vec::new(),
        })
    }

    fn key(&self, path: &Path) -> String {
        match path.strip_prefix(&self.dir.root) {
            Ok(rel) => rel.to_string_lossy().into_owned(),
            Err(_) => path.to_string_lossy().into_owned(),
        }
    }

    fn digests(&self, paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
        paths.iter().map(|p| Ok((self.key(p), file_digest(p)?))).collect()
    }

    fn run_stage(&mut self, stage: Stage, body: impl FnOnce(&Self) -> Result<()>) -> Result<StageStatus> {
        let fail = |e: EconError| e.in_stage(&stage.name);
        for p in &stage.inputs {
            if !p.exists() {
                return Err(fail(EconError::format(p, "missing input; run the upstream stage first")));
            }
        }
        let inputs = self.digests(&stage.inputs).map_err(fail)?;
        let config_digest = sha256_hex(stage.config.as_bytes());
        let manifest_path = self.dir.manifest(&stage.name);
        if !self.force {
            if let Ok(old) = io::read_json::<Manifest>(&manifest_path) {
                let fresh = old.config_digest == config_digest
                    && old.inputs == inputs
                    && stage.outputs.iter().all(|p| p.exists())
                    && self.digests(&stage.outputs).ok().as_ref() == Some(&old.outputs);
                if fresh {
                    self.history.push((stage.name.clone(), StageStatus::Skipped));
                    return Ok(StageStatus::Skipped);
                }
            }
        }
        body(self).map_err(fail)?;
        let outputs = self.digests(&stage.outputs).map_err(fail)?;
        let manifest = Manifest {
            stage: stage.name.clone(),
            config_digest,
            inputs,
            outputs,
        };
        io::write_json(&manifest_path, &manifest).map_err(fail)?;
        self.history.push((stage.name, StageStatus::Ran));
        Ok(StageStatus::Ran)
    }

    pub fn data_paths(&self) -> DataPaths {
        DataPaths::resolve(&self.cfg, &self.dir)
    }

    fn trading_hours(&self) -> bool {
        self.cfg.data.trading_hours && self.cfg.data.source == DataSource::Files
    }

    fn load_data(&self) -> Result<Dataset> {
        load_dataset(&self.data_paths(), self.trading_hours())
    }

    fn prepared(&self, ds: &Dataset) -> Result<Prepared> {
        Ok(prepare(ds.prices.clone(), &ds.tweets, &ds.macro_series, &self.cfg.experiment())?)
    }

    pub fn synth(&mut self) -> Result<StageStatus> {
        if self.cfg.data.source != DataSource::Synth {
            return Err(EconError::Config("synth needs data.source = \"synth\"".into()));
        }
        let paths = self.data_paths();
        let stage = Stage {
            name: "synth".into(),
            inputs: vec![],
            config: self.cfg.sections(&["synth", "run.seed"]),
            outputs: paths.all(),
        };
        self.run_stage(stage, |p| {
            let ds = synth_generate(&p.cfg.synth, stage_seed(p.cfg.run.seed, "synth"))?;
            let econ: Vec<MacroSeries> = ds
                .macro_series
                .iter()
                .filter(|s| !ds.trend_windows.iter().any(|(k, _)| *k == s.keyword && s.source == econ_core::types::MacroSource::TrendIndex))
                .cloned()
                .collect();
            io::write_prices(&paths.prices, &ds.prices)?;
            io::write_tweets(&paths.tweets, &ds.tweets)?;
            io::write_macro(&paths.macro_series, &econ)?;
            io::write_sectors(&paths.sectors, &ds.sector_map)?;
            io::write_trend_windows(paths.trend_windows.as_ref().expect("synth writes trend windows"), &ds.trend_windows)
        })
    }

    pub fn filter(&mut self) -> Result<StageStatus> {
        let stage = Stage {
            name: "filter".into(),
            inputs: self.data_paths().all(),
            config: self.cfg.sections(&["data", "labels", "split", "filter", "run.scorer"]),
            outputs: vec![self.dir.filtered(), self.dir.association()],
        };
        self.run_stage(stage, |p| {
            let ds = p.load_data()?;
            let prep = p.prepared(&ds)?;
            if p.cfg.run.scorer == ScorerKind::Import {
                if let Some(t) = ds.tweets.iter().find(|t| t.sentiment.is_none()) {
                    return Err(EconError::Config(format!("scorer = import but tweet {} has no sentiment", t.id)));
                }
            }
            let out = run_filter(&ds.tweets, &prep.labels, prep.last_train_date(), &LexiconScorer::default(), &p.cfg.filter)?;
            io::write_jsonl(&p.dir.filtered(), &out.selected)?;
            io::write_json(&p.dir.association(), &out.report)
        })
    }

    pub fn pretrain(&mut self) -> Result<StageStatus> {
        let mut inputs = self.data_paths().all();
        inputs.push(self.dir.filtered());
        let stage = Stage {
            name: "pretrain-sector".into(),
            inputs,
            config: self.cfg.sections(&["data", "labels", "split", "text", "pretrain", "run.seed"]),
            outputs: vec![self.dir.vocab(), self.dir.selfaware(), self.dir.pretrain_log()],
        };
        self.run_stage(stage, |p| {
            let ds = p.load_data()?;
            let prep = p.prepared(&ds)?;
            let filtered: Vec<FilteredTweet> = io::read_jsonl(&p.dir.filtered())?;
            let corpus = masked_corpus(&filtered, &ds.sector_map)?;
            let seed = stage_seed(p.cfg.run.seed, "pretrain");
            let out = run_pretrain(&corpus, &prep, ds.sector_map.num_sectors(), &p.cfg.experiment(), seed)?;
            io::write_text(&p.dir.vocab(), &out.vocab_tsv)?;
            save_selfaware(&p.dir.selfaware(), &out.params)?;
            io::write_jsonl(&p.dir.pretrain_log(), &out.log)
        })
    }

    /// Rebuilds the daily panel from the data, the filtered tweets and the
    /// pretrained encoder.
    fn panel(&self) -> Result<Panel> {
        let ds = self.load_data()?;
        let prep = self.prepared(&ds)?;
        let filtered: Vec<FilteredTweet> = io::read_jsonl(&self.dir.filtered())?;
        let corpus = masked_corpus(&filtered, &ds.sector_map)?;
        let vocab = Vocabulary::from_tsv(&io::read_text(&self.dir.vocab())?)?;
        let params = load_selfaware(&self.dir.selfaware())?;
        let emb = day_embeddings(&corpus, &vocab, &params, self.cfg.text.max_len)?;
        Ok(build_panel(&prep, &emb, &params.sectors, &ds.sector_map)?)
    }

    fn panel_inputs(&self) -> Vec<PathBuf> {
        let mut inputs = self.data_paths().all();
        inputs.extend([self.dir.filtered(), self.dir.vocab(), self.dir.selfaware()]);
        inputs
    }

    fn model_config(&self, ab: Ablation) -> String {
        let mut s = self.cfg.sections(&["data", "labels", "split", "text", "run.seed"]);
        let mut predictor = self.cfg.predictor.clone();
        predictor.ablation = ab;
        s.push_str(&toml::to_string(&predictor).expect("predictor config serializes"));
        s
    }

    pub fn train(&mut self, ab: Ablation) -> Result<StageStatus> {
        let stage = Stage {
            name: format!("train-{ab}"),
            inputs: self.panel_inputs(),
            config: self.model_config(ab),
            outputs: vec![self.dir.agrud(ab), self.dir.train_log(ab)],
        };
        self.run_stage(stage, |p| {
            let panel = p.panel()?;
            let model = run_train(&panel, &p.cfg.predictor, ab, stage_seed(p.cfg.run.seed, "train"))?;
            save_agrud(&p.dir.agrud(ab), &model)?;
            io::write_jsonl(&p.dir.train_log(ab), &model.log)
        })
    }

    pub fn evaluate(&mut self, ab: Ablation) -> Result<StageStatus> {
        let mut inputs = self.panel_inputs();
        inputs.push(self.dir.agrud(ab));
        let stage = Stage {
            name: format!("evaluate-{ab}"),
            inputs,
            config: self.model_config(ab),
            outputs: vec![self.dir.metrics(ab), self.dir.predictions(ab)],
        };
        self.run_stage(stage, |p| {
            let panel = p.panel()?;
            let model = load_agrud(&p.dir.agrud(ab))?;
            let seed = p.cfg.run.seed;
            let report = run_evaluate(&panel, &model, seed)?;
            let test = panel.samples(panel.split.test.clone(), model.window);
            let preds = predict(&model.params, &panel, &test, model.window, model.ablation)?;
            let rows: Vec<PredictionRow> = preds
                .iter()
                .map(|pr| PredictionRow {
                    ticker: panel.tickers[pr.stock].to_string(),
                    date: panel.dates[pr.day],
                    movement_prob: pr.movement_prob,
                    movement: panel.movement[pr.day][pr.stock].class().map(|c| c as u8),
                    volatility_prob: pr.volatility_prob,
                    volatility: u8::from(panel.volatility[pr.day][pr.stock]),
                })
                .collect();
            let mut w = csv::Writer::from_path(p.dir.predictions(ab)).map_err(|e| EconError::format(&p.dir.predictions(ab), e))?;
            for r in &rows {
                w.serialize(r).map_err(|e| EconError::format(&p.dir.predictions(ab), e))?;
            }
            w.flush().map_err(|e| EconError::io(&p.dir.predictions(ab), e))?;
            let metrics = MetricsFile {
                ablation: ab,
                seed,
                best_epoch: report.best_epoch,
                movement: report.movement,
                volatility: report.volatility,
                train_movement_accuracy: report.train_movement_accuracy,
                baselines: baselines(&panel, model.window)?,
            };
            io::write_json(&p.dir.metrics(ab), &metrics)
        })
    }

    pub fn report(&mut self) -> Result<StageStatus> {
        let mut inputs = vec![self.dir.association(), self.dir.pretrain_log()];
        for &ab in &self.cfg.run.ablations {
            inputs.extend([self.dir.metrics(ab), self.dir.train_log(ab), self.dir.predictions(ab)]);
        }
        let out = self.dir.report_dir();
        let stage = Stage {
            name: "report".into(),
            inputs,
            config: String::new(),
            outputs: crate::report::output_files(&out, std::slice::from_ref(&self.dir.root)),
        };
        self.run_stage(stage, |p| crate::report::render(std::slice::from_ref(&p.dir.root), &p.dir.report_dir()).map(|_| ()))
    }

    /// Every stage in order.
    pub fn run_all(&mut self) -> Result<()> {
        if self.cfg.data.source == DataSource::Synth {
            self.synth()?;
        }
        self.filter()?;
        self.pretrain()?;
        for ab in self.cfg.run.ablations.clone() {
            self.train(ab)?;
            self.evaluate(ab)?;
        }
        self.report()?;
        Ok(())
    }
}

pub fn read_metrics(dir: &RunDir, ab: Ablation) -> Result<MetricsFile> {
    io::read_json(&dir.metrics(ab))
}

pub fn read_association(dir: &RunDir) -> Result<AssociationReport> {
    io::read_json(&dir.association())
}

pub fn read_pretrain_log(dir: &RunDir) -> Result<Vec<SelfAwareEpoch>> {
    io::read_jsonl(&dir.pretrain_log())
}

pub fn read_train_log(dir: &RunDir, ab: Ablation) -> Result<Vec<EpochLog>> {
    io::read_jsonl(&dir.train_log(ab))
}

/// All manifests of a run directory.
pub fn manifests(dir: &RunDir) -> Result<Vec<Manifest>> {
    let mdir = dir.root.join("manifests");
    let mut names: Vec<PathBuf> = fs::read_dir(&mdir)
        .map_err(|e| EconError::io(&mdir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    names.iter().map(|p| io::read_json(p)).collect()
}

/// Checks that the manifests form a DAG: each input inside the run directory
/// is the output of exactly one stage, and following producers never cycles.
pub fn check_dag(manifests: &[Manifest]) -> std::result::Result<(), String> {
    let mut producer: BTreeMap<&str, &str> = BTreeMap::new();
    for m in manifests {
        for out in m.outputs.keys() {
            if let Some(other) = producer.insert(out, &m.stage) {
                return Err(format!("{out} is produced by both {other} and {}", m.stage));
            }
        }
    }
    let deps: BTreeMap<&str, BTreeSet<&str>> = manifests
        .iter()
        .map(|m| {
            let d = m.inputs.keys().filter_map(|i| producer.get(i.as_str()).copied()).collect();
            (m.stage.as_str(), d)
        })
        .collect();
    fn visit<'a>(
        s: &'a str,
        deps: &BTreeMap<&'a str, BTreeSet<&'a str>>,
        done: &mut BTreeSet<&'a str>,
        path: &mut Vec<&'a str>,
    ) -> std::result::Result<(), String> {
        if done.contains(s) {
            return Ok(());
        }
        if path.contains(&s) {
            return Err(format!("cycle through {s}"));
        }
        path.push(s);
        for d in deps.get(s).into_iter().flatten() {
            visit(d, deps, done, path)?;
        }
        path.pop();
        done.insert(s);
        Ok(())
    }
    let mut done = BTreeSet::new();
    for s in deps.keys() {
        visit(s, &deps, &mut done, &mut Vec::new())?;
    }
    Ok(())
}
