//! In-memory pipeline stages. The `econ` crate persists each stage's output;
//! tests call the stages directly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baseline::{constant_accuracy, majority_class, Logistic};
use crate::error::{Error, Result};
use crate::filter::{
    calibrate_k, contingency_for_k, default_candidates, group_stock_days, score_sentiment, select_top_k,
    AssociationReport, KChoice, KPoint, SentimentScorer,
};
use crate::ingest::{
    build_stock_features, compute_labels, group_by_ticker, macro_columns, macro_panel, prepare_prices, ChronoSplit,
    LabelConfig,
};
use crate::metrics::MetricsReport;
use crate::panel::{Panel, PanelInputs};
use crate::predictor::{predict, score, train, Ablation, AgrudParams, EpochLog, PredictorConfig};
use crate::rng::{derive_seed, stage_rng};
use crate::selfaware::{embed_tweet, train_selfaware, SelfAwareConfig, SelfAwareEpoch, SelfAwareParams};
use crate::text::{encode, mask_company, tokenize, MaskedTweet, TokenSequence, Vocabulary};
use crate::types::{MacroSeries, MacroSource, PriceBar, SectorMap, StockDayLabel, StockFeatureVector, Ticker, Tweet};

/// Filter k: calibrated on training data, or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterK {
    Auto,
    Fixed(KChoice),
}

impl fmt::Display for FilterK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterK::Auto => f.write_str("auto"),
            FilterK::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl core::str::FromStr for FilterK {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(FilterK::Auto),
            other => other.parse().map(FilterK::Fixed),
        }
    }
}

impl Serialize for FilterK {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            FilterK::Auto => s.serialize_str("auto"),
            FilterK::Fixed(k) => k.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for FilterK {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => format!("{n}").parse().map_err(serde::de::Error::custom),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub k: FilterK,
    pub slack: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            k: FilterK::Auto,
            slack: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextConfig {
    pub max_len: usize,
    pub min_freq: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig { max_len: 48, min_freq: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    #[serde(flatten)]
    pub model: SelfAwareConfig,
    /// Cap on training examples, sampled without replacement; 0 keeps all.
    /// Validation keeps at most a quarter of this.
    pub max_examples: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            model: SelfAwareConfig::default(),
            max_examples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub labels: LabelConfig,
    pub split: SplitConfig,
    pub filter: FilterConfig,
    pub text: TextConfig,
    pub pretrain: PretrainConfig,
    pub predictor: PredictorConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        let l = &self.labels;
        if !(l.move_band > 0.0 && l.move_band < l.vol_threshold) {
            return bad(format!(
                "need 0 < move_band < vol_threshold, got {} and {}",
                l.move_band, l.vol_threshold
            ));
        }
        let s = &self.split;
        if s.train <= 0.0 || s.val < 0.0 || s.test < 0.0 || libm::fabs(s.train + s.val + s.test - 1.0) > 1e-9 {
            return bad(format!("split ratios must be nonnegative and sum to 1, got {}/{}/{}", s.train, s.val, s.test));
        }
        if !(0.0..1.0).contains(&self.filter.slack) {
            return bad(format!("slack must be in [0, 1), got {}", self.filter.slack));
        }
        if self.text.max_len == 0 {
            return bad("max_len must be positive".into());
        }
        let p = &self.pretrain.model;
        if p.k == 0 || p.batch_size == 0 || p.lr < 0.0 {
            return bad("pretrain k and batch_size must be positive, lr nonnegative".into());
        }
        self.predictor.validate()
    }
}

/// Labels, normalized features and macro panel on a shared calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub labels: Vec<StockDayLabel>,
    pub features: Vec<StockFeatureVector>,
    pub dates: Vec<NaiveDate>,
    pub macro_columns: Vec<(String, MacroSource)>,
    pub macro_vecs: Vec<Vec<f64>>,
    pub split: ChronoSplit,
}

impl Prepared {
    pub fn last_train_date(&self) -> NaiveDate {
        self.dates[self.split.train.end - 1]
    }

    fn days_in(&self, range: core::ops::Range<usize>) -> BTreeSet<NaiveDate> {
        self.dates[range].iter().copied().collect()
    }
}

pub fn prepare(prices: Vec<PriceBar>, tweets: &[Tweet], macro_series: &[MacroSeries], cfg: &ExperimentConfig) -> Result<Prepared> {
    let bars = prepare_prices(prices)?;
    let mut labels = Vec::new();
    for run in group_by_ticker(&bars) {
        labels.extend(compute_labels(run, cfg.labels)?);
    }
    let mut counts: BTreeMap<(Ticker, NaiveDate), u32> = BTreeMap::new();
    for t in tweets {
        for tk in &t.tickers {
            *counts.entry((tk.clone(), t.day())).or_default() += 1;
        }
    }
    let n_days = crate::ingest::calendar(&bars).len().saturating_sub(1);
    let split = ChronoSplit::new(n_days, cfg.split.train, cfg.split.val)?;
    let features = build_stock_features(&bars, &counts, split.train.clone())?;
    let mut dates: Vec<NaiveDate> = features.iter().map(|f| f.date).collect();
    dates.sort();
    dates.dedup();
    let macro_vecs = macro_panel(macro_series, &dates, split.train.clone())?;
    Ok(Prepared {
        labels,
        features,
        dates,
        macro_columns: macro_columns(macro_series),
        macro_vecs,
        split,
    })
}

/// One selected tweet for one stock-day, sentiment filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredTweet {
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub rank: usize,
    pub tweet: Tweet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub report: AssociationReport,
    pub selected: Vec<FilteredTweet>,
}

/// Scores every tweet, calibrates k on training stock-days (dates up to
/// `last_train_date`) unless k is fixed, and keeps the top-k distinct tweets
/// of every stock-day.
pub fn run_filter<S: SentimentScorer + ?Sized>(
    tweets: &[Tweet],
    labels: &[StockDayLabel],
    last_train_date: NaiveDate,
    scorer: &S,
    cfg: &FilterConfig,
) -> Result<FilterOutput> {
    let sentiments: Vec<_> = tweets.iter().map(|t| score_sentiment(t, scorer)).collect();
    let days = group_stock_days(tweets, &sentiments, labels);
    let train_days: Vec<_> = days.iter().filter(|d| d.date <= last_train_date).cloned().collect();
    let mut report = calibrate_k(&train_days, &default_candidates(), cfg.slack)?;
    if let FilterK::Fixed(k) = cfg.k {
        let table = contingency_for_k(&train_days, k);
        if !report.k_curve.iter().any(|p| p.k == k) {
            report.k_curve.push(KPoint {
                k,
                cramers_v: table.cramers_v().ok(),
            });
            report.k_curve.sort_by_key(|p| p.k);
        }
        report.chosen_k = k;
        report.observed = table.observed.clone();
        report.expected = table.pruned().expected().unwrap_or_default();
        report.chi_square = table.chi_square().unwrap_or(0.0);
        report.cramers_v = table.cramers_v().unwrap_or(0.0);
    }
    let mut selected = Vec::new();
    for day in &days {
        let top = select_top_k(&day.tweets, report.chosen_k);
        for (rank, t) in top.into_iter().enumerate() {
            let i = day
                .tweets
                .iter()
                .position(|u| core::ptr::eq(*u, t))
                .expect("selected from the day's tweets");
            let mut tweet = t.clone();
            tweet.sentiment = Some(day.sentiments[i]);
            selected.push(FilteredTweet {
                ticker: day.ticker.clone(),
                date: day.date,
                rank,
                tweet,
            });
        }
    }
    Ok(FilterOutput { report, selected })
}

/// Masked tweets for every filtered `(tweet, stock)` pair, with their dates.
/// Pairs whose text no longer contains the stock are skipped.
pub fn masked_corpus(filtered: &[FilteredTweet], sector_map: &SectorMap) -> Result<Vec<(NaiveDate, MaskedTweet)>> {
    let known: BTreeSet<Ticker> = sector_map.tickers().cloned().collect();
    let mut out = Vec::with_capacity(filtered.len());
    for f in filtered {
        if !sector_map.contains(&f.ticker) {
            return Err(Error::UnmappedTicker(f.ticker.to_string()));
        }
        let tokens = tokenize(&f.tweet.text, &known);
        match mask_company(&tokens, &f.ticker, sector_map) {
            Ok(m) => out.push((f.date, m)),
            Err(Error::Masking(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutput {
    pub vocab_tsv: String,
    pub params: SelfAwareParams,
    pub best_epoch: usize,
    pub log: Vec<SelfAwareEpoch>,
    pub train_examples: usize,
    pub val_examples: usize,
}

impl PretrainOutput {
    pub fn vocab(&self) -> Result<Vocabulary> {
        Vocabulary::from_tsv(&self.vocab_tsv)
    }
}

fn encode_all(items: &[&MaskedTweet], vocab: &Vocabulary, max_len: usize) -> Vec<TokenSequence> {
    items
        .iter()
        .filter_map(|m| encode(&m.tokens, Some(m.mask_position), Some(m.sector), vocab, max_len).ok())
        .collect()
}

/// Builds the vocabulary from training-period tweets and pretrains the
/// sector-aware encoder.
pub fn run_pretrain(
    corpus: &[(NaiveDate, MaskedTweet)],
    prepared: &Prepared,
    num_sectors: usize,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PretrainOutput> {
    let train_days = prepared.days_in(prepared.split.train.clone());
    let val_days = prepared.days_in(prepared.split.val.clone());
    let mut train: Vec<&MaskedTweet> = corpus.iter().filter(|(d, _)| train_days.contains(d)).map(|(_, m)| m).collect();
    let mut val: Vec<&MaskedTweet> = corpus.iter().filter(|(d, _)| val_days.contains(d)).map(|(_, m)| m).collect();
    let vocab = Vocabulary::build(train.iter().map(|m| m.tokens.as_slice()), cfg.text.min_freq);
    let cap = cfg.pretrain.max_examples;
    if cap > 0 {
        let mut rng = stage_rng(seed, "pretrain-sample");
        if train.len() > cap {
            train.shuffle(&mut rng);
            train.truncate(cap);
        }
        if val.len() > cap.div_ceil(4) {
            val.shuffle(&mut rng);
            val.truncate(cap.div_ceil(4));
        }
    }
    let train_seqs = encode_all(&train, &vocab, cfg.text.max_len);
    let val_seqs = encode_all(&val, &vocab, cfg.text.max_len);
    let out = train_selfaware(&train_seqs, &val_seqs, vocab.len(), num_sectors, &cfg.pretrain.model, seed)?;
    Ok(PretrainOutput {
        vocab_tsv: vocab.to_tsv(),
        params: out.params,
        best_epoch: out.best_epoch,
        log: out.log,
        train_examples: train_seqs.len(),
        val_examples: val_seqs.len(),
    })
}

/// Embeds every masked pair and groups the embeddings by day.
pub fn day_embeddings(
    corpus: &[(NaiveDate, MaskedTweet)],
    vocab: &Vocabulary,
    params: &SelfAwareParams,
    max_len: usize,
) -> Result<BTreeMap<NaiveDate, Vec<Vec<f64>>>> {
    let mut out: BTreeMap<NaiveDate, Vec<Vec<f64>>> = BTreeMap::new();
    for (date, m) in corpus {
        let Ok(seq) = encode(&m.tokens, Some(m.mask_position), Some(m.sector), vocab, max_len) else {
            continue;
        };
        out.entry(*date).or_default().push(embed_tweet(&seq, params)?);
    }
    Ok(out)
}

pub fn build_panel(
    prepared: &Prepared,
    embeddings: &BTreeMap<NaiveDate, Vec<Vec<f64>>>,
    sectors: &crate::tensor::Matrix,
    sector_map: &SectorMap,
) -> Result<Panel> {
    Panel::assemble(PanelInputs {
        features: &prepared.features,
        labels: &prepared.labels,
        macro_vecs: prepared.macro_vecs.clone(),
        day_embeddings: embeddings,
        sectors,
        sector_map,
        split: prepared.split.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub majority_up: bool,
    pub majority_test_accuracy: f64,
    pub logistic_test_accuracy: f64,
}

pub fn baselines(panel: &Panel, window: usize) -> Result<Baselines> {
    let train_s = panel.samples(panel.split.train.clone(), window);
    let test_s = panel.samples(panel.split.test.clone(), window);
    let up = majority_class(panel, &train_s)?;
    let logistic = Logistic::fit(panel, &train_s, window, 200, 0.05)?;
    let (mut hit, mut n) = (0usize, 0usize);
    for &(s, t) in &test_s {
        if let Some(c) = panel.movement[t][s].class() {
            n += 1;
            hit += usize::from((logistic.prob_up(panel, s, t, window) >= 0.5) == (c == 1));
        }
    }
    Ok(Baselines {
        majority_up: up,
        majority_test_accuracy: constant_accuracy(panel, &test_s, up)?,
        logistic_test_accuracy: if n == 0 { 0.0 } else { hit as f64 / n as f64 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub ablation: Ablation,
    pub window: usize,
    pub params: AgrudParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

pub fn run_train(panel: &Panel, cfg: &PredictorConfig, ablation: Ablation, seed: u64) -> Result<TrainedModel> {
    let cfg = PredictorConfig { ablation, ..cfg.clone() };
    let out = train(panel, &cfg, seed)?;
    Ok(TrainedModel {
        ablation,
        window: cfg.window,
        params: out.params,
        best_epoch: out.best_epoch,
        log: out.log,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ablation: Ablation,
    pub seed: u64,
    pub best_epoch: usize,
    pub movement: Option<MetricsReport>,
    pub volatility: Option<MetricsReport>,
    pub train_movement_accuracy: Option<f64>,
}

/// Test-split metrics of a trained model.
pub fn run_evaluate(panel: &Panel, model: &TrainedModel, seed: u64) -> Result<EvalReport> {
    let test = panel.samples(panel.split.test.clone(), model.window);
    let train = panel.samples(panel.split.train.clone(), model.window);
    let m = score(panel, &predict(&model.params, panel, &test, model.window, model.ablation)?);
    let t = score(panel, &predict(&model.params, panel, &train, model.window, model.ablation)?);
    Ok(EvalReport {
        ablation: model.ablation,
        seed,
        best_epoch: model.best_epoch,
        movement: m.movement,
        volatility: m.volatility,
        train_movement_accuracy: t.movement.map(|r| r.accuracy),
    })
}

/// Stage seeds fanned out from one root.
pub fn stage_seed(root: u64, stage: &str) -> u64 {
    derive_seed(root, stage)
}
