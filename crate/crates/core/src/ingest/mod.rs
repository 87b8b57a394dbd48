//! Price labels, trend-window chaining and normalized feature construction.
//!
//! File parsing lives in the `econ` crate; everything here works on parsed
//! records.

mod synth;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln, ln_1p, mean, std_dev};
use crate::types::{MacroSeries, MacroSource, Movement, PriceBar, StockDayLabel, StockFeatureVector, Ticker};

pub use synth::{synth_generate, SynthConfig, SynthDataset, SECTOR_KEYWORDS};

/// Thresholds for the movement exclusion band and the abnormal-volatility flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelConfig {
    pub move_band: f64,
    pub vol_threshold: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            move_band: 0.005,
            vol_threshold: 0.05,
        }
    }
}

impl LabelConfig {
    pub fn classify(&self, return_pct: f64) -> (Movement, bool) {
        let movement = if return_pct >= self.move_band {
            Movement::Up
        } else if return_pct <= -self.move_band {
            Movement::Down
        } else {
            Movement::Excluded
        };
        (movement, return_pct.abs() >= self.vol_threshold)
    }
}

/// Validates bars, sorts them by `(ticker, date)` and rejects duplicate keys.
pub fn prepare_prices(mut bars: Vec<PriceBar>) -> Result<Vec<PriceBar>> {
    for b in &bars {
        b.validate()?;
    }
    bars.sort_by(|a, b| (&a.ticker, a.date).cmp(&(&b.ticker, b.date)));
    for w in bars.windows(2) {
        if w[0].ticker == w[1].ticker && w[0].date == w[1].date {
            return Err(Error::Duplicate {
                ticker: w[0].ticker.to_string(),
                date: w[0].date,
            });
        }
    }
    Ok(bars)
}

/// Splits bars sorted by `(ticker, date)` into per-ticker runs.
pub fn group_by_ticker(bars: &[PriceBar]) -> Vec<&[PriceBar]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=bars.len() {
        if i == bars.len() || bars[i].ticker != bars[start].ticker {
            if start < i {
                out.push(&bars[start..i]);
            }
            start = i;
        }
    }
    out
}

/// One label per consecutive pair of bars, from adjusted closes.
pub fn compute_labels(bars: &[PriceBar], cfg: LabelConfig) -> Result<Vec<StockDayLabel>> {
    let mut labels = Vec::new();
    for run in group_by_ticker(bars) {
        if run.len() < 2 {
            return Err(Error::Validation(format!(
                "{} needs at least two bars for labels",
                run[0].ticker
            )));
        }
        for pair in run.windows(2) {
            let (prev, cur) = (&pair[0], &pair[1]);
            if pair[1].date <= pair[0].date {
                return Err(Error::Validation(format!("{}: bars not date-ordered", cur.ticker)));
            }
            if prev.adj_close <= 0.0 {
                return Err(Error::Validation(format!(
                    "{} {}: nonpositive adjusted close",
                    prev.ticker, prev.date
                )));
            }
            let return_pct = (cur.adj_close - prev.adj_close) / prev.adj_close;
            let (movement, volatility) = cfg.classify(return_pct);
            labels.push(StockDayLabel {
                ticker: cur.ticker.clone(),
                date: cur.date,
                return_pct,
                movement,
                volatility,
            });
        }
    }
    Ok(labels)
}

/// A raw search-interest window, each normalized to its own peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendWindow {
    pub samples: Vec<(NaiveDate, f64)>,
}

/// Chains overlapping windows onto one scale and rescales the result so its
/// maximum is 100.
///
/// Window `i + 1` is scaled by `anchor_i / anchor_{i+1}` (compounded along the
/// chain), where the anchor is the first date both windows share. On
/// overlapping dates the earlier window's value is kept.
pub fn normalize_trend_windows(keyword: &str, windows: &[TrendWindow]) -> Result<MacroSeries> {
    if windows.is_empty() {
        return Err(Error::Empty("trend windows"));
    }
    let mut merged: BTreeMap<NaiveDate, f64> = BTreeMap::new();
    let mut scale = 1.0;
    for (i, w) in windows.iter().enumerate() {
        if i > 0 {
            let prev = &windows[i - 1];
            let anchor = w
                .samples
                .iter()
                .find_map(|(d, v)| prev.samples.iter().find(|(pd, _)| pd == d).map(|(_, pv)| (*pv, *v)));
            let (prev_v, cur_v) = anchor.ok_or(Error::Chaining {
                left: i - 1,
                right: i,
                reason: "no shared anchor date",
            })?;
            if prev_v == 0.0 || cur_v == 0.0 {
                return Err(Error::Chaining {
                    left: i - 1,
                    right: i,
                    reason: "zero-valued anchor",
                });
            }
            scale *= prev_v / cur_v;
        }
        for (d, v) in &w.samples {
            merged.entry(*d).or_insert(v * scale);
        }
    }
    let max = merged.values().copied().fold(f64::NEG_INFINITY, f64::max);
    // Dividing first keeps the peak exactly 100.
    let rescale = |v: f64| if max > 0.0 { v / max * 100.0 } else { v };
    let series = MacroSeries {
        keyword: keyword.to_string(),
        source: MacroSource::TrendIndex,
        samples: merged.into_iter().map(|(d, v)| (d, rescale(v))).collect(),
    };
    series.validate()?;
    Ok(series)
}

pub const FEATURE_NAMES: [&str; 7] = [
    "ret_open",
    "ret_high",
    "ret_low",
    "ret_close",
    "ret_adj_close",
    "log_volume",
    "tweet_count",
];

/// Width `p` of a stock feature vector.
pub const FEATURE_DIM: usize = FEATURE_NAMES.len();

/// Un-normalized features for every stock on every calendar day after the
/// first (returns need a previous bar).
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub tickers: Vec<Ticker>,
    pub dates: Vec<NaiveDate>,
    /// `values[stock][day]`
    pub values: Vec<Vec<[f64; FEATURE_DIM]>>,
}

/// Sorted union of bar dates.
pub fn calendar(bars: &[PriceBar]) -> Vec<NaiveDate> {
    let mut dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
    dates.sort_unstable();
    dates.dedup();
    dates
}

/// Log returns of OHLC and adjusted close, log volume and tweet count.
///
/// Every ticker must have a bar on every calendar date. Days missing from
/// `tweet_counts` count as zero tweets.
pub fn raw_stock_features(
    bars: &[PriceBar],
    tweet_counts: &BTreeMap<(Ticker, NaiveDate), u32>,
) -> Result<RawFeatures> {
    let dates = calendar(bars);
    if dates.len() < 2 {
        return Err(Error::Empty("need at least two calendar days"));
    }
    let mut tickers = Vec::new();
    let mut values = Vec::new();
    for run in group_by_ticker(bars) {
        let ticker = run[0].ticker.clone();
        if run.len() != dates.len() {
            let missing = dates
                .iter()
                .filter(|d| run.binary_search_by_key(*d, |b| b.date).is_err())
                .copied()
                .collect();
            return Err(Error::Alignment {
                ticker: ticker.to_string(),
                missing,
            });
        }
        let mut rows = Vec::with_capacity(dates.len() - 1);
        for pair in run.windows(2) {
            let (p, c) = (&pair[0], &pair[1]);
            let lr = |a: f64, b: f64| {
                if a > 0.0 && b > 0.0 {
                    ln(b / a)
                } else {
                    0.0
                }
            };
            let count = tweet_counts.get(&(ticker.clone(), c.date)).copied().unwrap_or(0);
            rows.push([
                lr(p.open, c.open),
                lr(p.high, c.high),
                lr(p.low, c.low),
                lr(p.close, c.close),
                lr(p.adj_close, c.adj_close),
                ln_1p(c.volume.max(0.0)),
                f64::from(count),
            ]);
        }
        tickers.push(ticker);
        values.push(rows);
    }
    Ok(RawFeatures {
        tickers,
        dates: dates[1..].to_vec(),
        values,
    })
}

/// Per-stock z-score statistics fitted on a range of days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<[f64; FEATURE_DIM]>,
    pub std: Vec<[f64; FEATURE_DIM]>,
}

impl FeatureStats {
    pub fn fit(raw: &RawFeatures, train_days: Range<usize>) -> Result<Self> {
        if train_days.is_empty() || train_days.end > raw.dates.len() {
            return Err(Error::Validation("training day range is empty or out of bounds".into()));
        }
        let mut mean_out = Vec::with_capacity(raw.values.len());
        let mut std_out = Vec::with_capacity(raw.values.len());
        for rows in &raw.values {
            let mut m = [0.0; FEATURE_DIM];
            let mut s = [0.0; FEATURE_DIM];
            for f in 0..FEATURE_DIM {
                let col: Vec<f64> = rows[train_days.clone()].iter().map(|r| r[f]).collect();
                m[f] = mean(&col);
                s[f] = std_dev(&col);
            }
            mean_out.push(m);
            std_out.push(s);
        }
        Ok(FeatureStats {
            mean: mean_out,
            std: std_out,
        })
    }

    /// z-score; a zero standard deviation maps the feature to 0.
    pub fn apply(&self, stock: usize, raw: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for f in 0..FEATURE_DIM {
            let sd = self.std[stock][f];
            out[f] = if sd > 1e-12 {
                (raw[f] - self.mean[stock][f]) / sd
            } else {
                0.0
            };
        }
        out
    }
}

/// Normalized stock feature vectors, statistics fitted on the first
/// `train_days` feature days only.
pub fn build_stock_features(
    bars: &[PriceBar],
    tweet_counts: &BTreeMap<(Ticker, NaiveDate), u32>,
    train_days: Range<usize>,
) -> Result<Vec<StockFeatureVector>> {
    let raw = raw_stock_features(bars, tweet_counts)?;
    let stats = FeatureStats::fit(&raw, train_days)?;
    let mut out = Vec::new();
    for (s, ticker) in raw.tickers.iter().enumerate() {
        for (t, date) in raw.dates.iter().enumerate() {
            out.push(StockFeatureVector {
                ticker: ticker.clone(),
                date: *date,
                values: stats.apply(s, &raw.values[s][t]).to_vec(),
            });
        }
    }
    Ok(out)
}

/// Chronological train/validation/test day ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChronoSplit {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl ChronoSplit {
    pub fn new(n_days: usize, train_ratio: f64, val_ratio: f64) -> Result<Self> {
        if !(train_ratio > 0.0 && val_ratio >= 0.0 && train_ratio + val_ratio <= 1.0) {
            return Err(Error::Validation(format!(
                "bad split ratios train={train_ratio} val={val_ratio}"
            )));
        }
        let train_end = (n_days as f64 * train_ratio) as usize;
        let val_end = ((n_days as f64 * (train_ratio + val_ratio)) as usize).max(train_end);
        if train_end == 0 {
            return Err(Error::Validation("training split is empty".into()));
        }
        Ok(ChronoSplit {
            train: 0..train_end,
            val: train_end..val_end,
            test: val_end..n_days,
        })
    }
}

/// Column layout of the daily macro vector: one column per `(keyword, source)`.
pub fn macro_columns(series: &[MacroSeries]) -> Vec<(String, MacroSource)> {
    let mut cols: Vec<(String, MacroSource)> =
        series.iter().map(|s| (s.keyword.clone(), s.source)).collect();
    cols.sort();
    cols.dedup();
    cols
}

/// Daily macro vectors (forward-filled) for `dates`, z-scored per column on
/// the training days.
pub fn macro_panel(
    series: &[MacroSeries],
    dates: &[NaiveDate],
    train_days: Range<usize>,
) -> Result<Vec<Vec<f64>>> {
    let cols = macro_columns(series);
    let mut by_col: Vec<&MacroSeries> = Vec::with_capacity(cols.len());
    for (kw, src) in &cols {
        let s = series
            .iter()
            .find(|s| &s.keyword == kw && s.source == *src)
            .expect("column from series");
        s.validate()?;
        by_col.push(s);
    }
    let mut panel = vec![vec![0.0; cols.len()]; dates.len()];
    for (c, s) in by_col.iter().enumerate() {
        for (t, d) in dates.iter().enumerate() {
            panel[t][c] = s.value_at(*d).unwrap_or(0.0);
        }
        let train: Vec<f64> = panel[train_days.clone()].iter().map(|r| r[c]).collect();
        let (m, sd) = (mean(&train), std_dev(&train));
        for row in panel.iter_mut() {
            row[c] = if sd > 1e-12 { (row[c] - m) / sd } else { 0.0 };
        }
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;

    fn d(day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 3, day).unwrap()
    }

    fn bar(ticker: &str, day: u32, adj: f64) -> PriceBar {
        PriceBar {
            ticker: ticker.into(),
            date: d(day),
            open: adj,
            high: adj,
            low: adj,
            close: adj,
            adj_close: adj,
            volume: 1000.0,
        }
    }

    fn label(prev: f64, cur: f64) -> StockDayLabel {
        let bars = [bar("AAPL", 1, prev), bar("AAPL", 2, cur)];
        compute_labels(&bars, LabelConfig::default()).unwrap().remove(0)
    }

    #[test]
    fn labels_inside_band_are_excluded() {
        let l = label(100.0, 100.4);
        assert!((l.return_pct - 0.004).abs() < 1e-12);
        assert_eq!(l.movement, Movement::Excluded);
        assert!(!l.volatility);
    }

    #[test]
    fn six_percent_is_up_and_abnormal() {
        let l = label(100.0, 106.0);
        assert!((l.return_pct - 0.06).abs() < 1e-12);
        assert_eq!(l.movement, Movement::Up);
        assert!(l.volatility);
    }

    #[test]
    fn flat_day_is_excluded() {
        let l = label(100.0, 100.0);
        assert_eq!(l.return_pct, 0.0);
        assert_eq!(l.movement, Movement::Excluded);
        assert!(!l.volatility);
    }

    #[test]
    fn band_edges_are_directional() {
        let cfg = LabelConfig::default();
        assert_eq!(cfg.classify(0.005).0, Movement::Up);
        assert_eq!(cfg.classify(-0.005).0, Movement::Down);
        assert_eq!(cfg.classify(0.0049999).0, Movement::Excluded);
        assert!(cfg.classify(-0.05).1);
        assert!(!cfg.classify(0.0499).1);
    }

    #[test]
    fn nonpositive_previous_close_rejected() {
        let mut bars = [bar("AAPL", 1, 100.0), bar("AAPL", 2, 101.0)];
        bars[0].adj_close = 0.0;
        assert!(compute_labels(&bars, LabelConfig::default()).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        let bars = alloc::vec![bar("AAPL", 1, 100.0), bar("AAPL", 1, 101.0)];
        assert!(matches!(prepare_prices(bars), Err(Error::Duplicate { .. })));
    }

    fn window(values: &[(u32, f64)]) -> TrendWindow {
        TrendWindow {
            samples: values.iter().map(|(day, v)| (d(*day), *v)).collect(),
        }
    }

    #[test]
    fn identical_windows_are_identity() {
        let w = window(&[(1, 40.0), (2, 100.0), (3, 70.0)]);
        let s = normalize_trend_windows("gdp", &[w.clone(), w.clone()]).unwrap();
        assert_eq!(s.samples, w.samples);
    }

    #[test]
    fn half_anchor_doubles_next_window() {
        // A = [100 @1, 80 @2]; B anchored at day 2 with value 40 → ×2.
        let a = window(&[(1, 100.0), (2, 80.0)]);
        let b = window(&[(2, 40.0), (3, 100.0)]);
        let s = normalize_trend_windows("gdp", &[a, b]).unwrap();
        // pre-rescale: 100, 80, 200 → rescaled by 100/200
        let vals: Vec<f64> = s.samples.iter().map(|(_, v)| *v).collect();
        assert_eq!(vals, alloc::vec![50.0, 40.0, 100.0]);
    }

    #[test]
    fn ratios_compound_along_chain() {
        // Ratios 1, 2, 4: the third window ends up ×8 before rescaling.
        let a = window(&[(1, 10.0), (2, 8.0)]);
        let b = window(&[(2, 4.0), (3, 10.0)]);
        let c = window(&[(3, 2.5), (4, 1.0)]);
        let s = normalize_trend_windows("gdp", &[a, b, c]).unwrap();
        let vals: Vec<f64> = s.samples.iter().map(|(_, v)| *v).collect();
        // pre-rescale 10, 8, 20, 8 → max 20
        assert_eq!(vals, alloc::vec![50.0, 40.0, 100.0, 40.0]);
    }

    #[test]
    fn zero_anchor_names_window_pair() {
        let a = window(&[(1, 10.0), (2, 0.0)]);
        let b = window(&[(2, 4.0), (3, 10.0)]);
        let err = normalize_trend_windows("gdp", &[a, b]).unwrap_err();
        assert!(matches!(err, Error::Chaining { left: 0, right: 1, .. }));
    }

    #[test]
    fn chaining_is_scale_invariant() {
        let a = window(&[(1, 10.0), (2, 8.0)]);
        let b = window(&[(2, 4.0), (3, 10.0), (4, 7.0)]);
        let base = normalize_trend_windows("k", &[a.clone(), b.clone()]).unwrap();
        let scale = |w: &TrendWindow, c: f64| TrendWindow {
            samples: w.samples.iter().map(|(d, v)| (*d, v * c)).collect(),
        };
        let scaled = normalize_trend_windows("k", &[scale(&a, 3.7), scale(&b, 3.7)]).unwrap();
        for (x, y) in base.samples.iter().zip(&scaled.samples) {
            assert!((x.1 - y.1).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_prices_give_zero_return_features() {
        let bars: Vec<PriceBar> = (1..=6).map(|day| bar("AAPL", day, 50.0)).collect();
        let feats = build_stock_features(&bars, &BTreeMap::new(), 0..4).unwrap();
        for f in feats {
            assert!(f.values.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn three_day_hand_computation() {
        // adj closes 100, 110, 99 → log returns ln(1.1), ln(0.9).
        let mut bars = alloc::vec![bar("X", 1, 100.0), bar("X", 2, 110.0), bar("X", 3, 99.0)];
        bars[1].volume = 2000.0;
        let mut counts = BTreeMap::new();
        counts.insert((Ticker::new("X"), d(2)), 4);
        let feats = build_stock_features(&bars, &counts, 0..2).unwrap();
        let r1 = ln(1.1);
        let r2 = ln(0.9);
        let m = (r1 + r2) / 2.0;
        let sd = sqrt(((r1 - m) * (r1 - m) + (r2 - m) * (r2 - m)) / 2.0);
        assert!((feats[0].values[4] - (r1 - m) / sd).abs() < 1e-12);
        assert!((feats[1].values[4] - (r2 - m) / sd).abs() < 1e-12);
        // two points always z-score to ±1
        assert!((feats[0].values[5] - 1.0).abs() < 1e-12);
        assert!((feats[0].values[6] - 1.0).abs() < 1e-12);
        assert!((feats[1].values[6] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifting_prices_changes_returns_as_hand_oracle() {
        let series = [100.0, 110.0, 99.0];
        let shifted: Vec<PriceBar> = series
            .iter()
            .enumerate()
            .map(|(i, p)| bar("X", i as u32 + 1, p + 10.0))
            .collect();
        let raw = raw_stock_features(&shifted, &BTreeMap::new()).unwrap();
        assert!((raw.values[0][0][4] - ln(120.0 / 110.0)).abs() < 1e-15);
        assert!((raw.values[0][1][4] - ln(109.0 / 120.0)).abs() < 1e-15);
    }

    #[test]
    fn missing_dates_are_listed() {
        let bars = prepare_prices(alloc::vec![
            bar("A", 1, 1.0),
            bar("A", 2, 1.0),
            bar("A", 3, 1.0),
            bar("B", 1, 1.0),
            bar("B", 3, 1.0),
        ])
        .unwrap();
        match raw_stock_features(&bars, &BTreeMap::new()) {
            Err(Error::Alignment { ticker, missing }) => {
                assert_eq!(ticker, "B");
                assert_eq!(missing, alloc::vec![d(2)]);
            }
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn split_is_seventy_ten_twenty() {
        let s = ChronoSplit::new(100, 0.7, 0.1).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..70, 70..80, 80..100));
    }
}
