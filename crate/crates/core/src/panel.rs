//! The predictor's view of a dataset: per-day, per-stock features and labels
//! plus the frozen parts of the trends (macro trend and per-sector tweet
//! aggregates).

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ChronoSplit;
use crate::tensor::Matrix;
use crate::trends::{daily_mean_embedding, macro_trend, micro_tweet_agg, sector_day_features};
use crate::types::{Movement, SectorMap, StockDayLabel, StockFeatureVector, Ticker};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub tickers: Vec<Ticker>,
    pub dates: Vec<NaiveDate>,
    pub sector_of: Vec<usize>,
    pub num_sectors: usize,
    /// `[day][stock]`, width p.
    pub features: Vec<Vec<Vec<f64>>>,
    /// `[day]`, z-scored macro columns.
    pub macro_vecs: Vec<Vec<f64>>,
    /// `[day]`, `a_t`, width q.
    pub macro_trend: Vec<Vec<f64>>,
    /// `[day][sector]`.
    pub alpha_macro: Vec<Vec<f64>>,
    /// `[day][sector]`, `w_ct`, width 2k.
    pub sector_queries: Vec<Vec<Vec<f64>>>,
    pub has_tweets: Vec<bool>,
    /// `[day][stock]`
    pub movement: Vec<Vec<Movement>>,
    /// `[day][stock]`
    pub volatility: Vec<Vec<bool>>,
    pub split: ChronoSplit,
}

pub struct PanelInputs<'a> {
    pub features: &'a [StockFeatureVector],
    pub labels: &'a [StockDayLabel],
    /// One row per feature date, in date order.
    pub macro_vecs: Vec<Vec<f64>>,
    /// Embeddings of the (filtered, masked) tweets of each day.
    pub day_embeddings: &'a BTreeMap<NaiveDate, Vec<Vec<f64>>>,
    /// Frozen sector matrix `C`.
    pub sectors: &'a Matrix,
    pub sector_map: &'a SectorMap,
    pub split: ChronoSplit,
}

impl Panel {
    pub fn assemble(inp: PanelInputs<'_>) -> Result<Panel> {
        let mut tickers: Vec<Ticker> = inp.features.iter().map(|f| f.ticker.clone()).collect();
        tickers.sort();
        tickers.dedup();
        let mut dates: Vec<NaiveDate> = inp.features.iter().map(|f| f.date).collect();
        dates.sort();
        dates.dedup();
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::Empty("no stock features"));
        }
        if inp.macro_vecs.len() != dates.len() {
            return Err(Error::dim("macro rows", dates.len(), inp.macro_vecs.len()));
        }
        if inp.split.test.end != dates.len() {
            return Err(Error::dim("split days", dates.len(), inp.split.test.end));
        }
        let m = inp.sector_map.num_sectors();
        if inp.sectors.rows != m {
            return Err(Error::dim("sector matrix rows", m, inp.sectors.rows));
        }
        let sector_of = tickers
            .iter()
            .map(|t| inp.sector_map.sector_of(t))
            .collect::<Result<Vec<_>>>()?;
        let stock_ix: BTreeMap<&Ticker, usize> = tickers.iter().enumerate().map(|(i, t)| (t, i)).collect();
        let day_ix: BTreeMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();

        let p = inp.features[0].values.len();
        let (n, n_days) = (tickers.len(), dates.len());
        let mut features = vec![vec![Vec::new(); n]; n_days];
        for f in inp.features {
            if f.values.len() != p || f.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("bad feature vector for {} on {}", f.ticker, f.date)));
            }
            features[day_ix[&f.date]][stock_ix[&f.ticker]] = f.values.clone();
        }
        for (t, row) in features.iter().enumerate() {
            let missing: Vec<&Ticker> = row
                .iter()
                .zip(&tickers)
                .filter(|(v, _)| v.is_empty())
                .map(|(_, t)| t)
                .collect();
            if let Some(tk) = missing.first() {
                return Err(Error::Alignment {
                    ticker: tk.to_string(),
                    missing: vec![dates[t]],
                });
            }
        }

        let mut movement = vec![vec![Movement::Excluded; n]; n_days];
        let mut volatility = vec![vec![false; n]; n_days];
        let mut seen = vec![vec![false; n]; n_days];
        for l in inp.labels {
            if let (Some(&t), Some(&s)) = (day_ix.get(&l.date), stock_ix.get(&l.ticker)) {
                movement[t][s] = l.movement;
                volatility[t][s] = l.volatility;
                seen[t][s] = true;
            }
        }
        for (t, row) in seen.iter().enumerate() {
            if let Some(s) = row.iter().position(|x| !x) {
                return Err(Error::Alignment {
                    ticker: tickers[s].to_string(),
                    missing: vec![dates[t]],
                });
            }
        }

        let width = inp.sectors.cols;
        let empty = Vec::new();
        let mut macro_trend_rows = Vec::with_capacity(n_days);
        let mut alpha_macro = Vec::with_capacity(n_days);
        let mut sector_queries = Vec::with_capacity(n_days);
        let mut has_tweets = Vec::with_capacity(n_days);
        for (t, date) in dates.iter().enumerate() {
            let embs = inp.day_embeddings.get(date).unwrap_or(&empty);
            if let Some(e) = embs.iter().find(|e| e.len() != width) {
                return Err(Error::dim("tweet embedding", width, e.len()));
            }
            let (r_t, any) = daily_mean_embedding(embs, width);
            let x_ct = sector_day_features(&inp.macro_vecs[t], &features[t], &sector_of, m);
            let (a_t, alpha) = macro_trend(&r_t, inp.sectors, &x_ct)?;
            let w: Vec<Vec<f64>> = (0..m).map(|c| micro_tweet_agg(inp.sectors.row(c), embs).0).collect();
            macro_trend_rows.push(a_t);
            alpha_macro.push(alpha);
            sector_queries.push(w);
            has_tweets.push(any);
        }

        Ok(Panel {
            tickers,
            dates,
            sector_of,
            num_sectors: m,
            features,
            macro_vecs: inp.macro_vecs,
            macro_trend: macro_trend_rows,
            alpha_macro,
            sector_queries,
            has_tweets,
            movement,
            volatility,
            split: inp.split,
        })
    }

    pub fn num_stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn num_days(&self) -> usize {
        self.dates.len()
    }

    /// Width p of a stock feature vector.
    pub fn feature_dim(&self) -> usize {
        self.features[0][0].len()
    }

    /// Width q of the macro trend.
    pub fn macro_dim(&self) -> usize {
        self.macro_trend[0].len()
    }

    /// Width 2k of the tweet aggregates.
    pub fn query_dim(&self) -> usize {
        self.sector_queries[0].first().map_or(0, Vec::len)
    }

    /// `(stock, day)` pairs whose full `window` of history lies inside the
    /// panel, for days in `days`.
    pub fn samples(&self, days: core::ops::Range<usize>, window: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for t in days.start.max(window)..days.end.min(self.num_days()) {
            for s in 0..self.num_stocks() {
                out.push((s, t));
            }
        }
        out
    }
}
