//! Domain records shared across the pipeline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper-case ticker symbol without the `$` prefix.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ticker(String);

impl Ticker {
    pub fn new(symbol: &str) -> Self {
        Ticker(symbol.trim_start_matches('$').to_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// The cashtag token form, e.g. `$AAPL`.
    pub fn cashtag(&self) -> String {
        format!("${}", self.0)
    }
}

impl fmt::Display for Ticker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Ticker {
    fn from(s: &str) -> Self {
        Ticker::new(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBar {
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl PriceBar {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.open,
            self.high,
            self.low,
            self.close,
            self.adj_close,
            self.volume,
        ];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(self.invalid("non-finite field"));
        }
        if self.low > self.open.min(self.close) {
            return Err(self.invalid("low above open/close"));
        }
        if self.high < self.open.max(self.close) {
            return Err(self.invalid("high below open/close"));
        }
        if self.low > self.high {
            return Err(self.invalid("low above high"));
        }
        if self.adj_close <= 0.0 {
            return Err(self.invalid("adjusted close must be positive"));
        }
        if self.volume < 0.0 {
            return Err(self.invalid("negative volume"));
        }
        Ok(())
    }

    fn invalid(&self, what: &str) -> Error {
        Error::Validation(format!("{} {}: {}", self.ticker, self.date, what))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    Up,
    Down,
    Excluded,
}

impl Movement {
    /// 1 for Up, 0 for Down, `None` for excluded days.
    pub fn class(self) -> Option<usize> {
        match self {
            Movement::Up => Some(1),
            Movement::Down => Some(0),
            Movement::Excluded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockDayLabel {
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub return_pct: f64,
    pub movement: Movement,
    pub volatility: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MacroSource {
    #[serde(rename = "trend-index")]
    TrendIndex,
    #[serde(rename = "econ-series")]
    EconSeries,
}

impl MacroSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "trend-index" => Ok(MacroSource::TrendIndex),
            "econ-series" => Ok(MacroSource::EconSeries),
            other => Err(Error::Validation(format!("unknown macro source {other:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MacroSource::TrendIndex => "trend-index",
            MacroSource::EconSeries => "econ-series",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSeries {
    pub keyword: String,
    pub source: MacroSource,
    pub samples: Vec<(NaiveDate, f64)>,
}

impl MacroSeries {
    pub fn validate(&self) -> Result<()> {
        for w in self.samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Validation(format!(
                    "{} ({}): dates not strictly increasing at {}",
                    self.keyword,
                    self.source.as_str(),
                    w[1].0
                )));
            }
        }
        if self.samples.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::Validation(format!("{}: non-finite value", self.keyword)));
        }
        if self.source == MacroSource::TrendIndex
            && self.samples.iter().any(|(_, v)| !(0.0..=100.0).contains(v))
        {
            return Err(Error::Validation(format!(
                "{}: trend index outside [0, 100]",
                self.keyword
            )));
        }
        Ok(())
    }

    /// Value on `date`, carrying the last observation forward. Dates before
    /// the first sample take the first sample's value.
    pub fn value_at(&self, date: NaiveDate) -> Option<f64> {
        let idx = self.samples.partition_point(|(d, _)| *d <= date);
        if idx == 0 {
            self.samples.first().map(|(_, v)| *v)
        } else {
            Some(self.samples[idx - 1].1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Neutral, Sentiment::Negative];

    pub fn index(self) -> usize {
        match self {
            Sentiment::Positive => 0,
            Sentiment::Neutral => 1,
            Sentiment::Negative => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub id: String,
    pub tickers: Vec<Ticker>,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub likes: u64,
    pub retweets: u64,
    pub impressions: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentiment: Option<Sentiment>,
}

impl Tweet {
    /// Calendar day (UTC) the tweet is attributed to.
    pub fn day(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tickers.is_empty() {
            return Err(Error::Validation(format!("tweet {} has no cashtag", self.id)));
        }
        Ok(())
    }

    pub fn mentions(&self, ticker: &Ticker) -> bool {
        self.tickers.iter().any(|t| t == ticker)
    }
}

/// Ticker → sector index, with indices contiguous over `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMap {
    entries: BTreeMap<Ticker, usize>,
    names: Vec<String>,
}

impl SectorMap {
    /// Builds a map from `(ticker, sector)` rows. Sector labels that all parse
    /// as integers are used as indices directly (and must be contiguous from
    /// zero); otherwise names are indexed in sorted order.
    pub fn from_pairs(rows: &[(Ticker, String)]) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let labels: BTreeSet<&str> = rows.iter().map(|(_, s)| s.as_str()).collect();
        let numeric: Option<Vec<usize>> = labels.iter().map(|s| s.parse::<usize>().ok()).collect();
        let names: Vec<String> = match &numeric {
            Some(ids) => {
                let max = ids.iter().copied().max().unwrap_or(0);
                if ids.len() != max + 1 {
                    return Err(Error::Validation(
                        "numeric sector ids must be contiguous from 0".into(),
                    ));
                }
                (0..=max).map(|i| i.to_string()).collect()
            }
            None => labels.iter().map(|s| s.to_string()).collect(),
        };
        for (ticker, label) in rows {
            let idx = match &numeric {
                Some(_) => label.parse::<usize>().expect("checked above"),
                None => names.iter().position(|n| n == label).expect("label present"),
            };
            if let Some(prev) = entries.insert(ticker.clone(), idx) {
                if prev != idx {
                    return Err(Error::Validation(format!(
                        "{ticker} mapped to two sectors"
                    )));
                }
            }
        }
        Ok(SectorMap { entries, names })
    }

    pub fn from_indices(pairs: &[(Ticker, usize)], names: Vec<String>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (t, s) in pairs {
            if *s >= names.len() {
                return Err(Error::Validation(format!("{t}: sector {s} out of range")));
            }
            entries.insert(t.clone(), *s);
        }
        Ok(SectorMap { entries, names })
    }

    pub fn sector_of(&self, ticker: &Ticker) -> Result<usize> {
        self.entries
            .get(ticker)
            .copied()
            .ok_or_else(|| Error::UnmappedTicker(ticker.to_string()))
    }

    pub fn num_sectors(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, sector: usize) -> &str {
        &self.names[sector]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tickers(&self) -> impl Iterator<Item = &Ticker> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ticker, usize)> {
        self.entries.iter().map(|(t, s)| (t, *s))
    }

    pub fn contains(&self, ticker: &Ticker) -> bool {
        self.entries.contains_key(ticker)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockFeatureVector {
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub values: Vec<f64>,
}
