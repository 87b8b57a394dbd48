//! Tweet filter: sentiment scoring, daily aggregation, sentiment-vs-movement
//! association and top-k selection by impressions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::text::tokenize;
use crate::types::{Movement, Sentiment, StockDayLabel, Ticker, Tweet};

pub trait SentimentScorer {
    fn score(&self, text: &str) -> Sentiment;
}

/// Word-count polarity. A polar word preceded by a negator within
/// `negation_window` tokens counts with the opposite sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconScorer {
    pub polarity: BTreeMap<String, i32>,
    pub negators: BTreeSet<String>,
    pub negation_window: usize,
}

const DEFAULT_POSITIVE: &[&str] = &[
    "soar", "soars", "soaring", "rally", "rallies", "bullish", "bull", "surge", "surges", "beat",
    "beats", "strong", "upgrade", "upgraded", "gains", "gain", "buy", "moon", "breakout", "record",
    "profit", "growth", "outperform", "higher", "up", "green", "win", "great", "love",
];
const DEFAULT_NEGATIVE: &[&str] = &[
    "crash", "crashes", "plunge", "plunges", "bearish", "bear", "slump", "miss", "misses", "weak",
    "downgrade", "downgraded", "losses", "loss", "sell", "dump", "drop", "drops", "lower", "down",
    "red", "fraud", "lawsuit", "bankrupt", "fear", "worst", "bad", "underperform",
];
const DEFAULT_NEGATORS: &[&str] = &["not", "no", "never", "don't", "isn't", "won't", "can't", "cannot", "without"];

impl Default for LexiconScorer {
    fn default() -> Self {
        let mut polarity = BTreeMap::new();
        for w in DEFAULT_POSITIVE {
            polarity.insert(w.to_string(), 1);
        }
        for w in DEFAULT_NEGATIVE {
            polarity.insert(w.to_string(), -1);
        }
        LexiconScorer {
            polarity,
            negators: DEFAULT_NEGATORS.iter().map(|s| s.to_string()).collect(),
            negation_window: 3,
        }
    }
}

impl SentimentScorer for LexiconScorer {
    fn score(&self, text: &str) -> Sentiment {
        let tokens = tokenize(text, &BTreeSet::new());
        let mut total = 0;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(&p) = self.polarity.get(tok) else {
                continue;
            };
            let lo = i.saturating_sub(self.negation_window);
            let negated = tokens[lo..i].iter().any(|t| self.negators.contains(t));
            total += if negated { -p } else { p };
        }
        match total {
            t if t > 0 => Sentiment::Positive,
            t if t < 0 => Sentiment::Negative,
            _ => Sentiment::Neutral,
        }
    }
}

/// A preset label (the import path) wins over the scorer.
pub fn score_sentiment<S: SentimentScorer + ?Sized>(tweet: &Tweet, scorer: &S) -> Sentiment {
    tweet.sentiment.unwrap_or_else(|| scorer.score(&tweet.text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailySentiment {
    pub ticker: Ticker,
    pub date: NaiveDate,
    /// Indexed by [`Sentiment::index`].
    pub counts: [usize; 3],
    pub aggregate: Sentiment,
}

/// Plurality class; any tie for the top count resolves to neutral.
pub fn aggregate_counts(counts: [usize; 3]) -> Result<Sentiment> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("no tweets for stock-day"));
    }
    let max = *counts.iter().max().expect("three classes");
    let winners: Vec<Sentiment> = Sentiment::ALL
        .iter()
        .copied()
        .filter(|s| counts[s.index()] == max)
        .collect();
    Ok(if winners.len() == 1 {
        winners[0]
    } else {
        Sentiment::Neutral
    })
}

pub fn aggregate_daily(ticker: &Ticker, date: NaiveDate, sentiments: &[Sentiment]) -> Result<DailySentiment> {
    let mut counts = [0usize; 3];
    for s in sentiments {
        counts[s.index()] += 1;
    }
    Ok(DailySentiment {
        ticker: ticker.clone(),
        date,
        counts,
        aggregate: aggregate_counts(counts)?,
    })
}

/// Observed counts, rows = sentiment categories, columns = movement categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub observed: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(observed: Vec<Vec<u64>>) -> Result<Self> {
        let cols = observed.first().map_or(0, Vec::len);
        if observed.is_empty() || cols == 0 || observed.iter().any(|r| r.len() != cols) {
            return Err(Error::Validation("contingency table must be a nonempty rectangle".into()));
        }
        Ok(ContingencyTable { observed })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ContingencyTable {
            observed: vec![vec![0; cols]; rows],
        }
    }

    pub fn rows(&self) -> usize {
        self.observed.len()
    }

    pub fn cols(&self) -> usize {
        self.observed.first().map_or(0, Vec::len)
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.observed.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols())
            .map(|j| self.observed.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn grand_total(&self) -> u64 {
        self.observed.iter().flatten().sum()
    }

    /// Cell-wise sum; tables must share a shape.
    pub fn merge(&mut self, other: &ContingencyTable) {
        assert_eq!(self.rows(), other.rows());
        assert_eq!(self.cols(), other.cols());
        for (a, b) in self.observed.iter_mut().zip(&other.observed) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Drops all-zero rows and columns.
    pub fn pruned(&self) -> ContingencyTable {
        let rt = self.row_totals();
        let ct = self.col_totals();
        let observed = self
            .observed
            .iter()
            .zip(&rt)
            .filter(|(_, t)| **t > 0)
            .map(|(r, _)| r.iter().zip(&ct).filter(|(_, t)| **t > 0).map(|(v, _)| *v).collect())
            .collect();
        ContingencyTable { observed }
    }

    /// `E_ij = Row_i * Column_j / Total`.
    pub fn expected(&self) -> Result<Vec<Vec<f64>>> {
        let total = self.grand_total();
        if total == 0 {
            return Err(Error::Validation("contingency table total is zero".into()));
        }
        let rt = self.row_totals();
        let ct = self.col_totals();
        let n = total as f64;
        Ok(rt
            .iter()
            .map(|&r| ct.iter().map(|&c| r as f64 * c as f64 / n).collect())
            .collect())
    }

    /// Pearson chi-square over the pruned table. Fails with
    /// [`Error::Degenerate`] when fewer than two rows or columns remain.
    pub fn chi_square(&self) -> Result<f64> {
        let t = self.pruned();
        if t.rows() < 2 || t.cols() < 2 {
            return Err(Error::Degenerate);
        }
        let e = t.expected()?;
        let mut chi2 = 0.0;
        for (orow, erow) in t.observed.iter().zip(&e) {
            for (&o, &ex) in orow.iter().zip(erow) {
                let d = o as f64 - ex;
                chi2 += d * d / ex;
            }
        }
        Ok(chi2)
    }

    /// `sqrt(chi2 / (n * (min(rows, cols) - 1)))`, clamped to [0, 1].
    pub fn cramers_v(&self) -> Result<f64> {
        let chi2 = self.chi_square()?;
        let t = self.pruned();
        let k = t.rows().min(t.cols()) - 1;
        let v = sqrt(chi2 / (t.grand_total() as f64 * k as f64));
        Ok(v.clamp(0.0, 1.0))
    }
}

/// How many tweets to keep per stock-day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KChoice {
    Top(usize),
    All,
}

impl KChoice {
    pub fn limit(self) -> usize {
        match self {
            KChoice::Top(k) => k,
            KChoice::All => usize::MAX,
        }
    }
}

impl fmt::Display for KChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KChoice::Top(k) => write!(f, "{k}"),
            KChoice::All => f.write_str("all"),
        }
    }
}

impl core::str::FromStr for KChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all" => Ok(KChoice::All),
            n => match n.parse::<usize>() {
                Ok(k) if k > 0 => Ok(KChoice::Top(k)),
                _ => Err(Error::Validation(format!("k must be a positive integer or 'all', got {s:?}"))),
            },
        }
    }
}

impl Serialize for KChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        match self {
            KChoice::Top(k) => s.serialize_u64(*k as u64),
            KChoice::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for KChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) if n > 0 => Ok(KChoice::Top(n as usize)),
            Raw::N(_) => Err(serde::de::Error::custom("k must be positive")),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn rank_cmp(a: &Tweet, b: &Tweet) -> core::cmp::Ordering {
    b.impressions
        .cmp(&a.impressions)
        .then(b.likes.cmp(&a.likes))
        .then(a.id.cmp(&b.id))
}

/// Indices of `tweets` in rank order (impressions desc, likes desc, id asc),
/// keeping only the best-ranked copy of each exact text.
pub fn rank_distinct(tweets: &[&Tweet]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..tweets.len()).collect();
    order.sort_by(|&a, &b| rank_cmp(tweets[a], tweets[b]));
    let mut seen = BTreeSet::new();
    order.retain(|&i| seen.insert(tweets[i].text.as_str()));
    order
}

/// The `k` distinct tweets with the most impressions, best first.
pub fn select_top_k<'a>(tweets: &[&'a Tweet], k: KChoice) -> Vec<&'a Tweet> {
    rank_distinct(tweets)
        .into_iter()
        .take(k.limit())
        .map(|i| tweets[i])
        .collect()
}

/// All tweets for one stock on one day, with their sentiment and the day's
/// movement label (if any).
#[derive(Debug, Clone)]
pub struct StockDay<'a> {
    pub ticker: Ticker,
    pub date: NaiveDate,
    pub tweets: Vec<&'a Tweet>,
    pub sentiments: Vec<Sentiment>,
    pub movement: Option<Movement>,
}

/// Groups tweets into stock-days (a tweet joins every stock it mentions) and
/// attaches same-day movement labels. Output is sorted by `(ticker, date)`.
pub fn group_stock_days<'a>(
    tweets: &'a [Tweet],
    sentiments: &[Sentiment],
    labels: &[StockDayLabel],
) -> Vec<StockDay<'a>> {
    let label_of: BTreeMap<(&Ticker, NaiveDate), Movement> =
        labels.iter().map(|l| ((&l.ticker, l.date), l.movement)).collect();
    let mut groups: BTreeMap<(Ticker, NaiveDate), (Vec<&'a Tweet>, Vec<Sentiment>)> = BTreeMap::new();
    for (tweet, &s) in tweets.iter().zip(sentiments) {
        for t in &tweet.tickers {
            let g = groups.entry((t.clone(), tweet.day())).or_default();
            g.0.push(tweet);
            g.1.push(s);
        }
    }
    groups
        .into_iter()
        .map(|((ticker, date), (tweets, sentiments))| {
            let movement = label_of.get(&(&ticker, date)).copied();
            StockDay {
                ticker,
                date,
                tweets,
                sentiments,
                movement,
            }
        })
        .collect()
}

/// Sentiment rows (positive, neutral, negative) by movement columns (up, down)
/// over stock-days, using each day's top-`k` distinct tweets.
pub fn contingency_for_k(days: &[StockDay<'_>], k: KChoice) -> ContingencyTable {
    let mut table = ContingencyTable::zeros(3, 2);
    for day in days {
        let col = match day.movement {
            Some(Movement::Up) => 0,
            Some(Movement::Down) => 1,
            _ => continue,
        };
        let order = rank_distinct(&day.tweets);
        let mut counts = [0usize; 3];
        for &i in order.iter().take(k.limit()) {
            counts[day.sentiments[i].index()] += 1;
        }
        if let Ok(agg) = aggregate_counts(counts) {
            table.observed[agg.index()][col] += 1;
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KPoint {
    pub k: KChoice,
    /// `None` when the table is degenerate.
    pub cramers_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub chosen_k: KChoice,
    pub observed: Vec<Vec<u64>>,
    pub expected: Vec<Vec<f64>>,
    pub chi_square: f64,
    pub cramers_v: f64,
    pub k_curve: Vec<KPoint>,
    pub slack: f64,
}

pub fn default_candidates() -> Vec<KChoice> {
    let mut c: Vec<KChoice> = (1..=10).map(KChoice::Top).collect();
    c.push(KChoice::All);
    c
}

/// Computes Cramér's V for each candidate k and picks the smallest k whose V
/// is within `slack` (relative) of the best. Degenerate tables count as V = 0.
pub fn calibrate_k(days: &[StockDay<'_>], candidates: &[KChoice], slack: f64) -> Result<AssociationReport> {
    if candidates.is_empty() {
        return Err(Error::Calibration("no candidate k".into()));
    }
    let classes: BTreeSet<Movement> = days
        .iter()
        .filter_map(|d| d.movement)
        .filter(|m| *m != Movement::Excluded)
        .collect();
    if classes.len() < 2 {
        return Err(Error::Calibration(
            "training labels need both up and down days".into(),
        ));
    }
    let mut candidates = candidates.to_vec();
    candidates.sort();
    candidates.dedup();
    let mut curve = Vec::with_capacity(candidates.len());
    let mut tables = Vec::with_capacity(candidates.len());
    for &k in &candidates {
        let table = contingency_for_k(days, k);
        curve.push(KPoint {
            k,
            cramers_v: table.cramers_v().ok(),
        });
        tables.push(table);
    }
    let best = curve
        .iter()
        .filter_map(|p| p.cramers_v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return Err(Error::Calibration("every candidate table is degenerate".into()));
    }
    let threshold = (1.0 - slack) * best;
    let chosen = curve
        .iter()
        .position(|p| p.cramers_v.unwrap_or(0.0) >= threshold)
        .expect("the best candidate qualifies");
    let table = &tables[chosen];
    let pruned = table.pruned();
    Ok(AssociationReport {
        chosen_k: curve[chosen].k,
        observed: table.observed.clone(),
        expected: pruned.expected()?,
        chi_square: table.chi_square()?,
        cramers_v: table.cramers_v()?,
        k_curve: curve,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use chrono::TimeZone;

    fn tweet(id: &str, text: &str, impressions: u64, likes: u64) -> Tweet {
        Tweet {
            id: id.into(),
            tickers: vec![Ticker::new("AAPL")],
            text: text.into(),
            timestamp: chrono::Utc.with_ymd_and_hms(2021, 3, 1, 15, 0, 0).unwrap(),
            likes,
            retweets: 0,
            impressions,
            sentiment: None,
        }
    }

    #[test]
    fn lexicon_worked_example() {
        let s = LexiconScorer::default();
        let t = tweet("1", "With Vision pro, $AAPL is about to soar!", 1, 0);
        assert_eq!(score_sentiment(&t, &s), Sentiment::Positive);
        assert_eq!(s.score("quarterly call at noon"), Sentiment::Neutral);
        assert_eq!(s.score(""), Sentiment::Neutral);
        assert_eq!(s.score("this will not soar"), Sentiment::Negative);
    }

    #[test]
    fn preset_sentiment_passes_through() {
        let mut t = tweet("1", "to the moon, soar soar", 1, 0);
        t.sentiment = Some(Sentiment::Negative);
        assert_eq!(score_sentiment(&t, &LexiconScorer::default()), Sentiment::Negative);
    }

    #[test]
    fn aggregation_rules() {
        assert_eq!(aggregate_counts([3, 0, 1]).unwrap(), Sentiment::Positive);
        assert_eq!(aggregate_counts([2, 0, 2]).unwrap(), Sentiment::Neutral);
        assert_eq!(aggregate_counts([1, 1, 5]).unwrap(), Sentiment::Negative);
        assert!(aggregate_counts([0, 0, 0]).is_err());
    }

    fn table(rows: &[&[u64]]) -> ContingencyTable {
        ContingencyTable::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn expected_frequencies_by_hand() {
        assert_eq!(table(&[&[10, 10], &[10, 10]]).expected().unwrap(), vec![vec![10.0; 2]; 2]);
        assert_eq!(table(&[&[20, 0], &[0, 20]]).expected().unwrap(), vec![vec![10.0; 2]; 2]);
        let e = table(&[&[1, 2], &[3, 4]]).expected().unwrap();
        let want = [[1.2, 1.8], [2.8, 4.2]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((e[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
        assert!(ContingencyTable::zeros(2, 2).expected().is_err());
    }

    #[test]
    fn chi_square_and_v_by_hand() {
        let uniform = table(&[&[10, 10], &[10, 10]]);
        assert_eq!(uniform.chi_square().unwrap(), 0.0);
        assert_eq!(uniform.cramers_v().unwrap(), 0.0);
        let perfect = table(&[&[20, 0], &[0, 20]]);
        assert!((perfect.chi_square().unwrap() - 40.0).abs() < 1e-12);
        assert!((perfect.cramers_v().unwrap() - 1.0).abs() < 1e-12);
        // 0.04/1.2 + 0.04/1.8 + 0.04/2.8 + 0.04/4.2 = 5/63
        let t = table(&[&[1, 2], &[3, 4]]);
        assert!((t.chi_square().unwrap() - 5.0 / 63.0).abs() < 1e-12);
        assert!((t.cramers_v().unwrap() - sqrt(5.0 / 630.0)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_tables_flagged() {
        assert_eq!(table(&[&[5, 3], &[0, 0]]).chi_square(), Err(Error::Degenerate));
        assert_eq!(table(&[&[5, 0], &[2, 0], &[1, 0]]).cramers_v(), Err(Error::Degenerate));
        // a zero row is pruned, the rest still defines V
        assert!(table(&[&[5, 1], &[0, 0], &[1, 5]]).cramers_v().is_ok());
    }

    #[test]
    fn top_k_by_impressions() {
        let ts: Vec<Tweet> = (0..10)
            .map(|i| tweet(&format!("{i}"), &format!("text {i}"), (i * 37 % 11) as u64 * 100, 0))
            .collect();
        let refs: Vec<&Tweet> = ts.iter().collect();
        let top = select_top_k(&refs, KChoice::Top(6));
        assert_eq!(top.len(), 6);
        let min_sel = top.iter().map(|t| t.impressions).min().unwrap();
        let max_out = ts
            .iter()
            .filter(|t| !top.iter().any(|s| s.id == t.id))
            .map(|t| t.impressions)
            .max()
            .unwrap();
        assert!(min_sel >= max_out);
        assert_eq!(select_top_k(&refs[..3], KChoice::Top(6)).len(), 3);
    }

    #[test]
    fn ties_broken_by_likes_then_id() {
        let a = tweet("b", "one", 100, 5);
        let b = tweet("a", "two", 100, 9);
        let c = tweet("c", "three", 100, 9);
        let top = select_top_k(&[&a, &b, &c], KChoice::Top(1));
        assert_eq!(top[0].id, "a");
    }

    #[test]
    fn duplicate_text_removed_before_ranking() {
        let a = tweet("1", "buy now", 500, 0);
        let b = tweet("2", "buy now", 900, 0);
        let c = tweet("3", "other", 100, 0);
        let top = select_top_k(&[&a, &b, &c], KChoice::All);
        assert_eq!(top.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), vec!["2", "3"]);
    }

    #[test]
    fn k_choice_parsing() {
        assert_eq!("6".parse::<KChoice>().unwrap(), KChoice::Top(6));
        assert_eq!("all".parse::<KChoice>().unwrap(), KChoice::All);
        assert!("0".parse::<KChoice>().is_err());
        assert!(KChoice::Top(100) < KChoice::All);
    }
}
