//! Planted-signal synthetic markets.
//!
//! Each stock has a daily trading-flow shock that sets its volume. A stock's
//! standardized return on day `t` is driven by the previous day's flow of its
//! sector peers and by a macro factor published as the first keyword's econ
//! series:
//!
//! ```text
//! drive  = (w_peer * peer_flow[t-1] + w_macro * macro[t-1]) / norm
//! u[t]   = s * drive + sqrt(1 - s^2) * noise
//! return = daily_vol * u[t]
//! ```
//!
//! with `s = signal_strength`. High-impression ("informed") tweets on day
//! `t` carry the sign of that day's move with probability `s`; low-impression
//! tweets and promotional spam carry no signal.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, Duration, NaiveDate, NaiveTime, Weekday};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{normalize_trend_windows, TrendWindow};
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::rng::stage_rng;
use crate::types::{MacroSeries, MacroSource, PriceBar, SectorMap, Sentiment, Ticker, Tweet};

/// Sector names and their keywords. The first keyword of each sector is
/// unique to it (as are the others).
pub const SECTOR_KEYWORDS: [(&str, [&str; 3]); 10] = [
    ("Information Technology", ["chips", "software", "cloud"]),
    ("Health Care", ["pharma", "vaccine", "biotech"]),
    ("Financials", ["banking", "loans", "deposits"]),
    ("Energy", ["oil", "pipeline", "crude"]),
    ("Consumer Discretionary", ["retail", "automaker", "apparel"]),
    ("Consumer Staples", ["grocery", "beverage", "household"]),
    ("Industrials", ["aerospace", "railroad", "machinery"]),
    ("Utilities", ["electricity", "grid", "utility"]),
    ("Materials", ["mining", "chemicals", "steel"]),
    ("Communication Services", ["streaming", "telecom", "advertising"]),
];

const POSITIVE: [&str; 8] = ["soar", "rally", "bullish", "surge", "beat", "strong", "upgrade", "gains"];
const NEGATIVE: [&str; 8] = ["crash", "plunge", "bearish", "slump", "miss", "weak", "downgrade", "losses"];
const FILLER: [&str; 16] = [
    "today", "watching", "shares", "market", "earnings", "news", "traders", "the", "is", "on",
    "about", "to", "this", "week", "chart", "volume",
];
const SPAM: [&str; 3] = [
    "join our discord for free {} signals",
    "{} alerts daily , link in bio",
    "best {} entries here , dm us",
];
const MACRO_KEYWORDS: [&str; 6] = [
    "interest rate",
    "inflation",
    "unemployment",
    "consumer spending",
    "housing",
    "oil price",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_stocks: usize,
    pub m_sectors: usize,
    pub n_days: usize,
    pub signal_strength: f64,
    /// Mean informed tweets per stock-day.
    pub informed_rate: f64,
    /// Mean noise tweets per stock-day.
    pub noise_rate: f64,
    /// Probability that a noise tweet is a copy of a promotional template.
    pub spam_share: f64,
    /// Weight of sector peers' previous-day flow in a stock's return.
    pub peer_weight: f64,
    /// Weight of the previous day's macro factor in a stock's return.
    pub macro_weight: f64,
    pub n_macro_keywords: usize,
    pub daily_vol: f64,
    pub start: NaiveDate,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_stocks: 20,
            m_sectors: 10,
            n_days: 500,
            signal_strength: 0.97,
            informed_rate: 6.0,
            noise_rate: 6.0,
            spam_share: 0.2,
            peer_weight: 1.0,
            macro_weight: 0.7,
            n_macro_keywords: 3,
            daily_vol: 0.02,
            start: NaiveDate::from_ymd_opt(2020, 6, 1).expect("valid date"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("synth config: {what}")));
        if self.m_sectors == 0 || self.m_sectors > SECTOR_KEYWORDS.len() {
            return bad("m_sectors must be in 1..=10");
        }
        if self.n_stocks < self.m_sectors {
            return bad("need at least one stock per sector");
        }
        if self.n_stocks > 26 * 26 {
            return bad("at most 676 stocks");
        }
        if self.n_days < 30 {
            return bad("n_days must be at least 30");
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad("signal_strength must be in [0, 1]");
        }
        if !(self.informed_rate >= 0.0 && self.noise_rate >= 0.0) {
            return bad("tweet rates must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.spam_share) {
            return bad("spam_share must be in [0, 1]");
        }
        if !(self.macro_weight >= 0.0) || !(self.peer_weight >= 0.0) || !(self.daily_vol > 0.0 && self.daily_vol < 0.2) {
            return bad("peer_weight and macro_weight must be >= 0 and daily_vol in (0, 0.2)");
        }
        if self.n_macro_keywords == 0 || self.n_macro_keywords > MACRO_KEYWORDS.len() {
            return bad("n_macro_keywords must be in 1..=6");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub prices: Vec<PriceBar>,
    pub tweets: Vec<Tweet>,
    /// Econ series plus trend indices already chained from `trend_windows`.
    pub macro_series: Vec<MacroSeries>,
    /// Raw overlapping trend windows per keyword.
    pub trend_windows: Vec<(String, Vec<TrendWindow>)>,
    pub sector_map: SectorMap,
}

fn ticker_name(i: usize) -> String {
    let a = (b'A' + (i / 26) as u8) as char;
    let b = (b'A' + (i % 26) as u8) as char;
    format!("X{a}{b}")
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

pub fn synth_generate(cfg: &SynthConfig, seed: u64) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = stage_rng(seed, "synth");
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let tickers: Vec<Ticker> = (0..cfg.n_stocks).map(|i| Ticker::new(&ticker_name(i))).collect();
    let sector_of: Vec<usize> = (0..cfg.n_stocks).map(|i| i % cfg.m_sectors).collect();
    let peers_of: Vec<Vec<usize>> = (0..cfg.n_stocks)
        .map(|i| (0..cfg.n_stocks).filter(|&j| j != i && sector_of[j] == sector_of[i]).collect())
        .collect();
    let names: Vec<String> = SECTOR_KEYWORDS[..cfg.m_sectors]
        .iter()
        .map(|(n, _)| n.to_string())
        .collect();
    let pairs: Vec<(Ticker, usize)> = tickers.iter().cloned().zip(sector_of.iter().copied()).collect();
    let sector_map = SectorMap::from_indices(&pairs, names)?;
    let dates = business_days(cfg.start, cfg.n_days);

    // Macro factor for each day; it drives the next day's returns.
    let macro_factor: Vec<f64> = (0..cfg.n_days).map(|_| std_normal.sample(&mut rng)).collect();

    // Trading-flow shocks: they set each day's volume and, through sector
    // peers, the next day's return.
    let flow: Vec<Vec<f64>> = (0..cfg.n_days)
        .map(|_| (0..cfg.n_stocks).map(|_| std_normal.sample(&mut rng)).collect())
        .collect();

    let s = cfg.signal_strength;
    let noise_scale = sqrt((1.0 - s * s).max(0.0));
    let mut u = vec![vec![0.0; cfg.n_stocks]; cfg.n_days];
    for v in u[0].iter_mut() {
        *v = std_normal.sample(&mut rng);
    }
    for t in 1..cfg.n_days {
        for i in 0..cfg.n_stocks {
            let peers: Vec<f64> = peers_of[i].iter().map(|&j| flow[t - 1][j]).collect();
            let (peer, wp) = if peers.is_empty() {
                (0.0, 0.0)
            } else {
                let m = peers.iter().sum::<f64>() / peers.len() as f64;
                (m * sqrt(peers.len() as f64), cfg.peer_weight)
            };
            let wm = cfg.macro_weight;
            let norm = sqrt(wp * wp + wm * wm);
            let drive = if norm > 0.0 {
                (wp * peer + wm * macro_factor[t - 1]) / norm
            } else {
                0.0
            };
            u[t][i] = s * drive + noise_scale * std_normal.sample(&mut rng);
        }
    }

    let mut prices = Vec::with_capacity(cfg.n_days * cfg.n_stocks);
    for (i, ticker) in tickers.iter().enumerate() {
        let mut adj = rng.random_range(20.0..300.0);
        let mut prev_close = adj;
        for (t, date) in dates.iter().enumerate() {
            if t > 0 {
                let r = (cfg.daily_vol * u[t][i]).max(-0.9);
                adj *= 1.0 + r;
            }
            let close = adj;
            let gap = 0.3 * cfg.daily_vol * std_normal.sample(&mut rng);
            let open = if t == 0 { close } else { prev_close * (1.0 + gap) };
            let wick = |rng: &mut _| {
                let z: f64 = std_normal.sample(rng);
                0.3 * cfg.daily_vol * z.abs()
            };
            let high = open.max(close) * (1.0 + wick(&mut rng));
            let low = open.min(close) * (1.0 - wick(&mut rng)).max(0.5);
            let volume = libm::round(1e6 * crate::math::exp(0.3 * flow[t][i]));
            prices.push(PriceBar {
                ticker: ticker.clone(),
                date: *date,
                open,
                high,
                low,
                close,
                adj_close: adj,
                volume,
            });
            prev_close = close;
        }
    }

    let mut tweets = Vec::new();
    let informed = Poisson::new(cfg.informed_rate.max(1e-9)).expect("rate > 0");
    let noise = Poisson::new(cfg.noise_rate.max(1e-9)).expect("rate > 0");
    let mut next_id = 0usize;
    for (t, date) in dates.iter().enumerate() {
        for i in 0..cfg.n_stocks {
            let direction = if u[t][i] >= 0.0 {
                Sentiment::Positive
            } else {
                Sentiment::Negative
            };
            let n_inf = if cfg.informed_rate > 0.0 { informed.sample(&mut rng) as usize } else { 0 };
            let n_noise = if cfg.noise_rate > 0.0 { noise.sample(&mut rng) as usize } else { 0 };
            for k in 0..n_inf + n_noise {
                let is_informed = k < n_inf;
                let sentiment = if is_informed && rng.random_bool(s) {
                    direction
                } else {
                    *Sentiment::ALL.choose(&mut rng).expect("nonempty")
                };
                let spam = !is_informed && rng.random_bool(cfg.spam_share);
                // Co-mentions name a sector peer, so the sector keyword fits both stocks.
                let co_mention = if is_informed && !peers_of[i].is_empty() && rng.random_bool(0.1) {
                    peers_of[i].choose(&mut rng).copied()
                } else {
                    None
                };
                let text = if spam {
                    let template = SPAM.choose(&mut rng).expect("nonempty");
                    template.replace("{}", &tickers[i].cashtag())
                } else {
                    tweet_text(&mut rng, &tickers[i], sector_of[i], sentiment, co_mention.map(|j| &tickers[j]))
                };
                let impressions = if is_informed {
                    libm::pow(10.0, rng.random_range(3.3..5.0))
                } else {
                    libm::pow(10.0, rng.random_range(1.0..3.0))
                } as u64;
                let likes = (impressions as f64 * rng.random_range(0.001..0.05)) as u64;
                let retweets = likes / 4;
                let minute = rng.random_range(0..300u32);
                let time = NaiveTime::from_hms_opt(14 + (45 + minute) / 60, (45 + minute) % 60, 0)
                    .expect("valid time");
                let mut mentioned = vec![tickers[i].clone()];
                if let Some(j) = co_mention {
                    mentioned.push(tickers[j].clone());
                }
                tweets.push(Tweet {
                    id: format!("t{next_id:08}"),
                    tickers: mentioned,
                    text,
                    timestamp: date.and_time(time).and_utc(),
                    likes,
                    retweets,
                    impressions,
                    sentiment: None,
                });
                next_id += 1;
            }
        }
    }

    let mut macro_series = Vec::new();
    let mut trend_windows = Vec::new();
    for (k, keyword) in MACRO_KEYWORDS[..cfg.n_macro_keywords].iter().enumerate() {
        let values: Vec<f64> = if k == 0 {
            macro_factor.iter().map(|m| 2.0 + 0.25 * m).collect()
        } else {
            let mut level = 0.0;
            (0..cfg.n_days)
                .map(|_| {
                    level = 0.8 * level + 0.6 * std_normal.sample(&mut rng);
                    5.0 + level
                })
                .collect()
        };
        macro_series.push(MacroSeries {
            keyword: keyword.to_string(),
            source: MacroSource::EconSeries,
            samples: dates.iter().copied().zip(values).collect(),
        });

        let windows = synth_trend_windows(&mut rng, &dates);
        macro_series.push(normalize_trend_windows(keyword, &windows)?);
        trend_windows.push((keyword.to_string(), windows));
    }

    Ok(SynthDataset {
        prices,
        tweets,
        macro_series,
        trend_windows,
        sector_map,
    })
}

fn tweet_text<R: Rng>(
    rng: &mut R,
    ticker: &Ticker,
    sector: usize,
    sentiment: Sentiment,
    co_mention: Option<&Ticker>,
) -> String {
    let mut words: Vec<String> = Vec::new();
    let n_fill = rng.random_range(2..6);
    for _ in 0..n_fill {
        words.push(FILLER.choose(rng).expect("nonempty").to_string());
    }
    words.push(SECTOR_KEYWORDS[sector].1.choose(rng).expect("nonempty").to_string());
    match sentiment {
        Sentiment::Positive => words.push(POSITIVE.choose(rng).expect("nonempty").to_string()),
        Sentiment::Negative => words.push(NEGATIVE.choose(rng).expect("nonempty").to_string()),
        Sentiment::Neutral => {}
    }
    if let Some(other) = co_mention {
        words.push(other.cashtag());
    }
    let pos = rng.random_range(0..=words.len());
    words.insert(pos, ticker.cashtag());
    let mut text = words.join(" ");
    if rng.random_bool(0.3) {
        text.push_str(" !");
    }
    text
}

/// Weekly interest curve cut into 26-week windows overlapping by one week,
/// each scaled to its own peak of 100.
fn synth_trend_windows<R: Rng>(rng: &mut R, dates: &[NaiveDate]) -> Vec<TrendWindow> {
    let weekly: Vec<NaiveDate> = dates.iter().copied().filter(|d| d.weekday() == Weekday::Mon).collect();
    let normal = Normal::new(0.0, 0.1).expect("valid");
    let mut level: f64 = 0.0;
    let curve: Vec<f64> = weekly
        .iter()
        .map(|_| {
            level = 0.9 * level + normal.sample(rng);
            crate::math::exp(level)
        })
        .collect();
    let mut windows = Vec::new();
    let mut start = 0;
    while start + 1 < weekly.len() {
        let end = (start + 26).min(weekly.len());
        let peak = curve[start..end].iter().copied().fold(f64::MIN, f64::max);
        windows.push(TrendWindow {
            samples: (start..end).map(|i| (weekly[i], 100.0 * curve[i] / peak)).collect(),
        });
        if end == weekly.len() {
            break;
        }
        start = end - 1;
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_stocks: 4,
            m_sectors: 2,
            n_days: 60,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        let a = synth_generate(&small(), 11).unwrap();
        let b = synth_generate(&small(), 11).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&small(), 12).unwrap();
        assert_ne!(a.prices, c.prices);
    }

    #[test]
    fn bars_are_valid_and_cover_calendar() {
        let d = synth_generate(&small(), 3).unwrap();
        assert_eq!(d.prices.len(), 4 * 60);
        for b in &d.prices {
            b.validate().unwrap();
        }
        for s in &d.macro_series {
            s.validate().unwrap();
        }
        assert!(d.tweets.iter().all(|t| !t.tickers.is_empty()));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small();
        c.signal_strength = 1.5;
        assert!(synth_generate(&c, 0).is_err());
        let mut c = small();
        c.n_stocks = 1;
        assert!(synth_generate(&c, 0).is_err());
    }
}
