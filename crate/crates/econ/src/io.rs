//! File formats: prices, macro series and sector maps as CSV, tweets as
//! JSON lines, raw trend windows as CSV.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveTime, Utc, Weekday};
use chrono_tz::America::New_York;
use econ_core::ingest::{normalize_trend_windows, prepare_prices, TrendWindow};
use econ_core::types::{MacroSeries, MacroSource, PriceBar, SectorMap, Ticker, Tweet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};

pub const PRICES_HEADER: [&str; 8] = ["ticker", "date", "open", "high", "low", "close", "adj_close", "volume"];
pub const MACRO_HEADER: [&str; 4] = ["keyword", "source", "date", "value"];
pub const SECTORS_HEADER: [&str; 2] = ["ticker", "sector"];
pub const TREND_WINDOWS_HEADER: [&str; 4] = ["keyword", "window", "date", "value"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| EconError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| EconError::io(dir, e))?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| EconError::io(path, e))?))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| EconError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| EconError::io(path, e))?;
    w.flush().map_err(|e| EconError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| EconError::format(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| EconError::parse(path, e.line() as u64, e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| EconError::format(path, e))?;
        w.write_all(b"\n").map_err(|e| EconError::io(path, e))?;
    }
    w.flush().map_err(|e| EconError::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EconError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| EconError::parse(path, i as u64 + 1, e))?);
    }
    Ok(out)
}

/// Reads a CSV whose header must equal `header`, yielding each record with
/// its line number.
fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let found = rdr.headers().map_err(|e| EconError::parse(path, 1, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(EconError::parse(
            path,
            1,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            EconError::parse(path, line, e)
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize(Some(&found)).map_err(|e| EconError::parse(path, line, e))?;
        out.push((line, row));
    }
    Ok(out)
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(header).map_err(|e| EconError::format(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| EconError::format(path, e))?;
    }
    w.flush().map_err(|e| EconError::io(path, e))
}

/// Prices sorted by `(ticker, date)`. Rows violating a bar invariant are
/// reported with their line; duplicate `(ticker, date)` keys are rejected.
pub fn load_prices(path: &Path) -> Result<Vec<PriceBar>> {
    let rows: Vec<(u64, PriceBar)> = read_csv(path, &PRICES_HEADER)?;
    for (line, bar) in &rows {
        bar.validate().map_err(|e| EconError::parse(path, *line, e))?;
    }
    Ok(prepare_prices(rows.into_iter().map(|(_, b)| b).collect())?)
}

pub fn write_prices(path: &Path, bars: &[PriceBar]) -> Result<()> {
    write_csv(path, &PRICES_HEADER, bars)
}

/// Whether an instant falls in regular New York trading hours
/// (weekdays, 9:30 to 16:00 local time).
pub fn in_trading_hours(ts: DateTime<Utc>) -> bool {
    let local = ts.with_timezone(&New_York);
    if matches!(local.weekday(), Weekday::Sat | Weekday::Sun) {
        return false;
    }
    let t = local.time();
    let open = NaiveTime::from_hms_opt(9, 30, 0).expect("valid time");
    let close = NaiveTime::from_hms_opt(16, 0, 0).expect("valid time");
    t >= open && t <= close
}

/// Tweets from JSON lines; with `trading_hours` set, tweets outside New York
/// trading hours are dropped.
pub fn load_tweets(path: &Path, trading_hours: bool) -> Result<Vec<Tweet>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EconError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i as u64 + 1;
        let tweet: Tweet = serde_json::from_str(&line).map_err(|e| EconError::parse(path, lineno, e))?;
        tweet.validate().map_err(|e| EconError::parse(path, lineno, e))?;
        if !trading_hours || in_trading_hours(tweet.timestamp) {
            out.push(tweet);
        }
    }
    Ok(out)
}

pub fn write_tweets(path: &Path, tweets: &[Tweet]) -> Result<()> {
    write_jsonl(path, tweets)
}

#[derive(Serialize, Deserialize)]
struct MacroRow {
    keyword: String,
    source: String,
    date: NaiveDate,
    value: f64,
}

/// Macro series grouped by `(keyword, source)`, samples sorted by date.
pub fn load_macro(path: &Path) -> Result<Vec<MacroSeries>> {
    let rows: Vec<(u64, MacroRow)> = read_csv(path, &MACRO_HEADER)?;
    let mut grouped: BTreeMap<(String, MacroSource), Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for (line, r) in rows {
        let source = MacroSource::parse(&r.source).map_err(|e| EconError::parse(path, line, e))?;
        grouped.entry((r.keyword, source)).or_default().push((r.date, r.value));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for ((keyword, source), mut samples) in grouped {
        samples.sort_by_key(|s| s.0);
        let series = MacroSeries { keyword, source, samples };
        series.validate().map_err(|e| EconError::format(path, e))?;
        out.push(series);
    }
    Ok(out)
}

pub fn write_macro(path: &Path, series: &[MacroSeries]) -> Result<()> {
    let rows = series.iter().flat_map(|s| {
        s.samples.iter().map(move |&(date, value)| MacroRow {
            keyword: s.keyword.clone(),
            source: s.source.as_str().to_string(),
            date,
            value,
        })
    });
    write_csv(path, &MACRO_HEADER, rows)
}

#[derive(Serialize, Deserialize)]
struct SectorRow {
    ticker: String,
    sector: String,
}

pub fn load_sectors(path: &Path) -> Result<SectorMap> {
    let rows: Vec<(u64, SectorRow)> = read_csv(path, &SECTORS_HEADER)?;
    let pairs: Vec<(Ticker, String)> = rows.into_iter().map(|(_, r)| (Ticker::new(&r.ticker), r.sector)).collect();
    SectorMap::from_pairs(&pairs).map_err(|e| EconError::format(path, e))
}

pub fn write_sectors(path: &Path, map: &SectorMap) -> Result<()> {
    let rows = map.iter().map(|(t, s)| SectorRow {
        ticker: t.to_string(),
        sector: map.name(s).to_string(),
    });
    write_csv(path, &SECTORS_HEADER, rows)
}

#[derive(Serialize, Deserialize)]
struct TrendRow {
    keyword: String,
    window: usize,
    date: NaiveDate,
    value: f64,
}

/// Raw per-window search interest, chained into one trend-index series per
/// keyword.
pub fn load_trend_windows(path: &Path) -> Result<Vec<MacroSeries>> {
    let rows: Vec<(u64, TrendRow)> = read_csv(path, &TREND_WINDOWS_HEADER)?;
    let mut grouped: BTreeMap<String, BTreeMap<usize, Vec<(NaiveDate, f64)>>> = BTreeMap::new();
    for (_, r) in rows {
        grouped.entry(r.keyword).or_default().entry(r.window).or_default().push((r.date, r.value));
    }
    let mut out = Vec::with_capacity(grouped.len());
    for (keyword, windows) in grouped {
        let windows: Vec<TrendWindow> = windows
            .into_values()
            .map(|mut samples| {
                samples.sort_by_key(|s| s.0);
                TrendWindow { samples }
            })
            .collect();
        out.push(normalize_trend_windows(&keyword, &windows).map_err(|e| EconError::format(path, e))?);
    }
    Ok(out)
}

pub fn write_trend_windows(path: &Path, windows: &[(String, Vec<TrendWindow>)]) -> Result<()> {
    let rows = windows.iter().flat_map(|(keyword, ws)| {
        ws.iter().enumerate().flat_map(move |(window, w)| {
            w.samples.iter().map(move |&(date, value)| TrendRow {
                keyword: keyword.clone(),
                window,
                date,
                value,
            })
        })
    });
    write_csv(path, &TREND_WINDOWS_HEADER, rows)
}
