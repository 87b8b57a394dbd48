use std::fs;

use chrono::{NaiveDate, TimeZone, Utc};
use econ::checkpoint::{load_agrud, load_selfaware, save_agrud, save_selfaware};
use econ::io::{
    in_trading_hours, load_macro, load_prices, load_sectors, load_trend_windows, load_tweets, write_macro, write_prices,
    write_sectors, write_trend_windows, write_tweets,
};
use econ::EconError;
use econ_core::experiment::TrainedModel;
use econ_core::ingest::{synth_generate, SynthConfig, TrendWindow};
use econ_core::predictor::{Ablation, AgrudDims, AgrudParams};
use econ_core::selfaware::SelfAwareParams;
use econ_core::types::{MacroSource, Tweet};

const HEADER: &str = "ticker,date,open,high,low,close,adj_close,volume\n";

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

#[test]
fn price_row_maps_fields() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prices.csv");
    fs::write(&p, format!("{HEADER}AAPL,2021-03-01,120,125,119,124,123.5,1000000\n")).unwrap();
    let bars = load_prices(&p).unwrap();
    assert_eq!(bars.len(), 1);
    assert_eq!(bars[0].ticker.as_str(), "AAPL");
    assert_eq!(bars[0].date, d(2021, 3, 1));
    assert_eq!(bars[0].adj_close, 123.5);
    assert_eq!(bars[0].volume, 1e6);
}

#[test]
fn invalid_bar_names_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prices.csv");
    fs::write(&p, format!("{HEADER}AAPL,2021-03-01,120,125,119,124,123.5,10\nAAPL,2021-03-02,120,118,121,119,119,10\n")).unwrap();
    match load_prices(&p) {
        Err(EconError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn duplicate_rows_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prices.csv");
    let row = "AAPL,2021-03-01,120,125,119,124,123.5,10\n";
    fs::write(&p, format!("{HEADER}{row}{row}")).unwrap();
    assert!(matches!(load_prices(&p), Err(EconError::Core(econ_core::Error::Duplicate { .. }))));
}

#[test]
fn wrong_header_is_a_parse_error_on_line_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("prices.csv");
    fs::write(&p, "ticker,date,close\nAAPL,2021-03-01,1\n").unwrap();
    assert!(matches!(load_prices(&p), Err(EconError::Parse { line: 1, .. })));
}

#[test]
fn missing_file_is_an_input_error() {
    let e = load_prices(std::path::Path::new("/nonexistent/prices.csv")).unwrap_err();
    assert_eq!(e.exit_code(), econ::error::exit::INPUT);
}

fn tweet(id: &str, ts: chrono::DateTime<Utc>) -> Tweet {
    Tweet {
        id: id.into(),
        tickers: vec!["AAPL".into()],
        text: "$AAPL up".into(),
        timestamp: ts,
        likes: 1,
        retweets: 0,
        impressions: 10,
        sentiment: None,
    }
}

#[test]
fn trading_hours_follow_new_york_time() {
    // 2021-07-06 is a Tuesday in daylight time (UTC-4); 2021-01-05 in standard time (UTC-5).
    assert!(in_trading_hours(Utc.with_ymd_and_hms(2021, 7, 6, 13, 30, 0).unwrap()));
    assert!(!in_trading_hours(Utc.with_ymd_and_hms(2021, 7, 6, 13, 29, 0).unwrap()));
    assert!(in_trading_hours(Utc.with_ymd_and_hms(2021, 7, 6, 20, 0, 0).unwrap()));
    assert!(!in_trading_hours(Utc.with_ymd_and_hms(2021, 7, 6, 20, 1, 0).unwrap()));
    assert!(!in_trading_hours(Utc.with_ymd_and_hms(2021, 1, 5, 14, 0, 0).unwrap()));
    assert!(in_trading_hours(Utc.with_ymd_and_hms(2021, 1, 5, 14, 30, 0).unwrap()));
    assert!(!in_trading_hours(Utc.with_ymd_and_hms(2021, 7, 10, 15, 0, 0).unwrap()));
}

#[test]
fn tweets_round_trip_and_filter_by_hours() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tweets.jsonl");
    let mut tweets = vec![
        tweet("a", Utc.with_ymd_and_hms(2021, 7, 6, 15, 0, 0).unwrap()),
        tweet("b", Utc.with_ymd_and_hms(2021, 7, 6, 3, 0, 0).unwrap()),
    ];
    tweets[1].sentiment = Some(econ_core::types::Sentiment::Negative);
    write_tweets(&p, &tweets).unwrap();
    assert_eq!(load_tweets(&p, false).unwrap(), tweets);
    let kept = load_tweets(&p, true).unwrap();
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].id, "a");
}

#[test]
fn tweet_without_cashtag_is_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tweets.jsonl");
    let mut t = tweet("a", Utc.with_ymd_and_hms(2021, 7, 6, 15, 0, 0).unwrap());
    write_tweets(&p, &[t.clone()]).unwrap();
    t.tickers.clear();
    let mut text = fs::read_to_string(&p).unwrap();
    text.push_str(&serde_json::to_string(&t).unwrap());
    fs::write(&p, text).unwrap();
    assert!(matches!(load_tweets(&p, false), Err(EconError::Parse { line: 2, .. })));
}

#[test]
fn synthetic_dataset_round_trips_through_files() {
    let cfg = SynthConfig { n_stocks: 4, m_sectors: 2, n_days: 60, ..SynthConfig::default() };
    let ds = synth_generate(&cfg, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n);
    write_prices(&path("p.csv"), &ds.prices).unwrap();
    write_sectors(&path("s.csv"), &ds.sector_map).unwrap();
    write_macro(&path("m.csv"), &ds.macro_series).unwrap();
    write_trend_windows(&path("t.csv"), &ds.trend_windows).unwrap();
    assert_eq!(load_prices(&path("p.csv")).unwrap(), ds.prices);
    let sectors = load_sectors(&path("s.csv")).unwrap();
    let named = |m: &econ_core::types::SectorMap| m.iter().map(|(t, s)| (t.clone(), m.name(s).to_string())).collect::<Vec<_>>();
    assert_eq!(named(&sectors), named(&ds.sector_map));
    let mut want = ds.macro_series.clone();
    want.sort_by(|a, b| (&a.keyword, a.source).cmp(&(&b.keyword, b.source)));
    assert_eq!(load_macro(&path("m.csv")).unwrap(), want);
    let chained = load_trend_windows(&path("t.csv")).unwrap();
    for s in &chained {
        let orig = ds.macro_series.iter().find(|m| m.keyword == s.keyword && m.source == MacroSource::TrendIndex).unwrap();
        assert_eq!(s, orig);
    }
}

#[test]
fn trend_windows_chain_through_anchor() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    let a = TrendWindow { samples: vec![(d(2021, 1, 4), 50.0), (d(2021, 1, 11), 100.0)] };
    let b = TrendWindow { samples: vec![(d(2021, 1, 11), 50.0), (d(2021, 1, 18), 100.0)] };
    write_trend_windows(&p, &[("rates".to_string(), vec![a, b])]).unwrap();
    let s = load_trend_windows(&p).unwrap().remove(0);
    assert_eq!(s.source, MacroSource::TrendIndex);
    assert_eq!(s.samples, vec![(d(2021, 1, 4), 25.0), (d(2021, 1, 11), 50.0), (d(2021, 1, 18), 100.0)]);
}

#[test]
fn checkpoints_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let sp = SelfAwareParams::init(11, 3, 4, 9);
    save_selfaware(&dir.path().join("s.json"), &sp).unwrap();
    assert_eq!(load_selfaware(&dir.path().join("s.json")).unwrap(), sp);

    let dims = AgrudDims { stocks: 3, query: 6, features: 7, macro_width: 4, fused: 5, hidden: 4 };
    let model = TrainedModel {
        ablation: Ablation::I,
        window: 6,
        params: AgrudParams::init(dims, 3),
        best_epoch: 2,
        log: Vec::new(),
    };
    save_agrud(&dir.path().join("a.json"), &model).unwrap();
    assert_eq!(load_agrud(&dir.path().join("a.json")).unwrap(), model);
}

#[test]
fn checkpoint_with_inconsistent_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.json");
    save_selfaware(&p, &SelfAwareParams::init(11, 3, 4, 9)).unwrap();
    assert!(matches!(load_agrud(&p), Err(EconError::Format { .. })));
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    v["dims"]["vocab"] = serde_json::json!(12);
    fs::write(&p, v.to_string()).unwrap();
    assert!(matches!(load_selfaware(&p), Err(EconError::Format { .. })));
}
