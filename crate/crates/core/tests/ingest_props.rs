use chrono::{Days, NaiveDate};
use econ_core::ingest::{compute_labels, normalize_trend_windows, LabelConfig, TrendWindow};
use econ_core::types::{Movement, PriceBar, Ticker};
use proptest::prelude::*;

fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 4).unwrap().checked_add_days(Days::new(7 * i as u64)).unwrap()
}

fn bar(i: usize, adj: f64) -> PriceBar {
    PriceBar {
        ticker: Ticker::new("ABC"),
        date: day(i),
        open: adj,
        high: adj,
        low: adj,
        close: adj,
        adj_close: adj,
        volume: 1.0,
    }
}

proptest! {
    #[test]
    fn labels_follow_return_bands(prices in prop::collection::vec(1.0f64..1000.0, 2..40)) {
        let bars: Vec<PriceBar> = prices.iter().enumerate().map(|(i, &p)| bar(i, p)).collect();
        let labels = compute_labels(&bars, LabelConfig::default()).unwrap();
        prop_assert_eq!(labels.len(), prices.len() - 1);
        for (l, w) in labels.iter().zip(prices.windows(2)) {
            let r = w[1] / w[0] - 1.0;
            let want = if r >= 0.005 { Movement::Up } else if r <= -0.005 { Movement::Down } else { Movement::Excluded };
            prop_assert_eq!(l.movement, want);
            prop_assert_eq!(l.volatility, r.abs() >= 0.05);
        }
    }

    #[test]
    fn chained_trend_index_peaks_at_exactly_100(
        curve in prop::collection::vec(0.01f64..1e3, 3..80),
        width in 2usize..27,
    ) {
        let mut windows = Vec::new();
        let mut start = 0;
        while start + 1 < curve.len() {
            let end = (start + width).min(curve.len());
            let peak = curve[start..end].iter().copied().fold(f64::MIN, f64::max);
            windows.push(TrendWindow { samples: (start..end).map(|i| (day(i), 100.0 * curve[i] / peak)).collect() });
            if end == curve.len() {
                break;
            }
            start = end - 1;
        }
        let s = normalize_trend_windows("k", &windows).unwrap();
        prop_assert_eq!(s.samples.len(), curve.len());
        let max = s.samples.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        prop_assert_eq!(max, 100.0);
        let top = curve.iter().copied().fold(f64::MIN, f64::max);
        for (i, &(_, v)) in s.samples.iter().enumerate() {
            prop_assert!((0.0..=100.0).contains(&v));
            prop_assert!((v - 100.0 * curve[i] / top).abs() < 1e-9);
        }
    }
}
