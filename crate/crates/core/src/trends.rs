//! Macro and micro trends: attention over sector features queried by the
//! day's tweets, and attention over stock features queried through a
//! projection of sector-relevant tweets.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{axpy, dot, softmax};
use crate::tensor::Matrix;
use crate::types::{SectorMap, Ticker};

/// Mean of the day's tweet embeddings. An empty day gives the zero vector
/// and `false`.
pub fn daily_mean_embedding(embeddings: &[Vec<f64>], width: usize) -> (Vec<f64>, bool) {
    let mut r = vec![0.0; width];
    if embeddings.is_empty() {
        return (r, false);
    }
    for e in embeddings {
        axpy(1.0, e, &mut r);
    }
    let n = embeddings.len() as f64;
    r.iter_mut().for_each(|v| *v /= n);
    (r, true)
}

/// Convex combination of `values` weighted by `softmax(logits)`.
pub fn attend(logits: &[f64], values: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let alpha = softmax(logits);
    let width = values.first().map_or(0, Vec::len);
    let mut out = vec![0.0; width];
    for (a, v) in alpha.iter().zip(values) {
        axpy(*a, v, &mut out);
    }
    (out, alpha)
}

/// `alpha_c = softmax_c(r_t . h_c)`, `a_t = sum_c alpha_c x_ct`.
pub fn macro_trend(r_t: &[f64], sectors: &Matrix, sector_features: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if sector_features.len() != sectors.rows {
        return Err(Error::dim("macro_trend sectors", sectors.rows, sector_features.len()));
    }
    if r_t.len() != sectors.cols {
        return Err(Error::dim("macro_trend query", sectors.cols, r_t.len()));
    }
    Ok(attend(&sectors.matvec(r_t), sector_features))
}

/// `alpha_e = softmax_e(h_c . h_e)`, `w_ct = sum_e alpha_e h_e`. No tweets
/// gives the zero vector and `false`.
pub fn micro_tweet_agg(h_c: &[f64], embeddings: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, bool) {
    if embeddings.is_empty() {
        return (vec![0.0; h_c.len()], Vec::new(), false);
    }
    let logits: Vec<f64> = embeddings.iter().map(|e| dot(h_c, e)).collect();
    let (w, alpha) = attend(&logits, embeddings);
    (w, alpha, true)
}

/// `g = W1 w_ct + b1`.
pub fn project_companies(w_ct: &[f64], w1: &Matrix, b1: &[f64]) -> Result<Vec<f64>> {
    if w1.cols != w_ct.len() {
        return Err(Error::dim("W1 columns", w1.cols, w_ct.len()));
    }
    if b1.len() != w1.rows {
        return Err(Error::dim("b1", w1.rows, b1.len()));
    }
    let mut g = b1.to_vec();
    w1.matvec_add(w_ct, &mut g);
    Ok(g)
}

/// `alpha_s = softmax_s(g[s])`, `micro = sum_s alpha_s x_st`.
pub fn micro_trend(g: &[f64], stock_features: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    if g.len() != stock_features.len() {
        return Err(Error::dim("micro_trend stocks", g.len(), stock_features.len()));
    }
    Ok(attend(g, stock_features))
}

/// The micro trend of the sector that `ticker` belongs to.
pub fn stock_micro_lookup<'a>(ticker: &Ticker, sectors: &SectorMap, per_sector: &'a [Vec<f64>]) -> Result<&'a [f64]> {
    let c = sectors.sector_of(ticker)?;
    per_sector
        .get(c)
        .map(Vec::as_slice)
        .ok_or_else(|| Error::dim("per-sector micro trends", sectors.num_sectors(), per_sector.len()))
}

/// `x_ct`: the shared macro vector joined with the mean feature vector of the
/// sector's stocks (zeros for a sector with no stocks).
pub fn sector_day_features(macro_vec: &[f64], stock_features: &[Vec<f64>], sector_of: &[usize], m: usize) -> Vec<Vec<f64>> {
    let p = stock_features.first().map_or(0, Vec::len);
    let mut sums = vec![vec![0.0; p]; m];
    let mut counts = vec![0usize; m];
    for (x, &c) in stock_features.iter().zip(sector_of) {
        axpy(1.0, x, &mut sums[c]);
        counts[c] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, n)| {
            let mut v = macro_vec.to_vec();
            let scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };
            v.extend(s.iter().map(|x| x * scale));
            v
        })
        .collect()
}

/// Every intermediate of one day's trends, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendBundle {
    pub r_t: Vec<f64>,
    pub has_tweets: bool,
    pub a_t: Vec<f64>,
    pub alpha_macro: Vec<f64>,
    /// Per sector.
    pub w_ct: Vec<Vec<f64>>,
    /// Per sector.
    pub g: Vec<Vec<f64>>,
    /// Per sector, width p.
    pub micro: Vec<Vec<f64>>,
    /// Per sector, over stocks.
    pub alpha_micro: Vec<Vec<f64>>,
}

/// Inputs for one day.
pub struct DayInputs<'a> {
    /// Embeddings of the day's tweets, all stocks.
    pub tweet_embeddings: &'a [Vec<f64>],
    /// Embeddings of the day's tweets mentioning each sector's stocks.
    pub sector_tweets: &'a [Vec<Vec<f64>>],
    pub macro_vec: &'a [f64],
    pub stock_features: &'a [Vec<f64>],
    pub sector_of: &'a [usize],
}

pub fn day_trends(day: &DayInputs<'_>, sectors: &Matrix, w1: &Matrix, b1: &[f64]) -> Result<TrendBundle> {
    let m = sectors.rows;
    if day.sector_tweets.len() != m {
        return Err(Error::dim("sector tweet groups", m, day.sector_tweets.len()));
    }
    let (r_t, has_tweets) = daily_mean_embedding(day.tweet_embeddings, sectors.cols);
    let x_ct = sector_day_features(day.macro_vec, day.stock_features, day.sector_of, m);
    let (a_t, alpha_macro) = macro_trend(&r_t, sectors, &x_ct)?;
    let mut bundle = TrendBundle {
        r_t,
        has_tweets,
        a_t,
        alpha_macro,
        w_ct: Vec::with_capacity(m),
        g: Vec::with_capacity(m),
        micro: Vec::with_capacity(m),
        alpha_micro: Vec::with_capacity(m),
    };
    for c in 0..m {
        let (w, _, _) = micro_tweet_agg(sectors.row(c), &day.sector_tweets[c]);
        let g = project_companies(&w, w1, b1)?;
        let (micro, alpha) = micro_trend(&g, day.stock_features)?;
        bundle.w_ct.push(w);
        bundle.g.push(g);
        bundle.micro.push(micro);
        bundle.alpha_micro.push(alpha);
    }
    Ok(bundle)
}
