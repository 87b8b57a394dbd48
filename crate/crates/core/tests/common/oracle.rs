//! Exact-arithmetic reference implementations used to check the f64 code.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

fn q(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn prune(table: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let cols = table[0].len();
    let keep_col: Vec<bool> = (0..cols).map(|j| table.iter().any(|r| r[j] > 0)).collect();
    table
        .iter()
        .filter(|r| r.iter().any(|&v| v > 0))
        .map(|r| r.iter().zip(&keep_col).filter(|(_, k)| **k).map(|(v, _)| *v).collect())
        .collect()
}

/// Exact chi-square; `None` when the pruned table has < 2 rows or columns.
pub fn chi_square(table: &[Vec<u64>]) -> Option<BigRational> {
    let t = prune(table);
    if t.len() < 2 || t[0].len() < 2 {
        return None;
    }
    let n: u64 = t.iter().flatten().sum();
    let mut chi = BigRational::zero();
    for i in 0..t.len() {
        for j in 0..t[0].len() {
            let row: u64 = t[i].iter().sum();
            let col: u64 = t.iter().map(|r| r[j]).sum();
            let e = q(row) * q(col) / q(n);
            let d = q(t[i][j]) - &e;
            chi += &d * &d / e;
        }
    }
    Some(chi)
}

/// Exact V squared.
pub fn cramers_v_sq(table: &[Vec<u64>]) -> Option<BigRational> {
    let chi = chi_square(table)?;
    let t = prune(table);
    let n: u64 = t.iter().flatten().sum();
    let k = t.len().min(t[0].len()) as u64 - 1;
    Some(chi / (q(n) * q(k)))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap()
}

/// MCC from its exact square and sign; 0 when a marginal is empty.
pub fn mcc(tp: u64, fp: u64, tn: u64, fn_: u64) -> f64 {
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if factors.contains(&0) {
        return 0.0;
    }
    let num = BigInt::from(tp) * BigInt::from(tn) - BigInt::from(fp) * BigInt::from(fn_);
    let den: BigInt = factors.iter().map(|&f| BigInt::from(f)).product();
    let sq = BigRational::new(&num * &num, den);
    let mag = to_f64(&sq).sqrt();
    if num.is_negative() {
        -mag
    } else {
        mag
    }
}

/// AUC by enumerating every positive/negative pair.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            twice += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    (pairs > 0).then(|| to_f64(&BigRational::new(BigInt::from(twice), BigInt::from(2 * pairs))))
}
