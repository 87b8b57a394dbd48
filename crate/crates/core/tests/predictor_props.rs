mod common;

use common::gradcheck;
use econ_core::predictor::{
    agrud_forward, temporal_weights, window_loss_grad, Ablation, AgrudDims, AgrudParams, SampleLabels, StepInput,
};
use econ_core::tensor::ParamGroups;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Fixture {
    x: Vec<Vec<Vec<f64>>>,
    a: Vec<Vec<f64>>,
    w: Vec<Vec<Vec<f64>>>,
    sector_of: Vec<usize>,
    labels: Vec<SampleLabels>,
}

fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = |n: usize| (0..n).map(|_| rng.random_range(-1.5..1.5)).collect::<Vec<f64>>();
    let d = 3;
    Fixture {
        x: (0..d).map(|_| (0..2).map(|_| r(2)).collect()).collect(),
        a: (0..d).map(|_| r(3)).collect(),
        w: (0..d).map(|_| (0..2).map(|_| r(4)).collect()).collect(),
        sector_of: vec![0, 1],
        labels: vec![
            SampleLabels { movement: Some(1), volatility: true },
            SampleLabels { movement: Some(0), volatility: false },
        ],
    }
}

fn steps(f: &Fixture, stock: usize) -> Vec<StepInput<'_>> {
    (0..f.x.len())
        .map(|j| StepInput {
            x: &f.x[j][stock],
            macro_trend: &f.a[j],
            sector_query: &f.w[j][f.sector_of[stock]],
            day_features: &f.x[j],
        })
        .collect()
}

fn dims() -> AgrudDims {
    AgrudDims { stocks: 2, query: 4, features: 2, macro_width: 3, fused: 3, hidden: 4 }
}

fn params(seed: u64) -> AgrudParams {
    let mut p = AgrudParams::init(dims(), seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for (_, g) in p.groups_mut() {
        for v in g.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    p
}

fn total_loss(p: &AgrudParams, f: &Fixture, lambda: f64, ab: Ablation) -> (f64, AgrudParams) {
    let mut g = p.zeros_like();
    let mut loss = 0.0;
    for s in 0..2 {
        let (parts, _) = window_loss_grad(p, &steps(f, s), f.labels[s], lambda, ab, &mut g).unwrap();
        loss += parts.movement + lambda * parts.volatility;
    }
    (loss, g)
}

#[test]
fn joint_loss_gradient_matches_finite_differences() {
    let f = fixture(7);
    for seed in [1, 2] {
        let p = params(seed);
        for ab in Ablation::ALL {
            let (_, g) = total_loss(&p, &f, 0.8, ab);
            let report = gradcheck::check(&p, &g, |q| total_loss(q, &f, 0.8, ab).0);
            assert_eq!(report.len(), 12);
            gradcheck::assert_all_within(&report);
        }
    }
}

#[test]
fn excluded_days_do_not_touch_movement_head() {
    let f = fixture(3);
    let p = params(4);
    let mut g = p.zeros_like();
    let labels = SampleLabels { movement: None, volatility: false };
    let (parts, _) = window_loss_grad(&p, &steps(&f, 0), labels, 1.0, Ablation::Full, &mut g).unwrap();
    assert_eq!(parts.movement, 0.0);
    assert!(g.move_w.data.iter().chain(&g.move_b).all(|&v| v == 0.0));
}

proptest! {
    #[test]
    fn attention_is_a_distribution_in_the_hull(
        seed in any::<u64>(),
        d in 1usize..10,
        shift in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = AgrudParams::init(AgrudDims { hidden: 5, ..dims() }, seed);
        let xs: Vec<Vec<f64>> = (0..d).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let out = agrud_forward(&xs, &p).unwrap();
        prop_assert!((out.attention.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(out.attention.iter().all(|&a| a >= 0.0));
        let w = temporal_weights(d);
        prop_assert_eq!(&out.temporal_weights, &w);
        for j in 1..d {
            prop_assert!(w[j] > w[j - 1]);
        }
        // softmax shift invariance of the attention logits
        let logits: Vec<f64> = out.attention.iter().map(|a| a.ln()).collect();
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        for (a, b) in econ_core::math::softmax(&shifted).iter().zip(&out.attention) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        let h_att = &out.h_out1[5..];
        for (k, v) in h_att.iter().enumerate() {
            let lo = out.scaled_states.iter().map(|h| h[k]).fold(f64::INFINITY, f64::min);
            let hi = out.scaled_states.iter().map(|h| h[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }
}
