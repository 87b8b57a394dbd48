mod common;

use common::gradcheck;
use econ_core::selfaware::{
    embed_tweet, sector_probs, selfaware_loss, selfaware_loss_grad, SelfAwareParams,
};
use econ_core::tensor::{Matrix, ParamGroups};
use econ_core::text::TokenSequence;
use proptest::prelude::*;

fn seq(ids: &[u32], mask: usize, pad_to: usize, label: usize) -> TokenSequence {
    let mut padded = ids.to_vec();
    padded.resize(pad_to, 0);
    TokenSequence {
        ids: padded,
        mask_position: Some(mask),
        original_length: ids.len(),
        sector_label: Some(label),
    }
}

fn scaled_params(seed: u64) -> SelfAwareParams {
    let mut p = SelfAwareParams::init(7, 4, 3, seed);
    for (_, g) in p.groups_mut() {
        for (i, v) in g.iter_mut().enumerate() {
            *v = *v * 3.0 + 0.05 * ((i % 5) as f64 - 2.0);
        }
    }
    p
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let batch = vec![seq(&[3, 1, 4, 5, 2], 1, 8, 2), seq(&[6, 5, 1], 2, 8, 0)];
    let p = scaled_params(3);
    let (loss, grad) = selfaware_loss_grad(&batch, &p).unwrap();
    assert!((loss - selfaware_loss(&batch, &p).unwrap()).abs() < 1e-12);
    let report = gradcheck::check(&p, &grad, |q| selfaware_loss(&batch, q).unwrap());
    assert_eq!(report.len(), 8);
    gradcheck::assert_all_within(&report);
}

#[test]
fn two_tweet_loss_matches_hand_evaluation() {
    let p = scaled_params(9);
    let batch = vec![seq(&[3, 1], 1, 2, 1), seq(&[1, 6], 0, 2, 2)];
    let mut want = 0.0;
    for s in &batch {
        let probs = sector_probs(&embed_tweet(s, &p).unwrap(), &p.sectors);
        want -= probs[s.sector_label.unwrap()].ln();
    }
    assert!((selfaware_loss(&batch, &p).unwrap() - want).abs() < 1e-12);
}

#[test]
fn swapping_sector_rows_with_relabelling_keeps_loss() {
    let p = scaled_params(4);
    let batch = vec![seq(&[3, 1, 4], 1, 4, 0), seq(&[1, 6], 0, 4, 2), seq(&[5, 1], 1, 4, 1)];
    let base = selfaware_loss(&batch, &p).unwrap();
    let mut swapped = p.clone();
    let rows: Vec<Vec<f64>> = [2, 1, 0].iter().map(|&r| p.sectors.row(r).to_vec()).collect();
    swapped.sectors = Matrix::from_rows(&rows);
    let relabelled: Vec<TokenSequence> = batch
        .iter()
        .map(|s| TokenSequence {
            sector_label: s.sector_label.map(|c| 2 - c),
            ..s.clone()
        })
        .collect();
    assert!((selfaware_loss(&relabelled, &swapped).unwrap() - base).abs() < 1e-12);
}

proptest! {
    #[test]
    fn sector_probs_normalized_and_shift_invariant(
        h in prop::collection::vec(-5.0f64..5.0, 4),
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..6),
        shift in -50.0f64..50.0,
    ) {
        let c = Matrix::from_rows(&rows);
        let p = sector_probs(&h, &c);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let logits = c.matvec(&h);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let q = econ_core::math::softmax(&shifted);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
