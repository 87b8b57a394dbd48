//! Central finite-difference gradient checking over `ParamGroups`.
#![allow(dead_code)]

use econ_core::tensor::ParamGroups;

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Worst relative error per named group.
pub fn check<P, F>(params: &P, analytic: &P, loss: F) -> Vec<(&'static str, f64)>
where
    P: ParamGroups,
    F: Fn(&P) -> f64,
{
    let grads = analytic.groups();
    let mut report = Vec::new();
    for (gi, (name, values)) in params.groups().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for j in 0..values.len() {
            let eval = |delta: f64| {
                let mut p = params.clone();
                p.groups_mut()[gi].1[j] += delta;
                loss(&p)
            };
            let numeric = (eval(STEP) - eval(-STEP)) / (2.0 * STEP);
            let a = grads[gi].1[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        report.push((name, worst));
    }
    report
}

pub fn assert_all_within(report: &[(&'static str, f64)]) {
    for (name, err) in report {
        assert!(*err <= TOL, "group {name}: relative error {err:e}");
    }
}
