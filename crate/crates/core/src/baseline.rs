//! Reference baselines: the majority movement class, and logistic regression
//! on the stock's own flattened feature window.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};
use crate::optim::Adam;
use crate::panel::Panel;
use crate::tensor::ParamGroups;

/// Majority class over the non-excluded movement labels of the samples.
/// Ties favour up.
pub fn majority_class(panel: &Panel, samples: &[(usize, usize)]) -> Result<bool> {
    let (mut up, mut down) = (0usize, 0usize);
    for &(s, t) in samples {
        match panel.movement[t][s].class() {
            Some(1) => up += 1,
            Some(_) => down += 1,
            None => {}
        }
    }
    if up + down == 0 {
        return Err(Error::Empty("no labelled movement days"));
    }
    Ok(up >= down)
}

/// Share of non-excluded samples whose movement equals `up`.
pub fn constant_accuracy(panel: &Panel, samples: &[(usize, usize)], up: bool) -> Result<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for &(s, t) in samples {
        if let Some(c) = panel.movement[t][s].class() {
            n += 1;
            hit += usize::from((c == 1) == up);
        }
    }
    if n == 0 {
        return Err(Error::Empty("no labelled movement days"));
    }
    Ok(hit as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ParamGroups for Logistic {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![("w", &self.w), ("b", &self.b)]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![("w", &mut self.w), ("b", &mut self.b)]
    }
}

fn flat_window(panel: &Panel, s: usize, t: usize, d: usize) -> Vec<f64> {
    (t - d..t).flat_map(|j| panel.features[j][s].iter().copied()).collect()
}

impl Logistic {
    /// Full-batch Adam on mean cross-entropy.
    pub fn fit(panel: &Panel, samples: &[(usize, usize)], window: usize, epochs: usize, lr: f64) -> Result<Self> {
        let data: Vec<(Vec<f64>, f64)> = samples
            .iter()
            .filter(|&&(_, t)| t >= window)
            .filter_map(|&(s, t)| {
                panel.movement[t][s]
                    .class()
                    .map(|c| (flat_window(panel, s, t, window), c as f64))
            })
            .collect();
        if data.is_empty() {
            return Err(Error::Empty("no labelled training windows"));
        }
        let mut model = Logistic {
            w: vec![0.0; window * panel.feature_dim()],
            b: vec![0.0],
        };
        let mut adam = Adam::new(&model, lr);
        let n = data.len() as f64;
        for _ in 0..epochs {
            let mut g = model.zeros_like();
            for (x, y) in &data {
                let e = (sigmoid(dot(&model.w, x) + model.b[0]) - y) / n;
                crate::math::axpy(e, x, &mut g.w);
                g.b[0] += e;
            }
            adam.step(&mut model, &g);
        }
        Ok(model)
    }

    pub fn prob_up(&self, panel: &Panel, s: usize, t: usize, window: usize) -> f64 {
        sigmoid(dot(&self.w, &flat_window(panel, s, t, window)) + self.b[0])
    }
}
