//! Fusion of stock, macro and micro inputs followed by a GRU whose states are
//! scaled by inverse distance to the prediction day and attention-pooled,
//! with a movement head (2-way softmax) and a volatility head (sigmoid).

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{axpy, dot, log_sum_exp, sigmoid, softmax, softmax_backward, softplus, sqrt, tanh};
use crate::metrics::{evaluate, MetricsReport, Task};
use crate::optim::Adam;
use crate::panel::Panel;
use crate::rng::stage_rng;
use crate::tensor::{Matrix, ParamGroups};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ablation {
    Full,
    /// Without the micro trend.
    A,
    /// Without the macro trend.
    I,
    /// Without either.
    None,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::A, Ablation::I, Ablation::None];

    pub fn uses_micro(self) -> bool {
        matches!(self, Ablation::Full | Ablation::I)
    }

    pub fn uses_macro(self) -> bool {
        matches!(self, Ablation::Full | Ablation::A)
    }

    /// Position in the reporting order full, A, I, none.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::A => "A",
            Ablation::I => "I",
            Ablation::None => "none",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "A" | "a" => Ok(Ablation::A),
            "I" | "i" => Ok(Ablation::I),
            "none" => Ok(Ablation::None),
            _ => Err(Error::Validation(format!("unknown ablation {s:?} (full|A|I|none)"))),
        }
    }
}

impl Serialize for Ablation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Ablation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgrudDims {
    /// Stocks (rows of `W1`).
    pub stocks: usize,
    /// Width 2k of the tweet aggregates.
    pub query: usize,
    /// Stock feature width p.
    pub features: usize,
    /// Macro trend width q.
    pub macro_width: usize,
    pub fused: usize,
    pub hidden: usize,
}

impl AgrudDims {
    pub fn fusion_input(&self) -> usize {
        2 * self.features + self.macro_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgrudParams {
    pub dims: AgrudDims,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    /// Gate rows stacked as update, reset, candidate.
    pub gru_w: Matrix,
    pub gru_u: Matrix,
    pub gru_b: Vec<f64>,
    /// Attention query `u`.
    pub query: Vec<f64>,
    pub move_w: Matrix,
    pub move_b: Vec<f64>,
    pub vol_w: Vec<f64>,
    pub vol_b: Vec<f64>,
}

impl ParamGroups for AgrudParams {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("w1", &self.w1.data),
            ("b1", &self.b1),
            ("w2", &self.w2.data),
            ("b2", &self.b2),
            ("gru_w", &self.gru_w.data),
            ("gru_u", &self.gru_u.data),
            ("gru_b", &self.gru_b),
            ("query", &self.query),
            ("move_w", &self.move_w.data),
            ("move_b", &self.move_b),
            ("vol_w", &self.vol_w),
            ("vol_b", &self.vol_b),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("w1", &mut self.w1.data),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2.data),
            ("b2", &mut self.b2),
            ("gru_w", &mut self.gru_w.data),
            ("gru_u", &mut self.gru_u.data),
            ("gru_b", &mut self.gru_b),
            ("query", &mut self.query),
            ("move_w", &mut self.move_w.data),
            ("move_b", &mut self.move_b),
            ("vol_w", &mut self.vol_w),
            ("vol_b", &mut self.vol_b),
        ]
    }
}

impl AgrudParams {
    pub fn zeros(dims: AgrudDims) -> Self {
        let h = dims.hidden;
        AgrudParams {
            dims,
            w1: Matrix::zeros(dims.stocks, dims.query),
            b1: vec![0.0; dims.stocks],
            w2: Matrix::zeros(dims.fused, dims.fusion_input()),
            b2: vec![0.0; dims.fused],
            gru_w: Matrix::zeros(3 * h, dims.fused),
            gru_u: Matrix::zeros(3 * h, h),
            gru_b: vec![0.0; 3 * h],
            query: vec![0.0; h],
            move_w: Matrix::zeros(2, 4 * h),
            move_b: vec![0.0; 2],
            vol_w: vec![0.0; 4 * h],
            vol_b: vec![0.0],
        }
    }

    /// Uniform init: scale `1/sqrt(fan_in)` for dense layers, 0.1 for `W1`
    /// and the attention query; biases zero.
    pub fn init(dims: AgrudDims, seed: u64) -> Self {
        let mut rng = stage_rng(seed, "predictor-init");
        let mut p = AgrudParams::zeros(dims);
        let h = dims.hidden;
        let fan = |n: usize| 1.0 / sqrt(n.max(1) as f64);
        p.w1 = Matrix::uniform(dims.stocks, dims.query, 0.1, &mut rng);
        p.w2 = Matrix::uniform(dims.fused, dims.fusion_input(), fan(dims.fusion_input()), &mut rng);
        p.gru_w = Matrix::uniform(3 * h, dims.fused, fan(dims.fused), &mut rng);
        p.gru_u = Matrix::uniform(3 * h, h, fan(h), &mut rng);
        p.query = Matrix::uniform(1, h, 0.1, &mut rng).data;
        p.move_w = Matrix::uniform(2, 4 * h, fan(4 * h), &mut rng);
        p.vol_w = Matrix::uniform(1, 4 * h, fan(4 * h), &mut rng).data;
        p
    }

    fn check(&self) -> Result<()> {
        let d = &self.dims;
        let h = d.hidden;
        let shapes = [
            ("w1", self.w1.rows * self.w1.cols, d.stocks * d.query),
            ("w2", self.w2.rows * self.w2.cols, d.fused * d.fusion_input()),
            ("gru_w", self.gru_w.data.len(), 3 * h * d.fused),
            ("gru_u", self.gru_u.data.len(), 3 * h * h),
            ("move_w", self.move_w.data.len(), 8 * h),
            ("vol_w", self.vol_w.len(), 4 * h),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::dim(name, want, got));
            }
        }
        Ok(())
    }
}

/// `W2 (x ⊕ a ⊕ micro) + b2`.
pub fn fuse(x: &[f64], a: &[f64], micro: &[f64], w2: &Matrix, b2: &[f64]) -> Result<Vec<f64>> {
    let width = x.len() + a.len() + micro.len();
    if w2.cols != width {
        return Err(Error::dim("fusion input", w2.cols, width));
    }
    if b2.len() != w2.rows {
        return Err(Error::dim("fusion bias", w2.rows, b2.len()));
    }
    let mut input = Vec::with_capacity(width);
    input.extend_from_slice(x);
    input.extend_from_slice(a);
    input.extend_from_slice(micro);
    let mut out = b2.to_vec();
    w2.matvec_add(&input, &mut out);
    Ok(out)
}

/// `1/Δd` for window positions oldest to newest: `1/d, …, 1/2, 1`.
pub fn temporal_weights(d: usize) -> Vec<f64> {
    (1..=d).map(|j| 1.0 / (d - j + 1) as f64).collect()
}

struct GruStep {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    rh: Vec<f64>,
}

fn gru_step(p: &AgrudParams, x: &[f64], h: &[f64]) -> (Vec<f64>, GruStep) {
    let hd = p.dims.hidden;
    let mut ax = p.gru_b.clone();
    p.gru_w.matvec_add(x, &mut ax);
    let u = &p.gru_u;
    let mut z = vec![0.0; hd];
    let mut r = vec![0.0; hd];
    for j in 0..hd {
        z[j] = sigmoid(ax[j] + dot(u.row(j), h));
        r[j] = sigmoid(ax[hd + j] + dot(u.row(hd + j), h));
    }
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let n: Vec<f64> = (0..hd).map(|j| tanh(ax[2 * hd + j] + dot(u.row(2 * hd + j), &rh))).collect();
    let h_new: Vec<f64> = (0..hd).map(|j| (1.0 - z[j]) * h[j] + z[j] * n[j]).collect();
    (
        h_new,
        GruStep {
            h_prev: h.to_vec(),
            z,
            r,
            n,
            rh,
        },
    )
}

/// Returns (dx, dh_prev) and accumulates weight gradients.
fn gru_step_backward(p: &AgrudParams, s: &GruStep, x: &[f64], dh: &[f64], g: &mut AgrudParams) -> (Vec<f64>, Vec<f64>) {
    let hd = p.dims.hidden;
    let mut da = vec![0.0; 3 * hd];
    let mut dh_prev = vec![0.0; hd];
    for j in 0..hd {
        let dz = dh[j] * (s.n[j] - s.h_prev[j]);
        let dn = dh[j] * s.z[j];
        dh_prev[j] = dh[j] * (1.0 - s.z[j]);
        da[j] = dz * s.z[j] * (1.0 - s.z[j]);
        da[2 * hd + j] = dn * (1.0 - s.n[j] * s.n[j]);
    }
    // candidate gate reads r ⊙ h through the third block of U
    let mut drh = vec![0.0; hd];
    for j in 0..hd {
        let dan = da[2 * hd + j];
        axpy(dan, p.gru_u.row(2 * hd + j), &mut drh);
        axpy(dan, &s.rh, g.gru_u.row_mut(2 * hd + j));
    }
    for j in 0..hd {
        dh_prev[j] += drh[j] * s.r[j];
        da[hd + j] = drh[j] * s.h_prev[j] * s.r[j] * (1.0 - s.r[j]);
    }
    for j in 0..2 * hd {
        axpy(da[j], p.gru_u.row(j), &mut dh_prev);
        axpy(da[j], &s.h_prev, g.gru_u.row_mut(j));
    }
    g.gru_w.add_outer(&da, x);
    axpy(1.0, &da, &mut g.gru_b);
    let mut dx = vec![0.0; x.len()];
    p.gru_w.matvec_t_add(&da, &mut dx);
    (dx, dh_prev)
}

/// Result of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgrudOutput {
    /// `h'_d ⊕ h_att`
    pub h_out1: Vec<f64>,
    /// `h_out1 ⊕ h_att ⊕ h'_d`
    pub h_out2: Vec<f64>,
    pub temporal_weights: Vec<f64>,
    /// `h'_j`, oldest first.
    pub scaled_states: Vec<Vec<f64>>,
    pub attention: Vec<f64>,
    pub movement_logits: [f64; 2],
    pub volatility_logit: f64,
}

impl AgrudOutput {
    /// Probability of an up move.
    pub fn movement_prob(&self) -> f64 {
        softmax(&self.movement_logits)[1]
    }

    pub fn volatility_prob(&self) -> f64 {
        sigmoid(self.volatility_logit)
    }
}

struct AgrudTrace {
    steps: Vec<GruStep>,
    out: AgrudOutput,
}

fn agrud_traced(fused: &[Vec<f64>], p: &AgrudParams) -> Result<AgrudTrace> {
    let d = fused.len();
    if d == 0 {
        return Err(Error::Contract("empty window".into()));
    }
    if let Some(x) = fused.iter().find(|x| x.len() != p.dims.fused) {
        return Err(Error::dim("fused input", p.dims.fused, x.len()));
    }
    let hd = p.dims.hidden;
    let weights = temporal_weights(d);
    let mut h = vec![0.0; hd];
    let mut steps = Vec::with_capacity(d);
    let mut scaled = Vec::with_capacity(d);
    for (x, &w) in fused.iter().zip(&weights) {
        let (hn, s) = gru_step(p, x, &h);
        scaled.push(hn.iter().map(|v| v * w).collect::<Vec<f64>>());
        h = hn;
        steps.push(s);
    }
    let scores: Vec<f64> = scaled.iter().map(|hp| dot(&p.query, hp)).collect();
    let attention = softmax(&scores);
    let mut h_att = vec![0.0; hd];
    for (a, hp) in attention.iter().zip(&scaled) {
        axpy(*a, hp, &mut h_att);
    }
    let last = &scaled[d - 1];
    let mut h_out1 = last.clone();
    h_out1.extend_from_slice(&h_att);
    let mut h_out2 = h_out1.clone();
    h_out2.extend_from_slice(&h_att);
    h_out2.extend_from_slice(last);
    let mut ml = p.move_b.clone();
    p.move_w.matvec_add(&h_out2, &mut ml);
    let volatility_logit = p.vol_b[0] + dot(&p.vol_w, &h_out2);
    Ok(AgrudTrace {
        steps,
        out: AgrudOutput {
            h_out1,
            h_out2,
            temporal_weights: weights,
            scaled_states: scaled,
            attention,
            movement_logits: [ml[0], ml[1]],
            volatility_logit,
        },
    })
}

/// GRU over fused inputs (oldest first), temporal scaling, attention and
/// both heads.
pub fn agrud_forward(fused: &[Vec<f64>], params: &AgrudParams) -> Result<AgrudOutput> {
    agrud_traced(fused, params).map(|t| t.out)
}

/// `-sum log p(observed class)`; `None` labels (excluded days) are skipped.
pub fn movement_loss(logits: &[[f64; 2]], labels: &[Option<usize>]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .filter_map(|(l, y)| y.map(|c| log_sum_exp(l) - l[c]))
        .sum()
}

/// Binary cross-entropy on logits, `softplus(y) - label * y`.
pub fn volatility_loss(logits: &[f64], labels: &[bool]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&y, &l)| softplus(y) - if l { y } else { 0.0 })
        .sum()
}

/// One day of a window: the stock's features, the day's macro trend, the
/// tweet aggregate of the stock's sector and every stock's features.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub x: &'a [f64],
    pub macro_trend: &'a [f64],
    pub sector_query: &'a [f64],
    pub day_features: &'a [Vec<f64>],
}

struct FuseTrace {
    input: Vec<f64>,
    micro_alpha: Vec<f64>,
}

fn micro_for(p: &AgrudParams, step: &StepInput<'_>) -> (Vec<f64>, Vec<f64>) {
    let mut g = p.b1.clone();
    p.w1.matvec_add(step.sector_query, &mut g);
    crate::trends::attend(&g, step.day_features)
}

fn fuse_window(p: &AgrudParams, steps: &[StepInput<'_>], ablation: Ablation) -> Result<(Vec<Vec<f64>>, Vec<FuseTrace>)> {
    let dims = &p.dims;
    let mut fused = Vec::with_capacity(steps.len());
    let mut traces = Vec::with_capacity(steps.len());
    for s in steps {
        if s.x.len() != dims.features || s.macro_trend.len() != dims.macro_width {
            return Err(Error::dim("window step", dims.features + dims.macro_width, s.x.len() + s.macro_trend.len()));
        }
        let mut input = Vec::with_capacity(dims.fusion_input());
        input.extend_from_slice(s.x);
        if ablation.uses_macro() {
            input.extend_from_slice(s.macro_trend);
        } else {
            input.resize(dims.features + dims.macro_width, 0.0);
        }
        let micro_alpha = if ablation.uses_micro() {
            if s.sector_query.len() != dims.query || s.day_features.len() != dims.stocks {
                return Err(Error::dim("micro inputs", dims.query + dims.stocks, s.sector_query.len() + s.day_features.len()));
            }
            let (micro, alpha) = micro_for(p, s);
            input.extend_from_slice(&micro);
            alpha
        } else {
            input.resize(dims.fusion_input(), 0.0);
            Vec::new()
        };
        let mut f = p.b2.clone();
        p.w2.matvec_add(&input, &mut f);
        fused.push(f);
        traces.push(FuseTrace { input, micro_alpha });
    }
    Ok((fused, traces))
}

/// Forward pass over a raw window.
pub fn forward_window(p: &AgrudParams, steps: &[StepInput<'_>], ablation: Ablation) -> Result<AgrudOutput> {
    p.check()?;
    let (fused, _) = fuse_window(p, steps, ablation)?;
    agrud_forward(&fused, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleLabels {
    /// Up = 1, Down = 0; `None` for excluded days.
    pub movement: Option<usize>,
    pub volatility: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub movement: f64,
    pub volatility: f64,
}

/// Joint loss `movement + lambda * volatility` for one window, accumulating
/// its gradient into `grad`.
pub fn window_loss_grad(
    p: &AgrudParams,
    steps: &[StepInput<'_>],
    labels: SampleLabels,
    lambda: f64,
    ablation: Ablation,
    grad: &mut AgrudParams,
) -> Result<(LossParts, AgrudOutput)> {
    let hd = p.dims.hidden;
    let (fused, ftr) = fuse_window(p, steps, ablation)?;
    let tr = agrud_traced(&fused, p)?;
    let out = &tr.out;
    let mut parts = LossParts::default();
    let mut dlogits = [0.0; 2];
    if let Some(c) = labels.movement {
        parts.movement = log_sum_exp(&out.movement_logits) - out.movement_logits[c];
        let pr = softmax(&out.movement_logits);
        dlogits = [pr[0], pr[1]];
        dlogits[c] -= 1.0;
    }
    let yv = if labels.volatility { 1.0 } else { 0.0 };
    parts.volatility = softplus(out.volatility_logit) - yv * out.volatility_logit;
    let dv = lambda * (sigmoid(out.volatility_logit) - yv);

    grad.move_w.add_outer(&dlogits, &out.h_out2);
    axpy(1.0, &dlogits, &mut grad.move_b);
    axpy(dv, &out.h_out2, &mut grad.vol_w);
    grad.vol_b[0] += dv;
    let mut dout = vec![0.0; 4 * hd];
    p.move_w.matvec_t_add(&dlogits, &mut dout);
    axpy(dv, &p.vol_w, &mut dout);

    let d = fused.len();
    let mut d_att = vec![0.0; hd];
    let mut d_scaled = vec![vec![0.0; hd]; d];
    for j in 0..hd {
        d_scaled[d - 1][j] = dout[j] + dout[3 * hd + j];
        d_att[j] = dout[hd + j] + dout[2 * hd + j];
    }
    let dalpha: Vec<f64> = out.scaled_states.iter().map(|hp| dot(&d_att, hp)).collect();
    let dscore = softmax_backward(&out.attention, &dalpha);
    for j in 0..d {
        axpy(out.attention[j], &d_att, &mut d_scaled[j]);
        axpy(dscore[j], &p.query, &mut d_scaled[j]);
        axpy(dscore[j], &out.scaled_states[j], &mut grad.query);
    }

    let mut dh = vec![0.0; hd];
    for j in (0..d).rev() {
        axpy(out.temporal_weights[j], &d_scaled[j], &mut dh);
        let (dx, dh_prev) = gru_step_backward(p, &tr.steps[j], &fused[j], &dh, grad);
        dh = dh_prev;
        // fusion layer
        grad.w2.add_outer(&dx, &ftr[j].input);
        axpy(1.0, &dx, &mut grad.b2);
        if ablation.uses_micro() {
            let pw = p.dims.features;
            let off = pw + p.dims.macro_width;
            let mut dmicro = vec![0.0; pw];
            for (r, &dxr) in dx.iter().enumerate() {
                axpy(dxr, &p.w2.row(r)[off..off + pw], &mut dmicro);
            }
            let s = &steps[j];
            let da: Vec<f64> = s.day_features.iter().map(|x| dot(&dmicro, x)).collect();
            let dg = softmax_backward(&ftr[j].micro_alpha, &da);
            grad.w1.add_outer(&dg, s.sector_query);
            axpy(1.0, &dg, &mut grad.b1);
        }
    }
    Ok((parts, tr.out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub fused_dim: usize,
    pub window: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lambda: f64,
    pub ablation: Ablation,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            hidden: 64,
            fused_dim: 64,
            window: 5,
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            lambda: 1.0,
            ablation: Ablation::Full,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(5..=15).contains(&self.window) {
            return Err(Error::Validation(format!("window d must be in [5, 15], got {}", self.window)));
        }
        if self.hidden == 0 || self.fused_dim == 0 || self.batch_size == 0 {
            return Err(Error::Validation("hidden, fused_dim and batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::Validation("lr and lambda must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn dims(&self, panel: &Panel) -> AgrudDims {
        AgrudDims {
            stocks: panel.num_stocks(),
            query: panel.query_dim(),
            features: panel.feature_dim(),
            macro_width: panel.macro_dim(),
            fused: self.fused_dim,
            hidden: self.hidden,
        }
    }
}

/// The window of `(stock, day)`: days `day - d .. day - 1`.
pub fn window_steps(panel: &Panel, stock: usize, day: usize, d: usize) -> Vec<StepInput<'_>> {
    let c = panel.sector_of[stock];
    (day - d..day)
        .map(|j| StepInput {
            x: &panel.features[j][stock],
            macro_trend: &panel.macro_trend[j],
            sector_query: &panel.sector_queries[j][c],
            day_features: &panel.features[j],
        })
        .collect()
}

pub fn sample_labels(panel: &Panel, stock: usize, day: usize) -> SampleLabels {
    SampleLabels {
        movement: panel.movement[day][stock].class(),
        volatility: panel.volatility[day][stock],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub stock: usize,
    pub day: usize,
    pub movement_prob: f64,
    pub volatility_prob: f64,
    pub movement_logits: [f64; 2],
    pub volatility_logit: f64,
}

/// Pure inference for the given `(stock, day)` samples.
pub fn predict(p: &AgrudParams, panel: &Panel, samples: &[(usize, usize)], window: usize, ablation: Ablation) -> Result<Vec<PredictionOutput>> {
    p.check()?;
    if p.dims.stocks != panel.num_stocks() || p.dims.features != panel.feature_dim() || p.dims.macro_width != panel.macro_dim() {
        return Err(Error::Contract("checkpoint dimensions do not match the panel".into()));
    }
    samples
        .iter()
        .map(|&(s, t)| {
            if t < window {
                return Err(Error::Contract(format!("day {t} has fewer than {window} days of history")));
            }
            let out = forward_window(p, &window_steps(panel, s, t, window), ablation)?;
            Ok(PredictionOutput {
                stock: s,
                day: t,
                movement_prob: out.movement_prob(),
                volatility_prob: out.volatility_prob(),
                movement_logits: out.movement_logits,
                volatility_logit: out.volatility_logit,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub movement: Option<MetricsReport>,
    pub volatility: Option<MetricsReport>,
}

/// Movement metrics over non-excluded days, volatility metrics over all.
pub fn score(panel: &Panel, preds: &[PredictionOutput]) -> SplitMetrics {
    let mut mp = Vec::new();
    let mut ml = Vec::new();
    let mut vp = Vec::with_capacity(preds.len());
    let mut vl = Vec::with_capacity(preds.len());
    for pr in preds {
        if let Some(c) = panel.movement[pr.day][pr.stock].class() {
            mp.push(pr.movement_prob);
            ml.push(c == 1);
        }
        vp.push(pr.volatility_prob);
        vl.push(panel.volatility[pr.day][pr.stock]);
    }
    SplitMetrics {
        movement: evaluate(&mp, &ml, Task::Movement).ok(),
        volatility: evaluate(&vp, &vl, Task::Volatility).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub movement_loss: f64,
    pub volatility_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_mcc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: AgrudParams,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

fn movement_acc_mcc(m: &SplitMetrics) -> (f64, f64) {
    m.movement.as_ref().map_or((0.0, 0.0), |r| (r.accuracy, r.mcc))
}

/// Adam on the joint loss, shuffled minibatches, early stopping on
/// validation movement MCC. `train_accuracy` is measured on the training
/// windows after each epoch.
pub fn train(panel: &Panel, cfg: &PredictorConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let d = cfg.window;
    let train_samples = panel.samples(panel.split.train.clone(), d);
    let val_samples = panel.samples(panel.split.val.clone(), d);
    if train_samples.is_empty() {
        return Err(Error::Empty("no training windows"));
    }
    let mut params = AgrudParams::init(cfg.dims(panel), seed);
    let mut adam = Adam::new(&params, cfg.lr);
    let mut rng = stage_rng(seed, "predictor-shuffle");
    let mut order = train_samples.clone();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, AgrudParams)> = None;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut totals = LossParts::default();
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = params.zeros_like();
            for &(s, t) in batch {
                let steps = window_steps(panel, s, t, d);
                let (parts, _) = window_loss_grad(&params, &steps, sample_labels(panel, s, t), cfg.lambda, cfg.ablation, &mut grad)?;
                totals.movement += parts.movement;
                totals.volatility += parts.volatility;
            }
            if !grad.all_finite() || !(totals.movement + totals.volatility).is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "loss movement={} volatility={}; first non-finite gradient group: {:?}",
                        totals.movement,
                        totals.volatility,
                        grad.first_non_finite()
                    ),
                });
            }
            adam.step(&mut params, &grad);
        }
        let (train_accuracy, _) = movement_acc_mcc(&score(panel, &predict(&params, panel, &train_samples, d, cfg.ablation)?));
        let (val_accuracy, val_mcc) = if val_samples.is_empty() {
            (train_accuracy, 0.0)
        } else {
            movement_acc_mcc(&score(panel, &predict(&params, panel, &val_samples, d, cfg.ablation)?))
        };
        let n = train_samples.len() as f64;
        log.push(EpochLog {
            epoch,
            loss: (totals.movement + cfg.lambda * totals.volatility) / n,
            movement_loss: totals.movement / n,
            volatility_loss: totals.volatility / n,
            train_accuracy,
            val_accuracy,
            val_mcc,
        });
        let improved = best.as_ref().is_none_or(|(m, _, _)| val_mcc > *m);
        if improved {
            best = Some((val_mcc, epoch, params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.1) >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.unwrap_or((0.0, 0, params));
    Ok(TrainOutcome { params, best_epoch, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(h: usize) -> AgrudDims {
        AgrudDims {
            stocks: 2,
            query: 2,
            features: 1,
            macro_width: 1,
            fused: 2,
            hidden: h,
        }
    }

    #[test]
    fn temporal_weights_exact() {
        assert_eq!(temporal_weights(3), vec![1.0 / 3.0, 0.5, 1.0]);
        assert_eq!(temporal_weights(5), vec![0.2, 0.25, 1.0 / 3.0, 0.5, 1.0]);
    }

    #[test]
    fn fuse_cases() {
        let x = [1.0, 2.0];
        let id = Matrix::identity(4);
        assert_eq!(fuse(&x, &[3.0], &[4.0], &id, &[0.0; 4]).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let w = Matrix::from_rows(&[vec![1.0, -1.0, 2.0], vec![0.5, 0.0, 1.0]]);
        assert_eq!(fuse(&[0.0], &[0.0], &[0.0], &w, &[0.3, -0.3]).unwrap(), vec![0.3, -0.3]);
        assert_eq!(fuse(&[2.0], &[1.0], &[3.0], &w, &[0.0, 1.0]).unwrap(), vec![7.0, 5.0]);
        assert!(fuse(&[2.0], &[1.0], &[], &w, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_query_gives_uniform_attention() {
        let mut p = AgrudParams::init(dims(3), 1);
        p.query = vec![0.0; 3];
        let out = agrud_forward(&vec![vec![0.4, -0.2]; 4], &p).unwrap();
        assert!(out.attention.iter().all(|a| (a - 0.25).abs() < 1e-15));
        let h_att = &out.h_out1[3..];
        for j in 0..3 {
            let m = out.scaled_states.iter().map(|h| h[j]).sum::<f64>() / 4.0;
            assert!((h_att[j] - m).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_stepped_scalar_gru() {
        let mut p = AgrudParams::zeros(AgrudDims { fused: 1, ..dims(1) });
        p.gru_w.data = vec![0.5, -0.3, 0.8];
        p.gru_u.data = vec![0.2, 0.4, -0.6];
        p.gru_b = vec![0.1, 0.0, -0.2];
        p.query = vec![0.7];
        p.move_w.data = vec![0.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.25];
        p.vol_w = vec![1.0, 2.0, 3.0, 4.0];
        let xs = [1.5, -0.5];
        let mut h = 0.0;
        let mut hs = Vec::new();
        for x in xs {
            let z = sigmoid(0.5 * x + 0.1 + 0.2 * h);
            let r = sigmoid(-0.3 * x + 0.4 * h);
            let n = tanh(0.8 * x - 0.2 - 0.6 * r * h);
            h = (1.0 - z) * h + z * n;
            hs.push(h);
        }
        let hp = [hs[0] / 2.0, hs[1]];
        let e = [0.7 * hp[0], 0.7 * hp[1]];
        let a0 = 1.0 / (1.0 + (e[1] - e[0]).exp());
        let att = a0 * hp[0] + (1.0 - a0) * hp[1];
        let out = agrud_forward(&[vec![1.5], vec![-0.5]], &p).unwrap();
        assert!((out.h_out2[0] - hp[1]).abs() < 1e-15);
        assert!((out.h_out2[1] - att).abs() < 1e-15);
        assert_eq!(out.h_out2[1], out.h_out2[2]);
        assert_eq!(out.h_out2[0], out.h_out2[3]);
        assert!((out.movement_logits[1] - (hp[1] - att + 0.5 * att + 0.25 * hp[1])).abs() < 1e-15);
        assert!((out.volatility_logit - (hp[1] + 5.0 * att + 4.0 * hp[1])).abs() < 1e-14);
    }

    #[test]
    fn zero_params_predict_half() {
        let p = AgrudParams::zeros(dims(2));
        let out = agrud_forward(&vec![vec![0.0; 2]; 5], &p).unwrap();
        assert_eq!((out.movement_prob(), out.volatility_prob()), (0.5, 0.5));
    }

    #[test]
    fn loss_cases() {
        let confident = [[-40.0, 40.0], [40.0, -40.0]];
        assert!(movement_loss(&confident, &[Some(1), Some(0)]) < 1e-30);
        let uniform = [[0.3, 0.3]; 4];
        let l = movement_loss(&uniform, &[Some(0), Some(1), None, Some(1)]);
        assert!((l - 3.0 * 2f64.ln()).abs() < 1e-15);
        // -ln softmax: ln(1+e^-1), ln(1+e^2), ln 2
        let hand = (1.0 + (-1.0f64).exp()).ln() + (1.0 + 2f64.exp()).ln() + 2f64.ln();
        let l = movement_loss(&[[0.0, 1.0], [1.0, -1.0], [0.5, 0.5]], &[Some(1), Some(1), Some(0)]);
        assert!((l - hand).abs() < 1e-14);

        assert!(volatility_loss(&[30.0], &[true]) < 1e-9);
        assert!((volatility_loss(&[0.0, 0.0], &[true, false]) - 2.0 * 2f64.ln()).abs() < 1e-15);
        let hand = -(sigmoid(1.2)).ln() - (1.0 - sigmoid(-0.4)).ln() - (1.0 - sigmoid(2.0)).ln();
        assert!((volatility_loss(&[1.2, -0.4, 2.0], &[true, false, false]) - hand).abs() < 1e-14);
        assert!(volatility_loss(&[-800.0], &[true]).is_finite());
    }

    #[test]
    fn window_config_range() {
        for (d, ok) in [(4, false), (5, true), (15, true), (20, false)] {
            let cfg = PredictorConfig { window: d, ..PredictorConfig::default() };
            assert_eq!(cfg.validate().is_ok(), ok);
        }
    }

    #[test]
    fn ablation_parsing() {
        for a in Ablation::ALL {
            assert_eq!(a.as_str().parse::<Ablation>().unwrap(), a);
        }
        assert!("X".parse::<Ablation>().is_err());
    }
}
