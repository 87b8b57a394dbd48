//! Masked-company sector pretraining. A BiLSTM reads the masked tweet; its
//! state at the mask is the tweet embedding `h_e`, scored against the rows of
//! the sector matrix `C`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, ln, log_sum_exp, sigmoid, softmax, sqrt, tanh};
use crate::optim::Adam;
use crate::rng::stage_rng;
use crate::tensor::{Matrix, ParamGroups};
use crate::text::TokenSequence;

/// LSTM cell; gate rows are stacked as input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

struct LstmStep {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl LstmCell {
    fn hidden(&self) -> usize {
        self.u.cols
    }

    fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>, LstmStep) {
        let k = self.hidden();
        let mut z = self.b.clone();
        self.w.matvec_add(x, &mut z);
        self.u.matvec_add(h, &mut z);
        let i: Vec<f64> = z[..k].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[k..2 * k].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * k..3 * k].iter().map(|&v| tanh(v)).collect();
        let o: Vec<f64> = z[3 * k..].iter().map(|&v| sigmoid(v)).collect();
        let c_new: Vec<f64> = (0..k).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
        let tanh_c: Vec<f64> = c_new.iter().map(|&v| tanh(v)).collect();
        let h_new: Vec<f64> = (0..k).map(|j| o[j] * tanh_c[j]).collect();
        let cache = LstmStep {
            h_prev: h.to_vec(),
            c_prev: c.to_vec(),
            i,
            f,
            g,
            o,
            tanh_c,
        };
        (h_new, c_new, cache)
    }

    /// Backprop through one step. Returns (dx, dh_prev, dc_prev).
    fn step_backward(
        &self,
        s: &LstmStep,
        x: &[f64],
        dh: &[f64],
        dc_next: &[f64],
        grad: &mut LstmCell,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.hidden();
        let mut dz = vec![0.0; 4 * k];
        let mut dc_prev = vec![0.0; k];
        for j in 0..k {
            let do_ = dh[j] * s.tanh_c[j];
            let dc = dc_next[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            dz[j] = dc * s.g[j] * s.i[j] * (1.0 - s.i[j]);
            dz[k + j] = dc * s.c_prev[j] * s.f[j] * (1.0 - s.f[j]);
            dz[2 * k + j] = dc * s.i[j] * (1.0 - s.g[j] * s.g[j]);
            dz[3 * k + j] = do_ * s.o[j] * (1.0 - s.o[j]);
            dc_prev[j] = dc * s.f[j];
        }
        grad.w.add_outer(&dz, x);
        grad.u.add_outer(&dz, &s.h_prev);
        for (gb, d) in grad.b.iter_mut().zip(&dz) {
            *gb += d;
        }
        let mut dx = vec![0.0; self.w.cols];
        self.w.matvec_t_add(&dz, &mut dx);
        let mut dh_prev = vec![0.0; k];
        self.u.matvec_t_add(&dz, &mut dh_prev);
        (dx, dh_prev, dc_prev)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAwareParams {
    /// `|V| x k` word embeddings.
    pub embeddings: Matrix,
    pub forward: LstmCell,
    pub backward: LstmCell,
    /// `m x 2k`; row `c` is the sector embedding `h_c`.
    pub sectors: Matrix,
}

impl ParamGroups for SelfAwareParams {
    fn groups(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("embeddings", &self.embeddings.data),
            ("forward.w", &self.forward.w.data),
            ("forward.u", &self.forward.u.data),
            ("forward.b", &self.forward.b),
            ("backward.w", &self.backward.w.data),
            ("backward.u", &self.backward.u.data),
            ("backward.b", &self.backward.b),
            ("sectors", &self.sectors.data),
        ]
    }

    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        vec![
            ("embeddings", &mut self.embeddings.data),
            ("forward.w", &mut self.forward.w.data),
            ("forward.u", &mut self.forward.u.data),
            ("forward.b", &mut self.forward.b),
            ("backward.w", &mut self.backward.w.data),
            ("backward.u", &mut self.backward.u.data),
            ("backward.b", &mut self.backward.b),
            ("sectors", &mut self.sectors.data),
        ]
    }
}

impl SelfAwareParams {
    pub fn zeros(vocab: usize, k: usize, m: usize) -> Self {
        let cell = || LstmCell {
            w: Matrix::zeros(4 * k, k),
            u: Matrix::zeros(4 * k, k),
            b: vec![0.0; 4 * k],
        };
        SelfAwareParams {
            embeddings: Matrix::zeros(vocab, k),
            forward: cell(),
            backward: cell(),
            sectors: Matrix::zeros(m, 2 * k),
        }
    }

    /// Embeddings and `C` uniform in (-0.1, 0.1); recurrent and input weights
    /// uniform with scale `1/sqrt(k)`; forget-gate bias 1.
    pub fn init(vocab: usize, k: usize, m: usize, seed: u64) -> Self {
        let mut rng = stage_rng(seed, "selfaware-init");
        let scale = 1.0 / sqrt(k as f64);
        let mut cell = || {
            let mut b = vec![0.0; 4 * k];
            b[k..2 * k].iter_mut().for_each(|v| *v = 1.0);
            LstmCell {
                w: Matrix::uniform(4 * k, k, scale, &mut rng),
                u: Matrix::uniform(4 * k, k, scale, &mut rng),
                b,
            }
        };
        let forward = cell();
        let backward = cell();
        SelfAwareParams {
            embeddings: Matrix::uniform(vocab, k, 0.1, &mut rng),
            forward,
            backward,
            sectors: Matrix::uniform(m, 2 * k, 0.1, &mut rng),
        }
    }

    /// Half-width `k` of the tweet embedding.
    pub fn k(&self) -> usize {
        self.embeddings.cols
    }

    pub fn num_sectors(&self) -> usize {
        self.sectors.rows
    }

    pub fn vocab_size(&self) -> usize {
        self.embeddings.rows
    }

    fn check(&self, seq: &TokenSequence) -> Result<usize> {
        let mask = seq
            .mask_position
            .ok_or_else(|| Error::Contract("tweet embedding needs a mask position".into()))?;
        if mask >= seq.original_length || seq.original_length > seq.ids.len() {
            return Err(Error::Contract(format!(
                "mask {mask} outside sequence of length {}",
                seq.original_length
            )));
        }
        if let Some(&bad) = seq.ids[..seq.original_length]
            .iter()
            .find(|&&id| id as usize >= self.vocab_size())
        {
            return Err(Error::Contract(format!("token id {bad} outside vocabulary")));
        }
        Ok(mask)
    }
}

struct EmbedTrace {
    mask: usize,
    fwd: Vec<LstmStep>,
    bwd: Vec<LstmStep>,
    h_e: Vec<f64>,
}

fn embed_traced(seq: &TokenSequence, p: &SelfAwareParams) -> Result<EmbedTrace> {
    let mask = p.check(seq)?;
    let k = p.k();
    let (mut h, mut c) = (vec![0.0; k], vec![0.0; k]);
    let mut fwd = Vec::with_capacity(mask + 1);
    for t in 0..=mask {
        let (hn, cn, s) = p.forward.step(p.embeddings.row(seq.ids[t] as usize), &h, &c);
        h = hn;
        c = cn;
        fwd.push(s);
    }
    let mut h_e = h;
    let (mut h, mut c) = (vec![0.0; k], vec![0.0; k]);
    let mut bwd = Vec::with_capacity(seq.original_length - mask);
    for t in (mask..seq.original_length).rev() {
        let (hn, cn, s) = p.backward.step(p.embeddings.row(seq.ids[t] as usize), &h, &c);
        h = hn;
        c = cn;
        bwd.push(s);
    }
    h_e.extend_from_slice(&h);
    Ok(EmbedTrace { mask, fwd, bwd, h_e })
}

/// `h_e`: forward state at the mask joined with the backward state at the
/// mask. The backward pass starts at the last unpadded token.
pub fn embed_tweet(seq: &TokenSequence, params: &SelfAwareParams) -> Result<Vec<f64>> {
    embed_traced(seq, params).map(|t| t.h_e)
}

/// Softmax over sectors of `C h_e`.
pub fn sector_probs(h_e: &[f64], sectors: &Matrix) -> Vec<f64> {
    softmax(&sectors.matvec(h_e))
}

fn embed_backward(seq: &TokenSequence, p: &SelfAwareParams, tr: &EmbedTrace, dh_e: &[f64], grad: &mut SelfAwareParams) {
    let k = p.k();
    let mut dh = dh_e[..k].to_vec();
    let mut dc = vec![0.0; k];
    for t in (0..=tr.mask).rev() {
        let tok = seq.ids[t] as usize;
        let (dx, dhp, dcp) = p.forward.step_backward(&tr.fwd[t], p.embeddings.row(tok), &dh, &dc, &mut grad.forward);
        crate::math::axpy(1.0, &dx, grad.embeddings.row_mut(tok));
        dh = dhp;
        dc = dcp;
    }
    let mut dh = dh_e[k..].to_vec();
    let mut dc = vec![0.0; k];
    // bwd[j] read position original_length - 1 - j; unwind from the mask.
    for (j, s) in tr.bwd.iter().enumerate().rev() {
        let tok = seq.ids[seq.original_length - 1 - j] as usize;
        let (dx, dhp, dcp) = p.backward.step_backward(s, p.embeddings.row(tok), &dh, &dc, &mut grad.backward);
        crate::math::axpy(1.0, &dx, grad.embeddings.row_mut(tok));
        dh = dhp;
        dc = dcp;
    }
}

fn check_label(seq: &TokenSequence, m: usize) -> Result<usize> {
    match seq.sector_label {
        Some(c) if c < m => Ok(c),
        Some(c) => Err(Error::Contract(format!("sector label {c} outside 0..{m}"))),
        None => Err(Error::Contract("training sequence has no sector label".into())),
    }
}

/// `-sum log p(sector)` over the batch.
pub fn selfaware_loss(batch: &[TokenSequence], params: &SelfAwareParams) -> Result<f64> {
    let mut loss = 0.0;
    for seq in batch {
        let label = check_label(seq, params.num_sectors())?;
        let logits = params.sectors.matvec(&embed_tweet(seq, params)?);
        loss += log_sum_exp(&logits) - logits[label];
    }
    Ok(loss)
}

/// Loss and its gradient with respect to every parameter group.
pub fn selfaware_loss_grad(batch: &[TokenSequence], params: &SelfAwareParams) -> Result<(f64, SelfAwareParams)> {
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    for seq in batch {
        let label = check_label(seq, params.num_sectors())?;
        let tr = embed_traced(seq, params)?;
        let logits = params.sectors.matvec(&tr.h_e);
        loss += log_sum_exp(&logits) - logits[label];
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;
        grad.sectors.add_outer(&dlogits, &tr.h_e);
        let mut dh_e = vec![0.0; tr.h_e.len()];
        params.sectors.matvec_t_add(&dlogits, &mut dh_e);
        embed_backward(seq, params, &tr, &dh_e, &mut grad);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfAwareConfig {
    pub k: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SelfAwareConfig {
    fn default() -> Self {
        SelfAwareConfig {
            k: 32,
            lr: 1e-3,
            batch_size: 64,
            max_epochs: 30,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAwareEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfAwareOutcome {
    pub params: SelfAwareParams,
    pub best_epoch: usize,
    pub log: Vec<SelfAwareEpoch>,
}

/// Mean loss and argmax accuracy.
pub fn selfaware_eval(data: &[TokenSequence], params: &SelfAwareParams) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    for seq in data {
        let label = check_label(seq, params.num_sectors())?;
        let logits = params.sectors.matvec(&embed_tweet(seq, params)?);
        loss += log_sum_exp(&logits) - logits[label];
        let best = (0..logits.len())
            .max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a)))
            .expect("at least one sector");
        hits += usize::from(best == label);
    }
    let n = data.len() as f64;
    Ok((loss / n, hits as f64 / n))
}

/// Adam on the summed loss with early stopping on validation loss; returns
/// the parameters from the best validation epoch. Falls back to training
/// loss when `val` is empty.
pub fn train_selfaware(
    train: &[TokenSequence],
    val: &[TokenSequence],
    vocab_size: usize,
    num_sectors: usize,
    cfg: &SelfAwareConfig,
    seed: u64,
) -> Result<SelfAwareOutcome> {
    if train.is_empty() {
        return Err(Error::Empty("self-aware training set"));
    }
    if cfg.k == 0 || cfg.batch_size == 0 || num_sectors == 0 {
        return Err(Error::Validation("k, batch size and sector count must be positive".into()));
    }
    let mut params = SelfAwareParams::init(vocab_size, cfg.k, num_sectors, seed);
    let mut adam = Adam::new(&params, cfg.lr);
    let mut rng = stage_rng(seed, "selfaware-shuffle");
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut log = Vec::new();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train[i].clone()));
            let (loss, grad) = selfaware_loss_grad(&batch, &params)?;
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!(
                        "batch loss {loss}; first non-finite gradient group: {:?}",
                        grad.first_non_finite()
                    ),
                });
            }
            train_loss += loss;
            adam.step(&mut params, &grad);
        }
        train_loss /= train.len() as f64;
        let (val_loss, val_accuracy) = if val.is_empty() {
            (train_loss, 0.0)
        } else {
            selfaware_eval(val, &params)?
        };
        log.push(SelfAwareEpoch {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, params.clone());
        } else if epoch - best.1 >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params) = if best.1 == 0 { (0.0, 0, params) } else { best };
    Ok(SelfAwareOutcome {
        params,
        best_epoch,
        log,
    })
}

/// Mean log-likelihood helper for reporting: `B log m` under uniform output.
pub fn uniform_loss(batch_len: usize, m: usize) -> f64 {
    batch_len as f64 * ln(m as f64)
}

/// Dot-product score of each sector for one embedding (logits of
/// [`sector_probs`]).
pub fn sector_logits(h_e: &[f64], sectors: &Matrix) -> Vec<f64> {
    (0..sectors.rows).map(|c| dot(sectors.row(c), h_e)).collect()
}
