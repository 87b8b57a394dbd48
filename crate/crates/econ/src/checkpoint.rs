//! JSON checkpoints: a format tag, the model kind, a dimension header and the
//! parameters. Loading checks every parameter group against the header.

use std::path::Path;

use econ_core::experiment::TrainedModel;
use econ_core::predictor::{Ablation, AgrudDims, AgrudParams, EpochLog};
use econ_core::selfaware::SelfAwareParams;
use econ_core::tensor::ParamGroups;
use serde::{Deserialize, Serialize};

use crate::error::{EconError, Result};
use crate::io::{read_json, write_json};

pub const FORMAT: &str = "econ-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfAwareDims {
    pub vocab: usize,
    pub k: usize,
    pub sectors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgrudMeta {
    pub ablation: Ablation,
    pub window: usize,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint<D, M, P> {
    format: String,
    kind: String,
    dims: D,
    meta: M,
    params: P,
}

fn check_groups<P: ParamGroups>(path: &Path, got: &P, want: &P) -> Result<()> {
    for ((name, a), (_, b)) in got.groups().iter().zip(want.groups().iter()) {
        if a.len() != b.len() {
            return Err(EconError::format(
                path,
                format!("parameter group {name} has {} values, header implies {}", a.len(), b.len()),
            ));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(EconError::format(path, format!("parameter group {name} has non-finite values")));
        }
    }
    Ok(())
}

fn load<D, M, P>(path: &Path, kind: &str) -> Result<Checkpoint<D, M, P>>
where
    Checkpoint<D, M, P>: for<'de> Deserialize<'de>,
{
    let value: serde_json::Value = read_json(path)?;
    let field = |k: &str| value.get(k).and_then(|v| v.as_str()).unwrap_or("").to_string();
    if field("format") != FORMAT {
        return Err(EconError::format(path, format!("unsupported checkpoint format {:?}", field("format"))));
    }
    if field("kind") != kind {
        return Err(EconError::format(path, format!("expected a {kind} checkpoint, found {:?}", field("kind"))));
    }
    serde_json::from_value(value).map_err(|e| EconError::format(path, e))
}

pub fn save_selfaware(path: &Path, params: &SelfAwareParams) -> Result<()> {
    let ck = Checkpoint {
        format: FORMAT.to_string(),
        kind: "selfaware".to_string(),
        dims: SelfAwareDims {
            vocab: params.vocab_size(),
            k: params.k(),
            sectors: params.num_sectors(),
        },
        meta: (),
        params,
    };
    write_json(path, &ck)
}

pub fn load_selfaware(path: &Path) -> Result<SelfAwareParams> {
    let ck: Checkpoint<SelfAwareDims, (), SelfAwareParams> = load(path, "selfaware")?;
    let d = ck.dims;
    check_groups(path, &ck.params, &SelfAwareParams::zeros(d.vocab, d.k, d.sectors))?;
    Ok(ck.params)
}

pub fn save_agrud(path: &Path, model: &TrainedModel) -> Result<()> {
    let ck = Checkpoint {
        format: FORMAT.to_string(),
        kind: "agrud".to_string(),
        dims: model.params.dims,
        meta: AgrudMeta {
            ablation: model.ablation,
            window: model.window,
            best_epoch: model.best_epoch,
        },
        params: &model.params,
    };
    write_json(path, &ck)
}

/// Loads a predictor checkpoint; the training log is not stored with it.
pub fn load_agrud(path: &Path) -> Result<TrainedModel> {
    let ck: Checkpoint<AgrudDims, AgrudMeta, AgrudParams> = load(path, "agrud")?;
    if ck.params.dims != ck.dims {
        return Err(EconError::format(path, "parameter dims differ from the header"));
    }
    check_groups(path, &ck.params, &AgrudParams::zeros(ck.dims))?;
    Ok(TrainedModel {
        ablation: ck.meta.ablation,
        window: ck.meta.window,
        params: ck.params,
        best_epoch: ck.meta.best_epoch,
        log: Vec::<EpochLog>::new(),
    })
}
