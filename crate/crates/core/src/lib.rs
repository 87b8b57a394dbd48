//! Core algorithms for joint stock movement and abnormal volatility prediction
//! from prices, macroeconomic series and filtered tweets.
//!
//! The crate is `no_std` (with `alloc`). File formats, configuration and the
//! command line live in the companion `econ` crate.
//!
//! Pipeline, bottom-up:
//!
//! - [`ingest`]: price bars, movement/volatility labels, trend-window chaining,
//!   normalized stock features and the planted-signal generator.
//! - [`filter`]: sentiment scoring, daily aggregation, chi-square / Cramér's V
//!   and top-k selection by impressions with calibrated k.
//! - [`text`]: ticker-preserving tokenizer, company masking, vocabulary and padding.
//! - [`selfaware`]: BiLSTM tweet encoder pretrained to recover the masked company's sector.
//! - [`trends`]: macro and micro attention trends.
//! - [`predictor`]: feature fusion and the temporal-distance attention GRU.
//! - [`metrics`]: accuracy, MCC and ROC AUC.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod ingest;
pub mod math;
pub mod metrics;
pub mod optim;
pub mod panel;
pub mod predictor;
pub mod rng;
pub mod selfaware;
pub mod tensor;
pub mod text;
pub mod trends;
pub mod types;

pub use error::{Error, Result};
