//! Boosted ensembles of convolutional networks.
//!
//! Two ensemble builders share one boosting loop:
//!
//! * [`boosting::run_adaboost_m2`] trains every member from a fresh random
//!   initialization on a weighted resample of the training set.
//! * [`dib::run_dib`] trains the first member the same way, then builds each
//!   later member by copying the previous one, inserting one new layer
//!   ([`surgery::grow`]) and fine-tuning it for a short schedule.
//!
//! Members are small convolutional networks from [`nn`]; datasets, IDX
//! parsing and synthetic problems live in [`data`].

pub mod boosting;
pub mod data;
pub mod dib;
pub mod nn;
pub mod surgery;

mod error;

pub use error::Error;
