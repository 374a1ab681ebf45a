//! Synthetic feature generation for small labeled tabular corpora.

pub mod aae;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod experiments;
pub mod gan;
pub mod gmm;
pub mod nn;
pub mod rng;
pub mod svm;
mod util;

pub use error::{Error, Result};
