//! Experiment toolkit for hate-speech text classification: dataset loading,
//! the seven-rule cleaning pipeline, two augmentation techniques, four
//! trainable model backends with a fixed training protocol, label-token
//! codecs with out-of-class correction, majority-vote ensembling, F1 and
//! significance evaluation, and token-attribution reports.
//!
//! Data-parallel inner loops (corpus cleaning, augmentation, prediction,
//! attribution) run on rayon when the default `parallel` feature is enabled
//! and sequentially otherwise.

pub mod augment;
pub mod backends;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod labelcodec;
pub mod manifest;
pub mod par;
pub mod preprocess;
pub mod tensor;

pub use error::{Error, Result};
