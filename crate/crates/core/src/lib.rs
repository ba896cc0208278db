//! Character-sequential convolutional answer selection.
//!
//! Sentences are read as raw character sequences over a fixed 71-symbol
//! alphabet, embedded through a learned lookup table and passed through a
//! stack of narrow 1D convolutions with batch normalization and max pooling.
//! Question and answer branches share every parameter. The pooled vectors are
//! joined with two word-overlap features and classified by a small dense head
//! trained with pointwise cross-entropy and AdaDelta.
//!
//! Module map:
//!
//! - [`charvocab`]: alphabet and fixed-length encoding
//! - [`dataio`]: canonical and WikiQA TSV loaders, split statistics
//! - [`nn_ops`]: forward/backward kernels
//! - [`model`]: the siamese network, configuration and checkpoints
//! - [`optim`]: loss, AdaDelta, training loop, gradient checking
//! - [`features`]: word overlap and IDF-weighted overlap
//! - [`rankeval`]: MAP/MRR and TREC run/qrel files
//! - [`experiment`]: multi-seed aggregation

pub mod charvocab;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod features;
pub mod model;
pub mod nn_ops;
pub mod optim;
pub mod rankeval;
pub mod tensor;
#[doc(hidden)]
pub mod testkit;

pub use error::{Error, Result};
