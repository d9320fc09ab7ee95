//! Linear and deep canonical correlation analysis for stimulus-response
//! decoding: two-view and multiway CCA, correlation-loss backpropagation,
//! FIR filterbank preprocessing, acoustic feature extraction, evaluation
//! statistics, and a synthetic ground-truth generator.

pub mod cca;
pub mod dcca;
pub mod dmcca;
pub mod error;
pub mod features;
pub mod linalg;
pub mod mcca;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod plot;
pub mod serde_util;
pub mod signal;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use timeseries::TimeSeriesMatrix;
