//! Small convolutional classifiers with correlation, counterfactual and
//! contrastive class activation maps, plus the metrics used to evaluate them.
//!
//! The pipeline: [`training::generate_shapes_dataset`] →
//! [`training::train`] → [`explain::complete_explanation`] →
//! [`eval`] metrics, with [`data_io`] handling every file format.

pub mod cli;
pub mod data_io;
pub mod error;
pub mod eval;
pub mod explain;
pub mod network;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use network::{ForwardTrace, Network};
pub use tensor::Tensor;
