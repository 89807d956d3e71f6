//! Contrastive bi-modal representation learning.
//!
//! Two per-modality autoencoders (image and text feature vectors) are
//! projected into a shared joint space whose width equals the number of
//! classes. Training combines reconstruction, cross-modal alignment,
//! one-hot regression and a contrastive / noise-contrastive objective, all
//! optimized with plain SGD on hand-written backward passes. Evaluation
//! covers cross-modal retrieval (mAP) and bi-modal classification.
//!
//! Module map:
//!
//! - [`numeric`]: matrices, layers, parameters, SGD, finite differences
//! - [`model`]: the network, its backward pass and checkpoints
//! - [`losses`]: objective terms, contrastive-set sampling, weighted total
//! - [`training`]: minibatch loop, epoch reports, classifier stage
//! - [`eval`]: retrieval mAP, accuracy, embedding export
//! - [`data`]: feature files, manifests, splits, synthetic generator
//! - [`cli`]: the `cobra` command-line surface

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod numeric;
pub mod training;

pub use error::{Error, Result};
pub use model::{CobraModel, Modality};
pub use numeric::{Matrix, Scalar};
