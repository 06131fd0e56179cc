//! Saliency score regression with a single fully convolutional network.
//!
//! The crate covers the whole pipeline: layer primitives with exact
//! gradients, the regression network and its size-restoration layer, the
//! weighted Smooth-L1 loss (plus Euclidean and cross-entropy controls),
//! momentum SGD, PGM/PPM datasets, the benchmark metrics and a binary model
//! format.

pub mod data;
pub mod error;
pub mod inference;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod modelio;
pub mod network;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
pub use network::{Network, NetworkConfig};
pub use tensor::Tensor;
