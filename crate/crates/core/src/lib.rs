//! Style-aware selective state-space stylization.
//!
//! The crate is a self-contained CPU implementation of a Mamba-style
//! image stylizer: a reverse-mode autodiff tensor core, selective scan
//! kernels with both zero-order-hold and simplified discretizations,
//! serpentine ("zigzag") two-dimensional scan orders, style-conditioned
//! state-space blocks, and the full encoder/decoder network with its
//! training losses.
//!
//! Everything is generic over the scalar type via [`Scalar`]; concrete
//! aliases for the two supported precisions live at the crate root.

pub mod blocks;
pub mod checkpoint;
pub mod error;
pub mod init;
pub mod loss;
pub mod net;
pub mod optim;
pub mod scalar;
pub mod scan;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double precision tensor, the default for training and gradient work.
pub type Tensor64 = tensor::Tensor<f64>;
/// Single precision tensor, matching on-disk checkpoint storage.
pub type Tensor32 = tensor::Tensor<f32>;

/// Double precision model.
pub type Model64 = net::SaMamModel<f64>;
/// Single precision model.
pub type Model32 = net::SaMamModel<f32>;

/// Double precision Adam optimizer state.
pub type Adam64 = optim::Adam<f64>;

/// Double precision loss feature extractor.
pub type FeatureExtractor64 = loss::FeatureExtractor<f64>;
