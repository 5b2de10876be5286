//! Local explanations for black-box tabular models.
//!
//! A test point's neighborhood is resampled with a conditional tabular GAN,
//! labeled by the target model, and fitted with a linear model tree. The
//! tree's decision path gives the context of the explanation; the reached
//! leaf's coefficients give the feature attributions.

pub mod ctgan;
pub mod error;
pub mod explain;
pub mod linalg;
pub mod lmt;
pub mod neural;
pub mod scalar;
pub(crate) mod serde_vec;
pub mod tabular;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Linear model tree over `f64`.
pub type Tree = lmt::LinearModelTree<f64>;
/// Leaf model over `f64`.
pub type Leaf = lmt::LeafModel<f64>;
/// Multilayer perceptron over `f64`.
pub type Network = neural::Mlp<f64>;
/// Adam optimizer state over `f64`.
pub type Adam = neural::AdamState<f64>;
