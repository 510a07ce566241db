//! RBF dynamic hyper-sphere (RBFDH) classifier.
//!
//! Training points are expanded with an RBF kernel against the training set,
//! moved by a learned affine map, and each class is fitted into its own
//! hyper-sphere by minimizing a penalty loss with adaptive gradient descent.
//! Test points are labeled by Gaussian density or nearest class center.

pub mod bench;
pub mod classify;
pub mod cli;
pub mod data;
pub mod error;
pub mod kernel;
pub mod model;
pub mod optimizer;
pub mod pipeline;

pub use error::{Error, Result};
