//! Multiple kernel learning for multi-view tabular data.
//!
//! The crate covers the full pipeline: ingesting aligned multi-view datasets,
//! computing per-view Gram matrices, fusing them into a meta-kernel
//! (naive / STATIS / SimpleMKL / SEMKL), training SVMs on precomputed kernels,
//! kernel PCA embeddings feeding deep fusion networks, integrated-gradients
//! component ranking with kernel-gradient feature recovery, and the
//! cross-validated multi-seed evaluation protocol.

pub mod attribution;
pub mod data;
pub mod deep;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod kernel;
pub mod kpca;
pub mod linalg;
pub mod model_file;
pub mod svm;

pub use error::CoreError;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;
