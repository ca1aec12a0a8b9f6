//! Multi-cluster sample memory for temporally correlated streams, the
//! single-pool baseline, diagonal GMM/BIC model selection, memory-quality
//! diagnostics and a synthetic corrupted-image stream to drive them.

pub mod descriptors;
pub mod diagnostics;
pub mod error;
pub mod gmm;
pub mod harness;
pub mod memory;
pub mod stream;

pub use error::{Error, Result};
