//! Forward (and, for the loss, backward) kernels for the building blocks of
//! the subitizing and saliency networks: squeeze-and-excitation channel
//! recalibration, densely connected blocks, and the cross-entropy loss.
//!
//! These are reference kernels for checking exported weights and framework
//! outputs, not a training library.

mod dense;
mod gradcheck;
mod loss;
mod manifest;
mod se;

pub use dense::{dense_block_forward, dense_layer_forward, DenseLayerParams};
pub use gradcheck::{finite_diff_check, ScalarMap};
pub use loss::{weighted_cross_entropy, CrossEntropy, CrossEntropyMap, LOG_CLAMP};
pub use manifest::ParamManifest;
pub use se::{se_forward, se_gate, SeParams, DEFAULT_REDUCTION};
