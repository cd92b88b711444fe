//! Proposal-free salient instance segmentation.
//!
//! Given an RGB image, a saliency map, a deep feature map and an instance
//! count `k`, the pipeline
//!
//! 1. blacks out non-salient pixels and over-segments the result with SLIC,
//! 2. averages the feature map over every salient superpixel,
//! 3. builds a feature/spatial affinity graph over those superpixels,
//! 4. embeds the nodes with the `k` smallest eigenvectors of the normalized
//!    Laplacian, and
//! 5. clusters the embedding with k-means seeded at evenly spaced fractiles.
//!
//! A fully connected CRF can refine the saliency map before clustering.
//! The crate also carries block-level numerical kernels for the networks that
//! usually produce the saliency and feature inputs ([`netblocks`]), and the
//! evaluation metrics used for saliency and instance masks ([`metrics`]).
//!
//! Everything is deterministic: no step of the segmentation path draws random
//! numbers, so identical inputs give bitwise-identical outputs.

pub mod crf;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod netblocks;
pub mod pipeline;
pub mod slic;
pub mod spectral;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use tensor::Tensor;
