//! Contextual similarity (`CX`) and the contextual loss for comparing feature
//! sets that are not spatially aligned.
//!
//! - [`tensor`]: matrices, images and feature sets, plus PNG / CXT file I/O.
//! - [`features`]: patch extraction, subsampling and seeded Gaussian sets.
//! - [`cx`]: the similarity pipeline, the loss, and its hard nearest-neighbour limit.
//! - [`grad`]: analytic gradients w.r.t. features and pixels, finite-difference checks.
//! - [`baselines`]: L1, L2, feature-L1 (perceptual-style) and Gram losses.
//! - [`optimize`]: direct pixel-space gradient descent against a set of targets.
//! - [`experiments`]: the Gaussian expectation grid and the non-aligned denoising study.

pub mod baselines;
pub mod cx;
pub mod error;
pub mod experiments;
pub mod features;
pub mod grad;
pub mod optimize;
pub mod tensor;

pub use cx::{
    binarized_similarity, contextual_loss, contextual_similarity, CxParams, DistanceKind,
    StageMatrices,
};
pub use error::{Error, Result};
pub use features::{extract_patches, subsample_to_match, PatchSpec};
pub use tensor::{FeatureSet, ImageGrid, ImageShape, Matrix};
