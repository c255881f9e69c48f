//! Feature sets from images (vectorized patches) and from seeded samplers.
//!
//! All randomness goes through [`seeded_rng`], a ChaCha8 stream generator, so
//! that a `(seed, stream)` pair yields the same numbers on every platform.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{FeatureSet, ImageGrid, ImageShape, Matrix};

/// Side length and stride of square patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub patch_size: usize,
    pub stride: usize,
}

impl PatchSpec {
    pub fn new(patch_size: usize, stride: usize) -> Result<Self> {
        if patch_size == 0 || stride == 0 {
            return Err(Error::InvalidParam(format!(
                "patch size and stride must be >= 1 (got {patch_size}, {stride})"
            )));
        }
        Ok(Self { patch_size, stride })
    }

    /// Number of placements along an axis of the given length.
    pub fn positions(&self, len: usize) -> usize {
        if len < self.patch_size {
            0
        } else {
            (len - self.patch_size) / self.stride + 1
        }
    }

    pub fn feature_dim(&self, channels: usize) -> usize {
        self.patch_size * self.patch_size * channels
    }

    /// Fails unless at least one patch fits in `shape`.
    pub fn check_fits(&self, shape: ImageShape) -> Result<()> {
        if shape.height < self.patch_size || shape.width < self.patch_size {
            return Err(Error::ImageTooSmall {
                height: shape.height,
                width: shape.width,
                patch: self.patch_size,
            });
        }
        Ok(())
    }
}

impl Default for PatchSpec {
    /// 5x5 patches with stride 2.
    fn default() -> Self {
        Self {
            patch_size: 5,
            stride: 2,
        }
    }
}

/// ChaCha8 generator for `seed`, positioned on an independent `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Vectorizes every `p x p` patch in `(row, col, channel)` order. Patches are
/// enumerated row-major over their top-left corners, which are recorded as
/// the feature origins.
pub fn extract_patches(image: &ImageGrid, spec: PatchSpec) -> Result<FeatureSet> {
    extract_patches_raw(image.shape(), image.data(), spec)
}

/// [`extract_patches`] on an unclamped buffer with the given shape.
pub fn extract_patches_raw(shape: ImageShape, data: &[f64], spec: PatchSpec) -> Result<FeatureSet> {
    spec.check_fits(shape)?;
    if data.len() != shape.len() {
        return Err(Error::Shape(format!(
            "buffer has {} values, shape needs {}",
            data.len(),
            shape.len()
        )));
    }
    let p = spec.patch_size;
    let c = shape.channels;
    let rows = spec.positions(shape.height);
    let cols = spec.positions(shape.width);
    let dim = spec.feature_dim(c);
    let mut features = Vec::with_capacity(rows * cols * dim);
    let mut origins = Vec::with_capacity(rows * cols);
    for pr in 0..rows {
        for pc in 0..cols {
            let (top, left) = (pr * spec.stride, pc * spec.stride);
            origins.push((top, left));
            for r in top..top + p {
                let start = shape.index(r, left, 0);
                features.extend_from_slice(&data[start..start + p * c]);
            }
        }
    }
    FeatureSet::with_origins(Matrix::from_vec(rows * cols, dim, features)?, origins)
}

/// Brings both sets to `min(|x|, |y|)` features. The smaller set is returned
/// unchanged; the larger one is sampled uniformly without replacement, and
/// the kept features stay in their original order.
pub fn subsample_to_match(
    x: &FeatureSet,
    y: &FeatureSet,
    seed: u64,
) -> Result<(FeatureSet, FeatureSet)> {
    let (xi, yi) = subsample_indices(x.len(), y.len(), seed)?;
    let pick = |set: &FeatureSet, idx: Option<Vec<usize>>| match idx {
        Some(idx) => set.select(&idx),
        None => set.clone(),
    };
    Ok((pick(x, xi), pick(y, yi)))
}

/// The index choice behind [`subsample_to_match`]; `None` means "keep all".
pub fn subsample_indices(
    nx: usize,
    ny: usize,
    seed: u64,
) -> Result<(Option<Vec<usize>>, Option<Vec<usize>>)> {
    if nx == 0 || ny == 0 {
        return Err(Error::EmptySet);
    }
    let sample = |from: usize, amount: usize| {
        let mut rng = seeded_rng(seed, 0);
        let mut idx = index::sample(&mut rng, from, amount).into_vec();
        idx.sort_unstable();
        idx
    };
    Ok(match nx.cmp(&ny) {
        std::cmp::Ordering::Equal => (None, None),
        std::cmp::Ordering::Greater => (Some(sample(nx, ny)), None),
        std::cmp::Ordering::Less => (None, Some(sample(ny, nx))),
    })
}

/// `n` features of dimension `dim` with i.i.d. `Normal(mean, stddev^2)`
/// coordinates, computed as `mean + stddev * z` from standard normal draws.
pub fn sample_gaussian_features(
    n: usize,
    dim: usize,
    mean: f64,
    stddev: f64,
    seed: u64,
) -> Result<FeatureSet> {
    let mut rng = seeded_rng(seed, 0);
    sample_gaussian_with(&mut rng, n, dim, mean, stddev)
}

/// Like [`sample_gaussian_features`] but draws from a caller-owned generator.
pub fn sample_gaussian_with<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    dim: usize,
    mean: f64,
    stddev: f64,
) -> Result<FeatureSet> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be >= 1".into()));
    }
    if !(stddev >= 0.0) {
        return Err(Error::InvalidParam(format!("stddev must be >= 0, got {stddev}")));
    }
    let data = (0..n * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            mean + stddev * z
        })
        .collect();
    Ok(FeatureSet::new(Matrix::from_vec(n, dim, data)?))
}
