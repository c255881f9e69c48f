//! Reference losses the contextual loss is compared against: pixelwise L1
//! and L2, an index-aligned feature L1 (the perceptual loss applied to
//! caller-supplied features) and the Gram-matrix style loss.

use crate::error::{Error, Result};
use crate::tensor::{FeatureSet, Matrix};

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `sum |a - b|`.
pub fn l1_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum())
}

/// `sqrt(sum (a - b)^2)`.
pub fn l2_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
}

/// Subgradient of [`l1_loss`] w.r.t. `a`: `sign(a - b)`, zero where equal.
pub fn l1_grad(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(p, q)| {
            let d = p - q;
            if d == 0.0 {
                0.0
            } else {
                d.signum()
            }
        })
        .collect())
}

/// Gradient of [`l2_loss`] w.r.t. `a`: `(a - b) / ||a - b||`, zero at `a = b`.
pub fn l2_grad(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let norm = l2_loss(a, b)?;
    if norm == 0.0 {
        return Ok(vec![0.0; a.len()]);
    }
    Ok(a.iter().zip(b).map(|(p, q)| (p - q) / norm).collect())
}

/// Elementwise L1 between two index-aligned feature sets.
pub fn feature_l1_loss(x: &FeatureSet, y: &FeatureSet) -> Result<f64> {
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(Error::Shape(format!(
            "feature sets must match: {}x{} vs {}x{}",
            x.len(),
            x.dim(),
            y.len(),
            y.dim()
        )));
    }
    l1_loss(x.features().data(), y.features().data())
}

/// Second-moment matrix `F^T F / (N D)` of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    data: Matrix,
}

impl GramMatrix {
    pub fn of(set: &FeatureSet) -> Self {
        let (n, d) = (set.len(), set.dim());
        let mut data = Matrix::zeros(d, d);
        for k in 0..n {
            let f = set.feature(k);
            for a in 0..d {
                for b in a..d {
                    let v = data.get(a, b) + f[a] * f[b];
                    data.set(a, b, v);
                }
            }
        }
        let scale = 1.0 / (n * d).max(1) as f64;
        for a in 0..d {
            for b in a..d {
                let v = data.get(a, b) * scale;
                data.set(a, b, v);
                data.set(b, a, v);
            }
        }
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }
}

/// Squared Frobenius distance between the Gram matrices of `x` and `y`.
/// Only the feature dimensions have to agree.
pub fn gram_loss(x: &FeatureSet, y: &FeatureSet) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            x: x.dim(),
            y: y.dim(),
        });
    }
    let (gx, gy) = (GramMatrix::of(x), GramMatrix::of(y));
    Ok(gx
        .matrix()
        .data()
        .iter()
        .zip(gy.matrix().data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}
