//! Contextual similarity between two feature sets.
//!
//! For source features `x_i` and target features `y_j` the pipeline is
//!
//! ```text
//! d_ij   = distance(x_i, y_j)
//! dn_ij  = d_ij / (min_k d_ik + eps)
//! w_ij   = exp((1 - dn_ij) / h)
//! cx_ij  = w_ij / sum_k w_ik
//! CX     = (1/M) sum_j max_i cx_ij
//! loss   = -log CX
//! ```
//!
//! The measure is asymmetric: every target feature looks for its best source
//! match. Row work is spread over the rayon pool, but each row is reduced
//! sequentially so results do not depend on the number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{FeatureSet, Matrix};

/// Lower bound applied to `w_ij` so that no row of similarities sums to zero.
pub const SIM_FLOOR: f64 = 1e-300;

/// Norm guard for target-centered cosine distances.
pub const COSINE_NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    /// `1 - cos(x_i - mu_y, y_j - mu_y)` with `mu_y` the mean target feature.
    CosineTargetCentered,
    SquaredEuclidean,
    /// Sum of absolute coordinate differences.
    Absolute,
}

impl DistanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::CosineTargetCentered => "cosine",
            DistanceKind::SquaredEuclidean => "l2",
            DistanceKind::Absolute => "l1",
        }
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(DistanceKind::CosineTargetCentered),
            "l2" | "squared_euclidean" => Ok(DistanceKind::SquaredEuclidean),
            "l1" | "absolute" => Ok(DistanceKind::Absolute),
            other => Err(Error::InvalidParam(format!(
                "unknown distance '{other}' (expected cosine, l2 or l1)"
            ))),
        }
    }
}

/// Bandwidth, offset and distance kernel of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CxParams {
    pub h: f64,
    pub epsilon: f64,
    pub distance: DistanceKind,
}

impl Default for CxParams {
    fn default() -> Self {
        Self {
            h: 0.5,
            epsilon: 1e-5,
            distance: DistanceKind::CosineTargetCentered,
        }
    }
}

impl CxParams {
    pub fn new(h: f64, epsilon: f64, distance: DistanceKind) -> Result<Self> {
        let p = Self {
            h,
            epsilon,
            distance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParam("h must be > 0".into()));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParam("epsilon must be >= 0".into()));
        }
        Ok(())
    }
}

/// Intermediate matrices of one evaluation, all `N x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrices {
    pub dist: Matrix,
    pub dist_norm: Matrix,
    pub sim: Matrix,
    pub cx: Matrix,
}

impl StageMatrices {
    /// Index of the maximal entry of every column of `cx`.
    pub fn column_argmax(&self) -> Vec<usize> {
        column_argmax(&self.cx)
    }

    /// Index of the minimal entry of every row of `dist`.
    pub fn row_argmin(&self) -> Vec<usize> {
        row_argmin(&self.dist)
    }
}

pub(crate) fn check_pair(x: &FeatureSet, y: &FeatureSet) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            x: x.dim(),
            y: y.dim(),
        });
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(())
}

/// Mean of the target features.
pub fn target_mean(y: &FeatureSet) -> Vec<f64> {
    let mut mu = vec![0.0; y.dim()];
    for j in 0..y.len() {
        for (m, v) in mu.iter_mut().zip(y.feature(j)) {
            *m += v;
        }
    }
    let inv = 1.0 / y.len() as f64;
    mu.iter_mut().for_each(|m| *m *= inv);
    mu
}

/// Dot product with four interleaved accumulators combined in a fixed order,
/// so the result depends only on the inputs.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ca, cb) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| p * q).sum();
    let mut acc = [0.0f64; 4];
    for (p, q) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += p[l] * q[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[j] = sum_k f(a_k, ys[j]_k)` for every row of `ys`. Four target rows
/// are processed together so the loads of `a` are shared; each sum still runs
/// left to right over `k`.
#[inline(always)]
fn row_sums(a: &[f64], ys: &Matrix, out: &mut [f64], f: impl Fn(f64, f64) -> f64) {
    let dim = a.len();
    let data = ys.data();
    let mut j = 0;
    while j + 4 <= out.len() {
        let rows = &data[j * dim..(j + 4) * dim];
        let (b0, rest) = rows.split_at(dim);
        let (b1, rest) = rest.split_at(dim);
        let (b2, b3) = rest.split_at(dim);
        let mut acc = [0.0f64; 4];
        for k in 0..dim {
            let v = a[k];
            acc[0] += f(v, b0[k]);
            acc[1] += f(v, b1[k]);
            acc[2] += f(v, b2[k]);
            acc[3] += f(v, b3[k]);
        }
        out[j..j + 4].copy_from_slice(&acc);
        j += 4;
    }
    for (jj, o) in out.iter_mut().enumerate().skip(j) {
        *o = ys.row(jj).iter().zip(a).fold(0.0, |s, (q, p)| s + f(*p, *q));
    }
}

/// Features of `set` minus `mu`, plus their guarded norms.
pub(crate) fn centered(set: &FeatureSet, mu: &[f64]) -> (Matrix, Vec<f64>) {
    let mut out = set.features().clone();
    let mut norms = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        let row = out.row_mut(i);
        for (v, m) in row.iter_mut().zip(mu) {
            *v -= m;
        }
        norms.push(dot(row, row).sqrt().max(COSINE_NORM_GUARD));
    }
    (out, norms)
}

/// `N x M` matrix of distances between every `x_i` and `y_j`.
pub fn pairwise_distances(x: &FeatureSet, y: &FeatureSet, kind: DistanceKind) -> Result<Matrix> {
    if x.dim() != y.dim() {
        return Err(Error::DimMismatch {
            x: x.dim(),
            y: y.dim(),
        });
    }
    let (n, m) = (x.len(), y.len());
    let mut out = Matrix::zeros(n, m);
    if n == 0 || m == 0 {
        return Ok(out);
    }
    match kind {
        DistanceKind::SquaredEuclidean | DistanceKind::Absolute => {
            let yf = y.features();
            out.data_mut()
                .par_chunks_mut(m)
                .enumerate()
                .for_each(|(i, row)| {
                    if kind == DistanceKind::SquaredEuclidean {
                        row_sums(x.feature(i), yf, row, |p, q| (p - q) * (p - q));
                    } else {
                        row_sums(x.feature(i), yf, row, |p, q| (p - q).abs());
                    }
                });
        }
        DistanceKind::CosineTargetCentered => {
            let mu = target_mean(y);
            let (xc, xn) = centered(x, &mu);
            let (yc, yn) = centered(y, &mu);
            out.data_mut()
                .par_chunks_mut(m)
                .enumerate()
                .for_each(|(i, row)| {
                    row_sums(xc.row(i), &yc, row, |p, q| p * q);
                    for (j, d) in row.iter_mut().enumerate() {
                        let cos = *d / (xn[i] * yn[j]);
                        *d = (1.0 - cos).clamp(0.0, 2.0);
                    }
                });
        }
    }
    Ok(out)
}

/// Minimum of every row, scanning left to right.
pub fn row_minima(dist: &Matrix) -> Vec<f64> {
    dist.row_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect()
}

/// `dn_ij = d_ij / (min_k d_ik + eps)`.
pub fn normalize_distances(dist: &Matrix, epsilon: f64) -> Result<Matrix> {
    let minima = row_minima(dist);
    let mut out = dist.clone();
    for (i, &mn) in minima.iter().enumerate() {
        let denom = mn + epsilon;
        if denom == 0.0 {
            return Err(Error::DegenerateRow(i));
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= denom);
    }
    Ok(out)
}

/// `w_ij = exp((1 - dn_ij) / h)`, kept inside `[SIM_FLOOR, f64::MAX]`.
pub fn similarities(dist_norm: &Matrix, h: f64) -> Result<Matrix> {
    if !(h > 0.0) {
        return Err(Error::InvalidParam("h must be > 0".into()));
    }
    let data = dist_norm
        .data()
        .iter()
        .map(|&d| ((1.0 - d) / h).exp().clamp(SIM_FLOOR, f64::MAX))
        .collect();
    Matrix::from_vec(dist_norm.rows(), dist_norm.cols(), data)
}

/// Divides every row by its sum.
pub fn row_normalize(sim: &Matrix) -> Matrix {
    let mut out = sim.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let sum: f64 = row.iter().sum();
        assert!(sum > 0.0, "row {i} of the similarity matrix sums to zero");
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Row-wise softmax of `(1 - dn_ij) / h`, shifted by the row maximum.
///
/// Equal to `row_normalize(similarities(..))` whenever `w` is representable,
/// and stays finite when `1/h` is large enough for `exp` to overflow.
fn contextual_matrix(dist_norm: &Matrix, h: f64) -> Matrix {
    let mut out = dist_norm.clone();
    let m = out.cols();
    out.data_mut().par_chunks_mut(m).for_each(|row| {
        let top = row.iter().copied().fold(f64::INFINITY, f64::min);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = ((top - *v) / h).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    });
    out
}

/// `(1/M) sum_j max_i cx_ij`.
pub fn aggregate(cx: &Matrix) -> f64 {
    let maxima = column_maxima(cx);
    maxima.iter().sum::<f64>() / cx.cols() as f64
}

fn column_maxima(cx: &Matrix) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; cx.cols()];
    for row in cx.row_iter() {
        for (b, &v) in best.iter_mut().zip(row) {
            if v > *b {
                *b = v;
            }
        }
    }
    best
}

/// Row of the maximum in each column; the smallest row index wins ties.
pub fn column_argmax(m: &Matrix) -> Vec<usize> {
    let mut best = vec![f64::NEG_INFINITY; m.cols()];
    let mut arg = vec![0usize; m.cols()];
    for (i, row) in m.row_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > best[j] {
                best[j] = v;
                arg[j] = i;
            }
        }
    }
    arg
}

/// Column of the minimum in each row; the smallest column index wins ties.
pub fn row_argmin(m: &Matrix) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate() {
                if v < row[arg] {
                    arg = j;
                }
            }
            arg
        })
        .collect()
}

/// Runs the pipeline from a precomputed distance matrix.
pub fn contextual_similarity_from_distances(
    dist: Matrix,
    params: &CxParams,
) -> Result<(f64, StageMatrices)> {
    params.validate()?;
    if dist.rows() == 0 || dist.cols() == 0 {
        return Err(Error::EmptySet);
    }
    let dist_norm = normalize_distances(&dist, params.epsilon)?;
    let sim = similarities(&dist_norm, params.h)?;
    let cx = contextual_matrix(&dist_norm, params.h);
    let value = aggregate(&cx);
    Ok((
        value,
        StageMatrices {
            dist,
            dist_norm,
            sim,
            cx,
        },
    ))
}

/// Contextual similarity `CX(x, y)` in `(0, 1]` and the stage matrices.
///
/// The sets may have different sizes; the average runs over the `M = |y|`
/// target features.
pub fn contextual_similarity(
    x: &FeatureSet,
    y: &FeatureSet,
    params: &CxParams,
) -> Result<(f64, StageMatrices)> {
    check_pair(x, y)?;
    params.validate()?;
    let dist = pairwise_distances(x, y, params.distance)?;
    contextual_similarity_from_distances(dist, params)
}

/// `-log CX(x, y)`.
pub fn contextual_loss(x: &FeatureSet, y: &FeatureSet, params: &CxParams) -> Result<f64> {
    let (value, _) = contextual_similarity(x, y, params)?;
    // `0 - ln` rather than `-ln` so a perfect match reports +0
    Ok(0.0 - value.ln())
}

/// Fraction of target features that are the nearest neighbour of at least
/// one source feature (the hard-assignment limit of `CX`).
pub fn binarized_similarity(x: &FeatureSet, y: &FeatureSet, kind: DistanceKind) -> Result<f64> {
    check_pair(x, y)?;
    let dist = pairwise_distances(x, y, kind)?;
    Ok(binarized_from_distances(&dist))
}

pub fn binarized_from_distances(dist: &Matrix) -> f64 {
    let mut hit = vec![false; dist.cols()];
    for j in row_argmin(dist) {
        hit[j] = true;
    }
    hit.iter().filter(|&&h| h).count() as f64 / dist.cols() as f64
}
