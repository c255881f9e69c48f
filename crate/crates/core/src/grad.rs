//! Analytic gradient of the contextual loss with respect to the source
//! features, its adjoint through patch extraction, and finite-difference
//! checks.
//!
//! The target set is treated as data: nothing flows into `y` or into the
//! target mean used by the cosine kernel. The `max` over sources and the
//! `min` over targets are differentiated at their selected index (smallest
//! index on ties), which coincides with the gradient in generic position.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cx::{
    self, aggregate, centered, check_pair, column_argmax, contextual_similarity, dot, row_argmin,
    target_mean, CxParams, DistanceKind, StageMatrices,
};
use crate::error::{Error, Result};
use crate::features::{extract_patches_raw, seeded_rng, PatchSpec};
use crate::tensor::{FeatureSet, ImageShape, Matrix};

/// Instances whose selections are closer to a tie than this are skipped by
/// [`grad_check`].
pub const TIE_MARGIN_MIN: f64 = 1e-6;

/// Floor for the denominator of the relative error; see [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// `dL/dx` for `L = -log CX(x, y)`, as an `N x D` matrix.
pub fn loss_grad_features(x: &FeatureSet, y: &FeatureSet, params: &CxParams) -> Result<Matrix> {
    let (_, stages) = contextual_similarity(x, y, params)?;
    loss_grad_from_stages(x, y, params, &stages)
}

/// Loss value and `dL/dx` in one pass.
pub fn loss_and_grad(x: &FeatureSet, y: &FeatureSet, params: &CxParams) -> Result<(f64, Matrix)> {
    let (value, stages) = contextual_similarity(x, y, params)?;
    let grad = loss_grad_from_stages(x, y, params, &stages)?;
    Ok((0.0 - value.ln(), grad))
}

/// Gradient of the loss w.r.t. the distance matrix `d_ij`.
pub fn loss_grad_distances(stages: &StageMatrices, params: &CxParams) -> Matrix {
    let (n, m) = stages.cx.shape();
    let value = aggregate(&stages.cx);
    let winner = column_argmax(&stages.cx);
    let nearest = row_argmin(&stages.dist);
    // dL/dCX_ij is nonzero only at the winning source of each column
    let seed = -1.0 / (value * m as f64);
    let mut won_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (j, &i) in winner.iter().enumerate() {
        won_by[i].push(j);
    }
    let mut out = Matrix::zeros(n, m);
    out.data_mut()
        .par_chunks_mut(m)
        .enumerate()
        .for_each(|(i, g)| {
            let cx_row = stages.cx.row(i);
            let dn_row = stages.dist_norm.row(i);
            let shared: f64 = won_by[i].iter().map(|&j| seed * cx_row[j]).sum();
            // softmax backward, then through z = (1 - dn) / h
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = cx_row[j] * (-shared) / -params.h;
            }
            for &j in &won_by[i] {
                g[j] += cx_row[j] * seed / -params.h;
            }
            // dn_ij = d_ij / (min_k d_ik + eps)
            let denom = stages.dist.get(i, nearest[i]) + params.epsilon;
            let mut grad_min = 0.0;
            for (gj, dn) in g.iter_mut().zip(dn_row) {
                grad_min -= *gj * dn;
                *gj /= denom;
            }
            g[nearest[i]] += grad_min / denom;
        });
    out
}

/// `dL/dx` reusing the stage matrices of a previous evaluation.
pub fn loss_grad_from_stages(
    x: &FeatureSet,
    y: &FeatureSet,
    params: &CxParams,
    stages: &StageMatrices,
) -> Result<Matrix> {
    check_pair(x, y)?;
    if stages.dist.shape() != (x.len(), y.len()) {
        return Err(Error::Shape(format!(
            "stages are {:?}, sets are {}x{}",
            stages.dist.shape(),
            x.len(),
            y.len()
        )));
    }
    let g_dist = loss_grad_distances(stages, params);
    Ok(distance_backward(x, y, params.distance, &g_dist))
}

/// Pulls a gradient w.r.t. `d_ij` back onto the source features.
pub fn distance_backward(
    x: &FeatureSet,
    y: &FeatureSet,
    kind: DistanceKind,
    g_dist: &Matrix,
) -> Matrix {
    let (n, dim) = (x.len(), x.dim());
    let mut out = Matrix::zeros(n, dim);
    match kind {
        DistanceKind::SquaredEuclidean => {
            out.data_mut()
                .par_chunks_mut(dim.max(1))
                .enumerate()
                .for_each(|(i, gx)| {
                    let xi = x.feature(i);
                    let mut total = 0.0;
                    for (j, &g) in g_dist.row(i).iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        total += g;
                        for (o, yv) in gx.iter_mut().zip(y.feature(j)) {
                            *o -= g * yv;
                        }
                    }
                    for (o, xv) in gx.iter_mut().zip(xi) {
                        *o = 2.0 * (*o + total * xv);
                    }
                });
        }
        DistanceKind::Absolute => {
            out.data_mut()
                .par_chunks_mut(dim.max(1))
                .enumerate()
                .for_each(|(i, gx)| {
                    let xi = x.feature(i);
                    for (j, &g) in g_dist.row(i).iter().enumerate() {
                        for ((o, xv), yv) in gx.iter_mut().zip(xi).zip(y.feature(j)) {
                            let diff: f64 = xv - yv;
                            if diff != 0.0 {
                                *o += g * diff.signum();
                            }
                        }
                    }
                });
        }
        DistanceKind::CosineTargetCentered => {
            let mu = target_mean(y);
            let (xc, xn) = centered(x, &mu);
            let (yc, yn) = centered(y, &mu);
            out.data_mut()
                .par_chunks_mut(dim.max(1))
                .enumerate()
                .for_each(|(i, gx)| {
                    let a = xc.row(i);
                    let na = xn[i];
                    // the norm guard is constant where active
                    let norm_live = dot(a, a).sqrt() > cx::COSINE_NORM_GUARD;
                    let mut radial = 0.0;
                    for (j, &g) in g_dist.row(i).iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let b = yc.row(j);
                        let inv = 1.0 / (na * yn[j]);
                        let cos = dot(a, b) * inv;
                        for (o, bv) in gx.iter_mut().zip(b) {
                            *o -= g * bv * inv;
                        }
                        radial += g * cos;
                    }
                    if norm_live {
                        let k = radial / (na * na);
                        for (o, av) in gx.iter_mut().zip(a) {
                            *o += k * av;
                        }
                    }
                });
        }
    }
    out
}

/// Adjoint of patch extraction: every pixel receives the sum of the entries
/// of `feat_grad` that were read from it. Patches are accumulated in order.
pub fn scatter_patch_gradient(
    feat_grad: &Matrix,
    origins: &[(usize, usize)],
    spec: PatchSpec,
    shape: ImageShape,
) -> Result<Vec<f64>> {
    let p = spec.patch_size;
    let c = shape.channels;
    if feat_grad.rows() != origins.len() || feat_grad.cols() != spec.feature_dim(c) {
        return Err(Error::Shape(format!(
            "feature gradient {:?} does not match {} origins of dim {}",
            feat_grad.shape(),
            origins.len(),
            spec.feature_dim(c)
        )));
    }
    let mut out = vec![0.0; shape.len()];
    for (k, &(top, left)) in origins.iter().enumerate() {
        if top + p > shape.height || left + p > shape.width {
            return Err(Error::OriginOutOfBounds {
                row: top,
                col: left,
                height: shape.height,
                width: shape.width,
                patch: p,
            });
        }
        let g = feat_grad.row(k);
        for r in 0..p {
            let start = shape.index(top + r, left, 0);
            for (o, v) in out[start..start + p * c].iter_mut().zip(&g[r * p * c..]) {
                *o += v;
            }
        }
    }
    Ok(out)
}

/// Contextual loss of an image's patches against fixed target features, and
/// its gradient w.r.t. the pixels.
pub fn loss_grad_pixels(
    shape: ImageShape,
    pixels: &[f64],
    target: &FeatureSet,
    spec: PatchSpec,
    params: &CxParams,
) -> Result<(f64, Vec<f64>)> {
    let x = extract_patches_raw(shape, pixels, spec)?;
    let (loss, g) = loss_and_grad(&x, target, params)?;
    let origins = x.origins().expect("patches carry origins");
    Ok((loss, scatter_patch_gradient(&g, origins, spec, shape)?))
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h` for every `k`.
pub fn finite_diff_grad<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut p = point.to_vec();
    (0..p.len())
        .map(|k| {
            let orig = p[k];
            p[k] = orig + step;
            let up = f(&p);
            p[k] = orig - step;
            let down = f(&p);
            p[k] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, REL_ERR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Max-norm relative error of two gradient vectors:
/// `max_k |a_k - b_k| / max(|a|_inf, |b|_inf, REL_ERR_FLOOR)`.
///
/// Coordinates whose true derivative is orders of magnitude below the rest
/// are dominated by finite-difference rounding, so they are measured against
/// the scale of the whole gradient.
pub fn normwise_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / inf(a).max(inf(b)).max(REL_ERR_FLOOR)
}

/// Distance of an instance from the nearest non-smooth point. Row minima of
/// `d` are compared by relative gap `(second - best) / |best|`. Column maxima
/// of `CX` are compared in log-odds, `logit(best) - logit(second)`, with
/// `1 - CX_ij` taken as the rest of row `i` so that saturated entries near 1
/// stay distinguishable; columns whose two largest entries are both zero
/// carry no derivative and are ignored. For the absolute kernel the smallest
/// `|x_id - y_jd|` also counts.
pub fn tie_margin(x: &FeatureSet, y: &FeatureSet, stages: &StageMatrices, kind: DistanceKind) -> f64 {
    let mut margin = f64::INFINITY;
    for row in stages.dist.row_iter() {
        let (a, b) = two_smallest(row.iter().copied());
        margin = margin.min(if a == 0.0 { b } else { (b - a) / a.abs() });
    }
    let (n, m) = stages.cx.shape();
    let mut log_odds = Matrix::zeros(n, m);
    for i in 0..n {
        let row = stages.cx.row(i);
        for j in 0..m {
            // left-to-right sums of the other entries, excluding j
            let rest: f64 = row[..j].iter().sum::<f64>() + row[j + 1..].iter().sum::<f64>();
            log_odds.set(i, j, row[j].ln() - rest.ln());
        }
    }
    for j in 0..m {
        let (a, b) = two_smallest((0..n).map(|i| -log_odds.get(i, j)));
        if b.is_finite() {
            margin = margin.min(b - a);
        }
    }
    if kind == DistanceKind::Absolute {
        for i in 0..x.len() {
            for j in 0..y.len() {
                for (a, b) in x.feature(i).iter().zip(y.feature(j)) {
                    margin = margin.min((a - b).abs());
                }
            }
        }
    }
    margin
}

fn two_smallest(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut a, mut b) = (f64::INFINITY, f64::INFINITY);
    for v in vals {
        if v < a {
            b = a;
            a = v;
        } else if v < b {
            b = v;
        }
    }
    (a, b)
}

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub max_abs_err: f64,
    /// Worst [`normwise_relative_error`] over the checked instances.
    pub max_rel_err: f64,
    /// Worst per-coordinate [`relative_error`]; informative only, since tiny
    /// derivatives make it reflect rounding rather than the gradient.
    pub max_coord_rel_err: f64,
    pub checked_coords: usize,
    /// Smallest tie margin among the instances that were checked.
    pub tie_margin: f64,
    pub trials: usize,
    /// Perturbed instances discarded for being within [`TIE_MARGIN_MIN`] of a tie.
    pub skipped: usize,
}

const MAX_DRAWS_PER_TRIAL: usize = 1000;

/// Compares [`loss_grad_features`] with [`finite_diff_grad`] on `trials`
/// seeded perturbations of `x` (Gaussian noise at 10% of the RMS feature
/// value). Near-tie perturbations are redrawn and counted in `skipped`.
pub fn grad_check(
    x: &FeatureSet,
    y: &FeatureSet,
    params: &CxParams,
    step: f64,
    trials: usize,
    seed: u64,
) -> Result<GradReport> {
    check_pair(x, y)?;
    params.validate()?;
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    if !(step > 0.0) {
        return Err(Error::InvalidParam("step must be > 0".into()));
    }
    let base = x.features().data();
    let rms = (base.iter().map(|v| v * v).sum::<f64>() / base.len().max(1) as f64).sqrt();
    let scale = 0.1 * rms.max(1e-3);
    let (n, dim) = (x.len(), x.dim());

    let mut report = GradReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        max_coord_rel_err: 0.0,
        checked_coords: 0,
        tie_margin: f64::INFINITY,
        trials,
        skipped: 0,
    };
    for t in 0..trials {
        let mut rng = seeded_rng(seed, t as u64);
        let mut accepted = None;
        for _ in 0..MAX_DRAWS_PER_TRIAL {
            let data: Vec<f64> = base
                .iter()
                .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let xt = FeatureSet::new(Matrix::from_vec(n, dim, data)?);
            let (_, stages) = contextual_similarity(&xt, y, params)?;
            let margin = tie_margin(&xt, y, &stages, params.distance);
            if margin >= TIE_MARGIN_MIN {
                accepted = Some((xt, stages, margin));
                break;
            }
            report.skipped += 1;
        }
        let Some((xt, stages, margin)) = accepted else {
            continue;
        };
        report.tie_margin = report.tie_margin.min(margin);
        let analytic = loss_grad_from_stages(&xt, y, params, &stages)?;
        let numeric = finite_diff_grad(
            |p| {
                let xp = FeatureSet::new(Matrix::from_vec(n, dim, p.to_vec()).unwrap());
                cx::contextual_loss(&xp, y, params).unwrap_or(f64::NAN)
            },
            xt.features().data(),
            step,
        );
        for (&a, &f) in analytic.data().iter().zip(&numeric) {
            report.max_abs_err = report.max_abs_err.max((a - f).abs());
            report.max_coord_rel_err = report.max_coord_rel_err.max(relative_error(a, f));
            report.checked_coords += 1;
        }
        report.max_rel_err = report
            .max_rel_err
            .max(normwise_relative_error(analytic.data(), &numeric));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_patches, sample_gaussian_features};
    use crate::tensor::ImageGrid;

    fn instance(n: usize, m: usize, d: usize, seed: u64) -> (FeatureSet, FeatureSet) {
        (
            sample_gaussian_features(n, d, 0.0, 1.0, seed).unwrap(),
            sample_gaussian_features(m, d, 0.3, 1.0, seed + 1000).unwrap(),
        )
    }

    #[test]
    fn finite_diff_basics() {
        let g = finite_diff_grad(|p| p[0] * p[0], &[3.0], 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 5.0], 1e-5);
        assert!(g.iter().all(|v| v.abs() < 1e-10));
        let g = finite_diff_grad(|p| p.iter().sum(), &[0.3, 7.0, -1.5, 2.0], 1e-5);
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-9), "{g:?}");
    }

    #[test]
    fn matches_finite_differences_all_kinds() {
        for kind in [
            DistanceKind::SquaredEuclidean,
            DistanceKind::CosineTargetCentered,
            DistanceKind::Absolute,
        ] {
            let (x, y) = instance(8, 8, 5, 11);
            let p = CxParams::new(0.5, 1e-5, kind).unwrap();
            let r = grad_check(&x, &y, &p, 1e-5, 5, 3).unwrap();
            assert!(r.max_rel_err <= 1e-4, "{kind:?}: {r:?}");
            assert_eq!(r.checked_coords, 5 * 40);
        }
    }

    #[test]
    fn unequal_sizes_gradient() {
        let (x, y) = instance(6, 9, 3, 5);
        let p = CxParams::new(0.1, 1e-5, DistanceKind::SquaredEuclidean).unwrap();
        let r = grad_check(&x, &y, &p, 1e-5, 3, 1).unwrap();
        assert!(r.max_rel_err <= 1e-4, "{r:?}");
    }

    #[test]
    fn large_step_degrades_but_reports() {
        let (x, y) = instance(8, 8, 5, 2);
        let p = CxParams::new(0.5, 1e-5, DistanceKind::SquaredEuclidean).unwrap();
        let fine = grad_check(&x, &y, &p, 1e-5, 3, 9).unwrap();
        let coarse = grad_check(&x, &y, &p, 1e-1, 3, 9).unwrap();
        assert!(coarse.max_abs_err > fine.max_abs_err);
    }

    #[test]
    fn normwise_error_uses_gradient_scale() {
        let a = [1.0, 1e-7, -0.5];
        let b = [1.0, 1.1e-7, -0.5];
        assert!((normwise_relative_error(&a, &b) - 1e-8).abs() < 1e-20);
        assert!((relative_error(a[1], b[1]) - 1.0 / 11.0).abs() < 1e-12);
        assert_eq!(normwise_relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn saturated_columns_are_not_ties() {
        // two sources saturate on the same target, a third sits at 50/50
        let cx = Matrix::from_rows(&[
            [1.0 - 3e-11, 3e-11],
            [1.0 - 6e-11, 6e-11],
            [0.5, 0.5],
        ])
        .unwrap();
        let dist = Matrix::from_rows(&[[1.0, 2.0], [1.0, 3.0], [2.0, 5.0]]).unwrap();
        let stages = StageMatrices {
            dist: dist.clone(),
            dist_norm: dist.clone(),
            sim: dist,
            cx,
        };
        let x = FeatureSet::from_rows(&[[0.0], [1.0], [2.0]]).unwrap();
        let y = FeatureSet::from_rows(&[[0.5], [3.0]]).unwrap();
        let m = tie_margin(&x, &y, &stages, DistanceKind::SquaredEuclidean);
        // log-odds of the saturated pair differ by ln 2
        assert!((m - 2f64.ln()).abs() < 1e-9, "{m}");
    }

    #[test]
    fn grad_check_is_deterministic_and_validates() {
        let (x, y) = instance(8, 8, 5, 4);
        let p = CxParams::default();
        assert_eq!(
            grad_check(&x, &y, &p, 1e-5, 1, 42).unwrap(),
            grad_check(&x, &y, &p, 1e-5, 1, 42).unwrap()
        );
        assert!(grad_check(&x, &y, &p, 1e-5, 0, 42).is_err());
        assert!(grad_check(&x, &y, &p, 0.0, 1, 42).is_err());
    }

    #[test]
    fn scaling_features_scales_gradient_inversely() {
        let (x, y) = instance(8, 8, 5, 21);
        let p = CxParams::new(0.5, 0.0, DistanceKind::SquaredEuclidean).unwrap();
        let c = 10.0;
        let (l1, g1) = loss_and_grad(&x, &y, &p).unwrap();
        let (l2, g2) = loss_and_grad(&x.scaled(c), &y.scaled(c), &p).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.data().iter().zip(g2.data()) {
            assert!((a / c - b).abs() <= 1e-12 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn cached_stages_match_fresh_bitwise() {
        let (x, y) = instance(10, 7, 4, 8);
        let p = CxParams::default();
        let (_, stages) = contextual_similarity(&x, &y, &p).unwrap();
        let cached = loss_grad_from_stages(&x, &y, &p, &stages).unwrap();
        let fresh = loss_grad_features(&x, &y, &p).unwrap();
        assert_eq!(
            cached.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            fresh.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn gradient_is_zero_at_identity() {
        let (x, _) = instance(8, 8, 4, 1);
        let g = loss_grad_features(&x, &x, &CxParams::new(0.5, 1e-5, DistanceKind::SquaredEuclidean).unwrap()).unwrap();
        assert!(g.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn scatter_single_patch_is_reshape() {
        let shape = ImageShape::new(3, 3, 2);
        let spec = PatchSpec::new(3, 1).unwrap();
        let g = Matrix::from_vec(1, 18, (0..18).map(|v| v as f64).collect()).unwrap();
        let out = scatter_patch_gradient(&g, &[(0, 0)], spec, shape).unwrap();
        assert_eq!(out, g.data());
    }

    #[test]
    fn scatter_overlap_sums() {
        let shape = ImageShape::new(1, 3, 1);
        let spec = PatchSpec::new(1, 1).unwrap();
        // 1x2 patches are not square, so use two 1x1 patches on the same pixel
        let g = Matrix::from_vec(2, 1, vec![0.25, 0.5]).unwrap();
        let out = scatter_patch_gradient(&g, &[(0, 1), (0, 1)], spec, shape).unwrap();
        assert_eq!(out, vec![0.0, 0.75, 0.0]);

        let shape = ImageShape::new(3, 3, 1);
        let spec = PatchSpec::new(2, 1).unwrap();
        let g = Matrix::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0]).unwrap();
        let out = scatter_patch_gradient(&g, &[(0, 0), (1, 1)], spec, shape).unwrap();
        // pixel (1, 1) is the last entry of patch 0 and the first of patch 1
        assert_eq!(out, vec![1.0, 2.0, 0.0, 3.0, 14.0, 20.0, 0.0, 30.0, 40.0]);
    }

    #[test]
    fn scatter_rejects_out_of_bounds() {
        let shape = ImageShape::new(4, 4, 1);
        let spec = PatchSpec::new(3, 1).unwrap();
        let g = Matrix::zeros(1, 9);
        assert!(matches!(
            scatter_patch_gradient(&g, &[(2, 0)], spec, shape),
            Err(Error::OriginOutOfBounds { .. })
        ));
    }

    #[test]
    fn pixel_gradient_matches_finite_differences() {
        let shape = ImageShape::new(7, 7, 1);
        let spec = PatchSpec::new(5, 2).unwrap();
        let mut rng = seeded_rng(17, 0);
        let src: Vec<f64> = (0..49).map(|_| rng.random::<f64>()).collect();
        let tgt: Vec<f64> = (0..49).map(|_| rng.random::<f64>()).collect();
        let target = extract_patches(&ImageGrid::new(7, 7, 1, tgt).unwrap(), spec).unwrap();
        for kind in [DistanceKind::SquaredEuclidean, DistanceKind::CosineTargetCentered] {
            let p = CxParams::new(0.5, 1e-5, kind).unwrap();
            let (_, analytic) = loss_grad_pixels(shape, &src, &target, spec, &p).unwrap();
            let numeric = finite_diff_grad(
                |px| {
                    let x = extract_patches_raw(shape, px, spec).unwrap();
                    cx::contextual_loss(&x, &target, &p).unwrap()
                },
                &src,
                1e-5,
            );
            for (a, f) in analytic.iter().zip(&numeric) {
                assert!(relative_error(*a, *f) <= 1e-4, "{kind:?}: {a} vs {f}");
            }
        }
    }

    #[test]
    fn scatter_is_adjoint_of_extraction() {
        let mut rng = seeded_rng(5, 1);
        for trial in 0..20 {
            let shape = ImageShape::new(9 + trial % 3, 8 + trial % 4, if trial % 2 == 0 { 3 } else { 1 });
            let spec = PatchSpec::new(3, 2).unwrap();
            let v: Vec<f64> = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
            let fv = extract_patches_raw(shape, &v, spec).unwrap();
            let u: Vec<f64> = (0..fv.len() * fv.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let u = Matrix::from_vec(fv.len(), fv.dim(), u).unwrap();
            let lhs = dot(fv.features().data(), u.data());
            let su = scatter_patch_gradient(&u, fv.origins().unwrap(), spec, shape).unwrap();
            let rhs = dot(&v, &su);
            assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
        }
    }
}
