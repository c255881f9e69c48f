//! Two desk-scale studies of the contextual loss.
//!
//! [`expectation_grid`] estimates `E[measure](mu, sigma)` for 1-D point sets
//! `X ~ N(0, 1)` and `Y ~ N(mu, sigma^2)`. 1-D features are compared with the
//! squared Euclidean distance: after centering on the target mean a 1-D
//! cosine distance only takes the values 0 and 2.
//!
//! [`toy_denoise`] cleans a noisy crop by gradient descent against clean
//! crops of the same image taken at random offsets, and scores each loss by
//! PSNR and by how much high-frequency energy survives.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cx::{binarized_from_distances, contextual_similarity_from_distances, pairwise_distances};
use crate::cx::{CxParams, DistanceKind};
use crate::error::{Error, Result};
use crate::features::{sample_gaussian_with, seeded_rng};
use crate::optimize::{reconstruct, LossKind, OptimizeConfig};
use crate::tensor::{FeatureSet, ImageGrid, Matrix};

/// Distance kernel used for the 1-D Gaussian study.
pub const GRID_DISTANCE: DistanceKind = DistanceKind::SquaredEuclidean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measure {
    /// Contextual similarity.
    Cx,
    /// Fraction of targets that are a nearest neighbour of some source point.
    Dis,
    /// `(1/N) sum_j min_i |x_i - y_j|^2`.
    L2,
}

impl Measure {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::Cx => "cx",
            Measure::Dis => "dis",
            Measure::L2 => "l2",
        }
    }

    /// Whether larger values mean more similar sets.
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, Measure::L2)
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cx" => Ok(Measure::Cx),
            "dis" => Ok(Measure::Dis),
            "l2" => Ok(Measure::L2),
            other => Err(Error::InvalidParam(format!(
                "unknown measure '{other}' (expected cx, dis or l2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub mu_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
}

impl GridSpec {
    /// Integer steps from `min` to `max` inclusive on both axes.
    pub fn integer_range(mu: (u32, u32), sigma: (u32, u32)) -> Self {
        Self {
            mu_values: (mu.0..=mu.1).map(f64::from).collect(),
            sigma_values: (sigma.0..=sigma.1).map(f64::from).collect(),
        }
    }
}

impl Default for GridSpec {
    /// `mu, sigma` in `{0, 1, ..., 10}`.
    fn default() -> Self {
        Self::integer_range((0, 10), (0, 10))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
}

/// Monte-Carlo estimates on a `mu x sigma` grid; `cells` is row-major with
/// `mu` as the row index.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub measure: Measure,
    pub mu_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub cells: Vec<Cell>,
}

impl ExperimentGrid {
    pub fn cell(&self, mu_idx: usize, sigma_idx: usize) -> &Cell {
        &self.cells[mu_idx * self.sigma_values.len() + sigma_idx]
    }

    pub fn position(&self, mu: f64, sigma: f64) -> Option<(usize, usize)> {
        let a = self.mu_values.iter().position(|&v| v == mu)?;
        let b = self.sigma_values.iter().position(|&v| v == sigma)?;
        Some((a, b))
    }

    pub fn mean_at(&self, mu: f64, sigma: f64) -> Option<f64> {
        self.position(mu, sigma).map(|(a, b)| self.cell(a, b).mean)
    }

    /// `(mu, sigma)` of the most similar cell; the first one wins ties.
    pub fn best_cell(&self) -> (f64, f64) {
        let sign = if self.measure.higher_is_better() { 1.0 } else { -1.0 };
        let mut best = 0;
        for (k, c) in self.cells.iter().enumerate() {
            if sign * c.mean > sign * self.cells[best].mean {
                best = k;
            }
        }
        let s = self.sigma_values.len();
        (self.mu_values[best / s], self.sigma_values[best % s])
    }

    /// Cell means mapped affinely to `[0, 1]`, with 1 at the most similar cell
    /// and 0 at the least similar one.
    pub fn rescaled_similarity(&self) -> Vec<f64> {
        let lo = self.cells.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
        let hi = self.cells.iter().map(|c| c.mean).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        self.cells
            .iter()
            .map(|c| {
                if span == 0.0 {
                    1.0
                } else if self.measure.higher_is_better() {
                    (c.mean - lo) / span
                } else {
                    (hi - c.mean) / span
                }
            })
            .collect()
    }

    /// Means along the `mu` axis at a fixed `sigma`.
    pub fn means_along_mu(&self, sigma: f64) -> Option<Vec<f64>> {
        let b = self.sigma_values.iter().position(|&v| v == sigma)?;
        Some((0..self.mu_values.len()).map(|a| self.cell(a, b).mean).collect())
    }

    /// CSV with header `mu,sigma,mean,stderr,trials`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("mu,sigma,mean,stderr,trials\n");
        for (a, mu) in self.mu_values.iter().enumerate() {
            for (b, sigma) in self.sigma_values.iter().enumerate() {
                let c = self.cell(a, b);
                writeln!(out, "{mu},{sigma},{},{},{}", c.mean, c.stderr, c.trials).unwrap();
            }
        }
        out
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

/// `(1/M) sum_j min_i |x_i - y_j|^2`.
pub fn assigned_l2(dist: &Matrix) -> f64 {
    let mut total = 0.0;
    for j in 0..dist.cols() {
        total += (0..dist.rows()).map(|i| dist.get(i, j)).fold(f64::INFINITY, f64::min);
    }
    total / dist.cols() as f64
}

fn evaluate(measure: Measure, x: &FeatureSet, y: &FeatureSet, h: f64) -> Result<f64> {
    let dist = pairwise_distances(x, y, GRID_DISTANCE)?;
    Ok(match measure {
        Measure::Cx => {
            let params = CxParams::new(h, 1e-5, GRID_DISTANCE)?;
            contextual_similarity_from_distances(dist, &params)?.0
        }
        Measure::Dis => binarized_from_distances(&dist),
        Measure::L2 => assigned_l2(&dist),
    })
}

/// Monte-Carlo grid of `E[measure]` over `(mu, sigma)`. Cell `k` (row-major)
/// draws from its own generator stream `(seed, k)`, so cells can run on any
/// number of workers with identical results.
pub fn expectation_grid(
    measure: Measure,
    n_points: usize,
    grid: &GridSpec,
    h: f64,
    trials: usize,
    seed: u64,
) -> Result<ExperimentGrid> {
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    if n_points < 2 {
        return Err(Error::InvalidParam("n_points must be >= 2".into()));
    }
    if grid.mu_values.is_empty() || grid.sigma_values.is_empty() {
        return Err(Error::InvalidParam("grid axes must be nonempty".into()));
    }
    if grid.sigma_values.iter().any(|&s| !(s >= 0.0)) {
        return Err(Error::InvalidParam("sigma values must be >= 0".into()));
    }
    let s = grid.sigma_values.len();
    let coords: Vec<(f64, f64)> = grid
        .mu_values
        .iter()
        .flat_map(|&mu| grid.sigma_values.iter().map(move |&sigma| (mu, sigma)))
        .collect();
    let cells = coords
        .par_iter()
        .enumerate()
        .map(|(k, &(mu, sigma))| {
            let mut rng = seeded_rng(seed, k as u64);
            let mut values = Vec::with_capacity(trials);
            for _ in 0..trials {
                let x = sample_gaussian_with(&mut rng, n_points, 1, 0.0, 1.0)?;
                let y = sample_gaussian_with(&mut rng, n_points, 1, mu, sigma)?;
                values.push(evaluate(measure, &x, &y, h)?);
            }
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let stderr = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            Ok(Cell {
                mean,
                stderr,
                trials,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert_eq!(cells.len(), grid.mu_values.len() * s);
    Ok(ExperimentGrid {
        measure,
        mu_values: grid.mu_values.clone(),
        sigma_values: grid.sigma_values.clone(),
        cells,
    })
}

/// `10 log10(1 / MSE)` for images in `[0, 1]`. The MSE is floored at
/// `1e-10`, so identical images score 100 dB instead of infinity.
pub fn psnr(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / a.data().len() as f64;
    Ok(10.0 * (1.0 / mse.max(1e-10)).log10())
}

/// Per-channel 3x3 box blur with edge replication.
pub fn box_blur3(img: &ImageGrid) -> ImageGrid {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut data = Vec::with_capacity(h * w * c);
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut sum = 0.0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                        let cc = (col as isize + dc).clamp(0, w as isize - 1) as usize;
                        sum += img.get(rr, cc, ch);
                    }
                }
                data.push(sum / 9.0);
            }
        }
    }
    ImageGrid::new(h, w, c, data).expect("same shape as input")
}

/// Sum of squares of `img - box_blur3(img)`.
pub fn high_freq_energy(img: &ImageGrid) -> f64 {
    let blurred = box_blur3(img);
    img.data()
        .iter()
        .zip(blurred.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// High-frequency energy of `img` relative to that of `reference`.
pub fn high_freq_ratio(img: &ImageGrid, reference: &ImageGrid) -> f64 {
    high_freq_energy(img) / high_freq_energy(reference).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseConfig {
    pub crop: usize,
    pub n_targets: usize,
    pub max_shift: usize,
    pub noise_sigma: f64,
    /// One optimization run per entry; the loss is taken from `loss_kind`.
    pub runs: Vec<OptimizeConfig>,
    pub seed: u64,
}

impl DenoiseConfig {
    /// 64-pixel crop, 8 targets shifted by up to 10 pixels, noise 0.1, and
    /// one 400-iteration run for each of `losses` with its default step.
    pub fn new(losses: &[LossKind], seed: u64) -> Self {
        Self {
            crop: 64,
            n_targets: 8,
            max_shift: 10,
            noise_sigma: 0.1,
            runs: losses.iter().map(|&l| denoise_run_config(l)).collect(),
            seed,
        }
    }
}

/// Optimizer settings used by the denoising study for `loss`.
pub fn denoise_run_config(loss: LossKind) -> OptimizeConfig {
    let mut cfg = OptimizeConfig::new(loss);
    if loss == LossKind::Cx {
        cfg.cx_params = denoise_cx_params();
        cfg.step_size = DENOISE_CX_STEP;
    }
    cfg
}

/// Contextual parameters for raw RGB patches.
pub fn denoise_cx_params() -> CxParams {
    CxParams {
        h: 0.5,
        epsilon: 1e-5,
        distance: DistanceKind::CosineTargetCentered,
    }
}

/// Step for the contextual run of the toy denoiser. Raw-patch gradients are
/// small, so the generic default barely moves the image in 400 iterations.
pub const DENOISE_CX_STEP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRun {
    pub loss: LossKind,
    pub image: ImageGrid,
    pub psnr: f64,
    pub hf_ratio: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult {
    pub ground_truth: ImageGrid,
    pub noisy: ImageGrid,
    pub targets: Vec<ImageGrid>,
    pub source_origin: (usize, usize),
    pub shifts: Vec<(isize, isize)>,
    pub input_psnr: f64,
    pub input_hf_ratio: f64,
    pub runs: Vec<DenoiseRun>,
}

impl DenoiseResult {
    pub fn run(&self, loss: LossKind) -> Option<&DenoiseRun> {
        self.runs.iter().find(|r| r.loss == loss)
    }

    /// Flat `key=value` report, one entry per line.
    pub fn report(&self, config: &DenoiseConfig) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        kv("seed", config.seed.to_string());
        kv("crop", config.crop.to_string());
        kv("targets", config.n_targets.to_string());
        kv("max_shift", config.max_shift.to_string());
        kv("noise_sigma", format!("{:.6e}", config.noise_sigma));
        kv(
            "source_origin",
            format!("{},{}", self.source_origin.0, self.source_origin.1),
        );
        let shifts: Vec<String> = self.shifts.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        kv("shifts", shifts.join(","));
        kv("psnr_input", format!("{:.6}", self.input_psnr));
        kv("hf_ratio_input", format!("{:.6e}", self.input_hf_ratio));
        for (run, cfg) in self.runs.iter().zip(&config.runs) {
            let name = run.loss.name();
            kv(&format!("iters_{name}"), cfg.iters.to_string());
            kv(&format!("step_{name}"), format!("{:.6e}", cfg.step_size));
            kv(&format!("psnr_{name}"), format!("{:.6}", run.psnr));
            kv(&format!("hf_ratio_{name}"), format!("{:.6e}", run.hf_ratio));
            kv(&format!("final_loss_{name}"), format!("{:.6e}", run.final_loss));
        }
        out
    }
}

/// Builds a noisy source crop and `n_targets` clean crops at independent
/// integer offsets in `[-max_shift, max_shift]^2`, then runs every
/// configured optimization from the noisy crop. Results are scored against
/// the clean source crop, which never enters the optimization.
pub fn toy_denoise(clean: &ImageGrid, config: &DenoiseConfig) -> Result<DenoiseResult> {
    let (crop, shift) = (config.crop, config.max_shift);
    let need = crop + 2 * shift;
    if clean.height() < need || clean.width() < need {
        return Err(Error::Shape(format!(
            "image {}x{} too small for crop {crop} with shift margin {shift} (needs {need}x{need})",
            clean.height(),
            clean.width()
        )));
    }
    if config.n_targets == 0 {
        return Err(Error::InvalidParam("n_targets must be >= 1".into()));
    }
    if !(config.noise_sigma >= 0.0) {
        return Err(Error::InvalidParam("noise sigma must be >= 0".into()));
    }
    let mut rng = seeded_rng(config.seed, 0);
    let top = rng.random_range(shift..=clean.height() - crop - shift);
    let left = rng.random_range(shift..=clean.width() - crop - shift);
    let ground_truth = clean.crop(top, left, crop, crop)?;
    let noisy_data: Vec<f64> = ground_truth
        .data()
        .iter()
        .map(|v| v + config.noise_sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let noisy = ImageGrid::new(crop, crop, clean.channels(), noisy_data)?;
    let s = shift as i64;
    let mut shifts = Vec::with_capacity(config.n_targets);
    let mut targets = Vec::with_capacity(config.n_targets);
    for _ in 0..config.n_targets {
        let dy = rng.random_range(-s..=s) as isize;
        let dx = rng.random_range(-s..=s) as isize;
        shifts.push((dy, dx));
        let t = (top as isize + dy) as usize;
        let l = (left as isize + dx) as usize;
        targets.push(clean.crop(t, l, crop, crop)?);
    }

    let mut runs = Vec::with_capacity(config.runs.len());
    for cfg in &config.runs {
        let (image, trace) = reconstruct(&noisy, &targets, cfg)?;
        runs.push(DenoiseRun {
            loss: cfg.loss_kind,
            psnr: psnr(&image, &ground_truth)?,
            hf_ratio: high_freq_ratio(&image, &ground_truth),
            final_loss: trace.records.last().map_or(f64::NAN, |r| r.loss),
            image,
        });
    }
    Ok(DenoiseResult {
        input_psnr: psnr(&noisy, &ground_truth)?,
        input_hf_ratio: high_freq_ratio(&noisy, &ground_truth),
        ground_truth,
        noisy,
        targets,
        source_origin: (top, left),
        shifts,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid(measure: Measure, trials: usize, seed: u64) -> ExperimentGrid {
        let spec = GridSpec::integer_range((0, 3), (0, 2));
        expectation_grid(measure, 20, &spec, 0.1, trials, seed).unwrap()
    }

    #[test]
    fn spearman_reference_values() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[9.0, 4.0, 1.0]) + 1.0).abs() < 1e-15);
        // ranks (1,2,3,4,5) vs (2,1,4,3,5): 1 - 6*4/(5*24) = 0.8
        assert!((spearman(&[1., 2., 3., 4., 5.], &[2., 1., 4., 3., 5.]) - 0.8).abs() < 1e-12);
        // ties take average ranks: (1, 2.5, 2.5, 4)
        assert_eq!(ranks(&[0.0, 5.0, 5.0, 9.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn assigned_l2_hand_computed() {
        // x = {0, 2}, y = {1, 5}: min sq distances 1 and 9
        let x = FeatureSet::from_rows(&[[0.0], [2.0]]).unwrap();
        let y = FeatureSet::from_rows(&[[1.0], [5.0]]).unwrap();
        let d = pairwise_distances(&x, &y, GRID_DISTANCE).unwrap();
        assert_eq!(assigned_l2(&d), 5.0);
    }

    #[test]
    fn grid_shape_range_and_determinism() {
        let g = small_grid(Measure::Cx, 5, 3);
        assert_eq!(g.cells.len(), 12);
        assert!(g.cells.iter().all(|c| c.mean > 0.0 && c.mean <= 1.0 && c.trials == 5));
        assert_eq!(g, small_grid(Measure::Cx, 5, 3));
        assert_eq!(small_grid(Measure::Cx, 1, 7), small_grid(Measure::Cx, 1, 7));
        assert!(small_grid(Measure::Cx, 1, 7).cells.iter().all(|c| c.stderr == 0.0));
    }

    #[test]
    fn grid_independent_of_worker_count() {
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| small_grid(Measure::Dis, 4, 9));
        let b = four.install(|| small_grid(Measure::Dis, 4, 9));
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn sigma_zero_cx_is_one_over_n() {
        // all targets coincide, so every row of CX is uniform
        let g = expectation_grid(Measure::Cx, 20, &GridSpec::integer_range((2, 2), (0, 0)), 0.1, 3, 1).unwrap();
        assert!((g.cells[0].mean - 1.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let g = small_grid(Measure::L2, 2, 1);
        let csv = g.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "mu,sigma,mean,stderr,trials");
        assert_eq!(lines.len(), 13);
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[12].starts_with("3,2,"));
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn best_cell_and_rescaling() {
        let g = ExperimentGrid {
            measure: Measure::L2,
            mu_values: vec![0.0, 1.0],
            sigma_values: vec![1.0],
            cells: vec![
                Cell { mean: 2.0, stderr: 0.0, trials: 1 },
                Cell { mean: 6.0, stderr: 0.0, trials: 1 },
            ],
        };
        assert_eq!(g.best_cell(), (0.0, 1.0));
        assert_eq!(g.rescaled_similarity(), vec![1.0, 0.0]);
        assert_eq!(g.means_along_mu(1.0), Some(vec![2.0, 6.0]));
        assert_eq!(g.mean_at(1.0, 1.0), Some(6.0));
    }

    #[test]
    fn grid_rejects_bad_args() {
        let spec = GridSpec::default();
        assert!(expectation_grid(Measure::Cx, 10, &spec, 0.1, 0, 1).is_err());
        assert!(expectation_grid(Measure::Cx, 1, &spec, 0.1, 1, 1).is_err());
    }

    #[test]
    fn psnr_and_high_frequency() {
        let a = ImageGrid::filled(4, 4, 1, 0.5).unwrap();
        let b = ImageGrid::filled(4, 4, 1, 0.6).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        assert_eq!(high_freq_energy(&a), 0.0);
        let checker: Vec<f64> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect();
        let c = ImageGrid::new(4, 4, 1, checker).unwrap();
        assert!(high_freq_energy(&box_blur3(&c)) < high_freq_energy(&c));
        assert!((high_freq_ratio(&c, &c) - 1.0).abs() < 1e-15);
    }

    fn test_scene(n: usize) -> ImageGrid {
        let mut data = Vec::with_capacity(n * n * 3);
        for r in 0..n {
            for c in 0..n {
                let v = (((r / 3) + (c / 4)) % 2) as f64;
                data.extend_from_slice(&[v, 0.5 * v + 0.25, (r as f64) / n as f64]);
            }
        }
        ImageGrid::new(n, n, 3, data).unwrap()
    }

    #[test]
    fn denoise_clean_aligned_l1_keeps_input() {
        let img = test_scene(24);
        let mut cfg = DenoiseConfig::new(&[LossKind::L1], 5);
        cfg.crop = 16;
        cfg.n_targets = 1;
        cfg.max_shift = 0;
        cfg.noise_sigma = 0.0;
        cfg.runs[0].iters = 20;
        let res = toy_denoise(&img, &cfg).unwrap();
        let run = res.run(LossKind::L1).unwrap();
        assert!(run.psnr >= res.input_psnr);
        assert_eq!(res.shifts, vec![(0, 0)]);
    }

    #[test]
    fn denoise_is_deterministic() {
        let img = test_scene(30);
        let mut cfg = DenoiseConfig::new(&[LossKind::L1, LossKind::Cx], 11);
        cfg.crop = 14;
        cfg.max_shift = 3;
        cfg.n_targets = 3;
        cfg.runs.iter_mut().for_each(|r| r.iters = 6);
        let a = toy_denoise(&img, &cfg).unwrap();
        let b = toy_denoise(&img, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.report(&cfg), b.report(&cfg));
        assert!(a.shifts.iter().all(|&(dy, dx)| dy.abs() <= 3 && dx.abs() <= 3));
        assert!(a.report(&cfg).contains("psnr_cx="));
    }

    #[test]
    fn denoise_geometry_checked() {
        let img = test_scene(20);
        let cfg = DenoiseConfig::new(&[LossKind::L1], 1);
        assert!(toy_denoise(&img, &cfg).is_err());
    }
}
