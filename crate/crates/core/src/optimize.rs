//! Direct gradient descent on pixel values against one or more targets.
//!
//! Each step picks a target `t_k`, evaluates `L(s, t_k)` and its gradient,
//! and updates `s <- clamp(s - step * grad, 0, 1)`. The loop is sequential;
//! the contextual loss evaluation itself is row-parallel.

use rand::Rng;

use crate::baselines::{l1_grad, l1_loss, l2_grad, l2_loss};
use crate::cx::CxParams;
use crate::error::{Error, Result};
use crate::features::{extract_patches, seeded_rng, PatchSpec};
use crate::grad::loss_grad_pixels;
use crate::tensor::{clamp_unit, FeatureSet, ImageGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Cx,
    L1,
    L2,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Cx => "cx",
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        }
    }

    /// Default constant step for plain gradient descent with this loss.
    pub fn default_step(&self) -> f64 {
        match self {
            LossKind::Cx => 0.05,
            // the L1 subgradient is +-1 per pixel
            LossKind::L1 => 0.01,
            // the L2 gradient has unit norm over the whole image
            LossKind::L2 => 0.5,
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cx" => Ok(LossKind::Cx),
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            other => Err(Error::InvalidParam(format!(
                "unknown loss '{other}' (expected cx, l1 or l2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSchedule {
    /// `k = iteration mod K`.
    Cycle,
    /// `k` drawn uniformly from the seeded generator.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub loss_kind: LossKind,
    pub cx_params: CxParams,
    pub patch: PatchSpec,
    pub iters: usize,
    pub step_size: f64,
    pub target_schedule: TargetSchedule,
    pub seed: u64,
    pub log_every: usize,
}

impl OptimizeConfig {
    /// Defaults for `loss_kind`: 5x5 stride-2 patches, default contextual
    /// parameters, 400 cycled iterations, logging every iteration.
    pub fn new(loss_kind: LossKind) -> Self {
        Self {
            loss_kind,
            cx_params: CxParams::default(),
            patch: PatchSpec::default(),
            iters: 400,
            step_size: loss_kind.default_step(),
            target_schedule: TargetSchedule::Cycle,
            seed: 0,
            log_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidParam("iters must be >= 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidParam("step size must be > 0".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParam("log_every must be >= 1".into()));
        }
        self.cx_params.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub target: usize,
    /// Loss before the update of this iteration.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizeTrace {
    pub records: Vec<TraceRecord>,
}

impl OptimizeTrace {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

enum Prepared {
    Patches(Vec<FeatureSet>),
    Pixels,
}

/// Runs `config.iters` gradient steps starting from `source`. Records are
/// kept for every `log_every`-th iteration and for the last one.
pub fn reconstruct(
    source: &ImageGrid,
    targets: &[ImageGrid],
    config: &OptimizeConfig,
) -> Result<(ImageGrid, OptimizeTrace)> {
    config.validate()?;
    if targets.is_empty() {
        return Err(Error::InvalidParam("at least one target is required".into()));
    }
    let shape = source.shape();
    if let Some(t) = targets.iter().find(|t| t.shape() != shape) {
        return Err(Error::Shape(format!(
            "target {:?} differs from source {:?}",
            t.shape(),
            shape
        )));
    }
    let prepared = match config.loss_kind {
        LossKind::Cx => Prepared::Patches(
            targets
                .iter()
                .map(|t| extract_patches(t, config.patch))
                .collect::<Result<_>>()?,
        ),
        LossKind::L1 | LossKind::L2 => Prepared::Pixels,
    };

    let mut rng = seeded_rng(config.seed, 0);
    let mut pixels = source.data().to_vec();
    let mut trace = OptimizeTrace::default();
    for it in 0..config.iters {
        let k = match config.target_schedule {
            TargetSchedule::Cycle => it % targets.len(),
            TargetSchedule::Random => rng.random_range(0..targets.len()),
        };
        let (loss, grad) = match &prepared {
            Prepared::Patches(feats) => {
                loss_grad_pixels(shape, &pixels, &feats[k], config.patch, &config.cx_params)?
            }
            Prepared::Pixels => {
                let t = targets[k].data();
                if config.loss_kind == LossKind::L1 {
                    (l1_loss(&pixels, t)?, l1_grad(&pixels, t)?)
                } else {
                    (l2_loss(&pixels, t)?, l2_grad(&pixels, t)?)
                }
            }
        };
        if !loss.is_finite() {
            return Err(Error::InvalidParam(format!(
                "loss became non-finite at iteration {it}"
            )));
        }
        if it % config.log_every == 0 || it + 1 == config.iters {
            trace.records.push(TraceRecord {
                iteration: it,
                target: k,
                loss,
            });
        }
        for (p, g) in pixels.iter_mut().zip(&grad) {
            *p = clamp_unit(*p - config.step_size * g);
        }
    }
    let image = ImageGrid::new(shape.height, shape.width, shape.channels, pixels)?;
    Ok((image, trace))
}
