//! `cxloss`: compare images or feature files, run the expectation grid and
//! the toy denoiser, check gradients, and convert between PNG and CXT.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use contextual_loss::baselines::{gram_loss, l1_loss, l2_loss};
use contextual_loss::experiments::{
    expectation_grid, toy_denoise, DenoiseConfig, GridSpec, Measure, GRID_DISTANCE,
};
use contextual_loss::features::sample_gaussian_features;
use contextual_loss::grad::grad_check;
use contextual_loss::optimize::LossKind;
use contextual_loss::tensor::io::{decode_png, load_png, load_tensor, save_png, save_tensor, Tensor};
use contextual_loss::{
    binarized_similarity, contextual_similarity, extract_patches, CxParams, DistanceKind,
    FeatureSet, ImageGrid, PatchSpec,
};

const SCENE_PNG: &[u8] = include_bytes!("../../assets/scene128.png");

#[derive(Parser)]
#[command(name = "cxloss", version, about = "Contextual similarity and loss toolkit")]
struct Cli {
    /// Cap on worker threads used inside the computations (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare two PNG images or two CXT tensors.
    Compare(CompareArgs),
    /// Monte-Carlo expectation of a measure over a (mu, sigma) grid of 1-D Gaussians.
    Expectation(ExpectationArgs),
    /// Denoise a crop against shifted clean crops of the same image.
    Denoise(DenoiseArgs),
    /// Compare the analytic contextual-loss gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Convert between PNG and CXT.
    TensorConvert(ConvertArgs),
}

#[derive(Args, Clone)]
struct CxFlags {
    /// Bandwidth of the exponential kernel.
    #[arg(long, default_value_t = 0.5)]
    h: f64,
    /// Offset added to the row minimum before normalizing distances.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Distance kernel: cosine, l2 or l1.
    #[arg(long, default_value = "cosine")]
    distance: String,
}

impl CxFlags {
    fn params(&self) -> Result<CxParams, Failure> {
        let distance: DistanceKind = self.distance.parse().map_err(input)?;
        CxParams::new(self.h, self.epsilon, distance).map_err(input)
    }
}

#[derive(Args, Clone)]
struct PatchFlags {
    /// Patch side length in pixels.
    #[arg(long, default_value_t = 5)]
    patch: usize,
    /// Step between patch origins.
    #[arg(long, default_value_t = 2)]
    stride: usize,
}

impl PatchFlags {
    fn spec(&self) -> Result<PatchSpec, Failure> {
        PatchSpec::new(self.patch, self.stride).map_err(input)
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Source: a .png image or a .cxt tensor.
    a: PathBuf,
    /// Target: a .png image or a .cxt tensor.
    b: PathBuf,
    /// Measure: cx, dis, l1, l2 or gram.
    #[arg(long, default_value = "cx")]
    loss: String,
    #[command(flatten)]
    cx: CxFlags,
    #[command(flatten)]
    patch: PatchFlags,
}

#[derive(Args)]
struct ExpectationArgs {
    /// Measure: cx, dis or l2.
    #[arg(long, default_value = "cx")]
    measure: String,
    /// Bandwidth for the cx measure.
    #[arg(long, default_value_t = 0.1)]
    h: f64,
    /// Points per sampled set.
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    mu_min: u32,
    #[arg(long, default_value_t = 10)]
    mu_max: u32,
    #[arg(long, default_value_t = 0)]
    sigma_min: u32,
    #[arg(long, default_value_t = 10)]
    sigma_max: u32,
    /// CSV output path.
    #[arg(long, default_value = "expectation.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Clean RGB or grayscale image (default: the bundled 128x128 scene).
    #[arg(long)]
    image: Option<PathBuf>,
    /// Comma-separated losses to run: cx, l1, l2.
    #[arg(long, default_value = "cx,l1")]
    losses: String,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 8)]
    targets: usize,
    #[arg(long, default_value_t = 10)]
    max_shift: usize,
    #[arg(long, default_value_t = 64)]
    crop: usize,
    #[arg(long, default_value_t = 400)]
    iters: usize,
    /// Step size for every run (default: per-loss).
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    cx: CxFlags,
    #[command(flatten)]
    patch: PatchFlags,
    /// Output directory for the images and report.
    #[arg(long, default_value = "denoise_out")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Source features (CXT); random Gaussian features when omitted.
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    /// Target features (CXT).
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    /// Number of random source features.
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Number of random target features.
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Dimension of the random features.
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    cx: CxFlags,
}

#[derive(Args)]
struct ConvertArgs {
    input: PathBuf,
    output: PathBuf,
}

/// Why a command stopped, mapped to the process exit status.
enum Failure {
    /// Bad flags, unreadable files, incompatible inputs.
    Input(String),
    /// The computation ran but a check did not pass.
    Check(String),
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

/// Fixed-point with at least six significant digits, scientific for very
/// small or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() {
        format!("{v:.6}")
    } else if !(1e-4..1e15).contains(&a) {
        format!("{v:.6e}")
    } else {
        let exp = a.log10().floor() as i32;
        format!("{v:.*}", (5 - exp).max(6) as usize)
    }
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(out, "{key}={value}").unwrap();
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

enum Operand {
    Image(ImageGrid),
    Tensor(Tensor),
}

impl Operand {
    fn load(path: &Path) -> Result<Self, Failure> {
        if is_png(path) {
            load_png(path).map(Operand::Image).map_err(input)
        } else {
            load_tensor(path).map(Operand::Tensor).map_err(input)
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Operand::Image(img) => img.data(),
            Operand::Tensor(t) => t.payload(),
        }
    }

    fn features(&self, spec: PatchSpec) -> Result<FeatureSet, Failure> {
        match self {
            Operand::Image(img) => extract_patches(img, spec).map_err(input),
            Operand::Tensor(t) => Ok(t.to_feature_set()),
        }
    }
}

fn compare(args: &CompareArgs) -> Result<String, Failure> {
    let params = args.cx.params()?;
    let spec = args.patch.spec()?;
    let a = Operand::load(&args.a)?;
    let b = Operand::load(&args.b)?;
    let mut out = String::new();
    match args.loss.as_str() {
        "cx" | "dis" | "gram" => {
            let x = a.features(spec)?;
            let y = b.features(spec)?;
            if x.dim() != y.dim() {
                return Err(input(format!(
                    "dimension mismatch: a has D={}, b has D={}",
                    x.dim(),
                    y.dim()
                )));
            }
            kv(&mut out, "measure", &args.loss);
            match args.loss.as_str() {
                "cx" => {
                    let (value, _) = contextual_similarity(&x, &y, &params).map_err(input)?;
                    kv(&mut out, "value", num(value));
                    kv(&mut out, "loss", num(0.0 - value.ln()));
                }
                "dis" => {
                    let value = binarized_similarity(&x, &y, params.distance).map_err(input)?;
                    kv(&mut out, "value", num(value));
                }
                _ => kv(&mut out, "value", num(gram_loss(&x, &y).map_err(input)?)),
            }
            kv(&mut out, "n", x.len());
            kv(&mut out, "m", y.len());
            kv(&mut out, "d", x.dim());
            if args.loss != "gram" {
                if args.loss == "cx" {
                    kv(&mut out, "h", num(params.h));
                    kv(&mut out, "epsilon", num(params.epsilon));
                }
                kv(&mut out, "distance", params.distance.name());
            }
        }
        "l1" | "l2" => {
            let (p, q) = (a.values(), b.values());
            let value = if args.loss == "l1" { l1_loss(p, q) } else { l2_loss(p, q) }
                .map_err(input)?;
            kv(&mut out, "measure", &args.loss);
            kv(&mut out, "value", num(value));
            kv(&mut out, "len", p.len());
        }
        other => {
            return Err(input(format!(
                "unknown loss '{other}' (expected cx, dis, l1, l2 or gram)"
            )))
        }
    }
    Ok(out)
}

fn expectation(args: &ExpectationArgs) -> Result<String, Failure> {
    let measure: Measure = args.measure.parse().map_err(input)?;
    if !(args.h > 0.0) {
        return Err(input("h must be > 0"));
    }
    if args.mu_min > args.mu_max || args.sigma_min > args.sigma_max {
        return Err(input("grid ranges must satisfy min <= max"));
    }
    let spec = GridSpec::integer_range((args.mu_min, args.mu_max), (args.sigma_min, args.sigma_max));
    let grid = expectation_grid(measure, args.points, &spec, args.h, args.trials, args.seed)
        .map_err(input)?;
    std::fs::write(&args.out, grid.to_csv())
        .map_err(|e| input(format!("cannot write {}: {e}", args.out.display())))?;
    let (mu, sigma) = grid.best_cell();
    let best = grid.mean_at(mu, sigma).expect("best cell lies on the grid");
    let mut out = String::new();
    kv(&mut out, "measure", measure.name());
    kv(&mut out, "distance", GRID_DISTANCE.name());
    if measure == Measure::Cx {
        kv(&mut out, "h", num(args.h));
    }
    kv(&mut out, "points", args.points);
    kv(&mut out, "trials", args.trials);
    kv(&mut out, "seed", args.seed);
    kv(&mut out, "cells", grid.cells.len());
    kv(&mut out, "argmax_mu", mu);
    kv(&mut out, "argmax_sigma", sigma);
    kv(&mut out, "argmax_mean", num(best));
    kv(&mut out, "csv", args.out.display());
    Ok(out)
}

fn denoise(args: &DenoiseArgs) -> Result<String, Failure> {
    let params = args.cx.params()?;
    let spec = args.patch.spec()?;
    let losses = args
        .losses
        .split(',')
        .map(|s| s.trim().parse::<LossKind>().map_err(input))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(step) = args.step {
        if !(step > 0.0) {
            return Err(input("step must be > 0"));
        }
    }
    let clean = match &args.image {
        Some(path) => load_png(path),
        None => decode_png(SCENE_PNG),
    }
    .map_err(input)?;

    let mut config = DenoiseConfig::new(&losses, args.seed);
    config.crop = args.crop;
    config.n_targets = args.targets;
    config.max_shift = args.max_shift;
    config.noise_sigma = args.noise;
    for run in &mut config.runs {
        run.iters = args.iters;
        run.patch = spec;
        run.cx_params = params;
        if let Some(step) = args.step {
            run.step_size = step;
        }
    }
    let result = toy_denoise(&clean, &config).map_err(input)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| input(format!("cannot create {}: {e}", args.out.display())))?;
    save_png(&result.noisy, args.out.join("input.png")).map_err(input)?;
    save_png(&result.ground_truth, args.out.join("ground_truth.png")).map_err(input)?;
    for run in &result.runs {
        save_png(&run.image, args.out.join(format!("result_{}.png", run.loss.name()))).map_err(input)?;
    }
    let report = result.report(&config);
    std::fs::write(args.out.join("report.txt"), &report)
        .map_err(|e| input(format!("cannot write report: {e}")))?;
    Ok(report)
}

fn gradcheck(args: &GradcheckArgs) -> Result<String, Failure> {
    let params = args.cx.params()?;
    if args.trials == 0 {
        return Err(input("trials must be >= 1"));
    }
    let (x, y) = match (&args.x, &args.y) {
        (Some(px), Some(py)) => (
            load_tensor(px).map_err(input)?.to_feature_set(),
            load_tensor(py).map_err(input)?.to_feature_set(),
        ),
        _ => (
            sample_gaussian_features(args.n, args.dim, 0.0, 1.0, args.seed).map_err(input)?,
            sample_gaussian_features(args.m, args.dim, 0.5, 1.0, args.seed.wrapping_add(1))
                .map_err(input)?,
        ),
    };
    let report = grad_check(&x, &y, &params, args.step, args.trials, args.seed).map_err(input)?;
    let mut out = String::new();
    kv(&mut out, "n", x.len());
    kv(&mut out, "m", y.len());
    kv(&mut out, "d", x.dim());
    kv(&mut out, "h", num(params.h));
    kv(&mut out, "epsilon", num(params.epsilon));
    kv(&mut out, "distance", params.distance.name());
    kv(&mut out, "step", num(args.step));
    kv(&mut out, "trials", report.trials);
    kv(&mut out, "skipped", report.skipped);
    kv(&mut out, "checked_coords", report.checked_coords);
    kv(&mut out, "tie_margin", num(report.tie_margin));
    kv(&mut out, "max_abs_err", num(report.max_abs_err));
    kv(&mut out, "max_rel_err", num(report.max_rel_err));
    kv(&mut out, "max_coord_rel_err", num(report.max_coord_rel_err));
    kv(&mut out, "threshold", num(args.threshold));
    let pass = report.checked_coords > 0 && report.max_rel_err <= args.threshold;
    kv(&mut out, "pass", pass);
    if pass {
        Ok(out)
    } else {
        print!("{out}");
        Err(Failure::Check(format!(
            "max_rel_err {} exceeds threshold {}",
            num(report.max_rel_err),
            num(args.threshold)
        )))
    }
}

fn convert(args: &ConvertArgs) -> Result<String, Failure> {
    let mut out = String::new();
    match (is_png(&args.input), is_png(&args.output)) {
        (true, false) => {
            let img = load_png(&args.input).map_err(input)?;
            let tensor = Tensor::Image(img);
            save_tensor(&tensor, &args.output).map_err(input)?;
            kv(&mut out, "dims", format_dims(&tensor.dims()));
        }
        (false, true) => {
            let tensor = load_tensor(&args.input).map_err(input)?;
            let Tensor::Image(img) = &tensor else {
                return Err(input(format!(
                    "tensor with dims {} is not an image (needs HxWx1 or HxWx3 with values in [0,1])",
                    format_dims(&tensor.dims())
                )));
            };
            save_png(img, &args.output).map_err(input)?;
            kv(&mut out, "dims", format_dims(&tensor.dims()));
        }
        _ => return Err(input("exactly one of input and output must be a .png file")),
    }
    kv(&mut out, "output", args.output.display());
    Ok(out)
}

fn format_dims(dims: &[usize]) -> String {
    dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

fn run(cli: &Cli) -> Result<String, Failure> {
    match &cli.command {
        Command::Compare(a) => compare(a),
        Command::Expectation(a) => expectation(a),
        Command::Denoise(a) => denoise(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::TensorConvert(a) => convert(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.workers {
        Some(0) => Err(input("workers must be >= 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(input(e)),
        },
        None => run(&cli),
    };
    match outcome {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
    }
}
