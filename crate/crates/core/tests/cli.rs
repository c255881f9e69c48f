use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use contextual_loss::features::sample_gaussian_features;
use contextual_loss::tensor::io::{load_png, save_tensor, Tensor};

const SCENE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/assets/scene128.png");

fn cxloss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cxloss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn report(out: &Output) -> HashMap<String, String> {
    stdout(out)
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn value(map: &HashMap<String, String>, key: &str) -> f64 {
    map.get(key)
        .unwrap_or_else(|| panic!("missing {key} in {map:?}"))
        .parse()
        .unwrap()
}

fn write_matrix(path: &Path, rows: usize, cols: usize, seed: u64) {
    let set = sample_gaussian_features(rows, cols, 0.0, 1.0, seed).unwrap();
    save_tensor(&Tensor::Matrix(set.features().clone()), path).unwrap();
}

#[test]
fn compare_image_with_itself() {
    let out = cxloss(&["compare", SCENE, SCENE, "--loss", "cx"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(&out);
    assert!((value(&r, "value") - 1.0).abs() <= 1e-6);
    assert!(value(&r, "loss").abs() <= 1e-6);
    assert_eq!(r["measure"], "cx");
    assert_eq!(r["d"], "75");
    assert_eq!(r["n"], r["m"]);
    assert_eq!(r["distance"], "cosine");
    assert!(r["value"].starts_with("1.00000"));
}

#[test]
fn compare_baselines_on_images() {
    for loss in ["l1", "l2", "dis", "gram"] {
        let out = cxloss(&["compare", SCENE, SCENE, "--loss", loss]);
        assert!(out.status.success(), "{loss}: {}", stderr(&out));
        let v = value(&report(&out), "value");
        if loss == "dis" {
            assert_eq!(v, 1.0);
        } else {
            assert_eq!(v, 0.0);
        }
    }
}

#[test]
fn compare_rejects_zero_bandwidth() {
    let out = cxloss(&["compare", SCENE, SCENE, "--loss", "cx", "--h", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("h must be > 0"));
    assert_eq!(stderr(&out).trim().lines().count(), 1);
}

#[test]
fn compare_reports_mismatched_dims() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.cxt"), dir.path().join("b.cxt"));
    write_matrix(&a, 6, 3, 1);
    write_matrix(&b, 6, 4, 2);
    let out = cxloss(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("D=3") && msg.contains("D=4"), "{msg}");
}

#[test]
fn compare_feature_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.cxt"), dir.path().join("b.cxt"));
    write_matrix(&a, 10, 3, 1);
    write_matrix(&b, 7, 3, 5);
    let out = cxloss(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--distance", "l2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!((r["n"].as_str(), r["m"].as_str(), r["d"].as_str()), ("10", "7", "3"));
    let v = value(&r, "value");
    assert!(v > 0.0 && v <= 1.0);
    assert!((value(&r, "loss") + v.ln()).abs() < 1e-5);
}

#[test]
fn unknown_flags_and_missing_files_exit_2() {
    assert_eq!(cxloss(&["compare", SCENE]).status.code(), Some(2));
    assert_eq!(cxloss(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cxloss(&["compare", SCENE, "/nonexistent.png"]).status.code(), Some(2));
    assert_eq!(
        cxloss(&["compare", SCENE, SCENE, "--distance", "chebyshev"]).status.code(),
        Some(2)
    );
}

#[test]
fn printed_numbers_keep_six_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.cxt"), dir.path().join("b.cxt"));
    write_matrix(&a, 12, 2, 3);
    write_matrix(&b, 12, 2, 9);
    let out = cxloss(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--h", "0.013"]);
    for line in stdout(&out).lines() {
        let (_, v) = line.split_once('=').unwrap();
        if v.contains('.') {
            let mantissa = v.split('e').next().unwrap();
            let digits: String = mantissa
                .chars()
                .filter(|c| c.is_ascii_digit())
                .skip_while(|&c| c == '0')
                .collect();
            assert!(digits.len() >= 6, "{line}");
        }
    }
}

#[test]
fn expectation_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for (p, workers) in [(&p1, "1"), (&p2, "3")] {
        let out = cxloss(&[
            "--workers", workers, "expectation", "--measure", "cx", "--trials", "1", "--seed", "7",
            "--out", p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let (a, b) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("mu,sigma,mean,stderr,trials\n"));
    assert_eq!(text.lines().count(), 122);
    assert!(!text.contains('\r'));
}

#[test]
fn expectation_defaults_peak_at_matching_distribution() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let out = cxloss(&["expectation", "--measure", "cx", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(&out);
    assert_eq!((r["argmax_mu"].as_str(), r["argmax_sigma"].as_str()), ("0", "1"));
    assert_eq!(r["distance"], "l2");
}

#[test]
fn expectation_single_cell_is_consistent_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut cells = Vec::new();
    for seed in ["1", "2"] {
        let csv = dir.path().join(format!("{seed}.csv"));
        let out = cxloss(&[
            "expectation", "--mu-max", "0", "--sigma-min", "1", "--sigma-max", "1", "--seed", seed,
            "--out", csv.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = std::fs::read_to_string(&csv).unwrap();
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(text.lines().count(), 2);
        cells.push((row[2], row[3]));
    }
    let ((m1, s1), (m2, s2)) = (cells[0], cells[1]);
    assert!(m1 != m2);
    assert!((m1 - m2).abs() <= 3.0 * (s1 * s1 + s2 * s2).sqrt(), "{cells:?}");
}

#[test]
fn expectation_rejects_bad_ranges() {
    let out = cxloss(&["expectation", "--mu-min", "3", "--mu-max", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cxloss(&["expectation", "--trials", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cxloss(&["expectation", "--measure", "nope"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn denoise_defaults_rank_cx_above_l1() {
    let dir = tempfile::tempdir().unwrap();
    let out = cxloss(&["denoise", "--losses", "cx,l1", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(&out);
    assert!(value(&r, "psnr_cx") > value(&r, "psnr_l1"), "{r:?}");
    for name in ["input.png", "ground_truth.png", "result_cx.png", "result_l1.png", "report.txt"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let saved = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(saved, stdout(&out));
    let gt = load_png(dir.path().join("ground_truth.png")).unwrap();
    assert_eq!((gt.height(), gt.width(), gt.channels()), (64, 64, 3));
}

#[test]
fn denoise_clean_aligned_l1_does_not_degrade() {
    let dir = tempfile::tempdir().unwrap();
    let out = cxloss(&[
        "denoise", "--noise", "0", "--targets", "1", "--max-shift", "0", "--losses", "l1",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let r = report(&out);
    assert!(value(&r, "psnr_l1") >= value(&r, "psnr_input"));
}

#[test]
fn denoise_rerun_gives_identical_report() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, workers: &str| {
        let out_dir = dir.path().join(sub);
        let out = cxloss(&[
            "--workers", workers, "denoise", "--iters", "15", "--seed", "4",
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        (stdout(&out), std::fs::read(out_dir.join("result_cx.png")).unwrap())
    };
    assert_eq!(run("a", "1"), run("b", "2"));
}

#[test]
fn denoise_rejects_bad_input() {
    let out = cxloss(&["denoise", "--losses", "cx,median"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cxloss(&["denoise", "--crop", "120"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_defaults_pass() {
    let out = cxloss(&["gradcheck"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let r = report(&out);
    assert!(value(&r, "max_rel_err") <= 1e-4);
    assert_eq!(r["pass"], "true");
}

#[test]
fn gradcheck_large_step_reports_larger_error() {
    let base = value(&report(&cxloss(&["gradcheck"])), "max_rel_err");
    let out = cxloss(&["gradcheck", "--step", "0.1"]);
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    assert!(value(&report(&out), "max_rel_err") > base);
}

#[test]
fn gradcheck_zero_trials_is_usage_error() {
    assert_eq!(cxloss(&["gradcheck", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn gradcheck_feature_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("x.cxt"), dir.path().join("y.cxt"));
    write_matrix(&a, 6, 3, 11);
    write_matrix(&b, 5, 3, 12);
    let out = cxloss(&[
        "gradcheck", "--x", a.to_str().unwrap(), "--y", b.to_str().unwrap(), "--distance", "l2",
        "--trials", "5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(report(&out)["n"], "6");
}

#[test]
fn tensor_convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cxt = dir.path().join("scene.cxt");
    let png = dir.path().join("back.png");
    let out = cxloss(&["tensor-convert", SCENE, cxt.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(report(&out)["dims"], "128x128x3");
    let out = cxloss(&["tensor-convert", cxt.to_str().unwrap(), png.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(load_png(SCENE).unwrap(), load_png(&png).unwrap());

    let m = dir.path().join("m.cxt");
    write_matrix(&m, 4, 4, 1);
    let out = cxloss(&["tensor-convert", m.to_str().unwrap(), png.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
