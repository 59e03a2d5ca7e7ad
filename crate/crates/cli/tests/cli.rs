//! End-to-end command tests, partly in-process through the library entry
//! points and partly against the compiled binary where process isolation
//! matters (environment variables, exit codes).

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;

use common::{pattern, write_fixture};
use samam::checkpoint::{read_file, save_model};
use samam::net::{ModelConfig, SaMamModel};
use samam_cli::image::{read_ppm, Image};
use samam_cli::manifest::{file_sha256, RunManifest};
use samam_cli::run::{
    run_erf, run_scan_viz, run_stylize, run_train, ErfArgs, ScanVizArgs, StylizeArgs, TrainArgs,
};
use tempfile::tempdir;

/// Standard two-content / two-style corpus for quick training runs.
fn fixture_dirs(root: &Path) -> (PathBuf, PathBuf) {
    let content = root.join("content");
    let style = root.join("style");
    fs::create_dir_all(&content).unwrap();
    fs::create_dir_all(&style).unwrap();
    write_fixture(&content, "grad.ppm", &pattern("grad", 12, 12));
    write_fixture(&content, "checker.ppm", &pattern("checker", 12, 12));
    write_fixture(&style, "red.ppm", &pattern("red", 12, 12));
    write_fixture(&style, "blue.ppm", &pattern("blue", 12, 12));
    (content, style)
}

fn train_args(content: &Path, style: &Path, out: &Path, iters: u64, seed: u64) -> TrainArgs {
    TrainArgs {
        content_dir: content.to_path_buf(),
        style_dir: style.to_path_buf(),
        iters,
        batch: 2,
        lr: 1e-4,
        config: "tiny".into(),
        seed,
        out: out.to_path_buf(),
        scan_mode: "zigzag".into(),
        size: 8,
    }
}

fn samam_bin(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_samam"));
    cmd.args(args).env_remove("SAMAM_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("spawning the samam binary")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn train_zero_iters_matches_fresh_initialization() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let out = tmp.path().join("run");
    run_train(&train_args(&content, &style, &out, 0, 7)).unwrap();

    let manifest = RunManifest::read(&out.join("manifest.csv")).unwrap();
    assert!(manifest.records.is_empty());
    assert_eq!(manifest.seed, 7);
    assert_eq!(
        manifest.checkpoint_sha256,
        file_sha256(&out.join("model.ckpt")).unwrap()
    );

    let mut cfg = ModelConfig::tiny();
    cfg.seed = 7;
    let fresh = SaMamModel::<f64>::new(cfg).unwrap();
    let fresh_path = tmp.path().join("fresh.ckpt");
    save_model(&fresh_path, &fresh).unwrap();
    assert_eq!(
        fs::read(out.join("model.ckpt")).unwrap(),
        fs::read(&fresh_path).unwrap(),
        "a zero-iteration run must write the untouched initialization"
    );
}

#[test]
fn training_manifest_records_every_iteration() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let out = tmp.path().join("run");
    run_train(&train_args(&content, &style, &out, 3, 1)).unwrap();

    let manifest = RunManifest::read(&out.join("manifest.csv")).unwrap();
    assert_eq!(
        manifest.records.iter().map(|r| r.iter).collect::<Vec<_>>(),
        vec![1, 2, 3]
    );
    for r in &manifest.records {
        assert!(r.total.is_finite() && r.total > 0.0);
        assert!(r.content >= 0.0 && r.style >= 0.0 && r.id1 >= 0.0 && r.id2 >= 0.0);
    }
    assert!(manifest.config.contains("c=4"), "config snapshot missing");
    assert_eq!(
        manifest.checkpoint_sha256,
        file_sha256(&out.join("model.ckpt")).unwrap()
    );
}

#[test]
fn same_seed_gives_bit_identical_checkpoints() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    run_train(&train_args(&content, &style, &a, 2, 5)).unwrap();
    run_train(&train_args(&content, &style, &b, 2, 5)).unwrap();
    run_train(&train_args(&content, &style, &c, 2, 6)).unwrap();

    let bytes_a = fs::read(a.join("model.ckpt")).unwrap();
    assert_eq!(bytes_a, fs::read(b.join("model.ckpt")).unwrap());
    assert_ne!(bytes_a, fs::read(c.join("model.ckpt")).unwrap());
    assert_eq!(
        fs::read(a.join("manifest.csv")).unwrap(),
        fs::read(b.join("manifest.csv")).unwrap()
    );
}

#[test]
fn seed_env_var_overrides_the_flag() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let run = |out: &Path, seed: &str, envs: &[(&str, &str)]| {
        let out_s = out.to_str().unwrap().to_owned();
        let args = [
            "train",
            "--content-dir",
            content.to_str().unwrap(),
            "--style-dir",
            style.to_str().unwrap(),
            "--iters",
            "1",
            "--config",
            "tiny",
            "--size",
            "8",
            "--seed",
            seed,
            "--out",
            &out_s,
        ];
        let out = samam_bin(&args, envs);
        assert!(out.status.success(), "train failed: {}", stderr_of(&out));
    };
    let (flag5, env9, plain9) = (
        tmp.path().join("flag5"),
        tmp.path().join("env9"),
        tmp.path().join("plain9"),
    );
    run(&flag5, "5", &[]);
    run(&env9, "5", &[("SAMAM_SEED", "9")]);
    run(&plain9, "9", &[]);

    let env9_bytes = fs::read(env9.join("model.ckpt")).unwrap();
    assert_eq!(
        env9_bytes,
        fs::read(plain9.join("model.ckpt")).unwrap(),
        "SAMAM_SEED=9 must behave exactly like --seed 9"
    );
    assert_ne!(env9_bytes, fs::read(flag5.join("model.ckpt")).unwrap());
}

#[test]
fn stylize_keeps_content_dimensions_and_fresh_models_ignore_style() {
    let tmp = tempdir().unwrap();
    let (content_dir, style_dir) = fixture_dirs(tmp.path());
    let run_dir = tmp.path().join("run");
    run_train(&train_args(&content_dir, &style_dir, &run_dir, 0, 3)).unwrap();
    let weights = run_dir.join("model.ckpt");

    // 18x10 forces reflect padding to 20x12 and a crop back.
    let content = write_fixture(tmp.path(), "content.ppm", &pattern("grad", 18, 10));
    let out_red = tmp.path().join("red_out.ppm");
    let out_blue = tmp.path().join("blue_out.ppm");
    run_stylize(&StylizeArgs {
        content: content.clone(),
        style: style_dir.join("red.ppm"),
        weights: weights.clone(),
        out: out_red.clone(),
    })
    .unwrap();
    run_stylize(&StylizeArgs {
        content: content.clone(),
        style: style_dir.join("blue.ppm"),
        weights: weights.clone(),
        out: out_blue.clone(),
    })
    .unwrap();

    let red = read_ppm(&out_red).unwrap();
    assert_eq!((red.width, red.height), (18, 10));
    assert_eq!(
        fs::read(&out_red).unwrap(),
        fs::read(&out_blue).unwrap(),
        "zero-initialized style branches must leave the output a function of content alone"
    );

    // Feeding the output back through keeps the shape fixed.
    let out_again = tmp.path().join("again.ppm");
    run_stylize(&StylizeArgs {
        content: out_red.clone(),
        style: style_dir.join("red.ppm"),
        weights,
        out: out_again.clone(),
    })
    .unwrap();
    let again = read_ppm(&out_again).unwrap();
    assert_eq!((again.width, again.height), (18, 10));
}

#[test]
fn scan_viz_renders_documented_ramps() {
    let tmp = tempdir().unwrap();
    let viz = |h: usize, w: usize, mode: &str, path: usize, name: &str| -> Image {
        let out = tmp.path().join(name);
        run_scan_viz(&ScanVizArgs {
            height: h,
            width: w,
            mode: mode.into(),
            path,
            out: out.clone(),
        })
        .unwrap();
        read_ppm(&out).unwrap()
    };

    let zz = viz(2, 2, "zigzag", 0, "zz.ppm");
    let gray: Vec<u8> = zz.pixels.chunks(3).map(|p| p[0]).collect();
    assert_eq!(
        gray,
        vec![0, 85, 255, 170],
        "serpentine visit order 0,1,3,2"
    );
    assert!(zz.pixels.chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));

    let single = viz(1, 1, "zigzag", 0, "one.ppm");
    assert_eq!(single.pixels, vec![0, 0, 0]);

    let cross = viz(2, 2, "cross", 0, "cross.ppm");
    let gray: Vec<u8> = cross.pixels.chunks(3).map(|p| p[0]).collect();
    assert_eq!(gray, vec![0, 85, 170, 255], "row-major ramp");
}

#[test]
fn erf_writes_a_probe_of_the_requested_size() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let run_dir = tmp.path().join("run");
    run_train(&train_args(&content, &style, &run_dir, 0, 2)).unwrap();

    let out = tmp.path().join("erf.ppm");
    run_erf(&ErfArgs {
        weights: run_dir.join("model.ckpt"),
        size: 16,
        out: out.clone(),
        conv_only: false,
    })
    .unwrap();
    let img = read_ppm(&out).unwrap();
    assert_eq!((img.width, img.height), (16, 16));
    let center = (8 * 16 + 8) * 3;
    assert!(
        img.pixels[center] < 255,
        "the probe pixel itself must show gradient mass"
    );
}

#[test]
fn inspect_totals_match_the_checkpoint_contents() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let run_dir = tmp.path().join("run");
    run_train(&train_args(&content, &style, &run_dir, 0, 4)).unwrap();
    let ckpt = run_dir.join("model.ckpt");

    let out = samam_bin(&["inspect", "--weights", ckpt.to_str().unwrap()], &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = stdout_of(&out);

    let data = read_file(&ckpt).unwrap();
    assert!(text.contains(&format!("tensors: {}", data.tensors.len())));
    assert!(text.contains(&format!("parameters: {}", data.total_values())));
    assert!(text.contains("config:"));
    for (name, _, values) in &data.tensors {
        assert!(!values.is_empty());
        assert!(
            text.contains(name.as_str()),
            "missing tensor line for {name}"
        );
    }
}

#[test]
fn commands_exit_nonzero_with_a_diagnostic_on_bad_input() {
    let tmp = tempdir().unwrap();
    let expect_error = |args: &[&str], needle: &str| {
        let out = samam_bin(args, &[]);
        assert!(
            !out.status.success(),
            "expected failure for {args:?}, got success"
        );
        let err = stderr_of(&out);
        assert!(
            err.contains("error:") && err.to_lowercase().contains(needle),
            "diagnostic for {args:?} missing '{needle}': {err}"
        );
    };

    let out_ppm = tmp.path().join("never.ppm");
    let out_s = out_ppm.to_str().unwrap().to_owned();
    expect_error(
        &["scan-viz", "--mode", "diagonal", "--out", &out_s],
        "scan mode",
    );
    expect_error(&["scan-viz", "--height", "300", "--out", &out_s], "256");
    assert!(
        !out_ppm.exists(),
        "failed commands must not leave output files"
    );

    let empty = tmp.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    expect_error(
        &[
            "train",
            "--content-dir",
            empty.to_str().unwrap(),
            "--style-dir",
            empty.to_str().unwrap(),
            "--out",
            tmp.path().join("run").to_str().unwrap(),
        ],
        "no .ppm",
    );

    // A real checkpoint, then a truncated and a corrupted copy.
    let (content, style) = fixture_dirs(tmp.path());
    let run_dir = tmp.path().join("run0");
    run_train(&train_args(&content, &style, &run_dir, 0, 1)).unwrap();
    let good = fs::read(run_dir.join("model.ckpt")).unwrap();

    let truncated = tmp.path().join("truncated.ckpt");
    fs::write(&truncated, &good[..good.len() - 16]).unwrap();
    expect_error(
        &["inspect", "--weights", truncated.to_str().unwrap()],
        "truncated",
    );

    let mut bad = good.clone();
    bad[0] ^= 0xFF;
    let bad_magic = tmp.path().join("badmagic.ckpt");
    fs::write(&bad_magic, &bad).unwrap();
    expect_error(
        &["inspect", "--weights", bad_magic.to_str().unwrap()],
        "magic",
    );

    expect_error(
        &[
            "erf",
            "--weights",
            run_dir.join("model.ckpt").to_str().unwrap(),
            "--size",
            "10",
            "--out",
            &out_s,
        ],
        "multiple of 4",
    );
}

#[test]
fn train_rejects_bad_sizes_and_batches() {
    let tmp = tempdir().unwrap();
    let (content, style) = fixture_dirs(tmp.path());
    let out = tmp.path().join("run");

    let mut args = train_args(&content, &style, &out, 1, 0);
    args.size = 10;
    let err = run_train(&args).unwrap_err().to_string();
    assert!(err.contains("multiple of 4"), "{err}");

    let mut args = train_args(&content, &style, &out, 1, 0);
    args.batch = 0;
    let err = run_train(&args).unwrap_err().to_string();
    assert!(err.contains("batch"), "{err}");

    let mut args = train_args(&content, &style, &out, 1, 0);
    args.scan_mode = "spiral".into();
    assert!(run_train(&args).is_err());
}
