//! The five subcommands: train, stylize, scan-viz, erf, inspect.

use crate::dataset::{crop, load_dir, pad_to_multiple, random_crop};
use crate::image::{write_ppm, Image};
use crate::manifest::{file_sha256, LossRecord, RunManifest};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use samam::checkpoint::{load_model, read_file, save_model};
use samam::init::rng_from_seed;
use samam::loss::{loss_parts, total_loss, FeatureExtractor, LossWeights};
use samam::net::{ModelConfig, SaMamModel};
use samam::optim::Adam;
use samam::scan::{scan_indices, ScanMode};
use samam::tensor::Tensor;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(
    name = "samam",
    version,
    about = "Style transfer with state-space scans"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train on directories of PPM images and write a checkpoint
    Train(TrainArgs),
    /// Apply a trained checkpoint to a content/style image pair
    Stylize(StylizeArgs),
    /// Render a scan order as a grayscale visit-time ramp
    ScanViz(ScanVizArgs),
    /// Render the effective receptive field of a checkpoint
    Erf(ErfArgs),
    /// List the tensors and parameter totals of a checkpoint
    Inspect(InspectArgs),
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => run_train(&args),
        Command::Stylize(args) => run_stylize(&args),
        Command::ScanViz(args) => run_scan_viz(&args),
        Command::Erf(args) => run_erf(&args),
        Command::Inspect(args) => run_inspect(&args),
    }
}

/// SAMAM_SEED takes precedence over the flag when set.
fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var("SAMAM_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("SAMAM_SEED '{v}' is not an unsigned integer")),
        Err(_) => Ok(flag),
    }
}

fn preset(name: &str) -> Result<ModelConfig> {
    match name {
        "tiny" => Ok(ModelConfig::tiny()),
        "desk" => Ok(ModelConfig::desk()),
        "paper" => Ok(ModelConfig::paper()),
        other => bail!("unknown config preset '{other}' (tiny|desk|paper)"),
    }
}

fn kv_one_line(cfg: &ModelConfig) -> String {
    cfg.to_kv_text().lines().collect::<Vec<_>>().join(",")
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of content images (.ppm)
    #[arg(long)]
    pub content_dir: PathBuf,
    /// Directory of style images (.ppm)
    #[arg(long)]
    pub style_dir: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub iters: u64,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Initial learning rate; halves every iters/4 steps
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Model size preset: tiny, desk, or paper
    #[arg(long, default_value = "desk")]
    pub config: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for model.ckpt and manifest.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "zigzag")]
    pub scan_mode: String,
    /// Square crop size, a multiple of 4
    #[arg(long, default_value_t = 32)]
    pub size: usize,
}

pub fn run_train(args: &TrainArgs) -> Result<()> {
    if args.size == 0 || !args.size.is_multiple_of(4) {
        bail!("--size must be a positive multiple of 4, got {}", args.size);
    }
    if args.batch == 0 {
        bail!("--batch must be at least 1");
    }
    let seed = effective_seed(args.seed)?;
    let mut cfg = preset(&args.config)?;
    cfg.scan_mode = ScanMode::parse(&args.scan_mode)?;
    cfg.seed = seed;
    cfg.validate()?;

    let content: Vec<Tensor<f64>> = load_dir(&args.content_dir)?
        .into_iter()
        .map(|(_, img)| img.to_tensor())
        .collect();
    let style: Vec<Tensor<f64>> = load_dir(&args.style_dir)?
        .into_iter()
        .map(|(_, img)| img.to_tensor())
        .collect();

    let model = SaMamModel::<f64>::new(cfg.clone())?;
    let extractor = FeatureExtractor::<f64>::new_random(seed);
    let loss_weights = LossWeights::default();
    let params: Vec<Tensor<f64>> = model.named_params().into_iter().map(|(_, p)| p).collect();
    let mut opt = Adam::new(&params, args.lr);
    let mut data_rng = rng_from_seed(seed.wrapping_add(0x9E37_79B9_7F4A_7C15));

    let quarter = args.iters / 4;
    let mut records = Vec::with_capacity(args.iters as usize);
    let report_every = (args.iters / 10).max(1);
    for iter in 1..=args.iters {
        if let Some(halvings) = (iter - 1).checked_div(quarter) {
            opt.set_lr(args.lr / f64::powi(2.0, halvings as i32));
        }
        let mut batch_total: Option<Tensor<f64>> = None;
        let mut sums = [0.0f64; 4];
        for _ in 0..args.batch {
            let ic = &content[data_rng.gen_range(0..content.len())];
            let is = &style[data_rng.gen_range(0..style.len())];
            let ic = random_crop(ic, args.size, &mut data_rng)?;
            let is = random_crop(is, args.size, &mut data_rng)?;
            let parts = loss_parts(&model, &ic, &is, &extractor)?;
            sums[0] += parts.content.item()?;
            sums[1] += parts.style.item()?;
            sums[2] += parts.id1.item()?;
            sums[3] += parts.id2.item()?;
            let total = total_loss(&parts, &loss_weights)?;
            batch_total = Some(match batch_total {
                Some(acc) => acc.add(&total)?,
                None => total,
            });
        }
        let loss = batch_total
            .expect("batch is nonempty")
            .mul_scalar(1.0 / args.batch as f64);
        let value = loss.item()?;
        if !value.is_finite() {
            bail!("training diverged at iteration {iter}: loss {value}");
        }
        model.zero_grad();
        loss.backward()?;
        opt.step(&params)?;
        let b = args.batch as f64;
        records.push(LossRecord {
            iter,
            content: sums[0] / b,
            style: sums[1] / b,
            id1: sums[2] / b,
            id2: sums[3] / b,
            total: value,
        });
        if iter % report_every == 0 || iter == args.iters {
            println!("iter {iter}/{} loss {value:.6}", args.iters);
        }
    }

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let ckpt = args.out.join("model.ckpt");
    save_model(&ckpt, &model)?;
    let manifest = RunManifest {
        config: kv_one_line(&cfg),
        seed,
        checkpoint_sha256: file_sha256(&ckpt)?,
        records,
    };
    let manifest_path = args.out.join("manifest.csv");
    manifest.write(&manifest_path)?;
    println!("wrote {} and {}", ckpt.display(), manifest_path.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct StylizeArgs {
    #[arg(long)]
    pub content: PathBuf,
    #[arg(long)]
    pub style: PathBuf,
    /// Checkpoint produced by `samam train`
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_stylize(args: &StylizeArgs) -> Result<()> {
    let model = load_model::<f64>(&args.weights)?;
    let content = crate::image::read_ppm(&args.content)?;
    let style = crate::image::read_ppm(&args.style)?;
    let (h, w) = (content.height, content.width);
    let ct = pad_to_multiple(&content.to_tensor(), 4)?;
    let st = pad_to_multiple(&style.to_tensor(), 4)?;
    let out = model.stylize(&ct, &st)?;
    let out = crop(&out, 0, 0, h, w)?;
    write_ppm(&args.out, &Image::from_tensor(&out)?)?;
    println!("wrote {} ({w}x{h})", args.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct ScanVizArgs {
    #[arg(long, default_value_t = 16)]
    pub height: usize,
    #[arg(long, default_value_t = 16)]
    pub width: usize,
    /// zigzag or cross
    #[arg(long, default_value = "zigzag")]
    pub mode: String,
    /// Path index 0..=3
    #[arg(long, default_value_t = 0)]
    pub path: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Brightness byte for visit step t of l: a ramp from 0 (first) to 255.
fn ramp_byte(t: usize, l: usize) -> u8 {
    if l <= 1 {
        0
    } else {
        (255.0 * t as f64 / (l - 1) as f64).round() as u8
    }
}

pub fn run_scan_viz(args: &ScanVizArgs) -> Result<()> {
    let (h, w) = (args.height, args.width);
    if h == 0 || w == 0 || h > 256 || w > 256 {
        bail!("grid must be between 1x1 and 256x256, got {h}x{w}");
    }
    let mode = ScanMode::parse(&args.mode)?;
    let path = scan_indices(mode, h, w, args.path)?;
    let l = h * w;
    let mut pixels = vec![0u8; l * 3];
    for (t, &cell) in path.perm.iter().enumerate() {
        let v = ramp_byte(t, l);
        pixels[cell * 3..cell * 3 + 3].fill(v);
    }
    write_ppm(&args.out, &Image::new(w, h, pixels)?)?;
    println!(
        "wrote {} ({} path {} on {w}x{h})",
        args.out.display(),
        mode.name(),
        args.path
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ErfArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Probe image size, a multiple of 4
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Silence the scan branches to expose the convolutional field
    #[arg(long, default_value_t = false)]
    pub conv_only: bool,
}

/// Darker means stronger influence; exactly zero gradient stays white.
fn erf_byte(g: f64) -> u8 {
    (255.0 * (1.0 - g.powf(0.25))).floor().clamp(0.0, 255.0) as u8
}

pub fn run_erf(args: &ErfArgs) -> Result<()> {
    let mut model = load_model::<f64>(&args.weights)?;
    if args.conv_only {
        model.config.conv_only = true;
    }
    let heat = model.erf_map(args.size)?;
    let mut pixels = vec![0u8; heat.len() * 3];
    for (i, &g) in heat.iter().enumerate() {
        pixels[i * 3..i * 3 + 3].fill(erf_byte(g));
    }
    write_ppm(&args.out, &Image::new(args.size, args.size, pixels)?)?;
    println!(
        "wrote {} ({}x{} probe)",
        args.out.display(),
        args.size,
        args.size
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub weights: PathBuf,
}

pub fn run_inspect(args: &InspectArgs) -> Result<()> {
    let data = read_file(&args.weights)?;
    println!("checkpoint: {}", args.weights.display());
    for line in data.config_text.lines() {
        println!("config: {line}");
    }
    for (name, dims, values) in &data.tensors {
        let dims_text = dims
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        println!("tensor: {name} [{dims_text}] {}", values.len());
    }
    println!("tensors: {}", data.tensors.len());
    println!("parameters: {}", data.total_values());
    Ok(())
}
