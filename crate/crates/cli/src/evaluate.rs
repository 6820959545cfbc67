use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aitv_core::metrics::{psnr, region_dice, MatchMode, PsnrVariant};
use aitv_core::segment::MultiChannelImage;
use anyhow::{bail, Context, Result};
use clap::ValueEnum;

use crate::io;
use crate::UsageError;

pub const DICE_HEADER: &str = "image,method,region,dice";
pub const PSNR_HEADER: &str = "image,method,psnr_paper,psnr_standard,runtime_sec";

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Matching {
    Identity,
    Greedy,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Predicted label map (1-based text).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Ground-truth label map (1-based text). Without it only PSNR is reported.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Piecewise-constant reconstruction.
    #[arg(long)]
    pub recon: Option<PathBuf>,
    /// Clean image to compare the reconstruction against.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Sidecar written by `degrade`; maps the reconstruction back to clean units.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Manifest written by `segment`, for the runtime column.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<String>,
    #[arg(long, default_value = "unknown")]
    pub method: String,
    #[arg(long, value_enum, default_value = "greedy")]
    pub matching: Matching,
    #[arg(long)]
    pub output_dir: PathBuf,
}

pub fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.6}")
    }
}

pub fn check_field(name: &str, s: &str) -> Result<()> {
    if s.contains([',', '"', '\n']) {
        return Err(UsageError(format!("{name} `{s}` may not contain commas, quotes or newlines")).into());
    }
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn number(v: &serde_json::Value, pointer: &str, path: &Path) -> Result<f64> {
    v.pointer(pointer)
        .and_then(serde_json::Value::as_f64)
        .with_context(|| format!("{}: missing `{pointer}`", path.display()))
}

fn global_max(img: &MultiChannelImage) -> f64 {
    img.channels().iter().map(|c| c.max()).fold(f64::NEG_INFINITY, f64::max)
}

fn scaled(img: &MultiChannelImage, s: f64) -> Result<MultiChannelImage> {
    Ok(MultiChannelImage::new(
        img.channels().iter().map(|c| c.map(|v| v * s)).collect(),
    )?)
}

pub fn run(args: Args) -> Result<()> {
    let image = match (&args.image, &args.pred, &args.recon) {
        (Some(name), _, _) => name.clone(),
        (None, Some(p), _) | (None, None, Some(p)) => p
            .parent()
            .and_then(|d| d.file_name())
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned(),
        (None, None, None) => String::new(),
    };
    check_field("image", &image)?;
    check_field("method", &args.method)?;
    let mut wrote = false;

    if let Some(truth_path) = &args.truth {
        let pred_path = args
            .pred
            .as_ref()
            .ok_or_else(|| UsageError("--truth needs --pred".into()))?;
        let pred = io::load_labels(pred_path)?;
        let truth = io::load_labels(truth_path)?;
        let mode = match args.matching {
            Matching::Identity => MatchMode::Identity,
            Matching::Greedy => MatchMode::GreedyDice,
        };
        let scores = region_dice(&pred, &truth, mode)?;
        let mut csv = format!("{DICE_HEADER}\n");
        for (t, d) in scores.iter().enumerate() {
            let _ = writeln!(csv, "{image},{},{},{}", args.method, t + 1, fmt_metric(*d));
        }
        io::write_atomic(&args.output_dir.join("dice.csv"), csv.as_bytes())?;
        wrote = true;
    } else if args.pred.is_some() {
        eprintln!("note: no ground truth given; reporting PSNR only");
    }

    if let (Some(recon_path), Some(ref_path)) = (&args.recon, &args.reference) {
        let recon = io::load_image(recon_path)?;
        let reference = io::load_image(ref_path)?;
        let ref_max = global_max(&reference);
        if ref_max <= 0.0 || ref_max.is_nan() {
            bail!("{}: reference image is all zero", ref_path.display());
        }
        let (recon, reference, peak) = match &args.sidecar {
            Some(sc) => {
                let v = read_json(sc)?;
                let factor = number(&v, "/normalization", sc)? / number(&v, "/spec/peak", sc)?;
                (scaled(&recon, factor)?, scaled(&reference, 1.0 / ref_max)?, 1.0)
            }
            None => (recon, reference, ref_max),
        };
        let runtime = match &args.manifest {
            Some(m) => fmt_metric(number(&read_json(m)?, "/wall_time_sec", m)?),
            None => String::new(),
        };
        let csv = format!(
            "{PSNR_HEADER}\n{image},{},{},{},{runtime}\n",
            args.method,
            fmt_metric(psnr(&reference, &recon, peak, PsnrVariant::Paper)?),
            fmt_metric(psnr(&reference, &recon, peak, PsnrVariant::Standard)?),
        );
        io::write_atomic(&args.output_dir.join("psnr.csv"), csv.as_bytes())?;
        wrote = true;
    } else if args.recon.is_some() != args.reference.is_some() {
        return Err(UsageError("PSNR needs both --recon and --reference".into()).into());
    }

    if !wrote {
        return Err(UsageError("nothing to evaluate: give --pred/--truth and/or --recon/--reference".into()).into());
    }
    Ok(())
}
