use std::path::PathBuf;

use aitv_core::degrade::{degrade_image, normalize_image, DegradeSpec};
use aitv_core::KernelSpec;
use anyhow::{Context, Result};
use serde::Serialize;

use crate::io;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    pub input: PathBuf,
    /// Peak intensity before sampling: a number, `P` or `P/n` (P = 255).
    #[arg(long)]
    pub peak: String,
    #[arg(long, default_value = "identity")]
    pub blur: KernelSpec,
    #[arg(long)]
    pub seed: u64,
    /// Output image; a `.txt` twin and a `.json` sidecar are written next to it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Serialize)]
pub struct Sidecar {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub input: String,
    pub peak_spec: String,
    pub spec: DegradeSpec,
    /// `peak / max(input)`: the factor applied before blurring.
    pub scale: f64,
    /// Maximum of the noisy counts; the written image is counts / normalization.
    pub normalization: f64,
}

pub fn run(args: Args) -> Result<()> {
    let peak = io::parse_peak(&args.peak)?;
    let g = io::load_image(&args.input)?;
    let spec = DegradeSpec::new(peak, args.blur, args.seed)?;
    let counts = degrade_image(&g, &spec).context("degrading")?;
    let (f, normalization) = normalize_image(&counts)?;
    let input_max = g.channels().iter().map(|c| c.max()).fold(f64::NEG_INFINITY, f64::max);

    let stem = args.output.with_extension("");
    if io::is_text(&args.output) {
        io::write_atomic(&args.output, io::image_text(&f).as_bytes())?;
    } else {
        io::save_png(&args.output, &f, 1.0)?;
        io::write_atomic(&stem.with_extension("txt"), io::image_text(&f).as_bytes())?;
    }
    io::write_json(
        &stem.with_extension("json"),
        &Sidecar {
            tool: "aitv",
            version: env!("CARGO_PKG_VERSION"),
            command: "degrade",
            input: args.input.display().to_string(),
            peak_spec: args.peak,
            spec,
            scale: peak / input_max,
            normalization,
        },
    )?;
    Ok(())
}
