use std::path::PathBuf;
use std::time::Instant;

use aitv_core::degrade::normalize_image;
use aitv_core::segment::KmeansConfig;
use aitv_core::solver::trace_csv;
use aitv_core::{AdmmConfig, Exec, KernelSpec, RegMode};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::io;
use crate::pipeline::{run_method, Method};
use crate::UsageError;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON file with any of the fields of the run manifest's `config`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Number of regions.
    #[arg(long)]
    pub k: Option<usize>,
    /// Blur the image was degraded with.
    #[arg(long)]
    pub blur: Option<KernelSpec>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub kmeans_seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Run on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub method: Option<Method>,
    pub k: Option<usize>,
    pub blur: Option<KernelSpec>,
    pub solver: AdmmConfig,
    pub kmeans: KmeansConfig,
}

impl SegmentConfig {
    fn apply(&mut self, a: &Args) {
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(self.method, a.method.map(Some));
        set!(self.k, a.k.map(Some));
        set!(self.blur, a.blur.clone().map(Some));
        set!(self.solver.lambda, a.lambda);
        set!(self.solver.mu, a.mu);
        set!(self.solver.alpha, a.alpha);
        set!(self.solver.beta0, a.beta0);
        set!(self.solver.sigma, a.sigma);
        set!(self.solver.tol, a.tol);
        set!(self.solver.max_iter, a.max_iter);
        set!(self.kmeans.seed, a.kmeans_seed);
        set!(self.kmeans.restarts, a.restarts);
        if a.sequential {
            self.solver.exec = Exec::Sequential;
            self.kmeans.exec = Exec::Sequential;
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    input: String,
    config: &'a SegmentConfig,
    /// Input maximum; the solver sees input / input_scale.
    input_scale: f64,
    iterations: Vec<usize>,
    converged: Vec<bool>,
    rel_err: Vec<f64>,
    wall_time_sec: f64,
}

pub fn load_config(path: &PathBuf) -> Result<SegmentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

/// Writes `u`, `labels`, `recon` (each `.png` + `.txt`), `trace*.csv`,
/// `centroids.json` and `manifest.json` into the output directory.
pub fn run(args: Args) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => load_config(p)?,
        None => SegmentConfig::default(),
    };
    config.apply(&args);
    let k = config
        .k
        .ok_or_else(|| UsageError("the number of regions is required (--k or `k` in --config)".into()))?;
    let raw = io::load_image(&args.input)?;
    let method = *config.method.get_or_insert(if raw.depth() == 1 {
        Method::AitvSat
    } else {
        Method::AitvSlat
    });
    if method.mode() == RegMode::Iso {
        eprintln!("note: {method} ignores alpha (= {})", config.solver.alpha);
    }
    config.solver.mode = method.mode();
    config.solver.trace = true;
    let blur = config.blur.clone().unwrap_or(KernelSpec::Identity);
    let kernel = blur.build()?;

    let start = Instant::now();
    let (f, scale) = normalize_image(&raw)?;
    let out = run_method(&f, method, &kernel, &config.solver, k, &config.kmeans)?;
    let wall = start.elapsed().as_secs_f64();

    let dir = &args.output_dir;
    let rescale = |img: &aitv_core::segment::MultiChannelImage| -> Result<_> {
        Ok(aitv_core::segment::MultiChannelImage::new(
            img.channels().iter().map(|c| c.map(|v| v * scale)).collect(),
        )?)
    };
    let png_scale = if io::is_text(&args.input) {
        scale
    } else {
        raw_png_range(&raw)
    };
    io::save_image_pair(dir, "u", &rescale(&out.smoothed)?, png_scale)?;
    io::save_image_pair(dir, "recon", &rescale(&out.reconstruction)?, png_scale)?;
    io::write_atomic(&dir.join("labels.txt"), out.segmentation.labels_text().as_bytes())?;
    io::save_labels_png(&dir.join("labels.png"), &out.segmentation)?;
    if out.smooth.len() == 1 {
        io::write_atomic(&dir.join("trace.csv"), trace_csv(&out.smooth[0].trace).as_bytes())?;
    } else {
        for (l, s) in out.smooth.iter().enumerate() {
            io::write_atomic(&dir.join(format!("trace_c{l}.csv")), trace_csv(&s.trace).as_bytes())?;
        }
    }
    io::write_json(&dir.join("centroids.json"), &out.segmentation.centroids())?;
    io::write_json(
        &dir.join("manifest.json"),
        &Manifest {
            tool: "aitv",
            version: env!("CARGO_PKG_VERSION"),
            command: "segment",
            input: args.input.display().to_string(),
            config: &config,
            input_scale: scale,
            iterations: out.smooth.iter().map(|s| s.iterations).collect(),
            converged: out.smooth.iter().map(|s| s.converged).collect(),
            rel_err: out.smooth.iter().map(|s| s.rel_err).collect(),
            wall_time_sec: wall,
        },
    )?;
    for (l, s) in out.smooth.iter().enumerate() {
        if !s.converged {
            eprintln!(
                "warning: channel {l} stopped after {} iterations with rel_err {:e}",
                s.iterations, s.rel_err
            );
        }
    }
    Ok(())
}

/// White level for PNG output: 65535 for 16-bit data, else 255.
fn raw_png_range(raw: &aitv_core::segment::MultiChannelImage) -> f64 {
    let max = raw.channels().iter().map(|c| c.max()).fold(0.0, f64::max);
    if max > 255.0 {
        65535.0
    } else {
        255.0
    }
}
