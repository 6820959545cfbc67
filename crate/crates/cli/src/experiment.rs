//! Batch runner. A config lists images, degradation cases, methods and
//! noise seeds; every combination is one cell. Writes `dice.csv`,
//! `psnr.csv`, `summary.csv` and `failures.csv` to the output directory.
//!
//! ```json
//! {
//!   "images": ["phantom:brain:0", {"path": "scan.png", "truth": "scan_truth.txt"}],
//!   "cases": [{"degrade": "P/8", "lambda": 4.0, "mu": 1.0, "alpha": 0.6}],
//!   "methods": ["aitv-sat", "tv-sat"],
//!   "noise_seeds": [0, 1, 2, 3, 4],
//!   "k": 4,
//!   "kmeans_seed": 0,
//!   "solver": {"sigma": 1.25, "tol": 1e-4, "max_iter": 300},
//!   "record_runtime": false
//! }
//! ```
//!
//! A case's `degrade` string is a peak (see `degrade --peak`), optionally
//! followed by `+` and a blur kernel, e.g. `P/2+gaussian:10x10:2`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aitv_core::degrade::{degrade_image, normalize_image, DegradeSpec};
use aitv_core::metrics::{psnr, region_dice, PsnrVariant};
use aitv_core::phantom::PhantomKind;
use aitv_core::segment::{KmeansConfig, MultiChannelImage, Segmentation};
use aitv_core::{AdmmConfig, KernelSpec};
use anyhow::{anyhow, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluate::{check_field, fmt_metric, DICE_HEADER, PSNR_HEADER};
use crate::io;
use crate::pipeline::{run_method, Method};
use crate::UsageError;

#[derive(clap::Args, Debug)]
pub struct Args {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Fill the runtime column (makes psnr.csv differ between runs).
    #[arg(long)]
    pub record_runtime: bool,
    /// Override the config's noise seeds, e.g. `--seeds 0,1,2`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageSource {
    /// `phantom:<kind>:<seed>` or a path.
    Named(String),
    File {
        path: PathBuf,
        truth: Option<PathBuf>,
        name: Option<String>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub name: Option<String>,
    pub degrade: String,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub alpha: Option<f64>,
    pub beta0: Option<f64>,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub images: Vec<ImageSource>,
    pub cases: Vec<Case>,
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub noise_seeds: Vec<u64>,
    /// Region count; defaults to the ground truth's.
    pub k: Option<usize>,
    #[serde(default)]
    pub kmeans_seed: u64,
    #[serde(default)]
    pub solver: AdmmConfig,
    #[serde(default)]
    pub record_runtime: bool,
}

struct Input {
    name: String,
    image: MultiChannelImage,
    truth: Option<Segmentation>,
    regions: Vec<String>,
}

/// Splits `P/2+gaussian:10x10:2` into a peak and a blur. A `+` only
/// starts the blur when a letter follows, so `1e+6` stays a number.
pub fn parse_case(s: &str) -> Result<(f64, KernelSpec)> {
    let split = s
        .char_indices()
        .find(|&(i, c)| c == '+' && s[i + 1..].starts_with(|c: char| c.is_ascii_alphabetic()));
    let (peak, blur) = match split {
        Some((i, _)) => (
            &s[..i],
            s[i + 1..]
                .parse::<KernelSpec>()
                .map_err(|e| UsageError(format!("case `{s}`: {e}")))?,
        ),
        None => (s, KernelSpec::Identity),
    };
    Ok((io::parse_peak(peak)?, blur))
}

fn load_input(src: &ImageSource, base: &Path) -> Result<Input> {
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let (path, truth, name) = match src {
        ImageSource::Named(s) => {
            if let Some(rest) = s.strip_prefix("phantom:") {
                let (kind, seed) = rest.split_once(':').unwrap_or((rest, "0"));
                let kind: PhantomKind = kind.parse().map_err(|e| UsageError(format!("image `{s}`: {e}")))?;
                let seed: u64 = seed.parse().map_err(|_| UsageError(format!("image `{s}`: bad seed")))?;
                let p = kind.build(seed);
                return Ok(Input {
                    name: format!("{kind}{seed}"),
                    image: p.image,
                    truth: Some(p.truth),
                    regions: p.region_names,
                });
            }
            (PathBuf::from(s), None, None)
        }
        ImageSource::File { path, truth, name } => (path.clone(), truth.clone(), name.clone()),
    };
    let path = resolve(&path);
    let image = io::load_image(&path)?;
    let truth = truth.map(|t| io::load_labels(&resolve(&t))).transpose()?;
    let regions = truth
        .as_ref()
        .map(|t| (1..=t.k()).map(|l| format!("region{l}")).collect())
        .unwrap_or_default();
    let name = name.unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    Ok(Input {
        name,
        image,
        truth,
        regions,
    })
}

/// A named metric and its values across seeds.
type Metric = (String, Vec<f64>);

struct Cell {
    image: usize,
    case: usize,
    seed: u64,
    method: Method,
}

struct CellResult {
    dice: Option<Vec<f64>>,
    psnr_paper: f64,
    psnr_standard: f64,
    runtime: Option<f64>,
}

fn run_cell(cfg: &ExperimentConfig, inputs: &[Input], cases: &[(f64, KernelSpec)], cell: &Cell) -> Result<CellResult> {
    let input = &inputs[cell.image];
    let case = &cfg.cases[cell.case];
    let (peak, blur) = &cases[cell.case];
    let k = cfg
        .k
        .or(input.truth.as_ref().map(Segmentation::k))
        .ok_or_else(|| anyhow!("no `k` in the config and no ground truth for {}", input.name))?;
    let solver = AdmmConfig {
        lambda: case.lambda.unwrap_or(cfg.solver.lambda),
        mu: case.mu.unwrap_or(cfg.solver.mu),
        alpha: case.alpha.unwrap_or(cfg.solver.alpha),
        beta0: case.beta0.unwrap_or(cfg.solver.beta0),
        trace: false,
        ..cfg.solver
    };
    let kmeans = KmeansConfig {
        seed: cfg.kmeans_seed,
        exec: solver.exec,
        ..KmeansConfig::default()
    };
    // one noise stream per image, shared by all methods for paired comparisons
    let spec = DegradeSpec::new(*peak, blur.clone(), cell.seed)?.with_stream(cell.image as u64);
    let start = Instant::now();
    let counts = degrade_image(&input.image, &spec)?;
    let (f, normalization) = normalize_image(&counts)?;
    let out = run_method(&f, cell.method, &blur.build()?, &solver, k, &kmeans)?;
    let runtime = start.elapsed().as_secs_f64();

    let dice = input
        .truth
        .as_ref()
        .map(|t| region_dice(&out.segmentation, t, cell.method.match_mode()))
        .transpose()?;
    let clean_max = input
        .image
        .channels()
        .iter()
        .map(|c| c.max())
        .fold(f64::NEG_INFINITY, f64::max);
    let rescale = |img: &MultiChannelImage, s: f64| {
        MultiChannelImage::new(img.channels().iter().map(|c| c.map(|v| v * s)).collect())
    };
    let reference = rescale(&input.image, 1.0 / clean_max)?;
    let recon = rescale(&out.reconstruction, normalization / peak)?;
    Ok(CellResult {
        dice,
        psnr_paper: psnr(&reference, &recon, 1.0, PsnrVariant::Paper)?,
        psnr_standard: psnr(&reference, &recon, 1.0, PsnrVariant::Standard)?,
        runtime: cfg.record_runtime.then_some(runtime),
    })
}

/// Mean and sample standard deviation; the deviation is absent below two values.
fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

pub fn run(args: Args) -> Result<()> {
    let mut cfg = load(&args.config)?;
    if args.record_runtime {
        cfg.record_runtime = true;
    }
    if let Some(seeds) = args.seeds {
        cfg.noise_seeds = seeds;
    }
    if let Some(m) = args.max_iter {
        cfg.solver.max_iter = m;
    }
    if cfg.images.is_empty() || cfg.cases.is_empty() || cfg.methods.is_empty() || cfg.noise_seeds.is_empty() {
        return Err(UsageError("images, cases, methods and noise_seeds must be non-empty".into()).into());
    }
    if cfg.k.is_some_and(|k| k < 2) {
        return Err(UsageError("k must be at least 2".into()).into());
    }
    cfg.solver.validate()?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let inputs = cfg
        .images
        .iter()
        .map(|s| load_input(s, &base))
        .collect::<Result<Vec<_>>>()?;
    let cases = cfg
        .cases
        .iter()
        .map(|c| parse_case(&c.degrade))
        .collect::<Result<Vec<_>>>()?;
    let case_names: Vec<String> = cfg
        .cases
        .iter()
        .map(|c| c.name.clone().unwrap_or_else(|| c.degrade.clone()))
        .collect();
    for name in inputs.iter().map(|i| &i.name).chain(&case_names) {
        check_field("name", name)?;
    }

    let mut cells = Vec::new();
    for image in 0..inputs.len() {
        for case in 0..cases.len() {
            for &seed in &cfg.noise_seeds {
                for &method in &cfg.methods {
                    cells.push(Cell {
                        image,
                        case,
                        seed,
                        method,
                    });
                }
            }
        }
    }
    eprintln!("running {} cells", cells.len());
    let results: Vec<Result<CellResult>> = cells.par_iter().map(|c| run_cell(&cfg, &inputs, &cases, c)).collect();

    let row_name = |c: &Cell| format!("{}/{}/seed{}", inputs[c.image].name, case_names[c.case], c.seed);
    let mut dice_csv = format!("{DICE_HEADER}\n");
    let mut psnr_csv = format!("{PSNR_HEADER}\n");
    let mut failures = String::from("image,method,error\n");
    // (image/case, method) -> metric -> values, in first-seen order
    let mut groups: BTreeMap<(usize, usize, usize), Vec<Metric>> = BTreeMap::new();
    let mut ok = 0;
    for (cell, res) in cells.iter().zip(&results) {
        let m_idx = cfg.methods.iter().position(|&m| m == cell.method).unwrap();
        let name = row_name(cell);
        let r = match res {
            Ok(r) => r,
            Err(e) => {
                let msg = format!("{e:#}").replace([',', '\n', '"'], ";");
                let _ = writeln!(failures, "{name},{},{msg}", cell.method);
                eprintln!("cell {name} {} failed: {e:#}", cell.method);
                continue;
            }
        };
        ok += 1;
        let group = groups.entry((cell.image, cell.case, m_idx)).or_default();
        let mut push = |metric: String, v: f64| match group.iter_mut().find(|(m, _)| *m == metric) {
            Some((_, vs)) => vs.push(v),
            None => group.push((metric, vec![v])),
        };
        if let Some(d) = &r.dice {
            for (t, v) in d.iter().enumerate() {
                let region = &inputs[cell.image].regions[t];
                let _ = writeln!(dice_csv, "{name},{},{region},{}", cell.method, fmt_metric(*v));
                push(format!("dice:{region}"), *v);
            }
        }
        let runtime = r.runtime.map(fmt_metric).unwrap_or_default();
        let _ = writeln!(
            psnr_csv,
            "{name},{},{},{},{runtime}",
            cell.method,
            fmt_metric(r.psnr_paper),
            fmt_metric(r.psnr_standard)
        );
        push("psnr_paper".into(), r.psnr_paper);
        push("psnr_standard".into(), r.psnr_standard);
    }

    let mut summary = String::from("image,method,metric,mean,std,n\n");
    for ((image, case, m), metrics) in &groups {
        for (metric, values) in metrics {
            let (mean, std) = mean_std(values);
            let _ = writeln!(
                summary,
                "{}/{},{},{metric},{},{},{}",
                inputs[*image].name,
                case_names[*case],
                cfg.methods[*m],
                fmt_metric(mean),
                std.map(fmt_metric).unwrap_or_default(),
                values.len()
            );
        }
    }

    let dir = &args.output_dir;
    io::write_atomic(&dir.join("dice.csv"), dice_csv.as_bytes())?;
    io::write_atomic(&dir.join("psnr.csv"), psnr_csv.as_bytes())?;
    io::write_atomic(&dir.join("summary.csv"), summary.as_bytes())?;
    io::write_atomic(&dir.join("failures.csv"), failures.as_bytes())?;
    io::write_json(
        &dir.join("manifest.json"),
        &serde_json::json!({
            "tool": "aitv",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "experiment",
            "config": cfg,
            "cells": cells.len(),
            "failed": cells.len() - ok,
        }),
    )?;
    eprintln!("{ok}/{} cells succeeded; results in {}", cells.len(), dir.display());
    if ok == 0 {
        return Err(results
            .into_iter()
            .find_map(Result::err)
            .unwrap_or_else(|| anyhow!("no cells ran")));
    }
    Ok(())
}
