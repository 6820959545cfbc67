use std::fmt;

use aitv_core::metrics::MatchMode;
use aitv_core::segment::{sat_pipeline, slat_pipeline, KmeansConfig, MultiChannelImage, Segmentation};
use aitv_core::spectral::ConvKernel;
use aitv_core::{AdmmConfig, RegMode, SmoothOutcome};
use anyhow::{bail, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    AitvSat,
    TvSat,
    AitvSlat,
    TvSlat,
}

impl Method {
    pub fn mode(self) -> RegMode {
        match self {
            Method::AitvSat | Method::AitvSlat => RegMode::Aitv,
            Method::TvSat | Method::TvSlat => RegMode::Iso,
        }
    }

    pub fn is_color(self) -> bool {
        matches!(self, Method::AitvSlat | Method::TvSlat)
    }

    /// Grayscale labels come out ordered by intensity; color labels do not.
    pub fn match_mode(self) -> MatchMode {
        if self.is_color() {
            MatchMode::GreedyDice
        } else {
            MatchMode::Identity
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::AitvSat => "aitv-sat",
            Method::TvSat => "tv-sat",
            Method::AitvSlat => "aitv-slat",
            Method::TvSlat => "tv-slat",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub struct MethodOutput {
    pub segmentation: Segmentation,
    /// Piecewise-constant image in the units of the input.
    pub reconstruction: MultiChannelImage,
    pub smoothed: MultiChannelImage,
    pub smooth: Vec<SmoothOutcome>,
}

/// Runs SaT on one channel or SLaT on three, picking the regularizer from `method`.
pub fn run_method(
    f: &MultiChannelImage,
    method: Method,
    kernel: &ConvKernel,
    config: &AdmmConfig,
    k: usize,
    kmeans: &KmeansConfig,
) -> Result<MethodOutput> {
    let config = AdmmConfig {
        mode: method.mode(),
        ..*config
    };
    match (f.depth(), method.is_color()) {
        (1, false) => {
            let out = sat_pipeline(f.channel(0), kernel, &config, k, kmeans)?;
            Ok(MethodOutput {
                segmentation: out.segmentation,
                reconstruction: MultiChannelImage::gray(out.reconstruction),
                smoothed: MultiChannelImage::gray(out.smooth.u.clone()),
                smooth: vec![out.smooth],
            })
        }
        (3, true) => {
            let out = slat_pipeline(f, kernel, &config, k, kmeans)?;
            Ok(MethodOutput {
                segmentation: out.segmentation,
                reconstruction: out.reconstruction,
                smoothed: MultiChannelImage::new(out.smooth.iter().map(|s| s.u.clone()).collect())?,
                smooth: out.smooth,
            })
        }
        (1, true) => bail!("{method} needs a color image; use a -sat method for grayscale input"),
        (3, false) => bail!("{method} needs a grayscale image; use a -slat method for color input"),
        (d, _) => bail!("unsupported channel count {d}"),
    }
}
