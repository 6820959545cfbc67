//! Synthetic degradation: peak scaling, circular blur, Poisson sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::segment::MultiChannelImage;
use crate::spectral::{self, KernelSpec};

/// Means below this use inversion, at or above it PTRS rejection.
const PTRS_THRESHOLD: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradeSpec {
    /// Maximum mean intensity before sampling.
    pub peak: f64,
    pub blur: KernelSpec,
    pub noise_seed: u64,
    /// Independent stream per image under a shared seed.
    #[serde(default)]
    pub stream: u64,
}

impl DegradeSpec {
    pub fn new(peak: f64, blur: KernelSpec, noise_seed: u64) -> Result<Self> {
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::parameter("peak", peak, "peak > 0"));
        }
        Ok(Self {
            peak,
            blur,
            noise_seed,
            stream: 0,
        })
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }
}

fn positive_max(g: &ImageGrid, what: &'static str) -> Result<f64> {
    let max = g.max();
    if !(max > 0.0) {
        return Err(Error::Domain {
            quantity: what,
            row: 0,
            col: 0,
            value: max,
        });
    }
    Ok(max)
}

/// `g · peak / max(g)`.
pub fn scale_to_peak(g: &ImageGrid, peak: f64) -> Result<ImageGrid> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::parameter("peak", peak, "peak > 0"));
    }
    let max = positive_max(g, "image maximum")?;
    if max == peak {
        return Ok(g.clone());
    }
    let s = peak / max;
    Ok(g.map(|v| v * s))
}

/// `(f / max(f), max(f))`.
pub fn normalize_01(f: &ImageGrid) -> Result<(ImageGrid, f64)> {
    let max = positive_max(f, "image maximum")?;
    Ok((f.map(|v| v / max), max))
}

/// The pinned generator for seed and stream.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws every pixel from `Poisson(mean)` in row-major order on stream 0.
pub fn poisson_sample(mean: &ImageGrid, seed: u64) -> Result<ImageGrid> {
    poisson_sample_with(mean, &mut noise_rng(seed, 0))
}

pub fn poisson_sample_with<R: Rng + ?Sized>(mean: &ImageGrid, rng: &mut R) -> Result<ImageGrid> {
    if let Some(k) = mean.as_slice().iter().position(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::Domain {
            quantity: "Poisson mean",
            row: k / mean.cols(),
            col: k % mean.cols(),
            value: mean.as_slice()[k],
        });
    }
    let data = mean.as_slice().iter().map(|&m| poisson(m, rng) as f64).collect();
    ImageGrid::new(mean.rows(), mean.cols(), data)
}

/// One draw from `Poisson(eta)`, `eta ≥ 0`.
pub fn poisson<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> u64 {
    if eta == 0.0 {
        0
    } else if eta < PTRS_THRESHOLD {
        poisson_inversion(eta, rng)
    } else {
        poisson_ptrs(eta, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-eta).exp();
    let mut cdf = p;
    // the tail beyond 1000 is far below f64 resolution for eta < 10
    while u > cdf && k < 1000 {
        k += 1;
        p *= eta / k as f64;
        cdf += p;
    }
    k
}

/// Hörmann's transformed rejection with squeeze.
fn poisson_ptrs<R: Rng + ?Sized>(eta: f64, rng: &mut R) -> u64 {
    let slam = eta.sqrt();
    let loglam = eta.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + eta + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -eta + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// Blurs `g` after scaling it to `spec.peak`; the Poisson mean image.
pub fn blurred_mean(g: &ImageGrid, spec: &DegradeSpec) -> Result<ImageGrid> {
    let scaled = scale_to_peak(g, spec.peak)?;
    let kernel = spec.blur.build()?;
    if kernel.is_identity() {
        return Ok(scaled);
    }
    let h = spectral::kernel_spectrum(&kernel, g.rows(), g.cols())?;
    // FFT round-off can leave tiny negatives where the image is zero
    Ok(spectral::circular_convolve(&scaled, &h)?.map(|v| v.max(0.0)))
}

/// `Poisson(A · scale_to_peak(g))`.
pub fn degrade(g: &ImageGrid, spec: &DegradeSpec) -> Result<ImageGrid> {
    let mean = blurred_mean(g, spec)?;
    poisson_sample_with(&mean, &mut noise_rng(spec.noise_seed, spec.stream))
}

/// Multichannel variant: one scale factor from the maximum over all
/// channels, then channels sampled in order from a single stream.
pub fn degrade_image(img: &MultiChannelImage, spec: &DegradeSpec) -> Result<MultiChannelImage> {
    let max = img
        .channels()
        .iter()
        .map(ImageGrid::max)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::Domain {
            quantity: "image maximum",
            row: 0,
            col: 0,
            value: max,
        });
    }
    let kernel = spec.blur.build()?;
    let (m, n) = img.dims();
    let h = spectral::kernel_spectrum(&kernel, m, n)?;
    let mut rng = noise_rng(spec.noise_seed, spec.stream);
    let s = spec.peak / max;
    let channels = img
        .channels()
        .iter()
        .map(|c| {
            let scaled = c.map(|v| v * s);
            let mean = if kernel.is_identity() {
                scaled
            } else {
                spectral::circular_convolve(&scaled, &h)?.map(|v| v.max(0.0))
            };
            poisson_sample_with(&mean, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiChannelImage::new(channels)
}

/// Divides every channel by the overall maximum.
pub fn normalize_image(img: &MultiChannelImage) -> Result<(MultiChannelImage, f64)> {
    let max = img
        .channels()
        .iter()
        .map(ImageGrid::max)
        .fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::Domain {
            quantity: "image maximum",
            row: 0,
            col: 0,
            value: max,
        });
    }
    let channels = img.channels().iter().map(|c| c.map(|v| v / max)).collect();
    Ok((MultiChannelImage::new(channels)?, max))
}
