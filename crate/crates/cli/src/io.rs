//! Image and text I/O, atomic writes.
//!
//! Plain-text images start with a `rows cols` header (one channel) or
//! `rows cols depth` (depth channels stacked one after another). Values are
//! printed in shortest round-trip form, so text files are exact.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use aitv_core::segment::{MultiChannelImage, Segmentation};
use aitv_core::ImageGrid;
use anyhow::{bail, Context, Result};
use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::Serialize;

use crate::UsageError;

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn is_text(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("txt"))
}

/// Loads PNG/PGM/PPM (8 or 16 bit, in native units) or a text image.
pub fn load_image(path: &Path) -> Result<MultiChannelImage> {
    if is_text(path) {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return parse_text_image(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let img = image::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() == 2;
    let channels = match (gray, sixteen) {
        (true, false) => vec![img.to_luma8().pixels().map(|p| p.0[0] as f64).collect::<Vec<_>>()],
        (true, true) => vec![img.to_luma16().pixels().map(|p| p.0[0] as f64).collect()],
        (false, false) => split_rgb(img.to_rgb8().pixels().map(|p| p.0.map(f64::from))),
        (false, true) => split_rgb(img.to_rgb16().pixels().map(|p| p.0.map(f64::from))),
    };
    let grids = channels
        .into_iter()
        .map(|c| ImageGrid::new(h, w, c))
        .collect::<aitv_core::Result<Vec<_>>>()?;
    Ok(MultiChannelImage::new(grids)?)
}

fn split_rgb(pixels: impl Iterator<Item = [f64; 3]>) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(), Vec::new(), Vec::new()];
    for p in pixels {
        for (c, v) in out.iter_mut().zip(p) {
            c.push(v);
        }
    }
    out
}

pub fn parse_text_image(text: &str) -> Result<MultiChannelImage> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty file")?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad header `{header}`"))?;
    let (rows, cols, depth) = match dims[..] {
        [r, c] => (r, c, 1),
        [r, c, d] => (r, c, d),
        _ => bail!("bad header `{header}`"),
    };
    let body: Vec<&str> = lines.collect();
    if body.len() != rows * depth {
        bail!("expected {} rows, found {}", rows * depth, body.len());
    }
    let grids = body
        .chunks(rows.max(1))
        .map(|block| ImageGrid::parse_text(&format!("{rows} {cols}\n{}", block.join("\n"))))
        .collect::<aitv_core::Result<Vec<_>>>()?;
    Ok(MultiChannelImage::new(grids)?)
}

pub fn image_text(img: &MultiChannelImage) -> String {
    if img.depth() == 1 {
        return img.channel(0).to_text();
    }
    let (m, n) = img.dims();
    let mut out = format!("{m} {n} {}\n", img.depth());
    for c in img.channels() {
        out.extend(c.to_text().split_once('\n').map(|(_, body)| body));
    }
    out
}

/// Loads a 1-based label map written by [`Segmentation::labels_text`].
pub fn load_labels(path: &Path) -> Result<Segmentation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let grid = ImageGrid::parse_text(&text).with_context(|| format!("parsing {}", path.display()))?;
    let (m, n) = grid.dims();
    let mut labels = Vec::with_capacity(m * n);
    for &v in grid.as_slice() {
        if v < 1.0 || v.fract() != 0.0 {
            bail!("{}: labels must be positive integers, found {v}", path.display());
        }
        labels.push(v as usize - 1);
    }
    let k = labels.iter().max().map_or(0, |&l| l + 1);
    Ok(Segmentation::from_labels(m, n, labels, k)?)
}

/// Quantizes `img / scale` to 8 bits.
pub fn save_png(path: &Path, img: &MultiChannelImage, scale: f64) -> Result<()> {
    let (m, n) = img.dims();
    let q = |v: f64| (v / scale * 255.0).round().clamp(0.0, 255.0) as u8;
    let dynamic = match img.depth() {
        1 => {
            let g = img.channel(0);
            DynamicImage::ImageLuma8(GrayImage::from_fn(n as u32, m as u32, |x, y| {
                Luma([q(g.get(y as usize, x as usize))])
            }))
        }
        3 => {
            let c = img.channels();
            DynamicImage::ImageRgb8(RgbImage::from_fn(n as u32, m as u32, |x, y| {
                let (i, j) = (y as usize, x as usize);
                Rgb([q(c[0].get(i, j)), q(c[1].get(i, j)), q(c[2].get(i, j))])
            }))
        }
        d => bail!("cannot write a {d}-channel image as PNG"),
    };
    let mut bytes = Vec::new();
    dynamic.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    write_atomic(path, &bytes)
}

/// Gray label map with levels spread over 0..=255.
pub fn save_labels_png(path: &Path, seg: &Segmentation) -> Result<()> {
    let (m, n) = seg.dims();
    let step = if seg.k() > 1 { 255 / (seg.k() - 1) } else { 0 };
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = GrayImage::from_fn(n as u32, m as u32, |x, y| {
        Luma([(seg.label(y as usize, x as usize) * step).min(255) as u8])
    });
    let mut bytes = Vec::new();
    DynamicImage::ImageLuma8(img).write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    write_atomic(path, &bytes)
}

/// Writes `<stem>.png` and `<stem>.txt` in `dir`.
pub fn save_image_pair(dir: &Path, stem: &str, img: &MultiChannelImage, scale: f64) -> Result<()> {
    save_png(&dir.join(format!("{stem}.png")), img, scale)?;
    write_atomic(&dir.join(format!("{stem}.txt")), image_text(img).as_bytes())
}

/// Peak strings: a number, `P`, or `P/n`, where `P` is the 8-bit range 255.
pub fn parse_peak(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = if let Some(rest) = s.strip_prefix('P') {
        let div = match rest.strip_prefix('/') {
            Some(d) => d
                .trim()
                .parse::<f64>()
                .map_err(|_| UsageError(format!("bad peak `{s}`")))?,
            None if rest.is_empty() => 1.0,
            None => return Err(UsageError(format!("bad peak `{s}`")).into()),
        };
        aitv_core::phantom::P / div
    } else {
        s.parse::<f64>().map_err(|_| UsageError(format!("bad peak `{s}`")))?
    };
    if !(value > 0.0 && value.is_finite()) {
        return Err(UsageError(format!("peak must be positive, got `{s}`")).into());
    }
    Ok(value)
}
