//! Thresholding stage: k-means on smoothed intensities (SaT) or on
//! RGB+Lab feature vectors (SLaT), and piecewise-constant repainting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::ImageGrid;
use crate::solver::{admm_smooth, AdmmConfig, SmoothOutcome};
use crate::spectral::ConvKernel;

/// A stack of equally sized channels; `d ∈ {1, 3, 6}`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiChannelImage {
    channels: Vec<ImageGrid>,
}

impl MultiChannelImage {
    pub fn new(channels: Vec<ImageGrid>) -> Result<Self> {
        if ![1, 3, 6].contains(&channels.len()) {
            return Err(Error::Data(format!(
                "expected 1, 3 or 6 channels, found {}",
                channels.len()
            )));
        }
        let dims = channels[0].dims();
        for c in &channels[1..] {
            c.check_dims(dims)?;
        }
        Ok(Self { channels })
    }

    pub fn gray(g: ImageGrid) -> Self {
        Self { channels: vec![g] }
    }

    pub fn depth(&self) -> usize {
        self.channels.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn channel(&self, l: usize) -> &ImageGrid {
        &self.channels[l]
    }

    pub fn channels(&self) -> &[ImageGrid] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<ImageGrid> {
        self.channels
    }

    /// Pixel-major feature vectors, `d` values per pixel.
    pub fn interleaved(&self) -> Vec<f64> {
        let d = self.depth();
        let n = self.channels[0].len();
        let mut out = vec![0.0; n * d];
        for (l, c) in self.channels.iter().enumerate() {
            for (k, &v) in c.as_slice().iter().enumerate() {
                out[k * d + l] = v;
            }
        }
        out
    }
}

/// A partition of the grid into `k` labeled regions with their centroids.
/// Labels are 0-based here and 1-based in every serialized form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segmentation {
    rows: usize,
    cols: usize,
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
}

impl Segmentation {
    pub fn new(rows: usize, cols: usize, labels: Vec<usize>, centroids: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::Data(format!(
                "label map has {} entries for a {rows}x{cols} grid",
                labels.len()
            )));
        }
        let k = centroids.len();
        if k == 0 {
            return Err(Error::Infeasible("segmentation needs at least one region".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Data(format!("label {} exceeds region count {k}", bad + 1)));
        }
        let d = centroids[0].len();
        if centroids.iter().any(|c| c.len() != d) {
            return Err(Error::Data("centroids have mixed lengths".into()));
        }
        Ok(Self {
            rows,
            cols,
            labels,
            centroids,
        })
    }

    /// Ground-truth style segmentation; centroids are label indices.
    pub fn from_labels(rows: usize, cols: usize, labels: Vec<usize>, k: usize) -> Result<Self> {
        Self::new(rows, cols, labels, (0..k).map(|l| vec![l as f64]).collect())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn label(&self, i: usize, j: usize) -> usize {
        self.labels[i * self.cols + j]
    }

    /// Pixel counts per region.
    pub fn sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.k()];
        for &l in &self.labels {
            n[l] += 1;
        }
        n
    }

    /// Renames region `l` to `perm[l]`, carrying its centroid along.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k || perm.iter().any(|&p| p >= k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Data(format!("{perm:?} is not a permutation of 0..{k}")));
        }
        let mut centroids = vec![Vec::new(); k];
        for (l, c) in self.centroids.iter().enumerate() {
            centroids[perm[l]] = c.clone();
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            labels: self.labels.iter().map(|&l| perm[l]).collect(),
            centroids,
        })
    }

    /// Label matrix in the plain-text grid format, 1-based.
    pub fn labels_text(&self) -> String {
        let g = ImageGrid::from_fn(self.rows, self.cols, |i, j| (self.label(i, j) + 1) as f64);
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| format!("{}", g.get(i, j) as usize)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansConfig {
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    pub exec: Exec,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 10,
            max_iter: 100,
            exec: Exec::default(),
        }
    }
}

impl KmeansConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding on `points` (pixel-major,
/// `dim` values each). Keeps the restart with the lowest WCSS; ties go
/// to the earlier restart.
pub fn kmeans(points: &[f64], dim: usize, k: usize, config: &KmeansConfig) -> Result<KmeansResult> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Data(format!(
            "{} values do not split into {dim}-vectors",
            points.len()
        )));
    }
    if k == 0 {
        return Err(Error::parameter("k", 0.0, "k >= 1"));
    }
    if config.restarts == 0 {
        return Err(Error::parameter("restarts", 0.0, "restarts >= 1"));
    }
    let n = points.len() / dim;
    let distinct = count_distinct(points, dim, k);
    if distinct < k {
        return Err(Error::Infeasible(format!(
            "{k} clusters requested but only {distinct} distinct points"
        )));
    }
    let data = Points { data: points, dim, n };
    let runs = exec::map_collect(config.exec, config.restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(r as u64);
        lloyd(&data, k, &mut rng, config)
    });
    let mut best = None::<KmeansResult>;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

struct Points<'a> {
    data: &'a [f64],
    dim: usize,
    n: usize,
}

impl Points<'_> {
    fn at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distinct points, counting no further than `cap`.
fn count_distinct(points: &[f64], dim: usize, cap: usize) -> usize {
    let mut seen: Vec<&[f64]> = Vec::with_capacity(cap);
    for p in points.chunks_exact(dim) {
        if !seen.contains(&p) {
            seen.push(p);
            if seen.len() >= cap {
                break;
            }
        }
    }
    seen.len()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, x) in centroids.iter().enumerate() {
        let d = dist2(p, x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng>(data: &Points, k: usize, rng: &mut R, exec: Exec) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..data.n);
    let mut centroids = vec![data.at(first).to_vec()];
    let mut d2 = exec::map_collect(exec, data.n, |i| dist2(data.at(i), &centroids[0]));
    while centroids.len() < k {
        let total: f64 = exec::sum(exec, data.n, |i| d2[i]);
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("enough distinct points were checked up front");
        let c = data.at(pick).to_vec();
        let fresh = exec::map_collect(exec, data.n, |i| d2[i].min(dist2(data.at(i), &c)));
        d2 = fresh;
        centroids.push(c);
    }
    centroids
}

fn lloyd<R: Rng>(data: &Points, k: usize, rng: &mut R, config: &KmeansConfig) -> KmeansResult {
    let exec = config.exec;
    let mut centroids = seed_plus_plus(data, k, rng, exec);
    let mut labels = vec![usize::MAX; data.n];
    let mut iterations = 0;
    loop {
        let assigned = exec::map_collect(exec, data.n, |i| nearest(data.at(i), &centroids).0);
        let stable = assigned == labels;
        labels = assigned;
        if stable || iterations >= config.max_iter {
            break;
        }
        iterations += 1;
        centroids = update_means(data, &mut labels, k, &centroids);
    }
    // the last assignment may not have fed a mean update yet
    centroids = update_means(data, &mut labels, k, &centroids);
    let wcss = exec::sum(exec, data.n, |i| dist2(data.at(i), &centroids[labels[i]]));
    KmeansResult {
        centroids,
        labels,
        wcss,
        iterations,
    }
}

/// Member means; an empty cluster takes over the point farthest from
/// its current centroid.
fn update_means(data: &Points, labels: &mut [usize], k: usize, old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    loop {
        let mut sums = vec![vec![0.0; data.dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(data.at(i)) {
                *s += v;
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums
                .into_iter()
                .zip(counts)
                .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
                .collect();
        };
        let means: Vec<Vec<f64>> = (0..k)
            .map(|l| {
                if counts[l] == 0 {
                    old[l].clone()
                } else {
                    sums[l].iter().map(|v| v / counts[l] as f64).collect()
                }
            })
            .collect();
        let mut far = (0, -1.0);
        for (i, &l) in labels.iter().enumerate() {
            if counts[l] > 1 {
                let d = dist2(data.at(i), &means[l]);
                if d > far.1 {
                    far = (i, d);
                }
            }
        }
        labels[far.0] = empty;
    }
}

/// 1D k-means on intensities, relabeled so region 0 is the darkest.
pub fn threshold_grayscale(u: &ImageGrid, k: usize, config: &KmeansConfig) -> Result<Segmentation> {
    if k < 2 {
        return Err(Error::parameter("k", k as f64, "k >= 2"));
    }
    let res = kmeans(u.as_slice(), 1, k, config)?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| res.centroids[a][0].total_cmp(&res.centroids[b][0]));
    let mut perm = vec![0; k];
    for (rank, &l) in order.iter().enumerate() {
        perm[l] = rank;
    }
    Segmentation::new(u.rows(), u.cols(), res.labels, res.centroids)?.relabel(&perm)
}

/// sRGB (D65) to CIELAB. Inputs outside `[0, 1]` are clamped; the count of
/// clamped samples is returned alongside.
pub fn rgb_to_lab(rgb: &MultiChannelImage) -> Result<(MultiChannelImage, usize)> {
    if rgb.depth() != 3 {
        return Err(Error::Data(format!("expected 3 channels, found {}", rgb.depth())));
    }
    let (m, n) = rgb.dims();
    let mut clamped = 0;
    let mut out = [ImageGrid::zeros(m, n), ImageGrid::zeros(m, n), ImageGrid::zeros(m, n)];
    for k in 0..m * n {
        let mut px = [0.0; 3];
        for (l, p) in px.iter_mut().enumerate() {
            let v = rgb.channel(l).as_slice()[k];
            let c = v.clamp(0.0, 1.0);
            if c != v {
                clamped += 1;
            }
            *p = c;
        }
        let lab = srgb_pixel_to_lab(px);
        for l in 0..3 {
            out[l].as_mut_slice()[k] = lab[l];
        }
    }
    Ok((MultiChannelImage::new(out.into())?, clamped))
}

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

pub fn srgb_pixel_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    });
    // white = XYZ of (1,1,1), so neutral inputs land exactly on a = b = 0
    let t = RGB_TO_XYZ.map(|row| {
        let white: f64 = row.iter().sum();
        (row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]) / white
    });
    let f = t.map(|t| {
        const D: f64 = 6.0 / 29.0;
        if t > D * D * D {
            t.cbrt()
        } else {
            t / (3.0 * D * D) + 4.0 / 29.0
        }
    });
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// Min-max rescales to `[0, 1]`; a constant channel becomes all zeros.
pub fn min_max(g: &ImageGrid) -> ImageGrid {
    let (lo, hi) = (g.min(), g.max());
    if hi > lo {
        g.map(|v| (v - lo) / (hi - lo))
    } else {
        ImageGrid::zeros(g.rows(), g.cols())
    }
}

/// `(R, G, B, L, a, b)`, each channel min-max normalized.
pub fn lift_and_stack(rgb: &MultiChannelImage) -> Result<MultiChannelImage> {
    let clamped = MultiChannelImage::new(rgb.channels().iter().map(|c| c.map(|v| v.clamp(0.0, 1.0))).collect())?;
    let (lab, _) = rgb_to_lab(&clamped)?;
    let channels = clamped.channels().iter().chain(lab.channels()).map(min_max).collect();
    MultiChannelImage::new(channels)
}

/// Every pixel painted with its region's centroid.
pub fn piecewise_constant(seg: &Segmentation) -> Result<MultiChannelImage> {
    let (m, n) = seg.dims();
    let d = seg.centroids()[0].len();
    let channels = (0..d)
        .map(|l| {
            let data = seg.labels().iter().map(|&r| seg.centroids()[r][l]).collect();
            ImageGrid::new(m, n, data)
        })
        .collect::<Result<Vec<_>>>()?;
    MultiChannelImage::new(channels)
}

/// Per-region channel means of `img` under `seg`'s labels.
pub fn region_means(seg: &Segmentation, img: &MultiChannelImage) -> Result<Vec<Vec<f64>>> {
    let (m, n) = seg.dims();
    img.channel(0).check_dims((m, n))?;
    let (k, d) = (seg.k(), img.depth());
    let mut sums = vec![vec![0.0; d]; k];
    for (p, &r) in seg.labels().iter().enumerate() {
        for (l, s) in sums[r].iter_mut().enumerate() {
            *s += img.channel(l).as_slice()[p];
        }
    }
    let sizes = seg.sizes();
    Ok(sums
        .into_iter()
        .zip(sizes)
        .map(|(s, c)| s.into_iter().map(|v| if c > 0 { v / c as f64 } else { 0.0 }).collect())
        .collect())
}

#[derive(Clone, Debug)]
pub struct SatOutcome {
    pub segmentation: Segmentation,
    /// Piecewise-constant reconstruction.
    pub reconstruction: ImageGrid,
    pub smooth: SmoothOutcome,
}

/// Smooth, then threshold a grayscale image.
pub fn sat_pipeline(
    f: &ImageGrid,
    kernel: &ConvKernel,
    config: &AdmmConfig,
    k: usize,
    kmeans_config: &KmeansConfig,
) -> Result<SatOutcome> {
    let smooth = admm_smooth(f, kernel, *config)?;
    let segmentation = threshold_grayscale(&smooth.u, k, kmeans_config)?;
    let reconstruction = piecewise_constant(&segmentation)?.into_channels().remove(0);
    Ok(SatOutcome {
        segmentation,
        reconstruction,
        smooth,
    })
}

#[derive(Clone, Debug)]
pub struct SlatOutcome {
    /// Centroids live in the normalized six-channel feature space.
    pub segmentation: Segmentation,
    /// Region means of the smoothed RGB channels.
    pub reconstruction: MultiChannelImage,
    pub smooth: Vec<SmoothOutcome>,
}

/// Smooth each RGB channel, lift to RGB+Lab, then cluster the 6-vectors.
pub fn slat_pipeline(
    f: &MultiChannelImage,
    kernel: &ConvKernel,
    config: &AdmmConfig,
    k: usize,
    kmeans_config: &KmeansConfig,
) -> Result<SlatOutcome> {
    if f.depth() != 3 {
        return Err(Error::Data(format!(
            "expected an RGB image, found {} channels",
            f.depth()
        )));
    }
    let smooth = exec::map_collect(config.exec, 3, |l| admm_smooth(f.channel(l), kernel, *config))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let rgb = MultiChannelImage::new(smooth.iter().map(|s| s.u.map(|v| v.clamp(0.0, 1.0))).collect())?;
    let features = lift_and_stack(&rgb)?;
    let (m, n) = f.dims();
    let res = kmeans(&features.interleaved(), 6, k, kmeans_config)?;
    let segmentation = Segmentation::new(m, n, res.labels, res.centroids)?;
    let means = region_means(&segmentation, &rgb)?;
    let painted = Segmentation::new(m, n, segmentation.labels().to_vec(), means)?;
    Ok(SlatOutcome {
        reconstruction: piecewise_constant(&painted)?,
        segmentation,
        smooth,
    })
}
