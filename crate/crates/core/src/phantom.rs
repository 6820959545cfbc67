//! Built-in test images with exact ground truth.
//!
//! * [`drive_like`]: 584×565 retinal vessel tree, background 200, vessels 255.
//! * [`brain_like`]: 104×87 axial slice, background/CSF/GM/WM at 10/48/106/154.
//! * [`color_shapes`]: 375×500 RGB scene with six flat colors.
//!
//! All generators are deterministic in their seed.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;
use crate::segment::{MultiChannelImage, Segmentation};

/// Nominal dynamic range of 8-bit images.
pub const P: f64 = 255.0;

#[derive(Clone, Debug)]
pub struct Phantom {
    /// Clean image in 8-bit units.
    pub image: MultiChannelImage,
    /// Ground-truth regions; centroid `l` holds region `l`'s color.
    pub truth: Segmentation,
    pub region_names: Vec<String>,
}

impl Phantom {
    fn from_labels(rows: usize, cols: usize, labels: Vec<usize>, colors: &[Vec<f64>], names: &[&str]) -> Self {
        let d = colors[0].len();
        let channels = (0..d)
            .map(|l| ImageGrid::new(rows, cols, labels.iter().map(|&r| colors[r][l]).collect()).unwrap())
            .collect();
        Self {
            image: MultiChannelImage::new(channels).expect("phantom colors have 1 or 3 channels"),
            truth: Segmentation::new(rows, cols, labels, colors.to_vec()).expect("labels index the palette"),
            region_names: names.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn k(&self) -> usize {
        self.truth.k()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    Drive,
    Brain,
    Color,
}

impl PhantomKind {
    pub fn build(self, seed: u64) -> Phantom {
        match self {
            PhantomKind::Drive => drive_like(seed),
            PhantomKind::Brain => brain_like(seed),
            PhantomKind::Color => color_shapes(seed),
        }
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "drive" => Ok(PhantomKind::Drive),
            "brain" => Ok(PhantomKind::Brain),
            "color" => Ok(PhantomKind::Color),
            _ => Err(Error::Data(format!("unknown phantom `{s}` (drive, brain, color)"))),
        }
    }
}

impl fmt::Display for PhantomKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhantomKind::Drive => "drive",
            PhantomKind::Brain => "brain",
            PhantomKind::Color => "color",
        })
    }
}

struct Canvas {
    rows: usize,
    cols: usize,
    on: Vec<bool>,
}

impl Canvas {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            on: vec![false; rows * cols],
        }
    }

    /// Marks pixels within `radius` of the segment `a`–`b`.
    fn capsule(&mut self, a: (f64, f64), b: (f64, f64), radius: f64) {
        let r2 = radius * radius;
        let lo_i = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
        let hi_i = ((a.0.max(b.0) + radius).ceil() as usize).min(self.rows - 1);
        let lo_j = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
        let hi_j = ((a.1.max(b.1) + radius).ceil() as usize).min(self.cols - 1);
        let (di, dj) = (b.0 - a.0, b.1 - a.1);
        let len2 = di * di + dj * dj;
        for i in lo_i..=hi_i {
            for j in lo_j..=hi_j {
                let (pi, pj) = (i as f64 - a.0, j as f64 - a.1);
                let t = if len2 > 0.0 {
                    ((pi * di + pj * dj) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (ei, ej) = (pi - t * di, pj - t * dj);
                if ei * ei + ej * ej <= r2 {
                    self.on[i * self.cols + j] = true;
                }
            }
        }
    }
}

struct Branch {
    pos: (f64, f64),
    heading: f64,
    width: f64,
    length: f64,
}

/// Binary vessel phantom. Trunks leave an optic disc near the left edge
/// and branch repeatedly, thinning from 8 px down to 2 px.
pub fn drive_like(seed: u64) -> Phantom {
    let (rows, cols) = (584, 565);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut canvas = Canvas::new(rows, cols);
    let disc = (
        292.0 + rng.random_range(-20.0..20.0),
        110.0 + rng.random_range(-15.0..15.0),
    );

    let mut stack: Vec<Branch> = [-1.0f64, -0.35, 0.35, 1.0, PI - 0.6, PI + 0.6]
        .iter()
        .map(|&h| Branch {
            pos: disc,
            heading: h - PI / 2.0 + rng.random_range(-0.15..0.15),
            width: 8.0,
            length: rng.random_range(380.0..520.0),
        })
        .collect();
    // headings are measured from the +column axis, counterclockwise in image rows
    for b in &mut stack {
        b.heading += PI / 2.0;
    }

    let step = 3.0;
    let mut segments = 0usize;
    while let Some(mut b) = stack.pop() {
        let mut since_fork = 0.0;
        let mut next_fork = rng.random_range(45.0..95.0);
        let mut bend = 0.0;
        while b.length > 0.0 && segments < 200_000 {
            bend = 0.8 * bend + rng.random_range(-0.05..0.05);
            b.heading += bend;
            let next = (b.pos.0 - step * b.heading.sin(), b.pos.1 + step * b.heading.cos());
            if next.0 < -10.0 || next.0 > rows as f64 + 10.0 || next.1 < -10.0 || next.1 > cols as f64 + 10.0 {
                break;
            }
            canvas.capsule(b.pos, next, b.width / 2.0);
            segments += 1;
            b.pos = next;
            b.length -= step;
            since_fork += step;
            if since_fork >= next_fork && b.width > 2.5 {
                since_fork = 0.0;
                next_fork = rng.random_range(45.0..95.0);
                let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let child_width = (b.width * rng.random_range(0.55..0.75)).max(2.0);
                stack.push(Branch {
                    pos: b.pos,
                    heading: b.heading + side * rng.random_range(0.5..1.1),
                    width: child_width,
                    length: b.length * rng.random_range(0.4..0.7),
                });
                b.width = (b.width * 0.88).max(2.0);
                b.heading -= side * 0.15;
            }
        }
    }

    let labels = canvas.on.iter().map(|&v| v as usize).collect();
    Phantom::from_labels(
        rows,
        cols,
        labels,
        &[vec![200.0], vec![255.0]],
        &["background", "vessel"],
    )
}

/// Four-phase brain slice: an elliptic head with a wavy cortical ribbon,
/// sulcal CSF, two ventricles, and deep gray nuclei.
pub fn brain_like(seed: u64) -> Phantom {
    let (rows, cols) = (104usize, 87usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: [f64; 3] = [
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
        rng.random_range(0.0..2.0 * PI),
    ];
    let (ci, cj) = (rows as f64 / 2.0 - 0.5, cols as f64 / 2.0 - 0.5);
    let (a, b) = (47.0, 39.0);
    let sulci: Vec<f64> = (0..10)
        .map(|s| s as f64 * 2.0 * PI / 10.0 + rng.random_range(-0.2..0.2))
        .collect();

    let in_ellipse = |i: f64, j: f64, c: (f64, f64), r: (f64, f64), tilt: f64| {
        let (di, dj) = (i - c.0, j - c.1);
        let (u, v) = (di * tilt.cos() + dj * tilt.sin(), -di * tilt.sin() + dj * tilt.cos());
        (u / r.0).powi(2) + (v / r.1).powi(2) <= 1.0
    };

    let mut labels = vec![0usize; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let (y, x) = (i as f64, j as f64);
            let (dy, dx) = ((y - ci) / a, (x - cj) / b);
            let rho = dy.hypot(dx);
            let theta = dy.atan2(dx);
            let outer = 1.0 + 0.02 * (5.0 * theta + phase[0]).sin();
            let cortex = 0.86 + 0.035 * (7.0 * theta + phase[1]).sin();
            let white = 0.66 + 0.06 * (9.0 * theta + phase[2]).sin() + 0.025 * (17.0 * theta).sin();
            let label = if rho > outer {
                0
            } else if rho > cortex {
                1
            } else if rho > white {
                let in_sulcus = rho > white + 0.05
                    && sulci.iter().any(|&s| {
                        let d = (theta - s + PI).rem_euclid(2.0 * PI) - PI;
                        d.abs() * rho * 40.0 < 1.3
                    });
                if in_sulcus {
                    1
                } else {
                    2
                }
            } else {
                3
            };
            labels[i * cols + j] = label;
        }
    }
    // ventricles and deep nuclei
    for i in 0..rows {
        for j in 0..cols {
            let (y, x) = (i as f64, j as f64);
            let k = i * cols + j;
            if labels[k] != 3 {
                continue;
            }
            for side in [-1.0, 1.0] {
                if in_ellipse(y, x, (ci - 4.0, cj + side * 6.0), (13.0, 3.5), side * 0.25) {
                    labels[k] = 1;
                } else if in_ellipse(y, x, (ci + 8.0, cj + side * 13.0), (7.0, 4.0), -side * 0.3) {
                    labels[k] = 2;
                }
            }
        }
    }
    Phantom::from_labels(
        rows,
        cols,
        labels,
        &[vec![10.0], vec![48.0], vec![106.0], vec![154.0]],
        &["background", "CSF", "GM", "WM"],
    )
}

/// Six flat colors: sky, ground, and four overlapping shapes.
pub fn color_shapes(seed: u64) -> Phantom {
    let (rows, cols) = (375usize, 500usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |s: f64| rng.random_range(-s..s);
    let horizon = 250.0 + jitter(15.0);
    let sun = (90.0 + jitter(10.0), 390.0 + jitter(15.0), 50.0);
    let house = (150.0 + jitter(10.0), 60.0 + jitter(10.0), 300.0, 200.0 + jitter(10.0));
    let roof_peak = (80.0 + jitter(8.0), (house.1 + house.3) / 2.0);
    let bush = (275.0 + jitter(8.0), 330.0 + jitter(15.0), 35.0, 95.0);

    let mut labels = vec![0usize; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let (y, x) = (i as f64, j as f64);
            let mut l = if y + 12.0 * (x / 60.0).sin() > horizon { 1 } else { 0 };
            if (y - sun.0).hypot(x - sun.1) <= sun.2 {
                l = 2;
            }
            if y >= house.0 && y <= house.2 && x >= house.1 && x <= house.3 {
                l = 3;
            }
            // isosceles roof over the house
            let half = (house.3 - house.1) / 2.0 + 15.0;
            let t = (y - roof_peak.0) / (house.0 - roof_peak.0);
            if (0.0..=1.0).contains(&t) && (x - roof_peak.1).abs() <= t * half {
                l = 4;
            }
            if ((y - bush.0) / bush.2).powi(2) + ((x - bush.1) / bush.3).powi(2) <= 1.0 {
                l = 5;
            }
            labels[i * cols + j] = l;
        }
    }
    let palette = [
        vec![90.0, 150.0, 215.0],
        vec![120.0, 95.0, 60.0],
        vec![245.0, 215.0, 70.0],
        vec![235.0, 235.0, 230.0],
        vec![190.0, 45.0, 40.0],
        vec![40.0, 130.0, 55.0],
    ];
    Phantom::from_labels(
        rows,
        cols,
        labels,
        &palette,
        &["sky", "ground", "sun", "wall", "roof", "bush"],
    )
}

/// A disk of value `inside` on a background of `outside`, for quick tests.
pub fn disk(rows: usize, cols: usize, outside: f64, inside: f64) -> Phantom {
    let (ci, cj) = (rows as f64 / 2.0, cols as f64 / 2.0);
    let r = rows.min(cols) as f64 / 3.0;
    let labels = (0..rows * cols)
        .map(|k| {
            let (i, j) = ((k / cols) as f64, (k % cols) as f64);
            usize::from((i - ci).hypot(j - cj) <= r)
        })
        .collect();
    Phantom::from_labels(
        rows,
        cols,
        labels,
        &[vec![outside], vec![inside]],
        &["background", "disk"],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fractions(p: &Phantom) -> Vec<f64> {
        let n = p.truth.labels().len() as f64;
        p.truth.sizes().iter().map(|&c| c as f64 / n).collect()
    }

    #[test]
    fn drive_phantom_shape() {
        let p = drive_like(0);
        assert_eq!(p.image.dims(), (584, 565));
        let f = fractions(&p);
        assert!(f[1] > 0.06 && f[1] < 0.2, "vessel fraction {}", f[1]);
        let values: Vec<f64> = p.image.channel(0).as_slice().to_vec();
        assert!(values.iter().all(|&v| v == 200.0 || v == 255.0));
    }

    #[test]
    fn brain_phantom_has_four_phases() {
        let p = brain_like(0);
        assert_eq!(p.image.dims(), (104, 87));
        assert_eq!(p.k(), 4);
        for (l, &f) in fractions(&p).iter().enumerate() {
            assert!(f > 0.05, "region {l} covers only {f}");
        }
    }

    #[test]
    fn color_phantom_has_six_colors() {
        let p = color_shapes(0);
        assert_eq!(p.image.dims(), (375, 500));
        assert_eq!(p.image.depth(), 3);
        assert!(p.truth.sizes().iter().all(|&c| c > 2000));
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(drive_like(4).truth, drive_like(4).truth);
        assert_ne!(drive_like(4).truth, drive_like(5).truth);
        assert_eq!(brain_like(1).truth, brain_like(1).truth);
    }
}
