//! Blur kernels, periodic convolution and the Fourier multipliers used by
//! the linear solve in the smoothing model.
//!
//! Convolution is circular: `(k ⊛ u)[i][j] = Σ_{r,c} k[r][c] · u[i - (r - ar)][j - (c - ac)]`
//! with `(ar, ac)` the kernel anchor and indices taken modulo the grid size.
//! The DFT is unnormalized forward and `1/(MN)` inverse.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::ImageGrid;

/// A small spatial kernel with an anchor pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
    anchor: (usize, usize),
}

impl ConvKernel {
    /// Wraps explicit taps; the anchor defaults to the MATLAB-style center
    /// `((rows - 1) / 2, (cols - 1) / 2)`.
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || taps.len() != rows * cols {
            return Err(Error::Data(format!("kernel {rows}x{cols} with {} taps", taps.len())));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("kernel taps must be finite".into()));
        }
        Ok(Self {
            rows,
            cols,
            taps,
            anchor: ((rows - 1) / 2, (cols - 1) / 2),
        })
    }

    pub fn with_anchor(mut self, row: usize, col: usize) -> Result<Self> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::Data(format!(
                "anchor ({row}, {col}) outside {}x{} kernel",
                self.rows, self.cols
            )));
        }
        self.anchor = (row, col);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn anchor(&self) -> (usize, usize) {
        self.anchor
    }

    pub fn tap(&self, r: usize, c: usize) -> f64 {
        self.taps[r * self.cols + c]
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    pub fn is_identity(&self) -> bool {
        self.taps.len() == 1 && self.taps[0] == 1.0
    }
}

/// Kernel names accepted on the command line: `identity`,
/// `gaussian:<rows>x<cols>:<sigma>` and `motion:<length>:<angle>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelSpec {
    Identity,
    Gaussian { rows: usize, cols: usize, sigma: f64 },
    Motion { length: f64, angle_deg: f64 },
}

impl KernelSpec {
    pub fn build(&self) -> Result<ConvKernel> {
        match *self {
            KernelSpec::Identity => Ok(identity_kernel()),
            KernelSpec::Gaussian { rows, cols, sigma } => gaussian_kernel(rows, cols, sigma),
            KernelSpec::Motion { length, angle_deg } => motion_kernel(length, angle_deg),
        }
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Data(format!("unrecognized kernel `{s}`"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["identity"] | ["none"] => Ok(KernelSpec::Identity),
            ["gaussian", size, sigma] => {
                let (r, c) = size.split_once('x').ok_or_else(bad)?;
                Ok(KernelSpec::Gaussian {
                    rows: r.parse().map_err(|_| bad())?,
                    cols: c.parse().map_err(|_| bad())?,
                    sigma: sigma.parse().map_err(|_| bad())?,
                })
            }
            ["motion", length, angle] => Ok(KernelSpec::Motion {
                length: length.parse().map_err(|_| bad())?,
                angle_deg: angle.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Identity => write!(f, "identity"),
            KernelSpec::Gaussian { rows, cols, sigma } => {
                write!(f, "gaussian:{rows}x{cols}:{sigma}")
            }
            KernelSpec::Motion { length, angle_deg } => write!(f, "motion:{length}:{angle_deg}"),
        }
    }
}

/// Rotationally symmetric Gaussian, `fspecial('gaussian', [rows cols], sigma)`.
///
/// Coordinates run over `-(K-1)/2 ..= (K-1)/2`, which is a half-integer grid
/// for even sizes. Taps below `eps · max` are zeroed before normalizing.
pub fn gaussian_kernel(rows: usize, cols: usize, sigma: f64) -> Result<ConvKernel> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::parameter("sigma", sigma, "sigma > 0"));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Data(format!("gaussian size {rows}x{cols}")));
    }
    let hr = (rows as f64 - 1.0) / 2.0;
    let hc = (cols as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..rows * cols)
        .map(|k| {
            let y = (k / cols) as f64 - hr;
            let x = (k % cols) as f64 - hc;
            (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let max = taps.iter().copied().fold(0.0, f64::max);
    for t in &mut taps {
        if *t < f64::EPSILON * max {
            *t = 0.0;
        }
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    ConvKernel::new(rows, cols, taps)
}

/// Linear camera-motion kernel, `fspecial('motion', length, angle)`.
///
/// The segment of `length` pixels through the kernel center at `angle_deg`
/// (counterclockwise) is rasterized with weights `1 - d`, where `d` is the
/// distance of the pixel center to the segment, so partially covered pixels
/// get fractional weight.
pub fn motion_kernel(length: f64, angle_deg: f64) -> Result<ConvKernel> {
    if !(length >= 1.0) || !length.is_finite() {
        return Err(Error::parameter("length", length, "length >= 1"));
    }
    if !angle_deg.is_finite() {
        return Err(Error::parameter("angle", angle_deg, "finite angle"));
    }
    let eps = f64::EPSILON;
    let half = (length - 1.0) / 2.0;
    let phi = angle_deg.rem_euclid(180.0) / 180.0 * PI;
    let (sinphi, cosphi) = phi.sin_cos();
    let xsign = if cosphi > 0.0 {
        1.0
    } else if cosphi < 0.0 {
        -1.0
    } else {
        0.0
    };
    let linewdt = 1.0;

    // half-kernel mesh, x in 0, xsign, .., sx and y in 0..=sy
    let sx = (half * cosphi + linewdt * xsign - length * eps).trunc();
    let sy = (half * sinphi + linewdt - length * eps).trunc();
    let nx = if xsign == 0.0 {
        1
    } else {
        (sx / xsign).floor() as usize + 1
    };
    let ny = sy.max(0.0) as usize + 1;

    let mut dist = vec![0.0; ny * nx];
    for r in 0..ny {
        for c in 0..nx {
            let x = c as f64 * xsign;
            let y = r as f64;
            let mut d = y * cosphi - x * sinphi;
            let rad = x.hypot(y);
            if rad >= half && d.abs() <= linewdt {
                let x2last = half - ((x + d * sinphi) / cosphi).abs();
                d = (d * d + x2last * x2last).sqrt();
            }
            let w = linewdt + eps - d.abs();
            dist[r * nx + c] = if w < 0.0 { 0.0 } else { w };
        }
    }

    // unfold: rot180(half) in the top-left block, half in the bottom-right,
    // sharing the center pixel
    let rows = 2 * ny - 1;
    let cols = 2 * nx - 1;
    let mut h = vec![0.0; rows * cols];
    for r in 0..ny {
        for c in 0..nx {
            h[(ny - 1 - r) * cols + (nx - 1 - c)] = dist[r * nx + c];
        }
    }
    for r in 0..ny {
        for c in 0..nx {
            h[(ny - 1 + r) * cols + (nx - 1 + c)] = dist[r * nx + c];
        }
    }
    let total: f64 = h.iter().sum::<f64>() + eps * length * length;
    h.iter_mut().for_each(|t| *t /= total);
    if cosphi > 0.0 {
        // flip upside down
        let flipped: Vec<f64> = (0..rows)
            .flat_map(|r| h[(rows - 1 - r) * cols..(rows - r) * cols].to_vec())
            .collect();
        h = flipped;
    }
    ConvKernel::new(rows, cols, h)
}

/// The single unit tap: `A = I`.
pub fn identity_kernel() -> ConvKernel {
    ConvKernel {
        rows: 1,
        cols: 1,
        taps: vec![1.0],
        anchor: (0, 0),
    }
}

/// Cached row/column FFT plans for one grid size.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    exec: Exec,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize, exec: Exec) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
            exec,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// In-place unnormalized forward 2D DFT of a row-major buffer.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    /// In-place inverse 2D DFT, scaled by `1/(rows·cols)`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        exec::chunks_mut(self.exec, buf, exec::CHUNK, |_, c| {
            c.iter_mut().for_each(|z| *z *= scale)
        });
    }

    /// Forward DFT of a real grid.
    pub fn forward_real(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn run(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (m, n) = (self.rows, self.cols);
        assert_eq!(buf.len(), m * n, "FFT buffer size");
        if n > 1 {
            self.pass(buf, n, m, row);
        }
        if m > 1 {
            let mut t = transpose(buf, m, n);
            self.pass(&mut t, m, n, col);
            transpose_into(&t, n, m, buf);
        }
    }

    /// Transforms `count` contiguous rows of length `len`.
    fn pass(&self, buf: &mut [Complex64], len: usize, count: usize, fft: &Arc<dyn Fft<f64>>) {
        let rows_per_task = (exec::CHUNK / len).max(1).min(count);
        exec::chunks_mut(self.exec, buf, rows_per_task * len, |_, block| {
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(block, &mut scratch);
        });
    }
}

fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); src.len()];
    transpose_into(src, rows, cols, &mut dst);
    dst
}

fn transpose_into(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    const B: usize = 32;
    for ib in (0..rows).step_by(B) {
        for jb in (0..cols).step_by(B) {
            for i in ib..(ib + B).min(rows) {
                for j in jb..(jb + B).min(cols) {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
}

/// Fourier multipliers of a periodic linear operator on `rows × cols` grids.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralKernel {
    rows: usize,
    cols: usize,
    multipliers: Vec<Complex64>,
}

impl SpectralKernel {
    pub fn new(rows: usize, cols: usize, multipliers: Vec<Complex64>) -> Result<Self> {
        if multipliers.len() != rows * cols {
            return Err(Error::Dimension {
                expected: (rows, cols),
                found: (multipliers.len(), 1),
            });
        }
        Ok(Self {
            rows,
            cols,
            multipliers,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn multipliers(&self) -> &[Complex64] {
        &self.multipliers
    }

    pub fn at(&self, p: usize, q: usize) -> Complex64 {
        self.multipliers[p * self.cols + q]
    }

    /// Multiplier of the zero frequency, i.e. the operator's gain on constants.
    pub fn dc(&self) -> Complex64 {
        self.multipliers[0]
    }

    /// Elementwise product: the spectrum of the composed operator.
    pub fn compose(&self, other: &SpectralKernel) -> Result<SpectralKernel> {
        if self.dims() != other.dims() {
            return Err(Error::Dimension {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        let multipliers = self
            .multipliers
            .iter()
            .zip(&other.multipliers)
            .map(|(a, b)| a * b)
            .collect();
        Ok(SpectralKernel {
            rows: self.rows,
            cols: self.cols,
            multipliers,
        })
    }

    /// Spectrum of the adjoint operator.
    pub fn adjoint(&self) -> SpectralKernel {
        SpectralKernel {
            rows: self.rows,
            cols: self.cols,
            multipliers: self.multipliers.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Largest deviation from conjugate symmetry `H[-p][-q] = conj(H[p][q])`.
    pub fn asymmetry(&self) -> f64 {
        let (m, n) = (self.rows, self.cols);
        let mut worst: f64 = 0.0;
        for p in 0..m {
            for q in 0..n {
                let a = self.at(p, q);
                let b = self.at((m - p) % m, (n - q) % n).conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst
    }
}

/// DFT of the kernel zero-padded to `rows × cols` with its anchor moved to
/// index `(0, 0)`.
pub fn kernel_spectrum(k: &ConvKernel, rows: usize, cols: usize) -> Result<SpectralKernel> {
    if k.rows > rows || k.cols > cols {
        return Err(Error::Dimension {
            expected: (rows, cols),
            found: (k.rows, k.cols),
        });
    }
    let mut buf = vec![Complex64::default(); rows * cols];
    let (ar, ac) = k.anchor;
    for r in 0..k.rows {
        for c in 0..k.cols {
            let i = (r + rows - ar) % rows;
            let j = (c + cols - ac) % cols;
            buf[i * cols + j] += Complex64::new(k.tap(r, c), 0.0);
        }
    }
    Fft2::new(rows, cols, Exec::Sequential).forward(&mut buf);
    SpectralKernel::new(rows, cols, buf)
}

/// Multipliers of the periodic Laplacian `Δ = −∇ᵀ∇`:
/// `2cos(2πp/M) + 2cos(2πq/N) − 4`.
pub fn laplacian_spectrum(rows: usize, cols: usize) -> SpectralKernel {
    let multipliers = (0..rows * cols)
        .map(|k| {
            let p = (k / cols) as f64;
            let q = (k % cols) as f64;
            let v = 2.0 * (2.0 * PI * p / rows as f64).cos() + 2.0 * (2.0 * PI * q / cols as f64).cos() - 4.0;
            Complex64::new(v, 0.0)
        })
        .collect();
    SpectralKernel {
        rows,
        cols,
        multipliers,
    }
}

/// `F⁻¹(spec ∘ F(u))`, checking that the imaginary residue is negligible.
pub fn circular_convolve(u: &ImageGrid, spec: &SpectralKernel) -> Result<ImageGrid> {
    u.check_dims(spec.dims())?;
    let fft = Fft2::new(u.rows(), u.cols(), Exec::Sequential);
    let mut buf = fft.forward_real(u.as_slice());
    for (z, h) in buf.iter_mut().zip(&spec.multipliers) {
        *z *= h;
    }
    fft.inverse(&mut buf);
    let residue = buf.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    let bound = 1e-8 * u.norm_inf();
    if residue > bound && residue > f64::MIN_POSITIVE {
        return Err(Error::ImaginaryResidue { residue, bound });
    }
    Ok(ImageGrid::from_vec(
        u.rows(),
        u.cols(),
        buf.into_iter().map(|z| z.re).collect(),
    ))
}
