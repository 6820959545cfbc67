//! Image rasters, periodic finite differences and the norms built on them.
//!
//! Pixels are stored row-major. `(i, j)` is row `i`, column `j`, both
//! 0-based. The horizontal difference is `(∇x u)[i][j] = u[i][j] - u[i][j-1]`
//! and the vertical one `(∇y u)[i][j] = u[i][j] - u[i-1][j]`, with indices
//! wrapping around (periodic boundary).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::spectral::{self, SpectralKernel};

/// An `rows × cols` raster of finite reals.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Data(format!("empty grid {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Data(format!(
                "grid {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at pixel ({}, {})",
                data[k],
                k / cols,
                k % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a grid without validating finiteness. Dimensions must match.
    pub(crate) fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        Self::from_vec(rows, cols, vec![value; rows * cols])
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self::from_vec(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_dims(other.dims())?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::from_vec(self.rows, self.cols, data))
    }

    pub fn check_dims(&self, found: (usize, usize)) -> Result<()> {
        if self.dims() != found {
            return Err(Error::Dimension {
                expected: self.dims(),
                found,
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        dot(Exec::Sequential, &self.data, &other.data)
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum(&self) -> f64 {
        exec::sum(Exec::Sequential, self.data.len(), |k| self.data[k])
    }

    /// Parses the plain-text matrix format: a `rows cols` header line
    /// followed by `rows` lines of `cols` whitespace-separated decimals.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("missing `rows cols` header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("bad header `{header}`: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(Error::Data(format!("bad header `{header}`")));
        };
        let mut data = Vec::with_capacity(rows * cols);
        for (r, line) in lines.enumerate() {
            let before = data.len();
            for tok in line.split_whitespace() {
                let v = tok
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("row {r}: bad value `{tok}`: {e}")))?;
                data.push(v);
            }
            if data.len() - before != cols {
                return Err(Error::Data(format!(
                    "row {r} has {} values, expected {cols}",
                    data.len() - before
                )));
            }
        }
        Self::new(rows, cols, data)
    }

    /// Formats in the plain-text matrix format. Values round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 20);
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for row in self.data.chunks(self.cols) {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn dot(exec: Exec, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    exec::sum(exec, a.len(), |k| a[k] * b[k])
}

/// A pair of grids: the horizontal and vertical component of a gradient-like
/// quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ImageGrid,
    pub y: ImageGrid,
}

impl VectorField {
    pub fn new(x: ImageGrid, y: ImageGrid) -> Result<Self> {
        x.check_dims(y.dims())?;
        Ok(Self { x, y })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            x: ImageGrid::zeros(rows, cols),
            y: ImageGrid::zeros(rows, cols),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.x.dims()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.x.dot(&other.x) + self.y.dot(&other.y)
    }

    /// Per-pixel vector `(x, y)` at flat index `k`.
    #[inline]
    pub fn at(&self, k: usize) -> [f64; 2] {
        [self.x.data[k], self.y.data[k]]
    }
}

/// Periodic forward-difference gradient.
pub fn gradient(u: &ImageGrid) -> VectorField {
    let mut out = VectorField::zeros(u.rows, u.cols);
    gradient_into(Exec::Sequential, u, &mut out);
    out
}

pub(crate) fn gradient_into(exec: Exec, u: &ImageGrid, out: &mut VectorField) {
    let (m, n) = u.dims();
    let src = &u.data;
    exec::chunks_mut(exec, &mut out.x.data, n, |i, row| {
        let r = &src[i * n..(i + 1) * n];
        row[0] = r[0] - r[n - 1];
        for j in 1..n {
            row[j] = r[j] - r[j - 1];
        }
    });
    exec::chunks_mut(exec, &mut out.y.data, n, |i, row| {
        let prev = if i == 0 { m - 1 } else { i - 1 };
        let r = &src[i * n..(i + 1) * n];
        let p = &src[prev * n..(prev + 1) * n];
        for j in 0..n {
            row[j] = r[j] - p[j];
        }
    });
}

/// `∇ᵀw`, the adjoint of [`gradient`] under the Euclidean inner products.
pub fn divergence_adjoint(w: &VectorField) -> ImageGrid {
    let (m, n) = w.dims();
    let mut out = ImageGrid::zeros(m, n);
    divergence_adjoint_into(Exec::Sequential, w, &mut out);
    out
}

pub(crate) fn divergence_adjoint_into(exec: Exec, w: &VectorField, out: &mut ImageGrid) {
    let (m, n) = w.dims();
    let wx = &w.x.data;
    let wy = &w.y.data;
    exec::chunks_mut(exec, &mut out.data, n, |i, row| {
        let next = if i + 1 == m { 0 } else { i + 1 };
        let x = &wx[i * n..(i + 1) * n];
        let y = &wy[i * n..(i + 1) * n];
        let yn = &wy[next * n..(next + 1) * n];
        for j in 0..n {
            let jn = if j + 1 == n { 0 } else { j + 1 };
            row[j] = (x[j] - x[jn]) + (y[j] - yn[j]);
        }
    });
}

/// `Σ |w_x| + |w_y|`.
pub fn norm_l1(w: &VectorField) -> f64 {
    let (x, y) = (w.x.as_slice(), w.y.as_slice());
    exec::sum(Exec::Sequential, x.len(), |k| x[k].abs() + y[k].abs())
}

/// `Σ sqrt(w_x² + w_y²)`.
pub fn norm_l21(w: &VectorField) -> f64 {
    let (x, y) = (w.x.as_slice(), w.y.as_slice());
    exec::sum(Exec::Sequential, x.len(), |k| x[k].hypot(y[k]))
}

/// Global Euclidean norm of the field.
pub fn norm_l2(w: &VectorField) -> f64 {
    w.dot(w).sqrt()
}

/// `‖∇u‖₁ − α‖∇u‖₂,₁`.
pub fn aitv_value(u: &ImageGrid, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let g = gradient(u);
    let (x, y) = (g.x.as_slice(), g.y.as_slice());
    Ok(exec::sum(Exec::Sequential, x.len(), |k| {
        x[k].abs() + y[k].abs() - alpha * x[k].hypot(y[k])
    }))
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::parameter("alpha", alpha, "0 <= alpha <= 1"));
    }
    Ok(())
}

/// Objective of the smoothing model:
/// `λ⟨Au − f log Au, 1⟩ + (μ/2)‖∇u‖₂² + ‖∇u‖₁ − α‖∇u‖₂,₁`.
pub fn energy(u: &ImageGrid, f: &ImageGrid, blur: &SpectralKernel, lambda: f64, mu: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    u.check_dims(f.dims())?;
    let au = spectral::circular_convolve(u, blur)?;
    let fidelity = poisson_fidelity(&au, f)?;
    let g = gradient(u);
    let smooth = 0.5 * mu * g.dot(&g);
    let reg = norm_l1(&g) - alpha * norm_l21(&g);
    Ok(lambda * fidelity + smooth + reg)
}

/// `⟨v − f log v, 1⟩`; requires `v > 0`.
pub(crate) fn poisson_fidelity(v: &ImageGrid, f: &ImageGrid) -> Result<f64> {
    if let Some(k) = v.data.iter().position(|&x| x <= 0.0 || x.is_nan()) {
        return Err(Error::Domain {
            quantity: "Au",
            row: k / v.cols,
            col: k % v.cols,
            value: v.data[k],
        });
    }
    let (vs, fs) = (v.as_slice(), f.as_slice());
    Ok(exec::sum(Exec::Sequential, vs.len(), |k| {
        let fk = fs[k];
        // 0·log v is taken as 0
        if fk == 0.0 {
            vs[k]
        } else {
            vs[k] - fk * vs[k].ln()
        }
    }))
}
