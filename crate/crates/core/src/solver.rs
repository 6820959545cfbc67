//! ADMM for the Poisson smoothing model
//!
//! ```text
//! min_u  λ⟨Au − f log Au, 1⟩ + (μ/2)‖∇u‖₂² + R(∇u)
//! ```
//!
//! with `R = ‖·‖₁ − α‖·‖₂,₁` (AITV) or `R = ‖·‖₂,₁` (isotropic TV). The
//! splitting `v = Au`, `w = ∇u` gives three closed-form subproblems: a
//! periodic linear system for `u` solved with the 2D DFT, a pointwise
//! quadratic for `v`, and a pointwise prox for `w`. The two penalties are
//! tied (`β₁ = β₂ = β`) and grow geometrically, `β_k = σᵏβ₀`.

use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::{self, ImageGrid, VectorField};
use crate::prox::{self, ProxParams, RegMode};
use crate::spectral::{self, ConvKernel, Fft2, SpectralKernel};

/// Floor applied to the observed image before solving; the Poisson term
/// needs `f > 0`.
pub const F_FLOOR: f64 = 1e-8;

/// Smallest admissible `|denominator|` in the Fourier-domain u-solve.
pub const MIN_DENOMINATOR: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    /// Fidelity weight `λ > 0`.
    pub lambda: f64,
    /// Smoothing weight `μ ≥ 0`.
    pub mu: f64,
    /// AITV weight `α ∈ [0, 1]`; ignored in iso mode.
    pub alpha: f64,
    /// Initial penalty `β₀ > 0`.
    pub beta0: f64,
    /// Penalty growth factor `σ > 1`.
    pub sigma: f64,
    /// Stop once `‖u_k − u_{k−1}‖₂ / ‖u_k‖₂ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub mode: RegMode,
    /// Record an [`IterationRecord`] per iteration.
    pub trace: bool,
    pub exec: Exec,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            mu: 1.0,
            alpha: 0.5,
            beta0: 1.0,
            sigma: 1.25,
            tol: 1e-4,
            max_iter: 300,
            mode: RegMode::Aitv,
            trace: false,
            exec: Exec::default(),
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !finite_pos(self.lambda) {
            return Err(Error::parameter("lambda", self.lambda, "lambda > 0"));
        }
        if !(self.mu.is_finite() && self.mu >= 0.0) {
            return Err(Error::parameter("mu", self.mu, "mu >= 0"));
        }
        grid::check_alpha(self.alpha)?;
        if !finite_pos(self.beta0) {
            return Err(Error::parameter("beta0", self.beta0, "beta0 > 0"));
        }
        if !(self.sigma.is_finite() && self.sigma > 1.0) {
            return Err(Error::parameter("sigma", self.sigma, "sigma > 1"));
        }
        if !finite_pos(self.tol) {
            return Err(Error::parameter("tol", self.tol, "tol > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::parameter("max_iter", 0.0, "max_iter >= 1"));
        }
        Ok(())
    }

    /// `β₀σᵏ`.
    pub fn beta_at(&self, k: usize) -> f64 {
        self.beta0 * self.sigma.powi(k as i32)
    }

    fn prox_params(&self, beta: f64) -> Result<ProxParams> {
        ProxParams::new(self.alpha, 1.0 / beta)
    }
}

/// The full ADMM iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmmState {
    pub u: ImageGrid,
    pub v: ImageGrid,
    pub w: VectorField,
    pub y: ImageGrid,
    pub z: VectorField,
    pub beta: f64,
    pub k: usize,
    pub rel_err: f64,
}

impl AdmmState {
    /// Feasible start: `u = f`, `v = Au`, `w = ∇u`, zero multipliers.
    pub fn initial(f: &ImageGrid, ops: &Operators, config: &AdmmConfig) -> Self {
        let u = f.clone();
        let v = ops.blur(&u);
        let w = grid::gradient(&u);
        let (m, n) = f.dims();
        Self {
            u,
            v,
            w,
            y: ImageGrid::zeros(m, n),
            z: VectorField::zeros(m, n),
            beta: config.beta0,
            k: 0,
            rel_err: f64::INFINITY,
        }
    }
}

/// Precomputed spectra of `A` and `Δ` for one grid size.
#[derive(Clone, Debug)]
pub struct Operators {
    fft: Fft2,
    blur: SpectralKernel,
    /// `|F(A)|²`
    blur_power: Vec<f64>,
    /// `F(Δ)`, real and nonpositive
    laplacian: Vec<f64>,
    identity: bool,
    exec: Exec,
}

impl Operators {
    pub fn new(kernel: &ConvKernel, rows: usize, cols: usize, exec: Exec) -> Result<Self> {
        let blur = spectral::kernel_spectrum(kernel, rows, cols)?;
        let dc = blur.dc().norm();
        if dc < MIN_DENOMINATOR {
            // A1 = 0 means ker(A) ∩ ker(∇) ≠ {0}
            return Err(Error::IllPosed {
                p: 0,
                q: 0,
                magnitude: dc,
            });
        }
        let blur_power = blur.multipliers().iter().map(|z| z.norm_sqr()).collect();
        let laplacian = spectral::laplacian_spectrum(rows, cols)
            .multipliers()
            .iter()
            .map(|z| z.re)
            .collect();
        Ok(Self {
            fft: Fft2::new(rows, cols, exec),
            blur,
            blur_power,
            laplacian,
            identity: kernel.is_identity(),
            exec,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fft.dims()
    }

    pub fn blur_spectrum(&self) -> &SpectralKernel {
        &self.blur
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    /// `Au`.
    pub fn blur(&self, u: &ImageGrid) -> ImageGrid {
        if self.identity {
            return u.clone();
        }
        self.apply(u, |k, z| z * self.blur.multipliers()[k])
    }

    /// `Aᵀu`.
    pub fn blur_adjoint(&self, u: &ImageGrid) -> ImageGrid {
        if self.identity {
            return u.clone();
        }
        self.apply(u, |k, z| z * self.blur.multipliers()[k].conj())
    }

    /// `AᵀAu`.
    pub fn blur_normal(&self, u: &ImageGrid) -> ImageGrid {
        if self.identity {
            return u.clone();
        }
        self.apply(u, |k, z| z * self.blur_power[k])
    }

    fn apply(&self, u: &ImageGrid, h: impl Fn(usize, Complex64) -> Complex64 + Sync + Send) -> ImageGrid {
        let mut buf = self.fft.forward_real(u.as_slice());
        exec::chunks_mut(self.exec, &mut buf, exec::CHUNK, |c, chunk| {
            let base = c * exec::CHUNK;
            for (i, z) in chunk.iter_mut().enumerate() {
                *z = h(base + i, *z);
            }
        });
        self.fft.inverse(&mut buf);
        let (m, n) = self.dims();
        ImageGrid::from_vec(m, n, buf.into_iter().map(|z| z.re).collect())
    }
}

/// Scratch buffers reused across iterations.
#[derive(Debug)]
struct Workspace {
    spec: Vec<Complex64>,
    spec2: Vec<Complex64>,
    real: Vec<f64>,
    field: VectorField,
}

impl Workspace {
    fn new(m: usize, n: usize) -> Self {
        Self {
            spec: vec![Complex64::default(); m * n],
            spec2: vec![Complex64::default(); m * n],
            real: vec![0.0; m * n],
            field: VectorField::zeros(m, n),
        }
    }
}

/// Solves `[βAᵀA − (μ+β)Δ]u = Aᵀ(βv − y) + ∇ᵀ(βw − z)` in the Fourier
/// domain, using the current `v, w, y, z, β` of `state`.
pub fn solve_u(state: &AdmmState, ops: &Operators, config: &AdmmConfig) -> Result<ImageGrid> {
    let (m, n) = ops.dims();
    let mut ws = Workspace::new(m, n);
    let mut u = ImageGrid::zeros(m, n);
    let mut au = ImageGrid::zeros(m, n);
    solve_u_into(state, ops, config, &mut ws, &mut u, &mut au)?;
    Ok(u)
}

fn solve_u_into(
    state: &AdmmState,
    ops: &Operators,
    config: &AdmmConfig,
    ws: &mut Workspace,
    u: &mut ImageGrid,
    au: &mut ImageGrid,
) -> Result<()> {
    let exec = ops.exec;
    let (m, n) = ops.dims();
    let beta = state.beta;
    let mu = config.mu;

    if let Some(k) =
        (0..m * n).find(|&k| (beta * ops.blur_power[k] - (mu + beta) * ops.laplacian[k]).abs() < MIN_DENOMINATOR)
    {
        return Err(Error::IllPosed {
            p: k / n,
            q: k % n,
            magnitude: (beta * ops.blur_power[k] - (mu + beta) * ops.laplacian[k]).abs(),
        });
    }

    // ∇ᵀ(βw − z)
    {
        let (wx, wy) = (state.w.x.as_slice(), state.w.y.as_slice());
        let (zx, zy) = (state.z.x.as_slice(), state.z.y.as_slice());
        let field = &mut ws.field;
        exec::fill2(exec, field.x.as_mut_slice(), field.y.as_mut_slice(), |k| {
            (beta * wx[k] - zx[k], beta * wy[k] - zy[k])
        });
    }
    let mut div = ImageGrid::from_vec(m, n, std::mem::take(&mut ws.real));
    grid::divergence_adjoint_into(exec, &ws.field, &mut div);

    let (v, y) = (state.v.as_slice(), state.y.as_slice());
    let d = div.as_slice();
    let blur = ops.blur.multipliers();
    let denom = |k: usize| beta * ops.blur_power[k] - (mu + beta) * ops.laplacian[k];

    if ops.identity {
        exec::fill(exec, &mut ws.spec, |k| Complex64::new(beta * v[k] - y[k] + d[k], 0.0));
        ops.fft.forward(&mut ws.spec);
        exec::chunks_mut(exec, &mut ws.spec, exec::CHUNK, |c, chunk| {
            let base = c * exec::CHUNK;
            for (i, z) in chunk.iter_mut().enumerate() {
                *z /= denom(base + i);
            }
        });
    } else {
        exec::fill(exec, &mut ws.spec, |k| Complex64::new(beta * v[k] - y[k], 0.0));
        exec::fill(exec, &mut ws.spec2, |k| Complex64::new(d[k], 0.0));
        ops.fft.forward(&mut ws.spec);
        ops.fft.forward(&mut ws.spec2);
        let rhs2 = &ws.spec2;
        exec::chunks_mut(exec, &mut ws.spec, exec::CHUNK, |c, chunk| {
            let base = c * exec::CHUNK;
            for (i, z) in chunk.iter_mut().enumerate() {
                let k = base + i;
                *z = (blur[k].conj() * *z + rhs2[k]) / denom(k);
            }
        });
    }
    ws.real = div.into_vec();

    if ops.identity {
        ops.fft.inverse(&mut ws.spec);
        let s = &ws.spec;
        exec::fill(exec, u.as_mut_slice(), |k| s[k].re);
        au.as_mut_slice().copy_from_slice(u.as_slice());
    } else {
        // F(Au) = F(A)·F(u)
        let s = &ws.spec;
        exec::fill(exec, &mut ws.spec2, |k| blur[k] * s[k]);
        ops.fft.inverse(&mut ws.spec);
        ops.fft.inverse(&mut ws.spec2);
        let (s, s2) = (&ws.spec, &ws.spec2);
        exec::fill(exec, u.as_mut_slice(), |k| s[k].re);
        exec::fill(exec, au.as_mut_slice(), |k| s2[k].re);
    }
    Ok(())
}

/// Relative residual `‖L u − b‖₂ / ‖b‖₂` of the u-system for a candidate
/// `u`, with `L = βAᵀA − (μ+β)Δ` applied in the spatial domain and
/// `b = Aᵀ(βv − y) + ∇ᵀ(βw − z)` built from `state`.
pub fn u_system_residual(state: &AdmmState, u: &ImageGrid, ops: &Operators, config: &AdmmConfig) -> f64 {
    let beta = state.beta;
    let normal = ops.blur_normal(u);
    // −Δu = ∇ᵀ∇u
    let neg_lap = grid::divergence_adjoint(&grid::gradient(u));
    let lhs: Vec<f64> = (0..u.len())
        .map(|k| beta * normal.as_slice()[k] + (config.mu + beta) * neg_lap.as_slice()[k])
        .collect();

    let data = state
        .v
        .zip_map(&state.y, |v, y| beta * v - y)
        .expect("state grids share dimensions");
    let data = ops.blur_adjoint(&data);
    let shifted = VectorField {
        x: state.w.x.zip_map(&state.z.x, |w, z| beta * w - z).unwrap(),
        y: state.w.y.zip_map(&state.z.y, |w, z| beta * w - z).unwrap(),
    };
    let div = grid::divergence_adjoint(&shifted);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((l, d), g) in lhs.iter().zip(data.as_slice()).zip(div.as_slice()) {
        let b = d + g;
        num += (l - b).powi(2);
        den += b * b;
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}

/// Pointwise positive root of `βv² − (βAu + y − λ)v − λf = 0`, the
/// minimizer of `λ(v − f log v) − ⟨y, v⟩ + (β/2)(Au − v)²`.
pub fn solve_v(au: &ImageGrid, y: &ImageGrid, f: &ImageGrid, beta: f64, lambda: f64) -> Result<ImageGrid> {
    au.check_dims(y.dims())?;
    au.check_dims(f.dims())?;
    if let Some(k) = f.as_slice().iter().position(|&x| x < 0.0) {
        return Err(Error::Data(format!(
            "observed image has negative value {} at pixel ({}, {})",
            f.as_slice()[k],
            k / f.cols(),
            k % f.cols()
        )));
    }
    let mut v = ImageGrid::zeros(au.rows(), au.cols());
    solve_v_into(Exec::Sequential, au, y, f, beta, lambda, &mut v);
    Ok(v)
}

fn solve_v_into(exec: Exec, au: &ImageGrid, y: &ImageGrid, f: &ImageGrid, beta: f64, lambda: f64, out: &mut ImageGrid) {
    let (a, ys, fs) = (au.as_slice(), y.as_slice(), f.as_slice());
    exec::fill(exec, out.as_mut_slice(), |k| {
        v_root(
            beta * a[k] + ys[k] - lambda,
            4.0 * lambda * beta * fs[k],
            beta,
            lambda,
            fs[k],
        )
    });
}

/// `(t + √(t² + c)) / 2β`, rearranged to avoid cancellation when `t < 0`.
#[inline]
fn v_root(t: f64, c: f64, beta: f64, lambda: f64, f: f64) -> f64 {
    let s = (t * t + c).sqrt();
    if t >= 0.0 {
        (t + s) / (2.0 * beta)
    } else {
        2.0 * lambda * f / (s - t)
    }
}

/// `w = prox(∇u + z/β)` per pixel with step `1/β`.
pub fn solve_w(grad_u: &VectorField, z: &VectorField, beta: f64, config: &AdmmConfig) -> Result<VectorField> {
    if grad_u.dims() != z.dims() {
        return Err(Error::Dimension {
            expected: grad_u.dims(),
            found: z.dims(),
        });
    }
    let (m, n) = grad_u.dims();
    let mut w = VectorField::zeros(m, n);
    let mut shifted = VectorField::zeros(m, n);
    solve_w_into(Exec::Sequential, grad_u, z, beta, config, &mut shifted, &mut w)?;
    Ok(w)
}

fn solve_w_into(
    exec: Exec,
    grad_u: &VectorField,
    z: &VectorField,
    beta: f64,
    config: &AdmmConfig,
    shifted: &mut VectorField,
    out: &mut VectorField,
) -> Result<()> {
    let params = config.prox_params(beta)?;
    let (gx, gy) = (grad_u.x.as_slice(), grad_u.y.as_slice());
    let (zx, zy) = (z.x.as_slice(), z.y.as_slice());
    exec::fill2(exec, shifted.x.as_mut_slice(), shifted.y.as_mut_slice(), |k| {
        (gx[k] + zx[k] / beta, gy[k] + zy[k] / beta)
    });
    prox::prox_field_into(exec, shifted, params, config.mode, out);
    Ok(())
}

/// `y += β(Au − v)`, `z += β(∇u − w)`, then `k += 1` and `β = β₀σᵏ`.
pub fn update_multipliers(state: &mut AdmmState, au: &ImageGrid, grad_u: &VectorField, config: &AdmmConfig) {
    update_multipliers_with(Exec::Sequential, state, au, grad_u, config);
}

fn update_multipliers_with(
    exec: Exec,
    state: &mut AdmmState,
    au: &ImageGrid,
    grad_u: &VectorField,
    config: &AdmmConfig,
) {
    let beta = state.beta;
    let (a, v) = (au.as_slice(), state.v.as_slice());
    exec::chunks_mut(exec, state.y.as_mut_slice(), exec::CHUNK, |c, chunk| {
        let base = c * exec::CHUNK;
        for (i, y) in chunk.iter_mut().enumerate() {
            *y += beta * (a[base + i] - v[base + i]);
        }
    });
    for (z, g, w) in [
        (&mut state.z.x, &grad_u.x, &state.w.x),
        (&mut state.z.y, &grad_u.y, &state.w.y),
    ] {
        let (g, w) = (g.as_slice(), w.as_slice());
        exec::chunks_mut(exec, z.as_mut_slice(), exec::CHUNK, |c, chunk| {
            let base = c * exec::CHUNK;
            for (i, z) in chunk.iter_mut().enumerate() {
                *z += beta * (g[base + i] - w[base + i]);
            }
        });
    }
    state.k += 1;
    state.beta = config.beta_at(state.k);
}

fn regularizer(w: &VectorField, config: &AdmmConfig) -> f64 {
    match config.mode {
        RegMode::Aitv => grid::norm_l1(w) - config.alpha * grid::norm_l21(w),
        RegMode::Iso => grid::norm_l21(w),
    }
}

/// Objective of the smoothing model for the configured regularizer.
pub fn model_energy(u: &ImageGrid, f: &ImageGrid, ops: &Operators, config: &AdmmConfig) -> Result<f64> {
    let au = ops.blur(u);
    let g = grid::gradient(u);
    Ok(config.lambda * grid::poisson_fidelity(&au, f)? + 0.5 * config.mu * g.dot(&g) + regularizer(&g, config))
}

/// The augmented Lagrangian at `state` with `β₁ = β₂ = state.beta`.
pub fn augmented_lagrangian(state: &AdmmState, ops: &Operators, config: &AdmmConfig, f: &ImageGrid) -> Result<f64> {
    let fid = grid::poisson_fidelity(&state.v, f).map_err(|e| match e {
        Error::Domain { row, col, value, .. } => Error::Domain {
            quantity: "v",
            row,
            col,
            value,
        },
        other => other,
    })?;
    let au = ops.blur(&state.u);
    let g = grid::gradient(&state.u);
    let r_v = au.zip_map(&state.v, |a, v| a - v)?;
    let r_w = VectorField {
        x: g.x.zip_map(&state.w.x, |a, b| a - b)?,
        y: g.y.zip_map(&state.w.y, |a, b| a - b)?,
    };
    let beta = state.beta;
    Ok(config.lambda * fid
        + 0.5 * config.mu * g.dot(&g)
        + regularizer(&state.w, config)
        + state.y.dot(&r_v)
        + 0.5 * beta * r_v.dot(&r_v)
        + state.z.dot(&r_w)
        + 0.5 * beta * r_w.dot(&r_w))
}

/// Norms of the residuals of the limit-point conditions
///
/// ```text
/// 0 = −μΔu + Aᵀy + ∇ᵀz,   0 = λ(1 − f/v) − y,   z ∈ ∂R(w),   Au = v,   ∇u = w.
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub r_u: f64,
    pub r_v: f64,
    pub r_w: f64,
    pub r_au_v: f64,
    pub r_grad_w: f64,
    /// Pixel count, used by [`StationarityReport::scaled`].
    pub pixels: usize,
}

impl StationarityReport {
    /// Residuals divided by `√(MN)`, i.e. root-mean-square per pixel.
    pub fn scaled(&self) -> StationarityReport {
        let s = (self.pixels as f64).sqrt();
        StationarityReport {
            r_u: self.r_u / s,
            r_v: self.r_v / s,
            r_w: self.r_w / s,
            r_au_v: self.r_au_v / s,
            r_grad_w: self.r_grad_w / s,
            pixels: self.pixels,
        }
    }

    pub fn max(&self) -> f64 {
        [self.r_u, self.r_v, self.r_w, self.r_au_v, self.r_grad_w]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn stationarity_residuals(
    state: &AdmmState,
    ops: &Operators,
    config: &AdmmConfig,
    f: &ImageGrid,
) -> Result<StationarityReport> {
    let (u, v, y) = (&state.u, &state.v, &state.y);
    u.check_dims(f.dims())?;
    if let Some(k) = v.as_slice().iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain {
            quantity: "v",
            row: k / v.cols(),
            col: k % v.cols(),
            value: v.as_slice()[k],
        });
    }
    let g = grid::gradient(u);
    let neg_lap = grid::divergence_adjoint(&g);
    let aty = ops.blur_adjoint(y);
    let div_z = grid::divergence_adjoint(&state.z);
    let r_u = l2(u.len(), |k| {
        config.mu * neg_lap.as_slice()[k] + aty.as_slice()[k] + div_z.as_slice()[k]
    });
    let (fs, vs, ys) = (f.as_slice(), v.as_slice(), y.as_slice());
    let r_v = l2(u.len(), |k| config.lambda * (1.0 - fs[k] / vs[k]) - ys[k]);
    let au = ops.blur(u);
    let r_au_v = l2(u.len(), |k| au.as_slice()[k] - vs[k]);
    let r_grad_w = l2(u.len(), |k| {
        {
            let dx = g.x.as_slice()[k] - state.w.x.as_slice()[k];
            let dy = g.y.as_slice()[k] - state.w.y.as_slice()[k];
            dx * dx + dy * dy
        }
        .sqrt()
    });
    let r_w = l2(u.len(), |k| {
        subgradient_distance(state.z.at(k), state.w.at(k), config.alpha, config.mode)
    });
    Ok(StationarityReport {
        r_u,
        r_v,
        r_w,
        r_au_v,
        r_grad_w,
        pixels: u.len(),
    })
}

fn l2(n: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    exec::sum(Exec::Sequential, n, |k| f(k).powi(2)).sqrt()
}

/// Euclidean distance from `z` to `∂‖w‖₁ − α∂‖w‖₂` (AITV) or `∂‖w‖₂` (iso)
/// at a single pixel.
pub fn subgradient_distance(z: [f64; 2], w: [f64; 2], alpha: f64, mode: RegMode) -> f64 {
    let norm = w[0].hypot(w[1]);
    match mode {
        RegMode::Iso => {
            if norm > 0.0 {
                (z[0] - w[0] / norm).hypot(z[1] - w[1] / norm)
            } else {
                (z[0].hypot(z[1]) - 1.0).max(0.0)
            }
        }
        RegMode::Aitv => {
            if norm == 0.0 {
                // [−1,1]² − α·(unit disk)
                let dx = (z[0].abs() - 1.0).max(0.0);
                let dy = (z[1].abs() - 1.0).max(0.0);
                return (dx.hypot(dy) - alpha).max(0.0);
            }
            let unit = [w[0] / norm, w[1] / norm];
            // each coordinate: sign(w_i) − α w_i/‖w‖ if w_i ≠ 0, else [−1, 1]
            let axis = |i: usize| {
                if w[i] != 0.0 {
                    z[i] - (w[i].signum() - alpha * unit[i])
                } else {
                    (z[i].abs() - 1.0).max(0.0)
                }
            };
            axis(0).hypot(axis(1))
        }
    }
}

/// One row of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub rel_err: f64,
    pub res_au_v: f64,
    pub res_grad_w: f64,
    /// NaN when `v` has a nonpositive entry.
    pub lagrangian: f64,
    /// NaN when `Au` has a nonpositive entry.
    pub energy: f64,
}

pub const TRACE_HEADER: &str = "k,rel_err,res_Au_v,res_grad_w,lagrangian,energy";

pub fn trace_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.k, r.rel_err, r.res_au_v, r.res_grad_w, r.lagrangian, r.energy
        );
    }
    out
}

/// Result of [`admm_smooth`].
#[derive(Clone, Debug)]
pub struct SmoothOutcome {
    pub u: ImageGrid,
    pub iterations: usize,
    pub converged: bool,
    pub rel_err: f64,
    pub trace: Vec<IterationRecord>,
    pub state: AdmmState,
}

/// Stepwise driver; [`admm_smooth`] wraps it.
#[derive(Debug)]
pub struct AdmmSolver {
    f: ImageGrid,
    ops: Operators,
    config: AdmmConfig,
    state: AdmmState,
    ws: Workspace,
    u_next: ImageGrid,
    au: ImageGrid,
    grad: VectorField,
    shifted: VectorField,
    trace: Vec<IterationRecord>,
}

impl AdmmSolver {
    pub fn new(f: &ImageGrid, kernel: &ConvKernel, config: AdmmConfig) -> Result<Self> {
        config.validate()?;
        let (m, n) = f.dims();
        let ops = Operators::new(kernel, m, n, config.exec)?;
        Self::with_operators(f, ops, config)
    }

    pub fn with_operators(f: &ImageGrid, ops: Operators, config: AdmmConfig) -> Result<Self> {
        config.validate()?;
        f.check_dims(ops.dims())?;
        if let Some(k) = f.as_slice().iter().position(|&x| x < 0.0) {
            return Err(Error::Data(format!(
                "observed image has negative value {} at pixel ({}, {})",
                f.as_slice()[k],
                k / f.cols(),
                k % f.cols()
            )));
        }
        let f = f.map(|x| x.max(F_FLOOR));
        let state = AdmmState::initial(&f, &ops, &config);
        let (m, n) = f.dims();
        Ok(Self {
            ws: Workspace::new(m, n),
            u_next: ImageGrid::zeros(m, n),
            au: ImageGrid::zeros(m, n),
            grad: VectorField::zeros(m, n),
            shifted: VectorField::zeros(m, n),
            trace: Vec::new(),
            f,
            ops,
            config,
            state,
        })
    }

    pub fn state(&self) -> &AdmmState {
        &self.state
    }

    pub fn operators(&self) -> &Operators {
        &self.ops
    }

    pub fn config(&self) -> &AdmmConfig {
        &self.config
    }

    /// The observed image after clamping to `F_FLOOR`.
    pub fn observed(&self) -> &ImageGrid {
        &self.f
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn is_done(&self) -> bool {
        self.state.rel_err <= self.config.tol || self.state.k >= self.config.max_iter
    }

    /// Computes the next `u` without committing it, returning it with the
    /// relative residual of the linear system it solves.
    pub fn peek_u(&mut self) -> Result<(ImageGrid, f64)> {
        solve_u_into(
            &self.state,
            &self.ops,
            &self.config,
            &mut self.ws,
            &mut self.u_next,
            &mut self.au,
        )?;
        let res = u_system_residual(&self.state, &self.u_next, &self.ops, &self.config);
        Ok((self.u_next.clone(), res))
    }

    /// One full ADMM iteration.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let exec = self.config.exec;
        let iteration = self.state.k + 1;
        let beta = self.state.beta;

        solve_u_into(
            &self.state,
            &self.ops,
            &self.config,
            &mut self.ws,
            &mut self.u_next,
            &mut self.au,
        )?;
        check_finite(self.u_next.as_slice(), iteration, "u")?;
        grid::gradient_into(exec, &self.u_next, &mut self.grad);

        solve_v_into(
            exec,
            &self.au,
            &self.state.y,
            &self.f,
            beta,
            self.config.lambda,
            &mut self.state.v,
        );
        check_finite(self.state.v.as_slice(), iteration, "v")?;

        solve_w_into(
            exec,
            &self.grad,
            &self.state.z,
            beta,
            &self.config,
            &mut self.shifted,
            &mut self.state.w,
        )?;

        update_multipliers_with(exec, &mut self.state, &self.au, &self.grad, &self.config);
        check_finite(self.state.y.as_slice(), iteration, "y")?;

        let (new, old) = (self.u_next.as_slice(), self.state.u.as_slice());
        let diff = exec::sum(exec, new.len(), |k| (new[k] - old[k]).powi(2)).sqrt();
        let norm = grid::dot(exec, new, new).sqrt();
        self.state.rel_err = if norm > 0.0 {
            diff / norm
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        std::mem::swap(&mut self.state.u, &mut self.u_next);

        let (a, v) = (self.au.as_slice(), self.state.v.as_slice());
        let res_au_v = exec::sum(exec, a.len(), |k| (a[k] - v[k]).powi(2)).sqrt();
        let (g, w) = (&self.grad, &self.state.w);
        let res_grad_w = exec::sum(exec, a.len(), |k| {
            (g.x.as_slice()[k] - w.x.as_slice()[k]).powi(2) + (g.y.as_slice()[k] - w.y.as_slice()[k]).powi(2)
        })
        .sqrt();

        let mut record = IterationRecord {
            k: self.state.k,
            rel_err: self.state.rel_err,
            res_au_v,
            res_grad_w,
            lagrangian: f64::NAN,
            energy: f64::NAN,
        };
        if self.config.trace {
            record.lagrangian = augmented_lagrangian(&self.state, &self.ops, &self.config, &self.f).unwrap_or(f64::NAN);
            record.energy = model_energy(&self.state.u, &self.f, &self.ops, &self.config).unwrap_or(f64::NAN);
            self.trace.push(record);
        }
        Ok(record)
    }

    pub fn run(mut self) -> Result<SmoothOutcome> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }

    pub fn finish(self) -> SmoothOutcome {
        SmoothOutcome {
            u: self.state.u.clone(),
            iterations: self.state.k,
            converged: self.state.rel_err <= self.config.tol,
            rel_err: self.state.rel_err,
            trace: self.trace,
            state: self.state,
        }
    }
}

fn check_finite(values: &[f64], iteration: usize, stage: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration, stage })
    }
}

/// Runs the ADMM scheme on `f` until the relative change of `u` drops to
/// `config.tol` or `config.max_iter` iterations have run.
pub fn admm_smooth(f: &ImageGrid, kernel: &ConvKernel, config: AdmmConfig) -> Result<SmoothOutcome> {
    AdmmSolver::new(f, kernel, config)?.run()
}
