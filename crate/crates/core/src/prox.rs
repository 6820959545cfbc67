//! Closed-form proximal operators on per-pixel gradient vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::grid::VectorField;

/// Which regularizer the per-pixel prox belongs to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegMode {
    /// `‖·‖₁ − α‖·‖₂` (anisotropic minus weighted isotropic TV).
    #[default]
    Aitv,
    /// `‖·‖₂` per pixel (isotropic TV).
    Iso,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxParams {
    alpha: f64,
    beta: f64,
}

impl ProxParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::parameter("alpha", alpha, "0 <= alpha <= 1"));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::parameter("beta", beta, "beta > 0"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// `argmin_y ‖y‖₁ − α‖y‖₂ + (1/2β)‖x − y‖₂²` for `x ∈ ℝ²`.
///
/// Three regimes, by `‖x‖∞`:
/// * above `β`: soft-threshold each entry by `β`, then push the result
///   outward by `αβ` along its own direction;
/// * in `((1−α)β, β]`: keep only the largest-magnitude entry, shrunk by
///   `(1−α)β` (ties keep the first entry);
/// * at or below `(1−α)β`: zero.
pub fn prox_l1_minus_l2(x: [f64; 2], params: ProxParams) -> [f64; 2] {
    let ProxParams { alpha, beta } = params;
    let (a0, a1) = (x[0].abs(), x[1].abs());
    let inf = a0.max(a1);
    if inf > beta {
        let xi = [
            x[0].signum() * (a0 - beta).max(0.0),
            x[1].signum() * (a1 - beta).max(0.0),
        ];
        let norm = xi[0].hypot(xi[1]);
        debug_assert!(norm > 0.0, "soft-threshold cannot vanish above the threshold");
        let scale = (norm + alpha * beta) / norm;
        [xi[0] * scale, xi[1] * scale]
    } else if inf > (1.0 - alpha) * beta {
        let i = if a1 > a0 { 1 } else { 0 };
        let mut out = [0.0, 0.0];
        out[i] = (x[i].abs() + (alpha - 1.0) * beta) * x[i].signum();
        out
    } else {
        [0.0, 0.0]
    }
}

/// Isotropic shrinkage `max(‖x‖₂ − β, 0) · x/‖x‖₂`.
pub fn prox_l21(x: [f64; 2], beta: f64) -> [f64; 2] {
    let norm = x[0].hypot(x[1]);
    if norm <= beta {
        return [0.0, 0.0];
    }
    let scale = (norm - beta) / norm;
    [x[0] * scale, x[1] * scale]
}

/// Applies the per-pixel prox of `mode` to every pixel of `w`.
pub fn prox_field(w: &VectorField, params: ProxParams, mode: RegMode) -> VectorField {
    let (m, n) = w.dims();
    let mut out = VectorField::zeros(m, n);
    prox_field_into(Exec::default(), w, params, mode, &mut out);
    out
}

/// Writes `prox(w)` into `out`, which must share `w`'s dimensions.
pub fn prox_field_into(exec: Exec, w: &VectorField, params: ProxParams, mode: RegMode, out: &mut VectorField) {
    debug_assert_eq!(w.dims(), out.dims());
    let (wx, wy) = (w.x.as_slice(), w.y.as_slice());
    let apply = |k: usize| match mode {
        RegMode::Aitv => prox_l1_minus_l2([wx[k], wy[k]], params),
        RegMode::Iso => prox_l21([wx[k], wy[k]], params.beta),
    };
    exec::fill2(exec, out.x.as_mut_slice(), out.y.as_mut_slice(), |k| {
        let [a, b] = apply(k);
        (a, b)
    });
}

/// Per-pixel objective `‖y‖₁ − α‖y‖₂ + (1/2β)‖x − y‖₂²` (AITV) or
/// `‖y‖₂ + (1/2β)‖x − y‖₂²` (iso).
pub fn prox_objective(y: [f64; 2], x: [f64; 2], params: ProxParams, mode: RegMode) -> f64 {
    let quad = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)) / (2.0 * params.beta);
    let reg = match mode {
        RegMode::Aitv => y[0].abs() + y[1].abs() - params.alpha * y[0].hypot(y[1]),
        RegMode::Iso => y[0].hypot(y[1]),
    };
    reg + quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageGrid;

    fn p(alpha: f64, beta: f64) -> ProxParams {
        ProxParams::new(alpha, beta).unwrap()
    }

    fn close2(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
    }

    #[test]
    fn small_input_collapses_to_zero() {
        assert_eq!(prox_l1_minus_l2([0.3, 0.2], p(0.5, 1.0)), [0.0, 0.0]);
    }

    #[test]
    fn large_input_is_shifted_outward() {
        assert!(close2(prox_l1_minus_l2([3.0, 0.0], p(0.5, 1.0)), [2.5, 0.0], 1e-15));
        // both entries above the threshold
        let out = prox_l1_minus_l2([3.0, -2.0], p(0.5, 1.0));
        let xi = [2.0, -1.0];
        let n = (5.0f64).sqrt();
        let s = (n + 0.5) / n;
        assert!(close2(out, [xi[0] * s, xi[1] * s], 1e-15));
    }

    #[test]
    fn middle_band_is_one_sparse() {
        assert!(close2(prox_l1_minus_l2([0.8, 0.3], p(0.5, 1.0)), [0.3, 0.0], 1e-15));
        assert!(close2(prox_l1_minus_l2([0.3, -0.8], p(0.5, 1.0)), [0.0, -0.3], 1e-15));
    }

    #[test]
    fn ties_keep_the_first_entry() {
        assert!(close2(prox_l1_minus_l2([0.7, -0.7], p(0.5, 1.0)), [0.2, 0.0], 1e-15));
    }

    #[test]
    fn exact_threshold_routes_to_middle_band() {
        // ‖x‖∞ = β belongs to the 1-sparse regime
        let out = prox_l1_minus_l2([1.0, 0.4], p(0.5, 1.0));
        assert!(close2(out, [0.5, 0.0], 1e-15));
        // and ‖x‖∞ = (1−α)β is zero
        assert_eq!(prox_l1_minus_l2([0.5, 0.1], p(0.5, 1.0)), [0.0, 0.0]);
    }

    #[test]
    fn alpha_one_keeps_largest_magnitude() {
        let out = prox_l1_minus_l2([0.6, 0.2], p(1.0, 1.0));
        assert!(close2(out, [0.6, 0.0], 1e-15));
        let out = prox_l1_minus_l2([-1.0, 0.2], p(1.0, 1.0));
        assert!(close2(out, [-1.0, 0.0], 1e-15));
    }

    #[test]
    fn alpha_zero_is_soft_thresholding() {
        for x in [[2.0, -0.5], [0.7, 0.9], [-3.0, 4.0], [0.1, 0.0]] {
            let out = prox_l1_minus_l2(x, p(0.0, 0.6));
            let soft = x.map(|v| v.signum() * (v.abs() - 0.6).max(0.0));
            assert!(close2(out, soft, 1e-15), "{x:?}");
        }
    }

    #[test]
    fn isotropic_shrinkage() {
        assert!(close2(prox_l21([3.0, 4.0], 1.0), [2.4, 3.2], 1e-15));
        assert_eq!(prox_l21([0.1, 0.0], 1.0), [0.0, 0.0]);
        assert_eq!(prox_l21([0.0, 0.0], 1.0), [0.0, 0.0]);
    }

    #[test]
    fn params_are_validated() {
        assert!(ProxParams::new(-0.1, 1.0).is_err());
        assert!(ProxParams::new(1.1, 1.0).is_err());
        assert!(ProxParams::new(0.5, 0.0).is_err());
        assert!(ProxParams::new(0.5, f64::NAN).is_err());
    }

    #[test]
    fn field_prox_is_componentwise() {
        let z = VectorField::zeros(3, 4);
        for mode in [RegMode::Aitv, RegMode::Iso] {
            let out = prox_field(&z, p(0.5, 1.0), mode);
            assert_eq!(out, z);
        }
        let w = VectorField::new(ImageGrid::filled(3, 4, 3.0), ImageGrid::zeros(3, 4)).unwrap();
        let out = prox_field(&w, p(0.5, 1.0), RegMode::Aitv);
        assert!(out.x.as_slice().iter().all(|&v| v == 2.5));
        assert!(out.y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn field_prox_policies_agree() {
        let w = VectorField::new(
            ImageGrid::from_fn(40, 50, |i, j| ((i * 7 + j) as f64).sin() * 2.0),
            ImageGrid::from_fn(40, 50, |i, j| ((i + 3 * j) as f64).cos() * 2.0),
        )
        .unwrap();
        let mut a = VectorField::zeros(40, 50);
        let mut b = VectorField::zeros(40, 50);
        prox_field_into(Exec::Sequential, &w, p(0.4, 0.7), RegMode::Aitv, &mut a);
        prox_field_into(Exec::Parallel, &w, p(0.4, 0.7), RegMode::Aitv, &mut b);
        assert_eq!(a, b);
    }
}
