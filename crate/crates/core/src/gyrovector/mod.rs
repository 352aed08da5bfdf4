//! Möbius gyrovector algebra on the Poincaré ball of radius `s`.
//!
//! The ball is `{x : ‖x‖ < s}` with conformal factor `λ_x = 2 / (1 − ‖x‖²/s²)`.
//! Every operation that produces a point clamps its norm to
//! `s · (1 − boundary_margin)`, so results always stay strictly inside the ball.
//!
//! ```text
//! x ⊕ y = ((1 + 2⟨x,y⟩/s² + ‖y‖²/s²) x + (1 − ‖x‖²/s²) y)
//!         / (1 + 2⟨x,y⟩/s² + ‖x‖²‖y‖²/s⁴)
//! r ⊗ x = s · tanh(r · artanh(‖x‖/s)) · x/‖x‖
//! d(x,y) = 2s · artanh(‖(−x) ⊕ y‖ / s)
//! ```

mod cloud;
pub mod grad;

pub use cloud::PointCloud;

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Largest argument handed to `artanh`.
pub const ARTANH_CLAMP: f64 = 1.0 - 1e-15;

/// Radius used when a Euclidean pipeline is run through the ball operations.
pub const EUCLIDEAN_PROXY_RADIUS: f64 = 1e8;

/// Which gamma factor enters gyrobarycentric weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GammaConvention {
    /// `γ_x = 1/√(1 − ‖x‖²/s²)`, tends to 1 as `s → ∞`.
    #[default]
    Lorentz,
    /// The conformal factor `λ_x`, which tends to 2 as `s → ∞`.
    Conformal,
}

impl GammaConvention {
    pub fn name(self) -> &'static str {
        match self {
            GammaConvention::Lorentz => "lorentz",
            GammaConvention::Conformal => "conformal",
        }
    }
}

impl std::str::FromStr for GammaConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorentz" => Ok(GammaConvention::Lorentz),
            "conformal" => Ok(GammaConvention::Conformal),
            other => Err(Error::InvalidParameter(format!(
                "unknown gamma convention '{other}'"
            ))),
        }
    }
}

#[inline]
pub(crate) fn artanh(z: f64) -> f64 {
    z.clamp(-ARTANH_CLAMP, ARTANH_CLAMP).atanh()
}

#[inline]
pub(crate) fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// A Poincaré ball of radius `s` together with its numerical guards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareBall {
    s: f64,
    boundary_margin: f64,
    gamma: GammaConvention,
}

impl Default for PoincareBall {
    fn default() -> Self {
        Self::unit()
    }
}

impl PoincareBall {
    pub const DEFAULT_MARGIN: f64 = 1e-9;

    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {s}"
            )));
        }
        Ok(Self {
            s,
            boundary_margin: Self::DEFAULT_MARGIN,
            gamma: GammaConvention::Lorentz,
        })
    }

    pub fn unit() -> Self {
        Self {
            s: 1.0,
            boundary_margin: Self::DEFAULT_MARGIN,
            gamma: GammaConvention::Lorentz,
        }
    }

    /// A ball so large that every operation agrees with its Euclidean
    /// counterpart to rounding on unit-scale data.
    pub fn euclidean_proxy() -> Self {
        Self {
            s: EUCLIDEAN_PROXY_RADIUS,
            ..Self::unit()
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin < 1e-3) {
            return Err(Error::InvalidParameter(format!(
                "boundary margin must lie in (0, 1e-3), got {margin}"
            )));
        }
        self.boundary_margin = margin;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: GammaConvention) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn radius(&self) -> f64 {
        self.s
    }

    pub fn boundary_margin(&self) -> f64 {
        self.boundary_margin
    }

    pub fn gamma_convention(&self) -> GammaConvention {
        self.gamma
    }

    /// Largest norm a returned point may have.
    pub fn max_norm(&self) -> f64 {
        self.s * (1.0 - self.boundary_margin)
    }

    pub fn contains(&self, x: ArrayView1<f64>) -> bool {
        norm(x) < self.s
    }

    /// Clamps `x` into the ball of radius `s·(1 − margin)`.
    pub fn project(&self, mut x: Array1<f64>) -> Array1<f64> {
        let n = norm(x.view());
        let max = self.max_norm();
        if n > max {
            x *= max / n;
        }
        x
    }

    /// Möbius addition `x ⊕ y`.
    pub fn mobius_add(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dims(x.len(), y.len())?;
        Ok(self.add(x, y))
    }

    /// Unchecked Möbius addition; panics on a dimension mismatch.
    pub(crate) fn add(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        let c = 1.0 / (self.s * self.s);
        let xy = x.dot(&y);
        let x2 = x.dot(&x);
        let y2 = y.dot(&y);
        let a = 1.0 + 2.0 * c * xy + c * y2;
        let b = 1.0 - c * x2;
        let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
        let out = (&x * (a / den)) + &(&y * (b / den));
        self.project(out)
    }

    /// `(−x) ⊕ y`, the gyrovector from `x` to `y`.
    pub(crate) fn sub_left(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        let neg = -&x;
        self.add(neg.view(), y)
    }

    /// Möbius scalar multiplication `r ⊗ x`; `r ⊗ 0 = 0`.
    pub fn mobius_scalar_mul(&self, r: f64, x: ArrayView1<f64>) -> Array1<f64> {
        let n = norm(x);
        if n == 0.0 {
            return Array1::zeros(x.len());
        }
        let scale = self.s * (r * artanh(n / self.s)).tanh() / n;
        self.project(&x * scale)
    }

    /// Möbius matrix-vector multiplication `Q ⊗ x`; returns 0 when `Qx = 0`.
    pub fn mobius_matrix_mul(&self, q: ArrayView2<f64>, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dims(q.ncols(), x.len())?;
        Ok(self.matvec(q, x))
    }

    pub(crate) fn matvec(&self, q: ArrayView2<f64>, x: ArrayView1<f64>) -> Array1<f64> {
        let xn = norm(x);
        let qx = q.dot(&x);
        let qxn = norm(qx.view());
        if xn == 0.0 || qxn == 0.0 {
            return Array1::zeros(q.nrows());
        }
        let scale = self.s * ((qxn / xn) * artanh(xn / self.s)).tanh() / qxn;
        self.project(qx * scale)
    }

    /// Geodesic distance `2s · artanh(‖(−x) ⊕ y‖/s)`.
    pub fn distance(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let w = self.sub_left(x, y);
        2.0 * self.s * artanh(norm(w.view()) / self.s)
    }

    /// The same distance through `2s · arsinh(γ_x γ_y ‖x − y‖/s)`.
    pub fn distance_sinh_form(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let diff = &x - &y;
        let arg = self.lorentz_gamma(x) * self.lorentz_gamma(y) * norm(diff.view()) / self.s;
        2.0 * self.s * arg.asinh()
    }

    /// `λ_x = 2 / (1 − ‖x‖²/s²)`.
    pub fn conformal_factor(&self, x: ArrayView1<f64>) -> f64 {
        2.0 / (1.0 - x.dot(&x) / (self.s * self.s))
    }

    /// `γ_x = 1 / √(1 − ‖x‖²/s²)`.
    pub fn lorentz_gamma(&self, x: ArrayView1<f64>) -> f64 {
        1.0 / (1.0 - x.dot(&x) / (self.s * self.s)).sqrt()
    }

    /// Gamma factor under the configured convention.
    pub fn gamma_factor(&self, x: ArrayView1<f64>) -> f64 {
        match self.gamma {
            GammaConvention::Lorentz => self.lorentz_gamma(x),
            GammaConvention::Conformal => self.conformal_factor(x),
        }
    }

    /// `Exp_x(v) = x ⊕ (s · tanh(λ_x ‖v‖ / 2s) · v/‖v‖)`.
    pub fn exp_map(&self, x: ArrayView1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
        let vn = norm(v);
        if vn == 0.0 {
            return self.project(x.to_owned());
        }
        let lambda = self.conformal_factor(x);
        let step = &v * (self.s * (lambda * vn / (2.0 * self.s)).tanh() / vn);
        self.add(x, step.view())
    }

    /// `Log_x(y) = (2s/λ_x) · artanh(‖w‖/s) · w/‖w‖` with `w = (−x) ⊕ y`.
    pub fn log_map(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Array1<f64> {
        let w = self.sub_left(x, y);
        let wn = norm(w.view());
        if wn == 0.0 {
            return Array1::zeros(x.len());
        }
        let lambda = self.conformal_factor(x);
        w * (2.0 * self.s / lambda * artanh(wn / self.s) / wn)
    }

    /// `Exp_0(v) = s · tanh(‖v‖/s) · v/‖v‖`.
    pub fn exp0(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let vn = norm(v);
        if vn == 0.0 {
            return Array1::zeros(v.len());
        }
        self.project(&v * (self.s * (vn / self.s).tanh() / vn))
    }

    /// `Log_0(y) = s · artanh(‖y‖/s) · y/‖y‖`.
    pub fn log0(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let yn = norm(y);
        if yn == 0.0 {
            return Array1::zeros(y.len());
        }
        &y * (self.s * artanh(yn / self.s) / yn)
    }

    /// Point at parameter `t` on the gyroline through `x` (t = 0) and `y` (t = 1).
    pub fn gyroline(&self, x: ArrayView1<f64>, y: ArrayView1<f64>, t: f64) -> Array1<f64> {
        let v = self.sub_left(x, y);
        let tv = self.mobius_scalar_mul(t, v.view());
        self.add(x, tv.view())
    }

    /// Parallel transport of a tangent vector from the origin to `x`.
    pub fn transport_from_origin(&self, x: ArrayView1<f64>, v: ArrayView1<f64>) -> Array1<f64> {
        &v * (2.0 / self.conformal_factor(x))
    }

    /// Converts a Euclidean gradient at `x` into the Riemannian one (`λ_x⁻² ∇`).
    pub fn riemannian_grad(&self, x: ArrayView1<f64>, euclid_grad: ArrayView1<f64>) -> Array1<f64> {
        let lambda = self.conformal_factor(x);
        &euclid_grad / (lambda * lambda)
    }
}

pub(crate) fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
