//! Vector-Jacobian products of the ball operations.
//!
//! Each function takes the forward inputs and an upstream gradient `g` and
//! returns the gradient with respect to the inputs. Boundary clamping is
//! treated as the identity.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{artanh, norm, PoincareBall};

/// Below this radius a radial map is replaced by its linearization at 0.
const RADIAL_EPS: f64 = 1e-12;

/// VJP of a radial map `v ↦ h(‖v‖) v`, whose Jacobian is
/// `h I + (h'(ρ)/ρ) v vᵀ`.
fn radial_vjp(
    v: ArrayView1<f64>,
    g: ArrayView1<f64>,
    scale: f64,
    h: impl Fn(f64) -> (f64, f64),
    h0: f64,
) -> Array1<f64> {
    let rho = norm(v);
    if rho < RADIAL_EPS * scale {
        return &g * h0;
    }
    let (hv, dh) = h(rho);
    let coeff = dh / rho * v.dot(&g);
    &g * hv + &(&v * coeff)
}

impl PoincareBall {
    /// Gradients of `x ⊕ y` with respect to `x` and `y`.
    pub fn add_vjp(
        &self,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
        g: ArrayView1<f64>,
    ) -> (Array1<f64>, Array1<f64>) {
        let c = 1.0 / (self.s * self.s);
        let xy = x.dot(&y);
        let x2 = x.dot(&x);
        let y2 = y.dot(&y);
        let a = 1.0 + 2.0 * c * xy + c * y2;
        let b = 1.0 - c * x2;
        let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
        let gx_dot = g.dot(&x);
        let gy_dot = g.dot(&y);
        // g · numerator, numerator = a x + b y
        let gn = a * gx_dot + b * gy_dot;
        let inv = 1.0 / den;
        let inv2 = inv * inv;

        // ∂a/∂x = 2c y, ∂b/∂x = −2c x, ∂den/∂x = 2c y + 2c² ‖y‖² x
        let gx = &g * (a * inv) + &(&y * (gx_dot * 2.0 * c * inv))
            - &(&x * (gy_dot * 2.0 * c * inv))
            - &((&y * (2.0 * c) + &(&x * (2.0 * c * c * y2))) * (gn * inv2));
        // ∂a/∂y = 2c x + 2c y, ∂den/∂y = 2c x + 2c² ‖x‖² y
        let gy = &g * (b * inv) + &((&x + &y) * (gx_dot * 2.0 * c * inv))
            - &((&x * (2.0 * c) + &(&y * (2.0 * c * c * x2))) * (gn * inv2));
        (gx, gy)
    }

    /// Gradient of `Exp_0(v)` with respect to `v`.
    pub fn exp0_vjp(&self, v: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        let s = self.s;
        radial_vjp(
            v,
            g,
            s,
            |rho| {
                let t = (rho / s).tanh();
                let h = s * t / rho;
                let dh = ((1.0 - t * t) * rho - s * t) / (rho * rho);
                (h, dh)
            },
            1.0,
        )
    }

    /// Gradient of `Log_0(y)` with respect to `y`.
    pub fn log0_vjp(&self, y: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        let s = self.s;
        radial_vjp(
            y,
            g,
            s,
            |rho| {
                let a = artanh(rho / s);
                let h = s * a / rho;
                let dh = (rho / (1.0 - rho * rho / (s * s)) - s * a) / (rho * rho);
                (h, dh)
            },
            1.0,
        )
    }

    /// Gradient of `r ⊗ x` with respect to `x`.
    pub fn scalar_mul_vjp(&self, r: f64, x: ArrayView1<f64>, g: ArrayView1<f64>) -> Array1<f64> {
        let s = self.s;
        radial_vjp(
            x,
            g,
            s,
            |rho| {
                let t = (r * artanh(rho / s)).tanh();
                let h = s * t / rho;
                let dh =
                    (r * rho * (1.0 - t * t) / (1.0 - rho * rho / (s * s)) - s * t) / (rho * rho);
                (h, dh)
            },
            r,
        )
    }

    /// Gradients of `Q ⊗ x` with respect to `Q` and `x`.
    pub fn matvec_vjp(
        &self,
        q: ArrayView2<f64>,
        x: ArrayView1<f64>,
        g: ArrayView1<f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        // Q ⊗ x = Exp_0(Q Log_0(x))
        let u = self.log0(x);
        let z = q.dot(&u);
        let gz = self.exp0_vjp(z.view(), g);
        let gq = outer(gz.view(), u.view());
        let gu = q.t().dot(&gz);
        let gx = self.log0_vjp(x, gu.view());
        (gq, gx)
    }

    /// Gradients of `d(x, y)` with respect to `x` and `y`; zero when `x = y`.
    pub fn distance_grad(
        &self,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
    ) -> (Array1<f64>, Array1<f64>) {
        let neg = -&x;
        let w = self.add(neg.view(), y);
        let wn = norm(w.view());
        // coincident points: the distance has a kink, take the zero subgradient
        if wn <= 1e-14 * self.s {
            return (Array1::zeros(x.len()), Array1::zeros(y.len()));
        }
        let ratio = (wn / self.s).min(super::ARTANH_CLAMP);
        let gw = &w * (2.0 / (1.0 - ratio * ratio) / wn);
        let (gneg, gy) = self.add_vjp(neg.view(), y, gw.view());
        (-gneg, gy)
    }
}

pub(crate) fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for (i, &ai) in a.iter().enumerate() {
        out.row_mut(i).assign(&(&b * ai));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const H: f64 = 1e-6;

    fn fd_vec(f: impl Fn(&Array1<f64>) -> f64, x: &Array1<f64>) -> Array1<f64> {
        let mut g = Array1::zeros(x.len());
        for i in 0..x.len() {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += H;
            m[i] -= H;
            g[i] = (f(&p) - f(&m)) / (2.0 * H);
        }
        g
    }

    fn close(a: &Array1<f64>, b: &Array1<f64>, tol: f64) -> bool {
        let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
    }

    #[test]
    fn add_vjp_matches_finite_differences() {
        for s in [1.0, 2.5] {
            let ball = PoincareBall::new(s).unwrap();
            let x = array![0.3, -0.2, 0.4] * s;
            let y = array![-0.1, 0.5, 0.2] * s;
            let g = array![0.7, -1.3, 0.2];
            let (gx, gy) = ball.add_vjp(x.view(), y.view(), g.view());
            let fx = fd_vec(|p| ball.add(p.view(), y.view()).dot(&g), &x);
            let fy = fd_vec(|p| ball.add(x.view(), p.view()).dot(&g), &y);
            assert!(close(&gx, &fx, 1e-7), "{gx} vs {fx}");
            assert!(close(&gy, &fy, 1e-7), "{gy} vs {fy}");
        }
    }

    #[test]
    fn radial_vjps_match_finite_differences() {
        let ball = PoincareBall::new(1.7).unwrap();
        let v = array![0.4, -0.3, 0.9];
        let g = array![0.2, 0.5, -0.8];
        let e = ball.exp0_vjp(v.view(), g.view());
        assert!(close(
            &e,
            &fd_vec(|p| ball.exp0(p.view()).dot(&g), &v),
            1e-7
        ));
        let l = ball.log0_vjp(v.view(), g.view());
        assert!(close(
            &l,
            &fd_vec(|p| ball.log0(p.view()).dot(&g), &v),
            1e-7
        ));
        let r = ball.scalar_mul_vjp(0.5, v.view(), g.view());
        assert!(close(
            &r,
            &fd_vec(|p| ball.mobius_scalar_mul(0.5, p.view()).dot(&g), &v),
            1e-7
        ));
        // small-radius branch
        let tiny = array![1e-14, 0.0, 0.0];
        assert_eq!(ball.scalar_mul_vjp(0.5, tiny.view(), g.view()), &g * 0.5);
    }

    #[test]
    fn matvec_vjp_matches_finite_differences() {
        let ball = PoincareBall::unit();
        let q = array![[0.9, 0.2], [-0.4, 1.1], [0.3, 0.3]];
        let x = array![0.3, -0.5];
        let g = array![1.0, -0.5, 0.25];
        let (gq, gx) = ball.matvec_vjp(q.view(), x.view(), g.view());
        let fx = fd_vec(|p| ball.matvec(q.view(), p.view()).dot(&g), &x);
        assert!(close(&gx, &fx, 1e-7));
        for i in 0..3 {
            for j in 0..2 {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[[i, j]] += H;
                qm[[i, j]] -= H;
                let fd = (ball.matvec(qp.view(), x.view()).dot(&g)
                    - ball.matvec(qm.view(), x.view()).dot(&g))
                    / (2.0 * H);
                assert!((gq[[i, j]] - fd).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn distance_grad_matches_finite_differences() {
        for s in [1.0, 3.0, 1e4] {
            let ball = PoincareBall::new(s).unwrap();
            let x = array![0.2, 0.1, -0.3] * s.min(10.0);
            let y = array![-0.4, 0.3, 0.1] * s.min(10.0);
            let (gx, gy) = ball.distance_grad(x.view(), y.view());
            let fx = fd_vec(|p| ball.distance(p.view(), y.view()), &x);
            let fy = fd_vec(|p| ball.distance(x.view(), p.view()), &y);
            assert!(close(&gx, &fx, 1e-6), "s={s}: {gx} vs {fx}");
            assert!(close(&gy, &fy, 1e-6), "s={s}: {gy} vs {fy}");
        }
    }

    #[test]
    fn distance_grad_zero_at_coincident_points() {
        let ball = PoincareBall::unit();
        let x = array![0.1, 0.2];
        let (gx, gy) = ball.distance_grad(x.view(), x.view());
        assert!(gx.iter().chain(gy.iter()).all(|v| v.abs() < 1e-6));
    }
}
