use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{TransportMap, WrappedGaussian};
use crate::error::Result;
use crate::gyrovector::{check_dims, PoincareBall, PointCloud};
use crate::linalg::{check_spd, frobenius, sym_power};

/// `Σ1^{-1/2} (Σ1^{1/2} Σ2 Σ1^{1/2})^{1/2} Σ1^{-1/2}`.
pub fn bures_transport_matrix(
    sigma1: ArrayView2<f64>,
    sigma2: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_spd(sigma1, "sigma1")?;
    check_spd(sigma2, "sigma2")?;
    check_dims(sigma1.nrows(), sigma2.nrows())?;
    let r = sym_power(sigma1, 0.5);
    let r_inv = sym_power(sigma1, -0.5);
    let mut inner = r.dot(&sigma2).dot(&r);
    crate::linalg::symmetrize(&mut inner);
    let mut t = r_inv.dot(&sym_power(inner.view(), 0.5)).dot(&r_inv);
    crate::linalg::symmetrize(&mut t);
    Ok(t)
}

/// `‖T Σ1 T − Σ2‖_F / ‖Σ2‖_F`.
pub fn riccati_residual(
    t: ArrayView2<f64>,
    sigma1: ArrayView2<f64>,
    sigma2: ArrayView2<f64>,
) -> f64 {
    let lhs = t.dot(&sigma1).dot(&t);
    frobenius((&lhs - &sigma2).view()) / frobenius(sigma2)
}

/// `x ↦ μ2 ⊕ T ⊗ ((−μ1) ⊕ x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WLinearMap {
    ball: PoincareBall,
    mu_src: Array1<f64>,
    mu_tgt: Array1<f64>,
    t: Array2<f64>,
}

impl WLinearMap {
    pub fn new(
        ball: PoincareBall,
        mu_src: Array1<f64>,
        mu_tgt: Array1<f64>,
        t: Array2<f64>,
    ) -> Result<Self> {
        check_dims(mu_src.len(), mu_tgt.len())?;
        check_dims(mu_src.len(), t.nrows())?;
        check_dims(mu_src.len(), t.ncols())?;
        Ok(Self {
            ball,
            mu_src,
            mu_tgt,
            t,
        })
    }

    /// Closed-form map between the wrapped Gaussians estimated on each cloud.
    pub fn fit(ball: &PoincareBall, src: &PointCloud, tgt: &PointCloud) -> Result<Self> {
        let g1 = WrappedGaussian::estimate(ball, src)?;
        let g2 = WrappedGaussian::estimate(ball, tgt)?;
        Self::between(ball, &g1, &g2)
    }

    pub fn between(
        ball: &PoincareBall,
        g1: &WrappedGaussian,
        g2: &WrappedGaussian,
    ) -> Result<Self> {
        let t = bures_transport_matrix(g1.sigma(), g2.sigma())?;
        Self::new(*ball, g1.mu().to_owned(), g2.mu().to_owned(), t)
    }

    pub fn mu_src(&self) -> ArrayView1<'_, f64> {
        self.mu_src.view()
    }

    pub fn mu_tgt(&self) -> ArrayView1<'_, f64> {
        self.mu_tgt.view()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.t.view()
    }

    pub fn ball(&self) -> &PoincareBall {
        &self.ball
    }

    pub fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let centered = self.ball.sub_left(self.mu_src.view(), x);
        let moved = self.ball.matvec(self.t.view(), centered.view());
        self.ball.add(self.mu_tgt.view(), moved.view())
    }
}

impl TransportMap for WLinearMap {
    fn dim(&self) -> usize {
        self.mu_src.len()
    }

    fn transport_unchecked(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.apply(x)
    }
}
