//! Barycentric projections of a coupling onto the target cloud.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::gyrovector::{check_dims, GammaConvention, PoincareBall, PointCloud};
use crate::ot::Coupling;

/// Row masses (or gyro denominators) below this are treated as degenerate.
pub const DEGENERATE_MASS: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterResult {
    pub projected: Array2<f64>,
    /// `None` for the Euclidean projection.
    pub convention: Option<GammaConvention>,
}

/// `diag(M 1)⁻¹ M X_t`.
pub fn euclid_barycenter_map(m: &Coupling, targets: ArrayView2<f64>) -> Result<BarycenterResult> {
    let projected = euclid_barycenters(m.plan(), targets)?;
    Ok(BarycenterResult {
        projected,
        convention: None,
    })
}

/// Euclidean barycenters of the rows of an arbitrary nonnegative plan.
pub fn euclid_barycenters(plan: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_dims(plan.ncols(), targets.nrows())?;
    let mut out = plan.dot(&targets);
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let mass = plan.row(i).sum();
        if !(mass >= DEGENERATE_MASS) {
            return Err(Error::DegenerateRow { row: i, mass });
        }
        row /= mass;
    }
    Ok(out)
}

/// `½ ⊗ [diag(M g)⁻¹ M G X_t]` with `G = diag(γ²)` and `g = γ² − ½`.
pub fn gyrobarycenter_map(
    ball: &PoincareBall,
    m: &Coupling,
    targets: &PointCloud,
) -> Result<BarycenterResult> {
    let projected = gyrobarycenters(ball, m.plan(), targets.points())?;
    Ok(BarycenterResult {
        projected,
        convention: Some(ball.gamma_convention()),
    })
}

/// Gyrobarycenters of the rows of an arbitrary nonnegative plan.
pub fn gyrobarycenters(
    ball: &PoincareBall,
    plan: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    check_dims(plan.ncols(), targets.nrows())?;
    let g2 = gamma_squared(ball, targets);
    let mut out = Array2::zeros((plan.nrows(), targets.ncols()));
    for (i, row) in plan.rows().into_iter().enumerate() {
        let b = row_gyrobarycenter(ball, row, targets, g2.view())
            .map_err(|mass| Error::DegenerateRow { row: i, mass })?;
        out.row_mut(i).assign(&b);
    }
    Ok(out)
}

/// Gyrobarycenter of a weighted cloud.
pub fn gyromidpoint(ball: &PoincareBall, points: &PointCloud) -> Result<Array1<f64>> {
    weighted_gyromidpoint(ball, points.points(), points.weights())
}

pub fn weighted_gyromidpoint(
    ball: &PoincareBall,
    points: ArrayView2<f64>,
    weights: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    if points.nrows() == 0 {
        return Err(Error::Empty("gyromidpoint of no points".into()));
    }
    check_dims(points.nrows(), weights.len())?;
    let g2 = gamma_squared(ball, points);
    row_gyrobarycenter(ball, weights, points, g2.view())
        .map_err(|mass| Error::DegenerateRow { row: 0, mass })
}

pub(crate) fn gamma_squared(ball: &PoincareBall, points: ArrayView2<f64>) -> Array1<f64> {
    points
        .rows()
        .into_iter()
        .map(|x| ball.gamma_factor(x).powi(2))
        .collect()
}

/// Inner point `v = Σ w_j γ_j² x_j / Σ w_j (γ_j² − ½)` and its denominator.
pub(crate) fn gyro_inner(
    w: ArrayView1<f64>,
    targets: ArrayView2<f64>,
    g2: ArrayView1<f64>,
) -> (Array1<f64>, f64) {
    let mut num = Array1::zeros(targets.ncols());
    let mut den = 0.0;
    for (j, x) in targets.rows().into_iter().enumerate() {
        if w[j] != 0.0 {
            num.scaled_add(w[j] * g2[j], &x);
            den += w[j] * (g2[j] - 0.5);
        }
    }
    (num / den, den)
}

fn row_gyrobarycenter(
    ball: &PoincareBall,
    w: ArrayView1<f64>,
    targets: ArrayView2<f64>,
    g2: ArrayView1<f64>,
) -> std::result::Result<Array1<f64>, f64> {
    let (v, den) = gyro_inner(w, targets, g2);
    if !(den >= DEGENERATE_MASS) {
        return Err(den);
    }
    Ok(ball.mobius_scalar_mul(0.5, v.view()))
}
