use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{norm, PoincareBall};
use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// `n` points with weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl PointCloud {
    /// Uniformly weighted cloud with no ball constraint.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::Empty("point cloud".into()));
        }
        let weights = Array1::from_elem(n, 1.0 / n as f64);
        Self::with_weights(points, weights)
    }

    pub fn with_weights(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        let sum: f64 = weights.sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidWeights(sum));
        }
        Ok(Self { points, weights })
    }

    /// Uniformly weighted cloud whose rows must lie inside `ball`; rows in the
    /// boundary margin are clamped.
    pub fn on_ball(points: Array2<f64>, ball: &PoincareBall) -> Result<Self> {
        let cloud = Self::uniform(points)?;
        cloud.into_ball(ball)
    }

    /// Checks ball membership and clamps rows into the margin.
    pub fn into_ball(mut self, ball: &PoincareBall) -> Result<Self> {
        for (i, mut row) in self.points.rows_mut().into_iter().enumerate() {
            let n = norm(row.view());
            if n >= ball.radius() {
                return Err(Error::OutsideBall {
                    index: i,
                    norm: n,
                    radius: ball.radius(),
                });
            }
            if n > ball.max_norm() {
                row *= ball.max_norm() / n;
            }
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn into_points(self) -> Array2<f64> {
        self.points
    }

    /// Sub-cloud of the given rows, re-weighted uniformly.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let points = self.points.select(ndarray::Axis(0), rows);
        Self::uniform(points)
    }
}
