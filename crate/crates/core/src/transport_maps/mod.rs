//! Closed-form and memorization-based transport maps.

mod otda;
mod w_linear;
mod wrapped;

pub use otda::OtdaMap;
pub use w_linear::{bures_transport_matrix, riccati_residual, WLinearMap};
pub use wrapped::{tangent_covariance, WrappedGaussian, SINGULAR_EIGEN};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::Result;
use crate::gyrovector::check_dims;

/// A map from source points to target points.
pub trait TransportMap {
    fn dim(&self) -> usize;

    fn transport_unchecked(&self, x: ArrayView1<f64>) -> Array1<f64>;

    fn transport(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dims(self.dim(), x.len())?;
        Ok(self.transport_unchecked(x))
    }

    /// Applies the map to every row.
    fn transport_all(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dims(self.dim(), xs.ncols())?;
        let rows: Vec<Array1<f64>> = xs
            .rows()
            .into_iter()
            .map(|x| self.transport_unchecked(x))
            .collect();
        let d_out = rows.first().map_or(xs.ncols(), Array1::len);
        Ok(Array2::from_shape_fn((rows.len(), d_out), |(i, k)| {
            rows[i][k]
        }))
    }
}
