use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::TransportMap;
use crate::barycenter::{euclid_barycenter_map, gyrobarycenter_map};
use crate::error::{Error, Result};
use crate::gyrovector::{check_dims, PoincareBall, PointCloud};
use crate::ot::Coupling;

/// Memorized barycentric images with nearest-neighbor interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct OtdaMap {
    ball: PoincareBall,
    train_src: PointCloud,
    images: Array2<f64>,
}

impl OtdaMap {
    /// Stores the gyrobarycenter image of every training source point.
    pub fn fit(
        ball: &PoincareBall,
        m: &Coupling,
        src: &PointCloud,
        tgt: &PointCloud,
    ) -> Result<Self> {
        if src.is_empty() {
            return Err(Error::Empty("OT-DA training set".into()));
        }
        if m.shape() != (src.len(), tgt.len()) {
            return Err(Error::ShapeMismatch(format!(
                "coupling {:?} for {} sources and {} targets",
                m.shape(),
                src.len(),
                tgt.len()
            )));
        }
        let images = gyrobarycenter_map(ball, m, tgt)?.projected;
        Ok(Self {
            ball: *ball,
            train_src: src.clone(),
            images,
        })
    }

    /// Same, with Euclidean barycenters and translation (pair with a flat ball).
    pub fn fit_euclidean(
        ball: &PoincareBall,
        m: &Coupling,
        src: &PointCloud,
        tgt: &PointCloud,
    ) -> Result<Self> {
        if src.is_empty() {
            return Err(Error::Empty("OT-DA training set".into()));
        }
        let images = euclid_barycenter_map(m, tgt.points())?.projected;
        Ok(Self {
            ball: *ball,
            train_src: src.clone(),
            images,
        })
    }

    pub fn images(&self) -> ArrayView2<'_, f64> {
        self.images.view()
    }

    pub fn train_src(&self) -> &PointCloud {
        &self.train_src
    }

    /// Index of the closest training point; lowest index wins ties.
    pub fn nearest(&self, x: ArrayView1<f64>) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, xi) in self.train_src.points().rows().into_iter().enumerate() {
            let d = self.ball.distance(x, xi);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// `B(X_i) ⊕ ((−X_i) ⊕ x)` for the nearest training point `X_i`.
    pub fn transform(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let i = self.nearest(x);
        let xi = self.train_src.point(i);
        let offset = self.ball.sub_left(xi, x);
        self.ball.add(self.images.row(i), offset.view())
    }

    pub fn transform_checked(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dims(self.train_src.dim(), x.len())?;
        Ok(self.transform(x))
    }
}

impl TransportMap for OtdaMap {
    fn dim(&self) -> usize {
        self.train_src.dim()
    }

    fn transport_unchecked(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.transform(x)
    }
}
