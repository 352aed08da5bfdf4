// `!(x >= 0.0)` style guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod error;
pub mod eval;
pub mod formats;
pub mod gyrovector;
pub mod linalg;
pub mod mapping_estimation;
pub mod ot;
pub mod transport_maps;

pub use error::{Error, Result};
pub use gyrovector::{GammaConvention, PoincareBall, PointCloud};
pub use ot::{CostKind, CostMatrix, Coupling, SinkhornConfig};
pub use transport_maps::{OtdaMap, TransportMap, WLinearMap, WrappedGaussian};
