//! Discrete optimal transport between weighted point clouds.
//!
//! Costs are compositions `l ∘ d` of a scalar function with the ball distance
//! (plus the squared Euclidean cost for flat baselines). Supervision is encoded
//! in the cost matrix: matched pairs cost 0, every other entry of a matched row
//! or column is replaced by a large finite sentinel.

mod exact;
mod export;
mod sinkhorn;

pub use exact::{exact_ot, FLOW_LIMIT, PERMUTATION_LIMIT};
pub use export::{read_dense_csv, write_dense_csv, write_triplets};
pub use sinkhorn::{
    entropic_value, sinkhorn, sinkhorn_divergence, sinkhorn_solve, sinkhorn_solve_warm,
    SinkhornConfig, SinkhornSolution,
};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::gyrovector::{PoincareBall, PointCloud};

/// Ground cost applied to pairs of points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostKind {
    /// `‖x − y‖²`
    SqEuclidean,
    /// `d(x, y)²`
    #[default]
    SqHyperbolic,
    /// `−cosh(d)`
    NegCosh,
    /// `−log(1 + cosh(d))`
    NegLogOnePlusCosh,
    /// `log(cosh(d))`
    LogCosh,
    /// `−log(cosh(d))`
    NegLogCosh,
}

impl CostKind {
    pub const ALL: [CostKind; 6] = [
        CostKind::SqEuclidean,
        CostKind::SqHyperbolic,
        CostKind::NegCosh,
        CostKind::NegLogOnePlusCosh,
        CostKind::LogCosh,
        CostKind::NegLogCosh,
    ];

    pub fn is_hyperbolic(self) -> bool {
        self != CostKind::SqEuclidean
    }

    pub fn name(self) -> &'static str {
        match self {
            CostKind::SqEuclidean => "sq_euclidean",
            CostKind::SqHyperbolic => "sq_hyperbolic",
            CostKind::NegCosh => "neg_cosh",
            CostKind::NegLogOnePlusCosh => "neg_log_one_plus_cosh",
            CostKind::LogCosh => "log_cosh",
            CostKind::NegLogCosh => "neg_log_cosh",
        }
    }

    /// `l(d)` for the distance-based kinds.
    fn of_distance(self, d: f64) -> f64 {
        match self {
            CostKind::SqEuclidean | CostKind::SqHyperbolic => d * d,
            CostKind::NegCosh => -d.cosh(),
            CostKind::NegLogOnePlusCosh => -(1.0 + d.cosh()).ln(),
            CostKind::LogCosh => log_cosh(d),
            CostKind::NegLogCosh => -log_cosh(d),
        }
    }

    /// `l'(d)`.
    fn derivative(self, d: f64) -> f64 {
        match self {
            CostKind::SqEuclidean | CostKind::SqHyperbolic => 2.0 * d,
            CostKind::NegCosh => -d.sinh(),
            CostKind::NegLogOnePlusCosh => -d.sinh() / (1.0 + d.cosh()),
            CostKind::LogCosh => d.tanh(),
            CostKind::NegLogCosh => -d.tanh(),
        }
    }

    /// Cost between two points.
    pub fn eval(self, ball: &PoincareBall, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match self {
            CostKind::SqEuclidean => {
                let diff = &x - &y;
                diff.dot(&diff)
            }
            kind => kind.of_distance(ball.distance(x, y)),
        }
    }

    /// Gradient of the cost with respect to its first argument.
    pub fn grad_first(
        self,
        ball: &PoincareBall,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
    ) -> Array1<f64> {
        match self {
            CostKind::SqEuclidean => (&x - &y) * 2.0,
            kind => {
                let d = ball.distance(x, y);
                let (gx, _) = ball.distance_grad(x, y);
                gx * kind.derivative(d)
            }
        }
    }
}

fn log_cosh(d: f64) -> f64 {
    let a = d.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl std::str::FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown cost kind '{s}'")))
    }
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// An `n_s × n_t` ground-cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    kind: CostKind,
    sentinel: Option<f64>,
}

impl CostMatrix {
    /// Wraps raw values; entries must be finite.
    pub fn from_values(values: Array2<f64>, kind: CostKind) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cost matrix".into()));
        }
        Ok(Self {
            values,
            kind,
            sentinel: None,
        })
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Sentinel value used for excluded entries, if supervision was applied.
    pub fn sentinel(&self) -> Option<f64> {
        self.sentinel
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        self.sentinel.is_some_and(|s| self.values[[i, j]] >= s)
    }

    /// New values on the same support: entries excluded here stay excluded,
    /// under a sentinel recomputed from the new admissible values.
    pub fn with_same_mask(&self, values: Array2<f64>) -> Result<CostMatrix> {
        if values.dim() != self.values.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                values.dim(),
                self.values.dim()
            )));
        }
        let Some(_) = self.sentinel else {
            return CostMatrix::from_values(values, self.kind);
        };
        let mut max = 0.0f64;
        for ((i, j), v) in values.indexed_iter() {
            if !self.is_masked(i, j) {
                if !v.is_finite() {
                    return Err(Error::NonFinite("cost matrix".into()));
                }
                max = max.max(v.abs());
            }
        }
        let sentinel = 1e6 * (max + 1.0);
        let mut out = values;
        for ((i, j), v) in out.indexed_iter_mut() {
            if self.is_masked(i, j) {
                *v = sentinel;
            }
        }
        Ok(CostMatrix {
            values: out,
            kind: self.kind,
            sentinel: Some(sentinel),
        })
    }

    /// Largest absolute value among entries that are not sentinels.
    pub fn max_finite_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for ((i, j), v) in self.values.indexed_iter() {
            if !self.is_masked(i, j) {
                m = m.max(v.abs());
            }
        }
        m
    }
}

/// Cost matrix between two clouds; hyperbolic kinds require both clouds inside `ball`.
pub fn build_cost_matrix(
    source: &PointCloud,
    target: &PointCloud,
    kind: CostKind,
    ball: &PoincareBall,
) -> Result<CostMatrix> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            got: target.dim(),
        });
    }
    if kind.is_hyperbolic() {
        for (name, cloud) in [("source", source), ("target", target)] {
            for (i, row) in cloud.points().rows().into_iter().enumerate() {
                if !ball.contains(row) {
                    let norm = row.dot(&row).sqrt();
                    return Err(Error::InvalidParameter(format!(
                        "{name} point {i} (norm {norm}) is not on the ball of radius {}",
                        ball.radius()
                    )));
                }
            }
        }
    }
    let values = Array2::from_shape_fn((source.len(), target.len()), |(i, j)| {
        kind.eval(ball, source.point(i), target.point(j))
    });
    CostMatrix::from_values(values, kind)
}

/// Zeroes matched entries and excludes the rest of every matched row and column.
pub fn apply_supervision(
    cost: &CostMatrix,
    matched_pairs: &[(usize, usize)],
) -> Result<CostMatrix> {
    let (n_s, n_t) = cost.shape();
    for &(i, j) in matched_pairs {
        if i >= n_s || j >= n_t {
            return Err(Error::IndexOutOfRange(format!(
                "pair ({i}, {j}) for a {n_s}x{n_t} cost"
            )));
        }
    }
    if matched_pairs.is_empty() {
        return Ok(cost.clone());
    }
    let sentinel = 1e6 * (cost.max_finite_abs() + 1.0);
    let mut values = cost.values.clone();
    if let Some(old) = cost.sentinel {
        values.mapv_inplace(|v| if v >= old { sentinel } else { v });
    }
    for &(i, j) in matched_pairs {
        values.row_mut(i).fill(sentinel);
        values.column_mut(j).fill(sentinel);
    }
    for &(i, j) in matched_pairs {
        values[[i, j]] = 0.0;
    }
    Ok(CostMatrix {
        values,
        kind: cost.kind,
        sentinel: Some(sentinel),
    })
}

/// A transport plan with its prescribed marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    plan: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl Coupling {
    pub fn new(
        plan: Array2<f64>,
        row_marginal: Array1<f64>,
        col_marginal: Array1<f64>,
    ) -> Result<Self> {
        if plan.nrows() != row_marginal.len() || plan.ncols() != col_marginal.len() {
            return Err(Error::ShapeMismatch(format!(
                "plan {:?} vs marginals ({}, {})",
                plan.dim(),
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        if plan.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::NonFinite(
                "coupling entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            plan,
            row_marginal,
            col_marginal,
        })
    }

    /// Independent coupling `a bᵀ`.
    pub fn product(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Self {
        let plan = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j]);
        Self {
            plan,
            row_marginal: a.to_owned(),
            col_marginal: b.to_owned(),
        }
    }

    pub fn plan(&self) -> ArrayView2<'_, f64> {
        self.plan.view()
    }

    pub fn into_plan(self) -> Array2<f64> {
        self.plan
    }

    pub fn row_marginal(&self) -> ArrayView1<'_, f64> {
        self.row_marginal.view()
    }

    pub fn col_marginal(&self) -> ArrayView1<'_, f64> {
        self.col_marginal.view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.plan.dim()
    }

    /// `⟨M, C⟩`; excluded entries carrying zero mass contribute nothing.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        self.plan
            .iter()
            .zip(cost.values.iter())
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, c)| m * c)
            .sum()
    }

    /// Discrete entropy `−Σ M (log M − 1)` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        entropy(self.plan.view())
    }

    /// Largest relative L1 violation of the row and column marginals.
    pub fn marginal_error(&self) -> f64 {
        marginal_error(
            self.plan.view(),
            self.row_marginal.view(),
            self.col_marginal.view(),
        )
    }

    /// `self + alpha (other − self)`.
    pub fn interpolate(&self, other: &Coupling, alpha: f64) -> Coupling {
        let plan = &self.plan + &((&other.plan - &self.plan) * alpha);
        Coupling {
            plan: plan.mapv(|v| v.max(0.0)),
            row_marginal: self.row_marginal.clone(),
            col_marginal: self.col_marginal.clone(),
        }
    }
}

pub(crate) fn entropy(plan: ArrayView2<f64>) -> f64 {
    -plan
        .iter()
        .filter(|m| **m > 0.0)
        .map(|m| m * (m.ln() - 1.0))
        .sum::<f64>()
}

pub(crate) fn marginal_error(plan: ArrayView2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let rows = plan.sum_axis(ndarray::Axis(1));
    let cols = plan.sum_axis(ndarray::Axis(0));
    let row_err = (&rows - &a).mapv(f64::abs).sum() / a.sum();
    let col_err = (&cols - &b).mapv(f64::abs).sum() / b.sum();
    row_err.max(col_err)
}

pub(crate) fn check_simplex(w: ArrayView1<f64>, what: &str) -> Result<()> {
    let sum = w.sum();
    if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "{what} weights must lie on the simplex (sum {sum})"
        )));
    }
    Ok(())
}
