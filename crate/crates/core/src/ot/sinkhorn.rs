//! Entropic OT solvers.
//!
//! The default solver works in the log domain on the semi-dual: the column
//! potential is eliminated in closed form, and the row potential follows damped
//! Newton steps while ε is annealed down from the cost spread. Plain alternating
//! log-domain updates and the classical scaling form stay available.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{check_simplex, entropy, CostKind, CostMatrix, Coupling};
use crate::error::{Error, Result};
use crate::gyrovector::{PoincareBall, PointCloud};
use crate::linalg::solve_psd;

/// Row error at which an intermediate ε stage is considered solved.
const STAGE_TOL: f64 = 1e-2;
const ANNEAL_FACTOR: f64 = 0.5;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Newton iterations granted to a warm start before falling back to annealing.
const WARM_ITERS: usize = 15;
/// A warm start anneals from this multiple of the target ε.
const WARM_SPAN: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub log_domain: bool,
    /// Newton steps on the semi-dual with ε annealing (log domain only).
    pub newton: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iters: 100,
            rel_tol: 1e-7,
            log_domain: true,
            newton: true,
        }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_iters must be at least 1".into(),
            ));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub coupling: Coupling,
    pub iterations: usize,
    pub converged: bool,
    /// Row potential `f` (zero on zero-weight rows), usable as a warm start.
    pub row_potential: Array1<f64>,
}

/// Entropic coupling for weights `a`, `b` and cost `cost`.
pub fn sinkhorn(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<Coupling> {
    sinkhorn_solve(a, b, cost, cfg).map(|s| s.coupling)
}

pub fn sinkhorn_solve(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    sinkhorn_solve_warm(a, b, cost, cfg, None)
}

/// Same, starting the Newton solver from a previous row potential at the
/// target ε. Falls back to the annealed cold start if that does not converge
/// quickly; other solvers ignore the warm start.
pub fn sinkhorn_solve_warm(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
    warm: Option<ArrayView1<f64>>,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    if let Some(w) = warm {
        if w.len() != a.len() {
            return Err(Error::ShapeMismatch(format!(
                "warm start of length {} for {} rows",
                w.len(),
                a.len()
            )));
        }
    }
    let (n_s, n_t) = cost.shape();
    if a.len() != n_s || b.len() != n_t {
        return Err(Error::ShapeMismatch(format!(
            "cost is {n_s}x{n_t}, weights are ({}, {})",
            a.len(),
            b.len()
        )));
    }
    check_simplex(a, "row")?;
    check_simplex(b, "column")?;

    // zero-mass rows and columns carry no plan entries; solve on the support
    let rows: Vec<usize> = (0..n_s).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n_t).filter(|&j| b[j] > 0.0).collect();
    let full = rows.len() == n_s && cols.len() == n_t;
    let (sub_c, sub_a, sub_b) = if full {
        (cost.values().to_owned(), a.to_owned(), b.to_owned())
    } else {
        (
            cost.values().select(Axis(0), &rows).select(Axis(1), &cols),
            a.select(Axis(0), &rows),
            b.select(Axis(0), &cols),
        )
    };
    let mask = sub_c.mapv(|v| cost.sentinel().is_some_and(|s| v >= s));
    check_admissible(&mask, &rows, &cols)?;

    let problem = Problem {
        c: sub_c.view(),
        mask: mask.view(),
        a: sub_a.view(),
        b: sub_b.view(),
    };
    let (plan, iterations, converged, f) = if !cfg.log_domain {
        problem.scaling(cfg)
    } else if cfg.newton {
        let warm = warm
            .map(|w| w.select(Axis(0), &rows))
            .filter(|w| w.iter().all(|v| v.is_finite()));
        problem.newton(cfg, warm)
    } else {
        problem.alternating(cfg)
    };
    if plan.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "Sinkhorn plan at epsilon {}",
            cfg.epsilon
        )));
    }

    let plan = if full {
        plan
    } else {
        let mut p = Array2::zeros((n_s, n_t));
        for (si, &i) in rows.iter().enumerate() {
            for (sj, &j) in cols.iter().enumerate() {
                p[[i, j]] = plan[[si, sj]];
            }
        }
        p
    };
    let mut row_potential = Array1::zeros(n_s);
    for (si, &i) in rows.iter().enumerate() {
        row_potential[i] = f[si];
    }
    let coupling = Coupling::new(plan, a.to_owned(), b.to_owned())?;
    Ok(SinkhornSolution {
        coupling,
        iterations,
        converged,
        row_potential,
    })
}

fn check_admissible(mask: &Array2<bool>, rows: &[usize], cols: &[usize]) -> Result<()> {
    for (si, r) in mask.rows().into_iter().enumerate() {
        if r.iter().all(|&m| m) {
            return Err(Error::InvalidParameter(format!(
                "row {} has no admissible column",
                rows[si]
            )));
        }
    }
    for (sj, c) in mask.columns().into_iter().enumerate() {
        if c.iter().all(|&m| m) {
            return Err(Error::InvalidParameter(format!(
                "column {} has no admissible row",
                cols[sj]
            )));
        }
    }
    Ok(())
}

struct Problem<'a> {
    c: ArrayView2<'a, f64>,
    mask: ArrayView2<'a, bool>,
    a: ArrayView1<'a, f64>,
    b: ArrayView1<'a, f64>,
}

impl Problem<'_> {
    /// Spread of the admissible costs, the starting temperature for annealing.
    fn cost_spread(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (c, m) in self.c.iter().zip(self.mask.iter()) {
            if !m {
                lo = lo.min(*c);
                hi = hi.max(*c);
            }
        }
        (hi - lo).max(0.0)
    }

    /// `g_j = ε log b_j − ε LSE_i((f_i − C_ij)/ε)`.
    fn col_potential(&self, f: &Array1<f64>, eps: f64) -> Array1<f64> {
        let (n, m) = self.c.dim();
        let mut g = Array1::zeros(m);
        for j in 0..m {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..n {
                if !self.mask[[i, j]] {
                    mx = mx.max((f[i] - self.c[[i, j]]) / eps);
                }
            }
            let mut sum = 0.0;
            for i in 0..n {
                if !self.mask[[i, j]] {
                    sum += ((f[i] - self.c[[i, j]]) / eps - mx).exp();
                }
            }
            g[j] = eps * self.b[j].ln() - eps * (mx + sum.ln());
        }
        g
    }

    /// `f_i = ε log a_i − ε LSE_j((g_j − C_ij)/ε)`.
    fn row_potential(&self, g: &Array1<f64>, eps: f64) -> Array1<f64> {
        let (n, m) = self.c.dim();
        let mut f = Array1::zeros(n);
        for i in 0..n {
            let mut mx = f64::NEG_INFINITY;
            for j in 0..m {
                if !self.mask[[i, j]] {
                    mx = mx.max((g[j] - self.c[[i, j]]) / eps);
                }
            }
            let mut sum = 0.0;
            for j in 0..m {
                if !self.mask[[i, j]] {
                    sum += ((g[j] - self.c[[i, j]]) / eps - mx).exp();
                }
            }
            f[i] = eps * self.a[i].ln() - eps * (mx + sum.ln());
        }
        f
    }

    fn plan(&self, f: &Array1<f64>, g: &Array1<f64>, eps: f64) -> Array2<f64> {
        Array2::from_shape_fn(self.c.dim(), |(i, j)| {
            if self.mask[[i, j]] {
                0.0
            } else {
                ((f[i] + g[j] - self.c[[i, j]]) / eps).exp()
            }
        })
    }

    fn row_error(&self, plan: &Array2<f64>) -> f64 {
        let r = plan.sum_axis(Axis(1));
        (&r - &self.a).mapv(f64::abs).sum() / self.a.sum()
    }

    /// Semi-dual objective `⟨f, a⟩ + ⟨g(f), b⟩`.
    fn semi_dual(&self, f: &Array1<f64>, eps: f64) -> f64 {
        f.dot(&self.a) + self.col_potential(f, eps).dot(&self.b)
    }

    fn newton(
        &self,
        cfg: &SinkhornConfig,
        warm: Option<Array1<f64>>,
    ) -> (Array2<f64>, usize, bool, Array1<f64>) {
        let target = cfg.epsilon;
        if let Some(f) = warm {
            let budget = WARM_ITERS.min(cfg.max_iters);
            let start = target.max(self.cost_spread().min(WARM_SPAN * target));
            let (plan, iters, converged, f) =
                self.newton_from(f, start, target, budget, cfg.rel_tol);
            if converged {
                return (plan, iters, true, f);
            }
        }
        let start = target.max(self.cost_spread());
        self.newton_from(
            Array1::zeros(self.c.nrows()),
            start,
            target,
            cfg.max_iters,
            cfg.rel_tol,
        )
    }

    fn newton_from(
        &self,
        mut f: Array1<f64>,
        start: f64,
        target: f64,
        max_iters: usize,
        rel_tol: f64,
    ) -> (Array2<f64>, usize, bool, Array1<f64>) {
        let mut eps = start;
        let mut iters = 0;
        loop {
            let g = self.col_potential(&f, eps);
            let plan = self.plan(&f, &g, eps);
            let err = self.row_error(&plan);
            let last_stage = eps <= target;
            if last_stage && err <= rel_tol {
                return (plan, iters, true, f);
            }
            if !last_stage && err < STAGE_TOL {
                eps = (eps * ANNEAL_FACTOR).max(target);
                continue;
            }
            if iters >= max_iters {
                if last_stage {
                    return (plan, iters, false, f);
                }
                let g = self.col_potential(&f, target);
                return (self.plan(&f, &g, target), iters, false, f);
            }
            iters += 1;
            f = self.newton_step(&f, &plan, eps);
        }
    }

    fn newton_step(&self, f: &Array1<f64>, plan: &Array2<f64>, eps: f64) -> Array1<f64> {
        let n = self.c.nrows();
        let r = plan.sum_axis(Axis(1));
        let grad = &self.a - &r;
        // ε·H = diag(r) − P diag(1/b) Pᵀ
        let scaled = Array2::from_shape_fn(plan.dim(), |(i, j)| plan[[i, j]] / self.b[j]);
        let pbp = scaled.dot(&plan.t());
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                h[(i, k)] = -pbp[[i, k]];
            }
            h[(i, i)] += r[i];
        }
        let trace: f64 = (0..n).map(|i| h[(i, i)]).sum();
        let ridge = 1e-12 * trace.max(f64::MIN_POSITIVE) / n as f64;
        let rhs: Vec<f64> = grad.iter().map(|v| v * eps).collect();
        let Some(step) = solve_psd(&h, &rhs, ridge) else {
            return self.alternating_row_update(f, eps);
        };
        let step = Array1::from(step);
        let slope = grad.dot(&step);
        if !(slope > 0.0) || step.iter().any(|v| !v.is_finite()) {
            return self.alternating_row_update(f, eps);
        }
        let s0 = self.semi_dual(f, eps);
        let slack = 4.0 * f64::EPSILON * (s0.abs() + 1.0);
        let mut t = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let cand = f + &(&step * t);
            let s = self.semi_dual(&cand, eps);
            if s.is_finite() && s >= s0 + ARMIJO_C * t * slope - slack {
                return cand;
            }
            t *= 0.5;
        }
        self.alternating_row_update(f, eps)
    }

    fn alternating_row_update(&self, f: &Array1<f64>, eps: f64) -> Array1<f64> {
        let g = self.col_potential(f, eps);
        self.row_potential(&g, eps)
    }

    fn alternating(&self, cfg: &SinkhornConfig) -> (Array2<f64>, usize, bool, Array1<f64>) {
        let eps = cfg.epsilon;
        let mut f = Array1::<f64>::zeros(self.c.nrows());
        let mut iters = 0;
        loop {
            let g = self.col_potential(&f, eps);
            let plan = self.plan(&f, &g, eps);
            if self.row_error(&plan) <= cfg.rel_tol {
                return (plan, iters, true, f);
            }
            if iters >= cfg.max_iters {
                return (plan, iters, false, f);
            }
            iters += 1;
            f = self.row_potential(&g, eps);
        }
    }

    fn scaling(&self, cfg: &SinkhornConfig) -> (Array2<f64>, usize, bool, Array1<f64>) {
        let eps = cfg.epsilon;
        let k = Array2::from_shape_fn(self.c.dim(), |(i, j)| {
            if self.mask[[i, j]] {
                0.0
            } else {
                (-self.c[[i, j]] / eps).exp()
            }
        });
        let mut u = Array1::<f64>::ones(self.c.nrows());
        let mut iters = 0;
        loop {
            let v = &self.b / &k.t().dot(&u);
            let plan = Array2::from_shape_fn(k.dim(), |(i, j)| u[i] * k[[i, j]] * v[j]);
            let err = self.row_error(&plan);
            if err <= cfg.rel_tol || iters >= cfg.max_iters || !err.is_finite() {
                return (plan, iters, err <= cfg.rel_tol, u.mapv(|x| eps * x.ln()));
            }
            iters += 1;
            u = &self.a / &k.dot(&v);
        }
    }
}

/// Entropic objective `⟨M, C⟩ − ε H(M)` of a coupling.
pub fn entropic_value(coupling: &Coupling, cost: &CostMatrix, epsilon: f64) -> f64 {
    coupling.transport_cost(cost) - epsilon * entropy(coupling.plan())
}

/// `W_ε(α, β) − ½ (W_ε(α, α) + W_ε(β, β))`.
pub fn sinkhorn_divergence(
    src: &PointCloud,
    tgt: &PointCloud,
    kind: CostKind,
    ball: &PoincareBall,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let w = |x: &PointCloud, y: &PointCloud| -> Result<f64> {
        let c = super::build_cost_matrix(x, y, kind, ball)?;
        let m = sinkhorn(x.weights(), y.weights(), &c, cfg)?;
        Ok(entropic_value(&m, &c, cfg.epsilon))
    };
    Ok(w(src, tgt)? - 0.5 * (w(src, src)? + w(tgt, tgt)?))
}
