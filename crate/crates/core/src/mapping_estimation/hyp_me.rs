//! Mapping estimation by block coordinate descent on a coupling and a map.
//!
//! The objective is
//! `mean_i d(T(x_i), B_M(x_i)) + ω Ω(T) + η (⟨M, C⟩ − ε H(M))`,
//! where `B_M` is the gyrobarycentric projection. The coupling step is a
//! generalized conditional gradient whose linear oracle is an entropic OT
//! problem; the map step refits `T` to the current projection.

use ndarray::{Array1, Array2, ArrayView2};

use super::fit::{fit_to_targets, regularizer, FitConfig};
use super::hnn::HnnModel;
use super::optim::OptimConfig;
use crate::barycenter::{gamma_squared, gyro_inner, gyrobarycenters, DEGENERATE_MASS};
use crate::error::{Error, Result};
use crate::gyrovector::{check_dims, PoincareBall, PointCloud};
use crate::ot::{
    apply_supervision, build_cost_matrix, entropy, sinkhorn, CostKind, CostMatrix, Coupling,
    SinkhornConfig,
};

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct MeConfig {
    /// Weight of the OT term; `f64::INFINITY` fixes the coupling to the plain Sinkhorn plan.
    pub eta: f64,
    pub omega: f64,
    pub epsilon: f64,
    pub anchor: Option<Array2<f64>>,
    pub max_outer: usize,
    /// Relative change of the total loss below which the outer loop stops.
    pub tol: f64,
    pub cost: CostKind,
    /// Solver settings for every coupling computation (its `epsilon` is overridden).
    pub sinkhorn: SinkhornConfig,
    /// Budget of each map step.
    pub t_step: OptimConfig,
    pub supervision: Vec<(usize, usize)>,
}

impl Default for MeConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            omega: 0.0,
            epsilon: 0.01,
            anchor: None,
            max_outer: 20,
            tol: 1e-7,
            cost: CostKind::default(),
            sinkhorn: SinkhornConfig::default(),
            t_step: OptimConfig {
                max_steps: 30,
                ..Default::default()
            },
            supervision: Vec::new(),
        }
    }
}

impl MeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta must be nonnegative, got {}",
                self.eta
            )));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega must be nonnegative, got {}",
                self.omega
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    fn fit_config(&self) -> FitConfig {
        FitConfig {
            omega: self.omega,
            anchor: self.anchor.clone(),
            optim: self.t_step,
        }
    }

    /// Entropic weight of the linear oracle.
    pub fn oracle_epsilon(&self) -> f64 {
        if self.eta > 0.0 && self.eta.is_finite() {
            self.eta * self.epsilon
        } else {
            self.epsilon
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// `(outer iteration, total loss)`, starting at iteration 0.
    pub trace: Vec<(usize, f64)>,
    /// Marginal error of the coupling after each outer iteration.
    pub marginal_errors: Vec<f64>,
    /// Accepted conditional-gradient step sizes.
    pub step_sizes: Vec<f64>,
    pub converged: bool,
}

/// `mean_i d(T(x_i), B_M(x_i))` for transported points `tx`.
pub fn barycenter_loss(
    ball: &PoincareBall,
    tx: ArrayView2<f64>,
    plan: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<f64> {
    check_dims(tx.nrows(), plan.nrows())?;
    let bary = gyrobarycenters(ball, plan, targets)?;
    let n = tx.nrows() as f64;
    Ok(tx
        .rows()
        .into_iter()
        .zip(bary.rows())
        .map(|(t, b)| ball.distance(t, b))
        .sum::<f64>()
        / n)
}

/// The loss above and its gradient with respect to every plan entry.
///
/// With `v_i = Σ_j M_ij γ_j² y_j / S_i`, `S_i = Σ_j M_ij (γ_j² − ½)` and
/// `B_i = ½ ⊗ v_i`, the entry `(i, j)` is
/// `⟨J_{½⊗}(v_i)ᵀ ∇_B d, γ_j² y_j − (γ_j² − ½) v_i⟩ / (n S_i)`.
pub fn barycenter_loss_grad(
    ball: &PoincareBall,
    tx: ArrayView2<f64>,
    plan: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>)> {
    check_dims(tx.nrows(), plan.nrows())?;
    check_dims(plan.ncols(), targets.nrows())?;
    let g2 = gamma_squared(ball, targets);
    let n = tx.nrows() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(plan.dim());
    for (i, row) in plan.rows().into_iter().enumerate() {
        let (v, s) = gyro_inner(row, targets, g2.view());
        if !(s >= DEGENERATE_MASS) {
            return Err(Error::DegenerateRow { row: i, mass: s });
        }
        let b = ball.mobius_scalar_mul(0.5, v.view());
        loss += ball.distance(tx.row(i), b.view());
        let (_, gb) = ball.distance_grad(tx.row(i), b.view());
        let p = ball.scalar_mul_vjp(0.5, v.view(), gb.view());
        let pv = p.dot(&v);
        for (j, y) in targets.rows().into_iter().enumerate() {
            grad[[i, j]] = (g2[j] * p.dot(&y) - (g2[j] - 0.5) * pv) / (n * s);
        }
    }
    Ok((loss / n, grad))
}

/// Central finite differences of [`barycenter_loss`] in every plan entry.
pub fn barycenter_loss_grad_fd(
    ball: &PoincareBall,
    tx: ArrayView2<f64>,
    plan: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    h: f64,
) -> Result<Array2<f64>> {
    let mut grad = Array2::zeros(plan.dim());
    for i in 0..plan.nrows() {
        for j in 0..plan.ncols() {
            let mut p = plan.to_owned();
            let mut m = plan.to_owned();
            p[[i, j]] += h;
            m[[i, j]] -= h;
            grad[[i, j]] = (barycenter_loss(ball, tx, p.view(), targets)?
                - barycenter_loss(ball, tx, m.view(), targets)?)
                / (2.0 * h);
        }
    }
    Ok(grad)
}

struct Problem<'a> {
    ball: PoincareBall,
    src: &'a PointCloud,
    tgt: &'a PointCloud,
    cost: CostMatrix,
    cfg: &'a MeConfig,
}

impl Problem<'_> {
    fn transported(&self, model: &HnnModel) -> Array2<f64> {
        let rows: Vec<Array1<f64>> = self
            .src
            .points()
            .rows()
            .into_iter()
            .map(|x| model.forward_unchecked(x))
            .collect();
        Array2::from_shape_fn((rows.len(), model.d_out()), |(i, k)| rows[i][k])
    }

    /// `η (⟨M, C⟩ − ε H(M))`, zero when the coupling is fixed.
    fn ot_term(&self, m: &Coupling) -> f64 {
        if self.cfg.eta.is_finite() && self.cfg.eta > 0.0 {
            self.cfg.eta * (m.transport_cost(&self.cost) - self.cfg.epsilon * entropy(m.plan()))
        } else {
            0.0
        }
    }

    fn coupling_part(&self, m: &Coupling, tx: ArrayView2<f64>) -> Result<f64> {
        Ok(barycenter_loss(&self.ball, tx, m.plan(), self.tgt.points())? + self.ot_term(m))
    }

    fn total(&self, m: &Coupling, model: &HnnModel) -> Result<f64> {
        let tx = self.transported(model);
        Ok(self.coupling_part(m, tx.view())?
            + regularizer(model, self.cfg.omega, self.cfg.anchor.as_ref(), None))
    }

    fn sinkhorn_cfg(&self, epsilon: f64) -> SinkhornConfig {
        self.cfg.sinkhorn.with_epsilon(epsilon)
    }

    /// One conditional-gradient step on the coupling; returns it with the step size.
    fn m_step(&self, m: &Coupling, model: &HnnModel) -> Result<(Coupling, f64)> {
        let eta = self.cfg.eta;
        let tx = self.transported(model);
        let targets = self.tgt.points();
        let (lh, g) = barycenter_loss_grad(&self.ball, tx.view(), m.plan(), targets)?;
        let bary = gyrobarycenters(&self.ball, m.plan(), targets)?;
        let c = self.cost.values();
        let mut f = Array2::zeros(g.dim());
        for (i, b) in bary.rows().into_iter().enumerate() {
            let lambda = self.ball.conformal_factor(b);
            for j in 0..g.ncols() {
                f[[i, j]] = eta * c[[i, j]] + g[[i, j]] / (lambda * lambda);
            }
        }
        let oracle_cost = self.cost.with_same_mask(f)?;
        let star = sinkhorn(
            self.src.weights(),
            self.tgt.weights(),
            &oracle_cost,
            &self.sinkhorn_cfg(self.cfg.oracle_epsilon()),
        )?;

        // directional derivative of the coupling part along M* − M
        let plan = m.plan();
        let mut slope = 0.0;
        for ((i, j), &mij) in plan.indexed_iter() {
            let d = star.plan()[[i, j]] - mij;
            if d == 0.0 || self.cost.is_masked(i, j) {
                continue;
            }
            let mut grad = g[[i, j]];
            if eta > 0.0 {
                grad += eta * c[[i, j]];
                if mij > 0.0 {
                    grad += eta * self.cfg.epsilon * mij.ln();
                }
            }
            slope += grad * d;
        }
        if !(slope < 0.0) {
            return Ok((m.clone(), 0.0));
        }
        let l0 = lh + self.ot_term(m);
        let mut alpha = 1.0;
        for _ in 0..=MAX_BACKTRACKS {
            let cand = m.interpolate(&star, alpha);
            let l = self.coupling_part(&cand, tx.view())?;
            if l <= l0 + ARMIJO_C * alpha * slope {
                return Ok((cand, alpha));
            }
            alpha *= 0.5;
        }
        // a vanishing slope is rounding noise at a stationary coupling
        if -slope <= 1e-9 * (l0.abs() + 1.0) {
            return Ok((m.clone(), 0.0));
        }
        Err(Error::LineSearch {
            backtracks: MAX_BACKTRACKS,
            slope,
        })
    }
}

/// Alternates coupling and map updates from the given initial model.
pub fn hyp_me_fit(
    src: &PointCloud,
    tgt: &PointCloud,
    model: HnnModel,
    cfg: &MeConfig,
) -> Result<(Coupling, HnnModel, TrainState)> {
    cfg.validate()?;
    check_dims(model.d_in(), src.dim())?;
    check_dims(model.d_out(), tgt.dim())?;
    let ball = *model.ball();
    let cost = build_cost_matrix(src, tgt, cfg.cost, &ball)?;
    let cost = apply_supervision(&cost, &cfg.supervision)?;
    let problem = Problem {
        ball,
        src,
        tgt,
        cost,
        cfg,
    };

    let mut model = model;
    let mut m = sinkhorn(
        src.weights(),
        tgt.weights(),
        &problem.cost,
        &problem.sinkhorn_cfg(cfg.epsilon),
    )?;
    let mut loss = problem.total(&m, &model)?;
    let mut state = TrainState {
        trace: vec![(0, loss)],
        marginal_errors: vec![m.marginal_error()],
        step_sizes: Vec::new(),
        converged: false,
    };
    let fit_cfg = cfg.fit_config();
    for k in 1..=cfg.max_outer {
        if cfg.eta.is_finite() {
            let (next, alpha) = problem.m_step(&m, &model)?;
            m = next;
            state.step_sizes.push(alpha);
        }
        let targets = gyrobarycenters(&ball, m.plan(), tgt.points())?;
        fit_to_targets(&mut model, src.points(), targets.view(), &fit_cfg)?;
        let next = problem.total(&m, &model)?;
        if !next.is_finite() {
            return Err(Error::NonFinite("total loss".into()));
        }
        state.trace.push((k, next));
        state.marginal_errors.push(m.marginal_error());
        let change = (loss - next).abs();
        loss = next;
        if change <= cfg.tol * loss.abs() {
            state.converged = true;
            break;
        }
    }
    Ok((m, model, state))
}
