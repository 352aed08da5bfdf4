//! Training a map directly against an entropic OT loss.
//!
//! The plan is recomputed at every evaluation and held fixed when
//! differentiating, so the gradient with respect to a transported point is
//! `Σ_j M_ij ∇_1 c(T(x_i), y_j)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::fit::{regularizer, FitConfig};
use super::hnn::{Grads, HnnModel};
use super::optim::{minimize, OptimConfig};
use crate::error::{Error, Result};
use crate::gyrovector::{check_dims, PoincareBall, PointCloud};
use crate::ot::{
    apply_supervision, entropy, sinkhorn_solve_warm, CostKind, CostMatrix, SinkhornConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OtLoss {
    /// `W_ε(T_# α, β)`.
    WEps,
    /// `W_ε(T_# α, β) − ½ (W_ε(T_# α, T_# α) + W_ε(β, β))`.
    #[default]
    SinkhornDiv,
}

impl OtLoss {
    pub fn name(self) -> &'static str {
        match self {
            OtLoss::WEps => "w_eps",
            OtLoss::SinkhornDiv => "sinkhorn_div",
        }
    }
}

impl std::str::FromStr for OtLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w_eps" => Ok(OtLoss::WEps),
            "sinkhorn_div" => Ok(OtLoss::SinkhornDiv),
            other => Err(Error::InvalidParameter(format!(
                "unknown OT loss '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtDirectConfig {
    pub loss: OtLoss,
    pub cost: CostKind,
    pub sinkhorn: SinkhornConfig,
    pub optim: OptimConfig,
    pub omega: f64,
    pub anchor: Option<Array2<f64>>,
    /// Known pairs; they shape the plan of the cross term.
    pub supervision: Vec<(usize, usize)>,
}

impl Default for OtDirectConfig {
    fn default() -> Self {
        Self {
            loss: OtLoss::default(),
            cost: CostKind::default(),
            sinkhorn: SinkhornConfig::default(),
            optim: OptimConfig {
                max_steps: 100,
                ..Default::default()
            },
            omega: 0.0,
            anchor: None,
            supervision: Vec::new(),
        }
    }
}

impl OtDirectConfig {
    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            omega: self.omega,
            anchor: self.anchor.clone(),
            optim: self.optim,
        }
    }
}

fn cost_values(
    kind: CostKind,
    ball: &PoincareBall,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
) -> Array2<f64> {
    Array2::from_shape_fn((x.nrows(), y.nrows()), |(i, j)| {
        kind.eval(ball, x.row(i), y.row(j))
    })
}

/// `⟨M, C⟩ − ε H(M)` for the plan solved on the supervised cost, evaluated
/// on the plain cost, with the plan-weighted gradient with respect to the rows
/// of `x`. `warm` carries the row potential between calls.
#[allow(clippy::too_many_arguments)]
fn entropic_term(
    kind: CostKind,
    ball: &PoincareBall,
    x: ArrayView2<f64>,
    a: ArrayView1<f64>,
    y: ArrayView2<f64>,
    b: ArrayView1<f64>,
    supervision: &[(usize, usize)],
    cfg: &SinkhornConfig,
    warm: &mut Option<Array1<f64>>,
) -> Result<(f64, Array2<f64>)> {
    let cost = CostMatrix::from_values(cost_values(kind, ball, x, y), kind)?;
    let plan_cost = apply_supervision(&cost, supervision)?;
    let sol = sinkhorn_solve_warm(a, b, &plan_cost, cfg, warm.as_ref().map(|w| w.view()))?;
    *warm = Some(sol.row_potential);
    let m = sol.coupling;
    let plan = m.plan();
    let mut value = -cfg.epsilon * entropy(plan);
    let mut grad = Array2::zeros(x.dim());
    for ((i, j), &mij) in plan.indexed_iter() {
        if mij > 0.0 {
            value += mij * cost.values()[[i, j]];
            let g = kind.grad_first(ball, x.row(i), y.row(j));
            grad.row_mut(i).scaled_add(mij, &g);
        }
    }
    Ok((value, grad))
}

/// `W_ε(β, β)` for the target cloud, constant during training.
pub fn target_self_term(
    ball: &PoincareBall,
    tgt: &PointCloud,
    cfg: &OtDirectConfig,
) -> Result<f64> {
    let (v, _) = entropic_term(
        cfg.cost,
        ball,
        tgt.points(),
        tgt.weights(),
        tgt.points(),
        tgt.weights(),
        &[],
        &cfg.sinkhorn,
        &mut None,
    )?;
    Ok(v)
}

/// Row potentials of the last cross and self solves.
#[derive(Default)]
struct WarmStarts {
    cross: Option<Array1<f64>>,
    own: Option<Array1<f64>>,
}

fn objective(
    model: &HnnModel,
    src: &PointCloud,
    tgt: &PointCloud,
    cfg: &OtDirectConfig,
    w_tgt: f64,
    warm: &mut WarmStarts,
) -> Result<(f64, Grads)> {
    let ball = model.ball();
    let tapes: Vec<_> = src
        .points()
        .rows()
        .into_iter()
        .map(|x| model.forward_tape(x))
        .collect();
    let z = Array2::from_shape_fn((src.len(), model.d_out()), |(i, k)| tapes[i].output()[k]);
    let a = src.weights();
    let (mut loss, mut gz) = entropic_term(
        cfg.cost,
        ball,
        z.view(),
        a,
        tgt.points(),
        tgt.weights(),
        &cfg.supervision,
        &cfg.sinkhorn,
        &mut warm.cross,
    )?;
    if cfg.loss == OtLoss::SinkhornDiv {
        let (w_self, g_self) = entropic_term(
            cfg.cost,
            ball,
            z.view(),
            a,
            z.view(),
            a,
            &[],
            &cfg.sinkhorn,
            &mut warm.own,
        )?;
        loss -= 0.5 * (w_self + w_tgt);
        // symmetric cost and plan: the self term contributes twice its one-sided gradient
        gz -= &g_self;
    }
    let mut grads = model.zero_grads();
    for (tape, g) in tapes.iter().zip(gz.rows()) {
        model.backward(tape, g, &mut grads);
    }
    loss += regularizer(model, cfg.omega, cfg.anchor.as_ref(), Some(&mut grads));
    if !loss.is_finite() {
        return Err(Error::NonFinite("OT loss".into()));
    }
    Ok((loss, grads))
}

fn check_inputs(model: &HnnModel, src: &PointCloud, tgt: &PointCloud) -> Result<()> {
    check_dims(model.d_in(), src.dim())?;
    check_dims(model.d_out(), tgt.dim())
}

/// Current value of the configured OT loss.
pub fn ot_direct_loss(
    model: &HnnModel,
    src: &PointCloud,
    tgt: &PointCloud,
    cfg: &OtDirectConfig,
) -> Result<f64> {
    ot_direct_loss_and_grad(model, src, tgt, cfg).map(|(l, _)| l)
}

/// Trains `model` on the OT loss; returns the trace of accepted loss values.
pub fn ot_direct_fit(
    model: &mut HnnModel,
    src: &PointCloud,
    tgt: &PointCloud,
    cfg: &OtDirectConfig,
) -> Result<Vec<f64>> {
    check_inputs(model, src, tgt)?;
    let w_tgt = match cfg.loss {
        OtLoss::SinkhornDiv => target_self_term(model.ball(), tgt, cfg)?,
        OtLoss::WEps => 0.0,
    };
    let mut warm = WarmStarts::default();
    minimize(model, &cfg.optim, |m| {
        objective(m, src, tgt, cfg, w_tgt, &mut warm)
    })
}

/// Loss and parameter gradients, exposed for verification.
pub fn ot_direct_loss_and_grad(
    model: &HnnModel,
    src: &PointCloud,
    tgt: &PointCloud,
    cfg: &OtDirectConfig,
) -> Result<(f64, Grads)> {
    check_inputs(model, src, tgt)?;
    let w_tgt = match cfg.loss {
        OtLoss::SinkhornDiv => target_self_term(model.ball(), tgt, cfg)?,
        OtLoss::WEps => 0.0,
    };
    objective(model, src, tgt, cfg, w_tgt, &mut WarmStarts::default())
}
