use ndarray::{Array2, ArrayView2};

use super::hnn::{Grads, HnnModel, HypLinearLayer};
use super::optim::{minimize, OptimConfig};
use crate::error::{Error, Result};
use crate::gyrovector::check_dims;

/// Settings for fitting a model to fixed targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Weight of `Σ_l ‖W_l − K_l‖²`.
    pub omega: f64,
    /// Anchor `K`; layers of another shape use the rectangular identity.
    pub anchor: Option<Array2<f64>>,
    pub optim: OptimConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            omega: 0.0,
            anchor: None,
            optim: OptimConfig::default(),
        }
    }
}

fn layer_anchor(layer: &HypLinearLayer, anchor: Option<&Array2<f64>>) -> Array2<f64> {
    match anchor {
        Some(k) if k.dim() == layer.w.dim() => k.clone(),
        _ => Array2::eye(layer.d_out().max(layer.d_in()))
            .slice_move(ndarray::s![..layer.d_out(), ..layer.d_in()]),
    }
}

/// `ω Σ_l ‖W_l − K_l‖²`, adding its gradient into `grads`.
pub fn regularizer(
    model: &HnnModel,
    omega: f64,
    anchor: Option<&Array2<f64>>,
    grads: Option<&mut Grads>,
) -> f64 {
    if omega == 0.0 {
        return 0.0;
    }
    let mut value = 0.0;
    let diffs: Vec<Array2<f64>> = model
        .layers()
        .iter()
        .map(|l| &l.w - &layer_anchor(l, anchor))
        .collect();
    for d in &diffs {
        value += d.iter().map(|v| v * v).sum::<f64>();
    }
    if let Some(grads) = grads {
        for (g, d) in grads.iter_mut().zip(&diffs) {
            g.w.scaled_add(2.0 * omega, d);
        }
    }
    omega * value
}

/// `mean_i d(T(x_i), y_i) + ω Ω(T)` and its parameter gradients.
pub fn fit_objective(
    model: &HnnModel,
    xs: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    omega: f64,
    anchor: Option<&Array2<f64>>,
) -> Result<(f64, Grads)> {
    let ball = model.ball();
    let n = xs.nrows() as f64;
    let mut grads = model.zero_grads();
    let mut loss = 0.0;
    for (x, y) in xs.rows().into_iter().zip(ys.rows()) {
        let tape = model.forward_tape(x);
        loss += ball.distance(tape.output(), y);
        let (g, _) = ball.distance_grad(tape.output(), y);
        model.backward(&tape, (g / n).view(), &mut grads);
    }
    loss /= n;
    loss += regularizer(model, omega, anchor, Some(&mut grads));
    if !loss.is_finite() {
        return Err(Error::NonFinite("fit objective".into()));
    }
    Ok((loss, grads))
}

/// Fits `model` so that `T(x_i) ≈ y_i`; returns the objective trace.
pub fn fit_to_targets(
    model: &mut HnnModel,
    xs: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    if xs.nrows() != ys.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} inputs but {} targets",
            xs.nrows(),
            ys.nrows()
        )));
    }
    if xs.nrows() == 0 {
        return Err(Error::Empty("training pairs".into()));
    }
    check_dims(model.d_in(), xs.ncols())?;
    check_dims(model.d_out(), ys.ncols())?;
    if !(cfg.omega >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "omega must be nonnegative, got {}",
            cfg.omega
        )));
    }
    let anchor = cfg.anchor.as_ref();
    minimize(model, &cfg.optim, |m| {
        fit_objective(m, xs, ys, cfg.omega, anchor)
    })
}
