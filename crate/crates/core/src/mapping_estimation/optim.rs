//! Riemannian optimizers for model parameters.
//!
//! Weights live in Euclidean space and take plain steps. Biases live on the
//! ball: their gradients are rescaled by `λ_b⁻²` and applied through `Exp_b`.

use ndarray::{Array1, Zip};

use super::hnn::{Grads, HnnModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OptimizerKind {
    Rgd,
    #[default]
    Radam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgd" => Ok(OptimizerKind::Rgd),
            "radam" => Ok(OptimizerKind::Radam),
            other => Err(Error::InvalidParameter(format!(
                "unknown optimizer '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub max_steps: usize,
    /// Stop after a few accepted steps whose relative improvement is below this.
    pub rel_tol: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Radam,
            lr: 0.01,
            max_steps: 200,
            rel_tol: 1e-9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter(
                "Adam betas must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// Optimizer state: learning rate and, for Adam, moment estimates.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimConfig,
    lr: f64,
    t: i32,
    moments: Option<(Grads, Grads)>,
}

impl Optimizer {
    pub fn new(cfg: &OptimConfig) -> Self {
        Self {
            cfg: *cfg,
            lr: cfg.lr,
            t: 0,
            moments: None,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    /// Parameters after one step along the Euclidean gradients `grads`.
    pub fn step(&mut self, model: &HnnModel, grads: &Grads) -> HnnModel {
        let ball = *model.ball();
        // Riemannian gradients of the biases
        let mut riem = grads.clone();
        for (g, layer) in riem.iter_mut().zip(model.layers()) {
            g.b = ball.riemannian_grad(layer.bias(), g.b.view());
        }
        let dirs = match self.cfg.kind {
            OptimizerKind::Rgd => riem,
            OptimizerKind::Radam => self.adam_directions(model, riem),
        };
        let mut next = model.clone();
        for (layer, d) in next.layers_mut().iter_mut().zip(&dirs) {
            layer.w.scaled_add(-self.lr, &d.w);
            if layer.use_bias {
                let v: Array1<f64> = &d.b * -self.lr;
                layer.b = ball.exp_map(layer.b.view(), v.view());
            }
        }
        next
    }

    /// Halved learning rate with fresh moments: stale momentum need not be a
    /// descent direction.
    fn backtracked(mut self) -> Self {
        self.lr *= 0.5;
        self.t = 0;
        self.moments = None;
        self
    }

    fn adam_directions(&mut self, model: &HnnModel, riem: Grads) -> Grads {
        let (b1, b2, eps) = (self.cfg.beta1, self.cfg.beta2, self.cfg.adam_eps);
        let (m, v) = self
            .moments
            .get_or_insert_with(|| (model.zero_grads(), model.zero_grads()));
        self.t += 1;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let mut dirs = model.zero_grads();
        for l in 0..riem.len() {
            Zip::from(&mut m[l].w)
                .and(&mut v[l].w)
                .and(&riem[l].w)
                .and(&mut dirs[l].w)
                .for_each(|m, v, g, d| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *d = (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            Zip::from(&mut m[l].b)
                .and(&mut v[l].b)
                .and(&riem[l].b)
                .and(&mut dirs[l].b)
                .for_each(|m, v, g, d| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *d = (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
        dirs
    }
}

/// One update of `model` with the given optimizer state.
pub fn riemannian_step(model: &HnnModel, grads: &Grads, optimizer: &mut Optimizer) -> HnnModel {
    optimizer.step(model, grads)
}

fn all_zero(grads: &Grads) -> bool {
    grads
        .iter()
        .all(|g| g.w.iter().chain(g.b.iter()).all(|v| *v == 0.0))
}

/// Descent-only minimization: a step is kept only if the objective does not
/// increase; rejected steps halve the learning rate, accepted ones grow it.
/// Returns the trace of accepted objective values, starting with the initial one.
pub fn minimize<F>(model: &mut HnnModel, cfg: &OptimConfig, mut objective: F) -> Result<Vec<f64>>
where
    F: FnMut(&HnnModel) -> Result<(f64, Grads)>,
{
    cfg.validate()?;
    let (mut loss, mut grads) = objective(model)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training objective".into()));
    }
    let mut trace = vec![loss];
    let mut opt = Optimizer::new(cfg);
    let min_lr = cfg.lr * 1e-12;
    let max_lr = cfg.lr * 1e3;
    let mut stalled = 0;
    for _ in 0..cfg.max_steps {
        if all_zero(&grads) || opt.lr < min_lr {
            break;
        }
        let saved = opt.clone();
        let cand = opt.step(model, &grads);
        match objective(&cand) {
            Ok((l, g)) if l.is_finite() && l <= loss => {
                let gain = loss - l;
                *model = cand;
                loss = l;
                grads = g;
                trace.push(l);
                opt.lr = (opt.lr * 1.1).min(max_lr);
                if gain <= cfg.rel_tol * loss.abs().max(f64::MIN_POSITIVE) {
                    stalled += 1;
                    if stalled >= 3 {
                        break;
                    }
                } else {
                    stalled = 0;
                }
            }
            Ok(_) => opt = saved.backtracked(),
            Err(e) if e.is_numerical() => opt = saved.backtracked(),
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}
