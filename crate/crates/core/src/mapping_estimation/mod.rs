//! Learnable transport maps and their training procedures.

mod fit;
mod hnn;
mod hyp_me;
mod init;
mod optim;
mod ot_direct;

pub use fit::{fit_objective, fit_to_targets, regularizer, FitConfig};
pub use hnn::{Grads, HnnModel, HypLinearLayer, LayerGrads, Nonlinearity, Tape};
pub use hyp_me::{
    barycenter_loss, barycenter_loss_grad, barycenter_loss_grad_fd, hyp_me_fit, MeConfig,
    TrainState,
};
pub use init::{
    init_map, procrustes_rotation, supervised_coupling, Architecture, InitConfig, InitResult,
    InitStrategy,
};
pub use optim::{minimize, riemannian_step, OptimConfig, Optimizer, OptimizerKind};
pub use ot_direct::{
    ot_direct_fit, ot_direct_loss, ot_direct_loss_and_grad, target_self_term, OtDirectConfig,
    OtLoss,
};

use std::io::Write;

use crate::error::Result;

/// Writes a loss trace as CSV with header `iter,loss`.
pub fn write_loss_csv<W: Write>(trace: &[(usize, f64)], mut out: W) -> Result<()> {
    writeln!(out, "iter,loss")?;
    for (k, l) in trace {
        writeln!(out, "{k},{l:.16e}")?;
    }
    Ok(())
}
