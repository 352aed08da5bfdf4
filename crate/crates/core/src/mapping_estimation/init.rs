//! Initialization strategies: a seeded model pre-trained on a strategy-specific
//! target set.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::fit::{fit_to_targets, FitConfig};
use super::hnn::{HnnModel, Nonlinearity};
use crate::barycenter::gyrobarycenters;
use crate::error::{Error, Result};
use crate::gyrovector::{PoincareBall, PointCloud};
use crate::linalg::polar_orthogonal;
use crate::ot::{
    apply_supervision, build_cost_matrix, sinkhorn, CostKind, Coupling, SinkhornConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitStrategy {
    /// Fan-based random weights, no pre-training.
    Random,
    /// Targets are a random permutation of the target cloud.
    Permutation,
    /// Targets are the source points themselves.
    Identity,
    /// Targets are the source points under the best rotation.
    Procrustes,
    /// Targets are the gyrobarycentric images under a Sinkhorn coupling.
    #[default]
    Gyrobarycenter,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 5] = [
        InitStrategy::Random,
        InitStrategy::Permutation,
        InitStrategy::Identity,
        InitStrategy::Procrustes,
        InitStrategy::Gyrobarycenter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Random => "random",
            InitStrategy::Permutation => "permutation",
            InitStrategy::Identity => "identity",
            InitStrategy::Procrustes => "procrustes",
            InitStrategy::Gyrobarycenter => "gyrobarycenter",
        }
    }
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitStrategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown init strategy '{s}'")))
    }
}

/// Hidden widths, activation and bias flag of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub nonlinearity: Nonlinearity,
    pub bias: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: Vec::new(),
            nonlinearity: Nonlinearity::Relu,
            bias: true,
        }
    }
}

impl Architecture {
    pub fn build(
        &self,
        ball: PoincareBall,
        d_in: usize,
        d_out: usize,
        seed: u64,
    ) -> Result<HnnModel> {
        let mut dims = vec![d_in];
        dims.extend_from_slice(&self.hidden);
        dims.push(d_out);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HnnModel::random(ball, &dims, self.nonlinearity, self.bias, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InitConfig {
    pub strategy: InitStrategy,
    pub seed: u64,
    pub arch: Architecture,
    pub fit: FitConfig,
    pub cost: CostKind,
    pub sinkhorn: SinkhornConfig,
    /// Known `(source, target)` pairs, used by the coupling and Procrustes.
    pub supervision: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct InitResult {
    pub model: HnnModel,
    /// Pre-training targets (none for the random strategy).
    pub targets: Option<Array2<f64>>,
    pub trace: Vec<f64>,
    /// Rotation found by the Procrustes strategy.
    pub rotation: Option<Array2<f64>>,
    /// Coupling used by the gyrobarycenter strategy.
    pub coupling: Option<Coupling>,
}

/// Orthogonal `P` minimizing `Σ ‖y_i − P x_i‖²` over paired rows.
pub fn procrustes_rotation(xs: ArrayView2<f64>, ys: ArrayView2<f64>) -> Result<Array2<f64>> {
    if xs.dim() != ys.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            xs.dim(),
            ys.dim()
        )));
    }
    Ok(polar_orthogonal(ys.t().dot(&xs).view()))
}

/// Sinkhorn coupling on the supervised cost between two clouds.
pub fn supervised_coupling(
    ball: &PoincareBall,
    src: &PointCloud,
    tgt: &PointCloud,
    cost: CostKind,
    supervision: &[(usize, usize)],
    cfg: &SinkhornConfig,
) -> Result<Coupling> {
    let c = build_cost_matrix(src, tgt, cost, ball)?;
    let c = apply_supervision(&c, supervision)?;
    sinkhorn(src.weights(), tgt.weights(), &c, cfg)
}

pub fn init_map(
    ball: &PoincareBall,
    src: &PointCloud,
    tgt: &PointCloud,
    cfg: &InitConfig,
) -> Result<InitResult> {
    let mut model = cfg.arch.build(*ball, src.dim(), tgt.dim(), cfg.seed)?;
    let same_size = || {
        if src.len() != tgt.len() {
            return Err(Error::ShapeMismatch(format!(
                "strategy '{}' needs equal cloud sizes, got {} and {}",
                cfg.strategy.name(),
                src.len(),
                tgt.len()
            )));
        }
        Ok(())
    };
    let mut rotation = None;
    let mut coupling = None;
    let targets = match cfg.strategy {
        InitStrategy::Random => None,
        InitStrategy::Identity => Some(src.points().to_owned()),
        InitStrategy::Permutation => {
            same_size()?;
            let mut perm: Vec<usize> = (0..tgt.len()).collect();
            perm.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1)));
            Some(tgt.points().select(Axis(0), &perm))
        }
        InitStrategy::Procrustes => {
            let (xs, ys) = if cfg.supervision.is_empty() {
                same_size()?;
                (src.points().to_owned(), tgt.points().to_owned())
            } else {
                let (si, ti): (Vec<usize>, Vec<usize>) = cfg.supervision.iter().copied().unzip();
                if si.iter().any(|&i| i >= src.len()) || ti.iter().any(|&j| j >= tgt.len()) {
                    return Err(Error::IndexOutOfRange("supervision pair".into()));
                }
                (
                    src.points().select(Axis(0), &si),
                    tgt.points().select(Axis(0), &ti),
                )
            };
            if src.dim() != tgt.dim() {
                return Err(Error::DimensionMismatch {
                    expected: src.dim(),
                    got: tgt.dim(),
                });
            }
            let p = procrustes_rotation(xs.view(), ys.view())?;
            let images = Array2::from_shape_fn(src.points().dim(), |(i, k)| {
                ball.matvec(p.view(), src.point(i))[k]
            });
            rotation = Some(p);
            Some(images)
        }
        InitStrategy::Gyrobarycenter => {
            let m = supervised_coupling(ball, src, tgt, cfg.cost, &cfg.supervision, &cfg.sinkhorn)?;
            let images = gyrobarycenters(ball, m.plan(), tgt.points())?;
            coupling = Some(m);
            Some(images)
        }
    };
    let trace = match &targets {
        Some(ys) => fit_to_targets(&mut model, src.points(), ys.view(), &cfg.fit)?,
        None => Vec::new(),
    };
    Ok(InitResult {
        model,
        targets,
        trace,
        rotation,
        coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping_estimation::OptimConfig;
    use ndarray::array;
    use rand::Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::uniform(Array2::from_shape_fn((n, 2), |_| {
            rng.random_range(-0.5..0.5)
        }))
        .unwrap()
    }

    fn quick_fit() -> FitConfig {
        FitConfig {
            optim: OptimConfig {
                lr: 0.05,
                max_steps: 1500,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn identity_strategy_on_equal_clouds() {
        let ball = PoincareBall::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = cloud(&mut rng, 25);
        let cfg = InitConfig {
            strategy: InitStrategy::Identity,
            arch: Architecture {
                nonlinearity: Nonlinearity::None,
                ..Default::default()
            },
            fit: quick_fit(),
            ..Default::default()
        };
        let r = init_map(&ball, &src, &src, &cfg).unwrap();
        assert!(
            *r.trace.last().unwrap() <= 1e-3,
            "{} {:?}",
            r.trace.len(),
            &r.trace[r.trace.len().saturating_sub(5)..]
        );
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs = Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
        let (c, s) = (0.6f64.cos(), 0.6f64.sin());
        let q = array![[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let ys = xs.dot(&q.t());
        let p = procrustes_rotation(xs.view(), ys.view()).unwrap();
        assert!(crate::linalg::frobenius((&p - &q).view()) <= 1e-6);
    }

    #[test]
    fn size_requirements() {
        let ball = PoincareBall::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let src = cloud(&mut rng, 5);
        let tgt = cloud(&mut rng, 6);
        for strategy in [InitStrategy::Permutation, InitStrategy::Procrustes] {
            let cfg = InitConfig {
                strategy,
                ..Default::default()
            };
            assert!(matches!(
                init_map(&ball, &src, &tgt, &cfg),
                Err(Error::ShapeMismatch(_))
            ));
        }
        let cfg = InitConfig {
            strategy: InitStrategy::Procrustes,
            supervision: vec![(0, 0), (1, 2), (2, 5)],
            fit: quick_fit(),
            ..Default::default()
        };
        assert!(init_map(&ball, &src, &tgt, &cfg)
            .unwrap()
            .rotation
            .is_some());
    }

    #[test]
    fn random_strategy_skips_pretraining_and_is_seeded() {
        let ball = PoincareBall::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = cloud(&mut rng, 5);
        let cfg = InitConfig {
            strategy: InitStrategy::Random,
            seed: 9,
            ..Default::default()
        };
        let a = init_map(&ball, &src, &src, &cfg).unwrap();
        let b = init_map(&ball, &src, &src, &cfg).unwrap();
        assert!(a.targets.is_none() && a.trace.is_empty());
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in InitStrategy::ALL {
            assert_eq!(s.name().parse::<InitStrategy>().unwrap(), s);
        }
    }
}
