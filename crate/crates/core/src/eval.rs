//! Synthetic alignment tasks, retrieval metrics and the cross-validation protocol.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::barycenter::gyromidpoint;
use crate::error::{Error, Result};
use crate::gyrovector::{PoincareBall, PointCloud};
use crate::mapping_estimation::{
    hyp_me_fit, init_map, ot_direct_fit, Architecture, FitConfig, HnnModel, InitConfig,
    InitStrategy, MeConfig, Nonlinearity, OptimConfig, OtDirectConfig, OtLoss,
};
use crate::ot::{
    apply_supervision, build_cost_matrix, sinkhorn, CostKind, Coupling, SinkhornConfig,
};
use crate::transport_maps::{OtdaMap, TransportMap, WLinearMap, WrappedGaussian};

/// `(source, target)` index pairs.
pub type Pairs = Vec<(usize, usize)>;

/// Source and target clouds with ground-truth pairs.
#[derive(Debug, Clone)]
pub struct AlignmentTask {
    pub ball: PoincareBall,
    pub src: PointCloud,
    pub tgt: PointCloud,
    pub matches: Vec<(usize, usize)>,
    /// Share of the matches used as supervision in each fold.
    pub train_fraction: f64,
    /// Generating map of synthetic tasks.
    pub planted: Option<WLinearMap>,
}

impl AlignmentTask {
    pub fn new(
        ball: PoincareBall,
        src: PointCloud,
        tgt: PointCloud,
        matches: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if src.dim() != tgt.dim() {
            return Err(Error::DimensionMismatch {
                expected: src.dim(),
                got: tgt.dim(),
            });
        }
        if matches.is_empty() {
            return Err(Error::Empty("match list".into()));
        }
        if let Some(&(i, j)) = matches
            .iter()
            .find(|&&(i, j)| i >= src.len() || j >= tgt.len())
        {
            return Err(Error::IndexOutOfRange(format!("match ({i}, {j})")));
        }
        Ok(Self {
            ball,
            src,
            tgt,
            matches,
            train_fraction: 0.1,
            planted: None,
        })
    }

    /// Train and test matches of one fold: a rotating slice of a seeded
    /// shuffle is used for training, everything else for testing.
    pub fn split(&self, fold: usize, folds: usize, seed: u64) -> Result<(Pairs, Pairs)> {
        if folds == 0 || fold >= folds {
            return Err(Error::InvalidParameter(format!("fold {fold} of {folds}")));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train fraction {}",
                self.train_fraction
            )));
        }
        let m = self.matches.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.train_fraction * m as f64).ceil() as usize).clamp(1, m - 1);
        let start = fold * m / folds;
        let mut is_train = vec![false; m];
        for k in 0..n_train {
            is_train[order[(start + k) % m]] = true;
        }
        let (train, test): (Vec<_>, Vec<_>) = (0..m).partition(|&k| is_train[k]);
        if test.is_empty() {
            return Err(Error::Empty("test matches".into()));
        }
        Ok((
            train.iter().map(|&k| self.matches[k]).collect(),
            test.iter().map(|&k| self.matches[k]).collect(),
        ))
    }
}

/// Percentage of `(query, candidate)` pairs whose candidate ranks within the
/// `k` closest rows of `candidates`; ties go to the lower index.
fn retrieval_hits(
    ball: &PoincareBall,
    queries: ArrayView2<f64>,
    candidates: ArrayView2<f64>,
    pairs: &[(usize, usize)],
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("test matches".into()));
    }
    if queries.ncols() != candidates.ncols() {
        return Err(Error::DimensionMismatch {
            expected: queries.ncols(),
            got: candidates.ncols(),
        });
    }
    let mut hits = 0usize;
    for &(q, c) in pairs {
        if q >= queries.nrows() || c >= candidates.nrows() {
            return Err(Error::IndexOutOfRange(format!("match ({q}, {c})")));
        }
        let x = queries.row(q);
        let dc = ball.distance(x, candidates.row(c));
        let mut rank = 0;
        for (j, y) in candidates.rows().into_iter().enumerate() {
            if j == c {
                continue;
            }
            let d = ball.distance(x, y);
            if d < dc || (d == dc && j < c) {
                rank += 1;
                if rank >= k {
                    break;
                }
            }
        }
        if rank < k {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / pairs.len() as f64)
}

/// Hits@k of transported sources retrieving their matched targets.
pub fn hits_at_k(
    ball: &PoincareBall,
    transported: ArrayView2<f64>,
    targets: &PointCloud,
    matches: &[(usize, usize)],
    k: usize,
) -> Result<f64> {
    retrieval_hits(ball, transported, targets.points(), matches, k)
}

/// Hits@k of targets retrieving their matched transported sources.
pub fn hits_at_k_reverse(
    ball: &PoincareBall,
    transported: ArrayView2<f64>,
    targets: &PointCloud,
    matches: &[(usize, usize)],
    k: usize,
) -> Result<f64> {
    let swapped: Vec<_> = matches.iter().map(|&(i, j)| (j, i)).collect();
    retrieval_hits(ball, targets.points(), transported, &swapped, k)
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let a = nalgebra::DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
    let q = a.qr().q();
    Array2::from_shape_fn((d, d), |(i, j)| q[(i, j)])
}

/// A wrapped-Gaussian mixture pushed through a planted W-linear map, with
/// wrapped noise of scale `noise_scale` around every image. Matches pair
/// equal indices.
pub fn make_synthetic_task(
    d: usize,
    n: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<AlignmentTask> {
    if d == 0 || n < 2 * (d + 1) {
        return Err(Error::InvalidParameter(format!(
            "need d ≥ 1 and n ≥ 2(d + 1), got d = {d}, n = {n}"
        )));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise scale must be nonnegative, got {noise_scale}"
        )));
    }
    let ball = PoincareBall::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_comp = rng.random_range(2..=4usize);
    let mut points = Array2::zeros((n, d));
    let mut filled = 0;
    for c in 0..n_comp {
        let count = (n - filled) / (n_comp - c);
        let center: Array1<f64> = (0..d)
            .map(|_| 0.35 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let a = Array2::from_shape_fn((d, d), |_| 0.12 * rng.sample::<f64, _>(StandardNormal));
        let sigma = a.dot(&a.t()) + Array2::<f64>::eye(d) * 0.01;
        let g = WrappedGaussian::new(ball.exp0(center.view()), sigma)?;
        let part = g.sample(&ball, count, rng.random())?;
        points
            .slice_mut(ndarray::s![filled..filled + count, ..])
            .assign(&part.points());
        filled += count;
    }
    let src = PointCloud::uniform(points)?;

    let q = random_orthogonal(&mut rng, d);
    let eig: Vec<f64> = (0..d).map(|_| rng.random_range(0.6..1.4)).collect();
    let t = Array2::from_shape_fn((d, d), |(i, j)| {
        (0..d).map(|k| q[[i, k]] * eig[k] * q[[j, k]]).sum()
    });
    let shift: Array1<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let shift = &shift * (0.6 / shift.dot(&shift).sqrt());
    let planted = WLinearMap::new(ball, gyromidpoint(&ball, &src)?, ball.exp0(shift.view()), t)?;

    let mut tgt = Array2::zeros((n, d));
    for (i, x) in src.points().rows().into_iter().enumerate() {
        let y = planted.apply(x);
        let xi: Array1<f64> = (0..d)
            .map(|_| noise_scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let step = ball.transport_from_origin(y.view(), xi.view());
        tgt.row_mut(i)
            .assign(&ball.project(ball.exp_map(y.view(), step.view())));
    }
    let tgt = PointCloud::uniform(tgt)?;
    let mut task = AlignmentTask::new(ball, src, tgt, (0..n).map(|i| (i, i)).collect())?;
    task.planted = Some(planted);
    Ok(task)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    WLinear,
    Otda,
    Me,
    OtDirectW,
    OtDirectSd,
    EuclidLinear,
    EuclidOtda,
    EuclidMe,
    /// Untransported sources, the reference baseline.
    Identity,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::WLinear,
        Method::Otda,
        Method::Me,
        Method::OtDirectW,
        Method::OtDirectSd,
        Method::EuclidLinear,
        Method::EuclidOtda,
        Method::EuclidMe,
        Method::Identity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::WLinear => "wlinear",
            Method::Otda => "otda",
            Method::Me => "me",
            Method::OtDirectW => "ot_direct_w",
            Method::OtDirectSd => "ot_direct_sd",
            Method::EuclidLinear => "euclid_linear",
            Method::EuclidOtda => "euclid_otda",
            Method::EuclidMe => "euclid_me",
            Method::Identity => "identity",
        }
    }

    pub fn is_euclidean(self) -> bool {
        matches!(
            self,
            Method::EuclidLinear | Method::EuclidOtda | Method::EuclidMe
        )
    }

    /// Ball the method works and is scored in: the flat proxy for Euclidean
    /// variants, `ball` otherwise.
    pub fn geometry(self, ball: &PoincareBall) -> PoincareBall {
        if self.is_euclidean() {
            PoincareBall::euclidean_proxy()
        } else {
            *ball
        }
    }

    pub fn produces_coupling(self) -> bool {
        matches!(
            self,
            Method::Otda | Method::Me | Method::EuclidOtda | Method::EuclidMe
        )
    }

    pub fn produces_model(self) -> bool {
        matches!(
            self,
            Method::Me | Method::OtDirectW | Method::OtDirectSd | Method::EuclidMe
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Settings shared by every method of the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub folds: usize,
    pub k: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub eta: f64,
    pub omega: f64,
    pub cost: CostKind,
    pub init: InitStrategy,
    pub arch: Architecture,
    pub sinkhorn: SinkhornConfig,
    /// Outer iterations of mapping estimation.
    pub me_outer: usize,
    /// Optimizer settings of map fitting (initialization and mapping-estimation map steps).
    pub fit_optim: OptimConfig,
    /// Optimizer settings of OT-direct training.
    pub ot_optim: OptimConfig,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            k: 10,
            seed: 0,
            epsilon: 0.01,
            eta: 1.0,
            omega: 0.0,
            cost: CostKind::default(),
            init: InitStrategy::default(),
            arch: Architecture {
                nonlinearity: Nonlinearity::None,
                ..Default::default()
            },
            sinkhorn: SinkhornConfig::default(),
            me_outer: 10,
            fit_optim: OptimConfig {
                lr: 0.02,
                max_steps: 100,
                ..Default::default()
            },
            ot_optim: OptimConfig {
                lr: 0.01,
                max_steps: 30,
                ..Default::default()
            },
        }
    }
}

impl ProtocolConfig {
    /// `key=value` pairs echoed into reports.
    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("folds".into(), self.folds.to_string()),
            ("k".into(), self.k.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("epsilon".into(), self.epsilon.to_string()),
            ("eta".into(), self.eta.to_string()),
            ("omega".into(), self.omega.to_string()),
            ("cost".into(), self.cost.name().into()),
            ("init".into(), self.init.name().into()),
            ("me_outer".into(), self.me_outer.to_string()),
            ("fit_steps".into(), self.fit_optim.max_steps.to_string()),
            ("ot_steps".into(), self.ot_optim.max_steps.to_string()),
        ]
    }

    fn sinkhorn_cfg(&self) -> SinkhornConfig {
        self.sinkhorn.with_epsilon(self.epsilon)
    }
}

/// Output of one method on one pair of clouds.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub method: Method,
    /// Image of every source point.
    pub transported: Array2<f64>,
    pub coupling: Option<Coupling>,
    pub model: Option<HnnModel>,
    /// `(iteration, loss)` of the training run, empty for closed-form methods.
    pub trace: Vec<(usize, f64)>,
}

fn transported_by(map: &dyn TransportMap, src: &PointCloud) -> Result<Array2<f64>> {
    map.transport_all(src.points())
}

/// Fits `method` on the clouds with the given supervision and transports every source point.
pub fn align(
    ball: &PoincareBall,
    src: &PointCloud,
    tgt: &PointCloud,
    supervision: &[(usize, usize)],
    method: Method,
    cfg: &ProtocolConfig,
) -> Result<Alignment> {
    let ball = &method.geometry(ball);
    let cost = if method.is_euclidean() {
        CostKind::SqEuclidean
    } else {
        cfg.cost
    };
    let mut out = Alignment {
        method,
        transported: src.points().to_owned(),
        coupling: None,
        model: None,
        trace: Vec::new(),
    };
    let init_cfg = || InitConfig {
        strategy: cfg.init,
        seed: cfg.seed,
        arch: cfg.arch.clone(),
        fit: FitConfig {
            omega: cfg.omega,
            anchor: None,
            optim: cfg.fit_optim,
        },
        cost,
        sinkhorn: cfg.sinkhorn_cfg(),
        supervision: supervision.to_vec(),
    };
    match method {
        Method::Identity => {}
        Method::WLinear | Method::EuclidLinear => {
            let map = WLinearMap::fit(ball, src, tgt)?;
            out.transported = transported_by(&map, src)?;
        }
        Method::Otda | Method::EuclidOtda => {
            let c = apply_supervision(&build_cost_matrix(src, tgt, cost, ball)?, supervision)?;
            let m = sinkhorn(src.weights(), tgt.weights(), &c, &cfg.sinkhorn_cfg())?;
            let map = if method == Method::Otda {
                OtdaMap::fit(ball, &m, src, tgt)?
            } else {
                OtdaMap::fit_euclidean(ball, &m, src, tgt)?
            };
            out.transported = transported_by(&map, src)?;
            out.coupling = Some(m);
        }
        Method::Me | Method::EuclidMe => {
            let init = init_map(ball, src, tgt, &init_cfg())?;
            let me_cfg = MeConfig {
                eta: cfg.eta,
                omega: cfg.omega,
                epsilon: cfg.epsilon,
                anchor: None,
                max_outer: cfg.me_outer,
                tol: 1e-7,
                cost,
                sinkhorn: cfg.sinkhorn_cfg(),
                t_step: cfg.fit_optim,
                supervision: supervision.to_vec(),
            };
            let (m, model, state) = hyp_me_fit(src, tgt, init.model, &me_cfg)?;
            out.transported = transported_by(&model, src)?;
            out.coupling = Some(m);
            out.model = Some(model);
            out.trace = state.trace;
        }
        Method::OtDirectW | Method::OtDirectSd => {
            let mut model = init_map(ball, src, tgt, &init_cfg())?.model;
            let ot_cfg = OtDirectConfig {
                loss: if method == Method::OtDirectW {
                    OtLoss::WEps
                } else {
                    OtLoss::SinkhornDiv
                },
                cost,
                sinkhorn: cfg.sinkhorn_cfg(),
                optim: cfg.ot_optim,
                omega: cfg.omega,
                anchor: None,
                supervision: supervision.to_vec(),
            };
            let trace = ot_direct_fit(&mut model, src, tgt, &ot_cfg)?;
            out.transported = transported_by(&model, src)?;
            out.model = Some(model);
            out.trace = trace.into_iter().enumerate().collect();
        }
    }
    Ok(out)
}

/// Averaged retrieval scores of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub method: Method,
    pub k: usize,
    pub folds: usize,
    /// Mean Hits@k, transported source → target.
    pub hits_src_tgt: f64,
    /// Mean Hits@k, target → transported source.
    pub hits_tgt_src: f64,
    /// Per-fold `(source → target, target → source)` scores.
    pub fold_hits: Vec<(f64, f64)>,
    pub seconds: f64,
    pub config: Vec<(String, String)>,
}

impl AlignmentReport {
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "method={}", self.method)?;
        writeln!(out, "k={}", self.k)?;
        writeln!(out, "folds={}", self.folds)?;
        writeln!(out, "hits_src_tgt={:.6}", self.hits_src_tgt)?;
        writeln!(out, "hits_tgt_src={:.6}", self.hits_tgt_src)?;
        writeln!(out, "seconds={:.3}", self.seconds)?;
        for (key, value) in &self.config {
            writeln!(out, "config.{key}={value}")?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "method,direction,k,hits,seconds")?;
        }
        writeln!(
            out,
            "{},src_tgt,{},{:.6},{:.3}",
            self.method, self.k, self.hits_src_tgt, self.seconds
        )?;
        writeln!(
            out,
            "{},tgt_src,{},{:.6},{:.3}",
            self.method, self.k, self.hits_tgt_src, self.seconds
        )?;
        Ok(())
    }
}

/// Scores of a fitted alignment on test matches, in both directions, ranked
/// in the geometry of its method.
pub fn score(
    ball: &PoincareBall,
    alignment: &Alignment,
    tgt: &PointCloud,
    test: &[(usize, usize)],
    k: usize,
) -> Result<(f64, f64)> {
    let ball = &alignment.method.geometry(ball);
    Ok((
        hits_at_k(ball, alignment.transported.view(), tgt, test, k)?,
        hits_at_k_reverse(ball, alignment.transported.view(), tgt, test, k)?,
    ))
}

/// Cross-validation: each fold trains on its supervision slice and is
/// scored on the remaining matches; scores are averaged over folds.
pub fn run_protocol(
    task: &AlignmentTask,
    method: Method,
    cfg: &ProtocolConfig,
) -> Result<AlignmentReport> {
    if cfg.folds == 0 {
        return Err(Error::InvalidParameter("folds must be at least 1".into()));
    }
    let start = Instant::now();
    let mut fold_hits = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let (train, test) = task.split(fold, cfg.folds, cfg.seed)?;
        let fold_cfg = ProtocolConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..cfg.clone()
        };
        let alignment = align(&task.ball, &task.src, &task.tgt, &train, method, &fold_cfg)?;
        fold_hits.push(score(&task.ball, &alignment, &task.tgt, &test, cfg.k)?);
    }
    let n = fold_hits.len() as f64;
    Ok(AlignmentReport {
        method,
        k: cfg.k,
        folds: cfg.folds,
        hits_src_tgt: fold_hits.iter().map(|h| h.0).sum::<f64>() / n,
        hits_tgt_src: fold_hits.iter().map(|h| h.1).sum::<f64>() / n,
        fold_hits,
        seconds: start.elapsed().as_secs_f64(),
        config: cfg.echo(),
    })
}
