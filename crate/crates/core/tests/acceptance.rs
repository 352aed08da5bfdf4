//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL` line.
//!
//! Tests hold a shared lock so the runtime limits are measured without
//! interference from each other.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use hyperalign::barycenter::gyrobarycenters;
use hyperalign::eval::{align, make_synthetic_task, run_protocol, Method, ProtocolConfig};
use hyperalign::linalg::{frobenius, polar_orthogonal};
use hyperalign::mapping_estimation::{
    barycenter_loss, barycenter_loss_grad, hyp_me_fit, HnnModel, HypLinearLayer, InitStrategy,
    MeConfig, Nonlinearity,
};
use hyperalign::ot::{
    apply_supervision, build_cost_matrix, exact_ot, sinkhorn, sinkhorn_divergence, sinkhorn_solve,
};
use hyperalign::transport_maps::{bures_transport_matrix, riccati_residual, tangent_covariance};
use hyperalign::{
    CostKind, CostMatrix, GammaConvention, OtdaMap, PoincareBall, PointCloud, SinkhornConfig,
    WLinearMap, WrappedGaussian,
};
use itertools::Itertools;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, what: &str, ok: bool, detail: String) {
    // written past the test harness capture so the line shows on every run
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "criterion {n}: {} {what} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = out.flush();
    assert!(ok, "criterion {n} failed: {detail}");
}

fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

fn dist(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    norm((a - b).view())
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    (0..d)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect()
}

/// A point with hyperbolic distance at most `2·reach·s` from the origin.
fn ball_point(rng: &mut ChaCha8Rng, ball: &PoincareBall, d: usize, reach: f64) -> Array1<f64> {
    let dir = gaussian(rng, d);
    let len = rng.random_range(0.0..reach) * ball.radius();
    ball.exp0((&dir * (len / norm(dir.view()))).view())
}

fn cloud(rng: &mut ChaCha8Rng, ball: &PoincareBall, n: usize, d: usize, reach: f64) -> PointCloud {
    let mut pts = Array2::zeros((n, d));
    for mut row in pts.rows_mut() {
        row.assign(&ball_point(rng, ball, d, reach));
    }
    PointCloud::uniform(pts).unwrap()
}

fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    polar_orthogonal(a.view())
}

fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Array2<f64> {
    let a = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
    a.dot(&a.t()) + Array2::<f64>::eye(d) * 0.05
}

#[test]
fn criterion_01_gyrovector_algebra() {
    let _guard = serial();
    let start = Instant::now();
    let cases = 1000;
    let mut worst = [0.0f64; 6];
    let names = [
        "left cancellation",
        "distributive",
        "associative",
        "scaling",
        "rotation",
        "exp/log",
    ];
    for s in [1.0, 2f64.sqrt(), 3.0] {
        let ball = PoincareBall::new(s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(s.to_bits());
        for _ in 0..cases {
            let d = rng.random_range(2..=6);
            let x = ball_point(&mut rng, &ball, d, 1.5);
            let y = ball_point(&mut rng, &ball, d, 1.5);
            let (r1, r2) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let scale = |e: &Array1<f64>| norm(e.view()).max(1.0);
            let mut note = |k: usize, err: f64| worst[k] = worst[k].max(err);

            let xy = ball.mobius_add(x.view(), y.view()).unwrap();
            let back = ball.mobius_add((-&x).view(), xy.view()).unwrap();
            note(0, dist(&back, &y) / scale(&y));

            let lhs = ball.mobius_scalar_mul(r1 + r2, x.view());
            let rhs = ball
                .mobius_add(
                    ball.mobius_scalar_mul(r1, x.view()).view(),
                    ball.mobius_scalar_mul(r2, x.view()).view(),
                )
                .unwrap();
            note(1, dist(&lhs, &rhs) / scale(&lhs));

            let lhs = ball.mobius_scalar_mul(r1 * r2, x.view());
            let rhs = ball.mobius_scalar_mul(r1, ball.mobius_scalar_mul(r2, x.view()).view());
            note(2, dist(&lhs, &rhs) / scale(&lhs));

            let rx = ball.mobius_scalar_mul(r1.abs(), x.view());
            let lhs = &rx / norm(rx.view());
            let rhs = &x / norm(x.view());
            note(3, dist(&lhs, &rhs));

            let q = random_orthogonal(&mut rng, d);
            let lhs = q.dot(&xy);
            let rhs = ball.mobius_add(q.dot(&x).view(), q.dot(&y).view()).unwrap();
            let qx = ball.mobius_matrix_mul(q.view(), x.view()).unwrap();
            let dd = (ball.distance(q.dot(&x).view(), q.dot(&y).view())
                - ball.distance(x.view(), y.view()))
            .abs();
            note(
                4,
                (dist(&lhs, &rhs) / scale(&lhs))
                    .max(dist(&qx, &q.dot(&x)) / scale(&qx))
                    .max(dd / s),
            );

            let v = gaussian(&mut rng, d) * (0.5 * s / ball.conformal_factor(x.view()));
            let v_back = ball.log_map(x.view(), ball.exp_map(x.view(), v.view()).view());
            let y_back = ball.exp_map(x.view(), ball.log_map(x.view(), y.view()).view());
            let v0 = ball.log0(ball.exp0(v.view()).view());
            note(
                5,
                (dist(&v_back, &v) / scale(&v))
                    .max(dist(&y_back, &y) / scale(&y))
                    .max(dist(&v0, &v) / scale(&v)),
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst.iter().all(|w| *w <= 1e-9) && secs < 5.0;
    let detail = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .join(", ");
    verdict(
        1,
        "gyrovector algebra",
        ok,
        format!("{} cases per radius; {detail}; {secs:.2}s", cases),
    );
}

#[test]
fn criterion_02_distance_forms() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let ball = PoincareBall::new([1.0, 2f64.sqrt(), 3.0][k % 3]).unwrap();
        let d = rng.random_range(1..=6);
        let x = ball_point(&mut rng, &ball, d, 1.5);
        let y = ball_point(&mut rng, &ball, d, 1.5);
        worst = worst.max(
            (ball.distance(x.view(), y.view()) - ball.distance_sinh_form(x.view(), y.view())).abs(),
        );
    }
    verdict(
        2,
        "tanh and sinh distance forms agree",
        worst <= 1e-8,
        format!("1000 pairs, max gap {worst:.1e}"),
    );
}

fn rel(got: &Array1<f64>, expected: &Array1<f64>) -> f64 {
    dist(got, expected) / norm(expected.view())
}

#[test]
fn criterion_03_euclidean_limits() {
    let _guard = serial();
    let ball = PoincareBall::new(1e4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = [0.0f64; 5];
    for _ in 0..50 {
        let d = rng.random_range(2..=5);
        let x: Array1<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Array1<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = rng.random_range(-2.0..2.0);
        let q = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        let b: Array1<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();

        worst[0] = worst[0].max(rel(
            &ball.mobius_add(x.view(), y.view()).unwrap(),
            &(&x + &y),
        ));
        worst[1] = worst[1].max(rel(&ball.mobius_scalar_mul(r, x.view()), &(&x * r)));
        worst[2] = worst[2].max(rel(
            &ball.mobius_matrix_mul(q.view(), x.view()).unwrap(),
            &q.dot(&x),
        ));
        let layer = HypLinearLayer::new(&ball, q.clone(), b.clone()).unwrap();
        worst[3] = worst[3].max(rel(
            &layer.forward(&ball, x.view()).unwrap(),
            &(q.dot(&x) + &b),
        ));
        let t = random_spd(&mut rng, d);
        let map = WLinearMap::new(ball, y.clone(), b.clone(), t.clone()).unwrap();
        worst[4] = worst[4].max(rel(&map.apply(x.view()), &(&b + &t.dot(&(&x - &y)))));
    }
    let detail = ["add", "scalar", "matrix", "layer", "w-linear"]
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .join(", ");
    verdict(
        3,
        "Euclidean limits at s = 1e4",
        worst.iter().all(|w| *w <= 1e-3),
        detail,
    );
}

/// Minimum over permutations of the mean matched cost.
fn permutation_oracle(c: &CostMatrix) -> f64 {
    let n = c.shape().0;
    let v = c.values();
    (0..n)
        .permutations(n)
        .map(|p| p.iter().enumerate().map(|(i, &j)| v[[i, j]]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / n as f64
}

#[test]
fn criterion_04_sinkhorn() {
    let _guard = serial();
    let start = Instant::now();
    let ball = PoincareBall::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_marg = 0.0f64;
    let mut most_iters = 0;
    let mut all_converged = true;
    for n in [4, 8, 16, 32, 48, 64] {
        for _ in 0..3 {
            let x = cloud(&mut rng, &ball, n, 3, 1.0);
            let y = cloud(&mut rng, &ball, n, 3, 1.0);
            let c = build_cost_matrix(&x, &y, CostKind::SqHyperbolic, &ball).unwrap();
            let cfg = SinkhornConfig {
                epsilon: 0.01,
                max_iters: 100,
                ..Default::default()
            };
            let sol = sinkhorn_solve(x.weights(), y.weights(), &c, &cfg).unwrap();
            all_converged &= sol.converged;
            most_iters = most_iters.max(sol.iterations);
            worst_marg = worst_marg.max(sol.coupling.marginal_error());
        }
    }
    let mut worst_gap = 0.0f64;
    let mut flow_gap = 0.0f64;
    for _ in 0..20 {
        let x = cloud(&mut rng, &ball, 6, 3, 1.0);
        let y = cloud(&mut rng, &ball, 6, 3, 1.0);
        let c = build_cost_matrix(&x, &y, CostKind::SqHyperbolic, &ball).unwrap();
        let oracle = permutation_oracle(&c);
        let m = sinkhorn(
            x.weights(),
            y.weights(),
            &c,
            &SinkhornConfig::default().with_epsilon(1e-3),
        )
        .unwrap();
        worst_gap = worst_gap.max((m.transport_cost(&c) - oracle).abs() / oracle);
        flow_gap = flow_gap.max(
            (exact_ot(x.weights(), y.weights(), &c)
                .unwrap()
                .transport_cost(&c)
                - oracle)
                .abs(),
        );
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = all_converged
        && most_iters <= 100
        && worst_marg <= 1e-7
        && worst_gap <= 0.01
        && flow_gap <= 1e-12
        && secs < 10.0;
    verdict(
        4,
        "Sinkhorn marginals and small-epsilon cost",
        ok,
        format!(
            "max marginal error {worst_marg:.1e} in ≤ {most_iters} iterations, cost gap {:.3}% at ε = 1e-3, exact solver gap {flow_gap:.1e}, {secs:.2}s",
            100.0 * worst_gap
        ),
    );
}

#[test]
fn criterion_05_divergence_self_check() {
    let _guard = serial();
    let ball = PoincareBall::unit();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let x = cloud(&mut rng, &ball, 10 + 3 * k, 2 + k % 3, 1.0);
        // the same measure with its atoms listed in another order
        let n = x.len();
        let order: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let shuffled = if n.is_multiple_of(7) {
            x.clone()
        } else {
            x.select(&order).unwrap()
        };
        for other in [&x, &shuffled] {
            let sd = sinkhorn_divergence(
                &x,
                other,
                CostKind::SqHyperbolic,
                &ball,
                &SinkhornConfig::default(),
            )
            .unwrap();
            worst = worst.max(sd.abs());
        }
    }
    verdict(
        5,
        "Sinkhorn divergence vanishes on identical clouds",
        worst <= 1e-10,
        format!("10 clouds, max |SD| {worst:.1e}"),
    );
}

fn weighted_mean(plan: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let rows = plan.sum_axis(Axis(1));
    plan.dot(y) / &rows.insert_axis(Axis(1))
}

#[test]
fn criterion_06_gyrobarycenter_limits() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 2];
    for _ in 0..20 {
        let (n, m, d) = (
            rng.random_range(1..6),
            rng.random_range(2..8),
            rng.random_range(1..5),
        );
        let y = Array2::from_shape_fn((m, d), |_| rng.random_range(-1.0..1.0));
        let plan = Array2::from_shape_fn((n, m), |_| rng.random_range(0.01..1.0));
        let e = weighted_mean(&plan, &y);
        for (k, (conv, ratio)) in [
            (GammaConvention::Lorentz, 1.0),
            (GammaConvention::Conformal, 4.0 / 7.0),
        ]
        .into_iter()
        .enumerate()
        {
            let ball = PoincareBall::new(1e4).unwrap().with_gamma(conv);
            let g = gyrobarycenters(&ball, plan.view(), y.view()).unwrap();
            for (gr, er) in g.rows().into_iter().zip(e.rows()) {
                // ratio measured along the Euclidean barycenter
                let r = gr.dot(&er) / er.dot(&er);
                let off = norm((&gr - &(&er * r)).view()) / norm(er);
                worst[k] = worst[k].max((r - ratio).abs()).max(off);
            }
        }
    }
    verdict(
        6,
        "gyrobarycenter limits",
        worst.iter().all(|w| *w <= 1e-3),
        format!(
            "lorentz ratio error {:.1e}, conformal-convention error from 4/7 {:.1e}",
            worst[0], worst[1]
        ),
    );
}

#[test]
fn criterion_07_w_linear_map() {
    let _guard = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut residual = 0.0f64;
    for _ in 0..50 {
        let d = rng.random_range(1..=8);
        let (s1, s2) = (random_spd(&mut rng, d), random_spd(&mut rng, d));
        let t = bures_transport_matrix(s1.view(), s2.view()).unwrap();
        residual = residual.max(riccati_residual(t.view(), s1.view(), s2.view()));
    }

    let ball = PoincareBall::unit();
    let d = 3;
    let g1 = WrappedGaussian::new(
        ball.exp0(Array1::from(vec![0.3, -0.2, 0.1]).view()),
        random_spd(&mut rng, d) * 0.05,
    )
    .unwrap();
    let g2 = WrappedGaussian::new(
        ball.exp0(Array1::from(vec![-0.4, 0.1, 0.2]).view()),
        random_spd(&mut rng, d) * 0.05,
    )
    .unwrap();
    let map = WLinearMap::between(&ball, &g1, &g2).unwrap();
    let samples = g1.sample(&ball, 5000, 17).unwrap();
    let pushed = Array2::from_shape_fn((5000, d), {
        let rows: Vec<Array1<f64>> = samples
            .points()
            .rows()
            .into_iter()
            .map(|x| map.apply(x))
            .collect();
        move |(i, k)| rows[i][k]
    });
    let cov = tangent_covariance(&ball, g2.mu(), pushed.view());
    let push_err = frobenius((&cov - &g2.sigma()).view()) / frobenius(g2.sigma());

    let mut recovery = 0.0f64;
    for seed in 0..3 {
        let task = make_synthetic_task(3, 400, 0.0, seed).unwrap();
        let planted = task.planted.as_ref().unwrap();
        let fitted = WLinearMap::fit(&ball, &task.src, &task.tgt).unwrap();
        let err =
            frobenius((&fitted.matrix() - &planted.matrix()).view()) / frobenius(planted.matrix());
        recovery = recovery.max(err);
    }
    let ok = residual <= 1e-8 && push_err <= 0.10 && recovery <= 0.10;
    verdict(
        7,
        "W-linear map",
        ok,
        format!("Riccati residual {residual:.1e}, pushforward covariance error {:.2}%, planted recovery error {:.2}%", 100.0 * push_err, 100.0 * recovery),
    );
}

/// Mean distance of the model images of `xs` to `ys`.
fn fit_loss(model: &HnnModel, xs: &Array2<f64>, ys: &Array2<f64>) -> f64 {
    let ball = model.ball();
    xs.rows()
        .into_iter()
        .zip(ys.rows())
        .map(|(x, y)| ball.distance(model.forward(x).unwrap().view(), y))
        .sum::<f64>()
        / xs.nrows() as f64
}

fn one_layer(ball: &PoincareBall, w: Array2<f64>, b: Array1<f64>) -> HnnModel {
    HnnModel::new(
        *ball,
        vec![HypLinearLayer::new(ball, w, b).unwrap()],
        Nonlinearity::None,
    )
    .unwrap()
}

fn close(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / fd.abs().max(1e-3)
}

#[test]
fn criterion_08_gradient_checks() {
    let _guard = serial();
    let ball = PoincareBall::unit();
    let mut worst_plan = 0.0f64;
    let mut worst_param = 0.0f64;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(80 + seed);
        let tx = cloud(&mut rng, &ball, 4, 2, 0.8).into_points();
        let y = cloud(&mut rng, &ball, 4, 2, 0.8).into_points();
        let plan = Array2::from_shape_fn((4, 4), |_| rng.random_range(0.01..0.1));
        let (_, g) = barycenter_loss_grad(&ball, tx.view(), plan.view(), y.view()).unwrap();
        let h = 1e-6;
        for ((i, j), a) in g.indexed_iter() {
            let mut p = plan.clone();
            p[[i, j]] += h;
            let up = barycenter_loss(&ball, tx.view(), p.view(), y.view()).unwrap();
            p[[i, j]] -= 2.0 * h;
            let down = barycenter_loss(&ball, tx.view(), p.view(), y.view()).unwrap();
            worst_plan = worst_plan.max(close(*a, (up - down) / (2.0 * h)));
        }

        let xs = cloud(&mut rng, &ball, 4, 2, 0.8).into_points();
        let w = Array2::from_shape_fn((2, 2), |_| rng.random_range(-1.2..1.2));
        let b = ball_point(&mut rng, &ball, 2, 0.6);
        let model = one_layer(&ball, w.clone(), b.clone());
        let mut grads = model.zero_grads();
        for (x, yy) in xs.rows().into_iter().zip(y.rows()) {
            let tape = model.forward_tape(x);
            let (g_out, _) = ball.distance_grad(tape.output(), yy);
            model.backward(&tape, (g_out / 4.0).view(), &mut grads);
        }
        for ((r, c), a) in grads[0].w.indexed_iter() {
            let mut wp = w.clone();
            wp[[r, c]] += h;
            let up = fit_loss(&one_layer(&ball, wp.clone(), b.clone()), &xs, &y);
            wp[[r, c]] -= 2.0 * h;
            let down = fit_loss(&one_layer(&ball, wp, b.clone()), &xs, &y);
            worst_param = worst_param.max(close(*a, (up - down) / (2.0 * h)));
        }
        // bias: Riemannian gradient against the derivative along geodesics through b
        let rg = ball.riemannian_grad(b.view(), grads[0].b.view());
        let lambda = ball.conformal_factor(b.view());
        for _ in 0..3 {
            let v = gaussian(&mut rng, 2);
            let moved = |t: f64| ball.exp_map(b.view(), (&v * t).view());
            let fd = (fit_loss(&one_layer(&ball, w.clone(), moved(h)), &xs, &y)
                - fit_loss(&one_layer(&ball, w.clone(), moved(-h)), &xs, &y))
                / (2.0 * h);
            worst_param = worst_param.max(close(lambda * lambda * rg.dot(&v), fd));
        }
    }
    verdict(
        8,
        "gradient checks against central differences",
        worst_plan <= 1e-4 && worst_param <= 1e-4,
        format!("plan gradient {worst_plan:.1e}, parameter gradient {worst_param:.1e} relative"),
    );
}

#[test]
fn criterion_09_mapping_estimation_monotone() {
    let _guard = serial();
    let task = make_synthetic_task(2, 40, 0.05, 9).unwrap();
    let (train, _) = task.split(0, 10, 9).unwrap();
    let ball = task.ball;
    let cfg = MeConfig {
        eta: 1.0,
        max_outer: 20,
        tol: 0.0,
        supervision: train.clone(),
        ..Default::default()
    };
    let (m, _, state) = hyp_me_fit(
        &task.src,
        &task.tgt,
        HnnModel::identity(ball, 2, true),
        &cfg,
    )
    .unwrap();
    let outer = state.trace.len() - 1;
    let rises = state
        .trace
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(f64::NEG_INFINITY, f64::max);
    let feas = state
        .marginal_errors
        .iter()
        .copied()
        .fold(m.marginal_error(), f64::max);

    let inf = MeConfig {
        eta: f64::INFINITY,
        max_outer: 3,
        ..cfg.clone()
    };
    let (m_inf, _, _) = hyp_me_fit(
        &task.src,
        &task.tgt,
        HnnModel::identity(ball, 2, true),
        &inf,
    )
    .unwrap();
    let c = apply_supervision(
        &build_cost_matrix(&task.src, &task.tgt, cfg.cost, &ball).unwrap(),
        &train,
    )
    .unwrap();
    let plain = sinkhorn(
        task.src.weights(),
        task.tgt.weights(),
        &c,
        &cfg.sinkhorn.with_epsilon(cfg.epsilon),
    )
    .unwrap();
    let gap = (&m_inf.plan() - &plain.plan())
        .mapv(f64::abs)
        .fold(0.0f64, |a, &b| a.max(b));

    let ok = outer >= 20 && rises <= 1e-10 && feas <= 1e-7 && gap <= 1e-9;
    verdict(
        9,
        "mapping estimation descent",
        ok,
        format!(
            "{outer} outer iterations, loss {:.6} → {:.6}, largest rise {rises:.1e}, marginal error {feas:.1e}, η = ∞ plan gap {gap:.1e}",
            state.trace[0].1,
            state.trace[outer].1
        ),
    );
}

/// Row-wise `½ ⊗ (Σ_j M_ij γ_j² y_j / Σ_j M_ij (γ_j² − ½))` written out directly.
fn hand_gyrobarycenter(ball: &PoincareBall, row: ArrayView1<f64>, y: &Array2<f64>) -> Array1<f64> {
    let s2 = ball.radius() * ball.radius();
    let mut num = Array1::zeros(y.ncols());
    let mut den = 0.0;
    for (mij, yj) in row.iter().zip(y.rows()) {
        let g2 = 1.0 / (1.0 - yj.dot(&yj) / s2);
        num = num + &yj * (mij * g2);
        den += mij * (g2 - 0.5);
    }
    ball.mobius_scalar_mul(0.5, (num / den).view())
}

#[test]
fn criterion_10_otda_exactness() {
    let _guard = serial();
    let ball = PoincareBall::new(1.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let src = cloud(&mut rng, &ball, 30, 3, 1.0);
    let tgt = cloud(&mut rng, &ball, 25, 3, 1.0);
    let c = build_cost_matrix(&src, &tgt, CostKind::SqHyperbolic, &ball).unwrap();
    let m = sinkhorn(
        src.weights(),
        tgt.weights(),
        &c,
        &SinkhornConfig::default().with_epsilon(0.1),
    )
    .unwrap();
    let map = OtdaMap::fit(&ball, &m, &src, &tgt).unwrap();
    let y = tgt.points().to_owned();

    let mut train_err = 0.0f64;
    let images: Vec<Array1<f64>> = m
        .plan()
        .rows()
        .into_iter()
        .map(|r| hand_gyrobarycenter(&ball, r, &y))
        .collect();
    for (x, img) in src.points().rows().into_iter().zip(&images) {
        train_err = train_err.max(dist(&map.transform(x), img));
    }
    let mut query_err = 0.0f64;
    for _ in 0..200 {
        let q = ball_point(&mut rng, &ball, 3, 1.0);
        let (k, _) = src
            .points()
            .rows()
            .into_iter()
            .map(|x| ball.distance_sinh_form(x, q.view()))
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, d)| if d < best.1 { (i, d) } else { best },
            );
        let offset = ball.mobius_add((-&src.point(k)).view(), q.view()).unwrap();
        let expected = ball.mobius_add(images[k].view(), offset.view()).unwrap();
        query_err = query_err.max(dist(&map.transform(q.view()), &expected));
    }
    verdict(
        10,
        "OT-DA exactness",
        train_err <= 1e-12 && query_err <= 1e-12,
        format!("training error {train_err:.1e}, query error {query_err:.1e}"),
    );
}

#[test]
fn criterion_11_methods_beat_identity() {
    let _guard = serial();
    let start = Instant::now();
    let task = make_synthetic_task(5, 200, 0.2, 11).unwrap();
    let cfg = ProtocolConfig::default();
    let base = run_protocol(&task, Method::Identity, &cfg).unwrap();
    let mut ok = true;
    let mut detail = vec![format!("identity {:.1}", base.hits_src_tgt)];
    for method in [
        Method::WLinear,
        Method::Otda,
        Method::Me,
        Method::OtDirectSd,
    ] {
        let r = run_protocol(&task, method, &cfg).unwrap();
        ok &= r.hits_src_tgt >= base.hits_src_tgt + 20.0;
        detail.push(format!(
            "{} {:.1} ({:.0}s)",
            method.name(),
            r.hits_src_tgt,
            r.seconds
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    verdict(
        11,
        "fitted methods beat the identity baseline",
        ok,
        format!("Hits@10 {}; {secs:.0}s total", detail.join(", ")),
    );
}

#[test]
fn criterion_12_gyrobarycenter_init_vs_random() {
    let _guard = serial();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..5 {
        let task = make_synthetic_task(5, 100, 0.2, seed).unwrap();
        let (train, _) = task.split(0, 10, seed).unwrap();
        let final_loss = |init: InitStrategy| {
            let cfg = ProtocolConfig {
                seed,
                init,
                ..Default::default()
            };
            let a = align(
                &task.ball,
                &task.src,
                &task.tgt,
                &train,
                Method::OtDirectSd,
                &cfg,
            )
            .unwrap();
            a.trace.last().unwrap().1
        };
        let (gyro, random) = (
            final_loss(InitStrategy::Gyrobarycenter),
            final_loss(InitStrategy::Random),
        );
        wins += usize::from(gyro <= random);
        detail.push(format!("{gyro:.4}/{random:.4}"));
    }
    verdict(
        12,
        "gyrobarycenter init reaches a lower loss than random init",
        wins >= 4,
        format!(
            "{wins}/5 seeds; final loss gyro/random {}",
            detail.join(", ")
        ),
    );
}
