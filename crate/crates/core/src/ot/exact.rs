//! Exact solvers for small instances, used as oracles.

use ndarray::{Array2, ArrayView1};

use super::{check_simplex, CostMatrix, Coupling};
use crate::error::{Error, Result};

/// Largest uniform square instance solved by enumerating permutations.
pub const PERMUTATION_LIMIT: usize = 8;
/// Largest `n_s · n_t` solved by min-cost flow.
pub const FLOW_LIMIT: usize = 64;

const CAP_EPS: f64 = 1e-15;

/// Globally optimal coupling of a small instance.
pub fn exact_ot(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<Coupling> {
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
    let uniform = |w: ArrayView1<f64>| {
        let u = 1.0 / w.len() as f64;
        w.iter().all(|v| (v - u).abs() <= 1e-12)
    };
    let plan = if n_s == n_t && n_s <= PERMUTATION_LIMIT && uniform(a) && uniform(b) {
        best_permutation_plan(cost)
    } else if n_s * n_t <= FLOW_LIMIT {
        min_cost_flow(a, b, cost)?
    } else {
        return Err(Error::InstanceTooLarge { n_s, n_t });
    };
    Coupling::new(plan, a.to_owned(), b.to_owned())
}

/// Heap's algorithm over assignments `i ↦ perm[i]`; first minimum wins.
fn best_permutation_plan(cost: &CostMatrix) -> Array2<f64> {
    let c = cost.values();
    let n = c.nrows();
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[[i, j]]).sum::<f64>();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    let mut counters = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if counters[i] < i {
            let k = if i % 2 == 0 { 0 } else { counters[i] };
            perm.swap(k, i);
            let v = total(&perm);
            if v < best_cost {
                best_cost = v;
                best.copy_from_slice(&perm);
            }
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    let mut plan = Array2::zeros((n, n));
    for (i, &j) in best.iter().enumerate() {
        plan[[i, j]] = 1.0 / n as f64;
    }
    plan
}

struct Arc {
    to: usize,
    cap: f64,
    cost: f64,
}

/// Successive shortest paths on the bipartite transportation network.
fn min_cost_flow(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<Array2<f64>> {
    let c = cost.values();
    let (n_s, n_t) = c.dim();
    let source = n_s + n_t;
    let sink = source + 1;
    let nodes = sink + 1;
    let mut arcs: Vec<Arc> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut add = |arcs: &mut Vec<Arc>, u: usize, v: usize, cap: f64, cost: f64| {
        adj[u].push(arcs.len());
        arcs.push(Arc { to: v, cap, cost });
        adj[v].push(arcs.len());
        arcs.push(Arc {
            to: u,
            cap: 0.0,
            cost: -cost,
        });
    };
    for i in 0..n_s {
        add(&mut arcs, source, i, a[i], 0.0);
    }
    let mut transport_arc = Array2::zeros((n_s, n_t));
    for i in 0..n_s {
        for j in 0..n_t {
            transport_arc[[i, j]] = arcs.len();
            add(&mut arcs, i, n_s + j, f64::INFINITY, c[[i, j]]);
        }
    }
    for j in 0..n_t {
        add(&mut arcs, n_s + j, sink, b[j], 0.0);
    }

    let demand = a.sum().min(b.sum());
    let mut sent = 0.0;
    let max_rounds = 4 * nodes * nodes;
    for _ in 0..max_rounds {
        if demand - sent <= 1e-14 {
            break;
        }
        // Bellman-Ford from the source over arcs with residual capacity
        let mut dist = vec![f64::INFINITY; nodes];
        let mut pred: Vec<Option<usize>> = vec![None; nodes];
        dist[source] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if !dist[u].is_finite() {
                    continue;
                }
                for &e in &adj[u] {
                    let arc = &arcs[e];
                    if arc.cap > CAP_EPS {
                        let nd = dist[u] + arc.cost;
                        if nd < dist[arc.to] - 1e-12 * (1.0 + nd.abs()) {
                            dist[arc.to] = nd;
                            pred[arc.to] = Some(e);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if !dist[sink].is_finite() {
            break;
        }
        let mut push = demand - sent;
        let mut v = sink;
        while let Some(e) = pred[v] {
            push = push.min(arcs[e].cap);
            v = arcs[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = pred[v] {
            arcs[e].cap -= push;
            arcs[e ^ 1].cap += push;
            v = arcs[e ^ 1].to;
        }
        sent += push;
    }
    if (demand - sent).abs() > 1e-9 {
        return Err(Error::NonFinite(format!(
            "min-cost flow routed {sent} of {demand}"
        )));
    }
    // flow on a forward arc equals the capacity of its reverse twin
    Ok(transport_arc.mapv(|e: usize| arcs[e ^ 1].cap))
}
