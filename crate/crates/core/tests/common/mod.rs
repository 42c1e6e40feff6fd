//! Instance generators and LP oracles shared by the integration tests.
#![allow(dead_code)]

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soad::model::{Instance, MetricSpace, State, StateDistribution};
use soad::numerics::solve_eta;

/// Random planar points scaled so the largest normalized distance is `d_bound`.
fn planar_metric(rng: &mut ChaCha8Rng, c: &[f64], d_bound: f64) -> Vec<Vec<f64>> {
    let n = c.len();
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
    let mut dist: Vec<Vec<f64>> =
        (0..n).map(|u| (0..n).map(|v| ((pts[u].0 - pts[v].0).powi(2) + (pts[u].1 - pts[v].1).powi(2)).sqrt()).collect()).collect();
    let mut norm: f64 = 0.0;
    for u in 0..n {
        for v in 0..n {
            if u != v {
                norm = norm.max(dist[u][v] / c[u].min(c[v]));
            }
        }
    }
    let s = if norm > 0.0 { d_bound / norm } else { 0.0 };
    dist.iter_mut().flatten().for_each(|x| *x *= s);
    dist
}

fn prices(rng: &mut ChaCha8Rng, t: usize, c: &[f64], lower: f64, upper: f64) -> Vec<Vec<f64>> {
    let n = c.len();
    if rng.gen_bool(0.5) {
        (0..t).map(|_| (0..n).map(|u| c[u] * rng.gen_range(lower..=upper)).collect()).collect()
    } else {
        // Diurnal swing with a per-point phase and noise.
        let phase: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
        let mid = 0.5 * (lower + upper);
        let amp = 0.5 * (upper - lower);
        (0..t)
            .map(|k| {
                (0..n)
                    .map(|u| {
                        let s = mid + 0.8 * amp * (std::f64::consts::TAU * k as f64 / 24.0 + phase[u]).sin()
                            + rng.gen_range(-0.2..0.2) * amp;
                        c[u] * s.clamp(lower, upper)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Random instance with `2 <= n <= max_n`, `4 <= T <= max_t`, `L = 1` and
/// `eta - 1 >= 2`, so every epsilon in `{0.1, 1, 2}` is admissible.
pub fn random_instance(seed: u64, max_n: usize, max_t: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.gen_range(2..=max_n);
        let t = rng.gen_range(4..=max_t);
        let (lower, upper) = (1.0, rng.gen_range(20.0..40.0));
        let c_lo = 2.0 / t as f64;
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(c_lo..=0.6f64.max(c_lo))).collect();
        let span = upper - lower;
        let d_bound = rng.gen_range(0.0..0.3) * span;
        let tau = rng.gen_range(0.0..0.1) * span;
        match solve_eta(upper, lower, d_bound, tau) {
            Ok(eta) if eta - 1.0 >= 2.0 => {}
            _ => continue,
        }
        let dist = planar_metric(&mut rng, &c, d_bound);
        let beta: Vec<f64> = c.iter().map(|ci| tau * ci * rng.gen_range(0.5..=1.0)).collect();
        let costs = prices(&mut rng, t, &c, lower, upper);
        let start = rng.gen_range(0..n);
        return Instance {
            metric: MetricSpace::new(dist, c, beta).unwrap(),
            horizon: t,
            lower,
            upper,
            costs,
            start,
            tv_dist: None,
            d_declared: None,
        };
    }
}

/// Instance small enough for exhaustive enumeration: `n <= 3`, `T <= 5`.
pub fn tiny_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let t = rng.gen_range(2..=5);
    let (lower, upper) = (1.0, rng.gen_range(2.0..10.0));
    let c_lo = 1.0 / t as f64;
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(c_lo..=1.0)).collect();
    let span = upper - lower;
    let d_bound = rng.gen_range(0.0..0.5) * span;
    let tau = rng.gen_range(0.0..0.25) * span;
    let dist = planar_metric(&mut rng, &c, d_bound);
    let beta: Vec<f64> = c.iter().map(|ci| tau * ci * rng.gen_range(0.5..=1.0)).collect();
    let costs = prices(&mut rng, t, &c, lower, upper);
    Instance {
        metric: MetricSpace::new(dist, c, beta).unwrap(),
        horizon: t,
        lower,
        upper,
        costs,
        start: rng.gen_range(0..n),
        tv_dist: None,
        d_declared: None,
    }
}

pub fn random_distribution(rng: &mut impl Rng, m: usize) -> StateDistribution {
    let mut v: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() }).collect();
    let k = rng.gen_range(0..m);
    v[k] += 1e-3;
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    StateDistribution { probs: v }
}

/// Shortest paths over the graph whose ON nodes are joined by `d` and whose
/// OFF nodes hang off their ON node by an edge of weight `beta`.
pub fn state_graph_distances(d: &[Vec<f64>], beta: &[f64]) -> Vec<Vec<f64>> {
    let n = beta.len();
    let m = 2 * n;
    let mut g = vec![vec![f64::INFINITY; m]; m];
    for i in 0..m {
        g[i][i] = 0.0;
    }
    for u in 0..n {
        for v in 0..n {
            if u != v {
                g[u][v] = d[u][v];
            }
        }
        g[u][n + u] = beta[u];
        g[n + u][u] = beta[u];
    }
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                if g[i][k] + g[k][j] < g[i][j] {
                    g[i][j] = g[i][k] + g[k][j];
                }
            }
        }
    }
    g
}

/// Optimal transport cost between `p` and `q` as a dense LP.
pub fn lp_transport(p: &[f64], q: &[f64], cost: &[Vec<f64>]) -> f64 {
    let m = p.len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<Vec<_>> = (0..m).map(|i| (0..m).map(|j| lp.add_var(cost[i][j], (0.0, f64::INFINITY))).collect()).collect();
    for i in 0..m {
        let row: Vec<_> = (0..m).map(|j| (x[i][j], 1.0)).collect();
        lp.add_constraint(&row[..], ComparisonOp::Eq, p[i]);
    }
    for j in 0..m {
        let col: Vec<_> = (0..m).map(|i| (x[i][j], 1.0)).collect();
        lp.add_constraint(&col[..], ComparisonOp::Eq, q[j]);
    }
    lp.solve().unwrap().into_solution().unwrap().objective()
}

/// Relaxed offline optimum as a time-expanded flow LP over states: one
/// coupling per slot, a terminal coupling into OFF states, and
/// `sum_t sum_u c_u x_t(ON u) >= 1`.
pub fn lp_offline(inst: &Instance) -> f64 {
    let n = inst.n();
    let m = 2 * n;
    let t_max = inst.horizon;
    let c = &inst.metric.throughput;
    let beta = &inst.metric.switch_beta;
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let start = State::Off(inst.start).index(n);
    // flows[t][a][b] moves mass from the state at t to the state at t + 1.
    let mut flows = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let g = state_graph_distances(inst.dist_at(t), beta);
        let slot: Vec<Vec<_>> = (0..m)
            .map(|a| {
                (0..m)
                    .map(|b| {
                        let svc = if b < n { inst.costs[t - 1][b] } else { 0.0 };
                        let ub = if t == 1 && a != start { 0.0 } else { f64::INFINITY };
                        lp.add_var(g[a][b] + svc, (0.0, ub))
                    })
                    .collect()
            })
            .collect();
        flows.push(slot);
    }
    let g_end = state_graph_distances(inst.dist_at(t_max), beta);
    let terminal: Vec<Vec<_>> =
        (0..m).map(|a| (0..m).map(|b| lp.add_var(g_end[a][b], (0.0, if b < n { 0.0 } else { f64::INFINITY }))).collect()).collect();
    let total: Vec<_> = (0..m).map(|b| (flows[0][start][b], 1.0)).collect();
    lp.add_constraint(&total[..], ComparisonOp::Eq, 1.0);
    for t in 0..t_max {
        let next = if t + 1 < t_max { &flows[t + 1] } else { &terminal };
        for s in 0..m {
            let mut e: Vec<_> = (0..m).map(|a| (flows[t][a][s], 1.0)).collect();
            e.extend((0..m).map(|b| (next[s][b], -1.0)));
            lp.add_constraint(&e[..], ComparisonOp::Eq, 0.0);
        }
    }
    let util: Vec<_> = (0..t_max).flat_map(|t| (0..m).flat_map(move |a| (0..n).map(move |b| (t, a, b)))).map(|(t, a, b)| (flows[t][a][b], c[b])).collect();
    lp.add_constraint(&util[..], ComparisonOp::Ge, 1.0);
    lp.solve().unwrap().into_solution().unwrap().objective()
}
