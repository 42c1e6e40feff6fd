//! Exact Wasserstein-1 distances on the state set, run-cost evaluation and
//! sampling of realized schedules.
//!
//! Transport problems are solved exactly by successive shortest paths on the
//! bipartite source/sink graph. Because OFF states hang off the metric like
//! pendant leaves, the distance also splits into a spatial term over the
//! point marginals plus a temporal term over OFF masses; `w1_decomposed`
//! uses that identity as a fast path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoadError};
use crate::model::{constraint_of, Instance, MetricSpace, RunMeta, RunResult, State, StateDistribution, SIMPLEX_TOL};

/// Masses below this are ignored by the flow solver.
const FLOW_EPS: f64 = 1e-15;

/// Joint distribution over `source state x target state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub joint: Vec<Vec<f64>>,
}

/// Ground cost between two states.
pub fn ground_cost(metric: &MetricSpace, a: State, b: State, dist_override: Option<&[Vec<f64>]>) -> f64 {
    let d = dist_override.unwrap_or(&metric.dist);
    ground_cost_with(d, &metric.switch_beta, a, b)
}

fn ground_cost_with(d: &[Vec<f64>], beta: &[f64], a: State, b: State) -> f64 {
    match (a, b) {
        (State::On(u), State::On(v)) => d[u][v],
        (State::Off(u), State::Off(v)) => {
            if u == v {
                0.0
            } else {
                beta[u] + d[u][v] + beta[v]
            }
        }
        (State::Off(u), State::On(v)) | (State::On(v), State::Off(u)) => beta[u] + d[u][v],
    }
}

/// OFF point reached most cheaply from `ON(u)`: the minimizer of
/// `d(u, v) + beta_v`, preferring `u` itself and then the lowest index.
pub fn switch_off_target(d: &[Vec<f64>], beta: &[f64], u: usize) -> usize {
    let mut best = u;
    for v in 0..beta.len() {
        if d[u][v] + beta[v] < d[u][best] + beta[best] {
            best = v;
        }
    }
    best
}

/// Cheapest all-OFF distribution reachable from `p`: ON mass moves to its
/// switch-off target, OFF mass stays.
pub fn cheapest_off(d: &[Vec<f64>], beta: &[f64], p: &StateDistribution) -> StateDistribution {
    let n = beta.len();
    let mut probs = vec![0.0; 2 * n];
    for u in 0..n {
        probs[n + u] += p.probs[n + u];
        probs[n + switch_off_target(d, beta, u)] += p.probs[u];
    }
    StateDistribution { probs }
}

/// Full `2n x 2n` ground-cost matrix.
pub fn ground_cost_matrix(d: &[Vec<f64>], beta: &[f64]) -> Vec<Vec<f64>> {
    let n = beta.len();
    (0..2 * n)
        .map(|i| (0..2 * n).map(|j| ground_cost_with(d, beta, State::from_index(i, n), State::from_index(j, n))).collect())
        .collect()
}

/// Exact min-cost transport between `supply` and `demand` (equal totals)
/// under an arbitrary nonnegative cost matrix.
pub fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let (m1, m2) = (supply.len(), demand.len());
    let mut flow = vec![vec![0.0; m2]; m1];
    let mut sup: Vec<f64> = supply.iter().map(|&x| if x > FLOW_EPS { x } else { 0.0 }).collect();
    let mut dem: Vec<f64> = demand.iter().map(|&x| if x > FLOW_EPS { x } else { 0.0 }).collect();
    let total = sup.iter().sum::<f64>().min(dem.iter().sum::<f64>());
    // Node layout: sources 0..m1, sinks m1..m1+m2. Potentials keep reduced costs nonnegative.
    let v = m1 + m2;
    let mut pot = vec![0.0; v];
    let mut shipped = 0.0;
    let max_iter = 4 * (m1 * m2 + m1 + m2) + 16;
    for _ in 0..max_iter {
        if total - shipped <= FLOW_EPS * (1.0 + total) || sup.iter().all(|&s| s <= FLOW_EPS) || dem.iter().all(|&d| d <= FLOW_EPS) {
            break;
        }
        // Dijkstra from a virtual root connected to every source with remaining supply.
        let mut dist = vec![f64::INFINITY; v];
        let mut prev = vec![usize::MAX; v];
        let mut done = vec![false; v];
        for i in 0..m1 {
            if sup[i] > FLOW_EPS {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut best = usize::MAX;
            let mut bd = f64::INFINITY;
            for x in 0..v {
                if !done[x] && dist[x] < bd {
                    bd = dist[x];
                    best = x;
                }
            }
            if best == usize::MAX {
                break;
            }
            done[best] = true;
            if best < m1 {
                let i = best;
                for j in 0..m2 {
                    let y = m1 + j;
                    let rc = cost[i][j] + pot[i] - pot[y];
                    let nd = bd + rc.max(0.0);
                    if nd < dist[y] {
                        dist[y] = nd;
                        prev[y] = i;
                    }
                }
            } else {
                let j = best - m1;
                for i in 0..m1 {
                    if flow[i][j] > FLOW_EPS {
                        let rc = -cost[i][j] + pot[best] - pot[i];
                        let nd = bd + rc.max(0.0);
                        if nd < dist[i] {
                            dist[i] = nd;
                            prev[i] = best;
                        }
                    }
                }
            }
        }
        // Cheapest reachable sink with remaining demand.
        let mut sink = usize::MAX;
        let mut sd = f64::INFINITY;
        for j in 0..m2 {
            if dem[j] > FLOW_EPS && dist[m1 + j] < sd {
                sd = dist[m1 + j];
                sink = j;
            }
        }
        if sink == usize::MAX {
            return Err(SoadError::Internal("transport: no augmenting path".into()));
        }
        for x in 0..v {
            if dist[x].is_finite() {
                pot[x] += dist[x].min(sd);
            } else {
                pot[x] += sd;
            }
        }
        // Walk back to find the bottleneck.
        let mut amount = dem[sink];
        let mut y = m1 + sink;
        let mut path = Vec::new();
        loop {
            let x = prev[y];
            path.push((x, y));
            if y >= m1 {
                // forward arc x -> y, unbounded
            } else {
                amount = amount.min(flow[y][x - m1]);
            }
            if x < m1 && prev[x] == usize::MAX {
                amount = amount.min(sup[x]);
                break;
            }
            y = x;
        }
        for &(x, y) in &path {
            if y >= m1 {
                flow[x][y - m1] += amount;
            } else {
                flow[y][x - m1] -= amount;
                if flow[y][x - m1] < FLOW_EPS {
                    flow[y][x - m1] = 0.0;
                }
            }
        }
        let src = path.last().unwrap().0;
        sup[src] -= amount;
        dem[sink] -= amount;
        shipped += amount;
    }
    let cost_total = flow.iter().enumerate().map(|(i, row)| row.iter().enumerate().map(|(j, f)| f * cost[i][j]).sum::<f64>()).sum();
    Ok((cost_total, flow))
}

/// Exact Wasserstein-1 distance between state distributions and an optimal plan.
pub fn wasserstein1(
    metric: &MetricSpace,
    p: &StateDistribution,
    q: &StateDistribution,
    dist_override: Option<&[Vec<f64>]>,
) -> Result<(f64, TransportPlan)> {
    let d = dist_override.unwrap_or(&metric.dist);
    let cost = ground_cost_matrix(d, &metric.switch_beta);
    let (c, joint) = min_cost_transport(&p.probs, &q.probs, &cost)?;
    Ok((c, TransportPlan { joint }))
}

/// Spatial Wasserstein-1 between point marginals.
pub fn spatial_w1(d: &[Vec<f64>], r: &[f64], s: &[f64]) -> f64 {
    // Mass that stays in place never needs to move.
    let supply: Vec<f64> = r.iter().zip(s).map(|(a, b)| (a - b).max(0.0)).collect();
    let demand: Vec<f64> = r.iter().zip(s).map(|(a, b)| (b - a).max(0.0)).collect();
    if supply.iter().all(|&x| x <= FLOW_EPS) {
        return 0.0;
    }
    min_cost_transport(&supply, &demand, d).map(|x| x.0).unwrap_or(f64::NAN)
}

/// Spatial and temporal parts of `W1(p, q)` via the pendant-leaf identity.
pub fn w1_parts(d: &[Vec<f64>], beta: &[f64], p: &StateDistribution, q: &StateDistribution) -> (f64, f64) {
    let n = beta.len();
    let spatial = spatial_w1(d, &p.spatial(), &q.spatial());
    let temporal = (0..n).map(|u| beta[u] * (p.probs[n + u] - q.probs[n + u]).abs()).sum();
    (spatial, temporal)
}

/// `W1(p, q)` via the decomposition identity; requires `d` to be a metric.
pub fn w1_decomposed(metric: &MetricSpace, p: &StateDistribution, q: &StateDistribution, dist_override: Option<&[Vec<f64>]>) -> f64 {
    let (s, t) = w1_parts(dist_override.unwrap_or(&metric.dist), &metric.switch_beta, p, q);
    s + t
}

/// Worst-case spatial distances `D min(c_u, c_v)`.
pub fn wbar_distances(metric: &MetricSpace, d_bound: f64) -> Vec<Vec<f64>> {
    let c = &metric.throughput;
    (0..metric.n)
        .map(|u| (0..metric.n).map(|v| if u == v { 0.0 } else { d_bound * c[u].min(c[v]) }).collect())
        .collect()
}

/// Wasserstein-1 under the worst-case distances; temporal terms unchanged.
/// The worst-case distances need not be a metric, so the flow solver is used.
pub fn wbar1(metric: &MetricSpace, p: &StateDistribution, q: &StateDistribution, d_bound: f64) -> Result<f64> {
    let d = wbar_distances(metric, d_bound);
    Ok(wasserstein1(metric, p, q, Some(&d))?.0)
}

/// Objective and cost breakdown of a decision sequence.
pub fn expected_run_cost(inst: &Instance, decisions: &[StateDistribution]) -> Result<RunResult> {
    if decisions.len() != inst.horizon {
        return Err(SoadError::LengthMismatch { expected: inst.horizon, got: decisions.len() });
    }
    let n = inst.n();
    let beta = &inst.metric.switch_beta;
    let mut prev = StateDistribution::off_at(n, inst.start);
    let (mut service, mut spatial, mut temporal) = (0.0, 0.0, 0.0);
    let mut z = 0.0;
    let mut utilization = Vec::with_capacity(inst.horizon + 1);
    utilization.push(0.0);
    for (i, p) in decisions.iter().enumerate() {
        let t = i + 1;
        service += inst.costs[i].iter().enumerate().map(|(u, f)| f * p.on(u)).sum::<f64>();
        let (s, tm) = w1_parts(inst.dist_at(t), beta, &prev, p);
        spatial += s;
        temporal += tm;
        z += constraint_of(&inst.metric.throughput, p);
        utilization.push(z);
        prev = p.clone();
    }
    // Terminal transition to the cheapest OFF states.
    let d = inst.dist_at(inst.horizon);
    for u in 0..n {
        let v = switch_off_target(d, beta, u);
        spatial += prev.on(u) * d[u][v];
        temporal += prev.on(u) * beta[v];
    }
    Ok(RunResult {
        decisions: decisions.to_vec(),
        service_cost: service,
        spatial_cost: spatial,
        temporal_cost: temporal,
        utilization,
        objective: service + spatial + temporal,
        feasible: z >= 1.0 - SIMPLEX_TOL,
        meta: RunMeta::default(),
    })
}

/// How a realized schedule is drawn from a decision sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// A point is drawn from the spatial plan; the ON/OFF split at that point
    /// is applied as a deterministic fractional allocation.
    Mixed,
    /// A single state is drawn from the optimal state-level plan.
    States,
}

/// One realized schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedSchedule {
    /// Point occupied in each slot.
    pub points: Vec<usize>,
    /// ON fraction at that point in each slot.
    pub on_fraction: Vec<f64>,
    pub cost: f64,
    pub utilization: f64,
}

fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut x = rng.gen::<f64>() * total;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last = Some(i);
            if x < w {
                return Some(i);
            }
            x -= w;
        }
    }
    last
}

/// Cost of moving between point-supported allocations `(u, x)` and `(v, y)`.
fn mixed_transition(d: &[Vec<f64>], beta: &[f64], u: usize, x: f64, v: usize, y: f64) -> f64 {
    if u == v {
        beta[u] * (x - y).abs()
    } else {
        d[u][v] + beta[u] * (1.0 - x) + beta[v] * (1.0 - y)
    }
}

/// Samples one realized schedule coupled along optimal plans.
///
/// In `Mixed` mode the location follows the conditional of the optimal plan
/// between consecutive point marginals; a location whose previous mass is
/// zero stays put. In `States` mode the state follows the conditional of the
/// optimal state-level plan, which makes the realized cost an unbiased
/// estimate of `expected_run_cost`.
pub fn sample_coupled_schedule(
    inst: &Instance,
    decisions: &[StateDistribution],
    seed: u64,
    mode: SamplingMode,
) -> Result<RealizedSchedule> {
    let plans = coupling_plans(inst, decisions, mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_with_plans(inst, decisions, &plans, &mut rng, mode))
}

/// Optimal plans between consecutive decisions, starting from the OFF start.
pub fn coupling_plans(inst: &Instance, decisions: &[StateDistribution], mode: SamplingMode) -> Result<Vec<Vec<Vec<f64>>>> {
    if decisions.len() != inst.horizon {
        return Err(SoadError::LengthMismatch { expected: inst.horizon, got: decisions.len() });
    }
    let n = inst.n();
    let mut prev = StateDistribution::off_at(n, inst.start);
    let mut plans = Vec::with_capacity(decisions.len());
    for (i, p) in decisions.iter().enumerate() {
        let d = inst.dist_at(i + 1);
        let plan = match mode {
            SamplingMode::Mixed => min_cost_transport(&prev.spatial(), &p.spatial(), d)?.1,
            SamplingMode::States => min_cost_transport(&prev.probs, &p.probs, &ground_cost_matrix(d, &inst.metric.switch_beta))?.1,
        };
        plans.push(plan);
        prev = p.clone();
    }
    Ok(plans)
}

/// Draws a schedule given precomputed plans.
pub fn sample_with_plans(
    inst: &Instance,
    decisions: &[StateDistribution],
    plans: &[Vec<Vec<f64>>],
    rng: &mut ChaCha8Rng,
    mode: SamplingMode,
) -> RealizedSchedule {
    let n = inst.n();
    let beta = &inst.metric.switch_beta;
    let c = &inst.metric.throughput;
    let mut cost = 0.0;
    let mut util = 0.0;
    let mut points = Vec::with_capacity(decisions.len());
    let mut fracs = Vec::with_capacity(decisions.len());
    match mode {
        SamplingMode::Mixed => {
            let (mut u, mut x) = (inst.start, 0.0);
            for (i, p) in decisions.iter().enumerate() {
                let d = inst.dist_at(i + 1);
                let v = draw(rng, &plans[i][u]).unwrap_or(u);
                let r = p.on(v) + p.off(v);
                let y = if r > 0.0 { p.on(v) / r } else { 0.0 };
                cost += inst.costs[i][v] * y + mixed_transition(d, beta, u, x, v, y);
                util += c[v] * y;
                points.push(v);
                fracs.push(y);
                u = v;
                x = y;
            }
            let d = inst.dist_at(inst.horizon);
            let v = switch_off_target(d, beta, u);
            cost += x * (d[u][v] + beta[v]);
        }
        SamplingMode::States => {
            let mut s = State::Off(inst.start).index(n);
            for (i, _) in decisions.iter().enumerate() {
                let d = inst.dist_at(i + 1);
                let next = draw(rng, &plans[i][s]).unwrap_or(s);
                let (a, b) = (State::from_index(s, n), State::from_index(next, n));
                cost += ground_cost_with(d, beta, a, b);
                if let State::On(v) = b {
                    cost += inst.costs[i][v];
                    util += c[v];
                }
                points.push(b.point());
                fracs.push(if matches!(b, State::On(_)) { 1.0 } else { 0.0 });
                s = next;
            }
            if let State::On(u) = State::from_index(s, n) {
                let d = inst.dist_at(inst.horizon);
                let v = switch_off_target(d, beta, u);
                cost += d[u][v] + beta[v];
            }
        }
    }
    RealizedSchedule { points, on_fraction: fracs, cost, utilization: util }
}
