//! Offline optimum, brute-force oracle and heuristic baselines.
//!
//! The relaxed offline problem routes one unit of probability mass through
//! the time-expanded state graph with a single side constraint on total
//! utilization. Dualizing that constraint leaves a shortest-path problem, so
//! the optimum is found exactly by a breakpoint search on the multiplier and
//! mixes at most two integral paths.

use crate::algorithms::mandatory_step;
use crate::error::{Result, SoadError};
use crate::model::{constraint_of, Instance, RunMeta, RunResult, State, StateDistribution, SIMPLEX_TOL};
use crate::transport::{expected_run_cost, ground_cost_matrix, switch_off_target};

/// One integral schedule through the state graph.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    /// State index per slot.
    pub states: Vec<usize>,
    /// Service plus movement cost, including the final drop to OFF.
    pub cost: f64,
    /// Total utilization.
    pub util: f64,
}

/// Exact offline solution as a mixture of two paths.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub result: RunResult,
    /// Cost of the optimal mixture, `theta * cost(high) + (1 - theta) * cost(low)`.
    pub value: f64,
    pub low: StatePath,
    pub high: StatePath,
    pub theta: f64,
}

#[derive(Clone, Copy)]
enum Rule {
    /// Minimize `sign * cost - lambda * util`.
    Lagrange(f64),
    /// Maximize utilization, then minimize `sign * cost`.
    MaxUtil,
    /// Minimize utilization, then minimize `sign * cost`.
    MinUtil,
}

fn better(rule: Rule, a: (f64, f64), b: (f64, f64)) -> bool {
    // Pairs are (signed cost, util).
    match rule {
        Rule::Lagrange(l) => a.0 - l * a.1 < b.0 - l * b.1,
        Rule::MaxUtil => a.1 > b.1 || (a.1 == b.1 && a.0 < b.0),
        Rule::MinUtil => a.1 < b.1 || (a.1 == b.1 && a.0 < b.0),
    }
}

/// Best path under `rule` by dynamic programming over `(slot, state)`.
fn path_dp(inst: &Instance, sign: f64, rule: Rule) -> StatePath {
    let n = inst.n();
    let m = 2 * n;
    let c = &inst.metric.throughput;
    let beta = &inst.metric.switch_beta;
    let start = State::Off(inst.start).index(n);
    let unset = (f64::INFINITY, 0.0);
    let mut val: Vec<(f64, f64)> = vec![unset; m];
    val[start] = (0.0, 0.0);
    let mut arg = vec![vec![0usize; m]; inst.horizon];
    let mut g = ground_cost_matrix(inst.dist_at(1), beta);
    let mut g_slot = 1;
    for t in 1..=inst.horizon {
        if inst.tv_dist.is_some() && g_slot != t {
            g = ground_cost_matrix(inst.dist_at(t), beta);
            g_slot = t;
        }
        let mut next = vec![unset; m];
        for s in 0..m {
            let (f, u) = if s < n { (inst.costs[t - 1][s], c[s]) } else { (0.0, 0.0) };
            let mut best: Option<((f64, f64), usize)> = None;
            for r in 0..m {
                if !val[r].0.is_finite() {
                    continue;
                }
                let cand = (val[r].0 + sign * (g[r][s] + f), val[r].1 + u);
                if best.map_or(true, |(b, _)| better(rule, cand, b)) {
                    best = Some((cand, r));
                }
            }
            if let Some((v, r)) = best {
                next[s] = v;
                arg[t - 1][s] = r;
            }
        }
        val = next;
    }
    let mut best: Option<((f64, f64), usize)> = None;
    for s in 0..m {
        if !val[s].0.is_finite() {
            continue;
        }
        let drop = if s < n { switch_off_cost(inst, s) } else { 0.0 };
        let cand = (val[s].0 + sign * drop, val[s].1);
        if best.map_or(true, |(b, _)| better(rule, cand, b)) {
            best = Some((cand, s));
        }
    }
    let (_, mut s) = best.expect("start state is always reachable");
    let mut states = vec![0; inst.horizon];
    for t in (1..=inst.horizon).rev() {
        states[t - 1] = s;
        s = arg[t - 1][s];
    }
    path_totals(inst, states)
}

/// Recomputes cost and utilization of a path from scratch.
pub fn path_totals(inst: &Instance, states: Vec<usize>) -> StatePath {
    let n = inst.n();
    let mut prev = State::Off(inst.start);
    let (mut cost, mut util) = (0.0, 0.0);
    for (i, &s) in states.iter().enumerate() {
        let st = State::from_index(s, n);
        cost += crate::transport::ground_cost(&inst.metric, prev, st, Some(inst.dist_at(i + 1)));
        if let State::On(u) = st {
            cost += inst.costs[i][u];
            util += inst.metric.throughput[u];
        }
        prev = st;
    }
    if let State::On(u) = prev {
        cost += switch_off_cost(inst, u);
    }
    StatePath { states, cost, util }
}

/// Cheapest cost of leaving `ON(u)` for some OFF state after the last slot.
fn switch_off_cost(inst: &Instance, u: usize) -> f64 {
    let d = inst.dist_at(inst.horizon);
    let beta = &inst.metric.switch_beta;
    let v = switch_off_target(d, beta, u);
    d[u][v] + beta[v]
}

/// Breakpoint search for the best mixture of two paths with utilization
/// exactly `target` (or at least `target` when `equality` is false).
fn lagrangian_mix(inst: &Instance, sign: f64, target: f64, equality: bool) -> Result<(StatePath, StatePath, f64)> {
    let hi0 = path_dp(inst, sign, Rule::MaxUtil);
    if hi0.util < target - SIMPLEX_TOL {
        return Err(SoadError::Infeasible(format!("total capacity {} < {target}", hi0.util)));
    }
    let lo0 = if equality { path_dp(inst, sign, Rule::MinUtil) } else { path_dp(inst, sign, Rule::Lagrange(0.0)) };
    if lo0.util >= target {
        return Ok((lo0.clone(), lo0, 1.0));
    }
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..10_000 {
        let du = hi.util - lo.util;
        if du <= 0.0 {
            break;
        }
        let lambda = sign * (hi.cost - lo.cost) / du;
        let p = path_dp(inst, sign, Rule::Lagrange(lambda));
        let tie = sign * lo.cost - lambda * lo.util;
        let v = sign * p.cost - lambda * p.util;
        if v >= tie - 1e-12 * (1.0 + tie.abs()) {
            break;
        }
        if p.util >= target {
            hi = p;
        } else {
            lo = p;
        }
    }
    let theta = ((target - lo.util) / (hi.util - lo.util)).clamp(0.0, 1.0);
    Ok((lo, hi, theta))
}

fn mixture(inst: &Instance, lo: &StatePath, hi: &StatePath, theta: f64) -> Vec<StateDistribution> {
    let n = inst.n();
    (0..inst.horizon)
        .map(|i| {
            let mut probs = vec![0.0; 2 * n];
            probs[lo.states[i]] += 1.0 - theta;
            probs[hi.states[i]] += theta;
            StateDistribution { probs }
        })
        .collect()
}

/// Exact optimum of the relaxed offline problem with its path structure.
pub fn solve_offline_exact(inst: &Instance) -> Result<OfflineSolution> {
    let (lo, hi, theta) = lagrangian_mix(inst, 1.0, 1.0, false)?;
    let decisions = mixture(inst, &lo, &hi, theta);
    let mut result = expected_run_cost(inst, &decisions)?;
    result.meta = RunMeta { alg: "offline".into(), ..RunMeta::default() };
    let value = theta * hi.cost + (1.0 - theta) * lo.cost;
    Ok(OfflineSolution { result, value, low: lo, high: hi, theta })
}

pub fn solve_offline_optimal(inst: &Instance) -> Result<RunResult> {
    Ok(solve_offline_exact(inst)?.result)
}

/// Decisions of the most expensive schedule with utilization exactly 1.
pub fn solve_max_cost(inst: &Instance) -> Result<Vec<StateDistribution>> {
    let (lo, hi, theta) = lagrangian_mix(inst, -1.0, 1.0, true)?;
    Ok(mixture(inst, &lo, &hi, theta))
}

/// Result of exhaustive enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForce {
    /// Best mixture of enumerated schedules reaching utilization 1.
    pub best_mixed: f64,
    /// Best single enumerated schedule reaching utilization 1.
    pub best_pure: f64,
    pub schedules: usize,
}

/// Enumerates every schedule of `(point, ON fraction k / grid)` per slot.
pub fn brute_force_opt(inst: &Instance, grid: usize) -> Result<BruteForce> {
    let n = inst.n();
    let t = inst.horizon;
    if n > 3 || t > 5 || grid == 0 {
        return Err(SoadError::TooLarge(format!("brute force needs n <= 3, T <= 5, grid >= 1; got n={n} T={t} grid={grid}")));
    }
    let options: Vec<(usize, f64)> = (0..n).flat_map(|u| (0..=grid).map(move |k| (u, k as f64 / grid as f64))).collect();
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(options.len().pow(t as u32));
    let mut stack = vec![(0usize, inst.start, 0.0f64, 0.0f64, 0.0f64)];
    // (slot done, point, on fraction, cost, util)
    let beta = &inst.metric.switch_beta;
    let c = &inst.metric.throughput;
    while let Some((k, u, x, cost, util)) = stack.pop() {
        if k == t {
            points.push((util, cost + switch_off_cost(inst, u) * x));
            continue;
        }
        let d = inst.dist_at(k + 1);
        for &(v, y) in &options {
            let mv = if u == v { beta[u] * (x - y).abs() } else { d[u][v] + beta[u] * (1.0 - x) + beta[v] * (1.0 - y) };
            stack.push((k + 1, v, y, cost + mv + inst.costs[k][v] * y, util + c[v] * y));
        }
    }
    let schedules = points.len();
    let best_pure = points.iter().filter(|p| p.0 >= 1.0 - SIMPLEX_TOL).map(|p| p.1).fold(f64::INFINITY, f64::min);
    if !best_pure.is_finite() && points.iter().all(|p| p.0 < 1.0 - SIMPLEX_TOL) {
        return Err(SoadError::Infeasible("no enumerated schedule completes the workload".into()));
    }
    // Lower convex hull of (util, cost), then its minimum over util >= 1.
    points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in points {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut best_mixed = f64::INFINITY;
    for w in hull.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.0 < 1.0 && b.0 >= 1.0 {
            let th = (1.0 - a.0) / (b.0 - a.0);
            best_mixed = best_mixed.min(a.1 + th * (b.1 - a.1));
        }
    }
    for &(u, v) in &hull {
        if u >= 1.0 {
            best_mixed = best_mixed.min(v);
        }
    }
    Ok(BruteForce { best_mixed: best_mixed.min(best_pure), best_pure, schedules })
}

fn finish(inst: &Instance, decisions: Vec<StateDistribution>, alg: &str) -> Result<RunResult> {
    let mut r = expected_run_cost(inst, &decisions)?;
    r.meta = RunMeta { alg: alg.into(), ..RunMeta::default() };
    Ok(r)
}

/// Runs the controller from slot `first` on, starting as if OFF at `point`.
fn run_from(inst: &Instance, first: usize, point: usize, mut decisions: Vec<StateDistribution>) -> Result<Vec<StateDistribution>> {
    let c = &inst.metric.throughput;
    let mut z: f64 = decisions.iter().map(|p| constraint_of(c, p)).sum();
    let mut prev = StateDistribution::off_at(inst.n(), point);
    for t in first..=inst.horizon {
        let p = mandatory_step(inst, t, z, &prev)?;
        z += constraint_of(c, &p);
        decisions.push(p.clone());
        prev = p;
    }
    Ok(decisions)
}

/// Runs at the start point from slot 1 without migrating.
pub fn run_carbon_agnostic(inst: &Instance) -> Result<RunResult> {
    let d = run_from(inst, 1, inst.start, Vec::new())?;
    finish(inst, d, "agnostic")
}

fn argmin_normalized(row: &[f64], c: &[f64]) -> usize {
    let mut best = 0;
    for u in 1..row.len() {
        if row[u] / c[u] < row[best] / c[best] {
            best = u;
        }
    }
    best
}

/// Migrates at arrival to the point with the lowest normalized first-slot cost.
pub fn run_greedy(inst: &Instance) -> Result<RunResult> {
    let u = argmin_normalized(&inst.costs[0], &inst.metric.throughput);
    let d = run_from(inst, 1, u, Vec::new())?;
    finish(inst, d, "greedy")
}

/// Plans once from a forecast: starts at the best (slot, point), shifted
/// earlier when too few slots remain to finish there.
pub fn run_delayed_greedy(inst: &Instance, forecast: &[Vec<f64>]) -> Result<RunResult> {
    if forecast.len() != inst.horizon {
        return Err(SoadError::LengthMismatch { expected: inst.horizon, got: forecast.len() });
    }
    let c = &inst.metric.throughput;
    let (mut bt, mut bu) = (0, 0);
    for (t, row) in forecast.iter().enumerate() {
        for u in 0..inst.n() {
            if row[u] / c[u] < forecast[bt][bu] / c[bu] {
                bt = t;
                bu = u;
            }
        }
    }
    let need = (1.0 / c[bu] - 1e-9).ceil().max(1.0) as usize;
    let start = (bt + 1).min((inst.horizon + 1).saturating_sub(need)).max(1);
    let idle: Vec<StateDistribution> = (1..start).map(|_| StateDistribution::off_at(inst.n(), inst.start)).collect();
    let d = run_from(inst, start, bu, idle)?;
    finish(inst, d, "delayed_greedy")
}

/// Runs fully at the best point whose normalized cost is at most `sqrt(UL)`
/// and pauses in place otherwise, ignoring movement costs.
pub fn run_simple_threshold(inst: &Instance) -> Result<RunResult> {
    let n = inst.n();
    let c = &inst.metric.throughput;
    let threshold = (inst.upper * inst.lower).sqrt();
    let mut z = 0.0;
    let mut prev = StateDistribution::off_at(n, inst.start);
    let mut mandatory = false;
    let mut decisions = Vec::with_capacity(inst.horizon);
    for t in 1..=inst.horizon {
        if !mandatory && crate::model::mandatory_allocation_triggered(inst, t - 1, z) {
            mandatory = true;
        }
        let need = 1.0 - z;
        let p = if need <= 1e-12 {
            prev.collapse_off()
        } else if mandatory {
            mandatory_step(inst, t, z, &prev)?
        } else {
            let u = argmin_normalized(&inst.costs[t - 1], c);
            if inst.costs[t - 1][u] / c[u] <= threshold {
                let theta = (need / c[u]).min(1.0);
                let mut probs = vec![0.0; 2 * n];
                probs[u] = theta;
                probs[n + u] = 1.0 - theta;
                StateDistribution { probs }
            } else {
                prev.collapse_off()
            }
        };
        z += constraint_of(c, &p);
        decisions.push(p.clone());
        prev = p;
    }
    finish(inst, decisions, "simple_threshold")
}
