//! The online algorithms: pseudo-cost minimization (PCM), its
//! consistency-limited learning-augmented variant (ST-CLIP), their
//! time-varying versions and the shared mandatory-allocation controller.
//!
//! Both algorithms are stepwise: `step` reveals the service costs of the next
//! slot and returns the decision. The `run_*` helpers drive a whole instance.

use serde::{Deserialize, Serialize};

use crate::embedding::{sample_hst_with, KVector, TreeEmbedding};
use crate::error::{Result, SoadError};
use crate::model::{constraint_of, Instance, RunMeta, RunResult, State, StateDistribution, SIMPLEX_TOL};
use crate::numerics::bilevel::{step_objective, StepProblem};
use crate::numerics::{PseudoCostParams, Variant};
use crate::transport::{cheapest_off, expected_run_cost, ground_cost, w1_decomposed, wbar1};

/// Utilization within this of 1 counts as complete.
const DONE_TOL: f64 = 1e-12;
/// Grid resolution used when scanning the consistency slack along a path.
const SLACK_SCAN: usize = 64;

/// Untrusted advice: one decision per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub decisions: Vec<StateDistribution>,
}

impl Advice {
    pub fn new(decisions: Vec<StateDistribution>, throughput: &[f64]) -> Result<Advice> {
        let a = Advice { decisions };
        let total = a.utilization(throughput);
        if total < 1.0 - SIMPLEX_TOL {
            return Err(SoadError::Infeasible(format!("advice completes only {total}")));
        }
        Ok(a)
    }

    pub fn utilization(&self, throughput: &[f64]) -> f64 {
        self.decisions.iter().map(|p| constraint_of(throughput, p)).sum()
    }
}

/// Running state shared by the online algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineState {
    pub t: usize,
    pub z: f64,
    pub rho: f64,
    pub a_util: f64,
    pub sc: f64,
    pub adv_cost: f64,
    pub p_prev: StateDistribution,
    pub a_prev: StateDistribution,
}

impl OnlineState {
    pub fn new(inst: &Instance) -> OnlineState {
        let start = StateDistribution::off_at(inst.n(), inst.start);
        OnlineState { t: 0, z: 0.0, rho: 0.0, a_util: 0.0, sc: 0.0, adv_cost: 0.0, p_prev: start.clone(), a_prev: start }
    }
}

/// True when the distances change over time, i.e. the instance is a genuine
/// time-varying one rather than a constant tensor.
pub fn is_time_varying(inst: &Instance) -> bool {
    match &inst.tv_dist {
        Some(tv) => tv.iter().any(|slice| *slice != inst.metric.dist),
        None => false,
    }
}

/// Decision of the mandatory-allocation controller for slot `t`.
///
/// Keeps the current spatial marginal while full allocation there can still
/// finish in the remaining slots; otherwise moves to the highest-throughput
/// point. Allocates the ON fraction needed to reach `z = 1`, never more.
pub fn mandatory_step(inst: &Instance, t: usize, z: f64, p_prev: &StateDistribution) -> Result<StateDistribution> {
    let n = inst.n();
    let need = 1.0 - z;
    if need <= DONE_TOL {
        return Ok(finished(inst, t, p_prev));
    }
    let c = &inst.metric.throughput;
    let slots = (inst.horizon + 1 - t) as f64;
    let mut r = p_prev.spatial();
    let mut rate: f64 = (0..n).map(|u| r[u] * c[u]).sum();
    if slots * rate < need {
        let mut best = 0;
        for u in 1..n {
            if c[u] > c[best] {
                best = u;
            }
        }
        if slots * c[best] < need * (1.0 - SIMPLEX_TOL) {
            return Err(SoadError::Infeasible(format!("mandatory allocation at slot {t} cannot finish {need}")));
        }
        r = vec![0.0; n];
        r[best] = 1.0;
        rate = c[best];
    }
    let theta = (need / rate).min(1.0);
    let mut probs = vec![0.0; 2 * n];
    for u in 0..n {
        probs[u] = theta * r[u];
        probs[n + u] = (1.0 - theta) * r[u];
    }
    Ok(StateDistribution { probs })
}

/// Decision once the workload is complete: every ON unit switches off at its
/// cheapest OFF state.
fn finished(inst: &Instance, t: usize, p_prev: &StateDistribution) -> StateDistribution {
    cheapest_off(inst.dist_at(t), &inst.metric.switch_beta, p_prev)
}

/// Remaining decisions from slot `t` on when mandatory allocation starts there.
pub fn mandatory_allocation(inst: &Instance, t: usize, z: f64, p_prev: &StateDistribution) -> Result<Vec<StateDistribution>> {
    let mut out = Vec::new();
    let (mut z, mut prev) = (z, p_prev.clone());
    for s in t..=inst.horizon {
        let p = mandatory_step(inst, s, z, &prev)?;
        z += constraint_of(&inst.metric.throughput, &p);
        out.push(p.clone());
        prev = p;
    }
    Ok(out)
}

/// Tree embedding and its state distance matrix, rebuilt when the distance
/// matrix in force changes.
#[derive(Debug, Clone)]
struct TreeCache {
    seed: u64,
    time_varying: bool,
    key: Option<Vec<Vec<f64>>>,
    emb: Option<TreeEmbedding>,
    dist: Vec<Vec<f64>>,
}

impl TreeCache {
    fn new(seed: u64, time_varying: bool) -> TreeCache {
        TreeCache { seed, time_varying, key: None, emb: None, dist: Vec::new() }
    }

    fn at(&mut self, inst: &Instance, t: usize) -> &[Vec<f64>] {
        let d = if self.time_varying { inst.dist_at(t) } else { &inst.metric.dist[..] };
        if self.key.as_deref() != Some(d) {
            let emb = sample_hst_with(&inst.metric, d, self.seed);
            self.dist = emb.state_distance_matrix();
            self.emb = Some(emb);
            self.key = Some(d.to_vec());
        }
        &self.dist
    }
}

/// Observable interface used by adaptive adversaries.
pub trait OnlineAlgorithm {
    /// Reveals the cost row of the next slot and returns the decision.
    fn step(&mut self, costs: &[f64]) -> Result<StateDistribution>;
}

/// Pseudo-cost minimization.
#[derive(Debug, Clone)]
pub struct Pcm {
    inst: Instance,
    pub params: PseudoCostParams,
    pub state: OnlineState,
    trees: TreeCache,
    mandatory: bool,
    decisions: Vec<StateDistribution>,
    seed: u64,
    /// `(y, objective at y, objective at 0)` of each regular step.
    pub step_log: Vec<(f64, f64, f64)>,
}

impl Pcm {
    /// `inst` supplies the horizon, metric and bounds. Its cost rows are
    /// overwritten by `step` as slots are revealed.
    pub fn new(inst: &Instance, seed: u64, time_varying: bool) -> Result<Pcm> {
        let params = PseudoCostParams::robust(inst.upper, inst.lower, inst.d_bound(), inst.tau())?;
        Ok(Pcm {
            inst: inst.clone(),
            params,
            state: OnlineState::new(inst),
            trees: TreeCache::new(seed, time_varying),
            mandatory: false,
            decisions: Vec::new(),
            seed,
            step_log: Vec::new(),
        })
    }

    pub fn decisions(&self) -> &[StateDistribution] {
        &self.decisions
    }

    /// The last decision as an element of `K` on the current tree.
    pub fn k_prev(&self) -> Option<KVector> {
        self.trees.emb.as_ref().map(|e| crate::embedding::phi(e, &self.state.p_prev))
    }

    pub fn finish(self) -> Result<RunResult> {
        let mut r = expected_run_cost(&self.inst, &self.decisions)?;
        r.meta = RunMeta { alg: "pcm".into(), eta: Some(self.params.eta), seed: Some(self.seed), ..RunMeta::default() };
        Ok(r)
    }
}

impl OnlineAlgorithm for Pcm {
    fn step(&mut self, costs: &[f64]) -> Result<StateDistribution> {
        let t = self.state.t + 1;
        if t > self.inst.horizon {
            return Err(SoadError::SlotOutOfRange { t, horizon: self.inst.horizon });
        }
        self.inst.costs[t - 1] = costs.to_vec();
        let z = self.state.z;
        if !self.mandatory && inst_trigger(&self.inst, t, z) {
            self.mandatory = true;
        }
        let p = if 1.0 - z <= DONE_TOL {
            finished(&self.inst, t, &self.state.p_prev)
        } else if self.mandatory {
            mandatory_step(&self.inst, t, z, &self.state.p_prev)?
        } else {
            let curve = self.params.curve(Variant::Robust);
            let tree = self.trees.at(&self.inst, t);
            let prob = StepProblem::new(tree, costs, &self.inst.metric.throughput, &self.state.p_prev, curve, z, 1.0 - z);
            let sol = prob.minimize();
            self.step_log.push((sol.y, sol.objective, prob.objective(0.0)));
            sol.p
        };
        let step_cost = costs.iter().enumerate().map(|(u, f)| f * p.on(u)).sum::<f64>()
            + w1_decomposed(&self.inst.metric, &self.state.p_prev, &p, Some(self.inst.dist_at(t)));
        self.state.sc += step_cost;
        self.state.z += constraint_of(&self.inst.metric.throughput, &p);
        self.state.t = t;
        self.state.p_prev = p.clone();
        self.decisions.push(p.clone());
        Ok(p)
    }
}

/// Mandatory trigger evaluated before slot `t`, i.e. after slot `t - 1`.
fn inst_trigger(inst: &Instance, t: usize, z: f64) -> bool {
    crate::model::mandatory_allocation_triggered(inst, t - 1, z)
}

fn drive<A: OnlineAlgorithm>(alg: &mut A, inst: &Instance) -> Result<()> {
    for row in &inst.costs {
        alg.step(row)?;
    }
    Ok(())
}

pub fn run_pcm(inst: &Instance, seed: u64) -> Result<RunResult> {
    let mut alg = Pcm::new(inst, seed, false)?;
    drive(&mut alg, inst)?;
    alg.finish()
}

/// PCM with the tree rebuilt from the distances in force at each slot.
pub fn run_pcm_tv(inst: &Instance, seed: u64) -> Result<RunResult> {
    let mut alg = Pcm::new(inst, seed, inst.tv_dist.is_some())?;
    drive(&mut alg, inst)?;
    let mut r = alg.finish()?;
    r.meta.alg = "pcm_tv".into();
    Ok(r)
}

/// Left and right sides of the consistency constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintEval {
    pub lhs: f64,
    pub rhs: f64,
}

impl ConstraintEval {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Evaluates the consistency constraint for candidate `p` at slot `t`.
///
/// `state` holds the totals through slot `t - 1`, except that `adv_cost` and
/// `a_util` already include the advice of slot `t`.
pub fn consistency_constraint(
    state: &OnlineState,
    inst: &Instance,
    t: usize,
    p: &StateDistribution,
    a_t: &StateDistribution,
    epsilon: f64,
    time_varying: bool,
) -> Result<ConstraintEval> {
    let c = &inst.metric.throughput;
    let (l, u, tau) = (inst.lower, inst.upper, inst.tau());
    let d = inst.dist_at(t);
    let cp = constraint_of(c, p);
    let ca = constraint_of(c, a_t);
    let f: f64 = inst.costs[t - 1].iter().enumerate().map(|(i, f)| f * p.on(i)).sum();
    let hedge = if time_varying { wbar1(&inst.metric, p, a_t, inst.d_bound())? } else { w1_decomposed(&inst.metric, p, a_t, Some(d)) };
    let lhs = state.sc
        + f
        + w1_decomposed(&inst.metric, p, &state.p_prev, Some(d))
        + hedge
        + tau * ca
        + (1.0 - state.z - cp) * l
        + (state.a_util - state.z - cp).max(0.0) * (u - l);
    let rhs = (1.0 + epsilon) * (state.adv_cost + tau * ca + (1.0 - state.a_util) * l);
    Ok(ConstraintEval { lhs, rhs })
}

/// Whether the constraint holds, with its slack `rhs - lhs`.
pub fn consistency_constraint_satisfied(
    state: &OnlineState,
    inst: &Instance,
    t: usize,
    p: &StateDistribution,
    a_t: &StateDistribution,
    epsilon: f64,
    time_varying: bool,
) -> Result<(bool, f64)> {
    let e = consistency_constraint(state, inst, t, p, a_t, epsilon, time_varying)?;
    Ok((e.holds(), e.slack()))
}

/// How ST-CLIP completes the workload once the deadline forces it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MandatoryMode {
    /// The cost-agnostic controller shared with PCM.
    Controller,
    /// Track the advice, topping up OFF mass only as far as the deadline requires.
    FollowAdvice,
}

/// Consistency-limited pseudo-cost minimization.
#[derive(Debug, Clone)]
pub struct StClip {
    inst: Instance,
    pub params: PseudoCostParams,
    pub epsilon: f64,
    pub state: OnlineState,
    advice: Advice,
    trees: TreeCache,
    time_varying: bool,
    mandatory: bool,
    pub mandatory_mode: MandatoryMode,
    decisions: Vec<StateDistribution>,
    seed: u64,
    min_slack: f64,
    min_advice_slack: f64,
}

impl StClip {
    pub fn new(inst: &Instance, advice: Advice, epsilon: f64, seed: u64, time_varying: bool) -> Result<StClip> {
        if advice.decisions.len() != inst.horizon {
            return Err(SoadError::LengthMismatch { expected: inst.horizon, got: advice.decisions.len() });
        }
        let params = PseudoCostParams::with_epsilon(inst.upper, inst.lower, inst.d_bound(), inst.tau(), epsilon)?;
        if !(epsilon > 0.0 && epsilon <= params.eta - 1.0 + 1e-12) {
            return Err(SoadError::Domain(format!("epsilon {epsilon} outside (0, eta - 1 = {}]", params.eta - 1.0)));
        }
        Ok(StClip {
            inst: inst.clone(),
            params,
            epsilon,
            state: OnlineState::new(inst),
            advice,
            trees: TreeCache::new(seed, time_varying && inst.tv_dist.is_some()),
            time_varying: time_varying && is_time_varying(inst),
            mandatory: false,
            mandatory_mode: MandatoryMode::FollowAdvice,
            decisions: Vec::new(),
            seed,
            min_slack: f64::INFINITY,
            min_advice_slack: f64::INFINITY,
        })
    }

    pub fn decisions(&self) -> &[StateDistribution] {
        &self.decisions
    }

    pub fn finish(self) -> Result<RunResult> {
        let mut r = expected_run_cost(&self.inst, &self.decisions)?;
        r.meta = RunMeta {
            alg: "stclip".into(),
            eta: Some(self.params.eta),
            gamma: self.params.gamma_eps,
            epsilon: Some(self.epsilon),
            seed: Some(self.seed),
            min_slack: self.min_slack.is_finite().then_some(self.min_slack),
            min_advice_slack: self.min_advice_slack.is_finite().then_some(self.min_advice_slack),
        };
        Ok(r)
    }

    fn slack(&self, t: usize, p: &StateDistribution, a_t: &StateDistribution) -> Result<f64> {
        Ok(consistency_constraint(&self.state, &self.inst, t, p, a_t, self.epsilon, self.time_varying)?.slack())
    }

    /// Constrained step: best robust decision whose consistency slack is
    /// nonnegative, searched along the unconstrained path and along the
    /// segment toward the advice.
    fn constrained(&mut self, t: usize, prob: &StepProblem, free: &StateDistribution, free_y: f64, a_t: &StateDistribution) -> Result<StateDistribution> {
        let free_slack = self.slack(t, free, a_t)?;
        let adv_slack = self.slack(t, a_t, a_t)?;
        self.min_advice_slack = self.min_advice_slack.min(adv_slack);
        if free_slack >= 0.0 {
            self.min_slack = self.min_slack.min(free_slack);
            return Ok(free.clone());
        }
        let mut best: Option<(f64, StateDistribution, f64)> = None;
        let offer = |obj: f64, p: StateDistribution, s: f64, best: &mut Option<(f64, StateDistribution, f64)>| {
            if best.as_ref().map_or(true, |b| obj < b.0) {
                *best = Some((obj, p, s));
            }
        };

        // Along the path p(y).
        let mut grid: Vec<f64> = prob.breakpoints();
        grid.extend((0..=SLACK_SCAN).map(|i| prob.y_max * i as f64 / SLACK_SCAN as f64));
        grid.push(free_y);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        let slacks: Vec<f64> = grid.iter().map(|&y| self.slack(t, &prob.decode(y), a_t)).collect::<Result<_>>()?;
        // Least violating point seen, used when nothing is feasible.
        let mut fallback = (f64::NEG_INFINITY, a_t.clone());
        for (i, &y) in grid.iter().enumerate() {
            if slacks[i] > fallback.0 {
                fallback = (slacks[i], prob.decode(y));
            }
        }
        let mut feasible_y = Vec::new();
        for i in 0..grid.len() {
            if slacks[i] >= 0.0 {
                feasible_y.push(grid[i]);
            }
            if i + 1 < grid.len() && (slacks[i] >= 0.0) != (slacks[i + 1] >= 0.0) {
                let (mut good, mut bad) = if slacks[i] >= 0.0 { (grid[i], grid[i + 1]) } else { (grid[i + 1], grid[i]) };
                for _ in 0..60 {
                    let mid = 0.5 * (good + bad);
                    if self.slack(t, &prob.decode(mid), a_t)? >= 0.0 {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                }
                feasible_y.push(good);
            }
        }
        for &y in &feasible_y {
            let p = prob.decode(y);
            let s = self.slack(t, &p, a_t)?;
            if s >= 0.0 {
                offer(prob.objective(y), p, s, &mut best);
            }
        }

        // Along the segment from the unconstrained point to the advice, cut
        // down to the remaining budget.
        let budget = 1.0 - self.state.z;
        let c = &self.inst.metric.throughput;
        let target = fit_budget(a_t, c, budget);
        let target_slack = if target == *a_t { adv_slack } else { self.slack(t, &target, a_t)? };
        if target_slack >= 0.0 {
            let (mut bad, mut good) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (bad + good);
                if self.slack(t, &free.mix(&target, mid), a_t)? >= 0.0 {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            let p = free.mix(&target, good);
            let s = self.slack(t, &p, a_t)?;
            if s >= 0.0 {
                let tree = self.trees.at(&self.inst, t);
                let obj = step_objective(tree, &self.inst.costs[t - 1], c, &self.state.p_prev, &p, &prob.curve, prob.z0)?;
                offer(obj, p, s, &mut best);
            }
        }

        match best {
            Some((_, p, s)) => {
                self.min_slack = self.min_slack.min(s);
                Ok(p)
            }
            None => {
                if target_slack >= fallback.0 {
                    fallback = (target_slack, target);
                }
                self.min_slack = self.min_slack.min(fallback.0);
                Ok(fallback.1)
            }
        }
    }

    /// Advances one slot with the advice for that slot taken from the stored advice.
    fn step_inner(&mut self, costs: &[f64]) -> Result<StateDistribution> {
        let t = self.state.t + 1;
        if t > self.inst.horizon {
            return Err(SoadError::SlotOutOfRange { t, horizon: self.inst.horizon });
        }
        self.inst.costs[t - 1] = costs.to_vec();
        let c = self.inst.metric.throughput.clone();
        let a_t = self.advice.decisions[t - 1].clone();
        let d = self.inst.dist_at(t).to_vec();
        self.state.adv_cost += costs.iter().enumerate().map(|(u, f)| f * a_t.on(u)).sum::<f64>()
            + w1_decomposed(&self.inst.metric, &a_t, &self.state.a_prev, Some(&d));
        self.state.a_util += constraint_of(&c, &a_t);
        let z = self.state.z;
        if !self.mandatory && inst_trigger(&self.inst, t, z) {
            self.mandatory = true;
        }
        let mut robust_y = 0.0;
        let p = if 1.0 - z <= DONE_TOL {
            finished(&self.inst, t, &self.state.p_prev)
        } else if self.mandatory {
            match self.mandatory_mode {
                MandatoryMode::Controller => mandatory_step(&self.inst, t, z, &self.state.p_prev)?,
                MandatoryMode::FollowAdvice => follow_advice_step(&self.inst, t, z, self.state.a_util, &self.state.p_prev, &a_t)?,
            }
        } else {
            let curve = self.params.curve(Variant::Clip);
            let tree = self.trees.at(&self.inst, t).to_vec();
            let prob = StepProblem::new(&tree, costs, &c, &self.state.p_prev, curve, self.state.rho, 1.0 - z);
            let free = prob.minimize();
            robust_y = free.y;
            self.constrained(t, &prob, &free.p, free.y, &a_t)?
        };
        let cp = constraint_of(&c, &p);
        self.state.sc += costs.iter().enumerate().map(|(u, f)| f * p.on(u)).sum::<f64>()
            + w1_decomposed(&self.inst.metric, &self.state.p_prev, &p, Some(&d));
        self.state.z += cp;
        self.state.rho += robust_y.min(cp);
        self.state.t = t;
        self.state.p_prev = p.clone();
        self.state.a_prev = a_t;
        self.decisions.push(p.clone());
        Ok(p)
    }
}

/// `a` with its ON mass scaled down so that its utilization is at most `budget`.
fn fit_budget(a: &StateDistribution, c: &[f64], budget: f64) -> StateDistribution {
    let ca = constraint_of(c, a);
    if ca <= budget {
        return a.clone();
    }
    let keep = (budget / ca).max(0.0);
    a.mix(&a.collapse_off(), 1.0 - keep)
}

/// Mandatory step that tracks the advice. The slot completes the advice's
/// lead `a_util - z` (never less than what the deadline forces, never more
/// than the remaining need): the advice is cut down to that amount, or
/// topped up by turning its OFF mass ON at the cheapest reachable points and
/// then by shifting ON mass to the highest-throughput point.
fn follow_advice_step(
    inst: &Instance,
    t: usize,
    z: f64,
    a_util: f64,
    p_prev: &StateDistribution,
    a_t: &StateDistribution,
) -> Result<StateDistribution> {
    let n = inst.n();
    let c = &inst.metric.throughput;
    let need = 1.0 - z;
    if need <= DONE_TOL {
        return Ok(finished(inst, t, p_prev));
    }
    let mut best = 0;
    for u in 1..n {
        if c[u] > c[best] {
            best = u;
        }
    }
    let must = need - (inst.horizon - t) as f64 * c[best];
    let target = (a_util - z).max(must).min(need);
    let mut p = fit_budget(a_t, c, target.max(0.0));
    let mut short = target - constraint_of(c, &p);
    if short > 0.0 {
        // Each OFF source turns ON at its cheapest destination per unit of
        // completion; sources are used in order of that unit price.
        let costs = &inst.costs[t - 1];
        let d = inst.dist_at(t);
        let mut offers: Vec<(f64, usize, usize)> = (0..n)
            .filter(|&u| p.off(u) > 0.0)
            .map(|u| {
                let unit = |v: usize| (costs[v] + ground_cost(&inst.metric, State::Off(u), State::On(v), Some(d))) / c[v];
                let v = (0..n).min_by(|&a, &b| unit(a).total_cmp(&unit(b)).then(a.cmp(&b))).unwrap_or(u);
                (unit(v), u, v)
            })
            .collect();
        offers.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, u, v) in offers {
            if short <= 0.0 {
                break;
            }
            let moved = p.off(u).min(short / c[v]);
            p.probs[v] += moved;
            p.probs[n + u] -= moved;
            short -= moved * c[v];
        }
    }
    let mut deficit = must - constraint_of(c, &p);
    if deficit > 0.0 {
        let mut order: Vec<usize> = (0..n).filter(|&u| p.on(u) > 0.0 && c[u] < c[best]).collect();
        order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
        for u in order {
            if deficit <= 0.0 {
                break;
            }
            let moved = p.on(u).min(deficit / (c[best] - c[u]));
            p.probs[u] -= moved;
            p.probs[best] += moved;
            deficit -= moved * (c[best] - c[u]);
        }
    }
    if deficit > need * SIMPLEX_TOL {
        return mandatory_step(inst, t, z, p_prev);
    }
    Ok(p)
}

impl OnlineAlgorithm for StClip {
    fn step(&mut self, costs: &[f64]) -> Result<StateDistribution> {
        self.step_inner(costs)
    }
}

pub fn run_stclip(inst: &Instance, advice: &Advice, epsilon: f64, seed: u64) -> Result<RunResult> {
    let mut alg = StClip::new(inst, advice.clone(), epsilon, seed, false)?;
    drive(&mut alg, inst)?;
    alg.finish()
}

/// ST-CLIP with per-slot trees and, when distances vary, the worst-case
/// transport distance in the hedging term of the constraint.
pub fn run_stclip_tv(inst: &Instance, advice: &Advice, epsilon: f64, seed: u64) -> Result<RunResult> {
    let mut alg = StClip::new(inst, advice.clone(), epsilon, seed, true)?;
    drive(&mut alg, inst)?;
    let mut r = alg.finish()?;
    r.meta.alg = "stclip_tv".into();
    Ok(r)
}
