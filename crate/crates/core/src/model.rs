//! Domain types for SOAD instances and decisions.
//!
//! The state set has `2n` elements. `ON(u)` lives at index `u` and `OFF(u)`
//! at index `n + u`. Slots are numbered `1..=T` in the public API and stored
//! zero-based.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SoadError};

/// Tolerance for simplex membership and feasibility checks.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Tolerance for the triangle inequality and other metric checks.
pub const METRIC_TOL: f64 = 1e-9;
/// Tolerance used by linearity and other exact-arithmetic property tests.
pub const PROPERTY_TOL: f64 = 1e-12;

/// A state in the `2n`-element state set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    On(usize),
    Off(usize),
}

impl State {
    pub fn index(self, n: usize) -> usize {
        match self {
            State::On(u) => u,
            State::Off(u) => n + u,
        }
    }

    pub fn from_index(i: usize, n: usize) -> State {
        if i < n {
            State::On(i)
        } else {
            State::Off(i - n)
        }
    }

    pub fn point(self) -> usize {
        match self {
            State::On(u) | State::Off(u) => u,
        }
    }
}

/// Points with pairwise distances, throughputs and switching factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpace {
    pub n: usize,
    pub dist: Vec<Vec<f64>>,
    pub throughput: Vec<f64>,
    pub switch_beta: Vec<f64>,
}

impl MetricSpace {
    pub fn new(dist: Vec<Vec<f64>>, throughput: Vec<f64>, switch_beta: Vec<f64>) -> Result<Self> {
        let n = throughput.len();
        let m = MetricSpace { n, dist, throughput, switch_beta };
        let problems = m.violations();
        if problems.is_empty() {
            Ok(m)
        } else {
            Err(SoadError::InvalidInstance(problems.join("; ")))
        }
    }

    /// Maximum normalized distance `d(u,v) / min(c_u, c_v)` over `u != v`.
    pub fn d_bound(&self) -> f64 {
        normalized_diameter(&self.dist, &self.throughput)
    }

    /// Maximum normalized switching factor `beta_u / c_u`.
    pub fn tau(&self) -> f64 {
        self.switch_beta
            .iter()
            .zip(&self.throughput)
            .map(|(b, c)| b / c)
            .fold(0.0, f64::max)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n == 0 {
            out.push("metric has no points".to_string());
            return out;
        }
        if self.throughput.len() != self.n || self.switch_beta.len() != self.n {
            out.push("throughput/beta length differs from n".to_string());
            return out;
        }
        for (u, &c) in self.throughput.iter().enumerate() {
            if !(c > 0.0 && c <= 1.0) {
                out.push(format!("throughput at {u} outside (0,1]: {c}"));
            }
        }
        for (u, &b) in self.switch_beta.iter().enumerate() {
            if !(b >= 0.0) || !b.is_finite() {
                out.push(format!("negative switching factor at {u}: {b}"));
            }
        }
        out.extend(metric_violations(&self.dist, self.n, "dist"));
        out
    }
}

/// Checks shape, symmetry, zero diagonal, nonnegativity and triangle inequality.
pub fn metric_violations(dist: &[Vec<f64>], n: usize, label: &str) -> Vec<String> {
    let mut out = Vec::new();
    if dist.len() != n || dist.iter().any(|r| r.len() != n) {
        out.push(format!("{label} is not {n}x{n}"));
        return out;
    }
    for u in 0..n {
        if dist[u][u].abs() > METRIC_TOL {
            out.push(format!("{label} diagonal nonzero at {u}"));
        }
        for v in 0..n {
            let d = dist[u][v];
            if !(d >= 0.0) || !d.is_finite() {
                out.push(format!("{label} negative or non-finite at ({u},{v})"));
            }
            if (d - dist[v][u]).abs() > METRIC_TOL {
                out.push(format!("{label} asymmetric at ({u},{v})"));
            }
        }
    }
    for u in 0..n {
        for v in 0..n {
            for w in 0..n {
                if dist[u][w] > dist[u][v] + dist[v][w] + METRIC_TOL {
                    out.push(format!("{label} violates triangle inequality at ({u},{v},{w})"));
                    return out;
                }
            }
        }
    }
    out
}

pub fn normalized_diameter(dist: &[Vec<f64>], throughput: &[f64]) -> f64 {
    let n = throughput.len();
    let mut d = 0.0f64;
    for u in 0..n {
        for v in 0..n {
            if u != v {
                d = d.max(dist[u][v] / throughput[u].min(throughput[v]));
            }
        }
    }
    d
}

/// A full SOAD problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceJson", try_from = "InstanceJson")]
pub struct Instance {
    pub metric: MetricSpace,
    pub horizon: usize,
    pub lower: f64,
    pub upper: f64,
    /// `costs[t-1][u]` is the coefficient of slot `t` at point `u`.
    pub costs: Vec<Vec<f64>>,
    pub start: usize,
    /// Optional per-slot distance matrices, `tv_dist[t-1]`.
    pub tv_dist: Option<Vec<Vec<Vec<f64>>>>,
    /// Declared distance bound. When absent it is derived from the data.
    pub d_declared: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    n: usize,
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "L")]
    l: f64,
    #[serde(rename = "U")]
    u: f64,
    start: usize,
    throughput: Vec<f64>,
    beta: Vec<f64>,
    dist: Vec<Vec<f64>>,
    costs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tv_dist: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    d: Option<f64>,
}

impl From<Instance> for InstanceJson {
    fn from(i: Instance) -> Self {
        InstanceJson {
            n: i.metric.n,
            t: i.horizon,
            l: i.lower,
            u: i.upper,
            start: i.start,
            throughput: i.metric.throughput,
            beta: i.metric.switch_beta,
            dist: i.metric.dist,
            costs: i.costs,
            tv_dist: i.tv_dist,
            d: i.d_declared,
        }
    }
}

impl TryFrom<InstanceJson> for Instance {
    type Error = String;
    fn try_from(j: InstanceJson) -> std::result::Result<Self, String> {
        if j.throughput.len() != j.n || j.beta.len() != j.n {
            return Err(format!("n = {} disagrees with throughput/beta lengths", j.n));
        }
        Ok(Instance {
            metric: MetricSpace { n: j.n, dist: j.dist, throughput: j.throughput, switch_beta: j.beta },
            horizon: j.t,
            lower: j.l,
            upper: j.u,
            costs: j.costs,
            start: j.start,
            tv_dist: j.tv_dist,
            d_declared: j.d,
        })
    }
}

impl Instance {
    pub fn n(&self) -> usize {
        self.metric.n
    }

    /// Distance bound `D`: the declared value, or the largest normalized
    /// distance over the static matrix and every time-varying slice.
    pub fn d_bound(&self) -> f64 {
        if let Some(d) = self.d_declared {
            return d;
        }
        self.observed_d()
    }

    fn observed_d(&self) -> f64 {
        let mut d = self.metric.d_bound();
        if let Some(tv) = &self.tv_dist {
            for slice in tv {
                d = d.max(normalized_diameter(slice, &self.metric.throughput));
            }
        }
        d
    }

    pub fn tau(&self) -> f64 {
        self.metric.tau()
    }

    /// Distance matrix in force during slot `t` (1-based).
    pub fn dist_at(&self, t: usize) -> &[Vec<f64>] {
        match &self.tv_dist {
            Some(tv) if t >= 1 && t <= tv.len() => &tv[t - 1],
            _ => &self.metric.dist,
        }
    }

    /// Copy of the instance with a replaced cost matrix.
    pub fn with_costs(&self, costs: Vec<Vec<f64>>) -> Instance {
        Instance { costs, ..self.clone() }
    }

    pub fn max_throughput(&self) -> f64 {
        self.metric.throughput.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Instance> {
        serde_json::from_str(s).map_err(|e| SoadError::InvalidInstance(e.to_string()))
    }
}

/// Probability vector over the state set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    pub probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let d = StateDistribution { probs };
        d.check()?;
        Ok(d)
    }

    pub fn dirac(n: usize, s: State) -> Self {
        let mut probs = vec![0.0; 2 * n];
        probs[s.index(n)] = 1.0;
        StateDistribution { probs }
    }

    pub fn off_at(n: usize, u: usize) -> Self {
        Self::dirac(n, State::Off(u))
    }

    pub fn n(&self) -> usize {
        self.probs.len() / 2
    }

    pub fn on(&self, u: usize) -> f64 {
        self.probs[u]
    }

    pub fn off(&self, u: usize) -> f64 {
        self.probs[self.n() + u]
    }

    /// Spatial marginal `r_u = p[ON(u)] + p[OFF(u)]`.
    pub fn spatial(&self) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|u| self.probs[u] + self.probs[n + u]).collect()
    }

    pub fn total_on(&self) -> f64 {
        self.probs[..self.n()].iter().sum()
    }

    pub fn check(&self) -> Result<()> {
        if self.probs.len() % 2 != 0 || self.probs.is_empty() {
            return Err(SoadError::InvalidDistribution(format!("odd or empty length {}", self.probs.len())));
        }
        for (i, &x) in self.probs.iter().enumerate() {
            if !(x >= -SIMPLEX_TOL) || !x.is_finite() {
                return Err(SoadError::InvalidDistribution(format!("entry {i} = {x}")));
            }
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(SoadError::InvalidDistribution(format!("sum = {s}")));
        }
        Ok(())
    }

    /// Every ON mass moved to the OFF state of the same point.
    pub fn collapse_off(&self) -> Self {
        let n = self.n();
        let mut probs = vec![0.0; 2 * n];
        for u in 0..n {
            probs[n + u] = self.probs[u] + self.probs[n + u];
        }
        StateDistribution { probs }
    }

    /// Convex combination `(1 - lambda) self + lambda other`.
    pub fn mix(&self, other: &Self, lambda: f64) -> Self {
        StateDistribution {
            probs: self.probs.iter().zip(&other.probs).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect(),
        }
    }

    /// Clips tiny negative round-off and renormalizes.
    pub fn cleaned(mut self) -> Self {
        for x in &mut self.probs {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = self.probs.iter().sum();
        if s > 0.0 {
            for x in &mut self.probs {
                *x /= s;
            }
        }
        self
    }
}

/// Metadata attached to a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub alg: String,
    pub eta: Option<f64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    /// Smallest consistency slack observed at a chosen decision.
    pub min_slack: Option<f64>,
    /// Smallest consistency slack observed at the advice point.
    pub min_advice_slack: Option<f64>,
}

/// Decisions of one run and their cost breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub decisions: Vec<StateDistribution>,
    pub service_cost: f64,
    pub spatial_cost: f64,
    pub temporal_cost: f64,
    /// `z^(0..=T)`.
    pub utilization: Vec<f64>,
    pub objective: f64,
    pub feasible: bool,
    pub meta: RunMeta,
}

/// Validates a slot index and returns its zero-based row.
fn slot_row(inst: &Instance, t: usize) -> Result<usize> {
    if t == 0 || t > inst.horizon || t > inst.costs.len() {
        return Err(SoadError::SlotOutOfRange { t, horizon: inst.horizon });
    }
    Ok(t - 1)
}

/// `f_t(p) = sum_u costs[t][u] p[ON(u)]`.
pub fn service_cost(inst: &Instance, t: usize, p: &StateDistribution) -> Result<f64> {
    let row = slot_row(inst, t)?;
    Ok(inst.costs[row].iter().enumerate().map(|(u, f)| f * p.on(u)).sum())
}

/// `c(p) = sum_u c_u p[ON(u)]`.
pub fn constraint_value(inst: &Instance, p: &StateDistribution) -> f64 {
    constraint_of(&inst.metric.throughput, p)
}

pub fn constraint_of(throughput: &[f64], p: &StateDistribution) -> f64 {
    throughput.iter().enumerate().map(|(u, c)| c * p.on(u)).sum()
}

/// True iff `(T - (t+1)) c_u < 1 - z` for every point.
pub fn mandatory_allocation_triggered(inst: &Instance, t: usize, z: f64) -> bool {
    let remaining = inst.horizon as f64 - (t as f64 + 1.0);
    inst.metric.throughput.iter().all(|&c| remaining * c < 1.0 - z)
}

/// Checks every instance invariant and returns the violations found.
pub fn validate(inst: &Instance) -> std::result::Result<(), Vec<String>> {
    let mut out = inst.metric.violations();
    let n = inst.metric.n;
    if !out.is_empty() {
        return Err(out);
    }
    if inst.horizon == 0 {
        out.push("horizon must be positive".to_string());
    }
    if !(inst.lower > 0.0) || !(inst.lower <= inst.upper) || !inst.upper.is_finite() {
        out.push(format!("bounds must satisfy 0 < L <= U, got L={} U={}", inst.lower, inst.upper));
    }
    if inst.start >= n {
        out.push(format!("start {} out of range", inst.start));
    }
    if inst.costs.len() != inst.horizon {
        out.push(format!("costs has {} rows, expected {}", inst.costs.len(), inst.horizon));
    }
    let tol = SIMPLEX_TOL;
    for (t, row) in inst.costs.iter().enumerate() {
        if row.len() != n {
            out.push(format!("costs row {} has {} entries", t + 1, row.len()));
            continue;
        }
        for (u, &f) in row.iter().enumerate() {
            let c = inst.metric.throughput[u];
            if f < c * inst.lower * (1.0 - tol) - tol {
                out.push(format!("cost below L bound at ({},{})", t + 1, u));
            }
            if f > c * inst.upper * (1.0 + tol) + tol {
                out.push(format!("cost above U bound at ({},{})", t + 1, u));
            }
        }
    }
    if let Some(tv) = &inst.tv_dist {
        if tv.len() != inst.horizon {
            out.push(format!("tv_dist has {} slices, expected {}", tv.len(), inst.horizon));
        }
        for (t, slice) in tv.iter().enumerate() {
            out.extend(metric_violations(slice, n, &format!("tv_dist[{}]", t + 1)));
        }
    }
    let d = inst.d_bound();
    if inst.d_declared.is_some() && out.is_empty() {
        let observed = inst.observed_d();
        if observed > d * (1.0 + tol) + tol {
            out.push(format!("normalized distance {observed} exceeds D = {d}"));
        }
    }
    let tau = inst.tau();
    if d + 2.0 * tau > (inst.upper - inst.lower) * (1.0 + tol) + tol {
        out.push(format!("D + 2τ > U − L ({} + 2·{} > {})", d, tau, inst.upper - inst.lower));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}
