//! Exact solver for one pseudo-cost minimization step.
//!
//! A step minimizes `f(p) + W_tree(p, q) - int_{z0}^{z0 + c(p)} psi` over
//! distributions `p` with `c(p) <= budget`, where `q` is the previous
//! decision and `W_tree` is transport cost under tree distances. Writing the
//! movement as a transport plan out of `q`, every source state ships its mass
//! to destinations with unit value `(c_d, dist(s, d) + f_d)`. For fixed
//! purchased mass `y` the best plan follows the lower convex hull of those
//! options per source, and the hulls merge into one piecewise-linear convex
//! value `V(y)`. The outer problem `V(y) - int psi` is then one-dimensional
//! and is minimized exactly over breakpoints and stationary points.

use super::pseudo::ExpCurve;
use crate::embedding::{phi, KVector, TreeEmbedding};
use crate::error::Result;
use crate::model::{Instance, StateDistribution};

const MASS_EPS: f64 = 1e-15;

#[derive(Debug, Clone, Copy)]
struct Vertex {
    c: f64,
    g: f64,
    dest: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    source: usize,
    slope: f64,
    len: f64,
}

/// One step of the minimization, prepared for evaluation at any `y`.
#[derive(Debug, Clone)]
pub struct StepProblem {
    n: usize,
    q: Vec<f64>,
    hulls: Vec<Vec<Vertex>>,
    segments: Vec<Segment>,
    base: f64,
    pub curve: ExpCurve,
    pub z0: f64,
    pub budget: f64,
    /// Largest reachable `c(p)`, capped by the budget.
    pub y_max: f64,
}

/// Minimizer of a step and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution {
    pub p: StateDistribution,
    pub y: f64,
    pub objective: f64,
}

impl StepProblem {
    /// `tree_dist` is the `2n x 2n` state distance matrix, `cost` the service
    /// coefficients of the slot and `throughput` the per-point `c_u`.
    pub fn new(
        tree_dist: &[Vec<f64>],
        cost: &[f64],
        throughput: &[f64],
        q: &StateDistribution,
        curve: ExpCurve,
        z0: f64,
        budget: f64,
    ) -> StepProblem {
        let n = throughput.len();
        let m = 2 * n;
        let mut hulls = vec![Vec::new(); m];
        let mut segments = Vec::new();
        let mut base = 0.0;
        let mut reach = 0.0;
        for s in 0..m {
            let mass = q.probs[s];
            if mass <= MASS_EPS {
                continue;
            }
            let hull = source_hull(&tree_dist[s], cost, throughput);
            base += mass * hull[0].g;
            for w in hull.windows(2) {
                segments.push(Segment { source: s, slope: (w[1].g - w[0].g) / (w[1].c - w[0].c), len: mass * (w[1].c - w[0].c) });
            }
            reach += mass * hull.last().unwrap().c;
            hulls[s] = hull;
        }
        // Stable sort keeps per-source order and breaks slope ties by source index.
        segments.sort_by(|a, b| a.slope.partial_cmp(&b.slope).unwrap().then(a.source.cmp(&b.source)));
        let budget = budget.max(0.0);
        StepProblem { n, q: q.probs.clone(), hulls, segments, base, curve, z0, budget, y_max: reach.min(budget) }
    }

    /// Optimal movement plus service cost at purchased mass `y`.
    pub fn value(&self, y: f64) -> f64 {
        let mut v = self.base;
        let mut left = y;
        for seg in &self.segments {
            if left <= 0.0 {
                break;
            }
            let take = seg.len.min(left);
            v += seg.slope * take;
            left -= take;
        }
        v
    }

    /// Full objective at `y`.
    pub fn objective(&self, y: f64) -> f64 {
        self.value(y) - self.curve.integral(self.z0, self.z0 + y)
    }

    /// Distribution attaining `value(y)`.
    pub fn decode(&self, y: f64) -> StateDistribution {
        let m = 2 * self.n;
        // Progress of each source along its hull: (segments fully taken, fraction of next).
        let mut full = vec![0usize; m];
        let mut frac = vec![0.0; m];
        let mut left = y;
        for seg in &self.segments {
            if left <= 0.0 {
                break;
            }
            if seg.len <= left {
                full[seg.source] += 1;
                left -= seg.len;
            } else {
                frac[seg.source] = left / seg.len;
                left = 0.0;
            }
        }
        let mut probs = vec![0.0; m];
        for s in 0..m {
            let mass = self.q[s];
            if mass <= MASS_EPS {
                continue;
            }
            let hull = &self.hulls[s];
            let k = full[s];
            if k + 1 < hull.len() && frac[s] > 0.0 {
                probs[hull[k].dest] += mass * (1.0 - frac[s]);
                probs[hull[k + 1].dest] += mass * frac[s];
            } else {
                probs[hull[k.min(hull.len() - 1)].dest] += mass;
            }
        }
        StateDistribution { probs }
    }

    /// Breakpoints of `value` inside `[0, y_max]`, including both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut acc = 0.0;
        for seg in &self.segments {
            acc += seg.len;
            if acc >= self.y_max {
                break;
            }
            out.push(acc);
        }
        out.push(self.y_max);
        out
    }

    /// Exact minimizer of the objective over `y in [lo, hi]` (clamped to
    /// `[0, y_max]`). Ties go to the smallest `y`.
    pub fn minimize_on(&self, lo: f64, hi: f64) -> StepSolution {
        let lo = lo.max(0.0).min(self.y_max);
        let hi = hi.min(self.y_max).max(lo);
        let mut cands = vec![lo, hi];
        let mut a = 0.0;
        for seg in &self.segments {
            let b = a + seg.len;
            if a > hi {
                break;
            }
            if b >= lo {
                cands.push(a.max(lo));
                cands.push(b.min(hi));
                if let Some(z) = self.curve.inverse(seg.slope) {
                    let y = z - self.z0;
                    if y > a.max(lo) && y < b.min(hi) {
                        cands.push(y);
                    }
                }
            }
            a = b;
        }
        cands.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut best_y = lo;
        let mut best = self.objective(lo);
        for &y in &cands {
            let v = self.objective(y);
            if v < best - 1e-14 * (1.0 + best.abs()) {
                best = v;
                best_y = y;
            }
        }
        StepSolution { p: self.decode(best_y), y: best_y, objective: best }
    }

    pub fn minimize(&self) -> StepSolution {
        self.minimize_on(0.0, self.y_max)
    }
}

/// Lower convex hull of `(c_d, dist(s,d) + f_d)` over destinations, from
/// `c = 0` to the largest throughput. Equal `c` keeps the cheapest option,
/// and equal cost keeps the lowest state index.
fn source_hull(dist_row: &[f64], cost: &[f64], throughput: &[f64]) -> Vec<Vertex> {
    let n = throughput.len();
    let mut pts: Vec<Vertex> = (0..2 * n)
        .map(|d| {
            let (c, f) = if d < n { (throughput[d], cost[d]) } else { (0.0, 0.0) };
            Vertex { c, g: dist_row[d] + f, dest: d }
        })
        .collect();
    pts.sort_by(|a, b| a.c.partial_cmp(&b.c).unwrap().then(a.g.partial_cmp(&b.g).unwrap()).then(a.dest.cmp(&b.dest)));
    pts.dedup_by(|later, earlier| later.c == earlier.c);
    let mut hull: Vec<Vertex> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b unless it lies strictly below the chord from a to p.
            let cross = (b.c - a.c) * (p.g - a.g) - (b.g - a.g) * (p.c - a.c);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Builds the step problem for slot `t` (1-based) from the embedding.
pub fn step_problem(
    emb: &TreeEmbedding,
    inst: &Instance,
    t: usize,
    p_prev: &StateDistribution,
    curve: ExpCurve,
    z0: f64,
    budget: f64,
) -> StepProblem {
    let tree = emb.state_distance_matrix();
    StepProblem::new(&tree, &inst.costs[t - 1], &inst.metric.throughput, p_prev, curve, z0, budget)
}

/// Solves one step and returns the minimizer in `K`.
pub fn pseudo_cost_minimize(
    emb: &TreeEmbedding,
    inst: &Instance,
    t: usize,
    p_prev: &StateDistribution,
    curve: ExpCurve,
    z0: f64,
    budget: f64,
) -> Result<(KVector, StepSolution)> {
    let sol = step_problem(emb, inst, t, p_prev, curve, z0, budget).minimize();
    Ok((phi(emb, &sol.p), sol))
}

/// Objective of an arbitrary distribution `p` in the step.
pub fn step_objective(
    tree_dist: &[Vec<f64>],
    cost: &[f64],
    throughput: &[f64],
    q: &StateDistribution,
    p: &StateDistribution,
    curve: &ExpCurve,
    z0: f64,
) -> Result<f64> {
    let n = throughput.len();
    let (moved, _) = crate::transport::min_cost_transport(&q.probs, &p.probs, tree_dist)?;
    let service: f64 = (0..n).map(|u| cost[u] * p.probs[u]).sum();
    let y: f64 = (0..n).map(|u| throughput[u] * p.probs[u]).sum();
    Ok(service + moved - curve.integral(z0, z0 + y))
}
