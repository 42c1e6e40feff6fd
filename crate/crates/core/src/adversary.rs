//! Adaptive lower-bound instances on star metrics and advice generators.
//!
//! The y-adversaries feed an online algorithm one slot at a time. During
//! Stage 1 good prices `Down^i = U - i sigma` appear only at points the
//! algorithm has not touched; any point that receives ON mass turns inactive
//! and sees `Up = U` from then on. Families differ in what follows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{Advice, OnlineAlgorithm};
use crate::baselines::{solve_max_cost, solve_offline_optimal};
use crate::error::{Result, SoadError};
use crate::model::{Instance, MetricSpace, State, StateDistribution};

/// ON mass above this marks a point as touched.
const TOUCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    G,
    A,
    Aprime,
}

impl std::str::FromStr for Family {
    type Err = SoadError;
    fn from_str(s: &str) -> Result<Family> {
        match s {
            "G" | "g" => Ok(Family::G),
            "A" | "a" => Ok(Family::A),
            "Aprime" | "aprime" | "A'" => Ok(Family::Aprime),
            _ => Err(SoadError::Domain(format!("unknown family {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdversaryParams {
    pub family: Family,
    pub y: f64,
    pub m: usize,
    pub n: usize,
    pub c: f64,
    pub mu: usize,
    pub upper: f64,
    pub lower: f64,
    pub d: f64,
    pub tau: f64,
}

impl AdversaryParams {
    /// Defaults: five points, `c = 1/20`, `mu = 20`, `m = 50`.
    pub fn new(family: Family, y: f64, upper: f64, lower: f64, d: f64, tau: f64) -> AdversaryParams {
        AdversaryParams { family, y, m: 50, n: 5, c: 1.0 / 20.0, mu: 20, upper, lower, d, tau }
    }

    pub fn sigma(&self) -> f64 {
        (self.upper - self.lower) / self.m as f64
    }

    /// Index `m_y` with `Down^{m_y} = y`.
    pub fn m_y(&self) -> usize {
        ((self.upper - self.y) / self.sigma()).round() as usize
    }

    fn down(&self, i: usize) -> f64 {
        self.upper - i as f64 * self.sigma()
    }

    fn check(&self) -> Result<()> {
        if !(self.y >= self.lower - 1e-12 && self.y <= self.upper + 1e-12) || self.m < 2 || self.n < 2 || self.mu == 0 {
            return Err(SoadError::Domain(format!("invalid adversary parameters {self:?}")));
        }
        if self.c * (self.mu as f64) < 1.0 - 1e-12 {
            return Err(SoadError::Domain("mu * c must reach 1".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        let (mu, my) = (self.mu, self.m_y());
        match self.family {
            Family::G => mu * my + mu,
            Family::A => mu * my + 1 + (2 * my).saturating_sub(1) + (mu - 1) + mu,
            Family::Aprime => mu * my + 1 + 1 + 1 + (mu - 1) + mu,
        }
    }
}

/// Star metric with all pairwise normalized distances equal to `D`.
pub fn star_metric(n: usize, c: f64, d: f64, tau: f64) -> Result<MetricSpace> {
    let dist = (0..n).map(|u| (0..n).map(|v| if u == v { 0.0 } else { d * c }).collect()).collect();
    MetricSpace::new(dist, vec![c; n], vec![tau * c; n])
}

/// Instance with the adversary's horizon and `Up` everywhere.
pub fn adversary_skeleton(params: &AdversaryParams) -> Result<Instance> {
    params.check()?;
    let metric = star_metric(params.n, params.c, params.d, params.tau)?;
    let t = params.horizon();
    Ok(Instance {
        metric,
        horizon: t,
        lower: params.lower,
        upper: params.upper,
        costs: vec![vec![params.c * params.upper; params.n]; t],
        start: 0,
        tv_dist: None,
        d_declared: Some(params.d),
    })
}

/// What the adversary shows at the start point during Stage 2 and after.
fn tail_prices(params: &AdversaryParams) -> Vec<f64> {
    let (mu, my) = (params.mu, params.m_y());
    let (u, y) = (params.upper, params.down(my));
    let mut out = Vec::new();
    match params.family {
        Family::G => {}
        Family::A => {
            out.push(u);
            for i in 1..=my {
                out.push(params.down(i));
                if i < my {
                    out.push(u);
                }
            }
            out.extend(std::iter::repeat(y).take(mu - 1));
        }
        Family::Aprime => {
            out.push(u);
            out.push(u);
            out.push(y);
            out.extend(std::iter::repeat(y).take(mu - 1));
        }
    }
    out.extend(std::iter::repeat(u).take(mu));
    out
}

/// Builds the instance adaptively against `probe`, which must be a fresh
/// algorithm created on `adversary_skeleton(params)`.
pub fn generate_y_adversary(params: &AdversaryParams, probe: &mut dyn OnlineAlgorithm) -> Result<Instance> {
    let mut inst = adversary_skeleton(params)?;
    let (n, c, mu, my) = (params.n, params.c, params.mu, params.m_y());
    let s = inst.start;
    let mut active = vec![true; n];
    active[s] = false;
    let mut t = 0;
    for i in 1..=my {
        for _ in 0..mu {
            let row: Vec<f64> = (0..n).map(|u| c * if active[u] { params.down(i) } else { params.upper }).collect();
            let p = probe.step(&row)?;
            check_probe(&p, n)?;
            for u in 0..n {
                if u != s && p.on(u) > TOUCH_TOL {
                    active[u] = false;
                }
            }
            inst.costs[t] = row;
            t += 1;
        }
    }
    for price in tail_prices(params) {
        let mut row = vec![c * params.upper; n];
        row[s] = c * price;
        let p = probe.step(&row)?;
        check_probe(&p, n)?;
        inst.costs[t] = row;
        t += 1;
    }
    debug_assert_eq!(t, inst.horizon);
    Ok(inst)
}

fn check_probe(p: &StateDistribution, n: usize) -> Result<()> {
    if p.probs.len() != 2 * n {
        return Err(SoadError::LengthMismatch { expected: 2 * n, got: p.probs.len() });
    }
    p.check()
}

/// First slot (1-based) at which the start point shows `y` in Stage 2.
pub fn first_y_slot(params: &AdversaryParams) -> usize {
    let stage1 = params.mu * params.m_y();
    match params.family {
        Family::G => stage1 + 1,
        Family::A => stage1 + 1 + (2 * params.m_y()).saturating_sub(1),
        Family::Aprime => stage1 + 3,
    }
}

/// Advice that idles OFF at the start and runs there for the final `mu` slots.
pub fn inactive_advice(inst: &Instance, mu: usize) -> Result<Advice> {
    let n = inst.n();
    let t = inst.horizon;
    let d = (1..=t)
        .map(|k| if k + mu > t { StateDistribution::dirac(n, State::On(inst.start)) } else { StateDistribution::off_at(n, inst.start) })
        .collect();
    Advice::new(d, &inst.metric.throughput)
}

/// Advice that idles until the start point shows `y`, then runs there for `mu` slots.
pub fn good_advice(inst: &Instance, params: &AdversaryParams) -> Result<Advice> {
    let n = inst.n();
    let first = first_y_slot(params);
    let d = (1..=inst.horizon)
        .map(|k| {
            if k >= first && k < first + params.mu {
                StateDistribution::dirac(n, State::On(inst.start))
            } else {
                StateDistribution::off_at(n, inst.start)
            }
        })
        .collect();
    Advice::new(d, &inst.metric.throughput)
}

/// Optimal decisions for the instance with its costs replaced by `forecast`.
pub fn make_advice_from_forecast(inst: &Instance, forecast: &[Vec<f64>]) -> Result<Advice> {
    if forecast.len() != inst.horizon {
        return Err(SoadError::LengthMismatch { expected: inst.horizon, got: forecast.len() });
    }
    let opt = solve_offline_optimal(&inst.with_costs(forecast.to_vec()))?;
    Advice::new(opt.decisions, &inst.metric.throughput)
}

/// Forecast `0.6 f + 0.4 c Unif(L, U)` per entry.
pub fn noisy_forecast(inst: &Instance, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = &inst.metric.throughput;
    inst.costs
        .iter()
        .map(|row| row.iter().enumerate().map(|(u, f)| 0.6 * f + 0.4 * c[u] * rng.gen_range(inst.lower..=inst.upper)).collect())
        .collect()
}

/// Blend `(1 - xi) OPT + xi MAX` of the optimal and the most expensive
/// schedule with unit utilization.
pub fn make_adversarial_advice(inst: &Instance, xi: f64) -> Result<Advice> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(SoadError::Domain(format!("xi must lie in [0,1], got {xi}")));
    }
    let opt = solve_offline_optimal(inst)?.decisions;
    let worst = if xi > 0.0 { solve_max_cost(inst)? } else { opt.clone() };
    let d = opt.iter().zip(&worst).map(|(a, b)| a.mix(b, xi)).collect();
    Advice::new(d, &inst.metric.throughput)
}

/// Resamples up to `upsilon` links per slot, keeping every normalized
/// distance within the declared bound, and repairs each slice into a metric.
pub fn apply_volatility(inst: &Instance, upsilon: usize, seed: u64) -> Result<Instance> {
    let n = inst.n();
    let d_bound = inst.d_bound();
    let c = &inst.metric.throughput;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let mut tv = Vec::with_capacity(inst.horizon);
    for _ in 0..inst.horizon {
        let mut d = inst.metric.dist.clone();
        let k = upsilon.min(pairs.len());
        for &(u, v) in pairs.choose_multiple(&mut rng, k) {
            let cap = d_bound * c[u].min(c[v]);
            let x = cap * rng.gen_range(0.1..=1.0);
            d[u][v] = x;
            d[v][u] = x;
        }
        floyd_warshall(&mut d);
        tv.push(d);
    }
    let mut out = inst.clone();
    out.tv_dist = Some(tv);
    out.d_declared = Some(d_bound);
    Ok(out)
}

/// Shortest-path closure in place.
pub fn floyd_warshall(d: &mut [Vec<f64>]) {
    let n = d.len();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
}
