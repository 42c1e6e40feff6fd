//! Randomized hierarchically separated tree over the metric, with one OFF
//! leaf hung below every ON node, and the vector space `K` built on it.
//!
//! The hierarchy is an FRT-style decomposition: a random permutation of the
//! points and a radius scale drawn log-uniformly from `[1, 2)`, halving the
//! radius at each level. The edge from a cluster to its parent weighs half
//! the parent's diameter, which keeps the tree dominating the metric and
//! embeds uniform metrics exactly as stars.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SoadError};
use crate::model::{MetricSpace, StateDistribution};

/// Tolerance used when testing membership in `K`.
pub const K_TOL: f64 = 1e-9;
/// Distances at or below this are treated as coincident points.
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Steiner node of the hierarchy.
    Cluster,
    On(usize),
    Off(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEmbedding {
    pub n: usize,
    pub kind: Vec<NodeKind>,
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Weight of the edge to the parent; zero at the root.
    pub edge_weight: Vec<f64>,
    pub root: usize,
    /// Tree node of each state, indexed like `StateDistribution::probs`.
    pub state_node: Vec<usize>,
    pub rng_seed: u64,
    depth: Vec<usize>,
}

/// Element of `K`, indexed by tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KVector {
    pub entries: Vec<f64>,
}

struct Builder {
    kind: Vec<NodeKind>,
    parent: Vec<Option<usize>>,
    weight: Vec<f64>,
}

impl Builder {
    fn add(&mut self, kind: NodeKind, parent: Option<usize>, weight: f64) -> usize {
        self.kind.push(kind);
        self.parent.push(parent);
        self.weight.push(weight);
        self.kind.len() - 1
    }
}

fn diameter(dist: &[Vec<f64>], pts: &[usize]) -> f64 {
    let mut d = 0.0f64;
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            d = d.max(dist[a][b]);
        }
    }
    d
}

/// Samples a tree for `metric` using `seed`.
pub fn sample_hst(metric: &MetricSpace, seed: u64) -> TreeEmbedding {
    sample_hst_with(metric, &metric.dist, seed)
}

/// Samples a tree for the distance matrix `dist`, keeping the switching
/// factors of `metric`. The same seed gives the same permutation and scale.
pub fn sample_hst_with(metric: &MetricSpace, dist: &[Vec<f64>], seed: u64) -> TreeEmbedding {
    let n = metric.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Merge coincident points; `groups[g]` lists the points of group g.
    let mut group_of = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for u in 0..n {
        if group_of[u] != usize::MAX {
            continue;
        }
        let g = groups.len();
        let mut members = vec![u];
        group_of[u] = g;
        for v in u + 1..n {
            if group_of[v] == usize::MAX && dist[u][v] <= MERGE_TOL {
                group_of[v] = g;
                members.push(v);
            }
        }
        groups.push(members);
    }
    let reps: Vec<usize> = groups.iter().map(|g| g[0]).collect();
    let m = reps.len();

    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng);
    let scale: f64 = 2f64.powf(rng.gen::<f64>());

    let mut b = Builder { kind: Vec::new(), parent: Vec::new(), weight: Vec::new() };

    // Each frontier entry is (cluster of group indices, tree node).
    let top_diam = diameter(dist, &reps);
    let root = open_cluster(&mut b, &groups, (0..m).collect(), None, 0.0);
    let mut frontier: Vec<(Vec<usize>, usize)> = vec![((0..m).collect(), root)];
    frontier.retain(|(c, _)| c.len() > 1);
    let mut radius = if top_diam > 0.0 { scale * 2f64.powi(top_diam.log2().ceil() as i32) } else { 0.0 };
    while !frontier.is_empty() {
        radius *= 0.5;
        let mut next = Vec::new();
        for (cluster, node) in frontier {
            let pts: Vec<usize> = cluster.iter().map(|&g| reps[g]).collect();
            let parent_diam = diameter(dist, &pts);
            // Assign each group to the first center in permutation order within the radius.
            let mut parts: Vec<(usize, Vec<usize>)> = Vec::new();
            for &g in &cluster {
                // A group is always within radius of itself, so a center exists.
                let center = perm.iter().position(|&c| dist[reps[g]][reps[c]] <= radius).unwrap();
                match parts.iter_mut().find(|(c, _)| *c == center) {
                    Some((_, v)) => v.push(g),
                    None => parts.push((center, vec![g])),
                }
            }
            if parts.len() == 1 {
                next.push((cluster, node));
                continue;
            }
            parts.sort_by_key(|(c, _)| *c);
            for (_, part) in parts {
                let child = open_cluster(&mut b, &groups, part.clone(), Some(node), parent_diam / 2.0);
                if part.len() > 1 {
                    next.push((part, child));
                }
            }
        }
        frontier = next;
    }

    // OFF leaves below each ON node.
    for u in 0..n {
        let on = b.kind.iter().position(|k| *k == NodeKind::On(u)).expect("every point has an ON node");
        b.add(NodeKind::Off(u), Some(on), metric.switch_beta[u]);
    }
    finish(n, b, root, seed)
}

/// Creates the node for a cluster of groups. A single group becomes its ON
/// node (or a zero-diameter cluster of ON nodes when points coincide).
fn open_cluster(
    b: &mut Builder,
    groups: &[Vec<usize>],
    cluster: Vec<usize>,
    parent: Option<usize>,
    weight: f64,
) -> usize {
    if cluster.len() == 1 {
        let members = &groups[cluster[0]];
        if members.len() == 1 {
            return b.add(NodeKind::On(members[0]), parent, weight);
        }
        let node = b.add(NodeKind::Cluster, parent, weight);
        for &u in members {
            b.add(NodeKind::On(u), Some(node), 0.0);
        }
        return node;
    }
    b.add(NodeKind::Cluster, parent, weight)
}

fn finish(n: usize, b: Builder, root: usize, seed: u64) -> TreeEmbedding {
    let size = b.kind.len();
    let mut children = vec![Vec::new(); size];
    for (v, p) in b.parent.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(v);
        }
    }
    // Parents are always created before their children.
    let mut depth = vec![0usize; size];
    for v in 0..size {
        if let Some(p) = b.parent[v] {
            depth[v] = depth[p] + 1;
        }
    }
    let mut state_node = vec![0; 2 * n];
    for (v, k) in b.kind.iter().enumerate() {
        match *k {
            NodeKind::On(u) => state_node[u] = v,
            NodeKind::Off(u) => state_node[n + u] = v,
            NodeKind::Cluster => {}
        }
    }
    let mut edge_weight = b.weight;
    edge_weight[root] = 0.0;
    TreeEmbedding {
        n,
        kind: b.kind,
        parent: b.parent,
        children,
        edge_weight,
        root,
        state_node,
        rng_seed: seed,
        depth,
    }
}

impl TreeEmbedding {
    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    /// Path weight between two tree nodes.
    pub fn node_distance(&self, mut a: usize, mut b: usize) -> f64 {
        // Summing edges directly keeps single-edge distances exact.
        let mut total = 0.0;
        while self.depth[a] > self.depth[b] {
            total += self.edge_weight[a];
            a = self.parent[a].unwrap();
        }
        while self.depth[b] > self.depth[a] {
            total += self.edge_weight[b];
            b = self.parent[b].unwrap();
        }
        while a != b {
            total += self.edge_weight[a] + self.edge_weight[b];
            a = self.parent[a].unwrap();
            b = self.parent[b].unwrap();
        }
        total
    }

    /// Tree distance between two states (indices into the state set).
    pub fn state_distance(&self, s: usize, t: usize) -> f64 {
        self.node_distance(self.state_node[s], self.state_node[t])
    }

    /// All pairwise tree distances between states, `2n x 2n`.
    pub fn state_distance_matrix(&self) -> Vec<Vec<f64>> {
        let m = 2 * self.n;
        let mut out = vec![vec![0.0; m]; m];
        for s in 0..m {
            for t in s + 1..m {
                let d = self.state_distance(s, t);
                out[s][t] = d;
                out[t][s] = d;
            }
        }
        out
    }

    /// Tree distance between the ON nodes of two points.
    pub fn point_distance(&self, u: usize, v: usize) -> f64 {
        self.state_distance(u, v)
    }
}

/// Accumulates the mass of `p` upward along the tree.
pub fn phi(emb: &TreeEmbedding, p: &StateDistribution) -> KVector {
    let mut entries = vec![0.0; emb.len()];
    for (s, &mass) in p.probs.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        let mut v = Some(emb.state_node[s]);
        while let Some(x) = v {
            entries[x] += mass;
            v = emb.parent[x];
        }
    }
    KVector { entries }
}

/// Checks the defining constraints of `K`.
pub fn check_k(emb: &TreeEmbedding, k: &KVector) -> Result<()> {
    if k.entries.len() != emb.len() {
        return Err(SoadError::NotInK(format!("length {} != {}", k.entries.len(), emb.len())));
    }
    if (k.entries[emb.root] - 1.0).abs() > K_TOL {
        return Err(SoadError::NotInK(format!("root entry {}", k.entries[emb.root])));
    }
    for v in 0..emb.len() {
        let x = k.entries[v];
        if !(x >= -K_TOL && x <= 1.0 + K_TOL) {
            return Err(SoadError::NotInK(format!("entry {v} = {x}")));
        }
        let child_sum: f64 = emb.children[v].iter().map(|&c| k.entries[c]).sum();
        match emb.kind[v] {
            NodeKind::Cluster => {
                if (x - child_sum).abs() > K_TOL {
                    return Err(SoadError::NotInK(format!("node {v} holds {x} but children sum to {child_sum}")));
                }
            }
            NodeKind::On(u) => {
                if x - child_sum < -K_TOL {
                    return Err(SoadError::NotInK(format!("negative ON mass at point {u}")));
                }
            }
            NodeKind::Off(_) => {}
        }
    }
    Ok(())
}

/// Decodes `k` back to a distribution over states.
pub fn phi_inverse(emb: &TreeEmbedding, k: &KVector) -> Result<StateDistribution> {
    check_k(emb, k)?;
    let n = emb.n;
    let mut probs = vec![0.0; 2 * n];
    for u in 0..n {
        let off = k.entries[emb.state_node[n + u]];
        let on = k.entries[emb.state_node[u]] - off;
        probs[u] = on.max(0.0);
        probs[n + u] = off.max(0.0);
    }
    Ok(StateDistribution { probs })
}

/// Weighted l1 norm `sum_v w_v |k1_v - k2_v|`.
pub fn k_norm(emb: &TreeEmbedding, k1: &KVector, k2: &KVector) -> f64 {
    emb.edge_weight.iter().zip(k1.entries.iter().zip(&k2.entries)).map(|(w, (a, b))| w * (a - b).abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::State;
    use rand::Rng;

    fn random_metric(n: usize, seed: u64) -> MetricSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
        let dist = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let beta = c.iter().map(|c| 0.3 * c).collect();
        MetricSpace::new(dist, c, beta).unwrap()
    }

    #[test]
    fn single_point_tree() {
        let m = MetricSpace::new(vec![vec![0.0]], vec![1.0], vec![0.7]).unwrap();
        let e = sample_hst(&m, 1);
        assert_eq!(e.kind[e.root], NodeKind::On(0));
        assert_eq!(e.len(), 2);
        assert!((e.state_distance(0, 1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn two_points_dominate() {
        let m = MetricSpace::new(vec![vec![0.0, 8.0], vec![8.0, 0.0]], vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        for seed in 0..20 {
            let e = sample_hst(&m, seed);
            assert!(e.point_distance(0, 1) >= 8.0 - 1e-12);
        }
    }

    #[test]
    fn uniform_metric_is_a_star() {
        let n = 5;
        let dist = (0..n).map(|u| (0..n).map(|v| if u == v { 0.0 } else { 0.3 }).collect()).collect();
        let m = MetricSpace::new(dist, vec![0.05; n], vec![0.01; n]).unwrap();
        for seed in 0..10 {
            let e = sample_hst(&m, seed);
            for u in 0..n {
                for v in 0..n {
                    if u != v {
                        assert!((e.point_distance(u, v) - 0.3).abs() < 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn dominance_and_temporal_exactness() {
        for seed in 0..30 {
            let m = random_metric(7, seed);
            let e = sample_hst(&m, seed + 100);
            for u in 0..7 {
                assert_eq!(e.state_distance(u, 7 + u), m.switch_beta[u]);
                for v in 0..7 {
                    assert!(e.point_distance(u, v) >= m.dist[u][v] - 1e-9);
                }
            }
        }
    }

    #[test]
    fn weights_do_not_grow_downward() {
        let m = random_metric(9, 3);
        let e = sample_hst(&m, 5);
        for v in 0..e.len() {
            if let (Some(p), NodeKind::Cluster | NodeKind::On(_)) = (e.parent[v], e.kind[v]) {
                if e.parent[p].is_some() {
                    assert!(e.edge_weight[v] <= e.edge_weight[p] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn coincident_points_are_merged() {
        let dist = vec![vec![0.0, 0.0, 2.0], vec![0.0, 0.0, 2.0], vec![2.0, 2.0, 0.0]];
        let m = MetricSpace::new(dist, vec![0.5; 3], vec![0.1; 3]).unwrap();
        let e = sample_hst(&m, 9);
        assert_eq!(e.point_distance(0, 1), 0.0);
        assert!(e.point_distance(0, 2) >= 2.0);
        let p = StateDistribution::new(vec![0.1, 0.2, 0.3, 0.1, 0.2, 0.1]).unwrap();
        let back = phi_inverse(&e, &phi(&e, &p)).unwrap();
        for (a, b) in back.probs.iter().zip(&p.probs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn phi_examples() {
        let m = random_metric(4, 11);
        let e = sample_hst(&m, 2);
        let p = StateDistribution::dirac(4, State::Off(2));
        let k = phi(&e, &p);
        let mut v = Some(e.state_node[4 + 2]);
        let mut on_path = vec![false; e.len()];
        while let Some(x) = v {
            on_path[x] = true;
            v = e.parent[x];
        }
        for (x, &val) in k.entries.iter().enumerate() {
            assert_eq!(val, if on_path[x] { 1.0 } else { 0.0 });
        }
        assert_eq!(phi_inverse(&e, &k).unwrap(), p);
        let u = StateDistribution::new(vec![0.125; 8]).unwrap();
        assert!((phi(&e, &u).entries[e.root] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phi_inverse_subtraction_and_rejection() {
        let m = MetricSpace::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let e = sample_hst(&m, 0);
        let p = StateDistribution::new(vec![0.4, 0.3, 0.3, 0.0]).unwrap();
        let k = phi(&e, &p);
        assert!((k.entries[e.state_node[0]] - 0.7).abs() < 1e-15);
        assert!((k.entries[e.state_node[2]] - 0.3).abs() < 1e-15);
        let q = phi_inverse(&e, &k).unwrap();
        assert!((q.on(0) - 0.4).abs() < 1e-15 && (q.off(0) - 0.3).abs() < 1e-15);
        let mut bad = k.clone();
        bad.entries[e.state_node[2]] = 0.9;
        assert!(phi_inverse(&e, &bad).is_err());
    }

    #[test]
    fn k_norm_single_edges() {
        let m = random_metric(3, 4);
        let e = sample_hst(&m, 8);
        let on = phi(&e, &StateDistribution::dirac(3, State::On(1)));
        let off = phi(&e, &StateDistribution::dirac(3, State::Off(1)));
        assert!((k_norm(&e, &on, &off) - m.switch_beta[1]).abs() < 1e-15);
        assert_eq!(k_norm(&e, &on, &on), 0.0);
        let off0 = phi(&e, &StateDistribution::dirac(3, State::Off(0)));
        let expect = m.switch_beta[0] + m.switch_beta[1] + e.point_distance(0, 1);
        assert!((k_norm(&e, &off0, &off) - expect).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let m = random_metric(6, 1);
        assert_eq!(sample_hst(&m, 42), sample_hst(&m, 42));
    }
}
