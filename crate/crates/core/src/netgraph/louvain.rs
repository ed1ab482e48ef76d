//! Louvain modularity optimization with a user-facing resolution `ρ`.
//!
//! The null-model term is scaled by `γ = 1/ρ`:
//!
//! ```text
//! Q_ρ = 1/(2m) · Σ_ij [A_ij − γ · s_i s_j / (2m)] · δ(c_i, c_j)
//! ```
//!
//! so smaller `ρ` yields more communities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NetError, Result, WeightedGraph};

const GAIN_EPS: f64 = 1e-12;
const MAX_PASSES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    pub resolution: f64,
    /// Community id per node, contiguous from 0 in order of first appearance.
    pub membership: Vec<usize>,
    pub modularity: f64,
}

impl CommunityAssignment {
    pub fn count(&self) -> usize {
        self.membership.iter().max().map_or(0, |m| m + 1)
    }
}

fn check_resolution(resolution: f64) -> Result<f64> {
    if resolution > 0.0 && resolution.is_finite() {
        Ok(1.0 / resolution)
    } else {
        Err(NetError::InvalidResolution(resolution))
    }
}

/// Modularity of `membership` at resolution `ρ`. Zero for edgeless graphs.
pub fn modularity(graph: &WeightedGraph, membership: &[usize], resolution: f64) -> Result<f64> {
    let gamma = check_resolution(resolution)?;
    if membership.len() != graph.n() {
        return Err(NetError::PartitionIncomplete {
            got: membership.len(),
            expected: graph.n(),
        });
    }
    let n_comm = membership.iter().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; n_comm];
    let mut total = vec![0.0; n_comm];
    let s = graph.strengths();
    let two_m: f64 = s.iter().sum();
    if two_m == 0.0 {
        return Ok(0.0);
    }
    for &(a, b, w) in &graph.edges {
        if membership[a] == membership[b] {
            internal[membership[a]] += 2.0 * w;
        }
    }
    for (i, &si) in s.iter().enumerate() {
        total[membership[i]] += si;
    }
    Ok(internal
        .iter()
        .zip(&total)
        .map(|(&inn, &tot)| inn - gamma * tot * tot / two_m)
        .sum::<f64>()
        / two_m)
}

/// Symmetric adjacency of one aggregation level. `loops[i]` is `A_ii`
/// (twice the internal weight of the merged node).
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    loops: Vec<f64>,
}

impl Level {
    fn from_graph(g: &WeightedGraph) -> Self {
        let mut adj = vec![Vec::new(); g.n()];
        for &(a, b, w) in &g.edges {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        Self {
            adj,
            loops: vec![0.0; g.n()],
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, i: usize) -> f64 {
        self.loops[i] + self.adj[i].iter().map(|&(_, w)| w).sum::<f64>()
    }

    fn aggregate(&self, comm: &[usize], n_comm: usize) -> Self {
        let mut loops = vec![0.0; n_comm];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> =
            vec![Default::default(); n_comm];
        for i in 0..self.n() {
            let ci = comm[i];
            loops[ci] += self.loops[i];
            for &(j, w) in &self.adj[i] {
                let cj = comm[j];
                if ci == cj {
                    loops[ci] += w;
                } else {
                    *maps[ci].entry(cj).or_default() += w;
                }
            }
        }
        Self {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            loops,
        }
    }
}

/// Moves nodes between communities until no move improves modularity.
/// Returns whether anything moved.
fn local_moves(
    level: &Level,
    comm: &mut [usize],
    gamma: f64,
    two_m: f64,
    rng: &mut ChaCha8Rng,
) -> bool {
    let n = level.n();
    let strength: Vec<f64> = (0..n).map(|i| level.strength(i)).collect();
    let mut tot = vec![0.0; n];
    let mut size = vec![0usize; n];
    for i in 0..n {
        tot[comm[i]] += strength[i];
        size[comm[i]] += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut link = vec![0.0; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;

    for _ in 0..MAX_PASSES {
        order.shuffle(rng);
        let mut moved = false;
        for &i in &order {
            let ci = comm[i];
            let si = strength[i];
            for &(j, w) in &level.adj[i] {
                let cj = comm[j];
                if link[cj] == 0.0 {
                    touched.push(cj);
                }
                link[cj] += w;
            }
            tot[ci] -= si;
            size[ci] -= 1;

            let gain = |c: usize, link_c: f64| link_c - gamma * si * tot[c] / two_m;
            let stay = gain(ci, link[ci]);
            let mut best = ci;
            let mut best_gain = stay;
            touched.sort_unstable();
            for &c in &touched {
                let g = gain(c, link[c]);
                if g > best_gain + GAIN_EPS
                    || (best != ci && (g - best_gain).abs() <= GAIN_EPS && c < best)
                {
                    best = c;
                    best_gain = g;
                }
            }
            // an empty community has gain 0
            if best_gain < -GAIN_EPS && stay < -GAIN_EPS && size[ci] > 0 {
                if let Some(free) = (0..n).find(|&c| size[c] == 0) {
                    best = free;
                }
            }

            comm[i] = best;
            tot[best] += si;
            size[best] += 1;
            if best != ci {
                moved = true;
                moved_any = true;
            }
            for &c in &touched {
                link[c] = 0.0;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
    }
    moved_any
}

fn relabel(comm: &mut [usize]) -> usize {
    let mut map = vec![usize::MAX; comm.len().max(comm.iter().max().map_or(0, |m| m + 1))];
    let mut next = 0;
    for c in comm.iter_mut() {
        if map[*c] == usize::MAX {
            map[*c] = next;
            next += 1;
        }
        *c = map[*c];
    }
    next
}

/// Kernighan-Lin style fine-tuning at node level. Each pass moves every
/// node exactly once, always taking the best available move even when it
/// lowers `Q`, then rewinds to the best prefix of that sequence. Escapes
/// optima such as a path split into pairs, where no single move helps.
fn refine(graph: &WeightedGraph, membership: &mut [usize], gamma: f64, two_m: f64) {
    let level = Level::from_graph(graph);
    let n = level.n();
    let strength: Vec<f64> = (0..n).map(|i| level.strength(i)).collect();
    for _ in 0..MAX_PASSES {
        let mut comm = membership.to_vec();
        let mut tot = vec![0.0; n];
        let mut size = vec![0usize; n];
        for i in 0..n {
            tot[comm[i]] += strength[i];
            size[comm[i]] += 1;
        }
        let mut locked = vec![false; n];
        let (mut cum, mut best, mut best_step) = (0.0, 0.0, 0);
        let mut moves: Vec<(usize, usize)> = Vec::new();
        for _ in 0..n {
            let mut pick: Option<(f64, usize, usize)> = None;
            for i in (0..n).filter(|&i| !locked[i]) {
                let ci = comm[i];
                let si = strength[i];
                let mut link: std::collections::BTreeMap<usize, f64> = Default::default();
                for &(j, w) in &level.adj[i] {
                    *link.entry(comm[j]).or_default() += w;
                }
                let gain = |c: usize, l: f64| {
                    let t = if c == ci { tot[c] - si } else { tot[c] };
                    l - gamma * si * t / two_m
                };
                let stay = gain(ci, link.get(&ci).copied().unwrap_or(0.0));
                let mut targets: Vec<(usize, f64)> = link
                    .iter()
                    .filter(|(&c, _)| c != ci)
                    .map(|(&c, &l)| (c, l))
                    .collect();
                if size[ci] > 1 {
                    if let Some(free) = (0..n).find(|&c| size[c] == 0) {
                        targets.push((free, 0.0));
                    }
                }
                for (c, l) in targets {
                    let d = gain(c, l) - stay;
                    if pick.is_none_or(|(bd, _, _)| d > bd + GAIN_EPS) {
                        pick = Some((d, i, c));
                    }
                }
            }
            let Some((d, i, c)) = pick else { break };
            moves.push((i, comm[i]));
            tot[comm[i]] -= strength[i];
            size[comm[i]] -= 1;
            comm[i] = c;
            tot[c] += strength[i];
            size[c] += 1;
            locked[i] = true;
            cum += d;
            if cum > best + GAIN_EPS {
                best = cum;
                best_step = moves.len();
            }
        }
        if best_step == 0 {
            return;
        }
        for &(i, from) in moves[best_step..].iter().rev() {
            comm[i] = from;
        }
        membership.copy_from_slice(&comm);
    }
}

/// Greedy Louvain: local moves, then aggregation, until a level produces no
/// move, followed by node-level refinement. The node visit order
/// is reshuffled each pass from `seed`.
pub fn louvain_communities(
    graph: &WeightedGraph,
    resolution: f64,
    seed: u64,
) -> Result<CommunityAssignment> {
    let gamma = check_resolution(resolution)?;
    if graph.n() == 0 {
        return Err(NetError::EmptyGraph);
    }
    let mut membership: Vec<usize> = (0..graph.n()).collect();
    let two_m: f64 = graph.strengths().iter().sum();
    if two_m > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut level = Level::from_graph(graph);
        loop {
            let mut comm: Vec<usize> = (0..level.n()).collect();
            if !local_moves(&level, &mut comm, gamma, two_m, &mut rng) {
                break;
            }
            let n_comm = relabel(&mut comm);
            for m in membership.iter_mut() {
                *m = comm[*m];
            }
            if n_comm == level.n() {
                break;
            }
            level = level.aggregate(&comm, n_comm);
        }
        refine(graph, &mut membership, gamma, two_m);
    }
    relabel(&mut membership);
    let q = modularity(graph, &membership, resolution)?;
    Ok(CommunityAssignment {
        resolution,
        membership,
        modularity: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> WeightedGraph {
        WeightedGraph::new((0..n).map(|i| format!("n{i}")).collect(), edges.to_vec())
    }

    pub(crate) fn two_cliques() -> WeightedGraph {
        graph(
            6,
            &[
                (0, 1, 1.0),
                (0, 2, 1.0),
                (1, 2, 1.0),
                (3, 4, 1.0),
                (3, 5, 1.0),
                (4, 5, 1.0),
                (2, 3, 1.0),
            ],
        )
    }

    #[test]
    fn hand_modularity() {
        let g = graph(4, &[(0, 1, 1.0), (2, 3, 1.0)]);
        assert!((modularity(&g, &[0, 0, 1, 1], 1.0).unwrap() - 0.5).abs() < 1e-15);
        let g = graph(2, &[(0, 1, 1.0)]);
        assert_eq!(modularity(&g, &[0, 0], 1.0).unwrap(), 0.0);
        let g = graph(3, &[]);
        assert_eq!(modularity(&g, &[0, 1, 2], 1.0).unwrap(), 0.0);
        assert!(matches!(
            modularity(&g, &[0, 1], 1.0),
            Err(NetError::PartitionIncomplete { .. })
        ));
    }

    #[test]
    fn two_cliques_split() {
        let a = louvain_communities(&two_cliques(), 1.0, 7).unwrap();
        assert_eq!(a.membership, [0, 0, 0, 1, 1, 1]);
        assert!((a.modularity - (12.0 / 14.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn high_resolution_merges_everything() {
        let a = louvain_communities(&two_cliques(), 100.0, 7).unwrap();
        assert_eq!(a.count(), 1);
    }

    #[test]
    fn complete_graph_is_one_community() {
        let edges: Vec<_> = (0..5)
            .flat_map(|i| (i + 1..5).map(move |j| (i, j, 1.0)))
            .collect();
        let a = louvain_communities(&graph(5, &edges), 1.0, 3).unwrap();
        assert_eq!(a.count(), 1);
    }

    #[test]
    fn edgeless_graph_keeps_singletons() {
        let a = louvain_communities(&graph(3, &[]), 1.0, 0).unwrap();
        assert_eq!(a.membership, [0, 1, 2]);
        assert_eq!(a.modularity, 0.0);
        assert!(matches!(
            louvain_communities(&graph(0, &[]), 1.0, 0),
            Err(NetError::EmptyGraph)
        ));
        assert!(matches!(
            louvain_communities(&graph(2, &[]), 0.0, 0),
            Err(NetError::InvalidResolution(_))
        ));
    }

    #[test]
    fn seeded_runs_repeat() {
        let g = two_cliques();
        assert_eq!(
            louvain_communities(&g, 0.33, 11).unwrap(),
            louvain_communities(&g, 0.33, 11).unwrap()
        );
    }
}
