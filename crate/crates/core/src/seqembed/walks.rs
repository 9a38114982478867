//! Uniform random walks over the friendship graph.

use serde::{Deserialize, Serialize};
use crate::graph::UserGraph;
use crate::rng::SeedTree;

/// Walk generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig { walks_per_node: 10, walk_length: 40, seed: 0 }
    }
}

/// Generates `walks_per_node` uniform random walks from every node, each of
/// length `walk_length` (shorter only when a start node is isolated, which
/// yields the single-node walk). Every (node, walk) pair draws its own
/// substream, so output is independent of traversal order.
pub fn random_walks(g: &UserGraph, cfg: &WalkConfig) -> Vec<Vec<usize>> {
    let adj = g.adjacency();
    let tree = SeedTree::new(cfg.seed);
    let mut walks = Vec::with_capacity(g.n * cfg.walks_per_node);
    for v in 0..g.n {
        for k in 0..cfg.walks_per_node {
            let mut rng = tree.stream("walk", &[v as u64, k as u64]);
            let mut walk = Vec::with_capacity(cfg.walk_length);
            walk.push(v);
            let mut cur = v;
            while walk.len() < cfg.walk_length {
                let nbrs = &adj[cur];
                if nbrs.is_empty() {
                    break;
                }
                cur = nbrs[rand::Rng::gen_range(&mut rng, 0..nbrs.len())];
                walk.push(cur);
            }
            walks.push(walk);
        }
    }
    walks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isolated_node_walk_is_singleton() {
        let g = UserGraph::new(3, vec![(0, 1)]).unwrap();
        let cfg = WalkConfig { walks_per_node: 4, walk_length: 10, seed: 1 };
        let walks = random_walks(&g, &cfg);
        for w in walks.iter().filter(|w| w[0] == 2) {
            assert_eq!(w, &vec![2]);
        }
    }

    #[test]
    fn walk_steps_follow_edges() {
        // Path a-b-c: consecutive walk entries must be adjacent.
        let g = UserGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let cfg = WalkConfig { walks_per_node: 8, walk_length: 3, seed: 2 };
        for w in random_walks(&g, &cfg) {
            assert_eq!(w.len(), 3);
            for pair in w.windows(2) {
                assert!(g.has_edge(pair[0], pair[1]), "non-edge step {pair:?}");
            }
        }
    }

    #[test]
    fn walk_count_is_nodes_times_walks() {
        let g = UserGraph::new(100, (0..99).map(|i| (i, i + 1)).collect()).unwrap();
        let cfg = WalkConfig { walks_per_node: 10, walk_length: 5, seed: 3 };
        assert_eq!(random_walks(&g, &cfg).len(), 1000);
    }

    #[test]
    fn walks_are_deterministic() {
        let g = UserGraph::new(20, (0..19).map(|i| (i, i + 1)).collect()).unwrap();
        let cfg = WalkConfig { walks_per_node: 3, walk_length: 12, seed: 9 };
        assert_eq!(random_walks(&g, &cfg), random_walks(&g, &cfg));
        let other = WalkConfig { seed: 10, ..cfg };
        assert!(random_walks(&g, &cfg) != random_walks(&g, &other));
    }
}
