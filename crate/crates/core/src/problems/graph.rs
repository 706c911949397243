//! Undirected communication graphs for decentralized problems.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub nodes: usize,
    /// Each edge once, as `(min, max)`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= nodes || j >= nodes {
                return Err(Error::param("edges", format!("edge ({i}, {j}) outside 0..{nodes}")));
            }
            if i == j {
                return Err(Error::param("edges", format!("self-loop at {i}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        Ok(Self {
            nodes,
            edges: set.into_iter().collect(),
        })
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Breadth-first reachability from node 0.
    pub fn is_connected(&self) -> bool {
        if self.nodes == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); self.nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.nodes];
        let mut queue = std::collections::VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Connected `degree`-regular circulant graph on `n` nodes with node labels
/// shuffled by `seed`.
///
/// Offsets `±1, …, ±⌊degree/2⌋` around the ring, plus the antipodal offset
/// `n/2` when the degree is odd.
pub fn make_regular_graph(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    if degree == 0 || degree >= n {
        return Err(Error::param("degree", format!("need 1 <= degree < n, got degree {degree} for n {n}")));
    }
    if !(n * degree).is_multiple_of(2) {
        return Err(Error::param("degree", format!("n·degree must be even, got {n}·{degree}")));
    }
    if degree == 1 && n != 2 {
        return Err(Error::param("degree", "a 1-regular graph on more than two nodes is disconnected"));
    }
    let mut label: Vec<usize> = (0..n).collect();
    label.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut edges = Vec::with_capacity(n * degree / 2);
    for i in 0..n {
        for k in 1..=degree / 2 {
            edges.push((label[i], label[(i + k) % n]));
        }
        if degree % 2 == 1 && i < n / 2 {
            edges.push((label[i], label[i + n / 2]));
        }
    }
    let g = Graph::new(n, edges)?;
    debug_assert!(g.degrees().iter().all(|&d| d == degree));
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_node_four_regular() {
        for seed in 0..5 {
            let g = make_regular_graph(30, 4, seed).unwrap();
            assert_eq!(g.edges.len(), 60);
            assert!(g.degrees().iter().all(|&d| d == 4));
            assert!(g.is_connected());
        }
    }

    #[test]
    fn five_nodes_degree_four_is_complete() {
        let g = make_regular_graph(5, 4, 9).unwrap();
        let mut all = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                all.push((i, j));
            }
        }
        assert_eq!(g.edges, all);
    }

    #[test]
    fn odd_degree_and_errors() {
        let g = make_regular_graph(8, 3, 0).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 3));
        assert!(g.is_connected());
        assert!(make_regular_graph(5, 3, 0).is_err());
        assert!(make_regular_graph(4, 4, 0).is_err());
        assert!(make_regular_graph(4, 0, 0).is_err());
    }

    #[test]
    fn disconnected_detected() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!g.is_connected());
        assert!(Graph::new(3, [(0, 0)]).is_err());
    }

    #[test]
    fn seed_changes_labels_not_structure() {
        let a = make_regular_graph(30, 4, 1).unwrap();
        let b = make_regular_graph(30, 4, 2).unwrap();
        assert_ne!(a.edges, b.edges);
        assert_eq!(a, make_regular_graph(30, 4, 1).unwrap());
    }
}
