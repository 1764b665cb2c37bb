//! Plain undirected simple graphs shared by the spectral estimators and the
//! quasi-isometry checks.

use std::collections::BTreeSet;

#[derive(Clone, Debug)]
pub struct SimpleGraph {
    n: usize,
    adj: Vec<Vec<u32>>,
    m: usize,
}

impl SimpleGraph {
    /// Builds a simple graph: loops dropped, duplicates merged, adjacency
    /// lists sorted.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> SimpleGraph {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            assert!(
                (u as usize) < n && (v as usize) < n,
                "edge endpoint out of range"
            );
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in &set {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        for a in &mut adj {
            a.sort_unstable();
        }
        SimpleGraph {
            n,
            adj,
            m: set.len(),
        }
    }

    pub fn complete(n: usize) -> SimpleGraph {
        SimpleGraph::from_edges(
            n,
            (0..n as u32).flat_map(|u| ((u + 1)..n as u32).map(move |v| (u, v))),
        )
    }

    pub fn cycle(n: usize) -> SimpleGraph {
        SimpleGraph::from_edges(n, (0..n as u32).map(|u| (u, (u + 1) % n as u32)))
    }

    pub fn path(n: usize) -> SimpleGraph {
        SimpleGraph::from_edges(n, (0..n as u32 - 1).map(|u| (u, u + 1)))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.m
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Unordered edges, each once with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, nbrs)| {
            nbrs.iter()
                .filter(move |&&v| (u as u32) < v)
                .map(move |&v| (u as u32, v))
        })
    }

    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let d = self.bfs_distances(0);
        d.iter().all(|&x| x != u32::MAX)
    }

    /// Hop distances from `src`; unreachable vertices get `u32::MAX`.
    pub fn bfs_distances(&self, src: u32) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[src as usize] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u as usize];
            for &v in &self.adj[u as usize] {
                if dist[v as usize] == u32::MAX {
                    dist[v as usize] = du + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// `out = L x` for the combinatorial Laplacian `L = Deg - Adj`.
    pub fn laplacian_matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for (u, nbrs) in self.adj.iter().enumerate() {
            let mut acc = nbrs.len() as f64 * x[u];
            for &v in nbrs {
                acc -= x[v as usize];
            }
            out[u] = acc;
        }
    }
}
