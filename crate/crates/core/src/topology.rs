//! Static undirected communication graphs.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_MAX_RETRIES: usize = 100;

/// Connected, symmetric, loop-free graph. Neighbor lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from undirected edges and checks every invariant,
    /// including connectivity.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, edges)?;
        if !is_connected(&g) {
            return Err(Error::Argument(format!("graph on {n} nodes is not connected")));
        }
        Ok(g)
    }

    /// Like [`Graph::from_edges`] but allows disconnected graphs.
    pub fn from_edges_unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("graph needs at least one node".into()));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Argument(format!("edge ({a}, {b}) outside {n} nodes")));
            }
            if a == b {
                return Err(Error::Argument(format!("self-loop at node {a}")));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph { neighbors })
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Sorted neighbor ids of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// Dense 0/1 adjacency matrix.
    pub fn adjacency(&self) -> Vec<Vec<u8>> {
        let n = self.node_count();
        let mut a = vec![vec![0u8; n]; n];
        for (i, j) in self.edges() {
            a[i][j] = 1;
            a[j][i] = 1;
        }
        a
    }

    /// Edge-list text: a `# nodes N` line, then one `i j` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("# nodes {}\n", self.node_count());
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    /// Parses [`Graph::to_edge_list`] output. Without a `# nodes` line the
    /// node count is one past the largest id.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(n) = rest.trim().strip_prefix("nodes") {
                    declared = Some(n.trim().parse::<usize>().map_err(|e| {
                        Error::Argument(format!("edge list line {}: bad node count: {e}", ln + 1))
                    })?);
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => edges.push((a, b)),
                _ => {
                    return Err(Error::Argument(format!(
                        "edge list line {}: expected `i j`, got {line:?}",
                        ln + 1
                    )))
                }
            }
        }
        let n = declared.unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0));
        Self::from_edges(n, &edges)
    }
}

/// Breadth-first reachability from node 0.
pub fn is_connected(g: &Graph) -> bool {
    let n = g.node_count();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for &j in g.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    reached == n
}

/// G(n, p) by rejection: each unordered pair is joined with probability
/// `p`, and the whole draw is repeated until it is connected.
pub fn erdos_renyi(n: usize, p: f64, seed: u64, max_retries: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 nodes, got {n}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Argument(format!("edge probability {p} outside (0, 1]")));
    }
    let mut rng = stream_rng(seed, Stream::Topology, &[n as u64]);
    let attempts = max_retries.max(1);
    for _ in 0..attempts {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges_unchecked(n, &edges)?;
        if is_connected(&g) {
            return Ok(g);
        }
    }
    Err(Error::Generation {
        draws: attempts,
        message: format!("no connected G({n}, {p}) draw"),
    })
}

/// Cycle `0 - 1 - … - (n-1) - 0`.
pub fn ring(n: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::Argument(format!("ring needs at least 3 nodes, got {n}")));
    }
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    Graph::from_edges(n, &edges)
}

/// Complete graph on `n` nodes.
pub fn complete(n: usize) -> Result<Graph> {
    let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    Graph::from_edges(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_when_p_is_one() {
        let g = erdos_renyi(5, 1.0, 3, 1).unwrap();
        assert!((0..5).all(|i| g.degree(i) == 4));
        assert_eq!(g.edge_count(), 10);
    }

    #[test]
    fn er_connected_and_deterministic() {
        for seed in 0..20 {
            let g = erdos_renyi(20, 0.5, seed, DEFAULT_MAX_RETRIES).unwrap();
            assert!(is_connected(&g));
            let a = g.adjacency();
            assert!((0..20).all(|i| a[i][i] == 0 && (0..20).all(|j| a[i][j] == a[j][i])));
            assert_eq!(g, erdos_renyi(20, 0.5, seed, DEFAULT_MAX_RETRIES).unwrap());
        }
    }

    #[test]
    fn er_reports_draws_when_exhausted() {
        match erdos_renyi(30, 0.01, 1, 5) {
            Err(Error::Generation { draws, .. }) => assert_eq!(draws, 5),
            other => panic!("expected generation error, got {other:?}"),
        }
        assert!(erdos_renyi(1, 0.5, 0, 10).is_err());
        assert!(erdos_renyi(4, 0.0, 0, 10).is_err());
    }

    #[test]
    fn ring_examples() {
        let tri = ring(3).unwrap();
        assert_eq!(tri, complete(3).unwrap());
        let g = ring(20).unwrap();
        assert_eq!(g.edge_count(), 20);
        assert!((0..20).all(|i| g.degree(i) == 2));
        assert_eq!(ring(4).unwrap().neighbors(0), &[1, 3]);
        assert!(ring(2).is_err());
        assert!((3..40).all(|n| is_connected(&ring(n).unwrap())));
    }

    #[test]
    fn connectivity_examples() {
        assert!(is_connected(&complete(6).unwrap()));
        let split = Graph::from_edges_unchecked(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!is_connected(&split));
        assert!(Graph::from_edges(4, &[(0, 1), (2, 3)]).is_err());
        assert!(is_connected(&ring(7).unwrap()));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = erdos_renyi(12, 0.4, 9, DEFAULT_MAX_RETRIES).unwrap();
        let text = g.to_edge_list();
        assert_eq!(Graph::from_edge_list(&text).unwrap(), g);
        let bare = "0 1\n1 2\n";
        assert_eq!(Graph::from_edge_list(bare).unwrap().node_count(), 3);
        assert!(Graph::from_edge_list("0 1 2\n").is_err());
        assert!(Graph::from_edge_list("0 0\n").is_err());
    }
}
