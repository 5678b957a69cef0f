//! Graph abstraction of a nanowire network: nodes are wires, edges are the
//! memristive junctions where two wires touch.
//!
//! Two generators are provided. [`NetworkGraph::random_connected`] hits an
//! exact `(n_nodes, n_edges)` pair, which is what density sweeps need.
//! [`NetworkGraph::nanowire_spatial`] drops random sticks into the unit square
//! and connects every crossing pair, keeping the largest cluster.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet, VecDeque};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// How a graph came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorTag {
    /// Built from an explicit edge list (including files).
    Explicit,
    /// Uniform spanning tree plus uniformly chosen extra edges.
    RandomConnected,
    /// Intersections of random fixed-length sticks in the unit square.
    NanowireSpatial,
}

/// A wire modelled as a straight segment in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment {
    pub fn from_center(center: [f64; 2], angle: f64, length: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let h = 0.5 * length;
        Segment { a: [center[0] - h * c, center[1] - h * s], b: [center[0] + h * c, center[1] + h * s] }
    }

    pub fn midpoint(&self) -> [f64; 2] {
        [0.5 * (self.a[0] + self.b[0]), 0.5 * (self.a[1] + self.b[1])]
    }

    /// Closed-segment intersection, collinear overlaps included.
    pub fn intersects(&self, other: &Segment) -> bool {
        let d1 = orient(other.a, other.b, self.a);
        let d2 = orient(other.a, other.b, self.b);
        let d3 = orient(self.a, self.b, other.a);
        let d4 = orient(self.a, self.b, other.b);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
            return true;
        }
        (d1 == 0.0 && on_segment(other.a, other.b, self.a))
            || (d2 == 0.0 && on_segment(other.a, other.b, self.b))
            || (d3 == 0.0 && on_segment(self.a, self.b, other.a))
            || (d4 == 0.0 && on_segment(self.a, self.b, other.b))
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        ([self.a[0].min(self.b[0]), self.a[1].min(self.b[1])], [self.a[0].max(self.b[0]), self.a[1].max(self.b[1])])
    }
}

fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

// Assumes `r` is collinear with `p`-`q`.
fn on_segment(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> bool {
    r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
}

/// Undirected, connected, simple graph of wires and junctions.
///
/// Edges are stored as `(i, j)` with `i < j`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    generator: GeneratorTag,
    seed: u64,
    positions: Option<Vec<[f64; 2]>>,
}

impl NetworkGraph {
    /// Builds a graph from an explicit edge list. Edges may come in any order
    /// or orientation; duplicates, self-loops and disconnected graphs are
    /// rejected.
    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let edges = normalize_edges(n_nodes, edges)?;
        let graph = NetworkGraph { n_nodes, edges, generator: GeneratorTag::Explicit, seed: 0, positions: None };
        if !graph.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(graph)
    }

    /// Uniform random labelled spanning tree (Prüfer decoding) plus
    /// `n_edges - (n_nodes - 1)` further edges drawn uniformly from the
    /// remaining node pairs.
    pub fn random_connected(n_nodes: usize, n_edges: usize, seed: u64) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::param("n_nodes", "need at least 2 nodes"));
        }
        let max = max_edges(n_nodes);
        if n_edges < n_nodes - 1 || n_edges > max {
            return Err(Error::InfeasibleEdgeCount { n_nodes, n_edges, min: n_nodes - 1, max });
        }
        let mut rng = seeded(seed);
        let mut present: HashSet<(usize, usize)> = random_tree(n_nodes, &mut rng).into_iter().collect();
        let extra = n_edges - (n_nodes - 1);
        let free_pairs = max - (n_nodes - 1);

        if extra > 0 && 2 * extra <= free_pairs {
            while present.len() < n_edges {
                let a = rng.gen_range(0..n_nodes);
                let b = rng.gen_range(0..n_nodes);
                if a != b {
                    present.insert((a.min(b), a.max(b)));
                }
            }
        } else if extra > 0 {
            // Dense target: enumerate the complement and take a random prefix.
            let mut candidates = Vec::with_capacity(free_pairs);
            for i in 0..n_nodes {
                for j in i + 1..n_nodes {
                    if !present.contains(&(i, j)) {
                        candidates.push((i, j));
                    }
                }
            }
            let (chosen, _) = candidates.partial_shuffle(&mut rng, extra);
            present.extend(chosen.iter().copied());
        }

        let mut edges: Vec<_> = present.into_iter().collect();
        edges.sort_unstable();
        Ok(NetworkGraph { n_nodes, edges, generator: GeneratorTag::RandomConnected, seed, positions: None })
    }

    /// Random stick network: `n_wires` segments of length `wire_length` with
    /// uniform centres in the unit square and uniform orientation in `[0, π)`.
    /// Crossing wires share a junction. Returns the largest connected cluster,
    /// relabelled to `0..k` in ascending order of the original wire index.
    pub fn nanowire_spatial(n_wires: usize, wire_length: f64, seed: u64) -> Result<Self> {
        if n_wires < 2 {
            return Err(Error::param("n_wires", "need at least 2 wires"));
        }
        if !(wire_length > 0.0 && wire_length <= 1.0) {
            return Err(Error::param("wire_length", format!("{wire_length} not in (0, 1]")));
        }
        let mut rng = seeded(seed);
        let segments: Vec<Segment> = (0..n_wires)
            .map(|_| {
                let center = [rng.gen::<f64>(), rng.gen::<f64>()];
                let angle = rng.gen::<f64>() * PI;
                Segment::from_center(center, angle, wire_length)
            })
            .collect();
        let mut graph = Self::from_segments(&segments, wire_length)?;
        graph.generator = GeneratorTag::NanowireSpatial;
        graph.seed = seed;
        Ok(graph)
    }

    /// Junction graph of an explicit wire layout (largest cluster only).
    /// `cell_size` tunes the spatial hash and is normally the wire length.
    pub fn from_segments(segments: &[Segment], cell_size: f64) -> Result<Self> {
        let pairs = crossing_pairs(segments, cell_size);
        let n = segments.len();
        let mut dsu = DisjointSets::new(n);
        for &(i, j) in &pairs {
            dsu.union(i, j);
        }
        let mut sizes = vec![0usize; n];
        for v in 0..n {
            sizes[dsu.find(v)] += 1;
        }
        // Largest cluster; ties go to the cluster holding the lowest wire index.
        let mut best_root = dsu.find(0);
        for v in 0..n {
            let r = dsu.find(v);
            if sizes[r] > sizes[best_root] {
                best_root = r;
            }
        }
        let size = sizes[best_root];
        if size < 2 {
            return Err(Error::SparseNanowireNetwork { size });
        }
        let mut relabel = vec![usize::MAX; n];
        let mut positions = Vec::with_capacity(size);
        for v in 0..n {
            if dsu.find(v) == best_root {
                relabel[v] = positions.len();
                positions.push(segments[v].midpoint());
            }
        }
        let mut edges: Vec<(usize, usize)> = pairs
            .into_iter()
            .filter(|&(i, _)| relabel[i] != usize::MAX)
            .map(|(i, j)| (relabel[i], relabel[j]))
            .collect();
        edges.sort_unstable();
        Ok(NetworkGraph {
            n_nodes: size,
            edges,
            generator: GeneratorTag::Explicit,
            seed: 0,
            positions: Some(positions),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn generator(&self) -> GeneratorTag {
        self.generator
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Wire midpoints, for spatially generated graphs.
    pub fn positions(&self) -> Option<&[[f64; 2]]> {
        self.positions.as_deref()
    }

    /// Edge count over the complete-graph edge count.
    pub fn density(&self) -> f64 {
        self.edges.len() as f64 / max_edges(self.n_nodes) as f64
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Hop distances from `source`; unreachable nodes get `usize::MAX`.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut dist = vec![usize::MAX; self.n_nodes];
        let mut queue = VecDeque::from([source]);
        dist[source] = 0;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.n_nodes > 0 && self.hop_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Plain-text edge list: `n_nodes n_edges`, then one `i j` line per edge
    /// in ascending order.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(12 * (self.edges.len() + 1));
        let _ = writeln!(out, "{} {}", self.n_nodes, self.edges.len());
        for &(i, j) in &self.edges {
            let _ = writeln!(out, "{i} {j}");
        }
        out
    }

    /// Parses the format written by [`to_edge_list`](Self::to_edge_list).
    /// The file must already be canonical (ascending, `i < j`).
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::Parse { what: "edge list", reason };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let (n_nodes, n_edges) = parse_pair(header).ok_or_else(|| bad(format!("bad header `{header}`")))?;
        let mut edges = Vec::with_capacity(n_edges);
        for (lineno, line) in lines {
            let (i, j) = parse_pair(line).ok_or_else(|| bad(format!("line {}: `{line}`", lineno + 1)))?;
            if i >= j {
                return Err(bad(format!("line {}: expected i < j", lineno + 1)));
            }
            if let Some(&prev) = edges.last() {
                if (i, j) <= prev {
                    return Err(bad(format!("line {}: edges not strictly ascending", lineno + 1)));
                }
            }
            edges.push((i, j));
        }
        if edges.len() != n_edges {
            return Err(bad(format!("header promises {n_edges} edges, found {}", edges.len())));
        }
        Self::from_edges(n_nodes, edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_edge_list()).map_err(|e| Error::io(path, e))
    }

    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_edge_list(&text)
    }
}

/// `n (n - 1) / 2`.
pub fn max_edges(n_nodes: usize) -> usize {
    n_nodes * n_nodes.saturating_sub(1) / 2
}

/// Edge count that best matches a target density, never below a spanning tree.
pub fn edges_for_density(n_nodes: usize, density: f64) -> usize {
    let max = max_edges(n_nodes);
    let m = (density * max as f64).round() as usize;
    m.clamp(n_nodes.saturating_sub(1), max)
}

fn parse_pair(line: &str) -> Option<(usize, usize)> {
    let mut it = line.split_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    it.next().is_none().then_some((a, b))
}

fn normalize_edges(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Vec<(usize, usize)>> {
    if n_nodes == 0 {
        return Err(Error::param("n_nodes", "need at least 1 node"));
    }
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (a, b) in edges {
        for node in [a, b] {
            if node >= n_nodes {
                return Err(Error::NodeOutOfRange { node, n_nodes });
            }
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    if let Some(w) = out.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidGraph(format!("duplicate edge {:?}", w[0])));
    }
    Ok(out)
}

fn random_tree(n: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    if n == 2 {
        return vec![(0, 1)];
    }
    let code: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &c in &code {
        degree[c] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &c in &code {
        let Reverse(leaf) = leaves.pop().expect("Prüfer decoding always has a leaf");
        edges.push((leaf.min(c), leaf.max(c)));
        degree[c] -= 1;
        if degree[c] == 1 {
            leaves.push(Reverse(c));
        }
    }
    let Reverse(u) = leaves.pop().expect("two leaves remain");
    let Reverse(v) = leaves.pop().expect("two leaves remain");
    edges.push((u.min(v), u.max(v)));
    edges
}

/// All crossing pairs `(i, j)`, `i < j`, found through a uniform grid hash.
fn crossing_pairs(segments: &[Segment], cell_size: f64) -> Vec<(usize, usize)> {
    if segments.is_empty() {
        return Vec::new();
    }
    let (mut lo, mut hi) = segments[0].bbox();
    for s in segments {
        let (a, b) = s.bbox();
        lo = [lo[0].min(a[0]), lo[1].min(a[1])];
        hi = [hi[0].max(b[0]), hi[1].max(b[1])];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let cell = if cell_size > 0.0 { cell_size.max(span / 1024.0) } else { span };
    let cells_x = ((hi[0] - lo[0]) / cell).floor() as usize + 1;
    let cells_y = ((hi[1] - lo[1]) / cell).floor() as usize + 1;
    let cell_of = |p: [f64; 2]| {
        (
            (((p[0] - lo[0]) / cell).floor() as usize).min(cells_x - 1),
            (((p[1] - lo[1]) / cell).floor() as usize).min(cells_y - 1),
        )
    };

    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cells_x * cells_y];
    let mut spans = Vec::with_capacity(segments.len());
    for (idx, s) in segments.iter().enumerate() {
        let (a, b) = s.bbox();
        let (x0, y0) = cell_of(a);
        let (x1, y1) = cell_of(b);
        for y in y0..=y1 {
            for x in x0..=x1 {
                grid[y * cells_x + x].push(idx);
            }
        }
        spans.push((x0, y0, x1, y1));
    }

    let mut pairs = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        let (x0, y0, x1, y1) = spans[i];
        for y in y0..=y1 {
            for x in x0..=x1 {
                for &j in &grid[y * cells_x + x] {
                    if j <= i {
                        continue;
                    }
                    // Report each pair from the first cell the two boxes share.
                    let (jx0, jy0, _, _) = spans[j];
                    if (x, y) != (x0.max(jx0), y0.max(jy0)) {
                        continue;
                    }
                    if s.intersects(&segments[j]) {
                        pairs.push((i, j));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bfs_connected(n: usize, edges: &[(usize, usize)]) -> bool {
        let mut adj = vec![vec![]; n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    #[test]
    fn complete_graph_when_every_pair_requested() {
        let g = NetworkGraph::random_connected(100, 4950, 3).unwrap();
        assert_eq!(g.n_edges(), 4950);
        let mut k = 0;
        for i in 0..100 {
            for j in i + 1..100 {
                assert_eq!(g.edges()[k], (i, j));
                k += 1;
            }
        }
        assert_eq!(g.density(), 1.0);
    }

    #[test]
    fn two_nodes_single_edge() {
        let g = NetworkGraph::random_connected(2, 1, 99).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn sparse_261_edge_network_is_connected() {
        let g = NetworkGraph::random_connected(100, 261, 7).unwrap();
        assert_eq!(g.n_edges(), 261);
        assert!(bfs_connected(100, g.edges()));
        assert!((g.density() - 261.0 / 4950.0).abs() < 1e-15);
        assert!((g.density() - 0.0527).abs() < 1e-4);
    }

    #[test]
    fn infeasible_edge_counts_rejected() {
        assert!(matches!(
            NetworkGraph::random_connected(10, 8, 1),
            Err(Error::InfeasibleEdgeCount { min: 9, max: 45, .. })
        ));
        assert!(matches!(NetworkGraph::random_connected(10, 46, 1), Err(Error::InfeasibleEdgeCount { .. })));
        assert!(NetworkGraph::random_connected(1, 0, 1).is_err());
    }

    #[test]
    fn reference_network_densities() {
        let dense = NetworkGraph::random_connected(500, 123_671, 1).unwrap();
        assert!((dense.density() - 0.9914).abs() < 5e-5);
        let sparse = NetworkGraph::random_connected(500, 2119, 1).unwrap();
        assert!((sparse.density() - 2119.0 / 124_750.0).abs() < 1e-15);
        assert!((sparse.density() - 0.01699).abs() < 5e-6);
    }

    #[test]
    fn parallel_wires_do_not_connect() {
        let segs = [Segment { a: [0.1, 0.2], b: [0.6, 0.2] }, Segment { a: [0.1, 0.7], b: [0.6, 0.7] }];
        assert!(matches!(NetworkGraph::from_segments(&segs, 0.5), Err(Error::SparseNanowireNetwork { size: 1 })));
    }

    #[test]
    fn crossed_wires_form_one_junction() {
        let segs = [Segment { a: [0.2, 0.2], b: [0.8, 0.8] }, Segment { a: [0.2, 0.8], b: [0.8, 0.2] }];
        let g = NetworkGraph::from_segments(&segs, 0.85).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn spatial_generator_keeps_largest_cluster() {
        let g = NetworkGraph::nanowire_spatial(100, 0.3, 11).unwrap();
        assert!(g.is_connected());
        assert!(g.n_nodes() <= 100);
        assert_eq!(g.positions().unwrap().len(), g.n_nodes());
        assert_eq!(g.generator(), GeneratorTag::NanowireSpatial);
    }

    #[test]
    fn edge_list_rejects_unsorted_or_inconsistent_files() {
        assert!(NetworkGraph::from_edge_list("3 2\n1 2\n0 1\n").is_err());
        assert!(NetworkGraph::from_edge_list("3 3\n0 1\n1 2\n").is_err());
        assert!(NetworkGraph::from_edge_list("3 2\n1 0\n1 2\n").is_err());
        assert!(NetworkGraph::from_edge_list("4 2\n0 1\n2 3\n").is_err());
        let g = NetworkGraph::from_edge_list("3 2\n0 1\n1 2\n").unwrap();
        assert_eq!(g.to_edge_list(), "3 2\n0 1\n1 2\n");
    }

    #[test]
    fn explicit_edges_are_validated() {
        assert!(NetworkGraph::from_edges(3, [(0, 0), (1, 2)]).is_err());
        assert!(NetworkGraph::from_edges(3, [(0, 1), (1, 0), (1, 2)]).is_err());
        assert!(NetworkGraph::from_edges(3, [(0, 1), (1, 3)]).is_err());
        let g = NetworkGraph::from_edges(3, [(2, 1), (1, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }
}
