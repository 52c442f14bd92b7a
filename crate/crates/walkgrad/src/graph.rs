//! Weighted graphs in compressed sparse row form.
//!
//! Node ids in input files are arbitrary strings; the loader maps them to
//! dense integers in first-seen order and keeps the mapping in an [`IdMap`]
//! so exported embeddings can be written back under the original ids.
//! Zero- or negative-weight edges and malformed lines are load errors;
//! self-loops are dropped (and counted). Undirected inputs store both arcs.
//!
//! [`AliasSampler`] precomputes a Vose alias table per node so that one
//! weighted neighbor draw costs O(1) regardless of degree.

use std::collections::HashMap;
use std::io::BufRead;

use rand::Rng;
use thiserror::Error;

/// Dense node index. Input ids are interned strings; see [`IdMap`].
pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed edge line: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: edge weight must be positive, got {weight}")]
    NonPositiveWeight { line: usize, weight: f64 },
    #[error("empty edge list")]
    Empty,
    #[error("node {0} has no outgoing edges")]
    DeadEnd(NodeId),
    #[error("node id {0} out of range")]
    UnknownNode(NodeId),
}

/// Bidirectional mapping between original string ids and dense [`NodeId`]s.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense ids `0..n` named by their own decimal representation.
    pub fn numeric(n: usize) -> Self {
        let mut m = Self::new();
        for i in 0..n {
            m.intern(&i.to_string());
        }
        m
    }

    /// Returns the id for `name`, assigning the next dense id on first sight.
    pub fn intern(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len() as NodeId;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Immutable weighted adjacency in CSR form.
///
/// `offsets` has length `node_count + 1`; the out-arcs of node `u` are
/// `neighbors[offsets[u]..offsets[u+1]]` with parallel `weights`. For
/// undirected graphs every edge is stored as two arcs. Adjacency lists are
/// sorted by neighbor id so membership tests are a binary search.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    weights: Vec<f64>,
    directed: bool,
}

impl Graph {
    /// Builds a graph from arcs `(u, v, w)`. For undirected graphs pass each
    /// edge once; the reverse arc is added here. Weights must be positive
    /// and self-loops must already have been removed.
    pub fn from_arcs(node_count: usize, arcs: &[(NodeId, NodeId, f64)], directed: bool) -> Graph {
        let mut degree = vec![0usize; node_count];
        for &(u, v, w) in arcs {
            debug_assert!(u != v, "self-loop {u}");
            debug_assert!(w > 0.0, "non-positive weight {w}");
            debug_assert!((u as usize) < node_count && (v as usize) < node_count);
            degree[u as usize] += 1;
            if !directed {
                degree[v as usize] += 1;
            }
        }
        let mut offsets = vec![0usize; node_count + 1];
        for u in 0..node_count {
            offsets[u + 1] = offsets[u] + degree[u];
        }
        let arc_total = offsets[node_count];
        let mut neighbors = vec![0 as NodeId; arc_total];
        let mut weights = vec![0f64; arc_total];
        let mut cursor = offsets.clone();
        let mut place = |u: NodeId, v: NodeId, w: f64, cursor: &mut Vec<usize>| {
            let slot = cursor[u as usize];
            neighbors[slot] = v;
            weights[slot] = w;
            cursor[u as usize] += 1;
        };
        for &(u, v, w) in arcs {
            place(u, v, w, &mut cursor);
            if !directed {
                place(v, u, w, &mut cursor);
            }
        }
        let mut g = Graph {
            node_count,
            offsets,
            neighbors,
            weights,
            directed,
        };
        g.sort_adjacency();
        g
    }

    fn sort_adjacency(&mut self) {
        for u in 0..self.node_count {
            let (lo, hi) = (self.offsets[u], self.offsets[u + 1]);
            let mut order: Vec<usize> = (lo..hi).collect();
            order.sort_by_key(|&i| self.neighbors[i]);
            let nbrs: Vec<NodeId> = order.iter().map(|&i| self.neighbors[i]).collect();
            let ws: Vec<f64> = order.iter().map(|&i| self.weights[i]).collect();
            self.neighbors[lo..hi].copy_from_slice(&nbrs);
            self.weights[lo..hi].copy_from_slice(&ws);
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of stored arcs (twice the edge count for undirected graphs).
    pub fn arc_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn out_degree(&self, u: NodeId) -> usize {
        let u = u as usize;
        self.offsets[u + 1] - self.offsets[u]
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        let u = u as usize;
        &self.neighbors[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn weights_of(&self, u: NodeId) -> &[f64] {
        let u = u as usize;
        &self.weights[self.offsets[u]..self.offsets[u + 1]]
    }

    /// True when the arc `u -> v` is stored.
    pub fn has_arc(&self, u: NodeId, v: NodeId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Sum of all stored arc weights (2m for undirected graphs).
    pub fn total_arc_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn weighted_degree(&self, u: NodeId) -> f64 {
        self.weights_of(u).iter().sum()
    }

    /// Iterates all stored arcs as `(u, v, w)`.
    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.node_count).flat_map(move |u| {
            let (lo, hi) = (self.offsets[u], self.offsets[u + 1]);
            (lo..hi).map(move |i| (u as NodeId, self.neighbors[i], self.weights[i]))
        })
    }
}

/// Result of [`load_edge_list`]: graph, id mapping, and load accounting.
#[derive(Debug)]
pub struct LoadedGraph {
    pub graph: Graph,
    pub ids: IdMap,
    pub self_loops_dropped: usize,
}

/// Parses a whitespace-separated edge list: one `u v` or `u v w` per line,
/// `#` comments allowed, missing weights default to 1.0. Node ids are
/// arbitrary strings interned in first-seen order.
pub fn load_edge_list<R: BufRead>(reader: R, directed: bool) -> Result<LoadedGraph, GraphError> {
    let mut ids = IdMap::new();
    let mut arcs: Vec<(NodeId, NodeId, f64)> = Vec::new();
    let mut self_loops = 0usize;
    let mut saw_data = false;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| GraphError::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        saw_data = true;
        let mut tok = line.split_whitespace();
        let u = tok.next().ok_or_else(|| GraphError::Parse {
            line: lineno,
            msg: "missing source node".into(),
        })?;
        let v = tok.next().ok_or_else(|| GraphError::Parse {
            line: lineno,
            msg: "missing target node".into(),
        })?;
        let w = match tok.next() {
            None => 1.0,
            Some(s) => s.parse::<f64>().map_err(|_| GraphError::Parse {
                line: lineno,
                msg: format!("bad weight {s:?}"),
            })?,
        };
        if tok.next().is_some() {
            return Err(GraphError::Parse {
                line: lineno,
                msg: "more than three fields".into(),
            });
        }
        if !w.is_finite() || w <= 0.0 {
            return Err(GraphError::NonPositiveWeight { line: lineno, weight: w });
        }
        let u = ids.intern(u);
        let v = ids.intern(v);
        if u == v {
            self_loops += 1;
            continue;
        }
        arcs.push((u, v, w));
    }

    if !saw_data {
        return Err(GraphError::Empty);
    }
    let graph = Graph::from_arcs(ids.len(), &arcs, directed);
    Ok(LoadedGraph {
        graph,
        ids,
        self_loops_dropped: self_loops,
    })
}

/// Writes a graph back out as an edge list under the given ids. Undirected
/// graphs emit each edge once (`u <= v` orientation).
pub fn write_edge_list<W: std::io::Write>(
    g: &Graph,
    ids: &IdMap,
    mut w: W,
) -> std::io::Result<()> {
    for (u, v, weight) in g.arcs() {
        if !g.is_directed() && u > v {
            continue;
        }
        if (weight - 1.0).abs() < f64::EPSILON {
            writeln!(w, "{} {}", ids.name(u), ids.name(v))?;
        } else {
            writeln!(w, "{} {} {}", ids.name(u), ids.name(v), weight)?;
        }
    }
    Ok(())
}

/// Per-node Vose alias tables for O(1) weighted neighbor sampling.
///
/// The table layout mirrors the graph's CSR layout: entry `i` of node `u`
/// covers `g.neighbors(u)[i]`. Immutable after construction and safe to
/// share across threads.
#[derive(Debug, Clone)]
pub struct AliasSampler {
    offsets: Vec<usize>,
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasSampler {
    pub fn new(g: &Graph) -> AliasSampler {
        let mut prob = vec![0f64; g.arc_count()];
        let mut alias = vec![0u32; g.arc_count()];
        let offsets = g.offsets.clone();
        for u in 0..g.node_count() {
            let lo = offsets[u];
            let ws = g.weights_of(u as NodeId);
            if ws.is_empty() {
                continue;
            }
            build_alias_table(ws, &mut prob[lo..lo + ws.len()], &mut alias[lo..lo + ws.len()]);
        }
        AliasSampler {
            offsets,
            prob,
            alias,
        }
    }

    /// Draws a neighbor of `u` with probability proportional to arc weight.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        g: &Graph,
        u: NodeId,
        rng: &mut R,
    ) -> Result<NodeId, GraphError> {
        let lo = self.offsets[u as usize];
        let deg = self.offsets[u as usize + 1] - lo;
        if deg == 0 {
            return Err(GraphError::DeadEnd(u));
        }
        let slot = rng.gen_range(0..deg);
        let coin: f64 = rng.gen();
        let pick = if coin < self.prob[lo + slot] {
            slot
        } else {
            self.alias[lo + slot] as usize
        };
        Ok(g.neighbors(u)[pick])
    }
}

/// Draws a neighbor of `u` proportionally to edge weight; errors on dead ends.
pub fn sample_neighbor<R: Rng + ?Sized>(
    g: &Graph,
    s: &AliasSampler,
    u: NodeId,
    rng: &mut R,
) -> Result<NodeId, GraphError> {
    s.sample(g, u, rng)
}

/// Standard Vose construction over one weight slice.
fn build_alias_table(weights: &[f64], prob: &mut [f64], alias: &mut [u32]) {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
    let mut small: Vec<usize> = Vec::new();
    let mut large: Vec<usize> = Vec::new();
    for (i, &s) in scaled.iter().enumerate() {
        if s < 1.0 {
            small.push(i);
        } else {
            large.push(i);
        }
    }
    while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
        small.pop();
        prob[s] = scaled[s];
        alias[s] = l as u32;
        scaled[l] = (scaled[l] + scaled[s]) - 1.0;
        if scaled[l] < 1.0 {
            large.pop();
            small.push(l);
        }
    }
    for i in small.into_iter().chain(large) {
        prob[i] = 1.0;
        alias[i] = i as u32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::io::Cursor;

    fn load(text: &str, directed: bool) -> LoadedGraph {
        load_edge_list(Cursor::new(text), directed).unwrap()
    }

    #[test]
    fn default_weight_undirected() {
        let lg = load("a b\nb c", false);
        assert_eq!(lg.graph.node_count(), 3);
        assert_eq!(lg.graph.arc_count(), 4);
        let a = lg.ids.get("a").unwrap();
        let b = lg.ids.get("b").unwrap();
        let c = lg.ids.get("c").unwrap();
        assert!(lg.graph.has_arc(a, b) && lg.graph.has_arc(b, a));
        assert!(lg.graph.has_arc(b, c) && lg.graph.has_arc(c, b));
        assert!(!lg.graph.has_arc(a, c));
        assert!(lg.graph.weights_of(b).iter().all(|&w| w == 1.0));
    }

    #[test]
    fn self_loop_dropped_node_kept() {
        let lg = load("a a 1.0", false);
        assert_eq!(lg.graph.node_count(), 1);
        assert_eq!(lg.graph.arc_count(), 0);
        assert_eq!(lg.self_loops_dropped, 1);
    }

    #[test]
    fn negative_weight_rejected_with_line() {
        let err = load_edge_list(Cursor::new("u v -1"), false).unwrap_err();
        match err {
            GraphError::NonPositiveWeight { line, weight } => {
                assert_eq!(line, 1);
                assert_eq!(weight, -1.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zero_weight_rejected() {
        assert!(matches!(
            load_edge_list(Cursor::new("u v 0"), false),
            Err(GraphError::NonPositiveWeight { .. })
        ));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err = load_edge_list(Cursor::new("a b\nc\n"), false).unwrap_err();
        match err {
            GraphError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            load_edge_list(Cursor::new("# only comments\n"), false),
            Err(GraphError::Empty)
        ));
        assert!(matches!(
            load_edge_list(Cursor::new(""), false),
            Err(GraphError::Empty)
        ));
    }

    #[test]
    fn reload_is_structurally_identical() {
        let text = "a b 2.0\nb c\nc d 0.5\na d";
        let g1 = load(text, false);
        let g2 = load(text, false);
        assert_eq!(g1.graph.offsets, g2.graph.offsets);
        assert_eq!(g1.graph.neighbors, g2.graph.neighbors);
        assert_eq!(g1.graph.weights, g2.graph.weights);
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let lg = load("# header\n\na b\n# mid\nb c 3\n", false);
        assert_eq!(lg.graph.node_count(), 3);
        assert_eq!(lg.graph.arc_count(), 4);
    }

    #[test]
    fn single_neighbor_always_sampled() {
        let lg = load("a b", true);
        let s = AliasSampler::new(&lg.graph);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = lg.ids.get("a").unwrap();
        let b = lg.ids.get("b").unwrap();
        for _ in 0..100 {
            assert_eq!(sample_neighbor(&lg.graph, &s, a, &mut rng).unwrap(), b);
        }
    }

    #[test]
    fn dead_end_is_an_error() {
        let lg = load("a b", true);
        let s = AliasSampler::new(&lg.graph);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = lg.ids.get("b").unwrap();
        assert!(matches!(
            sample_neighbor(&lg.graph, &s, b, &mut rng),
            Err(GraphError::DeadEnd(_))
        ));
    }

    #[test]
    fn weighted_sampling_ratio_three_to_one() {
        let lg = load("u a 3\nu b 1", true);
        let s = AliasSampler::new(&lg.graph);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = lg.ids.get("u").unwrap();
        let a = lg.ids.get("a").unwrap();
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            if sample_neighbor(&lg.graph, &s, u, &mut rng).unwrap() == a {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");
    }

    /// Chi-square goodness of fit of alias draws against w/Σw, per node.
    #[test]
    fn alias_frequencies_match_weights_chi_square() {
        let text = "a b 1\na c 2\na d 4\nb c 1.5\nb d 0.25\nc d 10";
        let lg = load(text, false);
        let g = &lg.graph;
        let s = AliasSampler::new(g);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 100_000usize;
        for u in 0..g.node_count() as NodeId {
            let deg = g.out_degree(u);
            if deg < 2 {
                continue;
            }
            let mut counts = vec![0u64; deg];
            for _ in 0..draws {
                let v = s.sample(g, u, &mut rng).unwrap();
                let slot = g.neighbors(u).binary_search(&v).unwrap();
                counts[slot] += 1;
            }
            let total_w = g.weighted_degree(u);
            let mut stat = 0.0;
            for (slot, &c) in counts.iter().enumerate() {
                let expected = draws as f64 * g.weights_of(u)[slot] / total_w;
                stat += (c as f64 - expected).powi(2) / expected;
            }
            let crit = ChiSquared::new((deg - 1) as f64)
                .unwrap()
                .inverse_cdf(0.999);
            assert!(stat < crit, "node {u}: chi2 {stat} >= {crit}");
        }
    }

    #[test]
    fn from_arcs_adjacency_sorted() {
        let g = Graph::from_arcs(4, &[(0, 3, 1.0), (0, 1, 2.0), (0, 2, 3.0)], true);
        assert_eq!(g.neighbors(0), &[1, 2, 3]);
        assert_eq!(g.weights_of(0), &[2.0, 3.0, 1.0]);
    }
}
