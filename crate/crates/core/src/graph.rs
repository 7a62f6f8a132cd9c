//! Undirected simple graphs with per-edge realization probabilities.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::seed::SeedContext;

/// Default cap on the number of edges for exhaustive realization enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("parallel edge between {0} and {1}")]
    ParallelEdge(usize, usize),
    #[error("edge ({u}, {v}) has probability {p}, expected 0 < p <= 1")]
    InvalidProbability { u: usize, v: usize, p: f64 },
    #[error("vertex {vertex} out of range for n = {n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("graph has {edges} edges, enumeration cap is {cap}")]
    EdgeCountExceeded { edges: usize, cap: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub p: f64,
}

impl Edge {
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, x: usize) -> bool {
        self.u == x || self.v == x
    }
}

/// Immutable simple graph. Vertices are `0..n`, edges `0..m` in input order.
///
/// Adjacency lists hold incident edge ids in increasing order; every maximum
/// matching and LCA in the crate scans them in that order.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<usize>>,
    index: HashMap<(usize, usize), usize>,
}

fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

impl Graph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self, GraphError> {
        let mut out = Graph {
            n,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
            index: HashMap::new(),
        };
        for (u, v, p) in edges {
            out.push_edge(u, v, p)?;
        }
        Ok(out)
    }

    /// Graph where every edge has the same probability.
    pub fn uniform(n: usize, pairs: &[(usize, usize)], p: f64) -> Result<Self, GraphError> {
        Graph::new(n, pairs.iter().map(|&(u, v)| (u, v, p)))
    }

    fn push_edge(&mut self, u: usize, v: usize, p: f64) -> Result<(), GraphError> {
        for x in [u, v] {
            if x >= self.n {
                return Err(GraphError::VertexOutOfRange { vertex: x, n: self.n });
            }
        }
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(GraphError::InvalidProbability { u, v, p });
        }
        let k = key(u, v);
        if self.index.contains_key(&k) {
            return Err(GraphError::ParallelEdge(k.0, k.1));
        }
        let id = self.edges.len();
        self.index.insert(k, id);
        self.edges.push(Edge { u, v, p });
        self.adjacency[u].push(id);
        self.adjacency[v].push(id);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Incident edge ids of `v`, increasing.
    pub fn incident(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.index.get(&key(u, v)).copied()
    }

    /// Smallest edge probability, or 1 for an edgeless graph.
    pub fn min_probability(&self) -> f64 {
        self.edges.iter().map(|e| e.p).fold(1.0, f64::min)
    }

    pub fn edge_set(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.m());
        s.insert_range(..);
        s
    }

    /// Graph on the same vertex set keeping only `keep`, renumbered in
    /// increasing original id. Returns the new graph and the new-to-old map.
    pub fn edge_subgraph(&self, keep: &FixedBitSet) -> (Graph, Vec<usize>) {
        let ids: Vec<usize> = keep.ones().filter(|&e| e < self.m()).collect();
        let g = Graph::new(
            self.n,
            ids.iter().map(|&e| {
                let ed = self.edges[e];
                (ed.u, ed.v, ed.p)
            }),
        )
        .expect("subgraph of a valid graph is valid");
        (g, ids)
    }

    /// Parse the text edge-list format: `u v p` per line, `#` comments, optional
    /// `n <count>` header.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        Self::read(text.as_bytes())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, GraphError> {
        let mut header_n: Option<usize> = None;
        let mut raw = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            let perr = |message: String| GraphError::Parse { line: lineno, message };
            if parts[0] == "n" {
                if parts.len() != 2 || header_n.is_some() || !raw.is_empty() {
                    return Err(perr("header must be a single `n <count>` line before edges".into()));
                }
                header_n = Some(parts[1].parse().map_err(|e| perr(format!("bad vertex count: {e}")))?);
                continue;
            }
            if parts.len() != 3 {
                return Err(perr(format!("expected `u v p`, got {} fields", parts.len())));
            }
            let u: usize = parts[0].parse().map_err(|e| perr(format!("bad vertex id: {e}")))?;
            let v: usize = parts[1].parse().map_err(|e| perr(format!("bad vertex id: {e}")))?;
            let p: f64 = parts[2].parse().map_err(|e| perr(format!("bad probability: {e}")))?;
            raw.push((u, v, p));
        }
        let n = header_n.unwrap_or_else(|| raw.iter().map(|&(u, v, _)| u.max(v) + 1).max().unwrap_or(0));
        Graph::new(n, raw)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    /// Serialize in the text edge-list format (with header).
    pub fn to_text(&self) -> String {
        self.subset_to_text(&self.edge_set())
    }

    /// Serialize only the edges in `subset`, keeping `n`.
    pub fn subset_to_text(&self, subset: &FixedBitSet) -> String {
        let mut s = format!("n {}\n", self.n);
        for e in subset.ones() {
            let ed = &self.edges[e];
            let _ = writeln!(s, "{} {} {}", ed.u, ed.v, ed.p);
        }
        s
    }
}

/// One sampled subgraph `G_p`: the set of realized edge ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    present: FixedBitSet,
}

impl Realization {
    pub fn from_set(present: FixedBitSet) -> Self {
        Realization { present }
    }

    pub fn from_edges(m: usize, edges: impl IntoIterator<Item = usize>) -> Self {
        let mut present = FixedBitSet::with_capacity(m);
        for e in edges {
            present.insert(e);
        }
        Realization { present }
    }

    pub fn present(&self) -> &FixedBitSet {
        &self.present
    }

    pub fn contains(&self, e: usize) -> bool {
        self.present.contains(e)
    }

    pub fn count(&self) -> usize {
        self.present.count_ones(..)
    }

    pub fn into_set(self) -> FixedBitSet {
        self.present
    }
}

/// Realization decision for edge `e` under a realization namespace.
#[inline]
pub fn edge_realized(ns: &SeedContext, e: usize, p: f64) -> bool {
    p >= 1.0 || ns.child("e", e as u64).bernoulli(p)
}

/// Sample `G_p` for the given trial: edge `e` is present iff the PRF draw at
/// `(ctx, "realize", trial, e)` falls below `p_e`.
pub fn sample_realization(g: &Graph, ctx: &SeedContext, trial: u64) -> Realization {
    let ns = ctx.child("realize", trial);
    let mut present = FixedBitSet::with_capacity(g.m());
    for (e, ed) in g.edges().iter().enumerate() {
        if edge_realized(&ns, e, ed.p) {
            present.insert(e);
        }
    }
    Realization { present }
}

/// Iterator over all `2^m` realizations with their probabilities.
pub struct RealizationEnumerator<'g> {
    graph: &'g Graph,
    next: u64,
    end: u64,
}

impl Iterator for RealizationEnumerator<'_> {
    type Item = (Realization, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let mask = self.next;
        self.next += 1;
        let m = self.graph.m();
        let mut present = FixedBitSet::with_capacity(m);
        let mut prob = 1.0;
        for (e, ed) in self.graph.edges().iter().enumerate() {
            if mask >> e & 1 == 1 {
                present.insert(e);
                prob *= ed.p;
            } else {
                prob *= 1.0 - ed.p;
            }
        }
        Some((Realization { present }, prob))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = (self.end - self.next) as usize;
        (r, Some(r))
    }
}

pub fn enumerate_realizations(g: &Graph) -> Result<RealizationEnumerator<'_>, GraphError> {
    enumerate_realizations_capped(g, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_realizations_capped(g: &Graph, cap: usize) -> Result<RealizationEnumerator<'_>, GraphError> {
    if g.m() > cap || g.m() >= 63 {
        return Err(GraphError::EdgeCountExceeded { edges: g.m(), cap });
    }
    Ok(RealizationEnumerator {
        graph: g,
        next: 0,
        end: 1u64 << g.m(),
    })
}

/// Small named graph families and random instances.
pub mod generators {
    use super::*;

    pub fn path(n: usize, p: f64) -> Graph {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::uniform(n, &pairs, p).unwrap()
    }

    pub fn cycle(n: usize, p: f64) -> Graph {
        assert!(n >= 3);
        let pairs: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Graph::uniform(n, &pairs, p).unwrap()
    }

    pub fn complete(n: usize, p: f64) -> Graph {
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                pairs.push((u, v));
            }
        }
        Graph::uniform(n, &pairs, p).unwrap()
    }

    pub fn complete_bipartite(a: usize, b: usize, p: f64) -> Graph {
        let mut pairs = Vec::new();
        for u in 0..a {
            for v in 0..b {
                pairs.push((u, a + v));
            }
        }
        Graph::uniform(a + b, &pairs, p).unwrap()
    }

    /// Star with center 0 and `leaves` leaves.
    pub fn star(leaves: usize, p: f64) -> Graph {
        let pairs: Vec<_> = (1..=leaves).map(|i| (0, i)).collect();
        Graph::uniform(leaves + 1, &pairs, p).unwrap()
    }

    /// `k` vertex-disjoint edges.
    pub fn perfect_matching(k: usize, p: f64) -> Graph {
        let pairs: Vec<_> = (0..k).map(|i| (2 * i, 2 * i + 1)).collect();
        Graph::uniform(2 * k, &pairs, p).unwrap()
    }

    pub fn petersen(p: f64) -> Graph {
        let mut pairs = Vec::new();
        for i in 0..5 {
            pairs.push((i, (i + 1) % 5));
            pairs.push((i, i + 5));
            pairs.push((5 + i, 5 + (i + 2) % 5));
        }
        Graph::uniform(10, &pairs, p).unwrap()
    }

    /// Erdős–Rényi `G(n, edge_prob)` with realization probability `p` on
    /// every edge, drawn from the `("gnp", ·)` namespace of `ctx`.
    pub fn gnp(n: usize, edge_prob: f64, p: f64, ctx: &SeedContext) -> Graph {
        let ns = ctx.child("gnp", n as u64);
        let mut pairs = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if ns.child("pair", (u * n + v) as u64).bernoulli(edge_prob) {
                    pairs.push((u, v));
                }
            }
        }
        Graph::uniform(n, &pairs, p).unwrap()
    }
}
