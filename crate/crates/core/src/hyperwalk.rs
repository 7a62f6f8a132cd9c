//! Profiles, hyperwalks and the augmenting-hyperwalk test.
//!
//! A hyperwalk is a non-backtracking walk whose edges carry copy indices in
//! `0..=alpha`. Applying it to a profile adds its odd-position edges to, and
//! removes its even-position edges from, the matching of the indexed copy.

use std::cmp::Ordering;

use fixedbitset::FixedBitSet;
use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;
use crate::lca::{LcaError, Site};
use crate::matching::Matching;
use crate::seed::hash_words;

pub const DEFAULT_WALK_GUARD: usize = 250_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperwalkError {
    #[error("hyperwalk enumeration would produce {count} walks, above the guard of {limit}")]
    EnumerationTooLarge { count: u128, limit: usize },
    #[error("resource guard tripped: {what} exceeded {limit}")]
    ResourceGuard { what: &'static str, limit: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Lca(#[from] LcaError),
}

/// A sequence of `(edge, copy)` pairs along a walk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Hyperwalk {
    steps: Vec<(usize, usize)>,
}

impl Hyperwalk {
    pub fn new(steps: Vec<(usize, usize)>) -> Self {
        Hyperwalk { steps }
    }

    pub fn single(e: usize, copy: usize) -> Self {
        Hyperwalk { steps: vec![(e, copy)] }
    }

    pub fn steps(&self) -> &[(usize, usize)] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.0)
    }

    pub fn reversed(&self) -> Self {
        Hyperwalk {
            steps: self.steps.iter().rev().copied().collect(),
        }
    }

    /// Vertex sequence `v_0, …, v_k`, or `None` when the edges do not form a
    /// walk. A single edge reads `u, v` in stored orientation.
    pub fn vertices(&self, g: &Graph) -> Option<Vec<usize>> {
        let first = *self.steps.first()?;
        let e1 = g.edge(first.0);
        let start = match self.steps.get(1) {
            None => e1.u,
            Some(&(e2, _)) => {
                let e2 = g.edge(e2);
                if e2.touches(e1.v) && !e2.touches(e1.u) {
                    e1.u
                } else if e2.touches(e1.u) && !e2.touches(e1.v) {
                    e1.v
                } else {
                    return None;
                }
            }
        };
        let mut vs = vec![start];
        let mut cur = start;
        for &(e, _) in &self.steps {
            let ed = g.edge(e);
            if !ed.touches(cur) {
                return None;
            }
            cur = ed.other(cur);
            vs.push(cur);
        }
        Some(vs)
    }

    /// Consecutive edges distinct and the edges form a walk.
    pub fn is_walk(&self, g: &Graph) -> bool {
        self.steps.iter().all(|s| s.0 < g.m())
            && self.steps.windows(2).all(|w| w[0].0 != w[1].0)
            && self.vertices(g).is_some()
    }

    pub fn contains_site(&self, g: &Graph, site: Site) -> bool {
        match site {
            Site::Edge(e) => self.edges().any(|x| x == e),
            Site::Vertex(v) => self.vertices(g).is_some_and(|vs| vs.contains(&v)),
        }
    }

    /// The walk read in whichever direction is lexicographically smaller
    /// (edge ids first, then copy indices).
    pub fn canonical(&self) -> Hyperwalk {
        let r = self.reversed();
        if compare_orientation(self, &r) == Ordering::Greater {
            r
        } else {
            self.clone()
        }
    }

    /// Identity of the walk as a conflict-graph node. For odd lengths a walk
    /// and its reversal apply identically, so both map to the canonical
    /// form; for even lengths the two orientations toggle different edge
    /// sets and stay distinct.
    pub fn identity(&self) -> Hyperwalk {
        if self.len() % 2 == 1 {
            self.canonical()
        } else {
            self.clone()
        }
    }

    pub fn encoding_hash(&self) -> u64 {
        hash_words(self.steps.iter().flat_map(|&(e, s)| [e as u64, s as u64]))
    }

    /// Edges added to and removed from copy `i`.
    pub fn toggles(&self, copy: usize) -> (Vec<usize>, Vec<usize>) {
        let mut add = Vec::new();
        let mut remove = Vec::new();
        for (j, &(e, s)) in self.steps.iter().enumerate() {
            if s != copy {
                continue;
            }
            // positions are 1-based: index 0 is odd
            if j % 2 == 0 {
                add.push(e);
            } else {
                remove.push(e);
            }
        }
        (add, remove)
    }
}

fn compare_orientation(a: &Hyperwalk, b: &Hyperwalk) -> Ordering {
    a.edges()
        .cmp(b.edges())
        .then_with(|| a.steps.iter().map(|s| s.1).cmp(b.steps.iter().map(|s| s.1)))
}

/// `((𝒢_0, M_0), …, (𝒢_α, M_α))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub realizations: Vec<FixedBitSet>,
    pub matchings: Vec<Matching>,
}

impl Profile {
    pub fn copies(&self) -> usize {
        self.matchings.len()
    }

    /// Every `M_i` is a matching inside `𝒢_i`.
    pub fn is_valid(&self, g: &Graph) -> bool {
        self.realizations.len() == self.matchings.len()
            && self
                .matchings
                .iter()
                .zip(&self.realizations)
                .all(|(m, r)| m.is_valid(g) && m.edges().iter().all(|&e| r.contains(e)))
    }
}

/// `P ⊕ W`. The result is not checked for validity.
pub fn apply_hyperwalk(p: &Profile, w: &Hyperwalk) -> Profile {
    let matchings = p
        .matchings
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let (add, remove) = w.toggles(i);
            if add.is_empty() && remove.is_empty() {
                return m.clone();
            }
            let mut edges: Vec<usize> = m.edges().iter().copied().chain(add).collect();
            edges.retain(|e| !remove.contains(e));
            Matching::from_edges(edges)
        })
        .collect();
    Profile {
        realizations: p.realizations.clone(),
        matchings,
    }
}

/// `d_P(v)`: number of copies whose matching covers `v`.
pub fn degree_in_profile(g: &Graph, p: &Profile, v: usize) -> usize {
    p.matchings
        .iter()
        .filter(|m| m.edges().iter().any(|&e| g.edge(e).touches(v)))
        .count()
}

/// Augmenting test by full application: every `M'_i` is a matching inside
/// `𝒢_i`, each endpoint gains exactly one in `d`, every other vertex of the
/// walk keeps its `d`, and both endpoints are unsaturated.
pub fn is_augmenting(g: &Graph, p: &Profile, w: &Hyperwalk, unsaturated: impl Fn(usize) -> bool) -> bool {
    let Some(vs) = w.vertices(g) else {
        return false;
    };
    if w.steps.iter().any(|&(_, s)| s >= p.copies()) {
        return false;
    }
    let (a, b) = (vs[0], *vs.last().unwrap());
    if !unsaturated(a) || !unsaturated(b) {
        return false;
    }
    let q = apply_hyperwalk(p, w);
    if !q.is_valid(g) {
        return false;
    }
    let mut seen = vs.clone();
    seen.sort_unstable();
    seen.dedup();
    seen.into_iter().all(|v| {
        let before = degree_in_profile(g, p, v);
        let after = degree_in_profile(g, &q, v);
        if v == a || v == b {
            after == before + 1
        } else {
            after == before
        }
    })
}

/// The same test evaluated only from the neighborhood of the walk: `in_m(i,
/// e)` reports whether `e ∈ M_i` for every edge incident to a walk vertex,
/// and `realized(i, e)` whether `e ∈ 𝒢_i`. This is the form the LCA uses.
pub fn is_augmenting_local(
    g: &Graph,
    w: &Hyperwalk,
    vertices: &[usize],
    copies: usize,
    mut in_m: impl FnMut(usize, usize) -> bool,
    mut realized: impl FnMut(usize, usize) -> bool,
) -> bool {
    let (a, b) = (vertices[0], *vertices.last().unwrap());
    let mut distinct = vertices.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut d_before = vec![0usize; distinct.len()];
    let mut d_after = vec![0usize; distinct.len()];
    for i in 0..copies {
        let (add, remove) = w.toggles(i);
        for &e in &add {
            if !remove.contains(&e) && !realized(i, e) {
                return false;
            }
        }
        for (k, &u) in distinct.iter().enumerate() {
            let mut before = 0;
            let mut after = 0;
            for &e in g.incident(u) {
                let old = in_m(i, e);
                let new = (old || add.contains(&e)) && !remove.contains(&e);
                before += old as usize;
                after += new as usize;
            }
            if after > 1 {
                return false;
            }
            d_before[k] += (before > 0) as usize;
            d_after[k] += (after > 0) as usize;
        }
    }
    distinct.iter().enumerate().all(|(k, &u)| {
        if u == a || u == b {
            d_after[k] == d_before[k] + 1
        } else {
            d_after[k] == d_before[k]
        }
    })
}

/// Number of non-backtracking edge sequences of each length `1..=max_len`
/// (index `k - 1`), counted by a transfer recursion over directed edges.
pub fn count_structural_walks(g: &Graph, max_len: usize) -> Vec<u128> {
    // ways[d] for directed edge d = 2e (u→v) or 2e+1 (v→u)
    let m = g.m();
    let mut counts = Vec::with_capacity(max_len);
    if max_len == 0 {
        return counts;
    }
    counts.push(m as u128);
    let head = |d: usize| {
        let ed = g.edge(d / 2);
        if d.is_multiple_of(2) {
            ed.v
        } else {
            ed.u
        }
    };
    let mut ways = vec![1u128; 2 * m];
    for _ in 2..=max_len {
        let mut next = vec![0u128; 2 * m];
        for (d, &w) in ways.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let h = head(d);
            for &f in g.incident(h) {
                if f == d / 2 {
                    continue;
                }
                let nd = if g.edge(f).u == h { 2 * f } else { 2 * f + 1 };
                next[nd] = next[nd].saturating_add(w);
            }
        }
        counts.push(next.iter().fold(0u128, |a, &x| a.saturating_add(x)));
        ways = next;
    }
    counts
}

/// Total hyperwalks (with copy indices) of length at most `max_len`.
pub fn count_hyperwalks(g: &Graph, max_len: usize, alpha: usize) -> u128 {
    count_structural_walks(g, max_len)
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.saturating_mul((alpha as u128 + 1).saturating_pow(i as u32 + 1)))
        .fold(0u128, |a, x| a.saturating_add(x))
}

/// Every non-backtracking edge sequence of length `1..=max_len`, each
/// orientation listed separately (single edges once).
fn structural_walks(g: &Graph, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for e in 0..g.m() {
        out.push(vec![e]);
    }
    if max_len < 2 {
        return out;
    }
    fn extend(g: &Graph, cur: usize, walk: &mut Vec<usize>, max_len: usize, out: &mut Vec<Vec<usize>>) {
        if walk.len() >= 2 {
            out.push(walk.clone());
        }
        if walk.len() == max_len {
            return;
        }
        let last = *walk.last().unwrap();
        for &f in g.incident(cur) {
            if f == last {
                continue;
            }
            walk.push(f);
            extend(g, g.edge(f).other(cur), walk, max_len, out);
            walk.pop();
        }
    }
    for start in 0..g.n() {
        for &e in g.incident(start) {
            let mut walk = vec![e];
            extend(g, g.edge(e).other(start), &mut walk, max_len, &mut out);
        }
    }
    out
}

fn expand_indices(edges: &[usize], alpha: usize, out: &mut Vec<Hyperwalk>) {
    let k = edges.len();
    let base = alpha + 1;
    let total = base.pow(k as u32);
    for mut code in 0..total {
        let mut steps = Vec::with_capacity(k);
        for &e in edges {
            steps.push((e, code % base));
            code /= base;
        }
        out.push(Hyperwalk { steps });
    }
}

/// Every hyperwalk of length at most `max_len` that contains `site`, as
/// sequences (a walk and its reversal are listed separately), sorted.
pub fn enumerate_hyperwalks_containing(
    g: &Graph,
    site: Site,
    max_len: usize,
    alpha: usize,
    guard: usize,
) -> Result<Vec<Hyperwalk>, HyperwalkError> {
    let total = count_hyperwalks(g, max_len, alpha);
    if total > guard as u128 {
        return Err(HyperwalkError::EnumerationTooLarge { count: total, limit: guard });
    }
    let mut out = Vec::new();
    for edges in structural_walks(g, max_len) {
        let probe = Hyperwalk {
            steps: edges.iter().map(|&e| (e, 0)).collect(),
        };
        if probe.contains_site(g, site) {
            expand_indices(&edges, alpha, &mut out);
        }
    }
    out.sort();
    Ok(out)
}

/// All conflict-graph nodes (hyperwalk identities) of a graph with the
/// incidence lists needed to explore them locally.
#[derive(Debug, Clone)]
pub struct HyperwalkIndex {
    pub alpha: usize,
    pub max_len: usize,
    walks: Vec<Hyperwalk>,
    vertices: Vec<Vec<usize>>,
    distinct_vertices: Vec<Vec<usize>>,
    hashes: Vec<u64>,
    by_edge: Vec<Vec<u32>>,
    by_vertex: Vec<Vec<u32>>,
}

impl HyperwalkIndex {
    pub fn build(g: &Graph, max_len: usize, alpha: usize, guard: usize) -> Result<Self, HyperwalkError> {
        if max_len == 0 {
            return Err(HyperwalkError::InvalidParams("walk length must be at least 1".into()));
        }
        let total = count_hyperwalks(g, max_len, alpha);
        if total > guard as u128 {
            return Err(HyperwalkError::EnumerationTooLarge { count: total, limit: guard });
        }
        let mut walks = Vec::new();
        for edges in structural_walks(g, max_len) {
            let k = edges.len();
            if k % 2 == 1 && k > 1 {
                let rev: Vec<usize> = edges.iter().rev().copied().collect();
                if rev < edges {
                    continue;
                }
            }
            expand_indices(&edges, alpha, &mut walks);
        }
        walks.sort();
        let mut by_edge = vec![Vec::new(); g.m()];
        let mut by_vertex = vec![Vec::new(); g.n()];
        let mut vertices = Vec::with_capacity(walks.len());
        let mut distinct_vertices = Vec::with_capacity(walks.len());
        let mut hashes = Vec::with_capacity(walks.len());
        for (id, w) in walks.iter().enumerate() {
            let vs = w.vertices(g).expect("enumerated walks are walks");
            let mut d = vs.clone();
            d.sort_unstable();
            d.dedup();
            for &v in &d {
                by_vertex[v].push(id as u32);
            }
            let mut es: Vec<usize> = w.edges().collect();
            es.sort_unstable();
            es.dedup();
            for e in es {
                by_edge[e].push(id as u32);
            }
            vertices.push(vs);
            distinct_vertices.push(d);
            hashes.push(w.encoding_hash());
        }
        Ok(HyperwalkIndex {
            alpha,
            max_len,
            walks,
            vertices,
            distinct_vertices,
            hashes,
            by_edge,
            by_vertex,
        })
    }

    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn walk(&self, id: usize) -> &Hyperwalk {
        &self.walks[id]
    }

    pub fn walks(&self) -> &[Hyperwalk] {
        &self.walks
    }

    pub fn id_of(&self, w: &Hyperwalk) -> Option<usize> {
        self.walks.binary_search(&w.identity()).ok()
    }

    /// Vertex sequence of walk `id`.
    pub fn vertices(&self, id: usize) -> &[usize] {
        &self.vertices[id]
    }

    pub fn distinct_vertices(&self, id: usize) -> &[usize] {
        &self.distinct_vertices[id]
    }

    pub fn hash(&self, id: usize) -> u64 {
        self.hashes[id]
    }

    pub fn containing_edge(&self, e: usize) -> &[u32] {
        &self.by_edge[e]
    }

    pub fn containing_vertex(&self, v: usize) -> &[u32] {
        &self.by_vertex[v]
    }

    /// Walks sharing a vertex with `id`, excluding `id`, sorted by id.
    pub fn neighbors(&self, id: usize) -> Vec<u32> {
        let mut out: Vec<u32> = self.distinct_vertices[id]
            .iter()
            .flat_map(|&v| self.by_vertex[v].iter().copied())
            .filter(|&x| x as usize != id)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Largest number of walks through one vertex.
    pub fn max_walks_per_vertex(&self) -> usize {
        self.by_vertex.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_walks_per_edge(&self) -> usize {
        self.by_edge.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Edges incident to any vertex of walk `id`, sorted.
    pub fn neighborhood_edges(&self, g: &Graph, id: usize) -> Vec<usize> {
        let mut es: Vec<usize> = self.distinct_vertices[id]
            .iter()
            .flat_map(|&v| g.incident(v).iter().copied())
            .collect();
        es.sort_unstable();
        es.dedup();
        es
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;

    fn empty_profile(g: &Graph, copies: usize) -> Profile {
        Profile {
            realizations: vec![g.edge_set(); copies],
            matchings: vec![Matching::empty(); copies],
        }
    }

    #[test]
    fn apply_single_odd_edge() {
        let g = path(2, 1.0);
        let p = empty_profile(&g, 1);
        let q = apply_hyperwalk(&p, &Hyperwalk::single(0, 0));
        assert_eq!(q.matchings[0].edges(), &[0]);
    }

    #[test]
    fn apply_respects_parity() {
        // path 0-1-2-3-4 with edges 0..4; M0 = {1}
        let g = path(5, 1.0);
        let mut p = empty_profile(&g, 1);
        p.matchings[0] = Matching::from_edges(vec![1]);
        let w = Hyperwalk::new(vec![(0, 0), (1, 0), (2, 0)]);
        let q = apply_hyperwalk(&p, &w);
        assert_eq!(q.matchings[0].edges(), &[0, 2]);
    }

    #[test]
    fn apply_other_copy_leaves_m0() {
        let g = path(3, 1.0);
        let p = empty_profile(&g, 2);
        let q = apply_hyperwalk(&p, &Hyperwalk::single(1, 1));
        assert!(q.matchings[0].is_empty());
        assert_eq!(q.matchings[1].edges(), &[1]);
    }

    #[test]
    fn degree_counts_copies() {
        let g = path(3, 1.0);
        let mut p = empty_profile(&g, 3);
        assert_eq!(degree_in_profile(&g, &p, 1), 0);
        p.matchings[0] = Matching::from_edges(vec![0]);
        assert_eq!(degree_in_profile(&g, &p, 1), 1);
        p.matchings[1] = Matching::from_edges(vec![1]);
        p.matchings[2] = Matching::from_edges(vec![0]);
        assert_eq!(degree_in_profile(&g, &p, 1), 3);
        assert_eq!(degree_in_profile(&g, &p, 2), 1);
    }

    #[test]
    fn augmenting_single_edge() {
        let g = path(2, 1.0);
        let p = empty_profile(&g, 1);
        let w = Hyperwalk::single(0, 0);
        assert!(is_augmenting(&g, &p, &w, |_| true));
        assert!(!is_augmenting(&g, &p, &w, |v| v != 1));
    }

    #[test]
    fn augmenting_rejects_double_match() {
        // M1 already covers vertex 1 via edge 1; adding edge 0 in copy 1
        // would give vertex 1 two matched edges there
        let g = path(3, 1.0);
        let mut p = empty_profile(&g, 2);
        p.matchings[1] = Matching::from_edges(vec![1]);
        let w = Hyperwalk::single(0, 1);
        let q = apply_hyperwalk(&p, &w);
        assert!(!q.matchings[1].is_valid(&g));
        assert!(!is_augmenting(&g, &p, &w, |_| true));
    }

    #[test]
    fn augmenting_requires_realized_edge() {
        let g = path(2, 0.5);
        let mut p = empty_profile(&g, 1);
        p.realizations[0] = FixedBitSet::with_capacity(1);
        assert!(!is_augmenting(&g, &p, &Hyperwalk::single(0, 0), |_| true));
    }

    #[test]
    fn walk_vertices() {
        let g = path(4, 1.0);
        let w = Hyperwalk::new(vec![(2, 0), (1, 0), (0, 0)]);
        assert_eq!(w.vertices(&g).unwrap(), vec![3, 2, 1, 0]);
        assert!(Hyperwalk::new(vec![(0, 0), (2, 0)]).vertices(&g).is_none());
        assert!(!Hyperwalk::new(vec![(0, 0), (0, 0)]).is_walk(&g));
    }

    #[test]
    fn identity_merges_odd_reversals_only() {
        let g = path(5, 1.0);
        let w = Hyperwalk::new(vec![(2, 1), (1, 0), (0, 0)]);
        assert_eq!(w.identity(), w.reversed().identity());
        let even = Hyperwalk::new(vec![(1, 0), (0, 0)]);
        assert_ne!(even.identity(), even.reversed().identity());
        assert!(w.is_walk(&g));
    }

    #[test]
    fn single_edge_counts() {
        let g = path(2, 1.0);
        for alpha in 0..4 {
            let ws = enumerate_hyperwalks_containing(&g, Site::Edge(0), 1, alpha, 1000).unwrap();
            assert_eq!(ws.len(), alpha + 1);
        }
        let ws = enumerate_hyperwalks_containing(&g, Site::Edge(0), 1, 0, 1000).unwrap();
        assert_eq!(ws, vec![Hyperwalk::single(0, 0)]);
    }

    #[test]
    fn two_edge_path_middle() {
        let g = path(3, 1.0);
        let ws = enumerate_hyperwalks_containing(&g, Site::Vertex(1), 2, 0, 1000).unwrap();
        let seqs: Vec<Vec<usize>> = ws.iter().map(|w| w.edges().collect()).collect();
        assert_eq!(seqs, vec![vec![0], vec![0, 1], vec![1], vec![1, 0]]);
    }

    #[test]
    fn star_closed_forms() {
        for d in 2..6 {
            let g = star(d, 1.0);
            for alpha in 0..3 {
                let b = alpha + 1;
                for l in 1..4 {
                    let center = enumerate_hyperwalks_containing(&g, Site::Vertex(0), l, alpha, 1_000_000).unwrap();
                    let mut expect = d * b;
                    if l >= 2 {
                        expect += d * (d - 1) * b * b;
                    }
                    assert_eq!(center.len(), expect);
                    let leaf = enumerate_hyperwalks_containing(&g, Site::Vertex(1), l, alpha, 1_000_000).unwrap();
                    let mut expect = b;
                    if l >= 2 {
                        expect += 2 * (d - 1) * b * b;
                    }
                    assert_eq!(leaf.len(), expect);
                }
            }
        }
    }

    #[test]
    fn cycle_closed_form() {
        // on C_n a walk of length k ≥ 2 runs one way round: 2 directions,
        // k + 1 positions for the vertex
        let n = 7;
        let g = cycle(n, 1.0);
        for alpha in 0..3usize {
            let b = alpha + 1;
            for l in 1..=4usize {
                let got = enumerate_hyperwalks_containing(&g, Site::Vertex(3), l, alpha, 1_000_000).unwrap();
                let mut expect = 2 * b;
                for k in 2..=l {
                    expect += 2 * (k + 1) * b.pow(k as u32);
                }
                assert_eq!(got.len(), expect);
            }
        }
    }

    #[test]
    fn guard_trips() {
        let g = complete(6, 1.0);
        assert!(matches!(
            enumerate_hyperwalks_containing(&g, Site::Vertex(0), 6, 3, 1000),
            Err(HyperwalkError::EnumerationTooLarge { .. })
        ));
    }

    /// Count non-backtracking walks by brute force over all edge sequences.
    fn brute_count(g: &Graph, len: usize) -> u128 {
        let m = g.m();
        let mut total = 0;
        let mut seq = vec![0usize; len];
        loop {
            let w = Hyperwalk::new(seq.iter().map(|&e| (e, 0)).collect());
            if w.is_walk(g) {
                total += 1;
            }
            let mut i = 0;
            loop {
                if i == len {
                    return total;
                }
                seq[i] += 1;
                if seq[i] < m {
                    break;
                }
                seq[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn structural_counts_match_brute_force() {
        for g in [path(5, 1.0), cycle(5, 1.0), complete(4, 1.0), star(4, 1.0), petersen(1.0)] {
            let counts = count_structural_walks(&g, 3);
            let listed = structural_walks(&g, 3);
            for k in 1..=3 {
                assert_eq!(counts[k - 1], brute_count(&g, k));
                assert_eq!(listed.iter().filter(|w| w.len() == k).count() as u128, counts[k - 1]);
            }
        }
    }

    #[test]
    fn index_dedupes_odd_reversals() {
        let g = path(4, 1.0);
        let idx = HyperwalkIndex::build(&g, 3, 1, 100_000).unwrap();
        // structural: 3 singles, 4 oriented pairs, 2 oriented triples
        // objects: 3·2 + 4·4 + 1·8
        assert_eq!(idx.len(), 6 + 16 + 8);
        for (id, w) in idx.walks().iter().enumerate() {
            assert_eq!(idx.id_of(w), Some(id));
            if w.len() % 2 == 1 {
                assert_eq!(idx.id_of(&w.reversed()), Some(id));
            }
        }
    }

    fn random_profile(g: &Graph, copies: usize, seed: u64) -> Profile {
        use crate::graph::sample_realization;
        use crate::matching::maximum_matching;
        use crate::seed::SeedContext;
        let ctx = SeedContext::new(seed);
        let mut realizations = Vec::new();
        let mut matchings = Vec::new();
        for i in 0..copies {
            let r = sample_realization(g, &ctx, i as u64).into_set();
            // keep only part of a maximum matching so augmentations exist
            let mm = maximum_matching(g, &r);
            let kept: Vec<usize> = mm
                .edges()
                .iter()
                .copied()
                .filter(|&e| ctx.child("keep", (i * 100 + e) as u64).bernoulli(0.5))
                .collect();
            matchings.push(Matching::from_edges(kept));
            realizations.push(r);
        }
        Profile { realizations, matchings }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(40))]

        #[test]
        fn local_and_global_augmenting_agree(seed in 0u64..5000, alpha in 0usize..3) {
            let g = gnp(7, 0.45, 0.6, &crate::seed::SeedContext::new(seed));
            let p = random_profile(&g, alpha + 1, seed);
            let idx = HyperwalkIndex::build(&g, 3, alpha, 200_000).unwrap();
            let sets: Vec<FixedBitSet> = p.matchings.iter().map(|m| m.to_set(g.m())).collect();
            for id in 0..idx.len() {
                let w = idx.walk(id);
                let global = is_augmenting(&g, &p, w, |_| true);
                let local = is_augmenting_local(
                    &g,
                    w,
                    idx.vertices(id),
                    alpha + 1,
                    |i, e| sets[i].contains(e),
                    |i, e| p.realizations[i].contains(e),
                );
                proptest::prop_assert_eq!(global, local, "walk {:?}", w);
                if global {
                    let q = apply_hyperwalk(&p, w);
                    proptest::prop_assert!(q.is_valid(&g));
                    // d grows by one at each endpoint, so one more matched edge overall
                    let before: usize = p.matchings.iter().map(Matching::len).sum();
                    let after: usize = q.matchings.iter().map(Matching::len).sum();
                    proptest::prop_assert_eq!(after, before + 1);
                }
            }
        }
    }
}
