//! Maximum matching on general graphs, fractional matchings, and the
//! odd-set (blossom) inequality checker.

use fixedbitset::FixedBitSet;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{enumerate_realizations_capped, Graph, GraphError, DEFAULT_ENUMERATION_CAP};

/// Largest odd-set size `check_blossom` will enumerate.
pub const BLOSSOM_SET_CAP: usize = 15;

#[derive(Debug, Error)]
pub enum MatchingError {
    #[error("odd-set size cap {requested} exceeds the supported maximum {max}")]
    CapExceeded { requested: usize, max: usize },
    #[error("eps must lie in (0, 1], got {0}")]
    InvalidEps(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A set of vertex-disjoint edges, stored as increasing edge ids.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct Matching {
    edges: Vec<usize>,
}

impl Matching {
    pub fn empty() -> Self {
        Matching { edges: Vec::new() }
    }

    /// Build from edge ids, sorting them. Does not check disjointness.
    pub fn from_edges(mut edges: Vec<usize>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        Matching { edges }
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.edges.binary_search(&e).is_ok()
    }

    pub fn to_set(&self, m: usize) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(m);
        for &e in &self.edges {
            s.insert(e);
        }
        s
    }

    /// Matched vertices `V(M)`.
    pub fn vertices(&self, g: &Graph) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(g.n());
        for &e in &self.edges {
            let ed = g.edge(e);
            s.insert(ed.u);
            s.insert(ed.v);
        }
        s
    }

    /// True iff every edge exists in `g` and no two edges share an endpoint.
    pub fn is_valid(&self, g: &Graph) -> bool {
        let mut used = FixedBitSet::with_capacity(g.n());
        for &e in &self.edges {
            if e >= g.m() {
                return false;
            }
            let ed = g.edge(e);
            if used.contains(ed.u) || used.contains(ed.v) {
                return false;
            }
            used.insert(ed.u);
            used.insert(ed.v);
        }
        true
    }
}

const NONE: usize = usize::MAX;

/// Edmonds' blossom algorithm restricted to the edges in `active`.
///
/// Free vertices are grown in increasing id order and neighbors are scanned
/// in adjacency (edge id) order, so the returned edge set is a fixed function
/// of `(g, active)`.
pub fn maximum_matching(g: &Graph, active: &FixedBitSet) -> Matching {
    let mut solver = Blossom::new(g, active);
    solver.run();
    solver.into_matching()
}

/// `μ` of the subgraph induced by `active`.
pub fn matching_number(g: &Graph, active: &FixedBitSet) -> usize {
    let mut solver = Blossom::new(g, active);
    solver.run();
    solver.size
}

struct Blossom<'a> {
    g: &'a Graph,
    active: &'a FixedBitSet,
    mate: Vec<usize>,
    parent: Vec<usize>,
    base: Vec<usize>,
    used: Vec<bool>,
    in_blossom: Vec<bool>,
    queue: std::collections::VecDeque<usize>,
    size: usize,
}

impl<'a> Blossom<'a> {
    fn new(g: &'a Graph, active: &'a FixedBitSet) -> Self {
        let n = g.n();
        Blossom {
            g,
            active,
            mate: vec![NONE; n],
            parent: vec![NONE; n],
            base: (0..n).collect(),
            used: vec![false; n],
            in_blossom: vec![false; n],
            queue: std::collections::VecDeque::new(),
            size: 0,
        }
    }

    fn is_active(&self, e: usize) -> bool {
        e < self.active.len() && self.active.contains(e)
    }

    fn run(&mut self) {
        for root in 0..self.g.n() {
            if self.mate[root] != NONE {
                continue;
            }
            if !self.g.incident(root).iter().any(|&e| self.is_active(e)) {
                continue;
            }
            if let Some(end) = self.find_path(root) {
                self.augment(end);
                self.size += 1;
            }
        }
    }

    fn augment(&mut self, mut v: usize) {
        while v != NONE {
            let pv = self.parent[v];
            let ppv = self.mate[pv];
            self.mate[v] = pv;
            self.mate[pv] = v;
            v = ppv;
        }
    }

    fn lca(&self, mut a: usize, mut b: usize) -> usize {
        let mut seen = vec![false; self.g.n()];
        loop {
            a = self.base[a];
            seen[a] = true;
            if self.mate[a] == NONE {
                break;
            }
            a = self.parent[self.mate[a]];
        }
        loop {
            b = self.base[b];
            if seen[b] {
                return b;
            }
            b = self.parent[self.mate[b]];
        }
    }

    fn mark_path(&mut self, mut v: usize, b: usize, mut child: usize) {
        while self.base[v] != b {
            self.in_blossom[self.base[v]] = true;
            self.in_blossom[self.base[self.mate[v]]] = true;
            self.parent[v] = child;
            child = self.mate[v];
            v = self.parent[self.mate[v]];
        }
    }

    fn find_path(&mut self, root: usize) -> Option<usize> {
        let n = self.g.n();
        self.used.iter_mut().for_each(|x| *x = false);
        self.parent.iter_mut().for_each(|x| *x = NONE);
        for (i, b) in self.base.iter_mut().enumerate() {
            *b = i;
        }
        self.used[root] = true;
        self.queue.clear();
        self.queue.push_back(root);
        while let Some(v) = self.queue.pop_front() {
            for idx in 0..self.g.incident(v).len() {
                let e = self.g.incident(v)[idx];
                if !self.is_active(e) {
                    continue;
                }
                let to = self.g.edge(e).other(v);
                if self.base[v] == self.base[to] || self.mate[v] == to {
                    continue;
                }
                if to == root || (self.mate[to] != NONE && self.parent[self.mate[to]] != NONE) {
                    let cur = self.lca(v, to);
                    self.in_blossom.iter_mut().for_each(|x| *x = false);
                    self.mark_path(v, cur, to);
                    self.mark_path(to, cur, v);
                    for i in 0..n {
                        if self.in_blossom[self.base[i]] {
                            self.base[i] = cur;
                            if !self.used[i] {
                                self.used[i] = true;
                                self.queue.push_back(i);
                            }
                        }
                    }
                } else if self.parent[to] == NONE {
                    self.parent[to] = v;
                    if self.mate[to] == NONE {
                        return Some(to);
                    }
                    let next = self.mate[to];
                    self.used[next] = true;
                    self.queue.push_back(next);
                }
            }
        }
        None
    }

    fn into_matching(self) -> Matching {
        let mut edges = Vec::with_capacity(self.size);
        for v in 0..self.g.n() {
            let u = self.mate[v];
            if u != NONE && v < u {
                edges.push(self.g.edge_between(v, u).expect("matched pair is an edge"));
            }
        }
        Matching::from_edges(edges)
    }
}

/// `E[μ(G_p)]` by summing over every realization.
pub fn matching_size_expectation_exact(g: &Graph) -> Result<f64, GraphError> {
    matching_size_expectation_exact_capped(g, DEFAULT_ENUMERATION_CAP)
}

pub fn matching_size_expectation_exact_capped(g: &Graph, cap: usize) -> Result<f64, GraphError> {
    let mut total = 0.0;
    for (r, pr) in enumerate_realizations_capped(g, cap)? {
        if pr > 0.0 {
            total += pr * matching_number(g, r.present()) as f64;
        }
    }
    Ok(total)
}

/// Edge-indexed values; a fractional matching when every vertex load is ≤ 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FractionalMatching {
    values: Vec<f64>,
}

impl FractionalMatching {
    pub fn zeros(m: usize) -> Self {
        FractionalMatching { values: vec![0.0; m] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        FractionalMatching { values }
    }

    pub fn from_matching(mat: &Matching, m: usize) -> Self {
        let mut f = Self::zeros(m);
        for &e in mat.edges() {
            f.values[e] = 1.0;
        }
        f
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn set(&mut self, e: usize, x: f64) {
        self.values[e] = x;
    }

    /// `|f| = Σ_e f_e`.
    pub fn size(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `f_v = Σ_{e∋v} f_e`.
    pub fn vertex_load(&self, g: &Graph, v: usize) -> f64 {
        g.incident(v).iter().map(|&e| self.values[e]).sum()
    }

    pub fn vertex_loads(&self, g: &Graph) -> Vec<f64> {
        let mut loads = vec![0.0; g.n()];
        for (e, ed) in g.edges().iter().enumerate() {
            loads[ed.u] += self.values[e];
            loads[ed.v] += self.values[e];
        }
        loads
    }

    pub fn support(&self) -> FixedBitSet {
        let mut s = FixedBitSet::with_capacity(self.values.len());
        for (e, &x) in self.values.iter().enumerate() {
            if x > 0.0 {
                s.insert(e);
            }
        }
        s
    }

    /// Values in `[0, 1]` and vertex loads at most `1 + tol`.
    pub fn is_valid(&self, g: &Graph, tol: f64) -> bool {
        self.values.len() == g.m()
            && self.values.iter().all(|&x| (0.0..=1.0 + tol).contains(&x))
            && self.vertex_loads(g).iter().all(|&l| l <= 1.0 + tol)
    }
}

pub fn fractional_size(f: &FractionalMatching) -> f64 {
    f.size()
}

pub fn vertex_load(f: &FractionalMatching, g: &Graph, v: usize) -> f64 {
    f.vertex_load(g, v)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlossomViolation {
    pub vertices: Vec<usize>,
    pub mass: f64,
    pub bound: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateReport {
    pub max_set_size: usize,
    pub sets_checked: usize,
    pub violations: Vec<BlossomViolation>,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `f(E[S]) ≤ ⌊|S|/2⌋` for every odd `S` with `3 ≤ |S| ≤ ⌊1/eps⌋`.
///
/// Only sets that are connected in the support of `f` are enumerated: a
/// violated disconnected set always has a violated odd component, so the
/// verdict is unchanged.
pub fn check_blossom(f: &FractionalMatching, g: &Graph, eps: f64) -> Result<CertificateReport, MatchingError> {
    check_blossom_with_tolerance(f, g, eps, 1e-12)
}

pub fn check_blossom_with_tolerance(
    f: &FractionalMatching,
    g: &Graph,
    eps: f64,
    tol: f64,
) -> Result<CertificateReport, MatchingError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(MatchingError::InvalidEps(eps));
    }
    let kmax = (1.0 / eps + 1e-12).floor() as usize;
    if kmax > BLOSSOM_SET_CAP {
        return Err(MatchingError::CapExceeded {
            requested: kmax,
            max: BLOSSOM_SET_CAP,
        });
    }
    let n = g.n();
    // support adjacency: (neighbor, edge)
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, ed) in g.edges().iter().enumerate() {
        if f.get(e) > 0.0 {
            adj[ed.u].push((ed.v, e));
            adj[ed.v].push((ed.u, e));
        }
    }
    let mut report = CertificateReport {
        max_set_size: kmax,
        sets_checked: 0,
        violations: Vec::new(),
    };
    if kmax < 3 {
        return Ok(report);
    }
    let mut in_set = vec![false; n];
    for v in 0..n {
        if adj[v].is_empty() {
            continue;
        }
        let mut set = vec![v];
        in_set[v] = true;
        let ext: Vec<usize> = adj[v].iter().map(|&(w, _)| w).filter(|&w| w > v).collect();
        let mut ext = ext;
        ext.sort_unstable();
        ext.dedup();
        esu_extend(&adj, f, kmax, v, &mut set, &mut in_set, ext, &mut report, tol);
        in_set[v] = false;
    }
    Ok(report)
}

// ESU enumeration (Wernicke): every connected set whose minimum vertex is
// `anchor` is produced exactly once.
#[allow(clippy::too_many_arguments)]
fn esu_extend(
    adj: &[Vec<(usize, usize)>],
    f: &FractionalMatching,
    kmax: usize,
    anchor: usize,
    set: &mut Vec<usize>,
    in_set: &mut [bool],
    mut ext: Vec<usize>,
    report: &mut CertificateReport,
    tol: f64,
) {
    if set.len() % 2 == 1 && set.len() >= 3 {
        report.sets_checked += 1;
        let mass: f64 = set
            .iter()
            .flat_map(|&u| adj[u].iter().filter(move |&&(w, _)| u < w).map(|&(w, e)| (w, e)))
            .filter(|&(w, _)| in_set[w])
            .map(|(_, e)| f.get(e))
            .sum();
        let bound = set.len() / 2;
        if mass > bound as f64 + tol {
            let mut vertices = set.clone();
            vertices.sort_unstable();
            report.violations.push(BlossomViolation { vertices, mass, bound });
        }
    }
    if set.len() == kmax {
        return;
    }
    while let Some(w) = ext.pop() {
        // exclusive neighbourhood of w with respect to the current set
        let mut next = ext.clone();
        for &(x, _) in &adj[w] {
            if x > anchor
                && !in_set[x]
                && !next.contains(&x)
                && x != w
                && !set.iter().any(|&s| adj[s].iter().any(|&(y, _)| y == x))
            {
                next.push(x);
            }
        }
        set.push(w);
        in_set[w] = true;
        esu_extend(adj, f, kmax, anchor, set, in_set, next, report, tol);
        in_set[w] = false;
        set.pop();
    }
}
