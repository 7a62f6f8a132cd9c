//! Randomized greedy maximal independent set and its truncated LCA.

use std::collections::HashMap;
use std::hash::Hash;

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::graph::Graph;
use crate::lca::{run_lca, sweep, tape_space, vertex_tape, Granularity, Lca, LcaError, Probe, Site};
use crate::seed::SeedContext;

/// Vertex ranks in `[0, 1)`; the induced order (rank, then id) plays the
/// role of the random permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranks {
    values: Vec<f64>,
}

impl Ranks {
    pub fn from_values(values: Vec<f64>) -> Self {
        Ranks { values }
    }

    /// Ranks read from the vertex tapes of a tape space.
    pub fn from_tapes(g: &Graph, tapes: &SeedContext) -> Self {
        Ranks {
            values: (0..g.n()).map(|v| vertex_tape(tapes, v).unit()).collect(),
        }
    }

    pub fn rank(&self, v: usize) -> f64 {
        self.values[v]
    }

    /// `a` precedes `b` in the permutation.
    pub fn before(&self, a: usize, b: usize) -> bool {
        rank_before((self.values[a], a), (self.values[b], b))
    }

    pub fn order(&self) -> Vec<usize> {
        let mut vs: Vec<usize> = (0..self.values.len()).collect();
        vs.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        vs
    }
}

fn rank_before(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt()
}

/// Membership of `v` in `GMIS(g, π)`: explore lower-ranked neighbors in
/// increasing rank order and stop at the first member.
pub fn gmis_member(g: &Graph, ranks: &Ranks, v: usize) -> bool {
    let mut memo = vec![None; g.n()];
    gmis_rec(g, ranks, v, &mut memo)
}

fn gmis_rec(g: &Graph, ranks: &Ranks, v: usize, memo: &mut [Option<bool>]) -> bool {
    if let Some(b) = memo[v] {
        return b;
    }
    let mut lower: Vec<usize> = g
        .incident(v)
        .iter()
        .map(|&e| g.edge(e).other(v))
        .filter(|&u| ranks.before(u, v))
        .collect();
    lower.sort_by(|&a, &b| ranks.values[a].total_cmp(&ranks.values[b]).then(a.cmp(&b)));
    let mut member = true;
    for u in lower {
        if gmis_rec(g, ranks, u, memo) {
            member = false;
            break;
        }
    }
    memo[v] = Some(member);
    member
}

/// Reference greedy MIS: sort by rank, add every vertex with no earlier
/// member neighbor.
pub fn greedy_mis_by_sweep(g: &Graph, ranks: &Ranks) -> FixedBitSet {
    let mut set = FixedBitSet::with_capacity(g.n());
    for v in ranks.order() {
        if !g.incident(v).iter().any(|&e| set.contains(g.edge(e).other(v))) {
            set.insert(v);
        }
    }
    set
}

/// Cap on the number of recursive membership calls in one root query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TmisBudget {
    pub threshold: usize,
}

impl TmisBudget {
    /// `⌈c·Δ²/ε⌉`, at least 1.
    pub fn from_degree(max_degree: usize, eps: f64, c: f64) -> Self {
        let t = (c * (max_degree * max_degree) as f64 / eps).ceil();
        TmisBudget {
            threshold: if t.is_finite() { (t as usize).max(1) } else { usize::MAX },
        }
    }

    pub fn for_graph(g: &Graph, eps: f64) -> Self {
        Self::from_degree(g.max_degree(), eps, 1.0)
    }

    pub fn unlimited() -> Self {
        TmisBudget { threshold: usize::MAX }
    }

    pub fn is_unlimited(&self) -> bool {
        self.threshold == usize::MAX
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TmisAnswer {
    pub member: bool,
    /// Membership calls made, the root included.
    pub calls: usize,
    pub truncated: bool,
}

/// Conflict graph whose nodes are explored lazily by the truncated greedy
/// procedure.
pub trait ConflictOracle {
    type Node: Copy + Eq + Hash;
    type Error;

    fn is_valid(&mut self, w: Self::Node) -> Result<bool, Self::Error>;

    /// Neighbors of `w` ranked strictly below it, in increasing rank order.
    fn lower_neighbors(&mut self, w: Self::Node) -> Result<Vec<Self::Node>, Self::Error>;
}

struct Frame<N> {
    neighbors: Vec<N>,
    next: usize,
}

/// Truncated greedy membership of `root`.
///
/// Every membership call (the root, valid and invalid nodes alike) counts
/// against `budget`; once a call would exceed it the whole root query stops
/// and reports non-membership. Invalid nodes are never members. `memo`
/// caches finished subcalls and may only be supplied with an unlimited
/// budget, where it cannot change any answer.
pub fn truncated_greedy_member<O: ConflictOracle>(
    oracle: &mut O,
    root: O::Node,
    budget: TmisBudget,
    mut memo: Option<&mut HashMap<O::Node, bool>>,
) -> Result<TmisAnswer, O::Error> {
    debug_assert!(memo.is_none() || budget.is_unlimited());
    let halted = |calls| TmisAnswer {
        member: false,
        calls,
        truncated: true,
    };
    let done = |member, calls| TmisAnswer {
        member,
        calls,
        truncated: false,
    };
    if let Some(&b) = memo.as_ref().and_then(|m| m.get(&root)) {
        return Ok(done(b, 0));
    }
    let mut calls = 1;
    if calls > budget.threshold {
        return Ok(halted(calls - 1));
    }
    if !oracle.is_valid(root)? {
        return Ok(done(false, calls));
    }
    let mut nodes = vec![root];
    let mut stack = vec![Frame {
        neighbors: oracle.lower_neighbors(root)?,
        next: 0,
    }];
    // result of the most recently finished child, if any
    let mut returned: Option<bool> = None;
    loop {
        if returned.take() == Some(true) {
            // a lower neighbor is a member, so the current node is not
            let w = nodes.pop().unwrap();
            stack.pop();
            if let Some(m) = memo.as_deref_mut() {
                m.insert(w, false);
            }
            if stack.is_empty() {
                return Ok(done(false, calls));
            }
            returned = Some(false);
            continue;
        }
        let top = stack.last_mut().unwrap();
        if top.next < top.neighbors.len() {
            let u = top.neighbors[top.next];
            top.next += 1;
            if let Some(&b) = memo.as_ref().and_then(|m| m.get(&u)) {
                returned = Some(b);
                continue;
            }
            calls += 1;
            if calls > budget.threshold {
                return Ok(halted(calls - 1));
            }
            if !oracle.is_valid(u)? {
                returned = Some(false);
                continue;
            }
            let neighbors = oracle.lower_neighbors(u)?;
            nodes.push(u);
            stack.push(Frame { neighbors, next: 0 });
        } else {
            let w = nodes.pop().unwrap();
            stack.pop();
            if let Some(m) = memo.as_deref_mut() {
                m.insert(w, true);
            }
            if stack.is_empty() {
                return Ok(done(true, calls));
            }
            returned = Some(true);
        }
    }
}

/// Vertex conflict graph explored through the probe oracle: learning a
/// neighbor's rank requires probing the connecting edge.
struct ProbedVertices<'p, 'g> {
    probe: &'p mut Probe<'g>,
}

impl ConflictOracle for ProbedVertices<'_, '_> {
    type Node = usize;
    type Error = LcaError;

    fn is_valid(&mut self, _w: usize) -> Result<bool, LcaError> {
        Ok(true)
    }

    fn lower_neighbors(&mut self, v: usize) -> Result<Vec<usize>, LcaError> {
        let g = self.probe.graph();
        let own = (self.probe.vertex_tape(v)?.unit(), v);
        let mut lower = Vec::new();
        for &e in g.incident(v) {
            self.probe.probe_edge(e)?;
            let u = g.edge(e).other(v);
            let key = (self.probe.vertex_tape(u)?.unit(), u);
            if rank_before(key, own) {
                lower.push(key);
            }
        }
        lower.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(lower.into_iter().map(|k| k.1).collect())
    }
}

/// The truncated greedy MIS as a vertex-rooted natural LCA.
#[derive(Debug, Clone, Copy)]
pub struct TmisLca {
    pub budget: TmisBudget,
}

impl Lca for TmisLca {
    type Output = TmisAnswer;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<TmisAnswer, LcaError> {
        let Site::Vertex(v) = root else {
            return Err(LcaError::InvalidSite(root));
        };
        truncated_greedy_member(&mut ProbedVertices { probe }, v, self.budget, None)
    }
}

/// Same LCA reporting only the membership bit.
#[derive(Debug, Clone, Copy)]
pub struct TmisMembership(pub TmisBudget);

impl Lca for TmisMembership {
    type Output = bool;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<bool, LcaError> {
        TmisLca { budget: self.0 }.query(probe, root).map(|a| a.member)
    }
}

pub fn tmis_member(g: &Graph, ctx: &SeedContext, v: usize, budget: TmisBudget) -> Result<TmisAnswer, LcaError> {
    run_lca(&TmisLca { budget }, g, ctx, Site::Vertex(v)).map(|(a, _)| a)
}

/// Query every vertex; the members form the claimed independent set.
pub fn tmis_set(g: &Graph, ctx: &SeedContext, budget: TmisBudget) -> Result<FixedBitSet, LcaError> {
    let sw = sweep(&TmisLca { budget }, g, ctx, Granularity::Vertex)?;
    let mut set = FixedBitSet::with_capacity(g.n());
    for (v, a) in sw.outputs.iter().enumerate() {
        if a.member {
            set.insert(v);
        }
    }
    Ok(set)
}

/// Ranks that `tmis_member` reads under `ctx`.
pub fn tmis_ranks(g: &Graph, ctx: &SeedContext) -> Ranks {
    Ranks::from_tapes(g, &tape_space(ctx))
}

pub fn is_independent(g: &Graph, set: &FixedBitSet) -> bool {
    g.edges().iter().all(|e| !(set.contains(e.u) && set.contains(e.v)))
}

pub fn is_maximal_independent(g: &Graph, set: &FixedBitSet) -> bool {
    is_independent(g, set)
        && (0..g.n()).all(|v| set.contains(v) || g.incident(v).iter().any(|&e| set.contains(g.edge(e).other(v))))
}
