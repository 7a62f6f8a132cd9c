//! The recursive hyperwalk matcher `𝓑(H, r)`, both as a materializing
//! reference implementation and as an edge-oriented natural LCA.
//!
//! Every node of the recursion tree is identified by its lineage: copy 0
//! inherits its parent's realization and namespace, while copy `i ≥ 1` at
//! level `r` gets a fresh realization keyed by `(lineage, r, i)`. Ranks of
//! hyperwalks are drawn per node from the tape of the walk's first edge, so
//! the reference implementation and the LCA see identical randomness.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;

use crate::graph::{enumerate_realizations_capped, sample_realization, Graph, DEFAULT_ENUMERATION_CAP};
use crate::hyperwalk::{is_augmenting_local, HyperwalkError, HyperwalkIndex, Profile, DEFAULT_WALK_GUARD};
use crate::lca::{edge_tape, tape_space, Lca, LcaError, Probe, Site};
use crate::matching::{maximum_matching, Matching};
use crate::mis::{truncated_greedy_member, ConflictOracle, TmisBudget};
use crate::seed::{hash_words, SeedContext};
use crate::sparsifier::AUTO_EXACT_EDGES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MisBudgetRule {
    /// `⌈Δ̃³/ε⌉` with `Δ̃` the largest number of walks through one vertex.
    Theory,
    Fixed(usize),
    Unlimited,
}

/// Knobs of `𝓑`. `theory` reproduces the analysis constants; they are far
/// beyond desk-scale budgets, so experiments use small values instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BParams {
    /// Number of copies minus one.
    pub alpha: usize,
    /// Longest hyperwalk considered.
    pub walk_len: usize,
    /// Recursion depth `r` of the top-level call.
    pub depth: usize,
    pub mis_budget: MisBudgetRule,
    /// Unsaturation margin.
    pub margin: f64,
    pub eps: f64,
    /// Largest hyperwalk index that may be built.
    pub walk_guard: usize,
    /// Largest recursion tree `b_generic` may materialize.
    pub node_guard: usize,
    /// Largest number of memoized sub-results one LCA query may compute.
    pub lca_guard: usize,
}

impl BParams {
    pub fn desk(eps: f64) -> Self {
        BParams {
            alpha: 1,
            walk_len: 3,
            depth: 2,
            mis_budget: MisBudgetRule::Theory,
            margin: 2.0 * eps * eps,
            eps,
            walk_guard: DEFAULT_WALK_GUARD,
            node_guard: 10_000,
            lca_guard: 2_000_000,
        }
    }

    /// `α = 1/ε⁷ − 1`, walk length `2/ε`, depth `1/ε⁹`, margin `2ε²`.
    pub fn theory(eps: f64) -> Self {
        BParams {
            alpha: ((1.0 / eps.powi(7)).ceil() as usize).saturating_sub(1),
            walk_len: (2.0 / eps).floor() as usize,
            depth: (1.0 / eps.powi(9)).ceil() as usize,
            mis_budget: MisBudgetRule::Theory,
            margin: 2.0 * eps * eps,
            eps,
            ..Self::desk(eps)
        }
    }

    pub fn validate(&self) -> Result<(), HyperwalkError> {
        if self.walk_len == 0 {
            return Err(HyperwalkError::InvalidParams("walk length must be positive".into()));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(HyperwalkError::InvalidParams(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.margin < 0.0 {
            return Err(HyperwalkError::InvalidParams("margin must be non-negative".into()));
        }
        Ok(())
    }

    /// Nodes in a recursion tree of the given depth.
    pub fn tree_nodes(&self, level: usize) -> u128 {
        let b = self.alpha as u128 + 1;
        (0..=level as u32).fold(0u128, |a, j| a.saturating_add(b.saturating_pow(j)))
    }

    pub fn resolve_budget(&self, index: &HyperwalkIndex) -> TmisBudget {
        match self.mis_budget {
            MisBudgetRule::Unlimited => TmisBudget::unlimited(),
            MisBudgetRule::Fixed(t) => TmisBudget { threshold: t.max(1) },
            MisBudgetRule::Theory => {
                let d = index.max_walks_per_vertex() as f64;
                let t = (d * d * d / self.eps).ceil();
                TmisBudget {
                    threshold: if t < usize::MAX as f64 { (t as usize).max(1) } else { usize::MAX },
                }
            }
        }
    }
}

/// Per-level estimates of `Pr[v ∈ V(𝓑(G_p, ℓ))]` and the target
/// `Pr[v ∈ V(𝒜(G_p))]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnsaturationTable {
    /// `b_levels[ℓ][v]`, for `ℓ = 0..depth`.
    pub b_levels: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub margin: f64,
    pub samples: usize,
}

impl UnsaturationTable {
    /// Level-0 only table (where `𝓑` is empty) with the given target.
    pub fn base(target: Vec<f64>, margin: f64) -> Self {
        UnsaturationTable {
            b_levels: vec![vec![0.0; target.len()]],
            target,
            margin,
            samples: 0,
        }
    }

    /// Every vertex unsaturated at every level below `depth`.
    pub fn all_unsaturated(n: usize, depth: usize) -> Self {
        UnsaturationTable {
            b_levels: vec![vec![0.0; n]; depth.max(1)],
            target: vec![1.0; n],
            margin: 0.0,
            samples: 0,
        }
    }

    pub fn levels(&self) -> usize {
        self.b_levels.len()
    }

    pub fn is_unsaturated(&self, level: usize, v: usize) -> bool {
        self.b_levels[level][v] < self.target[v] - self.margin
    }
}

/// Realization of the root node.
#[derive(Debug, Clone, PartialEq)]
pub enum InputRealization {
    /// Drawn from each edge's own tape.
    Tapes,
    Fixed(FixedBitSet),
}

/// Position in the recursion tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeKey {
    lineage: u64,
    fresh: bool,
    pub level: usize,
}

impl NodeKey {
    pub fn root(level: usize) -> Self {
        NodeKey {
            lineage: 0,
            fresh: false,
            level,
        }
    }

    pub fn child(&self, copy: usize) -> Self {
        if copy == 0 {
            NodeKey {
                level: self.level - 1,
                ..*self
            }
        } else {
            NodeKey {
                lineage: hash_words([self.lineage, self.fresh as u64, self.level as u64, copy as u64]),
                fresh: true,
                level: self.level - 1,
            }
        }
    }

    fn rank_key(&self) -> u64 {
        hash_words([self.lineage, self.fresh as u64, self.level as u64])
    }
}

/// Shared configuration for `b_generic` and the LCA.
#[derive(Debug, Clone)]
pub struct BEnv<'a> {
    pub g: &'a Graph,
    pub index: &'a HyperwalkIndex,
    pub params: &'a BParams,
    pub table: &'a UnsaturationTable,
    pub input: InputRealization,
    budget: TmisBudget,
}

impl<'a> BEnv<'a> {
    pub fn new(
        g: &'a Graph,
        index: &'a HyperwalkIndex,
        params: &'a BParams,
        table: &'a UnsaturationTable,
        input: InputRealization,
    ) -> Result<Self, HyperwalkError> {
        params.validate()?;
        if index.alpha != params.alpha || index.max_len != params.walk_len {
            return Err(HyperwalkError::InvalidParams("index does not match alpha / walk length".into()));
        }
        if table.target.len() != g.n() {
            return Err(HyperwalkError::InvalidParams("unsaturation table has the wrong vertex count".into()));
        }
        Ok(BEnv {
            g,
            index,
            params,
            table,
            input,
            budget: params.resolve_budget(index),
        })
    }

    pub fn budget(&self) -> TmisBudget {
        self.budget
    }

    fn check_level(&self, level: usize) -> Result<(), HyperwalkError> {
        if level > self.table.levels() {
            return Err(HyperwalkError::InvalidParams(format!(
                "level {level} needs {level} unsaturation levels, table has {}",
                self.table.levels()
            )));
        }
        Ok(())
    }

    /// Whether `e` is present in the realization of `node`.
    pub fn realized(&self, tapes: &SeedContext, node: NodeKey, e: usize) -> bool {
        let p = self.g.edge(e).p;
        if !node.fresh {
            match &self.input {
                InputRealization::Fixed(s) => s.contains(e),
                InputRealization::Tapes => p >= 1.0 || edge_tape(tapes, e).child("input", 0).bernoulli(p),
            }
        } else {
            p >= 1.0 || edge_tape(tapes, e).child("copy", node.lineage).bernoulli(p)
        }
    }

    /// Rank of walk `id` among the conflict-graph nodes of `node`.
    pub fn rank(&self, tapes: &SeedContext, node: NodeKey, id: usize) -> f64 {
        let first = self.index.walk(id).steps()[0].0;
        edge_tape(tapes, first)
            .child("rank", hash_words([node.rank_key(), self.index.hash(id)]))
            .unit()
    }

    fn endpoints_unsaturated(&self, node: NodeKey, id: usize) -> bool {
        let vs = self.index.vertices(id);
        let lvl = node.level - 1;
        self.table.is_unsaturated(lvl, vs[0]) && self.table.is_unsaturated(lvl, *vs.last().unwrap())
    }
}

/// Outcome of a materialized run.
#[derive(Debug, Clone)]
pub struct BRun {
    pub matching: Matching,
    /// Recursion nodes evaluated.
    pub nodes: usize,
    /// Every profile before and after augmentation consisted of matchings
    /// inside their realizations.
    pub profiles_valid: bool,
    /// `|M'_0| ≥ |M_0|` at every node.
    pub monotone: bool,
}

/// Reference implementation: materialize the whole recursion tree.
pub fn b_generic(env: &BEnv<'_>, tapes: &SeedContext, level: usize) -> Result<BRun, HyperwalkError> {
    env.check_level(level)?;
    if env.params.tree_nodes(level) > env.params.node_guard as u128 {
        return Err(HyperwalkError::ResourceGuard {
            what: "recursion tree nodes",
            limit: env.params.node_guard,
        });
    }
    let mut run = BRun {
        matching: Matching::empty(),
        nodes: 0,
        profiles_valid: true,
        monotone: true,
    };
    run.matching = b_node(env, tapes, NodeKey::root(level), &mut run);
    Ok(run)
}

fn b_node(env: &BEnv<'_>, tapes: &SeedContext, node: NodeKey, run: &mut BRun) -> Matching {
    run.nodes += 1;
    if node.level == 0 {
        return Matching::empty();
    }
    let g = env.g;
    let copies = env.params.alpha + 1;
    let children: Vec<NodeKey> = (0..copies).map(|i| node.child(i)).collect();
    let matchings: Vec<Matching> = children.iter().map(|&c| b_node(env, tapes, c, run)).collect();
    let realizations: Vec<FixedBitSet> = children
        .iter()
        .map(|&c| {
            let mut s = FixedBitSet::with_capacity(g.m());
            for e in 0..g.m() {
                if env.realized(tapes, c, e) {
                    s.insert(e);
                }
            }
            s
        })
        .collect();
    let profile = Profile {
        realizations,
        matchings,
    };
    run.profiles_valid &= profile.is_valid(g);
    let sets: Vec<FixedBitSet> = profile.matchings.iter().map(|m| m.to_set(g.m())).collect();

    let index = env.index;
    let valid: Vec<bool> = (0..index.len())
        .map(|id| {
            env.endpoints_unsaturated(node, id)
                && is_augmenting_local(
                    g,
                    index.walk(id),
                    index.vertices(id),
                    copies,
                    |i, e| sets[i].contains(e),
                    |i, e| profile.realizations[i].contains(e),
                )
        })
        .collect();
    let members = select_independent(env, tapes, node, &valid);

    let mut after = sets.clone();
    for (id, _) in members.iter().enumerate().filter(|(_, &m)| m) {
        let w = index.walk(id);
        for (i, set) in after.iter_mut().enumerate() {
            let (add, remove) = w.toggles(i);
            add.iter().for_each(|&e| set.insert(e));
            remove.iter().for_each(|&e| set.set(e, false));
        }
    }
    let applied = Profile {
        realizations: profile.realizations,
        matchings: after.iter().map(|s| Matching::from_edges(s.ones().collect())).collect(),
    };
    run.profiles_valid &= applied.is_valid(g);
    run.monotone &= applied.matchings[0].len() >= profile.matchings[0].len();
    applied.matchings.into_iter().next().unwrap()
}

/// Conflict graph of one node with validity known up front.
struct Materialized<'e, 'a> {
    env: &'e BEnv<'a>,
    ranks: Vec<f64>,
    valid: &'e [bool],
    lower: HashMap<u32, Vec<u32>>,
}

impl ConflictOracle for Materialized<'_, '_> {
    type Node = u32;
    type Error = std::convert::Infallible;

    fn is_valid(&mut self, w: u32) -> Result<bool, Self::Error> {
        Ok(self.valid[w as usize])
    }

    fn lower_neighbors(&mut self, w: u32) -> Result<Vec<u32>, Self::Error> {
        if let Some(v) = self.lower.get(&w) {
            return Ok(v.clone());
        }
        let ranks = &self.ranks;
        let before = |a: u32, b: u32| ranks[a as usize].total_cmp(&ranks[b as usize]).then(a.cmp(&b));
        let mut out: Vec<u32> = self
            .env
            .index
            .neighbors(w as usize)
            .into_iter()
            .filter(|&x| before(x, w).is_lt())
            .collect();
        out.sort_by(|&a, &b| before(a, b));
        self.lower.insert(w, out.clone());
        Ok(out)
    }
}

/// The truncated greedy independent set over the valid walks of `node`.
fn select_independent(env: &BEnv<'_>, tapes: &SeedContext, node: NodeKey, valid: &[bool]) -> Vec<bool> {
    let index = env.index;
    let ranks: Vec<f64> = (0..index.len()).map(|id| env.rank(tapes, node, id)).collect();
    let mut members = vec![false; index.len()];
    if env.budget.is_unlimited() {
        // without truncation the procedure is the greedy sweep in rank order
        let mut order: Vec<usize> = (0..index.len()).filter(|&id| valid[id]).collect();
        order.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]).then(a.cmp(&b)));
        let mut used = FixedBitSet::with_capacity(env.g.n());
        for id in order {
            if index.distinct_vertices(id).iter().all(|&v| !used.contains(v)) {
                index.distinct_vertices(id).iter().for_each(|&v| used.insert(v));
                members[id] = true;
            }
        }
        return members;
    }
    let mut oracle = Materialized {
        env,
        ranks,
        valid,
        lower: HashMap::new(),
    };
    for id in 0..index.len() {
        if valid[id] {
            let Ok(ans) = truncated_greedy_member(&mut oracle, id as u32, env.budget, None);
            members[id] = ans.member;
        }
    }
    members
}

/// Per-query state of the LCA.
struct BLca<'p, 'g, 'e, 'a> {
    env: &'e BEnv<'a>,
    probe: &'p mut Probe<'g>,
    tapes: SeedContext,
    in_matching: HashMap<(NodeKey, usize), bool>,
    valid: HashMap<(NodeKey, u32), bool>,
    mis_root: HashMap<(NodeKey, u32), bool>,
    mis_memo: HashMap<NodeKey, HashMap<u32, bool>>,
    lower: HashMap<(NodeKey, u32), Vec<u32>>,
    ranks: HashMap<(NodeKey, u32), f64>,
    work: usize,
}

impl<'p, 'g, 'e, 'a> BLca<'p, 'g, 'e, 'a> {
    fn new(env: &'e BEnv<'a>, probe: &'p mut Probe<'g>) -> Self {
        let tapes = probe.tapes();
        BLca {
            env,
            probe,
            tapes,
            in_matching: HashMap::new(),
            valid: HashMap::new(),
            mis_root: HashMap::new(),
            mis_memo: HashMap::new(),
            lower: HashMap::new(),
            ranks: HashMap::new(),
            work: 0,
        }
    }

    fn tick(&mut self) -> Result<(), LcaError> {
        self.work += 1;
        if self.work > self.env.params.lca_guard {
            return Err(LcaError::ResourceGuard {
                what: "lca sub-results",
                limit: self.env.params.lca_guard,
            });
        }
        Ok(())
    }

    /// isInMatching: whether `e ∈ 𝓑` at `node`.
    fn is_in_matching(&mut self, node: NodeKey, e: usize) -> Result<bool, LcaError> {
        if let Some(&b) = self.in_matching.get(&(node, e)) {
            return Ok(b);
        }
        self.tick()?;
        let out = if node.level == 0 {
            self.probe.probe_edge(e)?;
            false
        } else {
            let mut out = self.is_in_matching(node.child(0), e)?;
            let walks: Vec<u32> = self.env.index.containing_edge(e).to_vec();
            for w in walks {
                if self.is_in_mis(node, w)? {
                    let (add, remove) = self.env.index.walk(w as usize).toggles(0);
                    out = (out || add.contains(&e)) && !remove.contains(&e);
                }
            }
            out
        };
        self.in_matching.insert((node, e), out);
        Ok(out)
    }

    /// isInMIS as a root query from isInMatching.
    fn is_in_mis(&mut self, node: NodeKey, w: u32) -> Result<bool, LcaError> {
        if let Some(&b) = self.mis_root.get(&(node, w)) {
            return Ok(b);
        }
        let budget = self.env.budget;
        let ans = if budget.is_unlimited() {
            let mut memo = self.mis_memo.remove(&node).unwrap_or_default();
            let r = truncated_greedy_member(&mut NodeView { lca: self, node }, w, budget, Some(&mut memo));
            self.mis_memo.insert(node, memo);
            r?
        } else {
            truncated_greedy_member(&mut NodeView { lca: self, node }, w, budget, None)?
        };
        self.mis_root.insert((node, w), ans.member);
        Ok(ans.member)
    }

    fn rank(&mut self, node: NodeKey, w: u32) -> Result<f64, LcaError> {
        if let Some(&r) = self.ranks.get(&(node, w)) {
            return Ok(r);
        }
        self.tick()?;
        let edges: Vec<usize> = self.env.index.walk(w as usize).edges().collect();
        self.probe.probe_connected(&edges)?;
        let r = self.env.rank(&self.tapes, node, w as usize);
        self.ranks.insert((node, w), r);
        Ok(r)
    }

    fn lower_neighbors(&mut self, node: NodeKey, w: u32) -> Result<Vec<u32>, LcaError> {
        if let Some(v) = self.lower.get(&(node, w)) {
            return Ok(v.clone());
        }
        let own = (self.rank(node, w)?, w);
        let mut out = Vec::new();
        for x in self.env.index.neighbors(w as usize) {
            let key = (self.rank(node, x)?, x);
            if key.0.total_cmp(&own.0).then(key.1.cmp(&own.1)).is_lt() {
                out.push(key);
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let out: Vec<u32> = out.into_iter().map(|k| k.1).collect();
        self.lower.insert((node, w), out.clone());
        Ok(out)
    }

    /// isValid: endpoints unsaturated and `W` augmenting for the profile of
    /// `node`, computed from the children around the walk.
    fn is_valid(&mut self, node: NodeKey, w: u32) -> Result<bool, LcaError> {
        if let Some(&b) = self.valid.get(&(node, w)) {
            return Ok(b);
        }
        self.tick()?;
        let env = self.env;
        let id = w as usize;
        if !env.endpoints_unsaturated(node, id) {
            self.valid.insert((node, w), false);
            return Ok(false);
        }
        let copies = env.params.alpha + 1;
        let mut pending = env.index.neighborhood_edges(env.g, id);
        // visit edges outward from the explored region
        while !pending.is_empty() {
            let pos = pending
                .iter()
                .position(|&e| {
                    let ed = env.g.edge(e);
                    self.probe.is_discovered(ed.u) || self.probe.is_discovered(ed.v)
                })
                .ok_or(LcaError::NaturalityViolation {
                    site: Site::Edge(pending[0]),
                })?;
            let e = pending.remove(pos);
            for i in 0..copies {
                self.is_in_matching(node.child(i), e)?;
            }
        }
        let children: Vec<NodeKey> = (0..copies).map(|i| node.child(i)).collect();
        let walk = env.index.walk(id);
        for e in walk.edges() {
            self.probe.probe_edge(e)?;
        }
        let in_matching = &self.in_matching;
        let tapes = self.tapes;
        let ok = is_augmenting_local(
            env.g,
            walk,
            env.index.vertices(id),
            copies,
            |i, e| in_matching[&(children[i], e)],
            |i, e| env.realized(&tapes, children[i], e),
        );
        self.valid.insert((node, w), ok);
        Ok(ok)
    }
}

struct NodeView<'l, 'p, 'g, 'e, 'a> {
    lca: &'l mut BLca<'p, 'g, 'e, 'a>,
    node: NodeKey,
}

impl ConflictOracle for NodeView<'_, '_, '_, '_, '_> {
    type Node = u32;
    type Error = LcaError;

    fn is_valid(&mut self, w: u32) -> Result<bool, LcaError> {
        self.lca.is_valid(self.node, w)
    }

    fn lower_neighbors(&mut self, w: u32) -> Result<Vec<u32>, LcaError> {
        self.lca.lower_neighbors(self.node, w)
    }
}

/// Edge-rooted LCA answering `e ∈ 𝓑(G_p, depth)`.
#[derive(Debug, Clone)]
pub struct BMatchingLca<'a> {
    pub env: BEnv<'a>,
}

impl Lca for BMatchingLca<'_> {
    type Output = bool;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<bool, LcaError> {
        let Site::Edge(e) = root else {
            return Err(LcaError::InvalidSite(root));
        };
        if self.env.params.depth > self.env.table.levels() {
            return Err(LcaError::ResourceGuard {
                what: "unsaturation levels",
                limit: self.env.table.levels(),
            });
        }
        BLca::new(&self.env, probe).is_in_matching(NodeKey::root(self.env.params.depth), e)
    }
}

/// Vertex-rooted LCA answering `v ∈ V(𝓑(G_p, depth))`.
#[derive(Debug, Clone)]
pub struct BCoverageLca<'a> {
    pub env: BEnv<'a>,
}

impl Lca for BCoverageLca<'_> {
    type Output = bool;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<bool, LcaError> {
        let Site::Vertex(v) = root else {
            return Err(LcaError::InvalidSite(root));
        };
        let g = self.env.g;
        let node = NodeKey::root(self.env.params.depth);
        let mut lca = BLca::new(&self.env, probe);
        for &e in g.incident(v) {
            lca.probe.probe_edge(e)?;
            if lca.is_in_matching(node, e)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Membership of `e` in `𝓑` under the tapes of `ctx` (as `run_lca` would
/// see them).
pub fn lca_is_in_matching(env: &BEnv<'_>, ctx: &SeedContext, e: usize) -> Result<bool, LcaError> {
    crate::lca::run_lca(&BMatchingLca { env: env.clone() }, env.g, ctx, Site::Edge(e)).map(|(b, _)| b)
}

/// `b_generic` driven by the same tapes `lca_is_in_matching` reads.
pub fn b_generic_for(env: &BEnv<'_>, ctx: &SeedContext, level: usize) -> Result<BRun, HyperwalkError> {
    b_generic(env, &tape_space(ctx), level)
}

/// Deterministic ceiling on the edges one `BMatchingLca` query can probe.
///
/// Each level-`j` membership call issues at most `W_e` MIS root queries of at
/// most `T` calls each; every such call ranks at most `N·L` neighbor edges and
/// validity asks `(α+1)` children about each of at most `(L+1)Δ` edges.
pub fn out_query_bound(env: &BEnv<'_>) -> f64 {
    let g = env.g;
    let idx = env.index;
    let t = env.budget.threshold as f64;
    let w_e = idx.max_walks_per_edge() as f64;
    let n_w = (env.params.walk_len + 1) as f64 * idx.max_walks_per_vertex() as f64;
    let l = env.params.walk_len as f64;
    let per_call = 1.0 + w_e * t * (l + 1.0) * g.max_degree() as f64 * (env.params.alpha as f64 + 1.0);
    let rank_probes = w_e * t * n_w * l;
    let mut calls_at_level = 1.0;
    let mut total = 0.0;
    for _ in 0..env.params.depth {
        total += calls_at_level * rank_probes;
        calls_at_level *= per_call;
    }
    total + calls_at_level
}

/// `Pr[v ∈ V(𝒜(G_p))]` where `𝒜(G_p) = MM(G_p) ∩ restrict` (all of
/// `MM(G_p)` when `restrict` is `None`). Exact under the enumeration cap.
pub fn target_marginals(g: &Graph, restrict: Option<&FixedBitSet>, samples: usize, ctx: &SeedContext) -> Vec<f64> {
    let cover = |present: &FixedBitSet| -> Vec<usize> {
        let mut vs = Vec::new();
        for &e in maximum_matching(g, present).edges() {
            if restrict.is_none_or(|c| c.contains(e)) {
                vs.push(g.edge(e).u);
                vs.push(g.edge(e).v);
            }
        }
        vs
    };
    let mut out = vec![0.0; g.n()];
    if g.m() <= AUTO_EXACT_EDGES {
        for (r, pr) in enumerate_realizations_capped(g, DEFAULT_ENUMERATION_CAP).expect("under cap") {
            for v in cover(r.present()) {
                out[v] += pr;
            }
        }
        return out;
    }
    let ns = ctx.child("target", 0);
    let counts = (0..samples.max(1))
        .into_par_iter()
        .map(|t| cover(sample_realization(g, &ns, t as u64).present()))
        .fold(
            || vec![0u64; g.n()],
            |mut acc, vs| {
                vs.into_iter().for_each(|v| acc[v] += 1);
                acc
            },
        )
        .reduce(
            || vec![0u64; g.n()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let n = samples.max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Fill levels `1..params.depth` of the table by running `b_generic` on
/// `samples` fresh realizations per level.
pub fn build_unsaturation_table(
    g: &Graph,
    index: &HyperwalkIndex,
    params: &BParams,
    target: Vec<f64>,
    samples: usize,
    ctx: &SeedContext,
) -> Result<UnsaturationTable, HyperwalkError> {
    let samples = samples.max(1);
    let mut table = UnsaturationTable::base(target, params.margin);
    table.samples = samples;
    for level in 1..params.depth {
        let snapshot = table.clone();
        let env = BEnv::new(g, index, params, &snapshot, InputRealization::Tapes)?;
        let lctx = ctx.child("unsat", level as u64);
        let hits: Vec<Vec<usize>> = (0..samples)
            .into_par_iter()
            .map(|t| {
                let run = b_generic(&env, &tape_space(&lctx.child("t", t as u64)), level)?;
                Ok(run
                    .matching
                    .edges()
                    .iter()
                    .flat_map(|&e| [g.edge(e).u, g.edge(e).v])
                    .collect())
            })
            .collect::<Result<_, HyperwalkError>>()?;
        let mut freq = vec![0.0; g.n()];
        for vs in hits {
            for v in vs {
                freq[v] += 1.0;
            }
        }
        freq.iter_mut().for_each(|x| *x /= samples as f64);
        table.b_levels.push(freq);
    }
    Ok(table)
}
