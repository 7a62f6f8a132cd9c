//! Runtime for local computation algorithms: an adjacency oracle with private
//! per-site tapes, natural-LCA enforcement, and the query ledger that records
//! out-queries, in-queries and correlated sets.

use std::fmt;
use std::io::Write;

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::Graph;
use crate::seed::SeedContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Site {
    Vertex(usize),
    Edge(usize),
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Vertex(v) => write!(f, "v:{v}"),
            Site::Edge(e) => write!(f, "e:{e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Vertex,
    Edge,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcaError {
    #[error("probe of {site} is not adjacent to the explored region")]
    NaturalityViolation { site: Site },
    #[error("tape of vertex {0} read before the vertex was discovered")]
    UndiscoveredTape(usize),
    #[error("site {0} is out of range")]
    InvalidSite(Site),
    #[error("probe limit of {0} exceeded")]
    ProbeLimit(usize),
    #[error("resource guard tripped: {what} exceeded {limit}")]
    ResourceGuard { what: &'static str, limit: usize },
    #[error("at least {needed} sweeps are required, got {got}")]
    InsufficientSweeps { needed: usize, got: usize },
}

/// Oracle handed to an LCA for one root query.
///
/// Edge tapes are revealed by probing; a probe must touch a vertex that has
/// already been discovered. A vertex is discovered once any incident edge has
/// been probed (the root's own vertices start out discovered).
pub struct Probe<'g> {
    g: &'g Graph,
    tapes: SeedContext,
    root: Site,
    discovered: FixedBitSet,
    probed: FixedBitSet,
    vertex_order: Vec<usize>,
    edge_order: Vec<usize>,
    sites: Vec<Site>,
    limit: Option<usize>,
}

impl<'g> Probe<'g> {
    pub fn new(g: &'g Graph, tapes: SeedContext, root: Site) -> Result<Self, LcaError> {
        let mut p = Probe {
            g,
            tapes,
            root,
            discovered: FixedBitSet::with_capacity(g.n()),
            probed: FixedBitSet::with_capacity(g.m()),
            vertex_order: Vec::new(),
            edge_order: Vec::new(),
            sites: vec![root],
            limit: None,
        };
        match root {
            Site::Vertex(v) if v < g.n() => p.discover(v),
            Site::Edge(e) if e < g.m() => {
                p.probed.insert(e);
                p.edge_order.push(e);
                let ed = *g.edge(e);
                p.discover(ed.u);
                p.discover(ed.v);
            }
            _ => return Err(LcaError::InvalidSite(root)),
        }
        Ok(p)
    }

    pub fn with_limit(mut self, limit: Option<usize>) -> Self {
        self.limit = limit;
        self
    }

    fn discover(&mut self, v: usize) {
        if !self.discovered.contains(v) {
            self.discovered.insert(v);
            self.vertex_order.push(v);
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn root(&self) -> Site {
        self.root
    }

    pub fn tapes(&self) -> SeedContext {
        self.tapes
    }

    pub fn is_discovered(&self, v: usize) -> bool {
        self.discovered.contains(v)
    }

    pub fn is_probed(&self, e: usize) -> bool {
        self.probed.contains(e)
    }

    pub fn probe_count(&self) -> usize {
        self.edge_order.len()
    }

    /// Reveal the tape of edge `e`.
    pub fn probe_edge(&mut self, e: usize) -> Result<SeedContext, LcaError> {
        if e >= self.g.m() {
            return Err(LcaError::InvalidSite(Site::Edge(e)));
        }
        if !self.probed.contains(e) {
            let ed = *self.g.edge(e);
            if !self.discovered.contains(ed.u) && !self.discovered.contains(ed.v) {
                return Err(LcaError::NaturalityViolation { site: Site::Edge(e) });
            }
            if let Some(limit) = self.limit {
                if self.edge_order.len() >= limit {
                    return Err(LcaError::ProbeLimit(limit));
                }
            }
            self.probed.insert(e);
            self.edge_order.push(e);
            self.sites.push(Site::Edge(e));
            self.discover(ed.u);
            self.discover(ed.v);
        }
        Ok(edge_tape(&self.tapes, e))
    }

    /// Probe every edge of `edges`, always choosing next the smallest-id edge
    /// that touches the discovered region. Fails if some edge can never be
    /// reached this way.
    pub fn probe_connected(&mut self, edges: &[usize]) -> Result<(), LcaError> {
        let mut pending: Vec<usize> = edges.iter().copied().filter(|&e| !self.is_probed(e)).collect();
        pending.sort_unstable();
        pending.dedup();
        while !pending.is_empty() {
            let pos = pending.iter().position(|&e| {
                let ed = self.g.edge(e);
                self.discovered.contains(ed.u) || self.discovered.contains(ed.v)
            });
            match pos {
                Some(i) => {
                    let e = pending.remove(i);
                    self.probe_edge(e)?;
                }
                None => return Err(LcaError::NaturalityViolation { site: Site::Edge(pending[0]) }),
            }
        }
        Ok(())
    }

    /// Tape of a discovered vertex.
    pub fn vertex_tape(&self, v: usize) -> Result<SeedContext, LcaError> {
        if v >= self.g.n() {
            return Err(LcaError::InvalidSite(Site::Vertex(v)));
        }
        if !self.discovered.contains(v) {
            return Err(LcaError::UndiscoveredTape(v));
        }
        Ok(vertex_tape(&self.tapes, v))
    }

    pub fn into_trace(self) -> ProbeTrace {
        ProbeTrace {
            root: self.root,
            probed: self.sites,
            vertices: self.vertex_order,
            edges: self.edge_order,
        }
    }
}

/// The tape of edge `e` under a tape space.
pub fn edge_tape(tapes: &SeedContext, e: usize) -> SeedContext {
    tapes.child("e", e as u64)
}

pub fn vertex_tape(tapes: &SeedContext, v: usize) -> SeedContext {
    tapes.child("v", v as u64)
}

/// Tape space used by `run_lca` for a given context.
pub fn tape_space(ctx: &SeedContext) -> SeedContext {
    ctx.child("tapes", 0)
}

/// Everything an LCA revealed while answering one root query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProbeTrace {
    pub root: Site,
    /// Sites in reveal order, starting with the root.
    pub probed: Vec<Site>,
    /// Vertices in discovery order; this is the vertex-valued `Q⁺`.
    pub vertices: Vec<usize>,
    /// Edges in probe order; this is the edge-valued `Q⁺`.
    pub edges: Vec<usize>,
}

impl ProbeTrace {
    pub fn out_queries(&self, granularity: Granularity) -> &[usize] {
        match granularity {
            Granularity::Vertex => &self.vertices,
            Granularity::Edge => &self.edges,
        }
    }
}

/// Re-check the natural-LCA property: every prefix of the probe sequence is
/// connected and contains the root.
pub fn verify_natural(g: &Graph, trace: &ProbeTrace) -> bool {
    let mut seen = FixedBitSet::with_capacity(g.n());
    let mut sites = trace.probed.iter();
    match sites.next() {
        Some(&s) if s == trace.root => match s {
            Site::Vertex(v) => seen.insert(v),
            Site::Edge(e) => {
                seen.insert(g.edge(e).u);
                seen.insert(g.edge(e).v);
            }
        },
        _ => return false,
    }
    for s in sites {
        match *s {
            Site::Edge(e) => {
                let ed = g.edge(e);
                if !seen.contains(ed.u) && !seen.contains(ed.v) {
                    return false;
                }
                seen.insert(ed.u);
                seen.insert(ed.v);
            }
            Site::Vertex(v) => {
                if !seen.contains(v) {
                    return false;
                }
            }
        }
    }
    true
}

pub trait Lca {
    type Output;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<Self::Output, LcaError>;

    /// Optional cap on the number of probed edges per root query.
    fn probe_limit(&self) -> Option<usize> {
        None
    }
}

/// Answer one root query against the tapes of `ctx`.
pub fn run_lca<L: Lca + ?Sized>(lca: &L, g: &Graph, ctx: &SeedContext, root: Site) -> Result<(L::Output, ProbeTrace), LcaError> {
    let mut probe = Probe::new(g, tape_space(ctx), root)?.with_limit(lca.probe_limit());
    let out = lca.query(&mut probe, root)?;
    Ok((out, probe.into_trace()))
}

pub fn all_sites(g: &Graph, granularity: Granularity) -> Vec<Site> {
    match granularity {
        Granularity::Vertex => (0..g.n()).map(Site::Vertex).collect(),
        Granularity::Edge => (0..g.m()).map(Site::Edge).collect(),
    }
}

/// Per-site counts from a single sweep over every root.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCounts {
    pub granularity: Granularity,
    pub q_plus: Vec<usize>,
    pub q_minus: Vec<usize>,
    pub psi: Vec<usize>,
}

impl SweepCounts {
    /// Derive `q⁺`, `q⁻` and `ψ` from the out-query set of every root. Roots
    /// and out-queries must range over the same universe of `size` sites.
    pub fn from_out_sets(granularity: Granularity, size: usize, out: &[Vec<usize>]) -> Self {
        let mut in_sets = vec![FixedBitSet::with_capacity(size); size];
        for (u, set) in out.iter().enumerate() {
            for &w in set {
                in_sets[w].insert(u);
            }
        }
        let q_plus: Vec<usize> = out.iter().map(Vec::len).collect();
        let q_minus: Vec<usize> = in_sets.iter().map(|s| s.count_ones(..)).collect();
        let psi = out
            .iter()
            .map(|set| {
                let mut acc = FixedBitSet::with_capacity(size);
                for &w in set {
                    acc.union_with(&in_sets[w]);
                }
                acc.count_ones(..)
            })
            .collect();
        SweepCounts {
            granularity,
            q_plus,
            q_minus,
            psi,
        }
    }

    pub fn sum_q_plus(&self) -> usize {
        self.q_plus.iter().sum()
    }

    pub fn sum_q_minus(&self) -> usize {
        self.q_minus.iter().sum()
    }
}

/// Result of querying every root once under a fixed tape space.
#[derive(Debug, Clone)]
pub struct Sweep<O> {
    pub outputs: Vec<O>,
    pub traces: Vec<ProbeTrace>,
    /// Counts in the granularity of the roots.
    pub counts: SweepCounts,
    /// Vertex-valued out-query sizes and in-query counts for edge-rooted
    /// LCAs; `None` for vertex-rooted ones.
    pub vertex_view: Option<VertexView>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexView {
    pub q_plus: Vec<usize>,
    pub q_minus: Vec<usize>,
}

/// Run `lca` at every site of the given granularity.
pub fn sweep<L>(lca: &L, g: &Graph, ctx: &SeedContext, granularity: Granularity) -> Result<Sweep<L::Output>, LcaError>
where
    L: Lca + Sync,
    L::Output: Send,
{
    let roots = all_sites(g, granularity);
    let results: Vec<(L::Output, ProbeTrace)> = roots
        .par_iter()
        .map(|&r| run_lca(lca, g, ctx, r))
        .collect::<Result<_, _>>()?;
    let mut outputs = Vec::with_capacity(results.len());
    let mut traces = Vec::with_capacity(results.len());
    for (o, t) in results {
        outputs.push(o);
        traces.push(t);
    }
    let size = roots.len();
    let out_sets: Vec<Vec<usize>> = traces.iter().map(|t| t.out_queries(granularity).to_vec()).collect();
    let counts = SweepCounts::from_out_sets(granularity, size, &out_sets);
    let vertex_view = (granularity == Granularity::Edge).then(|| {
        let mut q_minus = vec![0; g.n()];
        for t in &traces {
            for &v in &t.vertices {
                q_minus[v] += 1;
            }
        }
        VertexView {
            q_plus: traces.iter().map(|t| t.vertices.len()).collect(),
            q_minus,
        }
    });
    Ok(Sweep {
        outputs,
        traces,
        counts,
        vertex_view,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunningStat {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl RunningStat {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Per-site `q⁺`, `q⁻` and `ψ` statistics accumulated over sweeps.
#[derive(Debug, Clone)]
pub struct QueryLedger {
    pub granularity: Granularity,
    pub sweeps: usize,
    pub q_plus: Vec<RunningStat>,
    pub q_minus: Vec<RunningStat>,
    pub psi: Vec<RunningStat>,
    /// Whether `Σ q⁻ = Σ q⁺` held on every sweep.
    pub identity_held: bool,
    /// Whether `ψ ≥ q⁺` held pointwise on every sweep.
    pub psi_dominates: bool,
}

impl QueryLedger {
    pub fn new(granularity: Granularity, sites: usize) -> Self {
        QueryLedger {
            granularity,
            sweeps: 0,
            q_plus: vec![RunningStat::default(); sites],
            q_minus: vec![RunningStat::default(); sites],
            psi: vec![RunningStat::default(); sites],
            identity_held: true,
            psi_dominates: true,
        }
    }

    pub fn record(&mut self, c: &SweepCounts) {
        self.sweeps += 1;
        self.identity_held &= c.sum_q_plus() == c.sum_q_minus();
        for i in 0..self.q_plus.len() {
            self.psi_dominates &= c.psi[i] >= c.q_plus[i];
            self.q_plus[i].push(c.q_plus[i] as f64);
            self.q_minus[i].push(c.q_minus[i] as f64);
            self.psi[i].push(c.psi[i] as f64);
        }
    }

    pub fn sites(&self) -> Vec<Site> {
        (0..self.q_plus.len())
            .map(|i| match self.granularity {
                Granularity::Vertex => Site::Vertex(i),
                Granularity::Edge => Site::Edge(i),
            })
            .collect()
    }

    /// CSV with columns `site,mean_q_plus,mean_q_minus,mean_psi`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["site", "mean_q_plus", "mean_q_minus", "mean_psi"])?;
        for (i, s) in self.sites().into_iter().enumerate() {
            w.write_record([
                s.to_string(),
                format!("{:.6}", self.q_plus[i].mean()),
                format!("{:.6}", self.q_minus[i].mean()),
                format!("{:.6}", self.psi[i].mean()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Run `sweeps` independent sweeps (tape space `ctx.child("sweep", s)`) and
/// aggregate them into a ledger.
pub fn sweep_ledger<L>(lca: &L, g: &Graph, ctx: &SeedContext, granularity: Granularity, sweeps: usize) -> Result<QueryLedger, LcaError>
where
    L: Lca + Sync,
    L::Output: Send,
{
    let size = all_sites(g, granularity).len();
    let mut ledger = QueryLedger::new(granularity, size);
    for s in 0..sweeps {
        let sw = sweep(lca, g, &ctx.child("sweep", s as u64), granularity)?;
        ledger.record(&sw.counts);
    }
    Ok(ledger)
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelatedBoundReport {
    pub sweeps: usize,
    pub max_mean_psi: f64,
    pub psi_stderr: f64,
    pub max_mean_q_plus: f64,
    pub max_mean_q_minus: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CorrelatedBoundReport {
    /// Whether `max ψ ≤ slack · bound` holds up to three standard errors.
    pub fn passes_with_slack(&self, slack: f64) -> bool {
        self.max_mean_psi <= slack * self.bound + 3.0 * self.psi_stderr
    }
}

pub const MIN_BOUND_SWEEPS: usize = 30;

/// Compare `max_v E[ψ(v)]` against `(max_v E[q⁺(v)])·(max_v E[q⁻(v)])`.
pub fn check_correlated_bound(ledger: &QueryLedger) -> Result<CorrelatedBoundReport, LcaError> {
    if ledger.sweeps < MIN_BOUND_SWEEPS {
        return Err(LcaError::InsufficientSweeps {
            needed: MIN_BOUND_SWEEPS,
            got: ledger.sweeps,
        });
    }
    let max_of = |v: &[RunningStat]| v.iter().map(RunningStat::mean).fold(0.0, f64::max);
    let (mut arg, mut max_psi) = (0, 0.0);
    for (i, s) in ledger.psi.iter().enumerate() {
        if s.mean() > max_psi {
            max_psi = s.mean();
            arg = i;
        }
    }
    let psi_stderr = ledger.psi.get(arg).map(RunningStat::stderr).unwrap_or(0.0);
    let max_q_plus = max_of(&ledger.q_plus);
    let max_q_minus = max_of(&ledger.q_minus);
    let bound = max_q_plus * max_q_minus;
    Ok(CorrelatedBoundReport {
        sweeps: ledger.sweeps,
        max_mean_psi: max_psi,
        psi_stderr,
        max_mean_q_plus: max_q_plus,
        max_mean_q_minus: max_q_minus,
        bound,
        pass: max_psi <= bound + 3.0 * psi_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationEstimate {
    pub u: Site,
    pub v: Site,
    pub delta: f64,
    pub trials: usize,
}

type RootRuns<O> = Vec<Vec<(O, FixedBitSet)>>;

/// Vertex-valued out-query sets and outputs at every requested root, for
/// `trials` independent tape spaces `ctx.child("trial", t)`.
fn pair_runs<L>(lca: &L, g: &Graph, roots: &[Site], trials: usize, ctx: &SeedContext) -> Result<RootRuns<L::Output>, LcaError>
where
    L: Lca + Sync,
    L::Output: Send,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let tctx = ctx.child("trial", t as u64);
            roots
                .iter()
                .map(|&r| {
                    let (o, tr) = run_lca(lca, g, &tctx, r)?;
                    let mut set = FixedBitSet::with_capacity(g.n());
                    tr.vertices.iter().for_each(|&v| set.insert(v));
                    Ok((o, set))
                })
                .collect()
        })
        .collect()
}

fn distinct_roots(pairs: &[(Site, Site)]) -> Vec<Site> {
    let mut roots: Vec<Site> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    roots.sort_unstable();
    roots.dedup();
    roots
}

/// `δ(u, v) = Pr[Q⁺(u) ∩ Q⁺(v) ≠ ∅]` estimated over independent tapes.
pub fn estimate_delta<L>(lca: &L, g: &Graph, pairs: &[(Site, Site)], trials: usize, ctx: &SeedContext) -> Result<Vec<CorrelationEstimate>, LcaError>
where
    L: Lca + Sync,
    L::Output: Send,
{
    let roots = distinct_roots(pairs);
    let runs = pair_runs(lca, g, &roots, trials.max(1), ctx)?;
    let idx = |s: Site| roots.binary_search(&s).expect("root listed");
    Ok(pairs
        .iter()
        .map(|&(u, v)| {
            let (iu, iv) = (idx(u), idx(v));
            let hits = runs.iter().filter(|r| !r[iu].1.is_disjoint(&r[iv].1)).count();
            CorrelationEstimate {
                u,
                v,
                delta: hits as f64 / runs.len() as f64,
                trials: runs.len(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairStats {
    pub delta: f64,
    pub covariance: f64,
    pub covariance_stderr: f64,
    pub trials: usize,
}

/// Intersection frequency together with the empirical covariance of the
/// two boolean outputs.
pub fn pair_statistics<L>(lca: &L, g: &Graph, pairs: &[(Site, Site)], trials: usize, ctx: &SeedContext) -> Result<Vec<PairStats>, LcaError>
where
    L: Lca<Output = bool> + Sync,
{
    let roots = distinct_roots(pairs);
    let runs = pair_runs(lca, g, &roots, trials.max(1), ctx)?;
    let idx = |s: Site| roots.binary_search(&s).expect("root listed");
    Ok(pairs
        .iter()
        .map(|&(u, v)| {
            let (iu, iv) = (idx(u), idx(v));
            let n = runs.len() as f64;
            let hits = runs.iter().filter(|r| !r[iu].1.is_disjoint(&r[iv].1)).count();
            let xs: Vec<(f64, f64)> = runs
                .iter()
                .map(|r| (r[iu].0 as u8 as f64, r[iv].0 as u8 as f64))
                .collect();
            let mx = xs.iter().map(|p| p.0).sum::<f64>() / n;
            let my = xs.iter().map(|p| p.1).sum::<f64>() / n;
            let terms: Vec<f64> = xs.iter().map(|&(x, y)| (x - mx) * (y - my)).collect();
            let cov = terms.iter().sum::<f64>() / n;
            let var = terms.iter().map(|t| (t - cov).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            PairStats {
                delta: hits as f64 / n,
                covariance: cov,
                covariance_stderr: (var / n).sqrt(),
                trials: runs.len(),
            }
        })
        .collect())
}

/// Answers from the root's own tape without probing anything else.
#[derive(Debug, Clone, Copy, Default)]
pub struct SelfOnly;

impl Lca for SelfOnly {
    type Output = u64;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<u64, LcaError> {
        match root {
            Site::Vertex(v) => Ok(probe.vertex_tape(v)?.word(0)),
            Site::Edge(e) => Ok(probe.probe_edge(e)?.word(0)),
        }
    }
}

/// Every vertex root probes its edge to a fixed hub (when one exists).
#[derive(Debug, Clone, Copy)]
pub struct HubProbe {
    pub hub: usize,
}

impl Lca for HubProbe {
    type Output = u64;

    fn query(&self, probe: &mut Probe<'_>, root: Site) -> Result<u64, LcaError> {
        let Site::Vertex(v) = root else {
            return Err(LcaError::InvalidSite(root));
        };
        if v == self.hub {
            return Ok(probe.vertex_tape(v)?.word(0));
        }
        match probe.graph().edge_between(v, self.hub) {
            Some(e) => {
                probe.probe_edge(e)?;
                Ok(probe.vertex_tape(self.hub)?.word(0))
            }
            None => Ok(0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;

    struct Reckless;

    impl Lca for Reckless {
        type Output = ();
        fn query(&self, probe: &mut Probe<'_>, _root: Site) -> Result<(), LcaError> {
            let last = probe.graph().m() - 1;
            probe.probe_edge(last).map(|_| ())
        }
    }

    #[test]
    fn self_only_trace_is_root() {
        let g = path(4, 0.5);
        let ctx = SeedContext::new(1);
        let (a, t) = run_lca(&SelfOnly, &g, &ctx, Site::Vertex(2)).unwrap();
        assert_eq!(t.probed, vec![Site::Vertex(2)]);
        assert_eq!(t.vertices, vec![2]);
        let (b, t2) = run_lca(&SelfOnly, &g, &ctx, Site::Vertex(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(t, t2);
    }

    #[test]
    fn non_adjacent_probe_rejected() {
        let g = path(5, 0.5);
        let err = run_lca(&Reckless, &g, &SeedContext::new(0), Site::Vertex(0)).unwrap_err();
        assert_eq!(err, LcaError::NaturalityViolation { site: Site::Edge(3) });
    }

    #[test]
    fn undiscovered_tape_rejected() {
        let g = path(3, 0.5);
        let p = Probe::new(&g, SeedContext::new(0), Site::Vertex(0)).unwrap();
        assert_eq!(p.vertex_tape(2).unwrap_err(), LcaError::UndiscoveredTape(2));
    }

    #[test]
    fn probe_connected_orders_outward() {
        let g = path(5, 0.5);
        let mut p = Probe::new(&g, SeedContext::new(0), Site::Vertex(0)).unwrap();
        p.probe_connected(&[3, 1, 2, 0]).unwrap();
        let t = p.into_trace();
        assert_eq!(t.edges, vec![0, 1, 2, 3]);
        assert!(verify_natural(&g, &t));
    }

    #[test]
    fn probe_limit_enforced() {
        let g = path(5, 0.5);
        let mut p = Probe::new(&g, SeedContext::new(0), Site::Vertex(0)).unwrap().with_limit(Some(2));
        assert_eq!(p.probe_connected(&[0, 1, 2]), Err(LcaError::ProbeLimit(2)));
    }

    #[test]
    fn verify_natural_detects_gaps() {
        let g = path(5, 0.5);
        let bad = ProbeTrace {
            root: Site::Vertex(0),
            probed: vec![Site::Vertex(0), Site::Edge(2)],
            vertices: vec![0, 2, 3],
            edges: vec![2],
        };
        assert!(!verify_natural(&g, &bad));
    }

    #[test]
    fn self_only_ledger_all_ones() {
        let g = petersen(0.5);
        let ledger = sweep_ledger(&SelfOnly, &g, &SeedContext::new(2), Granularity::Vertex, 3).unwrap();
        for i in 0..g.n() {
            assert_eq!(ledger.q_plus[i].mean(), 1.0);
            assert_eq!(ledger.q_minus[i].mean(), 1.0);
            assert_eq!(ledger.psi[i].mean(), 1.0);
        }
        assert!(ledger.identity_held && ledger.psi_dominates);
    }

    #[test]
    fn hub_ledger_on_star() {
        let leaves = 6;
        let g = star(leaves, 0.5);
        let n = leaves + 1;
        let sw = sweep(&HubProbe { hub: 0 }, &g, &SeedContext::new(0), Granularity::Vertex).unwrap();
        assert_eq!(sw.counts.q_minus[0], n);
        assert_eq!(sw.counts.q_plus[0], 1);
        for v in 1..n {
            assert_eq!(sw.counts.q_plus[v], 2);
            assert_eq!(sw.counts.q_minus[v], 1);
            assert_eq!(sw.counts.psi[v], n);
        }
        assert_eq!(sw.counts.sum_q_plus(), sw.counts.sum_q_minus());
        let ledger = sweep_ledger(&HubProbe { hub: 0 }, &g, &SeedContext::new(0), Granularity::Vertex, 30).unwrap();
        let rep = check_correlated_bound(&ledger).unwrap();
        assert_eq!(rep.max_mean_psi, n as f64);
        assert_eq!(rep.bound, 2.0 * n as f64);
        assert!(rep.pass);
    }

    #[test]
    fn bound_needs_thirty_sweeps() {
        let g = path(3, 0.5);
        let ledger = sweep_ledger(&SelfOnly, &g, &SeedContext::new(2), Granularity::Vertex, 5).unwrap();
        assert!(matches!(check_correlated_bound(&ledger), Err(LcaError::InsufficientSweeps { .. })));
    }

    #[test]
    fn edge_granularity_has_vertex_view() {
        let g = cycle(5, 0.5);
        let sw = sweep(&SelfOnly, &g, &SeedContext::new(0), Granularity::Edge).unwrap();
        assert_eq!(sw.counts.q_plus, vec![1; 5]);
        let vv = sw.vertex_view.unwrap();
        assert_eq!(vv.q_plus, vec![2; 5]);
        assert_eq!(vv.q_minus.iter().sum::<usize>(), vv.q_plus.iter().sum::<usize>());
    }

    #[test]
    fn delta_trivial_cases() {
        let g = Graph::uniform(4, &[(0, 1)], 0.5).unwrap();
        let est = estimate_delta(
            &SelfOnly,
            &g,
            &[(Site::Vertex(2), Site::Vertex(3)), (Site::Vertex(1), Site::Vertex(1))],
            20,
            &SeedContext::new(0),
        )
        .unwrap();
        assert_eq!(est[0].delta, 0.0);
        assert_eq!(est[1].delta, 1.0);
    }

    #[test]
    fn ledger_csv_format() {
        let g = path(2, 0.5);
        let ledger = sweep_ledger(&SelfOnly, &g, &SeedContext::new(2), Granularity::Vertex, 1).unwrap();
        let mut buf = Vec::new();
        ledger.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "site,mean_q_plus,mean_q_minus,mean_psi\nv:0,1.000000,1.000000,1.000000\nv:1,1.000000,1.000000,1.000000\n"
        );
    }

    proptest::proptest! {
        #[test]
        fn ledger_identity_holds(sets in proptest::collection::vec(proptest::collection::btree_set(0usize..12, 0..6), 12)) {
            // each root always probes itself
            let out: Vec<Vec<usize>> = sets
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut v: Vec<usize> = s.iter().copied().filter(|&x| x != i).collect();
                    v.insert(0, i);
                    v
                })
                .collect();
            let c = SweepCounts::from_out_sets(Granularity::Vertex, 12, &out);
            proptest::prop_assert_eq!(c.sum_q_plus(), c.sum_q_minus());
            for i in 0..12 {
                proptest::prop_assert!(c.psi[i] >= c.q_plus[i]);
            }
        }
    }
}
