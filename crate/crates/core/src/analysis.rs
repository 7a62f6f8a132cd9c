//! The analysis pipeline as executable code: the fractional matching `f`
//! on non-crucial edges, the crucial matching `M_C`, the edge values `x`,
//! their rounding `y`, and the empirical checks of the claims made about
//! them. Also hosts the approximation-ratio estimator.

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bmatching::{b_generic, build_unsaturation_table, target_marginals, BCoverageLca, BEnv, BParams, InputRealization, UnsaturationTable};
use crate::graph::{enumerate_realizations_capped, sample_realization, Graph, DEFAULT_ENUMERATION_CAP};
use crate::hyperwalk::{HyperwalkError, HyperwalkIndex};
use crate::lca::{estimate_delta, tape_space, LcaError, RunningStat, Site};
use crate::matching::{check_blossom, matching_number, FractionalMatching, Matching, MatchingError, BLOSSOM_SET_CAP};
use crate::seed::{hash_words, SeedContext};
use crate::sparsifier::{
    build_h, classify, derive_r, estimate_q, select_thresholds, EdgeClasses, QProfile, SparseSubgraph, SparsifierError, SparsifierParams,
    Thresholds, DEFAULT_THRESHOLD_EXPONENT,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Sparsifier(#[from] SparsifierError),
    #[error(transparent)]
    Hyperwalk(#[from] HyperwalkError),
    #[error(transparent)]
    Lca(#[from] LcaError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error("no table entry for edge {edge}")]
    MissingTableEntry { edge: usize },
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
}

/// `R` matchings' worth of the three-stage construction of `f`:
/// `t_e` is the fraction of matchings containing `e`, `f'` keeps `t_e` on
/// non-crucial edges up to the cap `1/√(εR)`, and `f = (1−ε)f'` except on
/// edges with an endpoint whose scaled load exceeds its non-crucial mass.
pub fn build_f(g: &Graph, h: &SparseSubgraph, q: &QProfile, classes: &EdgeClasses, eps: f64) -> FractionalMatching {
    let r = h.rounds().max(1) as f64;
    let mut t = vec![0.0; g.m()];
    for m in &h.matchings {
        for &e in m.edges() {
            t[e] += 1.0;
        }
    }
    t.iter_mut().for_each(|x| *x /= r);
    let cap = f_cap(eps, h.rounds());
    let f_prime: Vec<f64> = (0..g.m())
        .map(|e| if classes.noncrucial.contains(e) && t[e] <= cap { t[e] } else { 0.0 })
        .collect();
    let f_prime = FractionalMatching::from_values(f_prime);
    let q_n = noncrucial_mass(g, q, classes);
    let fits = |v: usize| (1.0 - eps) * f_prime.vertex_load(g, v) <= q_n[v];
    let values = g
        .edges()
        .iter()
        .enumerate()
        .map(|(e, ed)| {
            if fits(ed.u) && fits(ed.v) {
                (1.0 - eps) * f_prime.get(e)
            } else {
                0.0
            }
        })
        .collect();
    FractionalMatching::from_values(values)
}

/// `1/√(εR)`.
pub fn f_cap(eps: f64, rounds: usize) -> f64 {
    1.0 / (eps * rounds.max(1) as f64).sqrt()
}

/// `q^N_v = Σ_{e ∋ v, e ∈ N} q_e` for every vertex.
pub fn noncrucial_mass(g: &Graph, q: &QProfile, classes: &EdgeClasses) -> Vec<f64> {
    (0..g.n()).map(|v| q.vertex_mass_in(g, v, &classes.noncrucial)).collect()
}

/// Per-realization properties of `f` that hold exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FChecks {
    pub support: bool,
    pub cap: bool,
    pub vertex_load: bool,
}

impl FChecks {
    pub fn all(&self) -> bool {
        self.support && self.cap && self.vertex_load
    }
}

pub fn check_f(g: &Graph, f: &FractionalMatching, h: &SparseSubgraph, q: &QProfile, classes: &EdgeClasses, eps: f64) -> FChecks {
    const TOL: f64 = 1e-9;
    let cap = f_cap(eps, h.rounds());
    let q_n = noncrucial_mass(g, q, classes);
    FChecks {
        support: f.support().ones().all(|e| h.h.contains(e) && classes.noncrucial.contains(e)),
        cap: f.values().iter().all(|&x| x <= cap + TOL),
        vertex_load: (0..g.n()).all(|v| f.vertex_load(g, v) <= q_n[v] + TOL),
    }
}

/// The crucial subgraph together with everything `𝓑` needs on it.
#[derive(Debug, Clone)]
pub struct CrucialPart {
    pub graph: Graph,
    /// Crucial-subgraph edge id → edge id in the full graph.
    pub map: Vec<usize>,
    pub index: HyperwalkIndex,
    pub table: UnsaturationTable,
    pub params: BParams,
}

impl CrucialPart {
    /// Restrict a realization of the full graph to the crucial subgraph.
    pub fn restrict(&self, realization: &FixedBitSet) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.graph.m());
        for (i, &e) in self.map.iter().enumerate() {
            if realization.contains(e) {
                out.insert(i);
            }
        }
        out
    }

    fn env(&self, input: InputRealization) -> Result<BEnv<'_>, HyperwalkError> {
        BEnv::new(&self.graph, &self.index, &self.params, &self.table, input)
    }
}

/// Build the crucial subgraph, its hyperwalk index and unsaturation table
/// with target marginals `Pr[v ∈ V(MM(G_p) ∩ C)]`.
pub fn prepare_crucial(
    g: &Graph,
    crucial: &FixedBitSet,
    params: &BParams,
    target_samples: usize,
    unsat_samples: usize,
    ctx: &SeedContext,
) -> Result<CrucialPart, AnalysisError> {
    let (graph, map) = g.edge_subgraph(crucial);
    let index = HyperwalkIndex::build(&graph, params.walk_len, params.alpha, params.walk_guard)?;
    let target = target_marginals(g, Some(crucial), target_samples, &ctx.child("target", 0));
    let table = build_unsaturation_table(&graph, &index, params, target, unsat_samples, &ctx.child("unsat", 0))?;
    Ok(CrucialPart {
        graph,
        map,
        index,
        table,
        params: params.clone(),
    })
}

/// `M_C = 𝓑(C_p)`, returned with edge ids of the full graph.
pub fn compute_mc(part: &CrucialPart, realization: &FixedBitSet, ctx: &SeedContext) -> Result<Matching, AnalysisError> {
    if part.graph.m() == 0 {
        return Ok(Matching::empty());
    }
    let env = part.env(InputRealization::Fixed(part.restrict(realization)))?;
    let run = b_generic(&env, &tape_space(ctx), part.params.depth)?;
    Ok(Matching::from_edges(run.matching.edges().iter().map(|&i| part.map[i]).collect()))
}

/// `Pr[v ∉ V(M_C)]` over fresh realizations and fresh randomness of `𝓑`.
pub fn not_covered_table(g: &Graph, part: &CrucialPart, samples: usize, ctx: &SeedContext) -> Result<Vec<f64>, AnalysisError> {
    let samples = samples.max(1);
    let real = ctx.child("realize", 0);
    let covered: Vec<FixedBitSet> = (0..samples)
        .into_par_iter()
        .map(|t| {
            let r = sample_realization(g, &real, t as u64);
            let mc = compute_mc(part, r.present(), &ctx.child("tapes", t as u64))?;
            Ok(mc.vertices(g))
        })
        .collect::<Result<_, AnalysisError>>()?;
    Ok((0..g.n())
        .map(|v| covered.iter().filter(|c| !c.contains(v)).count() as f64 / samples as f64)
        .collect())
}

/// `δ(u, v)` for the endpoints of every non-crucial edge, measured on the
/// vertex-rooted LCA for `𝓑` over the crucial subgraph. Other edges get
/// `None`.
pub fn delta_table(
    g: &Graph,
    part: &CrucialPart,
    classes: &EdgeClasses,
    trials: usize,
    ctx: &SeedContext,
) -> Result<Vec<Option<f64>>, AnalysisError> {
    let edges: Vec<usize> = classes.noncrucial.ones().collect();
    let pairs: Vec<(Site, Site)> = edges
        .iter()
        .map(|&e| (Site::Vertex(g.edge(e).u), Site::Vertex(g.edge(e).v)))
        .collect();
    let mut out = vec![None; g.m()];
    if pairs.is_empty() {
        return Ok(out);
    }
    let lca = BCoverageLca {
        env: part.env(InputRealization::Tapes)?,
    };
    let est = estimate_delta(&lca, &part.graph, &pairs, trials, ctx)?;
    for (e, d) in edges.into_iter().zip(est) {
        out[e] = Some(d.delta);
    }
    Ok(out)
}

/// Guard constants of `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XGuards {
    pub eps: f64,
    pub p_min: f64,
    /// Non-crucial edges with `δ(u, v) > (eps·p_min)^delta_exponent` get 0.
    pub delta_exponent: f64,
}

impl XGuards {
    pub fn delta_threshold(&self) -> f64 {
        (self.eps * self.p_min).powf(self.delta_exponent)
    }
}

/// Everything `x` reads besides `f`.
#[derive(Debug, Clone, Copy)]
pub struct XInputs<'a> {
    pub h: &'a FixedBitSet,
    pub realization: &'a FixedBitSet,
    pub classes: &'a EdgeClasses,
    pub not_covered: &'a [f64],
    pub delta: &'a [Option<f64>],
}

/// Edge values `x`: 1 on `M_C ∩ H_p`, and on a surviving non-crucial edge
/// `f_e / (p_e · Pr[u ∉ V(M_C)] · Pr[v ∉ V(M_C)])`. Edges that are neither
/// crucial nor non-crucial get 0.
pub fn build_x(g: &Graph, f: &FractionalMatching, mc: &Matching, inputs: XInputs<'_>, guards: XGuards) -> Result<Vec<f64>, AnalysisError> {
    let covered = mc.vertices(g);
    let eps2 = guards.eps * guards.eps;
    let threshold = guards.delta_threshold();
    let mut x = vec![0.0; g.m()];
    for (e, ed) in g.edges().iter().enumerate() {
        if inputs.classes.crucial.contains(e) {
            if mc.contains(e) && inputs.h.contains(e) && inputs.realization.contains(e) {
                x[e] = 1.0;
            }
            continue;
        }
        if !inputs.classes.noncrucial.contains(e) {
            continue;
        }
        let delta = inputs.delta.get(e).copied().flatten().ok_or(AnalysisError::MissingTableEntry { edge: e })?;
        let (nu, nv) = match (inputs.not_covered.get(ed.u), inputs.not_covered.get(ed.v)) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(AnalysisError::MissingTableEntry { edge: e }),
        };
        if delta > threshold
            || nu < eps2
            || nv < eps2
            || !inputs.realization.contains(e)
            || covered.contains(ed.u)
            || covered.contains(ed.v)
        {
            continue;
        }
        x[e] = f.get(e) / (ed.p * nu * nv);
    }
    Ok(x)
}

/// `x_v = Σ_{e ∋ v} x_e`.
pub fn edge_value_loads(g: &Graph, x: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; g.n()];
    for (ed, &val) in g.edges().iter().zip(x) {
        load[ed.u] += val;
        load[ed.v] += val;
    }
    load
}

/// `y_e = x_e/(1+ε)` when both endpoint loads are at most `1+ε`, else 0.
pub fn round_x(x: &[f64], eps: f64, g: &Graph) -> FractionalMatching {
    let load = edge_value_loads(g, x);
    let limit = 1.0 + eps;
    FractionalMatching::from_values(
        g.edges()
            .iter()
            .zip(x)
            .map(|(ed, &val)| {
                if load[ed.u] <= limit && load[ed.v] <= limit {
                    val / limit
                } else {
                    0.0
                }
            })
            .collect(),
    )
}

/// `y_v ≤ 1` and every `y_e` is either `x_e/(1+ε)` or 0 as the case split
/// dictates.
pub fn check_rounding(g: &Graph, x: &[f64], y: &FractionalMatching, eps: f64) -> bool {
    const TOL: f64 = 1e-9;
    let load = edge_value_loads(g, x);
    let limit = 1.0 + eps;
    let split = g.edges().iter().enumerate().all(|(e, ed)| {
        let expected = if load[ed.u] <= limit && load[ed.v] <= limit { x[e] / limit } else { 0.0 };
        (y.get(e) - expected).abs() <= TOL
    });
    split && y.vertex_loads(g).iter().all(|&l| l <= 1.0 + TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioEstimate {
    pub ratio: f64,
    pub stderr: f64,
    /// `E[μ(H ∩ G_p)]`.
    pub numerator: f64,
    /// `E[μ(G_p)]`.
    pub denominator: f64,
    pub mode: RatioMode,
    pub samples: usize,
}

/// `E[μ(H ∩ G_p)] / E[μ(G_p)]`, exact by enumeration when `exact` is set
/// and the graph is under the enumeration cap.
pub fn estimate_ratio(g: &Graph, h: &FixedBitSet, samples: usize, ctx: &SeedContext, exact: bool) -> RatioEstimate {
    estimate_ratios(g, std::slice::from_ref(h), samples, ctx, exact).remove(0)
}

/// Ratios of several subgraphs evaluated on one shared set of realizations.
pub fn estimate_ratios(g: &Graph, hs: &[FixedBitSet], samples: usize, ctx: &SeedContext, exact: bool) -> Vec<RatioEstimate> {
    if exact && g.m() <= DEFAULT_ENUMERATION_CAP {
        let mut num = vec![0.0; hs.len()];
        let mut den = 0.0;
        for (r, pr) in enumerate_realizations_capped(g, DEFAULT_ENUMERATION_CAP).expect("under cap") {
            den += pr * matching_number(g, r.present()) as f64;
            for (acc, h) in num.iter_mut().zip(hs) {
                let mut both = r.present().clone();
                both.intersect_with(h);
                *acc += pr * matching_number(g, &both) as f64;
            }
        }
        return num
            .into_iter()
            .map(|n| RatioEstimate {
                ratio: if den > 0.0 { n / den } else { 1.0 },
                stderr: 0.0,
                numerator: n,
                denominator: den,
                mode: RatioMode::Exact,
                samples: 0,
            })
            .collect();
    }
    let samples = samples.max(1);
    let ns = ctx.child("ratio", 0);
    // per sample: μ(G_p) followed by μ(H ∩ G_p) for each H
    let rows: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|t| {
            let r = sample_realization(g, &ns, t as u64);
            let mut row = Vec::with_capacity(hs.len() + 1);
            row.push(matching_number(g, r.present()) as f64);
            for h in hs {
                let mut both = r.present().clone();
                both.intersect_with(h);
                row.push(matching_number(g, &both) as f64);
            }
            row
        })
        .collect();
    let den: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    (0..hs.len())
        .map(|k| {
            let num: Vec<f64> = rows.iter().map(|r| r[k + 1]).collect();
            let (ratio, stderr) = jackknife_ratio(&num, &den);
            let n = samples as f64;
            RatioEstimate {
                ratio,
                stderr,
                numerator: num.iter().sum::<f64>() / n,
                denominator: den.iter().sum::<f64>() / n,
                mode: RatioMode::Sampled,
                samples,
            }
        })
        .collect()
}

/// `Σa / Σb` with its delete-one jackknife standard error.
pub fn jackknife_ratio(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let ratio = if sb > 0.0 { sa / sb } else { 1.0 };
    let n = a.len();
    if n < 2 {
        return (ratio, 0.0);
    }
    let loo: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| if sb - y > 0.0 { (sa - x) / (sb - y) } else { 1.0 })
        .collect();
    let mean = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|r| (r - mean).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    (ratio, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Lightest bucket of the threshold ladder with this exponent.
    Auto { exponent: u32 },
    Fixed(Thresholds),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub eps: f64,
    /// Rounds of the sparsifier; `None` derives `R = ⌈1/(2τ⁻)⌉`.
    pub rounds: Option<usize>,
    pub max_rounds: usize,
    pub thresholds: ThresholdMode,
    pub q_samples: usize,
    /// Parameters of `𝓑` for `M_C`.
    pub b: BParams,
    pub target_samples: usize,
    pub unsat_samples: usize,
    pub cover_samples: usize,
    pub delta_trials: usize,
    pub delta_exponent: f64,
    pub trials: usize,
    pub seed: u64,
}

impl PipelineConfig {
    /// Small constants that finish in seconds on graphs of a few dozen edges.
    pub fn desk(eps: f64, seed: u64) -> Self {
        PipelineConfig {
            eps,
            rounds: None,
            max_rounds: 4096,
            thresholds: ThresholdMode::Auto {
                exponent: DEFAULT_THRESHOLD_EXPONENT,
            },
            q_samples: 10_000,
            b: BParams {
                depth: 2,
                ..BParams::desk(eps * eps)
            },
            target_samples: 2_000,
            unsat_samples: 200,
            cover_samples: 1_000,
            delta_trials: 200,
            delta_exponent: 2.0,
            trials: 100,
            seed,
        }
    }

    /// Desk sampling with the guard exponent of the analysis.
    pub fn theory_guards(eps: f64, seed: u64) -> Self {
        PipelineConfig {
            delta_exponent: 15.0,
            ..Self::desk(eps, seed)
        }
    }

    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(AnalysisError::InvalidConfig(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.trials == 0 {
            return Err(AnalysisError::InvalidConfig("at least one trial is required".into()));
        }
        if self.rounds == Some(0) {
            return Err(AnalysisError::InvalidConfig("rounds must be positive".into()));
        }
        if let ThresholdMode::Fixed(t) = self.thresholds {
            if !(t.tau_minus > 0.0 && t.tau_minus < t.tau_plus) {
                return Err(AnalysisError::InvalidConfig(format!("need 0 < tau_minus < tau_plus, got {t:?}")));
            }
        }
        Ok(())
    }

    fn context(&self) -> SeedContext {
        SeedContext::new(self.seed).child("pipeline", 0)
    }

    /// Largest blossom set size checked on `y`.
    pub fn blossom_eps(&self) -> f64 {
        self.eps.max(1.0 / BLOSSOM_SET_CAP as f64)
    }
}

/// Tables shared by all trials of one configuration.
#[derive(Debug, Clone)]
pub struct PipelineSetup {
    pub q: QProfile,
    pub thresholds: Thresholds,
    /// The automatic selection saw only zero q-values and fell back.
    pub threshold_fallback: bool,
    pub classes: EdgeClasses,
    pub rounds: usize,
    /// `opt = E[μ(G_p)] = |q|`.
    pub opt: f64,
    pub q_n: f64,
    pub crucial: CrucialPart,
    pub not_covered: Vec<f64>,
    pub delta: Vec<Option<f64>>,
    pub guards: XGuards,
}

pub fn prepare(g: &Graph, cfg: &PipelineConfig) -> Result<PipelineSetup, AnalysisError> {
    cfg.validate()?;
    let ctx = cfg.context();
    let q = estimate_q(g, cfg.q_samples, &ctx.child("q", 0))?;
    let p_min = if g.m() == 0 { 1.0 } else { g.min_probability() };
    let (thresholds, threshold_fallback) = match &cfg.thresholds {
        ThresholdMode::Fixed(t) => (*t, false),
        ThresholdMode::Auto { exponent } => match select_thresholds(&q.q, cfg.eps, p_min, *exponent) {
            Ok(t) => (t, false),
            Err(SparsifierError::DegenerateInput { fallback }) => (fallback, true),
            Err(e) => return Err(e.into()),
        },
    };
    let classes = classify(&q, &thresholds);
    let rounds = match cfg.rounds {
        Some(r) => r,
        None => derive_r(thresholds.tau_minus)?,
    };
    if rounds > cfg.max_rounds {
        return Err(AnalysisError::InvalidConfig(format!(
            "derived R = {rounds} exceeds max_rounds = {}",
            cfg.max_rounds
        )));
    }
    let crucial = prepare_crucial(g, &classes.crucial, &cfg.b, cfg.target_samples, cfg.unsat_samples, &ctx.child("crucial", 0))?;
    let not_covered = not_covered_table(g, &crucial, cfg.cover_samples, &ctx.child("cover", 0))?;
    let delta = delta_table(g, &crucial, &classes, cfg.delta_trials, &ctx.child("delta", 0))?;
    Ok(PipelineSetup {
        opt: q.total(),
        q_n: q.mass_of(&classes.noncrucial),
        q,
        thresholds,
        threshold_fallback,
        classes,
        rounds,
        crucial,
        not_covered,
        delta,
        guards: XGuards {
            eps: cfg.eps,
            p_min,
            delta_exponent: cfg.delta_exponent,
        },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDiagnostics {
    pub f: FChecks,
    /// `M_C` is a matching inside the realized crucial edges.
    pub mc_valid: bool,
    pub rounding_valid: bool,
    pub blossom_passed: bool,
    pub blossom_violations: usize,
    /// `μ(H ∩ G_p)`.
    pub mu_hp: usize,
    /// `μ(G_p)`.
    pub mu_gp: usize,
}

/// One draw of `H`, `G_p` and the randomness of `𝓑`, with every derived
/// quantity.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub trial: usize,
    pub h: SparseSubgraph,
    pub realization: FixedBitSet,
    pub f: FractionalMatching,
    pub mc: Matching,
    pub x: Vec<f64>,
    /// `(1−ε)x`, the input of the rounding step.
    pub x_scaled: Vec<f64>,
    pub y: FractionalMatching,
    pub diagnostics: RunDiagnostics,
}

pub fn run_trial(g: &Graph, cfg: &PipelineConfig, setup: &PipelineSetup, trial: usize) -> Result<PipelineRun, AnalysisError> {
    let tctx = cfg.context().child("trial", trial as u64);
    let h = build_h(g, &SparsifierParams::new(setup.rounds, cfg.eps, hash_words([cfg.seed, trial as u64])))?;
    let realization = sample_realization(g, &tctx, 0).into_set();
    let f = build_f(g, &h, &setup.q, &setup.classes, cfg.eps);
    let mc = compute_mc(&setup.crucial, &realization, &tctx.child("mc", 0))?;
    let x = build_x(
        g,
        &f,
        &mc,
        XInputs {
            h: &h.h,
            realization: &realization,
            classes: &setup.classes,
            not_covered: &setup.not_covered,
            delta: &setup.delta,
        },
        setup.guards,
    )?;
    let x_scaled: Vec<f64> = x.iter().map(|v| (1.0 - cfg.eps) * v).collect();
    let y = round_x(&x_scaled, cfg.eps, g);
    let blossom = check_blossom(&y, g, cfg.blossom_eps())?;
    let mut hp = realization.clone();
    hp.intersect_with(&h.h);
    let diagnostics = RunDiagnostics {
        f: check_f(g, &f, &h, &setup.q, &setup.classes, cfg.eps),
        mc_valid: mc.is_valid(g) && mc.edges().iter().all(|&e| setup.classes.crucial.contains(e) && realization.contains(e)),
        rounding_valid: check_rounding(g, &x_scaled, &y, cfg.eps),
        blossom_passed: blossom.passed(),
        blossom_violations: blossom.violations.len(),
        mu_hp: matching_number(g, &hp),
        mu_gp: matching_number(g, &realization),
    };
    Ok(PipelineRun {
        trial,
        h,
        realization,
        f,
        mc,
        x,
        x_scaled,
        y,
        diagnostics,
    })
}

pub fn run_pipeline(g: &Graph, cfg: &PipelineConfig, setup: &PipelineSetup) -> Result<Vec<PipelineRun>, AnalysisError> {
    (0..cfg.trials).into_par_iter().map(|t| run_trial(g, cfg, setup, t)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimFlag {
    Pass,
    Fail,
    /// Nothing to check on this instance.
    Vacuous,
}

/// One bound compared against its empirical counterpart. `exact` checks
/// must hold on every run; the others allow three standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimCheck {
    pub name: String,
    pub bound: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub flag: ClaimFlag,
    pub exact: bool,
}

impl ClaimCheck {
    fn upper(name: &str, empirical: f64, stderr: f64, bound: f64) -> Self {
        ClaimCheck {
            name: name.into(),
            bound,
            empirical,
            stderr,
            flag: if empirical <= bound + 3.0 * stderr + 1e-12 { ClaimFlag::Pass } else { ClaimFlag::Fail },
            exact: false,
        }
    }

    fn lower(name: &str, empirical: f64, stderr: f64, bound: f64) -> Self {
        ClaimCheck {
            flag: if empirical >= bound - 3.0 * stderr - 1e-12 { ClaimFlag::Pass } else { ClaimFlag::Fail },
            ..Self::upper(name, empirical, stderr, bound)
        }
    }

    fn every_run(name: &str, ok_runs: usize, runs: usize) -> Self {
        ClaimCheck {
            name: name.into(),
            bound: runs as f64,
            empirical: ok_runs as f64,
            stderr: 0.0,
            flag: if ok_runs == runs { ClaimFlag::Pass } else { ClaimFlag::Fail },
            exact: true,
        }
    }

    fn vacuous(mut self) -> Self {
        self.flag = ClaimFlag::Vacuous;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimReport {
    pub n: usize,
    pub m: usize,
    pub eps: f64,
    pub rounds: usize,
    pub trials: usize,
    pub crucial_edges: usize,
    pub noncrucial_edges: usize,
    pub thresholds: Thresholds,
    pub opt: f64,
    pub mean_mu_hp: f64,
    pub claims: Vec<ClaimCheck>,
}

impl ClaimReport {
    pub fn claim(&self, name: &str) -> Option<&ClaimCheck> {
        self.claims.iter().find(|c| c.name == name)
    }

    /// No check is flagged `Fail`.
    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.flag != ClaimFlag::Fail)
    }

    /// No exact check is flagged `Fail`.
    pub fn exact_pass(&self) -> bool {
        self.claims.iter().all(|c| !c.exact || c.flag != ClaimFlag::Fail)
    }
}

fn stat(values: impl IntoIterator<Item = f64>) -> RunningStat {
    let mut s = RunningStat::default();
    values.into_iter().for_each(|v| s.push(v));
    s
}

/// Aggregate pipeline runs into per-claim checks.
pub fn verify_claims(g: &Graph, cfg: &PipelineConfig, setup: &PipelineSetup, runs: &[PipelineRun]) -> ClaimReport {
    let eps = cfg.eps;
    let n_runs = runs.len();
    let count = |pred: &dyn Fn(&PipelineRun) -> bool| runs.iter().filter(|r| pred(r)).count();
    let no_n = setup.classes.noncrucial.is_clear();
    let no_c = setup.classes.crucial.is_clear();
    let mut claims = Vec::new();

    let mark = |c: ClaimCheck, vacuous: bool| if vacuous { c.vacuous() } else { c };
    claims.push(mark(ClaimCheck::every_run("f_support", count(&|r| r.diagnostics.f.support), n_runs), no_n));
    claims.push(mark(ClaimCheck::every_run("f_cap", count(&|r| r.diagnostics.f.cap), n_runs), no_n));
    claims.push(mark(ClaimCheck::every_run("f_vertex_load", count(&|r| r.diagnostics.f.vertex_load), n_runs), no_n));

    // worst edge of E[f_e] ≤ q_e, measured as the largest standardized excess
    let mut worst = ClaimCheck::upper("f_edge_mean", 0.0, 0.0, 0.0);
    let mut worst_z = f64::NEG_INFINITY;
    for e in setup.classes.noncrucial.ones() {
        let s = stat(runs.iter().map(|r| r.f.get(e)));
        let se = (s.stderr().powi(2) + setup.q.stderr(e).powi(2)).sqrt();
        let z = (s.mean() - setup.q.q[e]) / se.max(1e-300);
        if z > worst_z {
            worst_z = z;
            worst = ClaimCheck::upper("f_edge_mean", s.mean(), se, setup.q.q[e]);
        }
    }
    claims.push(mark(worst, no_n));

    let f_size = stat(runs.iter().map(|r| r.f.size()));
    claims.push(mark(
        ClaimCheck::lower("f_size", f_size.mean(), f_size.stderr(), setup.q_n - eps * setup.opt),
        no_n,
    ));

    let loads: Vec<Vec<f64>> = runs.iter().map(|r| edge_value_loads(g, &r.x)).collect();
    let mut x_mean = ClaimCheck::upper("x_vertex_mean", 0.0, 0.0, 1.0 + eps);
    let mut x_tail = ClaimCheck::upper("x_vertex_tail", 0.0, 0.0, eps * eps);
    let (mut worst_mean, mut worst_tail) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in 0..g.n() {
        let s = stat(loads.iter().map(|l| l[v]));
        if s.mean() - 3.0 * s.stderr() > worst_mean {
            worst_mean = s.mean() - 3.0 * s.stderr();
            x_mean = ClaimCheck::upper("x_vertex_mean", s.mean(), s.stderr(), 1.0 + eps);
        }
        let t = stat(loads.iter().map(|l| if l[v] >= 1.0 + 2.0 * eps { 1.0 } else { 0.0 }));
        if t.mean() - 3.0 * t.stderr() > worst_tail {
            worst_tail = t.mean() - 3.0 * t.stderr();
            x_tail = ClaimCheck::upper("x_vertex_tail", t.mean(), t.stderr(), eps * eps);
        }
    }
    claims.push(mark(x_mean, no_n && no_c));
    claims.push(mark(x_tail, no_n && no_c));

    let x_size = stat(runs.iter().map(|r| r.x.iter().sum::<f64>()));
    claims.push(mark(
        ClaimCheck::lower("x_size", x_size.mean(), x_size.stderr(), (1.0 - 7.0 * eps) * setup.opt),
        no_n && no_c,
    ));

    claims.push(ClaimCheck::every_run("y_rounding", count(&|r| r.diagnostics.rounding_valid), n_runs));
    // measured tail frequency of the rounding input
    let scaled_loads: Vec<Vec<f64>> = runs.iter().map(|r| edge_value_loads(g, &r.x_scaled)).collect();
    let alpha = (0..g.n())
        .map(|v| scaled_loads.iter().filter(|l| l[v] > 1.0 + eps).count() as f64 / n_runs.max(1) as f64)
        .fold(0.0, f64::max);
    let y_size = stat(runs.iter().map(|r| r.y.size()));
    let xs_size = stat(runs.iter().map(|r| r.x_scaled.iter().sum::<f64>()));
    claims.push(ClaimCheck::lower(
        "y_size",
        y_size.mean(),
        (y_size.stderr().powi(2) + ((1.0 - eps) * xs_size.stderr()).powi(2)).sqrt(),
        (1.0 - eps) * xs_size.mean() - alpha * g.n() as f64,
    ));
    claims.push(ClaimCheck::every_run("y_blossom", count(&|r| r.diagnostics.blossom_passed), n_runs));
    claims.push(ClaimCheck::every_run("mc_valid", count(&|r| r.diagnostics.mc_valid), n_runs));

    ClaimReport {
        n: g.n(),
        m: g.m(),
        eps,
        rounds: setup.rounds,
        trials: n_runs,
        crucial_edges: setup.classes.crucial.count_ones(..),
        noncrucial_edges: setup.classes.noncrucial.count_ones(..),
        thresholds: setup.thresholds,
        opt: setup.opt,
        mean_mu_hp: stat(runs.iter().map(|r| r.diagnostics.mu_hp as f64)).mean(),
        claims,
    }
}

/// `prepare`, `run_pipeline` and `verify_claims` in one call.
pub fn verify_instance(g: &Graph, cfg: &PipelineConfig) -> Result<(ClaimReport, PipelineSetup, Vec<PipelineRun>), AnalysisError> {
    let setup = prepare(g, cfg)?;
    let runs = run_pipeline(g, cfg, &setup)?;
    let report = verify_claims(g, cfg, &setup, &runs);
    Ok((report, setup, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::sparsifier::{exact_q, QSource};

    fn classes_all_noncrucial(m: usize) -> EdgeClasses {
        let mut noncrucial = FixedBitSet::with_capacity(m);
        noncrucial.insert_range(..);
        EdgeClasses {
            crucial: FixedBitSet::with_capacity(m),
            noncrucial,
        }
    }

    fn subgraph(m: usize, rounds: Vec<Vec<usize>>) -> SparseSubgraph {
        let matchings: Vec<Matching> = rounds.into_iter().map(Matching::from_edges).collect();
        let mut h = FixedBitSet::with_capacity(m);
        matchings.iter().flat_map(|x| x.edges().to_vec()).for_each(|e| h.insert(e));
        SparseSubgraph { h, matchings }
    }

    #[test]
    fn f_single_appearance() {
        // R = 4, edge 0 in one matching; cap 1/√(0.2·4) ≈ 1.118 ≥ 0.25
        let g = path(3, 0.5);
        let h = subgraph(2, vec![vec![0], vec![], vec![], vec![]]);
        let q = QProfile {
            q: vec![0.5, 0.5],
            source: QSource::Exact,
        };
        let f = build_f(&g, &h, &q, &classes_all_noncrucial(2), 0.2);
        assert!((f.get(0) - 0.8 * 0.25).abs() < 1e-12);
        assert_eq!(f.get(1), 0.0);
    }

    #[test]
    fn f_zeroes_crucial_and_overloaded() {
        let g = path(3, 0.5);
        let h = subgraph(2, vec![vec![0, 1]; 4]);
        let q = QProfile {
            q: vec![0.5, 0.1],
            source: QSource::Exact,
        };
        let mut classes = classes_all_noncrucial(2);
        classes.noncrucial.set(0, false);
        classes.crucial.insert(0);
        // edge 1: t = 1 ≤ cap, but (1−ε)·1 > q^N = 0.1 at both ends
        let f = build_f(&g, &h, &q, &classes, 0.2);
        assert_eq!(f.values(), &[0.0, 0.0]);
        assert!(check_f(&g, &f, &h, &q, &classes, 0.2).all());
    }

    #[test]
    fn f_cap_applies() {
        // R = 1, eps = 0.5: cap √2 ≥ 1 so cap is inactive; with eps = 0.9 and R = 4 cap ≈ 0.527
        let g = path(2, 0.5);
        let h = subgraph(1, vec![vec![0], vec![0], vec![0], vec![]]);
        let q = QProfile {
            q: vec![1.0],
            source: QSource::Exact,
        };
        let f = build_f(&g, &h, &q, &classes_all_noncrucial(1), 0.9);
        assert_eq!(f.get(0), 0.0);
    }

    fn x_inputs<'a>(
        h: &'a FixedBitSet,
        realization: &'a FixedBitSet,
        classes: &'a EdgeClasses,
        not_covered: &'a [f64],
        delta: &'a [Option<f64>],
    ) -> XInputs<'a> {
        XInputs {
            h,
            realization,
            classes,
            not_covered,
            delta,
        }
    }

    #[test]
    fn x_formula() {
        let g = path(2, 0.5);
        let f = FractionalMatching::from_values(vec![0.1]);
        let all = g.edge_set();
        let classes = classes_all_noncrucial(1);
        let guards = XGuards {
            eps: 0.2,
            p_min: 0.5,
            delta_exponent: 2.0,
        };
        let x = build_x(&g, &f, &Matching::empty(), x_inputs(&all, &all, &classes, &[0.5, 0.5], &[Some(0.0)]), guards).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12);
        // unrealized
        let none = FixedBitSet::with_capacity(1);
        let x = build_x(&g, &f, &Matching::empty(), x_inputs(&all, &none, &classes, &[0.5, 0.5], &[Some(0.0)]), guards).unwrap();
        assert_eq!(x[0], 0.0);
        // correlated endpoints
        let x = build_x(&g, &f, &Matching::empty(), x_inputs(&all, &all, &classes, &[0.5, 0.5], &[Some(0.5)]), guards).unwrap();
        assert_eq!(x[0], 0.0);
        // rarely free endpoint
        let x = build_x(&g, &f, &Matching::empty(), x_inputs(&all, &all, &classes, &[0.01, 0.5], &[Some(0.0)]), guards).unwrap();
        assert_eq!(x[0], 0.0);
        assert!(matches!(
            build_x(&g, &f, &Matching::empty(), x_inputs(&all, &all, &classes, &[0.5, 0.5], &[None]), guards),
            Err(AnalysisError::MissingTableEntry { edge: 0 })
        ));
    }

    #[test]
    fn x_crucial_and_adjacent() {
        // edges 0 = (0,1) crucial in M_C, 1 = (1,2) non-crucial adjacent to M_C
        let g = path(3, 0.5);
        let all = g.edge_set();
        let mut classes = classes_all_noncrucial(2);
        classes.noncrucial.set(0, false);
        classes.crucial.insert(0);
        let f = FractionalMatching::from_values(vec![0.0, 0.1]);
        let mc = Matching::from_edges(vec![0]);
        let guards = XGuards {
            eps: 0.2,
            p_min: 0.5,
            delta_exponent: 2.0,
        };
        let x = build_x(&g, &f, &mc, x_inputs(&all, &all, &classes, &[0.5; 3], &[None, Some(0.0)]), guards).unwrap();
        assert_eq!(x, vec![1.0, 0.0]);
        let mut h = all.clone();
        h.set(0, false);
        let x = build_x(&g, &f, &mc, x_inputs(&h, &all, &classes, &[0.5; 3], &[None, Some(0.0)]), guards).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
    }

    #[test]
    fn rounding_cases() {
        let g = path(3, 0.5);
        let y = round_x(&[0.5, 0.5], 0.2, &g);
        assert!((y.get(0) - 0.5 / 1.2).abs() < 1e-12);
        let y = round_x(&[2.0, 0.1], 0.2, &g);
        assert_eq!(y.values(), &[0.0, 0.0]);
        assert!(check_rounding(&g, &[2.0, 0.1], &y, 0.2));
        let empty = Graph::new(2, vec![]).unwrap();
        assert_eq!(round_x(&[], 0.2, &empty).size(), 0.0);
    }

    #[test]
    fn ratio_exact_examples() {
        let tri = complete(3, 0.5);
        let ctx = SeedContext::new(0);
        let full = estimate_ratio(&tri, &tri.edge_set(), 10, &ctx, true);
        assert_eq!(full.ratio, 1.0);
        let mut one = FixedBitSet::with_capacity(3);
        one.insert(0);
        let r = estimate_ratio(&tri, &one, 10, &ctx, true);
        assert!((r.ratio - 0.5 / 0.875).abs() < 1e-12);
        assert_eq!(r.mode, RatioMode::Exact);
    }

    #[test]
    fn ratio_sampled_full_graph_is_one() {
        let g = cycle(7, 0.5);
        let r = estimate_ratio(&g, &g.edge_set(), 500, &SeedContext::new(3), false);
        assert_eq!(r.ratio, 1.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn jackknife_matches_hand_computation() {
        // leave-one-out ratios 5/5, 4/4, 3/3 for a = b
        let (r, se) = jackknife_ratio(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!((r, se), (1.0, 0.0));
        // a = [1, 0], b = [1, 1]: ratio 0.5, loo ratios 0 and 1, var = 1/2·(0.25+0.25)
        let (r, se) = jackknife_ratio(&[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(r, 0.5);
        assert!((se - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_instance_is_vacuous() {
        let g = Graph::new(3, vec![]).unwrap();
        let cfg = PipelineConfig {
            trials: 5,
            ..PipelineConfig::desk(0.3, 1)
        };
        let (report, _, _) = verify_instance(&g, &cfg).unwrap();
        assert!(report.all_pass());
        assert_eq!(report.claim("x_size").unwrap().flag, ClaimFlag::Vacuous);
    }

    #[test]
    fn single_noncrucial_edge_closed_form() {
        // f_e = 0.8·t_e when t_e ≤ 0.625, so E[f_e] = 0.8·(¼·4/16 + ½·6/16) = 0.2,
        // and x_e = 2 f_e on realization, giving E[x_v] = 0.2 as well
        let g = path(2, 0.5);
        let cfg = PipelineConfig {
            rounds: Some(4),
            thresholds: ThresholdMode::Fixed(Thresholds {
                tau_minus: 0.5,
                tau_plus: 0.9,
            }),
            trials: 4000,
            ..PipelineConfig::desk(0.2, 5)
        };
        let (report, setup, runs) = verify_instance(&g, &cfg).unwrap();
        assert_eq!(setup.q, exact_q(&g));
        assert!(report.exact_pass(), "{report:#?}");
        for name in ["f_edge_mean", "x_vertex_mean", "x_vertex_tail", "x_size", "y_size"] {
            assert_eq!(report.claim(name).unwrap().flag, ClaimFlag::Pass, "{name}");
        }
        // with R = 4 the lower bound q_N − ε·opt = 0.4 sits far above E|f| = 0.2
        assert_eq!(report.claim("f_size").unwrap().flag, ClaimFlag::Fail);
        let mean_f = runs.iter().map(|r| r.f.get(0)).sum::<f64>() / runs.len() as f64;
        let mean_x = runs.iter().map(|r| r.x[0]).sum::<f64>() / runs.len() as f64;
        assert!((mean_f - 0.2).abs() < 0.02, "{mean_f}");
        assert!((mean_x - 0.2).abs() < 0.03, "{mean_x}");
    }

    #[test]
    fn crucial_only_instance() {
        let g = perfect_matching(2, 0.8);
        let cfg = PipelineConfig {
            trials: 30,
            thresholds: ThresholdMode::Fixed(Thresholds {
                tau_minus: 0.1,
                tau_plus: 0.5,
            }),
            ..PipelineConfig::desk(0.3, 2)
        };
        let (report, setup, runs) = verify_instance(&g, &cfg).unwrap();
        assert_eq!(setup.classes.crucial.count_ones(..), 2);
        assert!(report.exact_pass());
        for r in &runs {
            // every M_C edge that lies in H_p gets value 1
            for &e in r.mc.edges() {
                assert_eq!(r.x[e], if r.h.h.contains(e) { 1.0 } else { 0.0 });
            }
        }
    }
}
