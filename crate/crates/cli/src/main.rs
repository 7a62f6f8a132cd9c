mod config;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use stochmatch::analysis::{estimate_ratios, verify_instance, AnalysisError, PipelineConfig, RatioMode, ThresholdMode};
use stochmatch::bmatching::{build_unsaturation_table, target_marginals, BEnv, BMatchingLca, BParams, InputRealization};
use stochmatch::graph::{Graph, GraphError, DEFAULT_ENUMERATION_CAP};
use stochmatch::hyperwalk::{HyperwalkError, HyperwalkIndex};
use stochmatch::lca::{sweep_ledger, Granularity, LcaError, QueryLedger, SelfOnly};
use stochmatch::matching::MatchingError;
use stochmatch::mis::{TmisBudget, TmisLca};
use stochmatch::sparsifier::{
    build_h, classify, estimate_q, exact_q, select_thresholds, QSource, SparsifierError, SparsifierParams, Thresholds, DEFAULT_Q_SAMPLES,
    DEFAULT_THRESHOLD_EXPONENT,
};
use stochmatch::SeedContext;
use thiserror::Error;

use config::{ExperimentConfig, Flags, LcaKind};

#[derive(Debug, Parser)]
#[command(name = "stochmatch", version, about = "Stochastic matching sparsifier and LCA instrumentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the sparse subgraph H and write it with metadata.
    Sparsify(Flags),
    /// Estimate E[μ(H ∩ G_p)] / E[μ(G_p)] for one or more R.
    Evaluate(Flags),
    /// Sweep an LCA and export its query ledger as CSV.
    LcaStats(Flags),
    /// Run the analysis pipeline and write the claim report as JSON.
    Verify(Flags),
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("resource guard: {0}")]
    Guard(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Guard(_) => 1,
            _ => 2,
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::EdgeCountExceeded { .. } => CliError::Guard(e.to_string()),
            GraphError::Io(io) => CliError::Io(io),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SparsifierError> for CliError {
    fn from(e: SparsifierError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<HyperwalkError> for CliError {
    fn from(e: HyperwalkError) -> Self {
        match e {
            HyperwalkError::EnumerationTooLarge { .. } | HyperwalkError::ResourceGuard { .. } => CliError::Guard(e.to_string()),
            HyperwalkError::Lca(l) => l.into(),
            HyperwalkError::InvalidParams(m) => CliError::Usage(m),
        }
    }
}

impl From<LcaError> for CliError {
    fn from(e: LcaError) -> Self {
        match e {
            LcaError::ResourceGuard { .. } | LcaError::ProbeLimit(_) => CliError::Guard(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Hyperwalk(h) => h.into(),
            AnalysisError::Lca(l) => l.into(),
            AnalysisError::Sparsifier(s) => s.into(),
            AnalysisError::Matching(MatchingError::CapExceeded { .. }) => CliError::Guard(e.to_string()),
            AnalysisError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn single_rounds(cfg: &ExperimentConfig, default: usize) -> Result<usize, CliError> {
    match cfg.rounds.as_deref() {
        None => Ok(default),
        Some([r]) => Ok(*r),
        Some(_) => Err(CliError::Usage("this command takes a single --R value".into())),
    }
}

#[derive(Serialize)]
struct QSummary {
    source: QSource,
    total: f64,
    min: f64,
    max: f64,
    mean: f64,
}

#[derive(Serialize)]
struct SparsifyMeta {
    n: usize,
    m: usize,
    rounds: usize,
    eps: f64,
    seed: u64,
    h_edges: usize,
    max_degree: usize,
    tau_minus: f64,
    tau_plus: f64,
    crucial: usize,
    noncrucial: usize,
    h: Vec<usize>,
    q_summary: QSummary,
    q: Vec<f64>,
}

fn cmd_sparsify(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let g = Graph::load(&cfg.input)?;
    let rounds = single_rounds(cfg, 8)?;
    let h = build_h(&g, &SparsifierParams::new(rounds, cfg.eps, cfg.seed))?;
    let q = if cfg.exact {
        if g.m() > DEFAULT_ENUMERATION_CAP {
            return Err(CliError::Guard(format!("--exact needs at most {DEFAULT_ENUMERATION_CAP} edges, graph has {}", g.m())));
        }
        exact_q(&g)
    } else {
        estimate_q(&g, cfg.samples.unwrap_or(DEFAULT_Q_SAMPLES), &SeedContext::new(cfg.seed).child("q", 0))?
    };
    let thresholds = match cfg.thresholds {
        Some((tau_minus, tau_plus)) => Thresholds { tau_minus, tau_plus },
        None => {
            let p_min = if g.m() == 0 { 1.0 } else { g.min_probability() };
            match select_thresholds(&q.q, cfg.eps, p_min, DEFAULT_THRESHOLD_EXPONENT) {
                Ok(t) => t,
                Err(SparsifierError::DegenerateInput { fallback }) => fallback,
                Err(e) => return Err(e.into()),
            }
        }
    };
    let classes = classify(&q, &thresholds);
    let (min, max) = q.q.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let meta = SparsifyMeta {
        n: g.n(),
        m: g.m(),
        rounds,
        eps: cfg.eps,
        seed: cfg.seed,
        h_edges: h.edge_count(),
        max_degree: h.max_degree(&g),
        tau_minus: thresholds.tau_minus,
        tau_plus: thresholds.tau_plus,
        crucial: classes.crucial.count_ones(..),
        noncrucial: classes.noncrucial.count_ones(..),
        h: h.h.ones().collect(),
        q_summary: QSummary {
            source: q.source,
            total: q.total(),
            min: if q.q.is_empty() { 0.0 } else { min },
            max,
            mean: if q.q.is_empty() { 0.0 } else { q.total() / q.q.len() as f64 },
        },
        q: q.q.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n";
    write_output(cfg.out.as_deref(), g.subset_to_text(&h.h).as_bytes())?;
    match &cfg.out {
        Some(p) => {
            let mut meta_path = p.clone().into_os_string();
            meta_path.push(".json");
            std::fs::write(meta_path, json)?;
        }
        None => eprint!("{json}"),
    }
    Ok(())
}

fn load_subgraph(g: &Graph, path: &Path) -> Result<fixedbitset::FixedBitSet, CliError> {
    let h = Graph::load(path)?;
    let mut set = fixedbitset::FixedBitSet::with_capacity(g.m());
    for ed in h.edges() {
        let e = g
            .edge_between(ed.u, ed.v)
            .ok_or_else(|| CliError::Usage(format!("edge ({}, {}) of {} is not in the input graph", ed.u, ed.v, path.display())))?;
        set.insert(e);
    }
    Ok(set)
}

fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let g = Graph::load(&cfg.input)?;
    if cfg.exact && g.m() > DEFAULT_ENUMERATION_CAP {
        return Err(CliError::Guard(format!("--exact needs at most {DEFAULT_ENUMERATION_CAP} edges, graph has {}", g.m())));
    }
    let (labels, hs): (Vec<String>, Vec<_>) = match &cfg.h_file {
        Some(p) => (vec![String::new()], vec![load_subgraph(&g, p)?]),
        None => {
            let rs = cfg.rounds.clone().unwrap_or_else(|| vec![1, 2, 4, 8]);
            let max = *rs.iter().max().expect("validated non-empty");
            let h = build_h(&g, &SparsifierParams::new(max, cfg.eps, cfg.seed))?;
            (rs.iter().map(|r| r.to_string()).collect(), rs.iter().map(|&r| h.prefix(r)).collect())
        }
    };
    let ctx = SeedContext::new(cfg.seed).child("evaluate", 0);
    let est = estimate_ratios(&g, &hs, cfg.samples.unwrap_or(10_000), &ctx, cfg.exact);
    let p = if g.m() == 0 { 1.0 } else { g.min_probability() };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n", "m", "p", "R", "ratio", "stderr", "mode"]).map_err(|e| CliError::Failed(e.to_string()))?;
    for (label, r) in labels.iter().zip(est) {
        let mode = match r.mode {
            RatioMode::Exact => "exact",
            RatioMode::Sampled => "sampled",
        };
        w.write_record([
            g.n().to_string(),
            g.m().to_string(),
            p.to_string(),
            label.clone(),
            format!("{:.9}", r.ratio),
            format!("{:.9}", r.stderr),
            mode.to_string(),
        ])
        .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    write_output(cfg.out.as_deref(), &bytes)
}

fn b_params(cfg: &ExperimentConfig) -> BParams {
    BParams {
        alpha: cfg.alpha,
        walk_len: cfg.walk_len,
        depth: cfg.depth,
        ..BParams::desk(cfg.eps)
    }
}

fn cmd_lca_stats(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let g = Graph::load(&cfg.input)?;
    let ctx = SeedContext::new(cfg.seed).child("lca-stats", 0);
    let ledger: QueryLedger = match cfg.lca {
        LcaKind::SelfOnly => sweep_ledger(&SelfOnly, &g, &ctx, Granularity::Vertex, cfg.sweeps)?,
        LcaKind::Tmis => {
            let lca = TmisLca {
                budget: TmisBudget::for_graph(&g, cfg.eps),
            };
            sweep_ledger(&lca, &g, &ctx, Granularity::Vertex, cfg.sweeps)?
        }
        LcaKind::BMatching => {
            let params = b_params(cfg);
            let index = HyperwalkIndex::build(&g, params.walk_len, params.alpha, params.walk_guard)?;
            let samples = cfg.samples.unwrap_or(200);
            let target = target_marginals(&g, None, samples, &ctx.child("target", 0));
            let table = build_unsaturation_table(&g, &index, &params, target, samples, &ctx.child("unsat", 0))?;
            let env = BEnv::new(&g, &index, &params, &table, InputRealization::Tapes)?;
            sweep_ledger(&BMatchingLca { env }, &g, &ctx, Granularity::Edge, cfg.sweeps)?
        }
    };
    let mut buf = Vec::new();
    ledger.write_csv(&mut buf).map_err(|e| CliError::Failed(e.to_string()))?;
    write_output(cfg.out.as_deref(), &buf)
}

fn cmd_verify(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let g = Graph::load(&cfg.input)?;
    let base = PipelineConfig::desk(cfg.eps, cfg.seed);
    let pcfg = PipelineConfig {
        rounds: cfg.rounds.as_ref().map(|_| single_rounds(cfg, 0)).transpose()?,
        thresholds: match cfg.thresholds {
            Some((lo, hi)) => ThresholdMode::Fixed(Thresholds {
                tau_minus: lo,
                tau_plus: hi,
            }),
            None => base.thresholds.clone(),
        },
        q_samples: cfg.samples.unwrap_or(base.q_samples),
        b: BParams {
            alpha: cfg.alpha,
            walk_len: cfg.walk_len,
            depth: cfg.depth,
            ..base.b.clone()
        },
        trials: cfg.trials.unwrap_or(base.trials),
        delta_exponent: cfg.delta_exponent.unwrap_or(base.delta_exponent),
        ..base
    };
    let (report, _, _) = verify_instance(&g, &pcfg)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_output(cfg.out.as_deref(), json.as_bytes())
}

type Handler = fn(&ExperimentConfig) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (flags, cmd): (Flags, Handler) = match cli.command {
        Command::Sparsify(f) => (f, cmd_sparsify),
        Command::Evaluate(f) => (f, cmd_evaluate),
        Command::LcaStats(f) => (f, cmd_lca_stats),
        Command::Verify(f) => (f, cmd_verify),
    };
    let cfg = ExperimentConfig::resolve(flags)?;
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Failed(e.to_string()))?;
    }
    cmd(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
