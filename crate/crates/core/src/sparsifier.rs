//! Construction of the sparse subgraph `H` and the q-value machinery that
//! splits edges into crucial and non-crucial classes.

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graph::{enumerate_realizations_capped, sample_realization, Graph, DEFAULT_ENUMERATION_CAP};
use crate::matching::{maximum_matching, Matching};
use crate::seed::SeedContext;

pub const DEFAULT_Q_SAMPLES: usize = 10_000;
pub const DEFAULT_THRESHOLD_EXPONENT: u32 = 3;
/// Largest edge count for which `estimate_q` switches to exact enumeration.
pub const AUTO_EXACT_EDGES: usize = 16;

#[derive(Debug, Error, PartialEq)]
pub enum SparsifierError {
    #[error("number of rounds must be at least 1")]
    ZeroRounds,
    #[error("eps must lie in (0, 1), got {0}")]
    InvalidEps(f64),
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("every q-value is zero; fallback thresholds {fallback:?}")]
    DegenerateInput { fallback: Thresholds },
    #[error("tau_minus must lie in (0, 1), got {0}")]
    InvalidTau(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SparsifierParams {
    pub rounds: usize,
    pub eps: f64,
    pub seed: u64,
}

impl SparsifierParams {
    pub fn new(rounds: usize, eps: f64, seed: u64) -> Self {
        SparsifierParams { rounds, eps, seed }
    }

    pub fn validate(&self) -> Result<(), SparsifierError> {
        if self.rounds == 0 {
            return Err(SparsifierError::ZeroRounds);
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(SparsifierError::InvalidEps(self.eps));
        }
        Ok(())
    }

    /// Namespace holding the realizations `𝒢_1, 𝒢_2, …`.
    pub fn context(&self) -> SeedContext {
        SeedContext::new(self.seed).child("sparsifier", 0)
    }
}

/// `H` together with the matchings whose union it is.
#[derive(Debug, Clone)]
pub struct SparseSubgraph {
    pub h: FixedBitSet,
    pub matchings: Vec<Matching>,
}

impl SparseSubgraph {
    pub fn rounds(&self) -> usize {
        self.matchings.len()
    }

    pub fn edge_count(&self) -> usize {
        self.h.count_ones(..)
    }

    pub fn degree(&self, g: &Graph, v: usize) -> usize {
        g.incident(v).iter().filter(|&&e| self.h.contains(e)).count()
    }

    pub fn max_degree(&self, g: &Graph) -> usize {
        (0..g.n()).map(|v| self.degree(g, v)).max().unwrap_or(0)
    }

    /// `H` built from only the first `rounds` matchings.
    pub fn prefix(&self, rounds: usize) -> FixedBitSet {
        let mut h = FixedBitSet::with_capacity(self.h.len());
        for m in self.matchings.iter().take(rounds) {
            for &e in m.edges() {
                h.insert(e);
            }
        }
        h
    }
}

/// `H = MM(𝒢_1) ∪ … ∪ MM(𝒢_R)`.
///
/// Realization `i` is drawn from trial `i` of `params.context()`, so running
/// with a smaller `R` yields a prefix of the same sequence.
pub fn build_h(g: &Graph, params: &SparsifierParams) -> Result<SparseSubgraph, SparsifierError> {
    params.validate()?;
    let ctx = params.context();
    let matchings: Vec<Matching> = (0..params.rounds)
        .into_par_iter()
        .map(|i| {
            let r = sample_realization(g, &ctx, i as u64);
            maximum_matching(g, r.present())
        })
        .collect();
    let mut h = FixedBitSet::with_capacity(g.m());
    for m in &matchings {
        for &e in m.edges() {
            h.insert(e);
        }
    }
    Ok(SparseSubgraph { h, matchings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QSource {
    Exact,
    Sampled(usize),
}

/// Per-edge `q_e = Pr[e ∈ MM(G_p)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QProfile {
    pub q: Vec<f64>,
    pub source: QSource,
}

impl QProfile {
    pub fn total(&self) -> f64 {
        self.q.iter().sum()
    }

    /// `q_v = Σ_{e∋v} q_e`.
    pub fn vertex_mass(&self, g: &Graph, v: usize) -> f64 {
        g.incident(v).iter().map(|&e| self.q[e]).sum()
    }

    /// Standard error of a single `q_e` (zero in exact mode).
    pub fn stderr(&self, e: usize) -> f64 {
        match self.source {
            QSource::Exact => 0.0,
            QSource::Sampled(n) => (self.q[e] * (1.0 - self.q[e]) / n as f64).sqrt(),
        }
    }

    /// Mass of `q` restricted to `set`.
    pub fn mass_of(&self, set: &FixedBitSet) -> f64 {
        set.ones().map(|e| self.q[e]).sum()
    }

    /// `q^N_v`: mass of non-crucial edges at `v`.
    pub fn vertex_mass_in(&self, g: &Graph, v: usize, set: &FixedBitSet) -> f64 {
        g.incident(v).iter().filter(|&&e| set.contains(e)).map(|&e| self.q[e]).sum()
    }
}

/// Exact q-values by enumeration when `m ≤ AUTO_EXACT_EDGES`, otherwise
/// `samples` Monte Carlo trials from the `("q", ·)` namespace.
pub fn estimate_q(g: &Graph, samples: usize, ctx: &SeedContext) -> Result<QProfile, SparsifierError> {
    if g.m() <= AUTO_EXACT_EDGES {
        Ok(exact_q(g))
    } else {
        sample_q(g, samples, ctx)
    }
}

pub fn exact_q(g: &Graph) -> QProfile {
    let mut q = vec![0.0; g.m()];
    for (r, pr) in enumerate_realizations_capped(g, DEFAULT_ENUMERATION_CAP).expect("caller checked cap") {
        if pr == 0.0 {
            continue;
        }
        for &e in maximum_matching(g, r.present()).edges() {
            q[e] += pr;
        }
    }
    QProfile {
        q,
        source: QSource::Exact,
    }
}

pub fn sample_q(g: &Graph, samples: usize, ctx: &SeedContext) -> Result<QProfile, SparsifierError> {
    if samples == 0 {
        return Err(SparsifierError::ZeroSamples);
    }
    let ns = ctx.child("q", 0);
    let m = g.m();
    let counts = (0..samples)
        .into_par_iter()
        .fold(
            || vec![0u64; m],
            |mut acc, t| {
                let r = sample_realization(g, &ns, t as u64);
                for &e in maximum_matching(g, r.present()).edges() {
                    acc[e] += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; m],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    Ok(QProfile {
        q: counts.into_iter().map(|c| c as f64 / samples as f64).collect(),
        source: QSource::Sampled(samples),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub tau_minus: f64,
    pub tau_plus: f64,
}

/// The threshold ladder `τ_0 = (eps·p_min)^2`, `τ_i = τ_{i-1}^exponent` for
/// `i = 0..=⌈1/eps⌉`.
pub fn threshold_ladder(eps: f64, p_min: f64, exponent: u32) -> Vec<f64> {
    let k = (1.0 / eps - 1e-9).ceil().max(1.0) as usize;
    let mut taus = Vec::with_capacity(k + 1);
    taus.push((eps * p_min).powi(2));
    for i in 1..=k {
        taus.push(taus[i - 1].powi(exponent as i32));
    }
    taus
}

/// Bucket masses `q_i = Σ_{q_e ∈ (τ_i, τ_{i-1}]} q_e` for `i = 1..=⌈1/eps⌉`.
pub fn bucket_masses(q: &[f64], taus: &[f64]) -> Vec<f64> {
    (1..taus.len())
        .map(|i| q.iter().filter(|&&x| x > taus[i] && x <= taus[i - 1]).sum())
        .collect()
}

/// Pick the lightest bucket of the ladder and return `(τ_i, τ_{i-1})`.
/// Ties go to the smallest index.
pub fn select_thresholds(q: &[f64], eps: f64, p_min: f64, exponent: u32) -> Result<Thresholds, SparsifierError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(SparsifierError::InvalidEps(eps));
    }
    let taus = threshold_ladder(eps, p_min, exponent.max(2));
    if q.iter().all(|&x| x == 0.0) {
        return Err(SparsifierError::DegenerateInput {
            fallback: Thresholds {
                tau_minus: taus[1],
                tau_plus: taus[0],
            },
        });
    }
    let masses = bucket_masses(q, &taus);
    let mut best = 0;
    for (i, &mass) in masses.iter().enumerate() {
        if mass < masses[best] {
            best = i;
        }
    }
    Ok(Thresholds {
        tau_minus: taus[best + 1],
        tau_plus: taus[best],
    })
}

/// `R = ⌈1/(2τ⁻)⌉`.
pub fn derive_r(tau_minus: f64) -> Result<usize, SparsifierError> {
    if !(tau_minus > 0.0 && tau_minus < 1.0) {
        return Err(SparsifierError::InvalidTau(tau_minus));
    }
    Ok((1.0 / (2.0 * tau_minus) - 1e-9).ceil().max(1.0) as usize)
}

/// Crucial (`q_e ≥ τ⁺`) and non-crucial (`q_e ≤ τ⁻`) edge sets.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeClasses {
    pub crucial: FixedBitSet,
    pub noncrucial: FixedBitSet,
}

pub fn classify(q: &QProfile, t: &Thresholds) -> EdgeClasses {
    let m = q.q.len();
    let mut crucial = FixedBitSet::with_capacity(m);
    let mut noncrucial = FixedBitSet::with_capacity(m);
    for (e, &x) in q.q.iter().enumerate() {
        if x >= t.tau_plus {
            crucial.insert(e);
        } else if x <= t.tau_minus {
            noncrucial.insert(e);
        }
    }
    EdgeClasses { crucial, noncrucial }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generators::*;
    use crate::matching::matching_size_expectation_exact;

    #[test]
    fn single_edge_always_in_h() {
        let g = path(2, 1.0);
        let s = build_h(&g, &SparsifierParams::new(3, 0.1, 0)).unwrap();
        assert_eq!(s.h.ones().collect::<Vec<_>>(), vec![0]);
        assert_eq!(s.rounds(), 3);
    }

    #[test]
    fn perfect_matching_fully_kept() {
        let g = perfect_matching(6, 1.0);
        for r in [1, 2, 5] {
            let s = build_h(&g, &SparsifierParams::new(r, 0.1, 9)).unwrap();
            assert_eq!(s.edge_count(), 6);
        }
    }

    #[test]
    fn star_degree_bound() {
        let g = star(5, 0.5);
        for seed in 0..50 {
            let s = build_h(&g, &SparsifierParams::new(4, 0.1, seed)).unwrap();
            assert!(s.max_degree(&g) <= 4);
        }
    }

    #[test]
    fn prefixes_are_nested() {
        let g = gnp(12, 0.4, 0.5, &SeedContext::new(1));
        let s = build_h(&g, &SparsifierParams::new(8, 0.1, 4)).unwrap();
        let s4 = build_h(&g, &SparsifierParams::new(4, 0.1, 4)).unwrap();
        assert_eq!(s.prefix(4), s4.h);
        assert!(s.prefix(2).is_subset(&s.prefix(4)));
        assert_eq!(s.prefix(8), s.h);
    }

    #[test]
    fn rejects_zero_rounds() {
        let g = path(2, 1.0);
        assert_eq!(
            build_h(&g, &SparsifierParams::new(0, 0.1, 0)).unwrap_err(),
            SparsifierError::ZeroRounds
        );
    }

    #[test]
    fn exact_q_examples() {
        let q = estimate_q(&path(2, 0.5), 10, &SeedContext::new(0)).unwrap();
        assert_eq!(q.source, QSource::Exact);
        assert!((q.q[0] - 0.5).abs() < 1e-12);

        let q = exact_q(&path(3, 1.0));
        assert_eq!(q.q, vec![1.0, 0.0]);

        let tri = complete(3, 0.5);
        let q = exact_q(&tri);
        assert!((q.total() - 0.875).abs() < 1e-12);
    }

    #[test]
    fn exact_q_sums_to_opt_and_vertex_mass_bounded() {
        for g in [petersen(0.3), complete(5, 0.6), complete_bipartite(3, 3, 0.4), cycle(7, 0.5)] {
            let q = exact_q(&g);
            let opt = matching_size_expectation_exact(&g).unwrap();
            assert!((q.total() - opt).abs() < 1e-9);
            for v in 0..g.n() {
                assert!(q.vertex_mass(&g, v) <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn sampled_q_close_to_exact() {
        let g = complete(5, 0.5);
        let exact = exact_q(&g);
        let sampled = sample_q(&g, 20_000, &SeedContext::new(3)).unwrap();
        for e in 0..g.m() {
            let se = (exact.q[e] * (1.0 - exact.q[e]) / 20_000.0).sqrt();
            assert!((exact.q[e] - sampled.q[e]).abs() <= 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn derive_r_examples() {
        assert_eq!(derive_r(0.25).unwrap(), 2);
        assert_eq!(derive_r(0.1).unwrap(), 5);
        assert_eq!(derive_r(1.0 / 3.0).unwrap(), 2);
        assert!(derive_r(0.0).is_err());
    }

    #[test]
    fn thresholds_all_large() {
        // every q above τ₀: all buckets empty, first bucket chosen
        let t = select_thresholds(&[0.5, 0.3, 0.9], 0.5, 0.5, 3).unwrap();
        assert!((t.tau_plus - 0.0625).abs() < 1e-15);
        assert!((t.tau_minus - 0.0625f64.powi(3)).abs() < 1e-18);
        let c = classify(
            &QProfile {
                q: vec![0.5, 0.3, 0.9],
                source: QSource::Exact,
            },
            &t,
        );
        assert_eq!(c.crucial.count_ones(..), 3);
    }

    #[test]
    fn thresholds_skip_heavy_bucket() {
        // eps = 0.5 → two buckets: (τ1, τ0] and (τ2, τ1]
        let taus = threshold_ladder(0.5, 0.5, 3);
        assert_eq!(taus.len(), 3);
        let heavy = taus[0] * 0.9; // bucket 1
        let light = taus[1] * 0.5; // bucket 2
        let q = [0.5, heavy, heavy, light];
        let masses = bucket_masses(&q, &taus);
        assert!((masses[0] - 2.0 * heavy).abs() < 1e-15);
        assert!((masses[1] - light).abs() < 1e-20);
        let t = select_thresholds(&q, 0.5, 0.5, 3).unwrap();
        assert_eq!(t.tau_plus, taus[1]);
        assert_eq!(t.tau_minus, taus[2]);
    }

    #[test]
    fn thresholds_degenerate() {
        match select_thresholds(&[0.0, 0.0], 0.5, 0.5, 3) {
            Err(SparsifierError::DegenerateInput { fallback }) => {
                assert!((fallback.tau_plus - 0.0625).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest::proptest! {
        #[test]
        fn threshold_guarantee(q in proptest::collection::vec(0.0f64..1.0, 1..30),
                               eps in 0.05f64..0.9, p in 0.05f64..1.0) {
            if let Ok(t) = select_thresholds(&q, eps, p, 3) {
                let prof = QProfile { q: q.clone(), source: QSource::Exact };
                let c = classify(&prof, &t);
                let taus = threshold_ladder(eps, p, 3);
                let min_bucket = bucket_masses(&q, &taus).into_iter().fold(f64::INFINITY, f64::min);
                let kept = prof.mass_of(&c.crucial) + prof.mass_of(&c.noncrucial);
                proptest::prop_assert!(kept >= prof.total() - min_bucket - 1e-12);
                proptest::prop_assert!(c.crucial.is_disjoint(&c.noncrucial));
            }
        }

        #[test]
        fn h_degree_never_exceeds_rounds(seed in 0u64..1000, r in 1usize..10) {
            let g = gnp(15, 0.4, 0.5, &SeedContext::new(seed));
            let s = build_h(&g, &SparsifierParams::new(r, 0.1, seed)).unwrap();
            proptest::prop_assert!(s.max_degree(&g) <= r);
        }
    }
}
