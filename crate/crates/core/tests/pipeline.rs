use stochmatch::analysis::{estimate_ratios, verify_instance, ClaimFlag, PipelineConfig, ThresholdMode};
use stochmatch::graph::generators::*;
use stochmatch::sparsifier::{build_h, classify, exact_q, SparsifierParams, Thresholds};
use stochmatch::SeedContext;

#[test]
fn crucial_edges_rarely_missing_from_h() {
    let eps: f64 = 0.1;
    let g = gnp(14, 0.25, 0.6, &SeedContext::new(1));
    let q = sampled_q(&g);
    let t = Thresholds {
        tau_minus: 0.05,
        tau_plus: 0.3,
    };
    let crucial = classify(&q, &t).crucial;
    assert!(crucial.count_ones(..) > 0);
    let rounds = ((1.0 / eps).ln() / t.tau_plus).ceil() as usize;
    let (mut missing, mut total) = (0usize, 0usize);
    for s in 0..300 {
        let h = build_h(&g, &SparsifierParams::new(rounds, eps, s)).unwrap();
        for e in crucial.ones() {
            total += 1;
            missing += !h.h.contains(e) as usize;
        }
    }
    let frac = missing as f64 / total as f64;
    let sigma = (frac * (1.0 - frac) / total as f64).sqrt();
    assert!(frac <= eps + 3.0 * sigma, "{frac}");
}

fn sampled_q(g: &stochmatch::Graph) -> stochmatch::sparsifier::QProfile {
    stochmatch::sparsifier::estimate_q(g, 20_000, &SeedContext::new(2)).unwrap()
}

#[test]
fn ratio_grows_with_nested_prefixes() {
    let g = gnp(20, 0.25, 0.5, &SeedContext::new(3));
    let h = build_h(&g, &SparsifierParams::new(8, 0.1, 4)).unwrap();
    let hs: Vec<_> = [1, 2, 4, 8].iter().map(|&r| h.prefix(r)).collect();
    let est = estimate_ratios(&g, &hs, 3_000, &SeedContext::new(5), false);
    for w in est.windows(2) {
        assert!(w[1].ratio >= w[0].ratio);
    }
    assert!(est[3].ratio <= 1.0);
}

#[test]
fn k4_report_is_generated_and_serializable() {
    let g = complete(4, 0.7);
    let cfg = PipelineConfig {
        trials: 30,
        thresholds: ThresholdMode::Fixed(Thresholds {
            tau_minus: 0.15,
            tau_plus: 0.3,
        }),
        ..PipelineConfig::desk(0.3, 6)
    };
    let (report, setup, runs) = verify_instance(&g, &cfg).unwrap();
    assert_eq!(runs.len(), 30);
    assert_eq!(setup.q, exact_q(&g));
    assert!(report.exact_pass(), "{report:#?}");
    let json = serde_json::to_value(&report).unwrap();
    let claims = json["claims"].as_array().unwrap();
    assert_eq!(claims.len(), report.claims.len());
    for c in claims {
        for key in ["name", "bound", "empirical", "stderr", "flag"] {
            assert!(c.get(key).is_some(), "missing {key}");
        }
    }
}

#[test]
fn pipeline_is_deterministic() {
    let g = cycle(7, 0.5);
    let cfg = PipelineConfig {
        trials: 10,
        rounds: Some(6),
        thresholds: ThresholdMode::Fixed(Thresholds {
            tau_minus: 0.2,
            tau_plus: 0.35,
        }),
        ..PipelineConfig::desk(0.3, 7)
    };
    let (a, _, ra) = verify_instance(&g, &cfg).unwrap();
    let (b, _, rb) = verify_instance(&g, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.x, y.x);
        assert_eq!(x.mc, y.mc);
    }
}

#[test]
fn automatic_thresholds_on_desk_instance() {
    let g = perfect_matching(3, 0.6);
    let cfg = PipelineConfig {
        trials: 5,
        ..PipelineConfig::desk(0.4, 8)
    };
    let (report, setup, _) = verify_instance(&g, &cfg).unwrap();
    // q_e = 0.6 lies above τ₀ = (0.4·0.6)², so every edge is crucial
    assert_eq!(setup.classes.crucial.count_ones(..), 3);
    assert!(report.exact_pass());
    assert_eq!(report.claim("f_size").unwrap().flag, ClaimFlag::Vacuous);
}
