mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqdep::eval::{
    aggregate_macro, compute_metrics, evaluate_usecase, gen_corpus, match_edges, perturb,
    CategoryScores, CorpusParams, GoldAnnotation, Metrics, PerturbParams, Scope, Score,
};
use seqdep::{infer_all, Analysis, Category, DependencyEdge};

fn published_row(row: &common::Row) -> CategoryScores<f64> {
    let score = |cell: Option<[f64; 3]>| match cell {
        Some([p, r, f]) => Score {
            metrics: Metrics::new(p, r, f),
            tp: 0,
            fp: 0,
            fn_: 0,
            applicable: true,
        },
        None => Score {
            metrics: Metrics::new(0.0, 0.0, 0.0),
            tp: 0,
            fp: 0,
            fn_: 0,
            applicable: false,
        },
    };
    CategoryScores {
        overall: score(row[0]),
        api: score(row[1]),
        condition: score(row[2]),
        action: score(row[3]),
    }
}

#[test]
fn published_average_row_reproduces() {
    let rows: Vec<_> = common::PUBLISHED_ROWS.iter().map(|(_, r)| published_row(r)).collect();
    let m = aggregate_macro(&rows);
    for (i, scope) in Scope::ALL.into_iter().enumerate() {
        let got = m.get(scope).unwrap().rounded(2);
        let want = common::PUBLISHED_AVERAGE[i];
        for (g, w) in [got.precision, got.recall, got.f1].into_iter().zip(want) {
            assert!((g - w).abs() <= 0.01 + 1e-9, "{scope:?}: {g} vs {w}");
        }
    }
}

/// Exact `num/den` as the nearest f64, or 0 for an empty denominator.
fn exact(num: u64, den: u64) -> f64 {
    if den == 0 {
        return 0.0;
    }
    let (mut a, mut b) = (num, den);
    while b != 0 {
        (a, b) = (b, a % b);
    }
    let g = a.max(1);
    (num / g) as f64 / (den / g) as f64
}

#[test]
fn perturbed_predictions_match_hand_counts() {
    let params = CorpusParams {
        n_usecases: 30,
        perturb: PerturbParams { p_drop: 0.2, p_retarget: 0.1, p_add: 0.2 },
        ..CorpusParams::default()
    };
    let cases = gen_corpus(2024, &params).unwrap();
    let mut checked = 0;
    for c in &cases {
        let gold = &c.gold.edges;
        let pred = &c.predicted;
        // counted by linear scans, no set operations
        let tp = pred.iter().filter(|p| gold.contains(p)).count() as u64;
        let fp = pred.len() as u64 - tp;
        let fn_ = gold.iter().filter(|g| !pred.contains(g)).count() as u64;
        let s = evaluate_usecase::<f64>(pred, gold).overall;
        assert_eq!((s.tp as u64, s.fp as u64, s.fn_ as u64), (tp, fp, fn_), "{}", c.name());
        assert_eq!(s.metrics.precision.to_bits(), exact(tp, tp + fp).to_bits());
        assert_eq!(s.metrics.recall.to_bits(), exact(tp, tp + fn_).to_bits());
        assert_eq!(s.metrics.f1.to_bits(), exact(2 * tp, 2 * tp + fp + fn_).to_bits());
        if !gold.is_empty() {
            checked += 1;
        }
    }
    assert!(checked >= 20, "{checked}");
}

#[test]
fn rule_engine_scores_perfectly_against_own_gold() {
    for c in gen_corpus(42, &CorpusParams::default()).unwrap() {
        let a = Analysis::new(&c.document, &c.document.usecases[0]);
        let s = evaluate_usecase::<f64>(&infer_all(&a).edges, &c.gold.edges);
        assert_eq!(s.overall.metrics, Metrics::new(1.0, 1.0, 1.0), "{}", c.name());
    }
}

fn four_edges() -> Vec<DependencyEdge> {
    vec![
        DependencyEdge::new("@input", "a", "m1", Category::Api),
        DependencyEdge::new("@input", "b", "m1", Category::Api),
        DependencyEdge::new("m1", "c", "f1", Category::Condition),
        DependencyEdge::new("m1", "d", "r", Category::Api),
    ]
}

#[test]
fn drop_rate_expectation() {
    // brute force over all 2^4 keep/drop outcomes
    let p = 0.25_f64;
    let expected: f64 = (0u32..16)
        .map(|mask| {
            let dropped = mask.count_ones() as i32;
            p.powi(dropped) * (1.0 - p).powi(4 - dropped) * (4 - dropped) as f64 / 4.0
        })
        .sum();
    assert!((expected - 0.75).abs() < 1e-12);

    let doc = common::demo();
    let uc = &doc.usecases[0];
    let gold = four_edges();
    let params = PerturbParams { p_drop: p, p_retarget: 0.0, p_add: 0.0 };
    let runs = 4000;
    let mut total = 0.0;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred = perturb(&mut rng, uc, &gold, &params);
        let s = evaluate_usecase::<f64>(&pred, &gold).overall;
        assert!(s.fp == 0);
        total += s.metrics.recall;
    }
    let mean = total / runs as f64;
    // standard error is about 0.0034 here
    assert!((mean - expected).abs() < 0.015, "{mean}");
}

#[test]
fn gold_annotation_wire_format() {
    let text = r#"{"usecase":"Demo","edges":[{"source":"@input","data":"user_id","target":"m1","category":"api"}]}"#;
    let g = GoldAnnotation::from_json(text).unwrap();
    assert_eq!(g.edges, [DependencyEdge::new("@input", "user_id", "m1", Category::Api)]);
    assert!(GoldAnnotation::from_json(r#"{"usecase":"x","edges":[{"source":"a","data":"d","target":"b","category":"misc"}]}"#).is_err());
}

fn edge_strategy() -> impl Strategy<Value = DependencyEdge> {
    (0..4usize, 0..4usize, 0..4usize, 0..3usize).prop_map(|(s, d, t, c)| {
        DependencyEdge::new(format!("n{s}"), format!("d{d}"), format!("n{}", t + 4), Category::ALL[c])
    })
}

proptest! {
    #[test]
    fn metric_bounds(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let m: Metrics<f64> = compute_metrics(tp, fp, fn_);
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if m.precision > 0.0 && m.recall > 0.0 {
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
            let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - harmonic).abs() < 1e-12);
        }
        let m32: Metrics<f32> = compute_metrics(tp, fp, fn_);
        prop_assert!((m32.f1 as f64 - m.f1).abs() < 1e-6);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(
        a in prop::collection::vec(edge_strategy(), 0..12),
        b in prop::collection::vec(edge_strategy(), 0..12),
    ) {
        let ab = evaluate_usecase::<f64>(&a, &b);
        let ba = evaluate_usecase::<f64>(&b, &a);
        for scope in Scope::ALL {
            let (x, y) = (ab.get(scope), ba.get(scope));
            prop_assert_eq!(x.metrics.precision, y.metrics.recall);
            prop_assert_eq!(x.metrics.recall, y.metrics.precision);
            prop_assert_eq!(x.metrics.f1, y.metrics.f1);
        }
        let m = match_edges(&a, &b);
        prop_assert_eq!(m.tp.len() + m.fn_.len(), b.iter().collect::<std::collections::BTreeSet<_>>().len());
    }
}
