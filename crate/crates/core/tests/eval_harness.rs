mod common;

use attrib_core::centroid::{ClusterOptions, Metric};
use attrib_core::distinguish::rank_prompts;
use attrib_core::eval::report::{run_eval, EvalMode};
use attrib_core::eval::{
    confusion, distinguishability_correlation, prompt_controlled_attack, prompt_holdouts,
    topk_accuracy, EvalConfig,
};
use attrib_core::one_vs_rest::{detection_row, fixed_target_sweep, ovr_sweep, OvrConfig};
use attrib_core::outlier::{outlier_sweep, OutlierConfig};
use attrib_core::synth::{design_means, generate, generate_mixed, SynthSpec};
use attrib_core::{EmbeddingCorpus, Error};

use common::{corpus_of, record};

fn spec(
    n_models: usize,
    n_prompts: usize,
    k_per_cell: usize,
    dim: usize,
    separation: f64,
) -> SynthSpec {
    SynthSpec {
        n_models,
        n_prompts,
        k_per_cell,
        dim,
        separation,
        sigma: 1.0,
        seed: 21,
        normalize: true,
    }
}

fn separated() -> EmbeddingCorpus {
    generate(&spec(5, 8, 11, 16, 50.0)).unwrap()
}

#[test]
fn separated_corpus_is_perfectly_attributed() {
    let c = separated();
    let cfg = EvalConfig {
        repeats: 2,
        ..EvalConfig::default()
    };
    let curve = topk_accuracy(&c, &cfg).unwrap();
    assert_eq!(curve.depth, 5);
    assert_eq!(curve.cells, 40);
    for k in &curve.per_k {
        assert!(k.mean.iter().all(|&m| m == 1.0), "k={} {:?}", k.k, k.mean);
        assert!(k.std.iter().all(|&s| s == 0.0));
    }
    let m = confusion(&c, &cfg).unwrap();
    for i in 0..5 {
        assert_eq!(m.counts[i][i], 16);
        assert_eq!(m.row_sum(i), 16);
    }
}

#[test]
fn zero_separation_is_chance() {
    let c = generate(&spec(19, 40, 6, 32, 0.0)).unwrap();
    let cfg = EvalConfig {
        k_values: vec![5],
        repeats: 1,
        ..EvalConfig::default()
    };
    let curve = topk_accuracy(&c, &cfg).unwrap();
    let n = curve.cells as f64;
    let p = 1.0 / 19.0;
    let se = (p * (1.0 - p) / n).sqrt();
    let top1 = curve.per_k[0].mean[0];
    assert!((top1 - p).abs() <= 4.0 * se, "top1 {top1}, se {se}");
    let top5 = curve.per_k[0].mean[4];
    assert!(
        (top5 - 5.0 * p).abs() <= 4.0 * (5.0 * p * (1.0 - 5.0 * p) / n).sqrt(),
        "top5 {top5}"
    );
}

#[test]
fn deeper_ranks_never_lose_accuracy() {
    let c = generate(&spec(6, 10, 11, 16, 1.5)).unwrap();
    let cfg = EvalConfig {
        repeats: 3,
        k_rank_max: 10,
        ..EvalConfig::default()
    };
    let curve = topk_accuracy(&c, &cfg).unwrap();
    assert_eq!(curve.depth, 6);
    for k in &curve.per_k {
        for r in &k.per_repeat {
            assert!(r.windows(2).all(|w| w[1] >= w[0]), "{r:?}");
            assert_eq!(*r.last().unwrap(), 1.0);
        }
    }
}

#[test]
fn too_few_records_is_reported() {
    let c = generate(&spec(3, 2, 4, 8, 1.0)).unwrap();
    let err = topk_accuracy(&c, &EvalConfig::default()).unwrap_err();
    assert!(
        matches!(
            err,
            Error::InsufficientRecords {
                needed: 11,
                available: 4,
                ..
            }
        ),
        "{err}"
    );
}

/// m00's generations split between two labels drawn from one distribution.
fn split_label_corpus() -> EmbeddingCorpus {
    let base = generate(&spec(3, 60, 12, 16, 50.0)).unwrap();
    let records = base
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            if r.model_id == "m00" {
                r.model_id = if r.seed % 2 == 0 {
                    "m00a".into()
                } else {
                    "m00b".into()
                };
            }
            r
        })
        .collect();
    corpus_of(records)
}

#[test]
fn confusion_splits_indistinguishable_labels() {
    let c = split_label_corpus();
    let cfg = EvalConfig {
        k_values: vec![5],
        repeats: 3,
        ..EvalConfig::default()
    };
    let m = confusion(&c, &cfg).unwrap();
    for (a, b) in [("m00a", "m00b"), ("m00b", "m00a")] {
        let own = m.rate(a, a).unwrap();
        let other = m.rate(a, b).unwrap();
        assert!((own + other - 1.0).abs() < 1e-12);
        assert!((0.35..=0.65).contains(&own), "{a}: {own}");
    }
    assert_eq!(m.rate("m01", "m01"), Some(1.0));
    assert_eq!(m.rate("m02", "m02"), Some(1.0));
}

#[test]
fn attack_is_deterministic_and_perfect_when_separated() {
    let c = separated();
    let prompts: Vec<String> = c.prompt_ids()[..3].to_vec();
    let a = prompt_controlled_attack(&c, &prompts, 20, 9, Metric::Euclidean).unwrap();
    let b = prompt_controlled_attack(&c, &prompts, 20, 9, Metric::Euclidean).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total, 60);
    assert_eq!(a.accuracy, 1.0);
    let one = prompt_controlled_attack(&c, &prompts[..1], 1, 0, Metric::Cosine).unwrap();
    assert_eq!((one.correct, one.total, one.accuracy), (1, 1, 1.0));
    assert!(prompt_controlled_attack(&c, &["nope".into()], 1, 0, Metric::Euclidean).is_err());
    assert!(prompt_controlled_attack(&c, &prompts, 0, 0, Metric::Euclidean).is_err());
}

#[test]
fn correlation_degenerates_on_constant_scores() {
    let c = separated();
    let cfg = EvalConfig {
        repeats: 1,
        ..EvalConfig::default()
    };
    let r = distinguishability_correlation(&c, &cfg).unwrap();
    assert!(r.degenerate);
    assert_eq!(r.spearman, None);
    assert!(r.rows.iter().all(|row| row.score == 1.0 && row.top1 == 1.0));

    let single = generate(&spec(3, 1, 11, 8, 1.0)).unwrap();
    let r = distinguishability_correlation(&single, &cfg).unwrap();
    assert!(r.degenerate);
    assert_eq!(r.spearman, None);
}

#[test]
fn overwhelming_separation_gives_perfect_detection() {
    let c = separated();
    let rows = ovr_sweep(&c, c.model_ids(), &OvrConfig::default()).unwrap();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert_eq!((row.accuracy, row.roc_auc), (1.0, 1.0), "{}", row.model);
        assert!(row.operating_points.iter().all(|op| op.tpr == 1.0));
        assert_eq!((row.positives, row.negatives), (8, 32));
    }
    let rows = outlier_sweep(&c, c.model_ids(), &OutlierConfig::default()).unwrap();
    for row in &rows {
        assert_eq!(row.roc_auc, 1.0, "{}", row.model);
    }
    let single = fixed_target_sweep(&c, "m02", &OvrConfig::default()).unwrap();
    assert_eq!(
        single,
        ovr_sweep(&c, &["m02".into()], &OvrConfig::default()).unwrap()[0]
    );
    assert!(fixed_target_sweep(&c, "zz", &OvrConfig::default()).is_err());
}

#[test]
fn identical_distributions_give_chance_auc() {
    let c = generate(&spec(2, 500, 4, 8, 0.0)).unwrap();
    let rows = ovr_sweep(&c, &["m00".into()], &OvrConfig::default()).unwrap();
    assert_eq!(rows[0].positives, 500);
    assert!(
        (0.4..=0.6).contains(&rows[0].roc_auc),
        "{}",
        rows[0].roc_auc
    );
    let rows = outlier_sweep(&c, &["m00".into()], &OutlierConfig::default()).unwrap();
    assert!(
        (0.4..=0.6).contains(&rows[0].roc_auc),
        "{}",
        rows[0].roc_auc
    );
}

#[test]
fn tiny_detection_row() {
    let row = detection_row("t", &[0.3, -0.1], &[-0.2, 0.1], &[0.02, 0.5]).unwrap();
    assert_eq!(row.accuracy, 0.5);
    assert_eq!(row.roc_auc, 0.75);
    assert_eq!(row.operating_points[0].tpr, 0.5);
    assert_eq!(row.operating_points[0].threshold, 0.3);
    assert_eq!(row.operating_points[1].tpr, 1.0);
    assert_eq!(row.operating_points[1].fpr, 0.5);
}

#[test]
fn holdouts_are_shared_between_sweeps() {
    let c = separated();
    let a = prompt_holdouts(&c, "p0003", 4, &ClusterOptions::default()).unwrap();
    let b = prompt_holdouts(
        &c,
        "p0003",
        4,
        &ClusterOptions {
            k: Some(5),
            ..ClusterOptions::default()
        },
    )
    .unwrap();
    assert_eq!(a.queries, b.queries);
    assert!(a.clusters.iter().all(|cl| cl.k() == 10));
    assert!(b.clusters.iter().all(|cl| cl.k() == 5));
    for (q, cl) in a.queries.iter().zip(&a.clusters) {
        assert!(cl.embeddings().iter().all(|e| e != &q.embedding));
    }
}

#[test]
fn rank_prompts_orders_by_score() {
    let mut records = Vec::new();
    // prompt "mixed": the two models interleave on a line
    for (i, x) in [0.0f32, 2.0, 4.0].iter().enumerate() {
        records.push(record("mixed", "a", i as i64, vec![*x]));
        records.push(record("mixed", "b", i as i64, vec![x + 1.0]));
    }
    // prompt "apart": same layout with b shifted far away
    for (i, x) in [0.0f32, 2.0, 4.0].iter().enumerate() {
        records.push(record("apart", "a", i as i64, vec![*x]));
        records.push(record("apart", "b", i as i64, vec![x + 101.0]));
    }
    let c = corpus_of(records);
    let reports = rank_prompts(&c, 0.5).unwrap();
    assert_eq!(reports[0].prompt_id, "apart");
    assert_eq!(reports[0].score, 1.0);
    assert_eq!(reports[1].prompt_id, "mixed");
    assert_eq!(reports[1].score, 0.0);
    assert_eq!(reports[1].per_model_frac["a"], 0.0);
}

#[test]
fn sample_means_converge_to_design() {
    let s = SynthSpec {
        normalize: false,
        ..spec(3, 2, 1000, 8, 4.0)
    };
    let c = generate(&s).unwrap();
    let bound = 5.0 / (1000f64).sqrt();
    for (p_idx, p) in c.prompt_ids().iter().enumerate() {
        let means = design_means(&s, p_idx).unwrap();
        for (m_idx, m) in c.model_ids().iter().enumerate() {
            let cell = c.cell(p, m);
            for (d, mu) in means[m_idx].iter().enumerate() {
                let avg = cell
                    .iter()
                    .map(|r| r.embedding.as_slice()[d] as f64)
                    .sum::<f64>()
                    / cell.len() as f64;
                assert!((avg - mu).abs() <= bound, "{p}/{m}/{d}: {avg} vs {mu}");
            }
        }
    }
}

#[test]
fn wide_separation_is_fully_distinguishable() {
    let c = generate(&spec(19, 6, 10, 32, 50.0)).unwrap();
    for r in rank_prompts(&c, 0.5).unwrap() {
        assert_eq!(r.score, 1.0, "{}", r.prompt_id);
    }
}

#[test]
fn mixed_bands_separate_by_score() {
    let c = generate_mixed(&[
        (spec(8, 10, 10, 16, 0.0), 10),
        (spec(8, 10, 10, 16, 50.0), 10),
    ])
    .unwrap();
    let reports = rank_prompts(&c, 0.5).unwrap();
    let score = |p: &str| reports.iter().find(|r| r.prompt_id == p).unwrap().score;
    let low: f64 = c.prompt_ids()[..10].iter().map(|p| score(p)).sum::<f64>() / 10.0;
    assert!(c.prompt_ids()[10..].iter().all(|p| score(p) == 1.0));
    assert!(low < 0.5, "{low}");
}

#[test]
fn every_mode_renders() {
    let c = separated();
    let cfg = EvalConfig {
        repeats: 2,
        trials: 10,
        attack_prompts: 2,
        ..EvalConfig::default()
    };
    let expected: [(EvalMode, &[&str]); 6] = [
        (EvalMode::Topk, &["topk.csv"]),
        (
            EvalMode::Confusion,
            &["confusion.csv", "confusion_rates.csv"],
        ),
        (EvalMode::PromptAttack, &[]),
        (EvalMode::OvrSweep, &["ovr.csv"]),
        (EvalMode::OutlierSweep, &["outlier.csv"]),
        (EvalMode::Correlation, &["correlation.csv"]),
    ];
    for (mode, names) in expected {
        let out = run_eval(&c, mode, &cfg).unwrap();
        let got: Vec<&str> = out.files.iter().map(|(n, _)| n.as_str()).collect();
        let mut want = names.to_vec();
        want.push("summary.json");
        assert_eq!(got, want);
        let v: serde_json::Value = serde_json::from_str(&out.summary).unwrap();
        assert_eq!(v["mode"], mode.to_string());
        assert_eq!(v["config"]["repeats"], 2);
    }
    let ovr = run_eval(&c, EvalMode::OvrSweep, &cfg).unwrap();
    let table = &ovr.files[0].1;
    assert!(
        table.starts_with("model,accuracy,roc_auc,tpr@2%,tpr@5%\nm00,1.000,1.000,1.000,1.000\n"),
        "{table}"
    );
}
