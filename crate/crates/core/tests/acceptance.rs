//! Acceptance suite: the exit criteria of the toolkit, one test per
//! criterion, each printing a PASS line (run with `-- --nocapture` to see
//! them). Every threshold is pinned here, not computed at run time.

use std::time::Instant;

use rand::Rng;

use stealth_core::adversary::{PerturbConfig, Scaffold};
use stealth_core::cluster::{
    bicluster, pick_pivots, project, sample_leaves, ClusterConfig, ProjectionLine, SampleMode,
};
use stealth_core::data::{encode_normalize, load_csv, synth_biased, tri_split, Dataset, Schema};
use stealth_core::explain::{influential_set, jaccard, ExplainConfig, InfluenceSet};
use stealth_core::learners::{train_forest, CountingPredictor, ForestConfig, Predictor};
use stealth_core::metrics::{confusion, fairness, performance, Counts, GroupConfusion, MetricId};
use stealth_core::mitigation::{fair_smote_train, fairmask_train, maat_train, rebalance_subgroups};
use stealth_core::pipeline::{
    emit_report, DataSource, DatasetSpec, ExperimentConfig, Method, Runner, SyntheticSpec,
};
use stealth_core::rng;
use stealth_core::stats::{bootstrap_diff, cliffs_delta, median, win_tie_loss, Outcome, StatConfig};

fn pass(n: usize, what: &str) {
    println!("acceptance {n}: PASS — {what}");
}

fn plain_dataset(rows: Vec<Vec<f64>>) -> Dataset {
    let width = rows.first().map_or(0, |r| r.len());
    let names = (0..width).map(|i| format!("x{i}")).collect();
    Dataset::new(names, rows, None, vec![]).unwrap()
}

/// Criterion 1: projection endpoints over 1,000 random clusters and the
/// 3-4-5 construction.
#[test]
fn criterion_01_projection_formula() {
    let mut r = rng::stream(0xC1, 0);
    for trial in 0..1000u64 {
        let dims = r.gen_range(1..9);
        let n = r.gen_range(2..40);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| r.gen::<f64>()).collect())
            .collect();
        let ds = plain_dataset(rows);
        let all: Vec<usize> = (0..ds.n_rows()).collect();
        let mut pivot_rng = rng::stream(0xC1, trial + 1);
        let line = pick_pivots(&ds, &all, &mut pivot_rng).expect("continuous rows are distinct");
        assert!(project(&line.east, &line).abs() < 1e-9);
        assert!((project(&line.west, &line) - line.c).abs() < 1e-9);
    }

    // a = 4, b = 3, c = 5 must land at 3.2
    let line = ProjectionLine {
        east: vec![0.0, 0.0],
        west: vec![5.0, 0.0],
        c: 5.0,
    };
    let p = [3.2, 2.4];
    assert!((project(&p, &line) - 3.2).abs() < 1e-9);
    pass(1, "project(E)=0, project(W)=c over 1000 clusters; 3-4-5 case = 3.2");
}

/// Criterion 2: 10,000 rows at threshold 100 yield exactly 128 leaves
/// that partition the rows, and the instrumented query counter equals the
/// leaf count.
#[test]
fn criterion_02_clustering_and_budget() {
    let (ds, _) = synth_biased(10_000, 0.5, 0.1, 0xC2).unwrap();
    let data = ds.without_labels();
    let cfg = ClusterConfig {
        stop_threshold: Some(100),
        seed: 7,
        ..Default::default()
    };
    let tree = bicluster(&data, &cfg).unwrap();
    let leaves = tree.leaf_rows();
    assert_eq!(leaves.len(), 128, "halving 10,000 at t=100 gives 128 leaves");
    let mut seen: Vec<usize> = leaves.iter().flat_map(|l| l.iter().copied()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..10_000).collect::<Vec<_>>(), "leaves partition the rows");
    assert!(leaves.iter().all(|l| l.len() <= 100), "every leaf within threshold");

    // query budget == leaf count, measured through the counting wrapper
    let mut sample_rng = rng::stream(11, 0);
    let samples = sample_leaves(&tree, 1, SampleMode::Random, &mut sample_rng).unwrap();
    struct Stub;
    impl Predictor for Stub {
        fn predict_proba(&self, _row: &[f64]) -> f64 {
            0.0
        }
        fn n_features(&self) -> usize {
            5
        }
    }
    let stub = Stub;
    let counter = CountingPredictor::new(&stub);
    for &i in &samples {
        counter.predict(data.row(i));
    }
    assert_eq!(counter.calls() as usize, leaves.len());
    pass(2, "10,000 rows, t=100: exact partition, 128 leaves, budget = leaf count");
}

/// Criterion 3: Jaccard identity, disjointness, and the {a,b,c}/{b,c,d}
/// half-overlap case.
#[test]
fn criterion_03_jaccard() {
    let set = |names: &[&str]| InfluenceSet {
        features: names.iter().map(|s| s.to_string()).collect(),
        k: 1,
        test_size: 1,
    };
    let abc = set(&["a", "b", "c"]);
    let bcd = set(&["b", "c", "d"]);
    let xyz = set(&["x", "y", "z"]);
    assert_eq!(jaccard(&abc, &abc), 1.0);
    assert_eq!(jaccard(&abc, &xyz), 0.0);
    assert_eq!(jaccard(&abc, &bcd), 0.5);
    pass(3, "jaccard identity = 1, disjoint = 0, {a,b,c}/{b,c,d} = 0.5");
}

/// Criterion 4: symmetric confusion scores 0.5 everywhere; identical
/// subgroups are exactly fair; group-swap negates the deltas and inverts
/// DI on 1,000 random inputs.
#[test]
fn criterion_04_metrics() {
    let sym = Counts {
        true_pos: 25,
        true_neg: 25,
        false_pos: 25,
        false_neg: 25,
    };
    let c = GroupConfusion {
        overall: sym,
        privileged: sym,
        unprivileged: sym,
    };
    let p = performance(&c);
    for v in [p.accuracy, p.recall, p.precision, p.f1, p.false_alarm] {
        assert_eq!(v, Some(0.5));
    }
    let f = fairness(&c);
    assert_eq!(f.aod, Some(0.0));
    assert_eq!(f.eod, Some(0.0));
    assert_eq!(f.spd, Some(0.0));
    assert_eq!(f.di, Some(1.0));

    let mut r = rng::stream(0xC4, 0);
    for _ in 0..1000 {
        let n = r.gen_range(4..60);
        let pred: Vec<u8> = (0..n).map(|_| r.gen_range(0..2) as u8).collect();
        let truth: Vec<u8> = (0..n).map(|_| r.gen_range(0..2) as u8).collect();
        // alternate flags so both subgroups stay nonempty
        let groups: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let swapped: Vec<bool> = groups.iter().map(|g| !g).collect();
        let a = fairness(&confusion(&pred, &truth, &groups).unwrap());
        let b = fairness(&confusion(&pred, &truth, &swapped).unwrap());
        for (x, y) in [(a.aod, b.aod), (a.eod, b.eod), (a.spd, b.spd)] {
            match (x, y) {
                (Some(x), Some(y)) => assert!((x + y).abs() < 1e-12),
                (None, None) => {}
                other => panic!("asymmetric definedness: {other:?}"),
            }
        }
        if let (Some(x), Some(y)) = (a.di, b.di) {
            if x > 0.0 && y > 0.0 {
                assert!((x * y - 1.0).abs() < 1e-9);
            }
        }
    }
    pass(4, "symmetric confusion = 0.5; identical subgroups fair; 1000 group swaps");
}

/// Criterion 5: Cliff's delta against an independent pair-count oracle on
/// 1,000 random pairs; bootstrap false-positive calibration at
/// 0.05 +/- 0.02 over 1,000 same-distribution trials; self-comparison is
/// always a tie.
#[test]
fn criterion_05_statistics() {
    // independently written dominance count
    fn oracle(a: &[f64], b: &[f64]) -> f64 {
        let mut score = 0i64;
        for &x in a {
            for &y in b {
                score += match x.partial_cmp(&y).unwrap() {
                    std::cmp::Ordering::Greater => 1,
                    std::cmp::Ordering::Less => -1,
                    std::cmp::Ordering::Equal => 0,
                };
            }
        }
        score as f64 / (a.len() as f64 * b.len() as f64)
    }
    let mut r = rng::stream(0xC5, 0);
    for _ in 0..1000 {
        let na = r.gen_range(1..30);
        let nb = r.gen_range(1..30);
        // draw from a coarse grid so ties are common
        let a: Vec<f64> = (0..na).map(|_| r.gen_range(0..8) as f64 / 4.0).collect();
        let b: Vec<f64> = (0..nb).map(|_| r.gen_range(0..8) as f64 / 4.0).collect();
        assert!((cliffs_delta(&a, &b) - oracle(&a, &b)).abs() < 1e-12);
    }

    // calibration: same-distribution samples must trigger at ~alpha
    let mut calib = rng::stream(0xC5, 1);
    let mut false_positives = 0usize;
    for trial in 0..1000u64 {
        let a: Vec<f64> = (0..20).map(|_| calib.gen::<f64>()).collect();
        let b: Vec<f64> = (0..20).map(|_| calib.gen::<f64>()).collect();
        let mut boot = rng::stream(0xC5, 2 + trial);
        if bootstrap_diff(&a, &b, 1000, 0.05, &mut boot) {
            false_positives += 1;
        }
    }
    let rate = false_positives as f64 / 1000.0;
    assert!(
        (rate - 0.05).abs() <= 0.02,
        "false-positive rate {rate} outside 0.05 +/- 0.02"
    );

    // self-comparison ties for every metric direction
    let mut wtl_rng = rng::stream(0xC5, 9000);
    for metric in MetricId::ALL {
        let x: Vec<f64> = (0..20).map(|i| 0.2 + 0.01 * i as f64).collect();
        assert_eq!(
            win_tie_loss(&x, &x, metric, &StatConfig::default(), &mut wtl_rng),
            Outcome::Tie
        );
    }
    pass(5, "cliffs delta = oracle on 1000 pairs; bootstrap fp calibrated; self = tie");
}

/// Criterion 6: with the scaffold active on biased synthetic data, the
/// surrogate's explanations stop matching the liar (median overlap <=
/// 0.2) while still matching the honest original (median >= 0.5).
#[test]
fn criterion_06_rq1_desk_scale() {
    let mut cfg = ExperimentConfig::synthetic(2000, 0.9, 0.0);
    cfg.seed = 0xC6;
    cfg.adversary = true;
    cfg.repeats = 20;
    let runner = Runner::new(cfg).unwrap();
    let reports = runner.run_rq1().unwrap();
    let r = &reports[0];
    assert!(
        r.median_slack <= 0.2,
        "liar overlap median {} above 0.2",
        r.median_slack
    );
    assert!(
        r.median_base >= 0.5,
        "honest overlap median {} below 0.5",
        r.median_base
    );
    pass(
        6,
        "20 repeats, n=2000, bias 0.9: slack_jacc median <= 0.2, base_jacc median >= 0.5",
    );
}

/// Criterion 7: the audit's real-row queries slip past the detector to
/// the biased model (>= 90%), while explainer perturbation clouds are
/// routed to the decoy (>= 90%).
#[test]
fn criterion_07_stealth_evasion() {
    let (ds, schema) = synth_biased(2000, 0.9, 0.0, 0xC7).unwrap();
    let split = tri_split(&ds, 3).unwrap();
    let scaffold = Scaffold::train(
        &split.train1.without_labels(),
        &schema,
        "protected",
        "legit",
        &PerturbConfig {
            seed: 5,
            ..Default::default()
        },
        &ForestConfig {
            seed: 6,
            ..Default::default()
        },
    )
    .unwrap();

    // the audit's queries: one sampled row per cluster leaf of Train2
    let tree = bicluster(
        &split.train2,
        &ClusterConfig {
            seed: 8,
            ..Default::default()
        },
    )
    .unwrap();
    let mut sample_rng = rng::stream(9, 0);
    let samples = sample_leaves(&tree, 1, SampleMode::Random, &mut sample_rng).unwrap();
    scaffold.reset_routing_counts();
    for &i in &samples {
        scaffold.predict(split.train2.row(i));
    }
    let (to_biased, to_innocuous) = scaffold.routing_counts();
    assert_eq!(to_biased + to_innocuous, samples.len() as u64);
    let biased_rate = to_biased as f64 / samples.len() as f64;
    assert!(
        biased_rate >= 0.9,
        "only {biased_rate:.3} of audit queries reached the biased model"
    );

    // explainer queries: perturbation clouds at sigma_p = 1.0
    scaffold.reset_routing_counts();
    let probe = split
        .test
        .select(&(0..40).collect::<Vec<_>>())
        .without_labels();
    influential_set(
        &scaffold,
        &probe,
        &ExplainConfig {
            seed: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let (to_biased, to_innocuous) = scaffold.routing_counts();
    let innocuous_rate = to_innocuous as f64 / (to_biased + to_innocuous) as f64;
    assert!(
        innocuous_rate >= 0.9,
        "only {innocuous_rate:.3} of explainer queries reached the decoy"
    );
    pass(
        7,
        "audit queries >= 90% to the biased model; explainer queries >= 90% to the decoy",
    );
}

/// Criterion 8: the surrogate's median accuracy stays within 0.10 of the
/// original model over 20 repeats. Runs on synthetic data, and also on a
/// user-supplied CSV when STEALTH_ACCEPT_CSV / STEALTH_ACCEPT_SCHEMA are
/// set.
#[test]
fn criterion_08_rq2_desk_scale() {
    fn gap(cfg: ExperimentConfig) -> f64 {
        let runner = Runner::new(cfg).unwrap();
        let (records, _) = runner.run_rq2_rq3().unwrap();
        let acc = |m: Method| -> Vec<f64> {
            records
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.report.accuracy)
                .collect()
        };
        (median(&acc(Method::Stealth)) - median(&acc(Method::Baseline))).abs()
    }

    let mut cfg = ExperimentConfig::synthetic(1000, 0.8, 0.05);
    cfg.seed = 0xC8;
    cfg.repeats = 20;
    cfg.explain_influence = false;
    let synth_gap = gap(cfg);
    assert!(
        synth_gap <= 0.10,
        "synthetic surrogate accuracy gap {synth_gap:.3} above 0.10"
    );

    if let (Ok(csv), Ok(schema_path)) = (
        std::env::var("STEALTH_ACCEPT_CSV"),
        std::env::var("STEALTH_ACCEPT_SCHEMA"),
    ) {
        let mut cfg = ExperimentConfig::synthetic(1000, 0.8, 0.05);
        cfg.datasets = vec![DatasetSpec {
            name: "user".into(),
            source: DataSource::Csv {
                csv: csv.into(),
                schema: schema_path.into(),
            },
            protected: None,
        }];
        cfg.seed = 0xC8;
        cfg.repeats = 20;
        cfg.explain_influence = false;
        let user_gap = gap(cfg);
        assert!(
            user_gap <= 0.10,
            "user dataset surrogate accuracy gap {user_gap:.3} above 0.10"
        );
    }
    pass(8, "surrogate median accuracy within 0.10 of the original over 20 repeats");
}

/// Criterion 9: twelve configured runs give win/tie/loss denominators of
/// exactly 60 performance and 48 fairness cells.
#[test]
fn criterion_09_rq3_structure() {
    let datasets: Vec<DatasetSpec> = (0..12)
        .map(|i| DatasetSpec {
            name: format!("synth{i:02}"),
            source: DataSource::Synthetic(SyntheticSpec {
                n: 150,
                bias_strength: 0.5 + 0.04 * i as f64,
                noise: 0.05,
            }),
            protected: None,
        })
        .collect();
    let mut cfg = ExperimentConfig::synthetic(150, 0.5, 0.0);
    cfg.datasets = datasets;
    cfg.seed = 0xC9;
    cfg.repeats = 3;
    cfg.methods = vec![Method::Stealth, Method::Baseline];
    cfg.forest.n_trees = 15;
    cfg.explain_influence = false;
    let runner = Runner::new(cfg).unwrap();
    let (_, wtl) = runner.run_rq2_rq3().unwrap();
    assert_eq!(wtl.rows.len(), 1);
    let row = &wtl.rows[0];
    assert_eq!(row.performance.cells, 60, "12 runs x 5 performance metrics");
    assert_eq!(row.fairness.cells, 48, "12 runs x 4 fairness metrics");
    assert_eq!(
        row.performance.counted() + row.performance.excluded,
        row.performance.cells
    );
    assert_eq!(
        row.fairness.counted() + row.fairness.excluded,
        row.fairness.cells
    );
    pass(9, "12 runs: denominators exactly 60 performance / 48 fairness cells");
}

/// Criterion 10: the mitigation invariants hold exactly.
#[test]
fn criterion_10_mitigation_invariants() {
    let (ds, _) = synth_biased(400, 0.9, 0.05, 0xCA).unwrap();
    let cfg = ForestConfig {
        seed: 2,
        n_trees: 20,
        ..Default::default()
    };

    // fairmask: exact invariance to the query's protected value
    let masked = fairmask_train(&ds, "protected", &cfg).unwrap();
    let col = ds.feature_index("protected").unwrap();
    for row in ds.rows() {
        let mut toggled = row.clone();
        toggled[col] = 1.0 - toggled[col];
        assert_eq!(masked.predict_proba(row), masked.predict_proba(&toggled));
    }

    // fair_smote: the rebalanced output has equal subgroup counts
    let mut warnings = Vec::new();
    let mut r = rng::stream(3, 0);
    let balanced = rebalance_subgroups(&ds, "protected", &mut r, &mut warnings).unwrap();
    let labels = balanced.labels().unwrap();
    let groups = balanced.group("protected").unwrap();
    let mut counts = [0usize; 4];
    for (l, g) in labels.iter().zip(groups) {
        counts[usize::from(*g) * 2 + *l as usize] += 1;
    }
    assert!(warnings.is_empty());
    assert!(counts.iter().all(|&c| c == counts[0]), "counts {counts:?}");
    // and the trained pipeline accepts the balanced data
    let mut r2 = rng::stream(4, 0);
    fair_smote_train(&ds, "protected", &cfg, &mut r2).unwrap();

    // maat: the ensemble probability is exactly the mean of its inner
    // models
    let mut r3 = rng::stream(5, 0);
    let ensemble = maat_train(&ds, "protected", &cfg, &mut r3).unwrap();
    let (perf, fair) = ensemble.ensemble_models().expect("two-model ensemble");
    for row in ds.rows().iter().take(100) {
        let mean = (perf.predict_proba(row) + fair.predict_proba(row)) / 2.0;
        assert_eq!(ensemble.predict_proba(row), mean);
    }
    pass(10, "fairmask toggle-invariant; fair_smote counts equal; maat proba = mean");
}

/// Criterion 11: identical (config, seed) runs produce byte-identical
/// CSV outputs.
#[test]
fn criterion_11_end_to_end_determinism() {
    fn full_run() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::synthetic(400, 0.9, 0.05);
        cfg.seed = 0xCB;
        cfg.repeats = 3;
        cfg.methods = vec![Method::Stealth, Method::Baseline];
        cfg.adversary = true;
        cfg.forest.n_trees = 20;
        cfg.explain.samples = 150;
        cfg
    }
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let out_a = Runner::new(full_run()).unwrap().run_all().unwrap();
    emit_report(&out_a, dir_a.path()).unwrap();
    let out_b = Runner::new(full_run()).unwrap().run_all().unwrap();
    emit_report(&out_b, dir_b.path()).unwrap();
    for file in ["runs.csv", "wtl.csv", "wtl.txt", "jaccard.csv"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert!(!a.is_empty(), "{file} is empty");
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    pass(11, "two identical runs: runs.csv, wtl.csv, wtl.txt, jaccard.csv byte-identical");
}

/// Criterion 12: a full audit of a 1,000-row dataset finishes within the
/// single-threaded 60 s envelope.
#[test]
fn criterion_12_performance_envelope() {
    let mut cfg = ExperimentConfig::synthetic(1000, 0.8, 0.05);
    cfg.seed = 0xCC;
    cfg.repeats = 1;
    let runner = Runner::new(cfg).unwrap();
    let units = runner.units().unwrap();
    let started = Instant::now();
    let record = runner
        .run_method(&units[0], 0, Method::Stealth, 0)
        .unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(record.query_budget > 0);
    assert!(record.influence.is_some(), "full run includes explanations");
    assert!(
        elapsed <= 60.0,
        "full stealth run took {elapsed:.1}s, above the 60 s envelope"
    );
    pass(12, "full 1,000-row stealth run within the 60 s envelope");
}

/// Sanity check used by the loader path: a small CSV through schema,
/// encode, and split still feeds the whole pipeline.
#[test]
fn csv_pipeline_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let (ds, schema) = synth_biased(120, 0.7, 0.0, 99).unwrap();
    let csv_path = dir.path().join("d.csv");
    stealth_core::data::write_csv(&ds, &schema, &csv_path).unwrap();
    let schema_path = dir.path().join("d.schema.json");
    std::fs::write(&schema_path, serde_json::to_string(&schema).unwrap()).unwrap();

    let loaded_schema = Schema::from_json_file(&schema_path).unwrap();
    let raw = load_csv(&csv_path, &loaded_schema).unwrap();
    let loaded = encode_normalize(&raw, &loaded_schema).unwrap();
    assert_eq!(loaded.n_rows(), 120);
    let split = tri_split(&loaded, 1).unwrap();
    let forest = train_forest(
        &split.train1,
        &ForestConfig {
            seed: 1,
            n_trees: 10,
            ..Default::default()
        },
    )
    .unwrap();
    let acc = stealth_core::learners::accuracy_on(&forest, &split.test).unwrap();
    assert!(acc > 0.5);
}
