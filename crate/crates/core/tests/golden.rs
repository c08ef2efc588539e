use chrono::{Duration, NaiveDate};
use covtrace_core::case_model::{Category, SubCategory};
use covtrace_core::classify::{classify_all, evaluate, RuleSet};
use covtrace_core::dynamics::{
    admission_delay_stats, build_geo_dataset_from_files, daily_series, local_transmission_share,
    spatial_table, weekly_snapshots, DEFAULT_ANCHOR,
};
use covtrace_core::ingest::parse_corpus;
use covtrace_core::synth::{generate, ScenarioConfig};

fn golden_dir() -> (tempfile::TempDir, covtrace_core::synth::Scenario) {
    let dir = tempfile::tempdir().unwrap();
    let scenario = generate(&ScenarioConfig::golden()).unwrap();
    scenario.write_to_dir(dir.path()).unwrap();
    (dir, scenario)
}

#[test]
fn golden_corpus_round_trips_and_matches_plan() {
    let (dir, scenario) = golden_dir();
    let (db, summary) = parse_corpus(dir.path().join("corpus.jsonl")).unwrap();
    assert_eq!(summary.accepted, 5000);
    assert!(summary.rejected.is_empty());
    assert_eq!(db.reports().cloned().collect::<Vec<_>>(), scenario.reports);

    let labels = classify_all(db.reports(), &RuleSet::default());
    let table = weekly_snapshots(&db, &labels, DEFAULT_ANCHOR, None).unwrap();
    assert_eq!(table.snapshots.len(), 5);
    assert!(table.before_anchor.is_empty());
    let week5 = &table.snapshots[4];
    assert_eq!(week5.total, 5000);

    // labels reproduce the ledger exactly at zero noise
    let end = DEFAULT_ANCHOR + Duration::days(35);
    assert_eq!(week5.counts, scenario.ledger.evidence_counts_before(end));
    for (w, s) in table.snapshots.iter().enumerate() {
        let until = DEFAULT_ANCHOR + Duration::days(7 * (w as i64 + 1));
        assert_eq!(s.counts, scenario.ledger.evidence_counts_before(until));
    }

    // binomial standard error at n = 5000 is at most 0.71 points
    let mix = scenario.config.leaf_mix;
    for leaf in SubCategory::ALL {
        let got = week5.percentage(leaf).unwrap();
        let want = mix[leaf.index()] * 100.0;
        assert!((got - want).abs() <= 1.5, "{leaf}: {got} vs {want}");
    }
    let local = local_transmission_share(week5);
    assert!((local - 63.4).abs() <= 1.5, "{local}");

    let delays = admission_delay_stats(&db);
    let within = delays.fraction_within(5).unwrap();
    assert_eq!(Some(within), scenario.ledger.fraction_within(5));
    assert!((within - 0.79).abs() <= 0.02, "{within}");

    let spatial = spatial_table(&db, &labels).unwrap();
    assert_eq!(spatial.provinces, scenario.ledger.province_counts());

    let daily = daily_series(&db, &labels).unwrap();
    for c in Category::ALL {
        assert_eq!(daily.peak_date(c), Some(scenario.ledger.peaks[c.index()]), "{c}");
    }
}

#[test]
fn golden_geo_dataset_covers_every_city() {
    let (dir, scenario) = golden_dir();
    let (db, _) = parse_corpus(dir.path().join("corpus.jsonl")).unwrap();
    let geo = build_geo_dataset_from_files(&db, dir.path().join("coords.csv"), dir.path().join("outflow.csv")).unwrap();
    assert_eq!(geo.rows.len(), scenario.config.cities.len());
    assert!(geo.missing_outflow.is_empty());
    assert_eq!(geo.rows.iter().map(|r| r.reported_cases).sum::<u64>(), 5000);
    assert!(geo.rows.iter().all(|r| r.distance_km > 0.0));
    // cases follow outflow by construction
    assert!(geo.outflow_correlation().unwrap() > 0.9);
    assert!(geo.distance_correlation().is_some());
}

#[test]
fn rule_accuracy_tracks_noise() {
    for noise in [0.0, 0.05, 0.1] {
        let scenario = generate(&ScenarioConfig { noise, ..ScenarioConfig::golden() }).unwrap();
        let truth = scenario.reports.iter().zip(&scenario.ledger.entries).map(|(r, e)| (r, e.true_leaf));
        let eval = evaluate(&RuleSet::default(), truth);
        let corrupted = scenario.ledger.entries.iter().filter(|e| e.corrupted).count();
        // every uncorrupted case is recovered and every corrupted one is missed
        assert_eq!(eval.accuracy, 1.0 - corrupted as f64 / 5000.0);
        assert!(eval.accuracy >= 1.0 - noise - 0.02, "noise {noise}: {}", eval.accuracy);
    }
}

#[test]
fn anchor_default_matches_golden_span() {
    assert_eq!(DEFAULT_ANCHOR, NaiveDate::from_ymd_opt(2020, 1, 18).unwrap());
    assert_eq!(ScenarioConfig::golden().start, DEFAULT_ANCHOR);
}
