use std::fs;

use proptest::prelude::*;
use wwlab::cache::{run_cached, Cache, Lookup, Origin};
use wwlab::config::{ExperimentConfig, NSchedule};
use wwlab::ops::run_experiment;
use wwlab::report::{emit_report, Format};
use wwlab::LabError;

const WW_CONFIG: &str = r#"{
    "op": "ww", "k": 1,
    "system": {"kind": "cyclic_shift", "p": 31},
    "functions": [{"kind": "mean_zero", "seed": 4}],
    "schedule": {"list": [4, 8, 16]}
}"#;

const BOX_CONFIG: &str = r#"{"op": "boxsweep", "max_dim": 2, "max_side": 3, "max_q": 4}"#;

fn ww() -> ExperimentConfig {
    ExperimentConfig::from_json(WW_CONFIG).unwrap()
}

#[test]
fn config_round_trips_through_json_with_a_stable_hash() {
    let cfg = ww();
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_eq!(cfg.hash().len(), 64);

    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(other.hash(), cfg.hash());
}

#[test]
fn missing_schedule_is_rejected_except_for_boxsweep() {
    let no_schedule = WW_CONFIG.replace(r#""schedule": {"list": [4, 8, 16]}"#, r#""seed": 0"#);
    assert!(matches!(ExperimentConfig::from_json(&no_schedule), Err(LabError::Config(_))));
    assert!(ExperimentConfig::from_json(BOX_CONFIG).is_ok());
}

#[test]
fn cache_hit_after_store() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let cfg = ww();
    let (first, origin) = run_cached(&cache, &cfg).unwrap();
    assert_eq!(origin, Origin::Computed);
    let (second, origin) = run_cached(&cache, &cfg).unwrap();
    assert_eq!(origin, Origin::Cache);
    assert!(first.content_eq(&second));
}

#[test]
fn records_from_another_version_are_stale_and_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let cfg = ww();
    let mut rec = run_experiment(&cfg).unwrap();
    rec.version = "0.0.0-old".into();
    cache.store(&rec).unwrap();
    match cache.lookup(&cfg.hash()).unwrap() {
        Lookup::Stale { found_version } => assert_eq!(found_version, "0.0.0-old"),
        other => panic!("expected a stale record, got {other:?}"),
    }
    let (fresh, origin) = run_cached(&cache, &cfg).unwrap();
    assert_eq!(origin, Origin::Computed);
    assert_eq!(fresh.version, wwlab::ops::VERSION);
}

#[test]
fn corrupt_records_are_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let cfg = ww();
    let path = cache.path_for(&cfg.hash());
    fs::write(&path, "{ not json").unwrap();
    let moved = match cache.lookup(&cfg.hash()).unwrap() {
        Lookup::Quarantined(p) => p,
        other => panic!("expected quarantine, got {other:?}"),
    };
    assert!(!path.exists());
    assert_eq!(fs::read_to_string(&moved).unwrap(), "{ not json");

    // A record stored under the wrong name is treated the same way.
    let rec = run_experiment(&cfg).unwrap();
    let wrong = "0".repeat(64);
    fs::write(cache.path_for(&wrong), serde_json::to_vec(&rec).unwrap()).unwrap();
    assert!(matches!(cache.lookup(&wrong).unwrap(), Lookup::Quarantined(_)));
    assert_eq!(cache.records().unwrap().len(), 0);
}

#[test]
fn csv_report_has_fixed_headers() {
    let out = tempfile::tempdir().unwrap();
    let series = run_experiment(&ww()).unwrap();
    let boxes = run_experiment(&ExperimentConfig::from_json(BOX_CONFIG).unwrap()).unwrap();
    let files = emit_report(&[series, boxes], Format::Csv, out.path()).unwrap();
    assert_eq!(files.len(), 2);

    let series_csv = fs::read_to_string(out.path().join("series.csv")).unwrap();
    let mut lines = series_csv.lines();
    assert_eq!(lines.next(), Some("config_hash,N,lower,upper"));
    assert_eq!(lines.count(), 3);

    let box_csv = fs::read_to_string(out.path().join("boxsweep.csv")).unwrap();
    assert_eq!(
        box_csv.lines().next(),
        Some("k,H,q,p,exact,brute,bound_lhs,bound_rhs,slack")
    );
    for line in box_csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[4], cols[5], "exact and brute differ in {line}");
    }
}

#[test]
fn json_and_plot_reports() {
    let out = tempfile::tempdir().unwrap();
    let rec = run_experiment(&ww()).unwrap();
    emit_report(std::slice::from_ref(&rec), Format::Json, out.path()).unwrap();
    let text = fs::read_to_string(out.path().join("records.json")).unwrap();
    let back: Vec<wwlab::ops::ResultRecord> = serde_json::from_str(&text).unwrap();
    assert!(back[0].content_eq(&rec));

    emit_report(&[rec], Format::Plotdata, out.path()).unwrap();
    let plot = fs::read_to_string(out.path().join("plotdata.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("config_hash,N,log_n,log_value,fit"));
}

#[test]
fn empty_selection_is_an_error() {
    let out = tempfile::tempdir().unwrap();
    assert!(matches!(emit_report(&[], Format::Csv, out.path()), Err(LabError::NoRecords)));
}

#[test]
fn runs_are_reproducible() {
    let a = run_experiment(&ww()).unwrap();
    let b = run_experiment(&ww()).unwrap();
    assert!(a.content_eq(&b));
}

proptest! {
    #[test]
    fn geometric_schedules_increase(start in 1u64..64, ratio in 1.05f64..4.0, count in 1usize..20) {
        let v = NSchedule::Geometric { start, ratio, count }.values().unwrap();
        prop_assert_eq!(v[0] as u64, start);
        prop_assert!(v.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(v.len() <= count);
    }

    #[test]
    fn hash_ignores_only_the_budget(budget in proptest::option::of(1u64..u64::MAX), seed in 0u64..1000) {
        let mut cfg = ww();
        cfg.seed = seed;
        let base = cfg.hash();
        cfg.budget = budget;
        prop_assert_eq!(cfg.hash(), base);
    }
}
