//! Dataset loading, scoring, and benchmark aggregation.

use rdmm_core::bench::{
    load_dataset, load_dataset_mapped, run_benchmark, score_plan, DatasetError, DatasetRecord,
    FieldMap, RunOptions,
};
use rdmm_core::planner::{
    CorruptingPlanner, GoldenPlanner, Planner, PlannerError, PlannerRequest, PlannerResponse,
};
use std::io::Write;

const DATASET: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/dataset.jsonl");

fn fixture_records() -> Vec<DatasetRecord> {
    load_dataset(DATASET).unwrap()
}

#[test]
fn fixture_dataset_loads_in_order() {
    let records = fixture_records();
    assert!(records.len() >= 400, "fixture has {}", records.len());
    assert_eq!(records[0].id, "r0001");
    let categories: std::collections::BTreeSet<_> =
        records.iter().map(|r| r.category.as_str()).collect();
    for expected in ["Follow", "Meet", "Simple"] {
        assert!(categories.contains(expected), "missing category {expected}");
    }
}

#[test]
fn every_gold_plan_scores_against_itself() {
    for r in fixture_records() {
        let m = score_plan(&r.gold_plan, &r.gold_plan);
        assert!(m.exact && m.canonical, "record {}", r.id);
        assert_eq!(m.step_matches, m.step_total);
    }
}

#[test]
fn invalid_gold_plan_rejected_with_line_number() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, r#"{{"id":"a","category":"X","instruction":"i1","gold_plan":"Pickup("}}"#).unwrap();
    let err = load_dataset(f.path()).unwrap_err();
    match err {
        DatasetError::InvalidGoldPlan { line, .. } => assert_eq!(line, 1),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn malformed_line_rejected_with_line_number() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, r#"{{"id":"a","category":"X","instruction":"i1","gold_plan":"Pickup()... "#).unwrap();
    let err = load_dataset(f.path()).unwrap_err();
    assert!(matches!(err, DatasetError::MalformedLine { line: 1, .. }), "{err:?}");
}

#[test]
fn field_mapping_adapts_external_schemas() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        f,
        r#"{{"task_id":"t1","task_type":"Simple","prompt":"go","output":"Move_To('kitchen')"}}"#
    )
    .unwrap();
    let map: FieldMap = serde_json::from_str(
        r#"{"id":"task_id","category":"task_type","instruction":"prompt","gold_plan":"output"}"#,
    )
    .unwrap();
    let records = load_dataset_mapped(f.path(), &map).unwrap();
    assert_eq!(records[0].id, "t1");
    assert_eq!(records[0].gold_plan, "Move_To('kitchen')");
}

#[test]
fn score_normalization_differences_are_canonical_only() {
    let gold = "Search_Object('cereal', '')\nPickup()";
    let predicted = "search_object('cereal', ' '), Pickup()";
    let m = score_plan(predicted, gold);
    assert!(!m.exact);
    assert!(m.canonical);
    assert_eq!((m.step_matches, m.step_total), (2, 2));
}

#[test]
fn score_counts_aligned_steps() {
    let gold = "Move_To('kitchen')\nSearch_Object('cereal', '')\nPickup()\nMove_To('living_room')\nPlace_On('table')";
    let predicted = "Move_To('kitchen')\nSearch_Object('rice', '')\nPickup()\nMove_To('living_room')\nPlace_On('table')";
    let m = score_plan(predicted, gold);
    assert!(!m.canonical);
    assert_eq!((m.step_matches, m.step_total), (4, 5));
}

#[test]
fn score_unparseable_prediction() {
    let m = score_plan("Pickup(", "Pickup()");
    assert!(!m.exact && !m.canonical);
    assert_eq!((m.step_matches, m.step_total), (0, 1));
}

#[test]
fn canonical_equality_is_symmetric() {
    let a = "Move_To('kitchen')";
    let b = "move_to('kitchen')";
    assert_eq!(score_plan(a, b).canonical, score_plan(b, a).canonical);
}

#[test]
fn golden_backend_scores_perfectly() {
    let records = fixture_records();
    let golden = GoldenPlanner::new(&records);
    let report = run_benchmark(&golden, &records, &[], &RunOptions::default());
    assert_eq!(report.overall.accuracy, 1.0);
    assert_eq!(report.overall.n, records.len());
    for (cat, stats) in &report.per_category {
        assert_eq!(stats.accuracy, 1.0, "category {cat}");
    }
    assert_eq!(report.metadata.backend_errors, 0);
}

#[test]
fn corrupting_backend_near_expected_rate() {
    let records = fixture_records();
    let (shots, eval) = records.split_at(20);
    assert_eq!(eval.len(), 400);
    let backend = CorruptingPlanner::new(GoldenPlanner::new(&records), 0.25, 7);
    let report = run_benchmark(&backend, eval, shots, &RunOptions::default());
    let sigma = (0.25f64 * 0.75 / eval.len() as f64).sqrt();
    assert!(
        (report.overall.accuracy - 0.75).abs() <= 3.0 * sigma,
        "accuracy {} outside 3 sigma",
        report.overall.accuracy
    );
}

struct EmptyBackend;

impl Planner for EmptyBackend {
    fn id(&self) -> &str {
        "empty"
    }
    fn generate(&self, _: &PlannerRequest) -> Result<PlannerResponse, PlannerError> {
        Ok(PlannerResponse {
            plan_text: String::new(),
            latency: std::time::Duration::ZERO,
            token_estimate: Some(0),
        })
    }
}

#[test]
fn empty_backend_scores_zero_without_crashing() {
    let records = fixture_records();
    let report = run_benchmark(&EmptyBackend, &records, &[], &RunOptions::default());
    assert_eq!(report.overall.accuracy, 0.0);
    assert_eq!(report.overall.n, records.len());
}

struct FailingBackend;

impl Planner for FailingBackend {
    fn id(&self) -> &str {
        "failing"
    }
    fn generate(&self, _: &PlannerRequest) -> Result<PlannerResponse, PlannerError> {
        Err(PlannerError::BackendUnavailable("down".into()))
    }
}

#[test]
fn backend_errors_count_incorrect_and_are_tallied() {
    let records = &fixture_records()[..10];
    let report = run_benchmark(&FailingBackend, records, &[], &RunOptions::default());
    assert_eq!(report.overall.accuracy, 0.0);
    assert_eq!(report.metadata.backend_errors, 10);
}

#[test]
fn parallelism_does_not_change_the_report() {
    let records = fixture_records();
    let backend = CorruptingPlanner::new(GoldenPlanner::new(&records), 0.5, 3);
    let opts1 = RunOptions { timestamp: Some("T".into()), ..Default::default() };
    let opts8 = RunOptions { parallelism: 8, timestamp: Some("T".into()), ..Default::default() };
    let a = run_benchmark(&backend, &records, &[], &opts1);
    let b = run_benchmark(&backend, &records, &[], &opts8);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn report_arithmetic_is_consistent() {
    let records = fixture_records();
    let backend = CorruptingPlanner::new(GoldenPlanner::new(&records), 0.25, 7);
    let report = run_benchmark(&backend, &records, &[], &RunOptions::default());
    let n: usize = report.per_category.values().map(|s| s.n).sum();
    let correct: usize = report.per_category.values().map(|s| s.correct).sum();
    assert_eq!(n, report.overall.n);
    assert_eq!(correct, report.overall.correct);
    assert_eq!(report.overall.accuracy, correct as f64 / n as f64);
    for stats in report.per_category.values() {
        assert_eq!(stats.accuracy, stats.correct as f64 / stats.n as f64);
    }
}

#[test]
fn report_renders_csv_and_table() {
    let records = &fixture_records()[..40];
    let golden = GoldenPlanner::new(records);
    let report = run_benchmark(&golden, records, &[], &RunOptions::default());
    let csv = report.to_csv();
    assert!(csv.starts_with("category,n,correct,accuracy\n"));
    assert!(csv.contains("overall,"));
    let table = report.render_table();
    assert!(table.contains("overall"));
    assert!(table.contains("100.00%"));
}
