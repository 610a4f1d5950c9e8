use std::sync::Arc;

use cha_core::datapipe::{is_reference, DataPipe};
use cha_core::executor::{run_plan, Binding, ExecutionStatus};
use cha_core::plan::{parse_plan, validate_plan};
use cha_core::task::TaskRegistry;
use cha_core::value::{Argument, Payload};
use cha_health::analysis::{analyze, Mode};
use cha_health::records::{date_range, Dataset, SleepRecord, SLEEP_FILE};
use cha_health::web::{extract_text, FixtureFetcher, Fetcher};
use cha_health::{catalog, registry_from, HealthConfig, HealthError};
use chrono::{Duration, NaiveDate};
use proptest::prelude::*;
use serde_json::{json, Value};

const MAYO: &str = "https://www.mayoclinic.org/healthy-lifestyle/adult-health/in-depth/sleep/art-20048379";

fn registry() -> TaskRegistry {
    registry_from(&catalog(&HealthConfig::bundled()).unwrap()).unwrap()
}

fn call(reg: &TaskRegistry, task: &str, args: &[&str]) -> Result<Value, cha_core::task::TaskError> {
    let args: Vec<Argument> = args.iter().map(|a| Argument::Text(a.to_string())).collect();
    let out = reg.lookup(task).unwrap().body.execute(&args)?;
    match out.payload {
        Payload::Value(v) => Ok(v),
        Payload::Blob(_) => panic!("unexpected blob"),
    }
}

#[test]
fn retrieval_counts() {
    let reg = registry();
    let sleep = call(&reg, "affect_sleep_get", &["par_5", "2020-08-01", "2020-08-31"]).unwrap();
    assert_eq!(sleep.as_array().unwrap().len(), 31);
    let one = call(&reg, "affect_sleep_get", &["par_5", "2020-08-07", ""]).unwrap();
    assert_eq!(one.as_array().unwrap().len(), 1);
    assert_eq!(one[0]["date"], "2020-08-07");
    let year = call(&reg, "affect_activity_get", &["par_5", "2020-01-01", "2020-12-31"]).unwrap();
    assert_eq!(year.as_array().unwrap().len(), 366);
    let none = call(&reg, "affect_activity_get", &["par_5", "2021-01-01", "2021-02-01"]).unwrap();
    assert_eq!(none, json!([]));
    let ppg = call(&reg, "affect_ppg_get", &["par_5", "2020-08-29", ""]).unwrap();
    assert_eq!(ppg.as_array().unwrap().len(), 1200);
    // A month-long request returns the one recorded day.
    let month = call(&reg, "affect_ppg_get", &["par_5", "2020-08-01", "2020-08-31"]).unwrap();
    assert_eq!(month.as_array().unwrap().len(), 1200);
}

#[test]
fn retrieval_errors() {
    let reg = registry();
    let e = call(&reg, "affect_sleep_get", &["par_99", "2020-08-01", ""]).unwrap_err();
    assert_eq!(e.kind, "UnknownPatient");
    let e = call(&reg, "affect_activity_get", &["par_5", "08/01/2020", ""]).unwrap_err();
    assert_eq!(e.kind, "BadDate");
    let e = call(&reg, "affect_ppg_get", &["par_5", "2020-08-01", ""]).unwrap_err();
    assert_eq!(e.kind, "EmptyInput");
    let e = call(&reg, "affect_analysis", &["[]", "average"]).unwrap_err();
    assert_eq!(e.kind, "EmptyInput");
    let e = call(&reg, "affect_analysis", &["[{\"steps\": 1}]", "median"]).unwrap_err();
    assert_eq!(e.kind, "UnknownMode");
}

#[test]
fn sleep_invariants_hold_in_corpus() {
    let ds = Dataset::new(HealthConfig::bundled().data_dir);
    for i in 1..=5 {
        let rows: Vec<SleepRecord> = ds.load(&format!("par_{i}"), SLEEP_FILE).unwrap();
        for r in rows {
            assert!(r.rem_min + r.deep_min + r.light_min <= r.total_sleep_min + 1e-9);
            assert!((0.0..=1.0).contains(&r.efficiency));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn range_count_matches_linear_scan(a in 0i64..400, len in 0i64..60) {
        let base = NaiveDate::from_ymd_opt(2019, 12, 1).unwrap();
        let (s, e) = (base + Duration::days(a), base + Duration::days(a + len));
        let ds = Dataset::new(HealthConfig::bundled().data_dir);
        let got: Vec<SleepRecord> = ds
            .range("par_3", SLEEP_FILE, &s.to_string(), &e.to_string())
            .unwrap();
        let all: Vec<SleepRecord> = ds.load("par_3", SLEEP_FILE).unwrap();
        let (from, to) = date_range(&s.to_string(), &e.to_string()).unwrap();
        let mut expected = 0;
        for r in &all {
            if r.date >= from && r.date <= to {
                expected += 1;
            }
        }
        prop_assert_eq!(got.len(), expected);
    }

    #[test]
    fn average_is_sum_over_count(values in prop::collection::vec(0.0f64..1e4, 1..50)) {
        let records = Value::Array(values.iter().map(|v| json!({"x": v})).collect());
        let avg = analyze(&records, Mode::Average).unwrap()["x"].as_f64().unwrap();
        let sum = analyze(&records, Mode::Sum).unwrap()["x"].as_f64().unwrap();
        prop_assert_eq!(avg, sum / values.len() as f64);
    }

    #[test]
    fn trend_recovers_linear_slope(
        slope in -100i32..100,
        intercept in -1000i32..1000,
        n in 2usize..60,
    ) {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let records = Value::Array(
            (0..n)
                .map(|d| {
                    let date = start + Duration::days(d as i64);
                    json!({"date": date.to_string(), "y": intercept as f64 + slope as f64 * d as f64})
                })
                .collect(),
        );
        let got = analyze(&records, Mode::Trend).unwrap()["y"]["slope"].as_f64().unwrap();
        prop_assert!((got - slope as f64).abs() <= 1e-12 * (slope.abs() as f64).max(1.0), "{}", got);
    }
}

#[test]
fn search_and_extract() {
    let reg = registry();
    let hit = call(&reg, "google_search", &["tips to improve sleep"]).unwrap();
    assert_eq!(hit, json!({"url": MAYO}));
    assert_eq!(call(&reg, "google_search", &["quantum knitting"]).unwrap_err().kind, "NoResults");
    assert_eq!(call(&reg, "google_search", &["  "]).unwrap_err().kind, "InvalidInput");
    let text = call(&reg, "extract_text", &[MAYO]).unwrap();
    let text = text.as_str().unwrap();
    assert!(text.starts_with("Sleep tips: 6 steps to better sleep"));
    assert!(text.contains("Stick to a sleep schedule"));
    assert!(!text.contains("analytics") && !text.contains("font-family"));
    let e = call(&reg, "extract_text", &["https://example.org/files/sleep-diary.pdf"]).unwrap_err();
    assert_eq!(e.kind, "NotHtml");
    let e = call(&reg, "extract_text", &["https://nowhere.invalid/"]).unwrap_err();
    assert_eq!(e.kind, "FetchFailure");
}

#[test]
fn extract_respects_budget() {
    let html = FixtureFetcher::new(HealthConfig::bundled().www_dir).fetch(MAYO).unwrap();
    assert_eq!(extract_text(&html, 10).chars().count(), 10);
    assert!(extract_text(&html, usize::MAX).len() < 8000);
}

#[test]
fn ppg_chain_passes_references() {
    let reg = registry();
    let code = "ppg_data_result = self.execute_task('affect_ppg_get', ['par_5', '2020-08-01', '2020-08-31'])\n\
                hrv_analysis_result = self.execute_task('affect_ppg_analysis', [ppg_data_result])\n\
                stress_level_result = self.execute_task('affect_stress_analysis', [hrv_analysis_result])\n";
    let plan = validate_plan(parse_plan(code).unwrap(), &reg).unwrap();
    let pipe = Arc::new(DataPipe::new());
    let out = run_plan(&plan, &reg, &pipe, 1);
    assert_eq!(out.status, ExecutionStatus::Completed);
    let names: Vec<&str> = out.records.iter().map(|r| r.task_name.as_str()).collect();
    assert_eq!(names, ["affect_ppg_get", "affect_ppg_analysis", "affect_stress_analysis"]);
    assert!(is_reference(&out.records[0].rendered_output));
    assert!(is_reference(&out.records[1].rendered_output));
    match &out.bindings["stress_level_result"] {
        Binding::Value(v) => {
            assert_eq!(v["level"], 4);
            assert_eq!(v["label"], "very high");
        }
        other => panic!("unexpected binding {other:?}"),
    }
}

#[test]
fn health_error_kinds() {
    let e: cha_core::task::TaskError = HealthError::TooShort { seconds: 2.0 }.into();
    assert_eq!(e.kind, "TooShort");
    assert!(e.to_string().starts_with("TooShort: "));
}
