mod common;

use common::{cases_path, fixture};
use krishi::eval::{parse_cases, report_to_csv, run_eval, write_report, Category, EvalReport, ReportFormat};
use krishi::pipeline::{source_distribution, Status};

#[tokio::test]
async fn fixture_suite_passes_completely() {
    let (p, index) = fixture().await;
    let run = run_eval(&cases_path(), &p, &index).await.unwrap();
    let r = &run.report;
    assert!(r.metadata.cases >= 12);
    assert_eq!(r.metadata.invalid_cases, 0);
    let failed: Vec<_> = r.verdicts.iter().filter(|v| !v.passed).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert_eq!(r.overall_pass_rate, 1.0);
    for cat in [Category::DiseaseDiagnosis, Category::DosageInstruction, Category::OutOfDomain] {
        assert_eq!(r.categories[&cat].pass_rate, 1.0, "{cat:?}");
    }

    let president = run
        .traces
        .iter()
        .find(|(_, t)| t.query_bn.contains("প্রেসিডেন্ট"))
        .expect("president case present");
    assert_eq!(president.1.status, Status::RejectedOutOfDomain);
}

#[tokio::test]
async fn report_aggregates_match_traces() {
    let (p, index) = fixture().await;
    let run = run_eval(&cases_path(), &p, &index).await.unwrap();
    let r = &run.report;
    let totals: Vec<f64> = run.traces.iter().map(|(_, t)| t.timings_ms.total).collect();
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    assert!((r.latency_ms["total"].mean - mean).abs() < 1e-9);
    assert_eq!(r.latency_ms.len(), 6);
    assert_eq!(r.source_distribution, source_distribution(run.traces.iter().map(|(_, t)| t)));

    let ids: Vec<_> = r.verdicts.iter().map(|v| v.case_id.clone()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[tokio::test]
async fn reports_round_trip_and_are_deterministic() {
    let (p, index) = fixture().await;
    let a = run_eval(&cases_path(), &p, &index).await.unwrap().report;
    let b = run_eval(&cases_path(), &p, &index).await.unwrap().report;
    assert_eq!(a.metadata.config_hash, b.metadata.config_hash);
    let strip = |r: &EvalReport| r.verdicts.iter().map(|v| (v.case_id.clone(), v.status, v.passed)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(a.source_distribution, b.source_distribution);

    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("report.json");
    write_report(&a, &json_path, ReportFormat::from_path(&json_path)).unwrap();
    let back: EvalReport = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(back, a);

    let csv_path = dir.path().join("report.csv");
    assert_eq!(ReportFormat::from_path(&csv_path), ReportFormat::Csv);
    write_report(&a, &csv_path, ReportFormat::Csv).unwrap();
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(csv, report_to_csv(&a).unwrap());
    let case_rows = csv.lines().filter(|l| l.starts_with("case,")).count();
    assert_eq!(case_rows, a.metadata.cases);
    assert!(csv.lines().any(|l| l.starts_with("summary,,overall,")));
}

#[test]
fn malformed_lines_are_reported_not_fatal() {
    let raw = "{\"case_id\": \"a\", \"query_bn\": \"প্রশ্ন\", \"category\": \"other\", \"expected_status\": \"answered\"}\n\nnot json\n{\"case_id\": \"b\", \"query_bn\": \"\", \"category\": \"other\", \"expected_status\": \"answered\"}\n";
    let (cases, invalid) = parse_cases(raw);
    assert_eq!(cases.len(), 1);
    assert_eq!(invalid.iter().map(|i| i.line).collect::<Vec<_>>(), [3, 4]);
}
