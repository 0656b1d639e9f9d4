//! Replays categorized query fixtures through the pipeline and scores them.
//!
//! A case passes when the trace status equals `expected_status`, every
//! `expected_terms` entry appears (case-insensitively) in the enriched query
//! or the English answer, and the top-ranked hit comes from
//! `expected_source` when one is given.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::{source_distribution, AnswerTrace, Pipeline, Stage, Status};
use crate::VectorIndex;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    DiseaseDiagnosis,
    DosageInstruction,
    OutOfDomain,
    Other,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DiseaseDiagnosis => "disease_diagnosis",
            Self::DosageInstruction => "dosage_instruction",
            Self::OutOfDomain => "out_of_domain",
            Self::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    pub query_bn: String,
    pub category: Category,
    pub expected_status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_source: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected_terms: Vec<String>,
}

impl EvalCase {
    fn validate(&self) -> Result<(), String> {
        if self.case_id.trim().is_empty() {
            return Err("empty case_id".into());
        }
        if self.query_bn.trim().is_empty() {
            return Err("empty query_bn".into());
        }
        if self.category == Category::OutOfDomain && self.expected_status != Status::RejectedOutOfDomain {
            return Err("out_of_domain cases must expect rejected_out_of_domain".into());
        }
        Ok(())
    }

    /// Reasons this trace fails the case; empty means pass.
    pub fn check(&self, trace: &AnswerTrace) -> Vec<String> {
        let mut reasons = Vec::new();
        if trace.status != self.expected_status {
            reasons.push(format!("status {} != expected {}", trace.status, self.expected_status));
        }
        let haystack = format!("{}\n{}", trace.enriched_query, trace.answer_en).to_lowercase();
        for term in &self.expected_terms {
            if !haystack.contains(&term.to_lowercase()) {
                reasons.push(format!("term {term:?} missing"));
            }
        }
        if let Some(want) = &self.expected_source {
            match trace.top_source() {
                Some(got) if got == want => {}
                got => reasons.push(format!("top source {got:?} != expected {want:?}")),
            }
        }
        reasons
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidCase {
    pub line: usize,
    pub reason: String,
}

/// Parses a JSON-lines case file. Bad lines are reported, not fatal.
pub fn parse_cases(raw: &str) -> (Vec<EvalCase>, Vec<InvalidCase>) {
    let mut cases = Vec::new();
    let mut invalid = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<EvalCase>(line)
            .map_err(|e| e.to_string())
            .and_then(|c| c.validate().map(|()| c));
        match parsed {
            Ok(c) => cases.push(c),
            Err(reason) => invalid.push(InvalidCase { line: i + 1, reason }),
        }
    }
    (cases, invalid)
}

pub fn load_cases(path: &Path) -> Result<(Vec<EvalCase>, Vec<InvalidCase>), EvalError> {
    let raw = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(parse_cases(&raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub category: Category,
    pub expected_status: Status,
    pub status: Status,
    pub top_source: Option<String>,
    pub passed: bool,
    pub reasons: Vec<String>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub cases: usize,
    pub passed: usize,
    pub pass_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

impl TimingStats {
    /// Mean and nearest-rank percentiles; all zero for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self {
                mean: 0.0,
                p50: 0.0,
                p95: 0.0,
                max: 0.0,
            };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rank = |p: f64| sorted[((p / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1];
        Self {
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50: rank(50.0),
            p95: rank(95.0),
            max: sorted[sorted.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub started_at_unix: u64,
    pub cases: usize,
    pub invalid_cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub verdicts: Vec<CaseVerdict>,
    pub invalid: Vec<InvalidCase>,
    pub categories: BTreeMap<Category, CategorySummary>,
    pub overall_pass_rate: f64,
    /// Keyed by stage name plus `total`.
    pub latency_ms: BTreeMap<String, TimingStats>,
    pub source_distribution: BTreeMap<String, usize>,
}

/// A finished run: the report plus the traces it was computed from.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub traces: Vec<(String, AnswerTrace)>,
}

pub fn config_hash(pipeline: &Pipeline) -> String {
    let cfg = serde_json::to_vec(pipeline.config()).expect("config serializes");
    let mut h = Sha256::new();
    h.update(&cfg);
    for rule in pipeline.rulebook().rules() {
        h.update(rule.rule_id.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Loads the case file and runs every valid case once.
pub async fn run_eval(cases_path: &Path, pipeline: &Pipeline, index: &VectorIndex) -> Result<EvalRun, EvalError> {
    let (cases, invalid) = load_cases(cases_path)?;
    Ok(evaluate(&cases, invalid, pipeline, index).await)
}

pub async fn evaluate(cases: &[EvalCase], invalid: Vec<InvalidCase>, pipeline: &Pipeline, index: &VectorIndex) -> EvalRun {
    let started_at_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut traces = Vec::with_capacity(cases.len());
    for case in cases {
        let trace = pipeline.answer(&case.query_bn, index, None).await;
        traces.push((case.case_id.clone(), trace));
    }
    let report = assemble_report(cases, &traces, invalid, config_hash(pipeline), started_at_unix);
    EvalRun { report, traces }
}

fn assemble_report(
    cases: &[EvalCase],
    traces: &[(String, AnswerTrace)],
    invalid: Vec<InvalidCase>,
    config_hash: String,
    started_at_unix: u64,
) -> EvalReport {
    let mut verdicts: Vec<CaseVerdict> = cases
        .iter()
        .zip(traces)
        .map(|(case, (_, trace))| {
            let reasons = case.check(trace);
            CaseVerdict {
                case_id: case.case_id.clone(),
                category: case.category,
                expected_status: case.expected_status,
                status: trace.status,
                top_source: trace.top_source().map(str::to_string),
                passed: reasons.is_empty(),
                reasons,
                total_ms: trace.timings_ms.total,
            }
        })
        .collect();
    verdicts.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let mut categories: BTreeMap<Category, CategorySummary> = BTreeMap::new();
    for v in &verdicts {
        let s = categories.entry(v.category).or_insert(CategorySummary {
            cases: 0,
            passed: 0,
            pass_rate: 0.0,
        });
        s.cases += 1;
        s.passed += usize::from(v.passed);
    }
    for s in categories.values_mut() {
        s.pass_rate = s.passed as f64 / s.cases as f64;
    }
    let passed = verdicts.iter().filter(|v| v.passed).count();
    let overall_pass_rate = if verdicts.is_empty() {
        0.0
    } else {
        passed as f64 / verdicts.len() as f64
    };

    let mut latency_ms = BTreeMap::new();
    for stage in Stage::ALL {
        let samples: Vec<f64> = traces.iter().map(|(_, t)| t.timings_ms.get(stage)).collect();
        latency_ms.insert(stage.as_str().to_string(), TimingStats::from_samples(&samples));
    }
    let totals: Vec<f64> = traces.iter().map(|(_, t)| t.timings_ms.total).collect();
    latency_ms.insert("total".to_string(), TimingStats::from_samples(&totals));

    EvalReport {
        metadata: RunMetadata {
            config_hash,
            started_at_unix,
            cases: verdicts.len(),
            invalid_cases: invalid.len(),
        },
        verdicts,
        invalid,
        categories,
        overall_pass_rate,
        latency_ms,
        source_distribution: source_distribution(traces.iter().map(|(_, t)| t)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    /// `.csv` selects CSV; anything else is JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Json,
        }
    }
}

const CSV_HEADER: [&str; 9] = [
    "row_type",
    "case_id",
    "category",
    "expected_status",
    "status",
    "passed",
    "top_source",
    "total_ms",
    "detail",
];

/// One row per case, then one summary row per category and an overall row.
pub fn report_to_csv(report: &EvalReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for v in &report.verdicts {
        w.write_record([
            "case",
            &v.case_id,
            v.category.as_str(),
            v.expected_status.as_str(),
            v.status.as_str(),
            if v.passed { "true" } else { "false" },
            v.top_source.as_deref().unwrap_or(""),
            &format!("{:.3}", v.total_ms),
            &v.reasons.join("; "),
        ])?;
    }
    for (cat, s) in &report.categories {
        w.write_record([
            "summary",
            "",
            cat.as_str(),
            "",
            "",
            &format!("{:.4}", s.pass_rate),
            "",
            "",
            &format!("{}/{} passed", s.passed, s.cases),
        ])?;
    }
    let total = report.latency_ms.get("total").map_or(0.0, |t| t.mean);
    w.write_record([
        "summary",
        "",
        "overall",
        "",
        "",
        &format!("{:.4}", report.overall_pass_rate),
        "",
        &format!("{total:.3}"),
        &format!("{} cases, {} invalid", report.metadata.cases, report.metadata.invalid_cases),
    ])?;
    let bytes = w.into_inner().map_err(|e| EvalError::Io {
        path: "<csv buffer>".into(),
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn write_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    let body = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)?,
        ReportFormat::Csv => report_to_csv(report)?,
    };
    fs::write(path, body).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
