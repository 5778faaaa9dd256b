//! Report and trace file writers: stable field order, deterministic bytes.

use std::io::Write;
use std::path::Path;

use super::BenchReport;
use crate::repair::TraceLine;

fn csv_field(value: &str) -> String {
    if value.contains([',', '"', '\n']) {
        format!("\"{}\"", value.replace('"', "\"\""))
    } else {
        value.to_string()
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    match v {
        Some(v) => v.to_string(),
        None => "undefined".to_string(),
    }
}

/// Per-case rows under a fixed header, then an aggregate footer of
/// `# key=value` lines.
pub fn report_to_csv(report: &BenchReport) -> String {
    let mut out = String::from("case_id,result,repair_count,anomalies\n");
    for case in &report.per_case {
        let anomalies = case
            .anomalies
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{},{},{}\n",
            csv_field(&case.case_id),
            csv_field(&case.result.to_string()),
            case.repair_count,
            csv_field(&anomalies),
        ));
    }
    out.push_str(&format!("# ttc={}\n", report.ttc));
    out.push_str(&format!("# triggered={}\n", report.triggered));
    out.push_str(&format!("# nrc={}\n", report.nrc));
    out.push_str(&format!("# tra={}\n", report.tra));
    out.push_str(&format!("# rsr_percent={}\n", fmt_opt(&report.rsr_percent)));
    out.push_str(&format!(
        "# rsr_over_triggered_percent={}\n",
        fmt_opt(&report.rsr_over_triggered_percent)
    ));
    out.push_str(&format!("# anr={}\n", fmt_opt(&report.anr)));
    out
}

/// Pretty JSON plus trailing newline.
pub fn report_to_json(report: &BenchReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_report_json(report: &BenchReport, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, report_to_json(report))
}

pub fn write_report_csv(report: &BenchReport, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, report_to_csv(report))
}

/// Trace file: one JSON line per telemetry event or anomaly/upload marker,
/// in stream order.
pub fn trace_to_jsonl(trace: &[TraceLine]) -> String {
    let mut out = String::new();
    for line in trace {
        out.push_str(&serde_json::to_string(line).expect("trace line serializes"));
        out.push('\n');
    }
    out
}

pub fn write_trace(trace: &[TraceLine], path: impl AsRef<Path>) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    writer.write_all(trace_to_jsonl(trace).as_bytes())?;
    writer.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anomaly::AnomalyType;
    use crate::bench::{aggregate, CaseSummary};
    use crate::repair::{FailReason, MissionResult, TraceMarker};
    use crate::telemetry::TelemetryEvent;

    fn sample_report() -> BenchReport {
        aggregate(vec![
            CaseSummary {
                case_id: "alpha".into(),
                result: MissionResult::Passed,
                repair_count: 1,
                anomalies: vec![AnomalyType::Deviation],
            },
            CaseSummary {
                case_id: "bravo".into(),
                result: MissionResult::Failed(FailReason::RepairLimit),
                repair_count: 5,
                anomalies: vec![AnomalyType::Timeout; 5],
            },
            CaseSummary {
                case_id: "quiet".into(),
                result: MissionResult::Passed,
                repair_count: 0,
                anomalies: vec![],
            },
        ])
    }

    #[test]
    fn csv_matches_golden() {
        let csv = report_to_csv(&sample_report());
        let golden = include_str!("../../data/golden/report_sample.csv");
        assert_eq!(csv, golden);
    }

    #[test]
    fn zero_case_report_is_header_and_footer_only() {
        let report = aggregate(vec![]);
        let csv = report_to_csv(&report);
        assert!(csv.starts_with("case_id,result,repair_count,anomalies\n# ttc=0\n"));
        assert!(csv.contains("# rsr_percent=undefined\n"));
        assert!(csv.contains("# anr=undefined\n"));
    }

    #[test]
    fn csv_quotes_awkward_fields() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn trace_jsonl_lines_parse_back() {
        let trace = vec![
            TraceLine::Event(TelemetryEvent::Landed { t: 5.0 }),
            TraceLine::Marker(TraceMarker::Anomaly {
                t: 1.0,
                kind: AnomalyType::Crash,
                detail: "x".into(),
            }),
        ];
        let text = trace_to_jsonl(&trace);
        let back: Vec<TraceLine> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(back, trace);
    }
}
