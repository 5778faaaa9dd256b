//! Misconfiguration suite runner and metrics aggregation.
//!
//! A suite file is one JSON header object (the mission plans) followed by
//! JSON-lines of cases; each case overrides a handful of parameters and
//! names the plan it flies. [`run_suite`] fans missions out to a bounded
//! worker pool and reduces the per-case results into a [`BenchReport`] that
//! is identical regardless of parallelism.

pub mod export;
pub mod gen;
pub mod metrics;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor::Advisor;
use crate::anomaly::{AnomalyType, DetectorConfig};
use crate::paramdb::{ParamRegistry, ParamSet};
use crate::repair::{
    run_mission, FailReason, MissionOutcome, MissionResult, OrchestratorConfig, RepairRecord,
};
use crate::sim::{SimConfig, SimVehicle};
use crate::telemetry::MissionPlan;

pub use metrics::{compute_anr, compute_rsr, Anr, Rsr};

/// One benchmark case: a misconfiguration overlaid on the defaults, flown on
/// a named plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCase {
    pub case_id: String,
    pub overrides: ParamSet,
    pub plan_id: String,
}

/// First line of a suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteHeader {
    pub plans: BTreeMap<String, MissionPlan>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub plans: BTreeMap<String, MissionPlan>,
    pub cases: Vec<BenchCase>,
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("cannot read suite file: {0}")]
    Io(#[from] std::io::Error),
    #[error("suite file is empty (expected a header line)")]
    MissingHeader,
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("plan {plan_id:?} is invalid: {detail}")]
    InvalidPlan { plan_id: String, detail: String },
    #[error("duplicate case_id {case_id:?}")]
    DuplicateCaseId { case_id: String },
    #[error("case {case_id:?} references unknown plan {plan_id:?}")]
    UnknownPlan { case_id: String, plan_id: String },
    #[error("case {case_id:?} overrides unknown parameter {name:?}")]
    UnknownParam { case_id: String, name: String },
    #[error("case {case_id:?} override {name}={value} is outside [{min}, {max}]")]
    OutOfRangeOverride { case_id: String, name: String, value: f64, min: f64, max: f64 },
}

/// Parse and validate a suite: unique case ids, resolvable plans, known
/// in-range override parameters.
pub fn parse_suite(text: &str, registry: &ParamRegistry) -> Result<Suite, SuiteError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines.next().ok_or(SuiteError::MissingHeader)?;
    let header: SuiteHeader = serde_json::from_str(header_line)
        .map_err(|source| SuiteError::Parse { line: 1, source })?;
    for (plan_id, plan) in &header.plans {
        plan.check().map_err(|e| SuiteError::InvalidPlan {
            plan_id: plan_id.clone(),
            detail: e.to_string(),
        })?;
    }

    let mut seen = BTreeSet::new();
    let mut cases = Vec::new();
    for (i, line) in lines {
        let case: BenchCase = serde_json::from_str(line)
            .map_err(|source| SuiteError::Parse { line: i + 1, source })?;
        if !seen.insert(case.case_id.clone()) {
            return Err(SuiteError::DuplicateCaseId { case_id: case.case_id });
        }
        if !header.plans.contains_key(&case.plan_id) {
            return Err(SuiteError::UnknownPlan {
                case_id: case.case_id,
                plan_id: case.plan_id,
            });
        }
        for (name, value) in case.overrides.iter() {
            let Some(spec) = registry.get(name) else {
                return Err(SuiteError::UnknownParam {
                    case_id: case.case_id.clone(),
                    name: name.to_string(),
                });
            };
            if !value.is_finite() || value < spec.min || value > spec.max {
                return Err(SuiteError::OutOfRangeOverride {
                    case_id: case.case_id.clone(),
                    name: name.to_string(),
                    value,
                    min: spec.min,
                    max: spec.max,
                });
            }
        }
        cases.push(case);
    }
    Ok(Suite { plans: header.plans, cases })
}

pub fn load_suite(path: impl AsRef<Path>, registry: &ParamRegistry) -> Result<Suite, SuiteError> {
    parse_suite(&std::fs::read_to_string(path)?, registry)
}

/// Serialize a suite back to the header + JSON-lines format.
pub fn suite_to_jsonl(suite: &Suite) -> String {
    let mut out = serde_json::to_string(&SuiteHeader { plans: suite.plans.clone() })
        .expect("suite header serializes");
    out.push('\n');
    for case in &suite.cases {
        out.push_str(&serde_json::to_string(case).expect("case serializes"));
        out.push('\n');
    }
    out
}

/// Per-case result summary carried in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub result: MissionResult,
    pub repair_count: u32,
    pub anomalies: Vec<AnomalyType>,
}

impl CaseSummary {
    pub fn from_record(case_id: &str, record: &RepairRecord) -> Self {
        Self {
            case_id: case_id.to_string(),
            result: record.result.clone(),
            repair_count: record.repair_count,
            anomalies: record.anomaly_record.clone(),
        }
    }

    /// Triggered means at least one repair cycle was serviced.
    pub fn triggered(&self) -> bool {
        self.repair_count >= 1
    }

    /// Counts toward NRC: a repair was triggered and the mission passed.
    pub fn successfully_repaired(&self) -> bool {
        self.triggered() && self.result.passed()
    }
}

/// Histogram bucket: missions that took this many repairs, split by outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub passed: u64,
    pub failed: u64,
}

/// Suite-level aggregates. Deliberately free of timestamps and run ids so
/// equal runs serialize byte-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Total cases (TTC).
    pub ttc: u64,
    /// Cases where at least one repair cycle ran.
    pub triggered: u64,
    /// Successfully repaired cases (triggered and passed; NRC).
    pub nrc: u64,
    /// Total repair attempts across successfully repaired cases (TRA).
    pub tra: u64,
    /// NRC/TTC as a rounded integer percentage; `None` when ttc is 0.
    pub rsr_percent: Option<u64>,
    /// Unrounded NRC/TTC.
    pub rsr_raw: Option<f64>,
    /// NRC over triggered cases, rounded percentage.
    pub rsr_over_triggered_percent: Option<u64>,
    pub rsr_over_triggered_raw: Option<f64>,
    /// TRA/NRC displayed to two decimals; `None` when nrc is 0.
    pub anr: Option<String>,
    pub anr_raw: Option<f64>,
    pub histogram: BTreeMap<u32, Bucket>,
    pub per_case: Vec<CaseSummary>,
}

/// Order-independent reduction of per-case summaries into the report.
pub fn aggregate(per_case: Vec<CaseSummary>) -> BenchReport {
    let ttc = per_case.len() as u64;
    let mut triggered = 0u64;
    let mut nrc = 0u64;
    let mut tra = 0u64;
    let mut histogram: BTreeMap<u32, Bucket> = BTreeMap::new();
    for case in &per_case {
        let bucket = histogram.entry(case.repair_count).or_default();
        if case.result.passed() {
            bucket.passed += 1;
        } else {
            bucket.failed += 1;
        }
        if case.triggered() {
            triggered += 1;
        }
        if case.successfully_repaired() {
            nrc += 1;
            tra += case.repair_count as u64;
        }
    }
    let rsr = compute_rsr(nrc, ttc);
    let rsr_triggered = compute_rsr(nrc, triggered);
    let anr = compute_anr(tra, nrc);
    BenchReport {
        ttc,
        triggered,
        nrc,
        tra,
        rsr_percent: rsr.map(|r| r.percent_rounded()),
        rsr_raw: rsr.map(|r| r.raw_fraction()),
        rsr_over_triggered_percent: rsr_triggered.map(|r| r.percent_rounded()),
        rsr_over_triggered_raw: rsr_triggered.map(|r| r.raw_fraction()),
        anr: anr.map(|a| a.display_2dp()),
        anr_raw: anr.map(|a| a.raw()),
        histogram,
        per_case,
    }
}

/// How to run a suite.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker pool size; 1 runs strictly sequentially.
    pub parallelism: usize,
    /// Keep every mission's trace and audit log in memory (invariant sweeps
    /// and demos; off for large suites).
    pub keep_outcomes: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { parallelism: 1, keep_outcomes: false }
    }
}

/// Report plus optionally-retained raw outcomes, case order preserved.
pub struct SuiteRun {
    pub report: BenchReport,
    pub outcomes: Option<Vec<MissionOutcome>>,
}

/// Everything a suite run needs besides the suite itself.
pub struct SuiteContext<'a> {
    pub advisor: &'a Advisor,
    pub registry: Arc<ParamRegistry>,
    pub detector: DetectorConfig,
    pub orchestrator: OrchestratorConfig,
    pub sim: SimConfig,
}

/// Run every case through the repair orchestrator on its own simulator
/// instance. Infrastructure faults become `failed(infra: ...)` summaries and
/// never abort the suite. Deterministic advisors yield identical reports for
/// any parallelism.
pub fn run_suite(
    suite: &Suite,
    ctx: &SuiteContext<'_>,
    options: &RunOptions,
) -> Result<SuiteRun, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .map_err(|e| format!("worker pool: {e}"))?;

    let results: Vec<(CaseSummary, Option<MissionOutcome>)> = pool.install(|| {
        suite
            .cases
            .par_iter()
            .enumerate()
            .map(|(index, case)| run_case(suite, ctx, options, index, case))
            .collect()
    });

    let mut summaries = Vec::with_capacity(results.len());
    let mut outcomes = options.keep_outcomes.then(Vec::new);
    for (summary, outcome) in results {
        summaries.push(summary);
        if let (Some(list), Some(outcome)) = (outcomes.as_mut(), outcome) {
            list.push(outcome);
        }
    }
    Ok(SuiteRun { report: aggregate(summaries), outcomes })
}

fn run_case(
    suite: &Suite,
    ctx: &SuiteContext<'_>,
    options: &RunOptions,
    index: usize,
    case: &BenchCase,
) -> (CaseSummary, Option<MissionOutcome>) {
    // Stable per-case seed so reruns and parallelism cannot reorder anything.
    let mut sim_config = ctx.sim.clone();
    sim_config.seed = ctx.sim.seed.wrapping_add(index as u64);

    let infra = |detail: String| CaseSummary {
        case_id: case.case_id.clone(),
        result: MissionResult::Failed(FailReason::Infra(detail)),
        repair_count: 0,
        anomalies: Vec::new(),
    };

    let Some(plan) = suite.plans.get(&case.plan_id) else {
        return (infra(format!("plan {:?} not in the suite header", case.plan_id)), None);
    };

    let mut link = match SimVehicle::new(Arc::clone(&ctx.registry), sim_config) {
        Ok(link) => link,
        Err(e) => return (infra(e.to_string()), None),
    };
    let p_initial = ctx.registry.defaults().merged(&case.overrides);
    match run_mission(
        &mut link,
        &p_initial,
        plan,
        ctx.advisor,
        &ctx.registry,
        &ctx.detector,
        &ctx.orchestrator,
    ) {
        Ok(outcome) => {
            let summary = CaseSummary::from_record(&case.case_id, &outcome.record);
            (summary, options.keep_outcomes.then_some(outcome))
        }
        Err(e) => (infra(e.to_string()), None),
    }
}
