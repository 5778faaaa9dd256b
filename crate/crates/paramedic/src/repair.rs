//! The monitor→detect→advise→upload orchestrator.
//!
//! One mission per call: start the vehicle with the initial configuration,
//! feed every telemetry event to the detectors, and on each detection query
//! the advisor, upload the fix and keep monitoring. The loop ends when the
//! vehicle lands, the repair limit is exhausted, the mission times out, or
//! the vehicle is lost; the outcome is captured in a [`RepairRecord`] plus a
//! replayable trace and an advisor audit log — never thrown.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::advisor::{build_prompt, parse_response, Advisor, AuditEntry, RepairAdvice};
use crate::anomaly::{AnomalyEvent, AnomalyType, DetectorConfig, DetectorState};
use crate::paramdb::{ParamRegistry, ParamSet};
use crate::telemetry::{
    AbortReason, FinalStatus, LinkError, MissionPlan, TelemetryEvent, VehicleLink,
};
use crate::Scalar;

/// Loop bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    /// Maximum repair cycles per mission.
    pub repair_limit: u32,
    /// Virtual-time budget per mission, seconds.
    pub mission_timeout_s: Scalar,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self { repair_limit: 5, mission_timeout_s: 600.0 }
    }
}

impl OrchestratorConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.repair_limit < 1 {
            return Err("repair_limit must be at least 1".into());
        }
        if !self.mission_timeout_s.is_finite() || self.mission_timeout_s <= 0.0 {
            return Err("mission_timeout_s must be positive".into());
        }
        Ok(())
    }
}

/// Why a mission failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailReason {
    RepairLimit,
    Timeout,
    Crash,
    Infra(String),
}

/// Mission outcome: passed means landed at the destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MissionResult {
    Passed,
    Failed(FailReason),
}

impl MissionResult {
    pub fn passed(&self) -> bool {
        matches!(self, MissionResult::Passed)
    }
}

impl fmt::Display for MissionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MissionResult::Passed => f.write_str("passed"),
            MissionResult::Failed(FailReason::RepairLimit) => f.write_str("failed(repair-limit)"),
            MissionResult::Failed(FailReason::Timeout) => f.write_str("failed(timeout)"),
            MissionResult::Failed(FailReason::Crash) => f.write_str("failed(crash)"),
            MissionResult::Failed(FailReason::Infra(detail)) => {
                write!(f, "failed(infra: {detail})")
            }
        }
    }
}

impl FromStr for MissionResult {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passed" => Ok(MissionResult::Passed),
            "failed(repair-limit)" => Ok(MissionResult::Failed(FailReason::RepairLimit)),
            "failed(timeout)" => Ok(MissionResult::Failed(FailReason::Timeout)),
            "failed(crash)" => Ok(MissionResult::Failed(FailReason::Crash)),
            other => {
                if let Some(detail) = other
                    .strip_prefix("failed(infra: ")
                    .and_then(|rest| rest.strip_suffix(')'))
                {
                    Ok(MissionResult::Failed(FailReason::Infra(detail.to_string())))
                } else {
                    Err(format!("unknown mission result {other:?}"))
                }
            }
        }
    }
}

impl Serialize for MissionResult {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for MissionResult {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The per-mission output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub p_initial: ParamSet,
    pub result: MissionResult,
    /// One entry per serviced repair cycle, in order.
    pub anomaly_record: Vec<AnomalyType>,
    pub repair_count: u32,
    /// One entry per repair cycle; failed advisor attempts leave an
    /// empty-update sentinel.
    pub advice_log: Vec<RepairAdvice>,
    pub final_params: ParamSet,
}

impl RepairRecord {
    pub fn check_invariants(&self, repair_limit: u32) -> Result<(), String> {
        if self.repair_count as usize != self.anomaly_record.len() {
            return Err(format!(
                "repair_count {} != anomaly_record length {}",
                self.repair_count,
                self.anomaly_record.len()
            ));
        }
        if self.repair_count as usize != self.advice_log.len() {
            return Err(format!(
                "repair_count {} != advice_log length {}",
                self.repair_count,
                self.advice_log.len()
            ));
        }
        if self.repair_count > repair_limit {
            return Err(format!(
                "repair_count {} exceeds limit {repair_limit}",
                self.repair_count
            ));
        }
        Ok(())
    }
}

/// One line of the mission trace file: a telemetry event, or an
/// anomaly/upload marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TraceLine {
    Event(TelemetryEvent),
    Marker(TraceMarker),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceMarker {
    Anomaly { t: Scalar, kind: AnomalyType, detail: String },
    Upload { t: Scalar, params: ParamSet },
}

/// Everything one mission produced.
#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub record: RepairRecord,
    pub trace: Vec<TraceLine>,
    pub audit: Vec<AuditEntry>,
}

/// Failures before the mission starts; anything later lands in the record.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Map union, updates winning. The cumulative configuration handed to each
/// prompt is `merge` of everything uploaded so far onto the initial set.
pub fn merge(current: &ParamSet, updates: &ParamSet) -> ParamSet {
    current.merged(updates)
}

fn wall_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Run one mission end to end.
pub fn run_mission(
    link: &mut dyn VehicleLink,
    p_initial: &ParamSet,
    plan: &MissionPlan,
    advisor: &Advisor,
    registry: &ParamRegistry,
    detector_config: &DetectorConfig,
    config: &OrchestratorConfig,
) -> Result<MissionOutcome, RunError> {
    config.check().map_err(RunError::Config)?;
    detector_config.check().map_err(RunError::Config)?;
    registry.validate(p_initial).map_err(LinkError::from)?;
    plan.check().map_err(LinkError::from)?;

    let mut handle = link.start_mission(p_initial, plan)?;
    let mut detector = DetectorState::new(plan);
    let mut p_current = p_initial.clone();
    let mut repair_count: u32 = 0;
    let mut anomaly_record: Vec<AnomalyType> = Vec::new();
    let mut advice_log: Vec<RepairAdvice> = Vec::new();
    let mut trace: Vec<TraceLine> = Vec::new();
    let mut audit: Vec<AuditEntry> = Vec::new();
    let mut landed = false;
    let mut fail: Option<FailReason> = None;

    'mission: while fail.is_none() && !landed && repair_count < config.repair_limit {
        let Some(event) = handle.next_event() else {
            break; // stream closed; the final status tells the story
        };
        trace.push(TraceLine::Event(event.clone()));

        match &event {
            TelemetryEvent::Landed { .. } => {
                landed = true;
                continue;
            }
            TelemetryEvent::MissionTimeout { .. } => {
                fail = Some(FailReason::Timeout);
                continue;
            }
            _ => {}
        }
        if event.t() > config.mission_timeout_s {
            fail = Some(FailReason::Timeout);
            continue;
        }

        let anomaly = match detector.update(detector_config, &event, plan) {
            Ok(result) => result,
            Err(protocol) => {
                fail = Some(FailReason::Infra(protocol.to_string()));
                continue;
            }
        };
        let Some(anomaly) = anomaly else { continue };
        trace.push(TraceLine::Marker(TraceMarker::Anomaly {
            t: anomaly.t,
            kind: anomaly.kind,
            detail: anomaly.detail.clone(),
        }));

        // A detection on a vehicle that is already down (ground impact)
        // cannot be repaired: the mission is over, and the cycle is not
        // counted as a repair attempt.
        if !handle.is_active() {
            break 'mission;
        }

        service_repair(
            &anomaly,
            handle.as_mut(),
            advisor,
            registry,
            &mut p_current,
            &mut advice_log,
            &mut audit,
            &mut trace,
        );
        repair_count += 1;
        anomaly_record.push(anomaly.kind);
    }

    let final_status = handle.stop();
    let result = if let Some(reason) = fail {
        MissionResult::Failed(reason)
    } else if landed || final_status == FinalStatus::LandedAtDestination {
        MissionResult::Passed
    } else {
        match final_status {
            FinalStatus::Crashed => MissionResult::Failed(FailReason::Crash),
            FinalStatus::Aborted(AbortReason::Timeout) => MissionResult::Failed(FailReason::Timeout),
            _ if repair_count >= config.repair_limit => {
                MissionResult::Failed(FailReason::RepairLimit)
            }
            other => MissionResult::Failed(FailReason::Infra(format!(
                "mission ended without landing: {other:?}"
            ))),
        }
    };

    let record = RepairRecord {
        p_initial: p_initial.clone(),
        result,
        anomaly_record,
        repair_count,
        advice_log,
        final_params: p_current,
    };
    debug_assert!(record.check_invariants(config.repair_limit).is_ok());
    Ok(MissionOutcome { record, trace, audit })
}

/// One repair cycle: prompt → advisor → parse → upload. Failed attempts
/// (transport, parse, rejection) still consume the cycle; the advice log
/// records an empty sentinel so the record stays accountable.
#[allow(clippy::too_many_arguments)]
fn service_repair(
    anomaly: &AnomalyEvent,
    handle: &mut dyn crate::telemetry::MissionHandle,
    advisor: &Advisor,
    registry: &ParamRegistry,
    p_current: &mut ParamSet,
    advice_log: &mut Vec<RepairAdvice>,
    audit: &mut Vec<AuditEntry>,
    trace: &mut Vec<TraceLine>,
) {
    let prompt = build_prompt(anomaly.kind, p_current, registry);
    let mut entry = AuditEntry {
        wall_time_unix: wall_now(),
        mission_t: anomaly.t,
        anomaly: anomaly.kind,
        backend: advisor.backend_label(),
        prompt: prompt.text.clone(),
        raw_response: None,
        advice: None,
        error: None,
    };

    let advice = match advisor.query(&prompt) {
        Ok(raw) => {
            entry.raw_response = Some(raw.clone());
            match parse_response(&raw, registry, advisor.strict_advice()) {
                Ok(advice) => Some(advice),
                Err(e) => {
                    entry.error = Some(e.to_string());
                    advice_log.push(RepairAdvice::empty_sentinel(e.to_string()));
                    None
                }
            }
        }
        Err(e) => {
            entry.error = Some(e.to_string());
            advice_log.push(RepairAdvice::empty_sentinel(e.to_string()));
            None
        }
    };

    if let Some(advice) = advice {
        match handle.upload_params(&advice.updates) {
            Ok(ack) => {
                trace.push(TraceLine::Marker(TraceMarker::Upload {
                    t: ack.effective_t,
                    params: advice.updates.clone(),
                }));
                *p_current = merge(p_current, &advice.updates);
                entry.advice = Some(advice.clone());
            }
            Err(e) => {
                // The vehicle went away mid-cycle; the attempt still counts.
                entry.error = Some(format!("upload failed: {e}"));
            }
        }
        advice_log.push(advice);
    }
    audit.push(entry);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::{AdvisorBackend, BackendError, MockBackend, MockMode, RepairPrompt};
    use crate::sim::fault::FaultTable;
    use crate::sim::{square_demo_plan, SimConfig, SimVehicle};
    use crate::Vec3;
    use std::sync::Arc;

    fn registry() -> Arc<ParamRegistry> {
        Arc::new(ParamRegistry::builtin().clone())
    }

    fn mock_advisor(mode: MockMode) -> Advisor {
        Advisor::new(
            Box::new(MockBackend::new(
                mode,
                registry(),
                Arc::new(FaultTable::builtin().clone()),
            )),
            2,
        )
    }

    fn sim() -> SimVehicle {
        SimVehicle::new(registry(), SimConfig::default()).unwrap()
    }

    fn fault_value(name: &str, severity: f64) -> (String, f64) {
        let registry = ParamRegistry::builtin();
        let spec = registry.get(name).unwrap();
        let entry = FaultTable::builtin().get(name).unwrap();
        (name.to_string(), entry.optimal + severity * 0.25 * spec.range())
    }

    fn run(
        params: ParamSet,
        advisor: &Advisor,
    ) -> MissionOutcome {
        let mut link = sim();
        run_mission(
            &mut link,
            &params,
            &square_demo_plan(),
            advisor,
            ParamRegistry::builtin(),
            &DetectorConfig::default(),
            &OrchestratorConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn merge_prefers_updates_and_keeps_identities() {
        let a: ParamSet = [("a", 1.0), ("b", 2.0)].into_iter().collect();
        let b: ParamSet = [("b", 3.0)].into_iter().collect();
        assert_eq!(
            merge(&a, &b),
            [("a", 1.0), ("b", 3.0)].into_iter().collect::<ParamSet>()
        );
        assert_eq!(merge(&a, &ParamSet::new()), a);
        assert_eq!(merge(&ParamSet::new(), &b), b);
    }

    #[test]
    fn benign_mission_passes_with_zero_repairs() {
        let outcome = run(ParamSet::new(), &mock_advisor(MockMode::Optimal));
        let record = &outcome.record;
        assert_eq!(record.result, MissionResult::Passed);
        assert_eq!(record.repair_count, 0);
        assert!(record.anomaly_record.is_empty());
        assert!(record.advice_log.is_empty());
        assert!(outcome.audit.is_empty());
    }

    #[test]
    fn deviation_with_optimal_oracle_repairs_in_one_attempt() {
        let (name, value) = fault_value("ATC_RAT_RLL_P", 1.5);
        let params: ParamSet = [(name, value)].into_iter().collect();
        let outcome = run(params, &mock_advisor(MockMode::Optimal));
        let record = &outcome.record;
        assert_eq!(record.result, MissionResult::Passed);
        assert_eq!(record.repair_count, 1);
        assert_eq!(record.anomaly_record, vec![AnomalyType::Deviation]);
        assert_eq!(record.final_params.get("ATC_RAT_RLL_P"), Some(0.135));
        // Trace markers: anomaly then upload.
        let markers: Vec<_> = outcome
            .trace
            .iter()
            .filter_map(|l| match l {
                TraceLine::Marker(m) => Some(m.clone()),
                _ => None,
            })
            .collect();
        assert!(matches!(markers[0], TraceMarker::Anomaly { kind: AnomalyType::Deviation, .. }));
        assert!(matches!(markers[1], TraceMarker::Upload { .. }));
        assert_eq!(outcome.audit.len(), 1);
        assert!(outcome.audit[0].error.is_none());
    }

    #[test]
    fn noop_oracle_exhausts_the_repair_limit() {
        let (name, value) = fault_value("WPNAV_SPEED", 1.6);
        let params: ParamSet = [(name, value)].into_iter().collect();
        let outcome = run(params, &mock_advisor(MockMode::Noop));
        let record = &outcome.record;
        assert_eq!(record.result, MissionResult::Failed(FailReason::RepairLimit));
        assert_eq!(record.repair_count, 5);
        assert_eq!(record.anomaly_record.len(), 5);
        assert_eq!(record.advice_log.len(), 5);
        assert!(record.anomaly_record.iter().all(|k| *k == AnomalyType::Timeout));
    }

    struct ProseBackend;

    impl AdvisorBackend for ProseBackend {
        fn complete(&self, _prompt: &RepairPrompt) -> Result<String, BackendError> {
            Ok("I am sorry, I cannot advise on flight parameters.".to_string())
        }
        fn label(&self) -> String {
            "prose".into()
        }
    }

    #[test]
    fn unparseable_advice_still_consumes_repair_cycles() {
        let (name, value) = fault_value("MOT_SPIN_MIN", 1.5);
        let params: ParamSet = [(name, value)].into_iter().collect();
        let advisor = Advisor::new(Box::new(ProseBackend), 0);
        let outcome = run(params, &advisor);
        let record = &outcome.record;
        assert_eq!(record.result, MissionResult::Failed(FailReason::RepairLimit));
        assert_eq!(record.repair_count, 5);
        assert!(record.advice_log.iter().all(|a| a.updates.is_empty()));
        assert!(outcome.audit.iter().all(|e| e.error.is_some()));
    }

    #[test]
    fn terminal_crash_fails_without_consuming_a_repair() {
        let (name, value) = fault_value("PSC_POSZ_P", 2.5);
        let params: ParamSet = [(name, value)].into_iter().collect();
        let outcome = run(params, &mock_advisor(MockMode::Optimal));
        let record = &outcome.record;
        assert_eq!(record.result, MissionResult::Failed(FailReason::Crash));
        assert_eq!(record.repair_count, 0);
        assert!(record.anomaly_record.is_empty());
        // The crash is still recorded in the trace.
        assert!(outcome.trace.iter().any(|l| matches!(
            l,
            TraceLine::Marker(TraceMarker::Anomaly { kind: AnomalyType::Crash, .. })
        )));
    }

    #[test]
    fn mission_timeout_fails_without_repairs() {
        let plan = crate::telemetry::MissionPlan::new(
            vec![Vec3::new(0.0, 0.0, 15.0), Vec3::new(8000.0, 0.0, 15.0)],
            8.0,
        )
        .unwrap();
        let mut link = sim();
        let outcome = run_mission(
            &mut link,
            &ParamSet::new(),
            &plan,
            &mock_advisor(MockMode::Optimal),
            ParamRegistry::builtin(),
            &DetectorConfig::default(),
            &OrchestratorConfig::default(),
        )
        .unwrap();
        assert_eq!(outcome.record.result, MissionResult::Failed(FailReason::Timeout));
        assert_eq!(outcome.record.repair_count, 0);
    }

    #[test]
    fn every_upload_in_the_trace_validates() {
        let (n1, v1) = fault_value("ATC_RAT_RLL_P", 2.5);
        let (n2, v2) = fault_value("MOT_SPIN_MIN", 1.6);
        let params: ParamSet = [(n1, v1), (n2, v2)].into_iter().collect();
        let outcome = run(params, &mock_advisor(MockMode::Partial));
        let registry = ParamRegistry::builtin();
        let mut uploads = 0;
        for line in &outcome.trace {
            if let TraceLine::Marker(TraceMarker::Upload { params, .. }) = line {
                registry.validate(params).unwrap();
                uploads += 1;
            }
        }
        assert!(uploads >= 2, "expected multiple uploads, saw {uploads}");
        outcome.record.check_invariants(5).unwrap();
    }

    #[test]
    fn mission_result_round_trips_through_strings() {
        for result in [
            MissionResult::Passed,
            MissionResult::Failed(FailReason::RepairLimit),
            MissionResult::Failed(FailReason::Timeout),
            MissionResult::Failed(FailReason::Crash),
            MissionResult::Failed(FailReason::Infra("socket closed".into())),
        ] {
            let s = result.to_string();
            assert_eq!(s.parse::<MissionResult>().unwrap(), result, "{s}");
            let json = serde_json::to_string(&result).unwrap();
            let back: MissionResult = serde_json::from_str(&json).unwrap();
            assert_eq!(back, result);
        }
    }

    #[test]
    fn invalid_initial_params_never_start_the_mission() {
        let params: ParamSet = [("FOO_BAR", 1.0)].into_iter().collect();
        let mut link = sim();
        let err = run_mission(
            &mut link,
            &params,
            &square_demo_plan(),
            &mock_advisor(MockMode::Optimal),
            ParamRegistry::builtin(),
            &DetectorConfig::default(),
            &OrchestratorConfig::default(),
        );
        assert!(matches!(err, Err(RunError::Link(LinkError::Validation(_)))));
    }

    #[test]
    fn trace_lines_round_trip_as_json() {
        let lines = vec![
            TraceLine::Event(TelemetryEvent::Landed { t: 4.0 }),
            TraceLine::Marker(TraceMarker::Anomaly {
                t: 2.0,
                kind: AnomalyType::Deviation,
                detail: "cross-track 12.00 m".into(),
            }),
            TraceLine::Marker(TraceMarker::Upload {
                t: 2.1,
                params: [("LAND_SPEED", 50.0)].into_iter().collect(),
            }),
        ];
        for line in lines {
            let s = serde_json::to_string(&line).unwrap();
            let back: TraceLine = serde_json::from_str(&s).unwrap();
            assert_eq!(back, line, "{s}");
        }
    }
}
