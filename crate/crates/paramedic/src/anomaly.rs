//! The four runtime anomaly detectors, implemented as an incremental stream
//! processor with consecutive-instance counters.
//!
//! * **Deviation** — perpendicular (Heron) distance from the active
//!   trajectory leg above a threshold for more than N consecutive samples.
//! * **Thrust Loss** — a status message containing the thrust-loss keyword.
//! * **Timeout** — the vehicle stationary (low speed, flat altitude) for more
//!   than N consecutive samples, outside takeoff and landing phases.
//! * **Crash** — a status message containing a crash keyword while the most
//!   recent sample shows an impact-grade speed.
//!
//! One [`DetectorState`] per mission; feed it every telemetry event in order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::point_to_leg_distance;
use crate::telemetry::{MissionPlan, TelemetryEvent};
use crate::Scalar;

/// The four anomaly categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnomalyType {
    Deviation,
    ThrustLoss,
    Timeout,
    Crash,
}

pub const ANOMALY_TYPES: [AnomalyType; 4] = [
    AnomalyType::Deviation,
    AnomalyType::ThrustLoss,
    AnomalyType::Timeout,
    AnomalyType::Crash,
];

impl AnomalyType {
    fn slot(self) -> usize {
        match self {
            AnomalyType::Deviation => 0,
            AnomalyType::ThrustLoss => 1,
            AnomalyType::Timeout => 2,
            AnomalyType::Crash => 3,
        }
    }
}

impl fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyType::Deviation => "Deviation",
            AnomalyType::ThrustLoss => "Thrust Loss",
            AnomalyType::Timeout => "Timeout",
            AnomalyType::Crash => "Crash",
        })
    }
}

/// Detector thresholds. Defaults follow the monitored rules: 10 m deviation
/// over more than 10 consecutive samples, stationary below 1 m/s with less
/// than 0.2 m altitude variation over more than 6 consecutive samples, and
/// the flight-stack keyword strings matched case-sensitively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub deviation_threshold_m: Scalar,
    pub deviation_consecutive: u32,
    pub timeout_speed_mps: Scalar,
    pub timeout_alt_delta_m: Scalar,
    pub timeout_consecutive: u32,
    pub crash_impact_speed_mps: Scalar,
    pub thrust_loss_keyword: String,
    pub crash_keywords: Vec<String>,
    /// Seconds of virtual time a detector stays quiet after firing, so an
    /// uploaded fix gets a chance to act before the same rule re-fires.
    pub cooldown_s: Scalar,
    /// Seconds after mission start during which the stationary rule is
    /// suppressed (takeoff); it is also suppressed after the final waypoint.
    pub takeoff_grace_s: Scalar,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            deviation_threshold_m: 10.0,
            deviation_consecutive: 10,
            timeout_speed_mps: 1.0,
            timeout_alt_delta_m: 0.2,
            timeout_consecutive: 6,
            crash_impact_speed_mps: 3.0,
            thrust_loss_keyword: "Potential Thrust Loss".to_string(),
            crash_keywords: vec!["SIM Hit ground".to_string(), "Crash".to_string()],
            cooldown_s: 5.0,
            takeoff_grace_s: 5.0,
        }
    }
}

impl DetectorConfig {
    pub fn check(&self) -> Result<(), String> {
        let positive = [
            ("deviation_threshold_m", self.deviation_threshold_m),
            ("timeout_speed_mps", self.timeout_speed_mps),
            ("timeout_alt_delta_m", self.timeout_alt_delta_m),
            ("crash_impact_speed_mps", self.crash_impact_speed_mps),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("{name} must be strictly positive, got {v}"));
            }
        }
        if self.deviation_consecutive < 1 || self.timeout_consecutive < 1 {
            return Err("consecutive counts must be at least 1".into());
        }
        if self.cooldown_s < 0.0 || self.takeoff_grace_s < 0.0 {
            return Err("cooldown and takeoff grace must be non-negative".into());
        }
        if self.thrust_loss_keyword.is_empty() || self.crash_keywords.iter().any(String::is_empty)
        {
            return Err("keywords must be non-empty".into());
        }
        Ok(())
    }
}

/// A detection: which rule fired, when, and the measured evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub t: Scalar,
    pub kind: AnomalyType,
    pub detail: String,
}

/// Waypoint bookkeeping violation (skipped or repeated waypoint index).
#[derive(Debug, Clone, thiserror::Error)]
#[error("waypoint {got} reached out of order (expected {expected})")]
pub struct ProtocolError {
    pub expected: usize,
    pub got: usize,
}

/// Incremental per-mission detector state.
#[derive(Debug, Clone)]
pub struct DetectorState {
    waypoint_count: usize,
    /// Consecutive samples with cross-track distance over the threshold.
    deviation_run: u32,
    /// Consecutive stationary samples.
    stationary_run: u32,
    last_alt: Option<Scalar>,
    last_speed: Option<Scalar>,
    /// (from, to) waypoint indices of the active leg; `None` until the first
    /// waypoint is reached (takeoff).
    active_leg: Option<(usize, usize)>,
    landing_phase: bool,
    start_t: Option<Scalar>,
    /// Per-detector virtual time before which re-firing is suppressed.
    cooldown_until: [Scalar; 4],
}

impl DetectorState {
    pub fn new(plan: &MissionPlan) -> Self {
        Self::with_waypoint_count(plan.waypoints.len())
    }

    pub fn with_waypoint_count(waypoint_count: usize) -> Self {
        Self {
            waypoint_count,
            deviation_run: 0,
            stationary_run: 0,
            last_alt: None,
            last_speed: None,
            active_leg: None,
            landing_phase: false,
            start_t: None,
            cooldown_until: [0.0; 4],
        }
    }

    pub fn deviation_run(&self) -> u32 {
        self.deviation_run
    }

    pub fn stationary_run(&self) -> u32 {
        self.stationary_run
    }

    pub fn active_leg(&self) -> Option<(usize, usize)> {
        self.active_leg
    }

    pub fn landing_phase(&self) -> bool {
        self.landing_phase
    }

    fn can_fire(&self, kind: AnomalyType, t: Scalar) -> bool {
        t >= self.cooldown_until[kind.slot()]
    }

    fn fire(&mut self, config: &DetectorConfig, t: Scalar, kind: AnomalyType, detail: String) -> AnomalyEvent {
        self.cooldown_until[kind.slot()] = t + config.cooldown_s;
        self.deviation_run = 0;
        self.stationary_run = 0;
        AnomalyEvent { t, kind, detail }
    }

    /// Switch the active leg after the vehicle reports `reached`. Reaching the
    /// final waypoint flags the landing phase instead of advancing.
    pub fn advance_leg(&mut self, reached: usize) -> Result<(), ProtocolError> {
        let expected = match self.active_leg {
            None => 0,
            Some((_, target)) => target,
        };
        if reached != expected {
            return Err(ProtocolError { expected, got: reached });
        }
        if reached + 1 >= self.waypoint_count {
            self.landing_phase = true;
        } else {
            self.active_leg = Some((reached, reached + 1));
            self.deviation_run = 0;
        }
        Ok(())
    }

    /// Feed one telemetry event; returns the anomaly it triggered, if any.
    /// At most one anomaly fires per call. Malformed or unmatched status text
    /// never faults; the only error is a waypoint ordering violation.
    pub fn update(
        &mut self,
        config: &DetectorConfig,
        event: &TelemetryEvent,
        plan: &MissionPlan,
    ) -> Result<Option<AnomalyEvent>, ProtocolError> {
        match event {
            TelemetryEvent::Sample(sample) => {
                if self.start_t.is_none() {
                    self.start_t = Some(sample.t);
                }

                // Deviation: cross-track distance to the active leg. Not
                // measured before the first waypoint (takeoff) or after the
                // final one (landing).
                let mut cross_track = None;
                if let (Some((from, to)), false) = (self.active_leg, self.landing_phase) {
                    let d = point_to_leg_distance(
                        sample.pos,
                        plan.waypoints[from],
                        plan.waypoints[to],
                    );
                    cross_track = Some((d, from, to));
                    if d > config.deviation_threshold_m {
                        self.deviation_run += 1;
                    } else {
                        self.deviation_run = 0;
                    }
                } else {
                    self.deviation_run = 0;
                }

                // Timeout: stationary means slow and flat, relative to the
                // previous sample. Suppressed during takeoff and landing.
                let speed = sample.speed();
                let in_grace = sample.t - self.start_t.unwrap_or(0.0) < config.takeoff_grace_s;
                let stationary = match self.last_alt {
                    Some(prev_alt) => {
                        speed < config.timeout_speed_mps
                            && (sample.alt - prev_alt).abs() < config.timeout_alt_delta_m
                    }
                    None => false,
                };
                let alt_delta = self.last_alt.map(|prev| (sample.alt - prev).abs());
                if self.landing_phase || in_grace {
                    self.stationary_run = 0;
                } else if stationary {
                    self.stationary_run += 1;
                } else {
                    self.stationary_run = 0;
                }

                self.last_alt = Some(sample.alt);
                self.last_speed = Some(speed);

                if self.deviation_run > config.deviation_consecutive
                    && self.can_fire(AnomalyType::Deviation, sample.t)
                {
                    let (d, from, to) = cross_track.expect("deviation_run implies a leg");
                    let run = self.deviation_run;
                    return Ok(Some(self.fire(
                        config,
                        sample.t,
                        AnomalyType::Deviation,
                        format!("cross-track {d:.2} m from leg {from}->{to}, {run} consecutive samples"),
                    )));
                }
                if self.stationary_run > config.timeout_consecutive
                    && self.can_fire(AnomalyType::Timeout, sample.t)
                {
                    let run = self.stationary_run;
                    let delta = alt_delta.unwrap_or(0.0);
                    return Ok(Some(self.fire(
                        config,
                        sample.t,
                        AnomalyType::Timeout,
                        format!("speed {speed:.2} m/s, alt delta {delta:.3} m, {run} consecutive samples"),
                    )));
                }
                Ok(None)
            }
            TelemetryEvent::Status(status) => {
                if status.text.contains(&config.thrust_loss_keyword)
                    && self.can_fire(AnomalyType::ThrustLoss, status.t)
                {
                    let keyword = config.thrust_loss_keyword.clone();
                    return Ok(Some(self.fire(
                        config,
                        status.t,
                        AnomalyType::ThrustLoss,
                        format!("status matched {keyword:?}"),
                    )));
                }
                if let Some(keyword) = config
                    .crash_keywords
                    .iter()
                    .find(|kw| status.text.contains(kw.as_str()))
                {
                    let impact = self.last_speed.unwrap_or(0.0);
                    if impact > config.crash_impact_speed_mps
                        && self.can_fire(AnomalyType::Crash, status.t)
                    {
                        let keyword = keyword.clone();
                        return Ok(Some(self.fire(
                            config,
                            status.t,
                            AnomalyType::Crash,
                            format!("status matched {keyword:?} at {impact:.2} m/s"),
                        )));
                    }
                }
                Ok(None)
            }
            TelemetryEvent::WaypointReached { index, .. } => {
                self.advance_leg(*index)?;
                Ok(None)
            }
            TelemetryEvent::Landed { .. } => {
                self.landing_phase = true;
                Ok(None)
            }
            TelemetryEvent::MissionTimeout { .. } => Ok(None),
        }
    }
}
