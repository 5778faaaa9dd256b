//! Telemetry data model and the vehicle-link abstraction.
//!
//! A [`VehicleLink`] starts missions; the returned [`MissionHandle`] yields an
//! ordered [`TelemetryEvent`] stream, accepts mid-flight parameter uploads and
//! resolves a [`FinalStatus`]. The in-process simulator link lives in
//! [`crate::sim`]; [`wire`] adapts any link to newline-delimited JSON over a
//! byte stream for external vehicle processes.

pub mod geo;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::paramdb::{ParamSet, ValidationError};
use crate::{Scalar, Vec3};

/// One timestamped telemetry reading in the local ground-fixed frame
/// (x east, y north, z up). `alt` duplicates `pos.z` for detector clarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightSample {
    /// Seconds since mission start.
    pub t: Scalar,
    /// Position, meters.
    pub pos: Vec3,
    /// Velocity, meters/second.
    pub vel: Vec3,
    /// Meters above ground; equals `pos.z` within 1e-9.
    pub alt: Scalar,
    /// Opaque attitude extension (roll, pitch, yaw); never interpreted by
    /// the detectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attitude: Option<Vec3>,
}

impl FlightSample {
    pub fn new(t: Scalar, pos: Vec3, vel: Vec3) -> Self {
        Self { t, pos, vel, alt: pos.z, attitude: None }
    }

    pub fn speed(&self) -> Scalar {
        self.vel.norm()
    }

    /// Checks the type invariants: non-negative finite time and
    /// `alt == pos.z` within 1e-9.
    pub fn check(&self) -> Result<(), String> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(format!("sample has invalid t {}", self.t));
        }
        if (self.alt - self.pos.z).abs() > 1e-9 {
            return Err(format!(
                "sample alt {} disagrees with pos.z {}",
                self.alt, self.pos.z
            ));
        }
        Ok(())
    }
}

/// Free-form status message emitted by the flight stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusText {
    pub t: Scalar,
    pub text: String,
}

/// The unified monitor input stream. On the wire, one JSON object per line
/// with a `"type"` discriminator of `sample`, `status`, `waypoint_reached`,
/// `landed` or `mission_timeout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TelemetryEvent {
    Sample(FlightSample),
    Status(StatusText),
    WaypointReached { t: Scalar, index: usize },
    Landed { t: Scalar },
    MissionTimeout { t: Scalar },
}

impl TelemetryEvent {
    pub fn t(&self) -> Scalar {
        match self {
            TelemetryEvent::Sample(s) => s.t,
            TelemetryEvent::Status(s) => s.t,
            TelemetryEvent::WaypointReached { t, .. }
            | TelemetryEvent::Landed { t }
            | TelemetryEvent::MissionTimeout { t } => *t,
        }
    }
}

/// Ordered list of waypoints plus the commanded cruise speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    /// Waypoints in meters, local frame; at least two, consecutive ones
    /// separated by more than 1e-6 m.
    pub waypoints: Vec<Vec3>,
    /// Meters/second, strictly positive.
    pub cruise_speed: Scalar,
}

impl MissionPlan {
    pub fn new(waypoints: Vec<Vec3>, cruise_speed: Scalar) -> Result<Self, PlanError> {
        let plan = Self { waypoints, cruise_speed };
        plan.check()?;
        Ok(plan)
    }

    pub fn check(&self) -> Result<(), PlanError> {
        if self.waypoints.len() < 2 {
            return Err(PlanError::TooFewWaypoints(self.waypoints.len()));
        }
        if !self.cruise_speed.is_finite() || self.cruise_speed <= 0.0 {
            return Err(PlanError::BadCruiseSpeed(self.cruise_speed));
        }
        for (i, pair) in self.waypoints.windows(2).enumerate() {
            if pair[0].distance(pair[1]) <= 1e-6 {
                return Err(PlanError::DuplicateWaypoint(i));
            }
        }
        Ok(())
    }

    pub fn last_index(&self) -> usize {
        self.waypoints.len() - 1
    }

    /// Endpoints of the leg that ends at waypoint `target`.
    pub fn leg_to(&self, target: usize) -> Option<(Vec3, Vec3)> {
        if target == 0 || target >= self.waypoints.len() {
            return None;
        }
        Some((self.waypoints[target - 1], self.waypoints[target]))
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PlanError {
    #[error("mission plan needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("cruise speed must be positive, got {0}")]
    BadCruiseSpeed(Scalar),
    #[error("waypoints {0} and {} are closer than 1e-6 m", .0 + 1)]
    DuplicateWaypoint(usize),
}

/// How a mission ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalStatus {
    /// Landed at the mission's final waypoint.
    LandedAtDestination,
    Crashed,
    Aborted(AbortReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// The mission's virtual-time budget elapsed.
    Timeout,
    /// Stopped by the operator before any terminal event.
    Commanded,
    /// The link failed mid-mission.
    LinkLost,
}

/// Acknowledgment for a parameter upload. Every event with `t` greater than
/// `effective_t` reflects the uploaded values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UploadAck {
    pub effective_t: Scalar,
}

/// Link-level failures.
#[derive(Debug, thiserror::Error)]
pub enum LinkError {
    #[error("connection failed: {0}")]
    Connection(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("mission already ended")]
    StaleHandle,
    #[error("wire protocol error: {0}")]
    Protocol(String),
    #[error("link I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// An active mission. Events arrive in non-decreasing `t` order; uploads take
/// effect before any event with `t` greater than the acknowledgment time.
pub trait MissionHandle {
    /// Next telemetry event, or `None` once the stream has closed.
    fn next_event(&mut self) -> Option<TelemetryEvent>;

    /// Atomically update the named parameters on the vehicle.
    fn upload_params(&mut self, fix: &ParamSet) -> Result<UploadAck, LinkError>;

    /// True while the vehicle is still flying the mission (not landed,
    /// crashed or aborted).
    fn is_active(&mut self) -> bool;

    /// Close the stream and resolve the final status. Idempotent.
    fn stop(&mut self) -> FinalStatus;
}

/// Behavioral contract for anything that can fly a mission: the in-process
/// simulator, a wire-attached external process, or a future flight-stack
/// adapter.
pub trait VehicleLink {
    fn start_mission(
        &mut self,
        params: &ParamSet,
        plan: &MissionPlan,
    ) -> Result<Box<dyn MissionHandle>, LinkError>;
}
