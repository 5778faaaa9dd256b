//! Deterministic, parameterized flight simulator.
//!
//! A kinematic vehicle flies the mission plan: vertical takeoff to the first
//! waypoint, straight legs at cruise speed, vertical landing at the last
//! waypoint. Misconfigured parameters (per the [`fault`] table) superpose
//! reproducible fault effects:
//!
//! * deviation-class: lateral oscillation around the leg whose amplitude
//!   tracks severity with a 2 s time constant, crossing the 10 m detector
//!   threshold at severity 1.0;
//! * thrust-class: periodic "Potential Thrust Loss" status messages plus a
//!   small altitude sag;
//! * timeout-class: forward speed collapses to a crawl;
//! * crash-class (severity >= 2): commanded descent at 8 m/s until ground
//!   contact, then a "SIM Hit ground" status and the crashed flag.
//!
//! Virtual time only: each step advances `dt` with no wall-clock coupling
//! unless `real_time` pacing is enabled.

pub mod fault;

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyType;
use crate::paramdb::{ParamRegistry, ParamSet};
use crate::telemetry::{
    AbortReason, FinalStatus, FlightSample, LinkError, MissionHandle, MissionPlan, StatusText,
    TelemetryEvent, UploadAck, VehicleLink,
};
use crate::{Scalar, Vec3};
use fault::FaultTable;

/// Vertical speed during takeoff, m/s.
const CLIMB_RATE_MPS: Scalar = 2.5;
/// Vertical speed during the landing descent, m/s.
const DESCENT_RATE_MPS: Scalar = 1.5;
/// Gentler descent below this altitude, m.
const FINAL_DESCENT_BELOW_M: Scalar = 1.0;
/// Touchdown speed for the final meter, m/s (a soft landing, not a crash).
const FINAL_DESCENT_MPS: Scalar = 0.5;
/// Target lateral oscillation amplitude per unit severity, m.
const DEVIATION_AMP_PER_SEVERITY_M: Scalar = 14.0;
/// Lateral oscillation period, s.
const OSC_PERIOD_S: Scalar = 8.0;
/// Fault effects grow and decay with this first-order time constant, s.
const EFFECT_TIME_CONSTANT_S: Scalar = 2.0;
/// Altitude sag while a thrust-class fault is active, m.
const THRUST_SAG_M: Scalar = 1.5;
/// Interval between thrust-loss status messages while the fault persists, s.
const THRUST_STATUS_PERIOD_S: Scalar = 2.0;
/// Forward speed while a timeout-class fault is active, m/s.
const TIMEOUT_CREEP_MPS: Scalar = 0.3;
/// Commanded sink rate while a crash-class fault is active, m/s.
const CRASH_SINK_MPS: Scalar = 8.0;
/// Ground contact above this vertical speed is a crash, below it a landing.
const HARD_IMPACT_MPS: Scalar = 2.0;

/// Simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Perturbs the initial oscillation phase; everything else is exact.
    pub seed: u64,
    /// Telemetry rate in virtual time, Hz.
    pub sample_rate_hz: Scalar,
    /// Step size, s; `dt * sample_rate_hz == 1` within 1e-12.
    pub dt: Scalar,
    /// Virtual-time budget per mission, s.
    pub mission_timeout_s: Scalar,
    /// Pace steps against the wall clock (for live-advisor demos).
    pub real_time: bool,
    pub fault_table: FaultTable,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate_hz: 10.0,
            dt: 0.1,
            mission_timeout_s: 600.0,
            real_time: false,
            fault_table: FaultTable::builtin().clone(),
        }
    }
}

impl SimConfig {
    pub fn check(&self, registry: &ParamRegistry) -> Result<(), String> {
        if !self.dt.is_finite() || self.dt <= 0.0 || !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err("dt and sample_rate_hz must be positive".into());
        }
        if (self.dt * self.sample_rate_hz - 1.0).abs() > 1e-12 {
            return Err(format!(
                "dt {} and sample_rate_hz {} disagree",
                self.dt, self.sample_rate_hz
            ));
        }
        if !self.mission_timeout_s.is_finite() || self.mission_timeout_s <= 0.0 {
            return Err("mission_timeout_s must be positive".into());
        }
        self.fault_table.check_against(registry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Takeoff,
    /// Flying the leg that ends at this waypoint index.
    Leg(usize),
    Landing,
}

/// Full vehicle state; exposed for introspection in tests and tools.
#[derive(Debug, Clone)]
pub struct SimState {
    pub t: Scalar,
    pub pos: Vec3,
    pub vel: Vec3,
    pub target_wp: usize,
    pub params: ParamSet,
    pub osc_phase: Scalar,
    pub landed: bool,
    pub crashed: bool,
    phase: Phase,
    /// Meters travelled along the active leg.
    progress: Scalar,
    /// The fault-free tracking point; `pos` is this plus fault offsets.
    commanded: Vec3,
    osc_amp: Scalar,
    /// Direction of the lateral fault offset; lags toward the active leg's
    /// perpendicular so corners stay continuous.
    lateral_dir: Vec3,
    sag: Scalar,
    dive: Scalar,
    next_thrust_status_t: Scalar,
}

impl SimState {
    fn new(params: ParamSet, plan: &MissionPlan, seed: u64) -> Self {
        let start = Vec3::new(plan.waypoints[0].x, plan.waypoints[0].y, 0.0);
        Self {
            t: 0.0,
            pos: start,
            vel: Vec3::zero(),
            target_wp: 0,
            params,
            osc_phase: (seed % 360) as Scalar * std::f64::consts::PI / 180.0,
            landed: false,
            crashed: false,
            phase: Phase::Takeoff,
            progress: 0.0,
            commanded: start,
            osc_amp: 0.0,
            lateral_dir: Vec3::zero(),
            sag: 0.0,
            dive: 0.0,
            next_thrust_status_t: 0.0,
        }
    }

    /// Replace the live parameter snapshot. Callers apply this at a step
    /// boundary; oscillation phase and amplitude carry over so a fix decays
    /// rather than jumps. Accepted (and inert) after landing or crashing.
    pub fn apply_params(&mut self, new_params: ParamSet) {
        self.params = new_params;
    }

    fn class_severity(
        &self,
        class: AnomalyType,
        table: &FaultTable,
        registry: &ParamRegistry,
    ) -> Scalar {
        table.class_severity(class, &self.params, registry)
    }

    /// Advance one step of `dt`, returning the emitted events in order.
    fn step(
        &mut self,
        config: &SimConfig,
        registry: &ParamRegistry,
        plan: &MissionPlan,
    ) -> Vec<TelemetryEvent> {
        debug_assert!(!self.landed && !self.crashed);
        let dt = config.dt;
        self.t += dt;
        let table = &config.fault_table;
        let lag = (-dt / EFFECT_TIME_CONSTANT_S).exp();
        let prev_pos = self.pos;

        let dev_sev = self.class_severity(AnomalyType::Deviation, table, registry);
        let dev_on = table.class_active(AnomalyType::Deviation, &self.params, registry);
        let thrust_on = table.class_active(AnomalyType::ThrustLoss, &self.params, registry);
        let timeout_on = table.class_active(AnomalyType::Timeout, &self.params, registry);
        let crash_on = table.class_active(AnomalyType::Crash, &self.params, registry);

        let mut reached: Option<usize> = None;
        match self.phase {
            Phase::Takeoff => {
                let top = plan.waypoints[0].z;
                self.commanded.z = (self.commanded.z + CLIMB_RATE_MPS * dt).min(top);
                self.pos = self.commanded;
                if self.commanded.z >= top {
                    reached = Some(0);
                }
            }
            Phase::Leg(target) => {
                // Fault effects evolve only while tracking a leg, so phase
                // transitions stay continuous.
                let amp_target = if dev_on { DEVIATION_AMP_PER_SEVERITY_M * dev_sev } else { 0.0 };
                self.osc_amp = amp_target + (self.osc_amp - amp_target) * lag;
                let sag_target = if thrust_on { THRUST_SAG_M } else { 0.0 };
                self.sag = sag_target + (self.sag - sag_target) * lag;
                if crash_on {
                    self.dive += CRASH_SINK_MPS * dt;
                } else {
                    self.dive *= lag;
                }
                self.osc_phase += 2.0 * std::f64::consts::PI / OSC_PERIOD_S * dt;

                let a = plan.waypoints[target - 1];
                let b = plan.waypoints[target];
                let leg_len = a.distance(b);
                let dir = (b - a).normalized();
                let speed = if timeout_on { TIMEOUT_CREEP_MPS } else { plan.cruise_speed };
                self.progress = (self.progress + speed * dt).min(leg_len);
                self.commanded = a + dir * self.progress;

                let perp = dir.horizontal_perp();
                if self.lateral_dir == Vec3::zero() {
                    self.lateral_dir = perp;
                } else {
                    self.lateral_dir = perp + (self.lateral_dir - perp) * lag;
                }
                let lateral =
                    self.lateral_dir * (self.osc_amp * (0.9 + 0.1 * self.osc_phase.sin()));
                self.pos = self.commanded + lateral + Vec3::new(0.0, 0.0, -(self.sag + self.dive));

                if self.pos.z > 0.0 && self.progress >= leg_len {
                    reached = Some(target);
                }
            }
            Phase::Landing => {
                let rate = if self.commanded.z > FINAL_DESCENT_BELOW_M {
                    DESCENT_RATE_MPS
                } else {
                    FINAL_DESCENT_MPS
                };
                self.commanded.z -= rate * dt;
                if crash_on {
                    self.dive += CRASH_SINK_MPS * dt;
                } else {
                    self.dive *= lag;
                }
                let lateral =
                    self.lateral_dir * (self.osc_amp * (0.9 + 0.1 * self.osc_phase.sin()));
                self.pos = self.commanded + lateral + Vec3::new(0.0, 0.0, -(self.sag + self.dive));
            }
        }

        let mut events = Vec::with_capacity(3);

        // Ground contact?
        let mut crash_text = None;
        if self.pos.z <= 0.0 && self.phase != Phase::Takeoff {
            let sink = (prev_pos.z - self.pos.z) / dt;
            self.pos.z = 0.0;
            if sink > HARD_IMPACT_MPS {
                self.crashed = true;
                crash_text = Some(format!("SIM Hit ground at {:.1} m/s", self.impact_speed(prev_pos, dt)));
            } else {
                self.landed = true;
            }
        }

        self.vel = (self.pos - prev_pos) / dt;
        self.pos.z = self.pos.z.max(0.0);
        events.push(TelemetryEvent::Sample(FlightSample::new(self.t, self.pos, self.vel)));

        if thrust_on && !self.crashed && self.t >= self.next_thrust_status_t {
            events.push(TelemetryEvent::Status(StatusText {
                t: self.t,
                text: "Potential Thrust Loss: reduced climb authority".to_string(),
            }));
            self.next_thrust_status_t = self.t + THRUST_STATUS_PERIOD_S;
        }

        if let Some(text) = crash_text {
            events.push(TelemetryEvent::Status(StatusText { t: self.t, text }));
            return events;
        }

        if self.landed {
            events.push(TelemetryEvent::Landed { t: self.t });
            return events;
        }

        if let Some(index) = reached {
            events.push(TelemetryEvent::WaypointReached { t: self.t, index });
            if index >= plan.last_index() {
                self.phase = Phase::Landing;
            } else {
                self.phase = Phase::Leg(index + 1);
                self.progress = 0.0;
                self.target_wp = index + 1;
            }
        }

        events
    }

    fn impact_speed(&self, prev_pos: Vec3, dt: Scalar) -> Scalar {
        (self.pos - prev_pos).norm() / dt
    }
}

/// An in-flight simulated mission.
pub struct SimMission {
    registry: Arc<ParamRegistry>,
    config: SimConfig,
    plan: MissionPlan,
    state: SimState,
    queue: VecDeque<TelemetryEvent>,
    pending_params: Option<ParamSet>,
    timed_out: bool,
    stopped: Option<FinalStatus>,
}

impl SimMission {
    fn new(registry: Arc<ParamRegistry>, config: SimConfig, params: ParamSet, plan: MissionPlan) -> Self {
        let state = SimState::new(params, &plan, config.seed);
        let mut queue = VecDeque::new();
        queue.push_back(TelemetryEvent::Sample(FlightSample::new(0.0, state.pos, state.vel)));
        Self {
            registry,
            config,
            plan,
            state,
            queue,
            pending_params: None,
            timed_out: false,
            stopped: None,
        }
    }

    /// Introspection hook for tests and tools.
    pub fn state(&self) -> &SimState {
        &self.state
    }

    fn terminal(&self) -> bool {
        self.state.landed || self.state.crashed || self.timed_out
    }

    fn step_once(&mut self) {
        if let Some(params) = self.pending_params.take() {
            self.state.apply_params(params);
        }
        if self.state.t + self.config.dt > self.config.mission_timeout_s {
            self.timed_out = true;
            self.queue.push_back(TelemetryEvent::MissionTimeout {
                t: self.config.mission_timeout_s,
            });
            return;
        }
        let events = self.state.step(&self.config, &self.registry, &self.plan);
        self.queue.extend(events);
    }
}

impl MissionHandle for SimMission {
    fn next_event(&mut self) -> Option<TelemetryEvent> {
        loop {
            if let Some(event) = self.queue.pop_front() {
                return Some(event);
            }
            if self.stopped.is_some() || self.terminal() {
                return None;
            }
            if self.config.real_time {
                std::thread::sleep(std::time::Duration::from_secs_f64(self.config.dt));
            }
            self.step_once();
        }
    }

    fn upload_params(&mut self, fix: &ParamSet) -> Result<UploadAck, LinkError> {
        if self.stopped.is_some() || self.terminal() {
            return Err(LinkError::StaleHandle);
        }
        self.registry.validate(fix)?;
        let base = self
            .pending_params
            .clone()
            .unwrap_or_else(|| self.state.params.clone());
        self.pending_params = Some(base.merged(fix));
        Ok(UploadAck { effective_t: self.state.t })
    }

    fn is_active(&mut self) -> bool {
        self.stopped.is_none() && !self.terminal()
    }

    fn stop(&mut self) -> FinalStatus {
        if let Some(status) = &self.stopped {
            return status.clone();
        }
        let status = if self.state.landed {
            FinalStatus::LandedAtDestination
        } else if self.state.crashed {
            FinalStatus::Crashed
        } else if self.timed_out {
            FinalStatus::Aborted(AbortReason::Timeout)
        } else {
            FinalStatus::Aborted(AbortReason::Commanded)
        };
        self.stopped = Some(status.clone());
        status
    }
}

/// In-process [`VehicleLink`] backed by the simulator. Cheap to clone per
/// mission; missions are fully independent.
#[derive(Clone)]
pub struct SimVehicle {
    registry: Arc<ParamRegistry>,
    config: SimConfig,
}

impl SimVehicle {
    pub fn new(registry: Arc<ParamRegistry>, config: SimConfig) -> Result<Self, LinkError> {
        config
            .check(&registry)
            .map_err(LinkError::Protocol)?;
        Ok(Self { registry, config })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Start a mission, returning the concrete handle (tests use the
    /// introspection hook on it).
    pub fn start(&self, params: &ParamSet, plan: &MissionPlan) -> Result<SimMission, LinkError> {
        self.registry.validate(params)?;
        plan.check()?;
        let initial = self.registry.defaults().merged(params);
        Ok(SimMission::new(
            Arc::clone(&self.registry),
            self.config.clone(),
            initial,
            plan.clone(),
        ))
    }
}

impl VehicleLink for SimVehicle {
    fn start_mission(
        &mut self,
        params: &ParamSet,
        plan: &MissionPlan,
    ) -> Result<Box<dyn MissionHandle>, LinkError> {
        Ok(Box::new(self.start(params, plan)?))
    }
}

/// The square demonstration plan used by tests, the shipped suite and the
/// CLI demo files: takeoff at the origin, three 80 m legs at 15 m altitude,
/// landing at the last corner.
pub fn square_demo_plan() -> MissionPlan {
    MissionPlan::new(
        vec![
            Vec3::new(0.0, 0.0, 15.0),
            Vec3::new(80.0, 0.0, 15.0),
            Vec3::new(80.0, 80.0, 15.0),
            Vec3::new(0.0, 80.0, 15.0),
        ],
        8.0,
    )
    .expect("demo plan is valid")
}
