//! Runtime monitor-and-repair harness for flight-control configurations.
//!
//! The harness flies missions on a [`telemetry::VehicleLink`] (the
//! deterministic simulator in [`sim`], or an external process over the wire
//! adapter), watches the telemetry stream with the [`anomaly`] detectors, and
//! when a rule fires asks an [`advisor`] backend for corrective parameter
//! values which it uploads mid-flight. The [`repair`] orchestrator runs that
//! loop under a repair limit and produces an auditable record per mission;
//! [`bench`](crate::bench) runs whole misconfiguration suites and computes
//! the aggregate repair metrics.

pub mod advisor;
pub mod anomaly;
pub mod bench;
pub mod geom;
pub mod paramdb;
pub mod repair;
pub mod sim;
pub mod telemetry;

/// Scalar type used by the concrete harness: the wire format carries JSON
/// doubles, so everything domain-facing is `f64`. The math in [`geom`] and
/// the quantization/severity helpers stay generic over [`geom::Real`].
pub type Scalar = f64;

/// Concrete 3-vector alias for the harness scalar.
pub type Vec3 = geom::Vector3<Scalar>;
