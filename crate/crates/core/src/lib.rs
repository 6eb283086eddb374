//! Simulation library for decentralized circular formation flight of
//! fixed-wing vehicles.
//!
//! Each vehicle tracks a circle by steering along a guidance vector field
//! built from the circle's implicit level function. Vehicles agree on a
//! common phase around the circle by exchanging phase measurements over a
//! lossy network and modulating their individual orbit radii: a vehicle
//! ahead of its neighbours flies a wider (slower, in angle) orbit until the
//! fleet closes up.
//!
//! The crate is organised along the pipeline:
//!
//! * [`curve`]: implicit curves (circles, ellipses) with level error,
//!   gradient and Hessian.
//! * [`gvf`]: the guidance field and the yaw-rate command that makes a
//!   constant-speed vehicle converge to and circulate along a curve.
//! * [`dynamics`]: unicycle kinematics integrated with RK4.
//! * [`formation`]: phase measurements, incidence matrices, the consensus
//!   input and radius modulation.
//! * [`netsim`]: a deterministic message network with delay and loss.
//! * [`protocol`]: the per-vehicle agent (neighbour table, staleness
//!   timeout, GPS gating).
//! * [`scenario`], [`runner`], [`telemetry`], [`svg`]: scenario files, the
//!   discrete-event simulation loop and its outputs.
//!
//! Runs are bit-for-bit reproducible: all randomness flows from one seeded
//! generator and every container iterates in a fixed order.

pub mod angles;
pub mod curve;
pub mod dynamics;
pub mod formation;
pub mod gvf;
pub mod netsim;
pub mod protocol;
pub mod runner;
pub mod scenario;
pub mod svg;
pub mod telemetry;

pub use angles::wrap_angle;
pub use curve::ImplicitCurve;
pub use dynamics::VehicleState;
pub use formation::{AircraftId, ConsensusParams, FormationGraph, PhaseVector, RadiusConvention};
pub use gvf::{FieldSample, GvfParams, RotationSense};
pub use netsim::{LinkModel, Network, PhaseMessage};
pub use protocol::{Agent, AgentConfig, GpsStatus, NeighborTable};
pub use runner::{run, sync_time, RunOutput};
pub use scenario::Scenario;
pub use telemetry::{TelemetryFrame, TelemetryLog};

/// Standard gravity used to convert yaw rate into bank angle, m/s².
pub const GRAVITY_MPS2: f64 = 9.81;
