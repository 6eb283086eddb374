//! Scenario files: the single input describing a simulation run.
//!
//! The format is TOML with units spelled out in every key name
//! (`radius_m`, `speed_mps`, `staleness_timeout_ms`). A scenario is
//! deserialized permissively and then checked as a whole by
//! [`Scenario::validate`]; the runner refuses to start on any violation.
//!
//! ```toml
//! duration_s = 120.0
//! physics_dt_s = 0.02
//! seed = 7
//! convention = "radius_shift"
//! rotation_sense = "clockwise"
//! edges = [[1, 2], [2, 3]]
//!
//! [circle]
//! radius_m = 30.0
//!
//! [gains]
//! k_e = 2.0e-3
//! k_d = 1.0
//! k_r = 10.0
//!
//! [[vehicles]]
//! id = 1
//! x_m = -120.0
//! y_m = 45.0
//! psi_rad = 0.0
//! speed_mps = 11.0
//! ```

use crate::curve::{CurveError, ImplicitCurve};
use crate::formation::{AircraftId, ConsensusParams, FormationError, FormationGraph, RadiusConvention};
use crate::gvf::{GvfParams, RotationSense};
use crate::netsim::{DelayModel, LinkModel, NetError};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("duration_s must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("physics_dt_s must be a positive whole number of milliseconds, got {0}")]
    InvalidTimeStep(f64),
    #[error("scenario needs at least one vehicle")]
    NoVehicles,
    #[error("vehicle id {0} appears more than once")]
    DuplicateVehicleId(u8),
    #[error("vehicle {0} starts exactly at the circle center, where the phase is undefined")]
    StartAtCenter(u8),
    #[error("vehicle {0}: {1} must be finite")]
    NonFiniteVehicleField(u8, &'static str),
    #[error("vehicle {0}: speed_mps must be positive, got {1}")]
    InvalidSpeed(u8, f64),
    #[error("vehicle {id}: control_offset_ms {offset} must be smaller than control_period_ms {period}")]
    OffsetExceedsPeriod { id: u8, offset: u64, period: u64 },
    #[error("vehicle {id}: control_offset_ms {offset} is not a multiple of the physics step {dt_ms} ms")]
    OffsetNotAligned { id: u8, offset: u64, dt_ms: u64 },
    #[error("control_period_ms {period} is not a multiple of the physics step {dt_ms} ms")]
    PeriodNotAligned { period: u64, dt_ms: u64 },
    #[error("control_period_ms must be positive")]
    InvalidControlPeriod,
    #[error("staleness_timeout_ms must be positive")]
    InvalidStalenessTimeout,
    #[error("link delay: give either delay_ms or the pair delay_min_ms/delay_max_ms, not {0}")]
    AmbiguousDelay(&'static str),
    #[error("max_bank_rad must lie strictly between 0 and pi/2, got {0}")]
    InvalidBankLimit(f64),
    #[error("gravity_mps2 must be positive and finite, got {0}")]
    InvalidGravity(f64),
    #[error("event at t={0}s: at_s must be nonnegative and finite")]
    InvalidEventTime(f64),
    #[error("event at t={at_s}s references vehicle {id}, which does not exist")]
    EventUnknownVehicle { at_s: f64, id: u8 },
    #[error("event at t={at_s}s references link {a}-{b}, which is not an edge of the graph")]
    EventUnknownLink { at_s: f64, a: u8, b: u8 },
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error(transparent)]
    Field(#[from] crate::gvf::FieldError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// The orbit every vehicle converges to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSpec {
    #[serde(default)]
    pub center_x_m: f64,
    #[serde(default)]
    pub center_y_m: f64,
    pub radius_m: f64,
}

/// Control gains shared by the fleet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSpec {
    pub k_e: f64,
    pub k_d: f64,
    pub k_r: f64,
}

/// Loss and latency of the shared radio channel. Absent keys mean a
/// perfect link.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub delay_ms: Option<u64>,
    pub delay_min_ms: Option<u64>,
    pub delay_max_ms: Option<u64>,
    #[serde(default)]
    pub drop_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    #[serde(default = "default_control_period_ms")]
    pub control_period_ms: u64,
    #[serde(default = "default_staleness_timeout_ms")]
    pub staleness_timeout_ms: u64,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            control_period_ms: default_control_period_ms(),
            staleness_timeout_ms: default_staleness_timeout_ms(),
        }
    }
}

fn default_control_period_ms() -> u64 {
    crate::protocol::DEFAULT_CONTROL_PERIOD_MS
}

fn default_staleness_timeout_ms() -> u64 {
    crate::protocol::DEFAULT_STALENESS_TIMEOUT_MS
}

/// Actuation limits; the yaw-rate command saturates at the bank limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitSpec {
    #[serde(default = "default_max_bank_rad")]
    pub max_bank_rad: f64,
    #[serde(default = "default_gravity_mps2")]
    pub gravity_mps2: f64,
}

impl Default for LimitSpec {
    fn default() -> Self {
        LimitSpec {
            max_bank_rad: default_max_bank_rad(),
            gravity_mps2: default_gravity_mps2(),
        }
    }
}

fn default_max_bank_rad() -> f64 {
    FRAC_PI_4
}

fn default_gravity_mps2() -> f64 {
    crate::GRAVITY_MPS2
}

/// One aircraft's initial condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u8,
    pub x_m: f64,
    pub y_m: f64,
    pub psi_rad: f64,
    pub speed_mps: f64,
    /// Phase offset of this vehicle's control ticks; fleets are not
    /// assumed to tick in lockstep.
    #[serde(default)]
    pub control_offset_ms: u64,
}

/// A scripted mid-run change to the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum EventKind {
    /// Block both directions of one radio link.
    CutLink { between: (u8, u8) },
    /// Unblock a previously cut link.
    RestoreLink { between: (u8, u8) },
    /// Mark one vehicle's position fix unreliable.
    GpsOff { vehicle: u8 },
    /// Restore one vehicle's position fix.
    GpsOn { vehicle: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub at_s: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// An [`EventSpec`] with its trigger time resolved to the integer
/// millisecond clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedEvent {
    pub at_ms: u64,
    pub kind: EventKind,
}

/// Everything a simulation run depends on. Two runs of the same scenario
/// produce bit-identical output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub duration_s: f64,
    pub physics_dt_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_convention")]
    pub convention: RadiusConvention,
    #[serde(default = "default_sense")]
    pub rotation_sense: RotationSense,
    #[serde(default)]
    pub edges: Vec<(u8, u8)>,
    pub circle: CircleSpec,
    pub gains: GainSpec,
    #[serde(default)]
    pub link: LinkSpec,
    #[serde(default)]
    pub protocol: ProtocolSpec,
    #[serde(default)]
    pub limits: LimitSpec,
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
}

fn default_convention() -> RadiusConvention {
    RadiusConvention::RadiusShift
}

fn default_sense() -> RotationSense {
    RotationSense::Clockwise
}

/// Milliseconds represented by a seconds value, requiring it to sit on
/// the integer millisecond grid.
fn whole_ms(seconds: f64) -> Option<u64> {
    if !seconds.is_finite() || seconds < 0.0 {
        return None;
    }
    let ms = seconds * 1000.0;
    let rounded = ms.round();
    ((ms - rounded).abs() < 1e-6).then_some(rounded as u64)
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Checks every invariant the runner relies on. All constructors go
    /// through this; call it again after mutating a loaded scenario.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ScenarioError::InvalidDuration(self.duration_s));
        }
        let dt_ms =
            whole_ms(self.physics_dt_s).ok_or(ScenarioError::InvalidTimeStep(self.physics_dt_s))?;
        if dt_ms == 0 {
            return Err(ScenarioError::InvalidTimeStep(self.physics_dt_s));
        }
        whole_ms(self.duration_s).ok_or(ScenarioError::InvalidDuration(self.duration_s))?;

        if self.vehicles.is_empty() {
            return Err(ScenarioError::NoVehicles);
        }
        let mut seen = BTreeSet::new();
        for v in &self.vehicles {
            if !seen.insert(v.id) {
                return Err(ScenarioError::DuplicateVehicleId(v.id));
            }
            for (value, name) in [(v.x_m, "x_m"), (v.y_m, "y_m"), (v.psi_rad, "psi_rad")] {
                if !value.is_finite() {
                    return Err(ScenarioError::NonFiniteVehicleField(v.id, name));
                }
            }
            if !(v.speed_mps.is_finite() && v.speed_mps > 0.0) {
                return Err(ScenarioError::InvalidSpeed(v.id, v.speed_mps));
            }
            if v.x_m == self.circle.center_x_m && v.y_m == self.circle.center_y_m {
                return Err(ScenarioError::StartAtCenter(v.id));
            }
        }

        let protocol = &self.protocol;
        if protocol.control_period_ms == 0 {
            return Err(ScenarioError::InvalidControlPeriod);
        }
        if protocol.staleness_timeout_ms == 0 {
            return Err(ScenarioError::InvalidStalenessTimeout);
        }
        if !protocol.control_period_ms.is_multiple_of(dt_ms) {
            return Err(ScenarioError::PeriodNotAligned {
                period: protocol.control_period_ms,
                dt_ms,
            });
        }
        for v in &self.vehicles {
            if v.control_offset_ms >= protocol.control_period_ms {
                return Err(ScenarioError::OffsetExceedsPeriod {
                    id: v.id,
                    offset: v.control_offset_ms,
                    period: protocol.control_period_ms,
                });
            }
            if v.control_offset_ms % dt_ms != 0 {
                return Err(ScenarioError::OffsetNotAligned {
                    id: v.id,
                    offset: v.control_offset_ms,
                    dt_ms,
                });
            }
        }

        if !(self.limits.max_bank_rad.is_finite()
            && self.limits.max_bank_rad > 0.0
            && self.limits.max_bank_rad < std::f64::consts::FRAC_PI_2)
        {
            return Err(ScenarioError::InvalidBankLimit(self.limits.max_bank_rad));
        }
        if !(self.limits.gravity_mps2.is_finite() && self.limits.gravity_mps2 > 0.0) {
            return Err(ScenarioError::InvalidGravity(self.limits.gravity_mps2));
        }

        // Constructing the derived objects runs their own validation.
        self.curve()?;
        self.graph()?;
        self.gvf_params()?;
        self.consensus_params()?;
        self.link_model()?.validate()?;

        let edge_set: BTreeSet<(u8, u8)> = self
            .edges
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        for ev in &self.events {
            if !(ev.at_s.is_finite() && ev.at_s >= 0.0) {
                return Err(ScenarioError::InvalidEventTime(ev.at_s));
            }
            match ev.kind {
                EventKind::CutLink { between: (a, b) }
                | EventKind::RestoreLink { between: (a, b) } => {
                    if !edge_set.contains(&(a.min(b), a.max(b))) {
                        return Err(ScenarioError::EventUnknownLink { at_s: ev.at_s, a, b });
                    }
                }
                EventKind::GpsOff { vehicle } | EventKind::GpsOn { vehicle } => {
                    if !seen.contains(&vehicle) {
                        return Err(ScenarioError::EventUnknownVehicle {
                            at_s: ev.at_s,
                            id: vehicle,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        whole_ms(self.duration_s).expect("validated duration")
    }

    pub fn physics_dt_ms(&self) -> u64 {
        whole_ms(self.physics_dt_s).expect("validated time step")
    }

    pub fn curve(&self) -> Result<ImplicitCurve, CurveError> {
        ImplicitCurve::circle(
            Vector2::new(self.circle.center_x_m, self.circle.center_y_m),
            self.circle.radius_m,
        )
    }

    pub fn graph(&self) -> Result<FormationGraph, FormationError> {
        FormationGraph::new(
            self.vehicles.iter().map(|v| AircraftId(v.id)).collect(),
            self.edges
                .iter()
                .map(|&(a, b)| (AircraftId(a), AircraftId(b)))
                .collect(),
        )
    }

    pub fn gvf_params(&self) -> Result<GvfParams, crate::gvf::FieldError> {
        GvfParams::new(self.gains.k_e, self.gains.k_d, self.rotation_sense)
    }

    pub fn consensus_params(&self) -> Result<ConsensusParams, FormationError> {
        ConsensusParams::new(self.gains.k_r, self.convention)
    }

    /// The channel model, seeded from the scenario seed.
    pub fn link_model(&self) -> Result<LinkModel, ScenarioError> {
        let delay = match (
            self.link.delay_ms,
            self.link.delay_min_ms,
            self.link.delay_max_ms,
        ) {
            (None, None, None) => DelayModel::Fixed(0),
            (Some(d), None, None) => DelayModel::Fixed(d),
            (None, Some(min_ms), Some(max_ms)) => DelayModel::Uniform { min_ms, max_ms },
            (Some(_), _, _) => return Err(ScenarioError::AmbiguousDelay("both forms")),
            _ => return Err(ScenarioError::AmbiguousDelay("half a range")),
        };
        Ok(LinkModel {
            delay,
            drop_probability: self.link.drop_probability,
            seed: self.seed,
        })
    }

    /// Scripted events on the millisecond clock, sorted by time with the
    /// file order preserved among ties.
    pub fn timed_events(&self) -> Vec<TimedEvent> {
        let mut out: Vec<TimedEvent> = self
            .events
            .iter()
            .map(|ev| TimedEvent {
                at_ms: whole_ms(ev.at_s).unwrap_or_else(|| (ev.at_s * 1000.0).round() as u64),
                kind: ev.kind,
            })
            .collect();
        out.sort_by_key(|ev| ev.at_ms);
        out
    }

    /// Vehicle specs ordered by id; the runner's canonical iteration
    /// order.
    pub fn vehicles_by_id(&self) -> Vec<VehicleSpec> {
        let mut v = self.vehicles.clone();
        v.sort_by_key(|v| v.id);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> String {
        r#"
            duration_s = 60.0
            physics_dt_s = 0.02
            edges = [[1, 2]]

            [circle]
            radius_m = 30.0

            [gains]
            k_e = 0.002
            k_d = 1.0
            k_r = 10.0

            [[vehicles]]
            id = 1
            x_m = -50.0
            y_m = 10.0
            psi_rad = 0.0
            speed_mps = 11.0

            [[vehicles]]
            id = 2
            x_m = 40.0
            y_m = -20.0
            psi_rad = 1.5
            speed_mps = 11.0
        "#
        .to_string()
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let s = Scenario::from_toml_str(&minimal_toml()).unwrap();
        assert_eq!(s.seed, 0);
        assert_eq!(s.convention, RadiusConvention::RadiusShift);
        assert_eq!(s.rotation_sense, RotationSense::Clockwise);
        assert_eq!(s.protocol.control_period_ms, 500);
        assert_eq!(s.protocol.staleness_timeout_ms, 2000);
        assert_eq!(s.limits.max_bank_rad, FRAC_PI_4);
        assert_eq!(s.duration_ms(), 60_000);
        assert_eq!(s.physics_dt_ms(), 20);
        assert_eq!(s.link_model().unwrap(), LinkModel::perfect(0));
        assert!(s.events.is_empty());
    }

    #[test]
    fn derived_objects_match_the_file() {
        let s = Scenario::from_toml_str(&minimal_toml()).unwrap();
        let (center, radius) = s.curve().unwrap().as_circle().unwrap();
        assert_eq!(center, Vector2::zeros());
        assert_eq!(radius, 30.0);
        let graph = s.graph().unwrap();
        assert_eq!(graph.neighbors(AircraftId(1)), vec![AircraftId(2)]);
        assert_eq!(s.gvf_params().unwrap().k_e, 0.002);
        assert_eq!(s.consensus_params().unwrap().k_r, 10.0);
    }

    #[test]
    fn events_parse_and_sort() {
        let mut text = minimal_toml();
        text.push_str(
            r#"
            [[events]]
            at_s = 20.0
            action = "gps_off"
            vehicle = 2

            [[events]]
            at_s = 10.0
            action = "cut_link"
            between = [1, 2]

            [[events]]
            at_s = 25.0
            action = "gps_on"
            vehicle = 2
        "#,
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        let events = s.timed_events();
        assert_eq!(events.len(), 3);
        assert_eq!(events[0].at_ms, 10_000);
        assert_eq!(
            events[0].kind,
            EventKind::CutLink { between: (1, 2) }
        );
        assert_eq!(events[1].at_ms, 20_000);
        assert_eq!(events[2].kind, EventKind::GpsOn { vehicle: 2 });
    }

    #[test]
    fn uniform_delay_link() {
        let mut text = minimal_toml();
        text.push_str(
            r#"
            [link]
            delay_min_ms = 0
            delay_max_ms = 200
            drop_probability = 0.2
        "#,
        );
        let mut s = Scenario::from_toml_str(&text).unwrap();
        s.seed = 99;
        let link = s.link_model().unwrap();
        assert_eq!(
            link.delay,
            DelayModel::Uniform {
                min_ms: 0,
                max_ms: 200
            }
        );
        assert_eq!(link.drop_probability, 0.2);
        assert_eq!(link.seed, 99);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = minimal_toml().replace("id = 2", "id = 1");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::DuplicateVehicleId(1))
        ));
    }

    #[test]
    fn rejects_start_at_center() {
        let text = minimal_toml()
            .replace("x_m = -50.0", "x_m = 0.0")
            .replace("y_m = 10.0", "y_m = 0.0");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::StartAtCenter(1))
        ));
    }

    #[test]
    fn rejects_edge_to_unknown_vehicle() {
        let text = minimal_toml().replace("edges = [[1, 2]]", "edges = [[1, 3]]");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::Formation(_))
        ));
    }

    #[test]
    fn rejects_misaligned_control_period() {
        let mut text = minimal_toml();
        text.push_str(
            r#"
            [protocol]
            control_period_ms = 510
        "#,
        );
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::PeriodNotAligned { period: 510, dt_ms: 20 })
        ));
    }

    #[test]
    fn rejects_fractional_millisecond_step() {
        let text = minimal_toml().replace("physics_dt_s = 0.02", "physics_dt_s = 0.0205try");
        assert!(Scenario::from_toml_str(&text).is_err());
        let text = minimal_toml().replace("physics_dt_s = 0.02", "physics_dt_s = 0.00005");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::InvalidTimeStep(_))
        ));
    }

    #[test]
    fn rejects_half_of_a_delay_range() {
        let mut text = minimal_toml();
        text.push_str(
            r#"
            [link]
            delay_min_ms = 10
        "#,
        );
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::AmbiguousDelay(_))
        ));
    }

    #[test]
    fn rejects_event_on_missing_edge() {
        let mut text = minimal_toml();
        text.push_str(
            r#"
            [[events]]
            at_s = 5.0
            action = "cut_link"
            between = [2, 1]
        "#,
        );
        // The pair is orderless: (2, 1) matches the (1, 2) edge.
        assert!(Scenario::from_toml_str(&text).is_ok());

        let bad = text.replace("between = [2, 1]", "between = [1, 9]");
        assert!(matches!(
            Scenario::from_toml_str(&bad),
            Err(ScenarioError::EventUnknownLink { a: 1, b: 9, .. })
        ));
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut text = minimal_toml();
        text.push_str("\nradius_km = 1.0\n");
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn toml_roundtrip_preserves_the_scenario() {
        let s = Scenario::from_toml_str(&minimal_toml()).unwrap();
        let text = toml::to_string(&s).unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn offset_must_fit_inside_the_period() {
        let text = minimal_toml().replace(
            "speed_mps = 11.0\n",
            "speed_mps = 11.0\ncontrol_offset_ms = 500\n",
        );
        assert!(matches!(
            Scenario::from_toml_str(&text),
            Err(ScenarioError::OffsetExceedsPeriod { .. })
        ));
    }
}
