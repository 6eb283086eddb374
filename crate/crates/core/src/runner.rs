//! The scenario engine: one deterministic loop wiring vehicles (50 Hz
//! physics by default), agents (2 Hz control) and the simulated radio.
//!
//! Time is an integer millisecond counter. Each tick proceeds in a fixed
//! order so that equal scenarios produce bit-identical logs:
//!
//! 1. scripted events due at this tick take effect,
//! 2. the network delivers every message whose delay has elapsed,
//! 3. agents whose control tick is due update their radius modulation
//!    and hand their phase report to the network, in ascending id order,
//! 4. every vehicle's yaw-rate command is computed from its agent's
//!    current effective circle, saturated at the bank limit, and a
//!    telemetry frame is recorded,
//! 5. physics advances every vehicle by one step, in ascending id order.
//!
//! The final tick records a frame but does not step, so a log covers
//! `0..=duration` inclusive.

use crate::angles::wrap_angle;
use crate::dynamics::{step, VehicleState};
use crate::formation::{phase, AircraftId};
use crate::gvf::{bank_angle, yaw_rate_command, yaw_rate_limit};
use crate::netsim::{Network, TraceEvent};
use crate::protocol::{Agent, AgentConfig, GpsStatus, STATE_CSV_HEADER};
use crate::scenario::{EventKind, Scenario, ScenarioError};
use crate::telemetry::{TelemetryFrame, TelemetryLog, VehicleSample};
use nalgebra::Vector2;
use std::collections::BTreeMap;

/// Everything a run produces: the telemetry log, the transport trace and
/// the agents' own view of the protocol state.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: TelemetryLog,
    /// Transport events in chronological order.
    pub trace: Vec<TraceEvent>,
    /// Agent state dump, one CSV row per agent control tick.
    pub agent_dump: String,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
}

impl RunOutput {
    /// The transport trace in its line format, one event per line.
    pub fn trace_dump(&self) -> String {
        let mut out = String::new();
        for ev in &self.trace {
            out.push_str(&ev.to_string());
            out.push('\n');
        }
        out
    }
}

/// Runs a scenario to completion. Pure: the same scenario (seed included)
/// always yields the same output, byte for byte.
pub fn run(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;

    let base_circle = scenario.curve()?;
    let (center, _) = base_circle.as_circle().expect("scenario curves are circles");
    let graph = scenario.graph()?;
    let gvf = scenario.gvf_params()?;
    let consensus = scenario.consensus_params()?;
    let mut network = Network::new(scenario.link_model()?)?;

    let dt_ms = scenario.physics_dt_ms();
    let dt_s = dt_ms as f64 / 1000.0;
    let n_ticks = scenario.duration_ms() / dt_ms;
    let period = scenario.protocol.control_period_ms;
    let gravity = scenario.limits.gravity_mps2;
    let max_bank = scenario.limits.max_bank_rad;

    let specs = scenario.vehicles_by_id();
    let ids: Vec<AircraftId> = specs.iter().map(|v| AircraftId(v.id)).collect();
    let mut vehicles: Vec<VehicleState> = specs
        .iter()
        .map(|v| {
            VehicleState::new(Vector2::new(v.x_m, v.y_m), v.psi_rad, v.speed_mps)
                .expect("vehicle specs are validated")
        })
        .collect();
    let offsets: Vec<u64> = specs.iter().map(|v| v.control_offset_ms).collect();
    let neighbor_lists: Vec<Vec<AircraftId>> =
        ids.iter().map(|&id| graph.neighbors(id)).collect();

    let mut agents: Vec<Agent> = Vec::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        let cfg = AgentConfig {
            id,
            control_period_ms: period,
            staleness_timeout_ms: scenario.protocol.staleness_timeout_ms,
            consensus,
            gvf,
            base_circle: base_circle.clone(),
        };
        let mut agent = Agent::new(cfg).expect("agent config is validated");
        for &j in &neighbor_lists[i] {
            agent.register_neighbor(j);
        }
        network.register(id);
        agents.push(agent);
    }
    let index_of: BTreeMap<AircraftId, usize> =
        ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut gps_ok: Vec<bool> = vec![true; ids.len()];
    let events = scenario.timed_events();
    let mut next_event = 0;

    let mut log = TelemetryLog::new(ids.clone(), graph.edges().to_vec());
    let mut agent_dump = String::from(STATE_CSV_HEADER);
    agent_dump.push('\n');

    for tick in 0..=n_ticks {
        let now = tick * dt_ms;

        while next_event < events.len() && events[next_event].at_ms <= now {
            match events[next_event].kind {
                EventKind::CutLink { between: (a, b) } => {
                    network.set_link_blocked(AircraftId(a), AircraftId(b), true);
                }
                EventKind::RestoreLink { between: (a, b) } => {
                    network.set_link_blocked(AircraftId(a), AircraftId(b), false);
                }
                EventKind::GpsOff { vehicle } => {
                    gps_ok[index_of[&AircraftId(vehicle)]] = false;
                }
                EventKind::GpsOn { vehicle } => {
                    gps_ok[index_of[&AircraftId(vehicle)]] = true;
                }
            }
            next_event += 1;
        }

        for (to, msg) in network.deliver_due(now) {
            agents[index_of[&to]].on_message(&msg, now);
        }

        for i in 0..agents.len() {
            if now < offsets[i] || !(now - offsets[i]).is_multiple_of(period) {
                continue;
            }
            // A fix on top of the center has no phase; the agent treats
            // that tick as an unreliable fix and coasts.
            let (own_phase, reliable) = match phase(vehicles[i].position, center) {
                Ok(theta) => (theta, gps_ok[i]),
                Err(_) => (f64::NAN, false),
            };
            let out = agents[i].control_step(own_phase, GpsStatus { reliable }, now);
            if let Some(msg) = out.outgoing {
                network
                    .broadcast(msg, ids[i], &neighbor_lists[i], now)
                    .expect("all fleet ids are registered");
            }
            agent_dump.push_str(&agents[i].state_csv_row(
                now,
                vehicles[i].position.x,
                vehicles[i].position.y,
                vehicles[i].yaw,
            ));
            agent_dump.push('\n');
        }

        let mut commands = Vec::with_capacity(ids.len());
        let mut samples = Vec::with_capacity(ids.len());
        let mut thetas = Vec::with_capacity(ids.len());
        for i in 0..ids.len() {
            let circle = agents[i].effective_circle();
            // Exactly on the center the field has no direction; command
            // straight flight through the singularity.
            let raw = yaw_rate_command(&circle, &gvf, &vehicles[i]).unwrap_or(0.0);
            let limit = yaw_rate_limit(max_bank, vehicles[i].speed, gravity);
            let u = raw.clamp(-limit, limit);
            commands.push(u);

            let theta = phase(vehicles[i].position, center).unwrap_or(f64::NAN);
            thetas.push(theta);
            samples.push(VehicleSample {
                position: vehicles[i].position,
                yaw: vehicles[i].yaw,
                theta,
                level_error: circle.level_error(vehicles[i].position),
                u_r: agents[i].u_r(),
                effective_radius: agents[i].effective_radius(),
                bank: bank_angle(u, vehicles[i].speed, gravity),
            });
        }
        let edge_phase_errors = graph
            .edges()
            .iter()
            .map(|&(tail, head)| {
                wrap_angle(thetas[index_of[&tail]] - thetas[index_of[&head]])
            })
            .collect();
        log.push(TelemetryFrame {
            time_ms: now,
            vehicles: samples,
            edge_phase_errors,
        });

        if tick < n_ticks {
            for i in 0..vehicles.len() {
                vehicles[i] = step(&vehicles[i], commands[i], dt_s)
                    .expect("commands are clamped and the step validated");
            }
        }
    }

    Ok(RunOutput {
        log,
        trace: network.trace().to_vec(),
        agent_dump,
        messages_sent: network.sent(),
        messages_delivered: network.delivered(),
        messages_dropped: network.dropped(),
    })
}

/// The settling time of a log: the first instant from which the largest
/// edge phase error stays below `threshold` for the rest of the run.
/// None if the log is empty or the final frame still violates.
pub fn sync_time(log: &TelemetryLog, threshold: f64) -> Option<f64> {
    assert!(threshold > 0.0, "threshold must be positive");
    let frames = &log.frames;
    // A NaN error (corrupt log) counts as a violation rather than as settled.
    let last_violation = frames.iter().rposition(|f| {
        let z = f.max_abs_phase_error();
        z >= threshold || z.is_nan()
    });
    match last_violation {
        None => frames.first().map(|f| f.time_ms as f64 / 1000.0),
        Some(i) if i + 1 == frames.len() => None,
        Some(i) => Some(frames[i + 1].time_ms as f64 / 1000.0),
    }
}
