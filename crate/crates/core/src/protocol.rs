//! The per-aircraft agent: neighbour bookkeeping, staleness filtering,
//! periodic radius modulation and GPS-gated transmission.
//!
//! Agents are sequential state machines that see the world only through
//! phase messages and their own (possibly unreliable) position fix. All
//! state is local and sized by the neighbour count, never by the fleet:
//! a vehicle with three neighbours keeps three table rows no matter how
//! many aircraft share the sky.

use crate::angles::wrap_angle;
use crate::curve::ImplicitCurve;
use crate::formation::{consensus_sum, modulated_radius, AircraftId, ConsensusParams};
use crate::gvf::GvfParams;
use crate::netsim::PhaseMessage;
use nalgebra::Vector2;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Control ticks default to 2 Hz.
pub const DEFAULT_CONTROL_PERIOD_MS: u64 = 500;
/// Rows older than this are left out of the consensus.
pub const DEFAULT_STALENESS_TIMEOUT_MS: u64 = 2000;

/// Errors raised when building an agent from an invalid configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("agent base path must be a circle")]
    BaseNotACircle,
    #[error("control period must be positive")]
    InvalidControlPeriod,
    #[error("staleness timeout must be positive")]
    InvalidStalenessTimeout,
    #[error("invalid guidance gains: {0}")]
    InvalidGvf(String),
    #[error("invalid consensus parameters: {0}")]
    InvalidConsensus(String),
}

/// Position-fix quality; phases measured without a reliable fix are
/// neither used nor transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpsStatus {
    pub reliable: bool,
}

/// Last phase heard from one neighbour, when it was measured and when it
/// arrived. Staleness is judged by arrival; the measurement time is what
/// the consensus aligns epochs with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborRow {
    pub theta: f64,
    pub sent_at_ms: u64,
    pub last_update_ms: u64,
}

/// Registered neighbour set plus the latest phase heard from each.
///
/// Messages from senders outside the registered set are dropped on the
/// floor, so the table never grows beyond the neighbour count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborTable {
    members: BTreeSet<AircraftId>,
    rows: BTreeMap<AircraftId, NeighborRow>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `id` to the neighbour set. Idempotent.
    pub fn register(&mut self, id: AircraftId) {
        self.members.insert(id);
    }

    /// Removes `id` from the neighbour set along with any stored row.
    pub fn delete(&mut self, id: AircraftId) {
        self.members.remove(&id);
        self.rows.remove(&id);
    }

    pub fn is_registered(&self, id: AircraftId) -> bool {
        self.members.contains(&id)
    }

    /// Upserts the sender's row if the sender is a registered neighbour;
    /// otherwise the message is ignored.
    pub fn on_message(&mut self, msg: &PhaseMessage, now_ms: u64) {
        if !self.members.contains(&msg.sender) {
            return;
        }
        self.rows.insert(
            msg.sender,
            NeighborRow {
                theta: wrap_angle(msg.theta),
                sent_at_ms: msg.sent_at_ms,
                last_update_ms: now_ms,
            },
        );
    }

    /// Rows fresh enough to use: age at most `timeout_ms`, the boundary
    /// included (a row exactly `timeout_ms` old still counts).
    pub fn live_rows(
        &self,
        now_ms: u64,
        timeout_ms: u64,
    ) -> impl Iterator<Item = (AircraftId, NeighborRow)> + '_ {
        self.rows.iter().filter_map(move |(&id, &row)| {
            let age = now_ms.saturating_sub(row.last_update_ms);
            (age <= timeout_ms).then_some((id, row))
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }
}

/// Static configuration of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub id: AircraftId,
    pub control_period_ms: u64,
    pub staleness_timeout_ms: u64,
    pub consensus: ConsensusParams,
    pub gvf: GvfParams,
    pub base_circle: ImplicitCurve,
}

impl AgentConfig {
    /// Builds a configuration with the default 2 Hz period and 2 s
    /// staleness timeout.
    pub fn new(
        id: AircraftId,
        base_circle: ImplicitCurve,
        gvf: GvfParams,
        consensus: ConsensusParams,
    ) -> Result<Self, ProtocolError> {
        let cfg = AgentConfig {
            id,
            control_period_ms: DEFAULT_CONTROL_PERIOD_MS,
            staleness_timeout_ms: DEFAULT_STALENESS_TIMEOUT_MS,
            consensus,
            gvf,
            base_circle,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.base_circle.as_circle().is_none() {
            return Err(ProtocolError::BaseNotACircle);
        }
        if self.control_period_ms == 0 {
            return Err(ProtocolError::InvalidControlPeriod);
        }
        if self.staleness_timeout_ms == 0 {
            return Err(ProtocolError::InvalidStalenessTimeout);
        }
        self.gvf
            .validate()
            .map_err(|e| ProtocolError::InvalidGvf(e.to_string()))?;
        self.consensus
            .validate()
            .map_err(|e| ProtocolError::InvalidConsensus(e.to_string()))?;
        Ok(())
    }
}

/// Result of one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// The circle the guidance law should track until the next tick.
    pub circle: ImplicitCurve,
    /// Phase report for the neighbours; absent while GPS is unreliable.
    pub outgoing: Option<PhaseMessage>,
}

/// One aircraft's formation agent.
#[derive(Debug, Clone)]
pub struct Agent {
    cfg: AgentConfig,
    center: Vector2<f64>,
    base_radius: f64,
    table: NeighborTable,
    /// Own phase at the last control tick with a reliable fix, with the
    /// time it was measured. While GPS is out, the consensus keeps using
    /// this frozen sample.
    own_sample: Option<(u64, f64)>,
    /// Own rotation rate, rad/s, measured between the last two reliable
    /// ticks. Used to advance stored phases to a common epoch so that a
    /// delayed report does not read as a phase lead. Signed: negative
    /// when circulating clockwise.
    phase_rate: f64,
    u_r: f64,
    effective_radius: f64,
    live_neighbors: usize,
}

impl Agent {
    pub fn new(cfg: AgentConfig) -> Result<Self, ProtocolError> {
        cfg.validate()?;
        let (center, base_radius) = cfg.base_circle.as_circle().unwrap();
        Ok(Agent {
            cfg,
            center,
            base_radius,
            table: NeighborTable::new(),
            own_sample: None,
            phase_rate: 0.0,
            u_r: 0.0,
            effective_radius: base_radius,
            live_neighbors: 0,
        })
    }

    pub fn id(&self) -> AircraftId {
        self.cfg.id
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn register_neighbor(&mut self, id: AircraftId) {
        debug_assert_ne!(id, self.cfg.id, "an agent cannot neighbour itself");
        if id != self.cfg.id {
            self.table.register(id);
        }
    }

    pub fn delete_neighbor(&mut self, id: AircraftId) {
        self.table.delete(id);
    }

    /// Feeds one received message into the neighbour table.
    pub fn on_message(&mut self, msg: &PhaseMessage, now_ms: u64) {
        debug_assert_ne!(msg.sender, self.cfg.id, "agent received its own message");
        self.table.on_message(msg, now_ms);
    }

    /// Runs one control tick: filters stale rows, computes the radius
    /// modulation from the frozen-or-fresh own phase, and emits a phase
    /// report when the fix is reliable.
    ///
    /// The whole fleet rotates between reports, so a neighbour phase
    /// measured `a` seconds ago reads `a` times the angular rate behind
    /// its current value. Comparing raw stored phases would therefore
    /// settle the fleet at a nonzero offset. Each stored phase is instead
    /// advanced to the epoch of the agent's own sample using the agent's
    /// own measured rotation rate; the consensus then drives the true
    /// phase differences to zero regardless of message timing.
    pub fn control_step(&mut self, own_phase: f64, gps: GpsStatus, now_ms: u64) -> ControlOutput {
        if gps.reliable {
            let theta = wrap_angle(own_phase);
            if let Some((prev_ms, prev_theta)) = self.own_sample {
                if now_ms > prev_ms {
                    self.phase_rate =
                        wrap_angle(theta - prev_theta) * 1000.0 / (now_ms - prev_ms) as f64;
                }
            }
            self.own_sample = Some((now_ms, theta));
        }

        match self.own_sample {
            Some((own_ms, theta_i)) => {
                let mut n_live = 0usize;
                let sum = consensus_sum(
                    theta_i,
                    self.table
                        .live_rows(now_ms, self.cfg.staleness_timeout_ms)
                        .map(|(_, row)| {
                            n_live += 1;
                            let lag_s = (own_ms as f64 - row.sent_at_ms as f64) / 1000.0;
                            row.theta + self.phase_rate * lag_s
                        }),
                );
                self.u_r = self.cfg.consensus.k_r * self.cfg.gvf.sense.phase_direction() * sum;
                self.live_neighbors = n_live;
            }
            None => {
                // No fix has ever been good: coast on the base circle.
                self.u_r = 0.0;
                self.live_neighbors = 0;
            }
        }
        self.effective_radius = modulated_radius(self.base_radius, self.u_r, &self.cfg.consensus);

        let outgoing = if gps.reliable {
            Some(PhaseMessage {
                sender: self.cfg.id,
                theta: self.own_sample.unwrap().1,
                sent_at_ms: now_ms,
            })
        } else {
            None
        };
        ControlOutput {
            circle: self.effective_circle(),
            outgoing,
        }
    }

    /// The circle currently handed to the guidance law.
    pub fn effective_circle(&self) -> ImplicitCurve {
        ImplicitCurve::circle(self.center, self.effective_radius)
            .expect("radius clamp keeps the effective radius positive")
    }

    pub fn u_r(&self) -> f64 {
        self.u_r
    }

    pub fn effective_radius(&self) -> f64 {
        self.effective_radius
    }

    pub fn live_neighbors(&self) -> usize {
        self.live_neighbors
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    /// Own phase as of the last reliable fix; NaN if none yet.
    pub fn last_theta(&self) -> f64 {
        self.own_sample.map_or(f64::NAN, |(_, theta)| theta)
    }

    /// Own rotation rate estimate, rad/s; zero until two reliable ticks
    /// have happened.
    pub fn phase_rate(&self) -> f64 {
        self.phase_rate
    }

    /// One row of the agent state dump:
    /// `time_ms,id,x_m,y_m,psi_rad,theta_rad,u_r,radius_eff_m,n_live_neighbors`.
    /// Position and heading come from the caller since the agent only
    /// stores phase-level state.
    pub fn state_csv_row(&self, time_ms: u64, x_m: f64, y_m: f64, psi_rad: f64) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            time_ms,
            self.cfg.id,
            x_m,
            y_m,
            psi_rad,
            self.last_theta(),
            self.u_r,
            self.effective_radius,
            self.live_neighbors
        )
    }
}

/// Header matching [`Agent::state_csv_row`].
pub const STATE_CSV_HEADER: &str =
    "time_ms,id,x_m,y_m,psi_rad,theta_rad,u_r,radius_eff_m,n_live_neighbors";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::RadiusConvention;
    use crate::gvf::RotationSense;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn msg(sender: u8, theta: f64, at: u64) -> PhaseMessage {
        PhaseMessage {
            sender: AircraftId(sender),
            theta,
            sent_at_ms: at,
        }
    }

    fn test_agent(id: u8, sense: RotationSense) -> Agent {
        let base = ImplicitCurve::circle(Vector2::zeros(), 30.0).unwrap();
        let gvf = GvfParams::new(2e-3, 1.0, sense).unwrap();
        let consensus = ConsensusParams::new(10.0, RadiusConvention::RadiusShift).unwrap();
        Agent::new(AgentConfig::new(AircraftId(id), base, gvf, consensus).unwrap()).unwrap()
    }

    #[test]
    fn table_upserts_only_registered_senders() {
        let mut table = NeighborTable::new();
        table.register(AircraftId(2));

        table.on_message(&msg(2, 0.4, 100), 100);
        assert_eq!(table.len(), 1);
        table.on_message(&msg(2, 0.6, 200), 200);
        assert_eq!(table.len(), 1);
        let (_, row) = table.live_rows(200, 2000).next().unwrap();
        assert_eq!(row.theta, 0.6);
        assert_eq!(row.last_update_ms, 200);

        table.on_message(&msg(9, 1.0, 250), 250);
        assert_eq!(table.len(), 1, "unregistered sender must be ignored");
    }

    #[test]
    fn register_delete_lifecycle() {
        let mut table = NeighborTable::new();
        table.register(AircraftId(3));
        table.register(AircraftId(3));
        assert_eq!(table.member_count(), 1, "double-register is idempotent");

        table.on_message(&msg(3, 0.1, 10), 10);
        assert_eq!(table.len(), 1);

        table.delete(AircraftId(3));
        assert_eq!(table.len(), 0);
        table.on_message(&msg(3, 0.2, 20), 20);
        assert_eq!(table.len(), 0, "deleted neighbour stays ignored");
    }

    #[test]
    fn staleness_boundary_is_inclusive() {
        let mut table = NeighborTable::new();
        table.register(AircraftId(2));
        table.on_message(&msg(2, 0.5, 1000), 1000);

        assert_eq!(table.live_rows(3000, 2000).count(), 1, "age 2000 ms is live");
        assert_eq!(table.live_rows(3001, 2000).count(), 0, "age 2001 ms is stale");
    }

    #[test]
    fn all_stale_rows_give_base_circle() {
        let mut agent = test_agent(1, RotationSense::Counterclockwise);
        agent.register_neighbor(AircraftId(2));
        agent.on_message(&msg(2, 1.0, 0), 0);

        let out = agent.control_step(0.0, GpsStatus { reliable: true }, 5000);
        assert_eq!(agent.u_r(), 0.0);
        assert_eq!(agent.live_neighbors(), 0);
        assert_eq!(out.circle.as_circle().unwrap().1, 30.0);
    }

    #[test]
    fn gps_outage_blocks_transmit_but_not_modulation() {
        let mut agent = test_agent(1, RotationSense::Counterclockwise);
        agent.register_neighbor(AircraftId(2));

        // First tick with a good fix establishes theta = 0.3.
        let out = agent.control_step(0.3, GpsStatus { reliable: true }, 0);
        assert!(out.outgoing.is_some());

        // Fix drops. The measured phase argument must be ignored in favour
        // of the frozen 0.3, and nothing is transmitted.
        agent.on_message(&msg(2, 0.1, 400), 400);
        let out = agent.control_step(9.9, GpsStatus { reliable: false }, 500);
        assert!(out.outgoing.is_none());
        assert_relative_eq!(agent.u_r(), 10.0 * (0.3 - 0.1), epsilon = 1e-12);
        assert!(out.circle.as_circle().unwrap().1 > 30.0);
    }

    #[test]
    fn never_fixed_agent_coasts_and_stays_silent() {
        let mut agent = test_agent(1, RotationSense::Counterclockwise);
        agent.register_neighbor(AircraftId(2));
        agent.on_message(&msg(2, 1.0, 0), 0);

        let out = agent.control_step(0.7, GpsStatus { reliable: false }, 0);
        assert!(out.outgoing.is_none());
        assert_eq!(agent.u_r(), 0.0);
        assert_eq!(out.circle.as_circle().unwrap().1, 30.0);
    }

    #[test]
    fn equal_phases_are_a_fixed_point() {
        let mut agent = test_agent(1, RotationSense::Clockwise);
        agent.register_neighbor(AircraftId(2));
        agent.register_neighbor(AircraftId(3));
        agent.on_message(&msg(2, 0.8, 100), 100);
        agent.on_message(&msg(3, 0.8, 150), 150);

        let out = agent.control_step(0.8, GpsStatus { reliable: true }, 500);
        assert_eq!(agent.u_r(), 0.0);
        assert_eq!(agent.live_neighbors(), 2);
        assert_eq!(out.circle.as_circle().unwrap().1, 30.0);
        let sent = out.outgoing.unwrap();
        assert_eq!(sent.sender, AircraftId(1));
        assert_eq!(sent.theta, 0.8);
        assert_eq!(sent.sent_at_ms, 500);
    }

    #[test]
    fn mirrored_tables_give_opposite_inputs() {
        for sense in [RotationSense::Clockwise, RotationSense::Counterclockwise] {
            let mut a = test_agent(1, sense);
            let mut b = test_agent(2, sense);
            a.register_neighbor(AircraftId(2));
            b.register_neighbor(AircraftId(1));

            a.on_message(&msg(2, -0.4, 100), 100);
            b.on_message(&msg(1, 1.1, 100), 100);
            a.control_step(1.1, GpsStatus { reliable: true }, 500);
            b.control_step(-0.4, GpsStatus { reliable: true }, 500);

            assert_eq!(a.u_r(), -b.u_r());
            assert_ne!(a.u_r(), 0.0);
        }
    }

    #[test]
    fn stale_reports_from_a_rotating_fleet_do_not_bias_the_consensus() {
        // Both vehicles circulate clockwise at 0.3 rad/s, perfectly in
        // phase. The neighbour's report is 200 ms old by the time this
        // agent ticks; read raw it would look like a phase lead.
        let mut agent = test_agent(1, RotationSense::Clockwise);
        agent.register_neighbor(AircraftId(2));

        agent.control_step(1.0, GpsStatus { reliable: true }, 0);
        let neighbor_at_300 = 1.0 - 0.3 * 0.3;
        agent.on_message(&msg(2, neighbor_at_300, 300), 320);
        agent.control_step(1.0 - 0.3 * 0.5, GpsStatus { reliable: true }, 500);

        assert_relative_eq!(agent.phase_rate(), -0.3, epsilon = 1e-12);
        assert_relative_eq!(agent.u_r(), 0.0, epsilon = 1e-9);

        // The alignment also holds against a frozen own sample: newer
        // neighbour data is wound back to the freeze epoch.
        let neighbor_at_900 = 1.0 - 0.3 * 0.9;
        agent.on_message(&msg(2, neighbor_at_900, 900), 920);
        agent.control_step(9.9, GpsStatus { reliable: false }, 1000);
        assert_relative_eq!(agent.u_r(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_neighbor_set_degenerates_to_pure_tracking() {
        let mut agent = test_agent(1, RotationSense::Counterclockwise);
        let out = agent.control_step(-2.0, GpsStatus { reliable: true }, 0);
        assert_eq!(agent.u_r(), 0.0);
        assert_eq!(out.circle, ImplicitCurve::circle(Vector2::zeros(), 30.0).unwrap());
        assert!(out.outgoing.is_some());
    }

    #[test]
    fn memory_stays_bounded_by_neighbor_count() {
        let mut agent = test_agent(1, RotationSense::Counterclockwise);
        for id in [10, 20, 30] {
            agent.register_neighbor(AircraftId(id));
        }
        // A 50-vehicle fleet's worth of chatter, mostly from strangers.
        for id in 2..=50u8 {
            for t in 0..10u64 {
                agent.on_message(&msg(id, 0.1, t * 100), t * 100);
            }
        }
        assert!(agent.table_len() <= 3);
    }

    #[test]
    fn phase_wraps_on_ingest_and_on_tick() {
        let mut agent = test_agent(1, RotationSense::Counterclockwise);
        agent.register_neighbor(AircraftId(2));
        agent.on_message(&msg(2, 3.0 * PI, 0), 0);
        agent.control_step(-3.0 * PI, GpsStatus { reliable: true }, 0);
        // Both ingested as pi; equal phases give zero input.
        assert_eq!(agent.u_r(), 0.0);
        assert_eq!(agent.last_theta(), PI);
    }

    #[test]
    fn state_row_schema() {
        let mut agent = test_agent(7, RotationSense::Counterclockwise);
        agent.control_step(0.5, GpsStatus { reliable: true }, 1500);
        let row = agent.state_csv_row(1500, 12.5, -3.0, 0.25);
        assert_eq!(row, "1500,7,12.5,-3,0.25,0.5,0,30,0");
        assert_eq!(
            STATE_CSV_HEADER.split(',').count(),
            row.split(',').count()
        );
    }

    #[test]
    fn config_validation() {
        let base = ImplicitCurve::circle(Vector2::zeros(), 30.0).unwrap();
        let gvf = GvfParams::new(1e-3, 1.0, RotationSense::Clockwise).unwrap();
        let consensus = ConsensusParams::new(5.0, RadiusConvention::RadiusShift).unwrap();

        let ellipse = ImplicitCurve::ellipse(Vector2::zeros(), 2.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            AgentConfig::new(AircraftId(1), ellipse, gvf, consensus),
            Err(ProtocolError::BaseNotACircle)
        ));

        let mut cfg = AgentConfig::new(AircraftId(1), base, gvf, consensus).unwrap();
        assert_eq!(cfg.control_period_ms, 500);
        assert_eq!(cfg.staleness_timeout_ms, 2000);
        cfg.control_period_ms = 0;
        assert!(matches!(cfg.validate(), Err(ProtocolError::InvalidControlPeriod)));
    }
}
