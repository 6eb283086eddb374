//! Deterministic air-to-air message transport with delay and loss.
//!
//! The network is advanced only at simulation ticks by a single owner.
//! Every random decision (drop, delay jitter) comes from one seeded
//! generator, consumed in a fixed discipline per send: one draw for the
//! drop decision, then one draw for the delay when the link has jitter.
//! The full delivery trace is therefore a pure function of the seed and
//! the sequence of send calls.

use crate::formation::AircraftId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use thiserror::Error;

/// Errors raised by the transport.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("vehicle id {0} is not registered with the network")]
    UnknownId(AircraftId),
    #[error("drop probability must lie in [0, 1], got {0}")]
    InvalidDropProbability(f64),
    #[error("delay range is empty: min {min_ms} ms > max {max_ms} ms")]
    EmptyDelayRange { min_ms: u64, max_ms: u64 },
}

/// One phase report on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMessage {
    pub sender: AircraftId,
    /// Sender's phase in radians.
    pub theta: f64,
    /// Simulation time the message left the sender.
    pub sent_at_ms: u64,
}

/// Link delay: fixed, or sampled uniformly per message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayModel {
    Fixed(u64),
    Uniform { min_ms: u64, max_ms: u64 },
}

/// Loss and delay characteristics shared by every link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub delay: DelayModel,
    /// Probability a message is lost, in [0, 1]. 1 models a dead link.
    pub drop_probability: f64,
    pub seed: u64,
}

impl LinkModel {
    /// A lossless zero-delay link; handy in tests.
    pub fn perfect(seed: u64) -> Self {
        LinkModel {
            delay: DelayModel::Fixed(0),
            drop_probability: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.drop_probability.is_finite()
            && (0.0..=1.0).contains(&self.drop_probability))
        {
            return Err(NetError::InvalidDropProbability(self.drop_probability));
        }
        if let DelayModel::Uniform { min_ms, max_ms } = self.delay {
            if min_ms > max_ms {
                return Err(NetError::EmptyDelayRange { min_ms, max_ms });
            }
        }
        Ok(())
    }
}

/// What happened to a message, for trace dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    Send,
    Drop,
    Deliver,
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceKind::Send => "SEND",
            TraceKind::Drop => "DROP",
            TraceKind::Deliver => "DELIVER",
        })
    }
}

/// One transport event. `Display` renders the wire line
/// `time_ms,event,from,to,theta_rad` with theta at 9 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub time_ms: u64,
    pub kind: TraceKind,
    pub from: AircraftId,
    pub to: AircraftId,
    pub theta: f64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{:.8e}",
            self.time_ms, self.kind, self.from, self.to, self.theta
        )
    }
}

/// Queue entry ordered by (delivery time, insertion order); the payload
/// takes no part in the ordering.
#[derive(Debug, Clone)]
struct Queued {
    due_ms: u64,
    seq: u64,
    to: AircraftId,
    from: AircraftId,
    msg: PhaseMessage,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.due_ms, self.seq) == (other.due_ms, other.seq)
    }
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.due_ms, self.seq).cmp(&(other.due_ms, other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// The message network. Owns the delivery queue, the RNG and the trace.
#[derive(Debug, Clone)]
pub struct Network {
    link: LinkModel,
    rng: ChaCha8Rng,
    registered: BTreeSet<AircraftId>,
    queue: BinaryHeap<Reverse<Queued>>,
    blocked: BTreeSet<(AircraftId, AircraftId)>,
    next_seq: u64,
    trace: Vec<TraceEvent>,
    sent: u64,
    delivered: u64,
    dropped: u64,
}

impl Network {
    pub fn new(link: LinkModel) -> Result<Self, NetError> {
        link.validate()?;
        Ok(Network {
            link,
            rng: ChaCha8Rng::seed_from_u64(link.seed),
            registered: BTreeSet::new(),
            queue: BinaryHeap::new(),
            blocked: BTreeSet::new(),
            next_seq: 0,
            trace: Vec::new(),
            sent: 0,
            delivered: 0,
            dropped: 0,
        })
    }

    /// Makes an id addressable. Idempotent.
    pub fn register(&mut self, id: AircraftId) {
        self.registered.insert(id);
    }

    /// Severs or restores the (undirected) link between two vehicles.
    /// Messages sent over a severed link are recorded as dropped without
    /// consuming randomness.
    pub fn set_link_blocked(&mut self, a: AircraftId, b: AircraftId, blocked: bool) {
        let key = if a < b { (a, b) } else { (b, a) };
        if blocked {
            self.blocked.insert(key);
        } else {
            self.blocked.remove(&key);
        }
    }

    /// Sends one message. It is either enqueued for delivery at
    /// `now + delay` or recorded dropped, with the loss probability of the
    /// link model.
    pub fn send(
        &mut self,
        msg: PhaseMessage,
        from: AircraftId,
        to: AircraftId,
        now_ms: u64,
    ) -> Result<(), NetError> {
        for id in [from, to] {
            if !self.registered.contains(&id) {
                return Err(NetError::UnknownId(id));
            }
        }
        self.sent += 1;
        self.push_trace(now_ms, TraceKind::Send, from, to, msg.theta);

        let pair = if from < to { (from, to) } else { (to, from) };
        if self.blocked.contains(&pair) {
            self.dropped += 1;
            self.push_trace(now_ms, TraceKind::Drop, from, to, msg.theta);
            return Ok(());
        }

        let lost = self.rng.gen::<f64>() < self.link.drop_probability;
        if lost {
            self.dropped += 1;
            self.push_trace(now_ms, TraceKind::Drop, from, to, msg.theta);
            return Ok(());
        }

        let delay = match self.link.delay {
            DelayModel::Fixed(ms) => ms,
            DelayModel::Uniform { min_ms, max_ms } => self.rng.gen_range(min_ms..=max_ms),
        };
        self.queue.push(Reverse(Queued {
            due_ms: now_ms + delay,
            seq: self.next_seq,
            to,
            from,
            msg,
        }));
        self.next_seq += 1;
        Ok(())
    }

    /// Fan-out of one message to several recipients, in the given order.
    /// Loss and delay are sampled independently per recipient.
    pub fn broadcast(
        &mut self,
        msg: PhaseMessage,
        from: AircraftId,
        recipients: &[AircraftId],
        now_ms: u64,
    ) -> Result<(), NetError> {
        for &to in recipients {
            self.send(msg, from, to, now_ms)?;
        }
        Ok(())
    }

    /// Removes and returns every message whose delivery time has come
    /// (due <= now), ordered by (delivery time, insertion order). Delivery
    /// trace events carry `now_ms`, the tick at which the recipient
    /// actually sees the message.
    pub fn deliver_due(&mut self, now_ms: u64) -> Vec<(AircraftId, PhaseMessage)> {
        let mut out = Vec::new();
        while let Some(Reverse(entry)) = self.queue.peek() {
            if entry.due_ms > now_ms {
                break;
            }
            let Reverse(entry) = self.queue.pop().unwrap();
            self.delivered += 1;
            self.push_trace(now_ms, TraceKind::Deliver, entry.from, entry.to, entry.msg.theta);
            out.push((entry.to, entry.msg));
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// The trace in wire format, one line per event.
    pub fn trace_dump(&self) -> String {
        let mut s = String::new();
        for event in &self.trace {
            s.push_str(&event.to_string());
            s.push('\n');
        }
        s
    }

    fn push_trace(&mut self, time_ms: u64, kind: TraceKind, from: AircraftId, to: AircraftId, theta: f64) {
        self.trace.push(TraceEvent {
            time_ms,
            kind,
            from,
            to,
            theta,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(sender: u8, theta: f64, at: u64) -> PhaseMessage {
        PhaseMessage {
            sender: AircraftId(sender),
            theta,
            sent_at_ms: at,
        }
    }

    fn two_node_net(link: LinkModel) -> Network {
        let mut net = Network::new(link).unwrap();
        net.register(AircraftId(1));
        net.register(AircraftId(2));
        net
    }

    #[test]
    fn perfect_link_delivers_same_tick() {
        let mut net = two_node_net(LinkModel::perfect(1));
        net.send(msg(1, 0.5, 100), AircraftId(1), AircraftId(2), 100).unwrap();
        let out = net.deliver_due(100);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0, AircraftId(2));
        assert_eq!(out[0].1.theta, 0.5);
    }

    #[test]
    fn dead_link_never_delivers() {
        let mut net = two_node_net(LinkModel {
            delay: DelayModel::Fixed(0),
            drop_probability: 1.0,
            seed: 3,
        });
        for k in 0..50 {
            net.send(msg(1, 0.1, k), AircraftId(1), AircraftId(2), k).unwrap();
        }
        assert!(net.deliver_due(u64::MAX).is_empty());
        assert_eq!(net.dropped(), 50);
        assert_eq!(net.sent(), 50);
    }

    #[test]
    fn identical_seeds_replay_identically() {
        let link = LinkModel {
            delay: DelayModel::Uniform { min_ms: 0, max_ms: 200 },
            drop_probability: 0.3,
            seed: 42,
        };
        let run = || {
            let mut net = two_node_net(link);
            for k in 0..1000u64 {
                net.send(msg(1, k as f64 * 1e-3, k), AircraftId(1), AircraftId(2), k)
                    .unwrap();
            }
            net.deliver_due(10_000);
            net.trace_dump()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn delivery_order_and_strict_due_times() {
        let mut net = two_node_net(LinkModel {
            delay: DelayModel::Fixed(5),
            drop_probability: 0.0,
            seed: 0,
        });
        net.send(msg(1, 0.1, 100), AircraftId(1), AircraftId(2), 100).unwrap();
        net.send(msg(1, 0.2, 100), AircraftId(1), AircraftId(2), 100).unwrap();
        assert!(net.deliver_due(104).is_empty(), "due at 105 must not appear at 104");
        let out = net.deliver_due(105);
        assert_eq!(out.len(), 2);
        // Same due millisecond: insertion order breaks the tie.
        assert_eq!(out[0].1.theta, 0.1);
        assert_eq!(out[1].1.theta, 0.2);
    }

    #[test]
    fn empty_queue_yields_empty_list() {
        let mut net = two_node_net(LinkModel::perfect(0));
        assert!(net.deliver_due(1_000).is_empty());
    }

    #[test]
    fn unknown_ids_are_rejected() {
        let mut net = Network::new(LinkModel::perfect(0)).unwrap();
        net.register(AircraftId(1));
        let err = net
            .send(msg(1, 0.0, 0), AircraftId(1), AircraftId(9), 0)
            .unwrap_err();
        assert_eq!(err, NetError::UnknownId(AircraftId(9)));
        let err = net
            .send(msg(7, 0.0, 0), AircraftId(7), AircraftId(1), 0)
            .unwrap_err();
        assert_eq!(err, NetError::UnknownId(AircraftId(7)));
    }

    #[test]
    fn counts_reconcile() {
        let mut net = two_node_net(LinkModel {
            delay: DelayModel::Uniform { min_ms: 0, max_ms: 50 },
            drop_probability: 0.4,
            seed: 9,
        });
        for k in 0..500u64 {
            net.send(msg(1, 0.0, k), AircraftId(1), AircraftId(2), k).unwrap();
        }
        let before_drain = net.delivered() + net.dropped() + net.pending() as u64;
        assert_eq!(before_drain, net.sent());
        net.deliver_due(u64::MAX);
        assert_eq!(net.pending(), 0);
        assert_eq!(net.delivered() + net.dropped(), net.sent());
        assert!(net.dropped() > 0 && net.delivered() > 0);
    }

    #[test]
    fn constant_delay_preserves_per_pair_order() {
        let mut net = two_node_net(LinkModel {
            delay: DelayModel::Fixed(30),
            drop_probability: 0.0,
            seed: 0,
        });
        for k in 0..20u64 {
            net.send(msg(1, k as f64, k * 10), AircraftId(1), AircraftId(2), k * 10)
                .unwrap();
        }
        let out = net.deliver_due(u64::MAX);
        let thetas: Vec<f64> = out.iter().map(|(_, m)| m.theta).collect();
        let mut sorted = thetas.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(thetas, sorted);
    }

    #[test]
    fn blocked_pair_drops_without_consuming_randomness() {
        let mut net = two_node_net(LinkModel {
            delay: DelayModel::Uniform { min_ms: 0, max_ms: 100 },
            drop_probability: 0.5,
            seed: 77,
        });
        net.set_link_blocked(AircraftId(1), AircraftId(2), true);
        net.send(msg(1, 0.0, 0), AircraftId(1), AircraftId(2), 0).unwrap();
        assert_eq!(net.dropped(), 1);
        net.set_link_blocked(AircraftId(2), AircraftId(1), false);

        // After unblocking, the RNG stream continues exactly where a
        // never-blocked network's stream would be after zero draws.
        let mut fresh = two_node_net(LinkModel {
            delay: DelayModel::Uniform { min_ms: 0, max_ms: 100 },
            drop_probability: 0.5,
            seed: 77,
        });
        for k in 1..200u64 {
            net.send(msg(1, 0.0, k), AircraftId(1), AircraftId(2), k).unwrap();
            fresh.send(msg(1, 0.0, k), AircraftId(1), AircraftId(2), k).unwrap();
        }
        assert_eq!(net.dropped() - 1, fresh.dropped());
    }

    #[test]
    fn trace_lines_have_wire_format() {
        let mut net = two_node_net(LinkModel::perfect(0));
        net.send(msg(1, std::f64::consts::PI, 500), AircraftId(1), AircraftId(2), 500)
            .unwrap();
        net.deliver_due(500);
        let dump = net.trace_dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "500,SEND,1,2,3.14159265e0");
        assert_eq!(lines[1], "500,DELIVER,1,2,3.14159265e0");
    }

    #[test]
    fn rejects_invalid_link_models() {
        assert!(Network::new(LinkModel {
            delay: DelayModel::Fixed(0),
            drop_probability: 1.5,
            seed: 0,
        })
        .is_err());
        assert!(Network::new(LinkModel {
            delay: DelayModel::Uniform { min_ms: 10, max_ms: 5 },
            drop_probability: 0.0,
            seed: 0,
        })
        .is_err());
    }
}
