//! Full-state run logs and their CSV form.
//!
//! A log is a sequence of frames sampled on the physics clock, seen by an
//! omniscient observer: positions, headings and phases are ground truth,
//! not the agents' possibly stale view. The CSV header carries the
//! vehicle ids and graph edges, so a log file is self-describing and the
//! metrics tooling needs no scenario file to interpret it.
//!
//! Floats are written with Rust's shortest-roundtrip formatting: parsing
//! a written value recovers the exact bits, and equal runs produce
//! byte-identical files.

use crate::formation::AircraftId;
use nalgebra::Vector2;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("csv header is malformed: {0}")]
    BadHeader(String),
    #[error("csv line {line}: {reason}")]
    BadRow { line: usize, reason: String },
    #[error("frame times must be strictly increasing (line {line})")]
    NonMonotonicTime { line: usize },
}

/// Ground-truth state of one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSample {
    pub position: Vector2<f64>,
    pub yaw: f64,
    /// Phase angle around the formation center.
    pub theta: f64,
    /// Level error with respect to the vehicle's current effective circle.
    pub level_error: f64,
    /// Radius-modulation input active at this instant.
    pub u_r: f64,
    pub effective_radius: f64,
    /// Bank angle implied by the saturated yaw-rate command.
    pub bank: f64,
}

/// One sampling instant: every vehicle plus every edge phase error.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryFrame {
    pub time_ms: u64,
    /// One sample per vehicle, in the log's id order.
    pub vehicles: Vec<VehicleSample>,
    /// Wrapped phase differences, one per edge, in the log's edge order.
    pub edge_phase_errors: Vec<f64>,
}

impl TelemetryFrame {
    /// Largest edge phase error magnitude; zero when the graph has no
    /// edges (a lone vehicle is trivially synchronized).
    pub fn max_abs_phase_error(&self) -> f64 {
        self.edge_phase_errors
            .iter()
            .fold(0.0, |acc, z| acc.max(z.abs()))
    }
}

/// A full run recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryLog {
    pub vehicle_ids: Vec<AircraftId>,
    /// Directed edges (tail, head) matching `edge_phase_errors`.
    pub edges: Vec<(AircraftId, AircraftId)>,
    pub frames: Vec<TelemetryFrame>,
}

const VEHICLE_FIELDS: [&str; 8] = [
    "x_m",
    "y_m",
    "psi_rad",
    "theta_rad",
    "e_m2",
    "u_r",
    "radius_eff_m",
    "bank_rad",
];

impl TelemetryLog {
    pub fn new(vehicle_ids: Vec<AircraftId>, edges: Vec<(AircraftId, AircraftId)>) -> Self {
        TelemetryLog {
            vehicle_ids,
            edges,
            frames: Vec::new(),
        }
    }

    /// Appends a frame; the shape must match the log and time must
    /// advance.
    pub fn push(&mut self, frame: TelemetryFrame) {
        debug_assert_eq!(frame.vehicles.len(), self.vehicle_ids.len());
        debug_assert_eq!(frame.edge_phase_errors.len(), self.edges.len());
        debug_assert!(self
            .frames
            .last()
            .is_none_or(|last| frame.time_ms > last.time_ms));
        self.frames.push(frame);
    }

    pub fn header(&self) -> String {
        let mut cols = vec!["time_ms".to_string()];
        for id in &self.vehicle_ids {
            for field in VEHICLE_FIELDS {
                cols.push(format!("v{id}_{field}"));
            }
        }
        for (tail, head) in &self.edges {
            cols.push(format!("z_{tail}_{head}_rad"));
        }
        cols.join(",")
    }

    /// Serializes the whole log, optionally keeping only every
    /// `decimation`-th frame (the first and last frames always survive).
    pub fn to_csv_string_decimated(&self, decimation: usize) -> String {
        let step = decimation.max(1);
        let mut out = self.header();
        out.push('\n');
        let last = self.frames.len().saturating_sub(1);
        for (i, frame) in self.frames.iter().enumerate() {
            if i % step != 0 && i != last {
                continue;
            }
            let _ = write!(out, "{}", frame.time_ms);
            for v in &frame.vehicles {
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{},{},{}",
                    v.position.x,
                    v.position.y,
                    v.yaw,
                    v.theta,
                    v.level_error,
                    v.u_r,
                    v.effective_radius,
                    v.bank
                );
            }
            for z in &frame.edge_phase_errors {
                let _ = write!(out, ",{z}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv_string(&self) -> String {
        self.to_csv_string_decimated(1)
    }

    /// Parses a file produced by [`TelemetryLog::to_csv_string`],
    /// recovering ids and edges from the header.
    pub fn from_csv_str(text: &str) -> Result<Self, TelemetryError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| TelemetryError::BadHeader("empty file".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"time_ms") {
            return Err(TelemetryError::BadHeader(
                "first column must be time_ms".into(),
            ));
        }

        let mut vehicle_ids = Vec::new();
        let mut edges = Vec::new();
        let mut i = 1;
        while i < cols.len() {
            if let Some(rest) = cols[i].strip_prefix('v') {
                let id: u8 = rest
                    .strip_suffix("_x_m")
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| TelemetryError::BadHeader(format!("bad column {}", cols[i])))?;
                for (k, field) in VEHICLE_FIELDS.iter().enumerate() {
                    let expect = format!("v{id}_{field}");
                    if cols.get(i + k) != Some(&expect.as_str()) {
                        return Err(TelemetryError::BadHeader(format!(
                            "expected column {expect}, found {}",
                            cols.get(i + k).unwrap_or(&"<none>")
                        )));
                    }
                }
                vehicle_ids.push(AircraftId(id));
                i += VEHICLE_FIELDS.len();
            } else if let Some(rest) = cols[i].strip_prefix("z_") {
                let pair = rest.strip_suffix("_rad").and_then(|p| {
                    let (a, b) = p.split_once('_')?;
                    Some((a.parse::<u8>().ok()?, b.parse::<u8>().ok()?))
                });
                let (a, b) = pair
                    .ok_or_else(|| TelemetryError::BadHeader(format!("bad column {}", cols[i])))?;
                edges.push((AircraftId(a), AircraftId(b)));
                i += 1;
            } else {
                return Err(TelemetryError::BadHeader(format!(
                    "unrecognized column {}",
                    cols[i]
                )));
            }
        }

        let mut log = TelemetryLog::new(vehicle_ids, edges);
        let expected = 1 + log.vehicle_ids.len() * VEHICLE_FIELDS.len() + log.edges.len();
        for (lineno, line) in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != expected {
                return Err(TelemetryError::BadRow {
                    line: lineno + 1,
                    reason: format!("expected {expected} fields, found {}", fields.len()),
                });
            }
            let time_ms: u64 = fields[0].parse().map_err(|e| TelemetryError::BadRow {
                line: lineno + 1,
                reason: format!("bad time: {e}"),
            })?;
            if log.frames.last().is_some_and(|f| f.time_ms >= time_ms) {
                return Err(TelemetryError::NonMonotonicTime { line: lineno + 1 });
            }
            let mut nums = fields[1..].iter().map(|f| f.parse::<f64>());
            let mut next = |reason: &str| {
                nums.next()
                    .expect("field count checked")
                    .map_err(|e| TelemetryError::BadRow {
                        line: lineno + 1,
                        reason: format!("{reason}: {e}"),
                    })
            };
            let mut vehicles = Vec::with_capacity(log.vehicle_ids.len());
            for _ in &log.vehicle_ids {
                vehicles.push(VehicleSample {
                    position: Vector2::new(next("x")?, next("y")?),
                    yaw: next("psi")?,
                    theta: next("theta")?,
                    level_error: next("e")?,
                    u_r: next("u_r")?,
                    effective_radius: next("radius")?,
                    bank: next("bank")?,
                });
            }
            let mut edge_phase_errors = Vec::with_capacity(log.edges.len());
            for _ in &log.edges {
                edge_phase_errors.push(next("z")?);
            }
            log.frames.push(TelemetryFrame {
                time_ms,
                vehicles,
                edge_phase_errors,
            });
        }
        Ok(log)
    }

    /// Axis-aligned bounding box of every recorded position, as
    /// (min corner, max corner). None for an empty log.
    pub fn position_extent(&self) -> Option<(Vector2<f64>, Vector2<f64>)> {
        let mut iter = self
            .frames
            .iter()
            .flat_map(|f| f.vehicles.iter().map(|v| v.position));
        let first = iter.next()?;
        let (mut lo, mut hi) = (first, first);
        for p in iter {
            lo = Vector2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vector2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        Some((lo, hi))
    }

    /// Largest edge phase error of the final frame; None for an empty log.
    pub fn final_max_phase_error(&self) -> Option<f64> {
        self.frames.last().map(|f| f.max_abs_phase_error())
    }
}
