//! Phase coordination of a fleet orbiting a common circle.
//!
//! Every vehicle has a phase, its polar angle around the circle center.
//! The fleet topology is an undirected graph; each vehicle compares its
//! phase against its graph neighbours and shifts its own orbit radius by
//! the (gained) sum of wrapped phase differences. A vehicle ahead of its
//! neighbours in the direction of circulation receives a larger radius and
//! therefore a smaller angular speed, so phase differences shrink. The
//! consensus input is computed per vehicle from local data only, which is
//! what makes the scheme distributable.

use crate::angles::wrap_angle;
use crate::curve::ImplicitCurve;
use crate::gvf::RotationSense;
use nalgebra::{DMatrix, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Errors raised by graph construction and phase bookkeeping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormationError {
    #[error("duplicate vehicle id {0} in vertex list")]
    DuplicateVertex(AircraftId),
    #[error("edge references unknown vehicle id {0}")]
    UnknownVertex(AircraftId),
    #[error("self-loop on vehicle id {0}")]
    SelfLoop(AircraftId),
    #[error("duplicate edge between {0} and {1}")]
    DuplicateEdge(AircraftId, AircraftId),
    #[error("phase is undefined at the circle center ({x}, {y})")]
    UndefinedPhase { x: f64, y: f64 },
    #[error("no phase recorded for vehicle id {0}")]
    MissingPhase(AircraftId),
    #[error("radius modulation requires a circular base path")]
    NotACircle,
    #[error("consensus gain k_r must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("radius clamp factors must satisfy 0 < min < 1 < max, got ({0}, {1})")]
    InvalidRadiusClamp(f64, f64),
}

/// Vehicle identifier carried in every message; one byte on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AircraftId(pub u8);

impl fmt::Display for AircraftId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Undirected communication/coordination topology over the fleet.
///
/// Edges are stored with the orientation given at construction; the
/// orientation fixes the sign convention of the incidence matrix and of
/// per-edge phase errors, nothing else.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    vertices: Vec<AircraftId>,
    edges: Vec<(AircraftId, AircraftId)>,
}

impl FormationGraph {
    /// Builds a graph, rejecting duplicate vertices, unknown endpoints,
    /// self-loops and duplicate edges (in either orientation). Cyclic
    /// graphs are accepted but logged as a warning: phase agreement is
    /// only guaranteed for trees.
    pub fn new(
        vertices: Vec<AircraftId>,
        edges: Vec<(AircraftId, AircraftId)>,
    ) -> Result<Self, FormationError> {
        let mut seen = std::collections::BTreeSet::new();
        for &v in &vertices {
            if !seen.insert(v) {
                return Err(FormationError::DuplicateVertex(v));
            }
        }
        let mut seen_edges = std::collections::BTreeSet::new();
        for &(a, b) in &edges {
            if a == b {
                return Err(FormationError::SelfLoop(a));
            }
            for v in [a, b] {
                if !seen.contains(&v) {
                    return Err(FormationError::UnknownVertex(v));
                }
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if !seen_edges.insert(key) {
                return Err(FormationError::DuplicateEdge(a, b));
            }
        }
        let graph = FormationGraph { vertices, edges };
        if !graph.is_acyclic() {
            log::warn!(
                "formation graph contains a cycle; phase agreement is only guaranteed on trees"
            );
        }
        Ok(graph)
    }

    pub fn vertices(&self) -> &[AircraftId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(AircraftId, AircraftId)] {
        &self.edges
    }

    /// Neighbours of `id`, in edge order.
    pub fn neighbors(&self, id: AircraftId) -> Vec<AircraftId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// True when the graph contains no cycle (i.e. it is a forest).
    pub fn is_acyclic(&self) -> bool {
        let index: BTreeMap<AircraftId, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn root(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for &(a, b) in &self.edges {
            let (ra, rb) = (root(&mut parent, index[&a]), root(&mut parent, index[&b]));
            if ra == rb {
                return false;
            }
            parent[ra] = rb;
        }
        true
    }

    /// Vertex-by-edge incidence matrix: +1 where the vertex is the edge
    /// tail, -1 where it is the head, 0 elsewhere. Rows follow the vertex
    /// list, columns the edge list. Every column sums to zero.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.vertices.len(), self.edges.len());
        let index: BTreeMap<AircraftId, usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        for (k, &(tail, head)) in self.edges.iter().enumerate() {
            b[(index[&tail], k)] = 1.0;
            b[(index[&head], k)] = -1.0;
        }
        b
    }
}

/// Phases per vehicle, radians in (-pi, pi]. Iteration order is by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseVector(BTreeMap<AircraftId, f64>);

impl PhaseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a phase, wrapping it into (-pi, pi]. Non-finite phases are
    /// a caller bug.
    pub fn insert(&mut self, id: AircraftId, theta: f64) {
        assert!(theta.is_finite(), "phase for {id} must be finite");
        self.0.insert(id, wrap_angle(theta));
    }

    pub fn get(&self, id: AircraftId) -> Option<f64> {
        self.0.get(&id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AircraftId, f64)> + '_ {
        self.0.iter().map(|(&id, &t)| (id, t))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(AircraftId, f64)> for PhaseVector {
    fn from_iter<T: IntoIterator<Item = (AircraftId, f64)>>(iter: T) -> Self {
        let mut v = PhaseVector::new();
        for (id, t) in iter {
            v.insert(id, t);
        }
        v
    }
}

/// How the consensus input changes the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusConvention {
    /// The input shifts the radius directly: `rho = r + u_r` (meters).
    RadiusShift,
    /// The input shifts the squared radius: `rho = sqrt(r^2 + u_r)`
    /// (meters squared). Equivalent to `RadiusShift` for small inputs once
    /// the gain is rescaled by `2 r`.
    LevelShift,
}

/// Consensus gain, modulation convention and the radius safety clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsensusParams {
    /// Gain on the summed phase differences. Units depend on the
    /// convention: meters per radian for `RadiusShift`, square meters per
    /// radian for `LevelShift`.
    pub k_r: f64,
    pub convention: RadiusConvention,
    /// Effective radius is kept within `[min_factor * r, max_factor * r]`.
    pub min_radius_factor: f64,
    pub max_radius_factor: f64,
}

impl ConsensusParams {
    /// Builds parameters with the standard radius clamp of 0.2 r to 5 r.
    pub fn new(k_r: f64, convention: RadiusConvention) -> Result<Self, FormationError> {
        Self::with_radius_clamp(k_r, convention, 0.2, 5.0)
    }

    pub fn with_radius_clamp(
        k_r: f64,
        convention: RadiusConvention,
        min_radius_factor: f64,
        max_radius_factor: f64,
    ) -> Result<Self, FormationError> {
        let params = ConsensusParams {
            k_r,
            convention,
            min_radius_factor,
            max_radius_factor,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), FormationError> {
        if !(self.k_r.is_finite() && self.k_r > 0.0) {
            return Err(FormationError::NonPositiveGain(self.k_r));
        }
        if !(self.min_radius_factor > 0.0
            && self.min_radius_factor < 1.0
            && self.max_radius_factor > 1.0
            && self.max_radius_factor.is_finite())
        {
            return Err(FormationError::InvalidRadiusClamp(
                self.min_radius_factor,
                self.max_radius_factor,
            ));
        }
        Ok(())
    }
}

/// Polar angle of `p` around `center`, radians in (-pi, pi].
///
/// Undefined at the center itself, where every direction is equally wrong.
pub fn phase(p: Vector2<f64>, center: Vector2<f64>) -> Result<f64, FormationError> {
    let d = p - center;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(FormationError::UndefinedPhase { x: p.x, y: p.y });
    }
    Ok(wrap_angle(d.y.atan2(d.x)))
}

/// Per-edge wrapped phase differences `wrap(theta_tail - theta_head)`, in
/// edge order. Wrapping keeps each entry in (-pi, pi] so that vehicles
/// straddling the angle cut compare correctly.
pub fn phase_errors(
    graph: &FormationGraph,
    phases: &PhaseVector,
) -> Result<Vec<f64>, FormationError> {
    for &v in graph.vertices() {
        if phases.get(v).is_none() {
            return Err(FormationError::MissingPhase(v));
        }
    }
    Ok(graph
        .edges()
        .iter()
        .map(|&(tail, head)| wrap_angle(phases.get(tail).unwrap() - phases.get(head).unwrap()))
        .collect())
}

/// Sum of wrapped phase differences from `theta_i` to each neighbour
/// phase. The building block of the consensus input; exact antisymmetry
/// between the two ends of an edge follows from `wrap(-x) == -wrap(x)`.
pub fn consensus_sum(theta_i: f64, neighbor_phases: impl IntoIterator<Item = f64>) -> f64 {
    // Folded from +0.0 so an empty neighbour set yields positive zero
    // (an empty `Sum::<f64>` starts from -0.0).
    neighbor_phases
        .into_iter()
        .map(|t| wrap_angle(theta_i - t))
        .fold(0.0, |acc, z| acc + z)
}

/// Consensus input of vehicle `i` given the phases it currently knows.
///
/// Neighbours without a known phase contribute nothing (an agent that has
/// heard from no one coasts on the base circle). The sign is arranged per
/// circulation sense so that a vehicle ahead of its neighbours gets a
/// positive input, hence a larger radius and a smaller angular speed:
/// phase increases along counterclockwise motion and decreases along
/// clockwise motion, so the raw sum flips sign between the two senses.
pub fn consensus_input(
    graph: &FormationGraph,
    i: AircraftId,
    known: &PhaseVector,
    params: &ConsensusParams,
    sense: RotationSense,
) -> Result<f64, FormationError> {
    let theta_i = known.get(i).ok_or(FormationError::MissingPhase(i))?;
    let sum = consensus_sum(
        theta_i,
        graph.neighbors(i).into_iter().filter_map(|j| known.get(j)),
    );
    Ok(params.k_r * sense.phase_direction() * sum)
}

/// Effective orbit radius for a base radius and consensus input, clamped
/// to the configured band.
pub fn modulated_radius(base_radius: f64, u_r: f64, params: &ConsensusParams) -> f64 {
    let lo = params.min_radius_factor * base_radius;
    let hi = params.max_radius_factor * base_radius;
    match params.convention {
        RadiusConvention::RadiusShift => (base_radius + u_r).clamp(lo, hi),
        RadiusConvention::LevelShift => {
            let level = (base_radius * base_radius + u_r).clamp(lo * lo, hi * hi);
            level.sqrt()
        }
    }
}

/// The base circle with its radius modulated by the consensus input.
pub fn modulated_curve(
    base: &ImplicitCurve,
    u_r: f64,
    params: &ConsensusParams,
) -> Result<ImplicitCurve, FormationError> {
    let (center, radius) = base.as_circle().ok_or(FormationError::NotACircle)?;
    let rho = modulated_radius(radius, u_r, params);
    ImplicitCurve::circle(center, rho).map_err(|_| FormationError::NotACircle)
}
