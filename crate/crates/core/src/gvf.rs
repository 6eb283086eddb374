//! Guidance vector field over an implicit curve and the yaw-rate command
//! that steers a constant-speed vehicle along it.
//!
//! At a point `p` the field combines the curve tangent with a correction
//! toward the curve:
//!
//! ```text
//! w(p) = tangent(p) - k_e * e(p) * n(p)
//! ```
//!
//! where `e` is the level error, `n` its gradient and `tangent` is `n`
//! rotated a quarter turn in the direction of circulation. On the curve the
//! field is purely tangential; far away it points back toward the curve.
//! The yaw-rate command is the rotation rate of the normalized field along
//! the vehicle's own velocity (so a perfectly aligned vehicle stays
//! aligned) plus a term that turns the nose toward the field direction.

use crate::curve::ImplicitCurve;
use crate::dynamics::VehicleState;
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Gradient norms below this are treated as a field singularity.
pub const MIN_GRADIENT_NORM: f64 = 1e-9;

/// Errors raised when sampling the field.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("guidance field is singular at ({x}, {y}): level gradient vanishes")]
    SingularPoint { x: f64, y: f64 },
    #[error("gain {name} must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
}

/// Direction of circulation along the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationSense {
    Clockwise,
    Counterclockwise,
}

impl RotationSense {
    /// Rotates `v` a quarter turn so that following the result circulates
    /// around the curve in this sense.
    pub fn rotate(self, v: Vector2<f64>) -> Vector2<f64> {
        match self {
            RotationSense::Clockwise => Vector2::new(v.y, -v.x),
            RotationSense::Counterclockwise => Vector2::new(-v.y, v.x),
        }
    }

    /// +1 for counterclockwise (phase increases along the motion), -1 for
    /// clockwise.
    pub fn phase_direction(self) -> f64 {
        match self {
            RotationSense::Clockwise => -1.0,
            RotationSense::Counterclockwise => 1.0,
        }
    }
}

/// Gains of the guidance field and yaw-rate command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GvfParams {
    /// Weight of the correction toward the curve, 1/(level unit).
    pub k_e: f64,
    /// Weight of the heading-alignment term, 1/s.
    pub k_d: f64,
    /// Direction of circulation.
    pub sense: RotationSense,
}

impl GvfParams {
    /// Builds a parameter set, rejecting non-positive gains.
    pub fn new(k_e: f64, k_d: f64, sense: RotationSense) -> Result<Self, FieldError> {
        let params = GvfParams { k_e, k_d, sense };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.k_e.is_finite() && self.k_e > 0.0) {
            return Err(FieldError::NonPositiveGain {
                name: "k_e",
                value: self.k_e,
            });
        }
        if !(self.k_d.is_finite() && self.k_d > 0.0) {
            return Err(FieldError::NonPositiveGain {
                name: "k_d",
                value: self.k_d,
            });
        }
        Ok(())
    }
}

/// The guidance field evaluated at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    /// Level error of the curve at the point.
    pub e: f64,
    /// Gradient of the level function (curve normal, unnormalized).
    pub normal: Vector2<f64>,
    /// Normal rotated a quarter turn in the circulation direction.
    pub tangent: Vector2<f64>,
    /// Unit vector along the guidance field `tangent - k_e * e * normal`.
    pub direction: Vector2<f64>,
}

/// Evaluates the guidance field at `p`.
///
/// Fails with [`FieldError::SingularPoint`] where the level gradient
/// vanishes (the curve center), since no direction is defined there.
pub fn build_field(
    curve: &ImplicitCurve,
    params: &GvfParams,
    p: Vector2<f64>,
) -> Result<FieldSample, FieldError> {
    params.validate()?;
    let normal = curve.gradient(p);
    if normal.norm() < MIN_GRADIENT_NORM {
        return Err(FieldError::SingularPoint { x: p.x, y: p.y });
    }
    let e = curve.level_error(p);
    let tangent = params.sense.rotate(normal);
    let w = tangent - params.k_e * e * normal;
    // w never vanishes when the gradient does not: its tangential and
    // normal parts are orthogonal, so |w|^2 = (1 + k_e^2 e^2) |normal|^2.
    Ok(FieldSample {
        e,
        normal,
        tangent,
        direction: w / w.norm(),
    })
}

/// Rotation rate of the normalized guidance field direction experienced by
/// a vehicle crossing `p` with velocity `p_dot`, in rad/s.
///
/// This is the feedforward part of [`yaw_rate_command`]: a vehicle already
/// aligned with the field must turn at exactly this rate to stay aligned.
/// Writing `w` for the unnormalized field, the chain rule along `p_dot`
/// gives
///
/// ```text
/// w_dot = rotate(H p_dot) - k_e e H p_dot - k_e (n . p_dot) n
/// ```
///
/// with `H` the level Hessian, and the rate is `(w x w_dot) / |w|^2`.
pub fn field_turn_rate(
    curve: &ImplicitCurve,
    params: &GvfParams,
    p: Vector2<f64>,
    p_dot: Vector2<f64>,
) -> Result<f64, FieldError> {
    let sample = build_field(curve, params, p)?;
    let w = sample.tangent - params.k_e * sample.e * sample.normal;
    let h_p_dot = curve.hessian(p) * p_dot;
    let w_dot = params.sense.rotate(h_p_dot)
        - params.k_e * sample.e * h_p_dot
        - params.k_e * sample.normal.dot(&p_dot) * sample.normal;
    Ok(w.perp(&w_dot) / w.norm_squared())
}

/// Yaw-rate command steering the vehicle onto the curve and along it.
///
/// Feedforward plus alignment: the field's own rotation rate along the
/// vehicle velocity, and `k_d` times the sine of the angle from the heading
/// to the field direction (positive when the field direction lies to the
/// left of the nose, so the correction always turns the shorter way).
pub fn yaw_rate_command(
    curve: &ImplicitCurve,
    params: &GvfParams,
    state: &VehicleState,
) -> Result<f64, FieldError> {
    let sample = build_field(curve, params, p_of(state))?;
    let feedforward = field_turn_rate(curve, params, p_of(state), state.velocity())?;
    let heading = Vector2::new(state.yaw.cos(), state.yaw.sin());
    let alignment = params.k_d * heading.perp(&sample.direction);
    Ok(feedforward + alignment)
}

fn p_of(state: &VehicleState) -> Vector2<f64> {
    state.position
}

/// Coordinated-turn bank angle for a yaw-rate command at a given speed,
/// in radians: `atan(u * speed / gravity)`.
pub fn bank_angle(u_yaw: f64, speed: f64, gravity: f64) -> f64 {
    (u_yaw * speed / gravity).atan()
}

/// Largest yaw-rate magnitude a coordinated turn at `speed` can hold
/// without banking beyond `max_bank` radians.
pub fn yaw_rate_limit(max_bank: f64, speed: f64, gravity: f64) -> f64 {
    gravity * max_bank.tan() / speed
}
