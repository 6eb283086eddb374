//! Constant-speed unicycle kinematics.
//!
//! The vehicle model is `p_dot = speed * (cos yaw, sin yaw)`,
//! `yaw_dot = u`, with the yaw-rate command `u` held constant over each
//! integration step. Speed never changes; turning is the only actuation.

use crate::angles::wrap_angle;
use nalgebra::Vector2;
use thiserror::Error;

/// Errors raised by the integrator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("yaw-rate command is not finite: {0}")]
    NonFiniteCommand(f64),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("vehicle state is invalid: {0}")]
    InvalidState(String),
}

/// Planar pose plus constant forward speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    /// Position in meters.
    pub position: Vector2<f64>,
    /// Heading in radians, kept in (-pi, pi].
    pub yaw: f64,
    /// Forward speed in m/s, strictly positive.
    pub speed: f64,
}

impl VehicleState {
    /// Builds a state, wrapping the yaw into (-pi, pi].
    pub fn new(position: Vector2<f64>, yaw: f64, speed: f64) -> Result<Self, StepError> {
        let state = VehicleState {
            position,
            yaw: wrap_angle(yaw),
            speed,
        };
        state.validate()?;
        Ok(state)
    }

    /// Velocity vector `speed * (cos yaw, sin yaw)`.
    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.speed * self.yaw.cos(), self.speed * self.yaw.sin())
    }

    fn validate(&self) -> Result<(), StepError> {
        if !(self.position.x.is_finite() && self.position.y.is_finite()) {
            return Err(StepError::InvalidState(format!(
                "non-finite position ({}, {})",
                self.position.x, self.position.y
            )));
        }
        if !self.yaw.is_finite() {
            return Err(StepError::InvalidState(format!("non-finite yaw {}", self.yaw)));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(StepError::InvalidState(format!(
                "speed must be positive, got {}",
                self.speed
            )));
        }
        Ok(())
    }
}

/// Integration scheme for [`step_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta; the default.
    RungeKutta4,
    /// First-order forward Euler, kept as a cross-check for tests that
    /// want an independent (if crude) integration route.
    ForwardEuler,
}

/// Advances the state by `dt` seconds under a constant yaw-rate command,
/// using RK4. The returned yaw is wrapped into (-pi, pi] and the speed is
/// carried over untouched.
pub fn step(state: &VehicleState, u_yaw: f64, dt: f64) -> Result<VehicleState, StepError> {
    step_with(Integrator::RungeKutta4, state, u_yaw, dt)
}

/// Advances the state by `dt` seconds with an explicit integrator choice.
pub fn step_with(
    integrator: Integrator,
    state: &VehicleState,
    u_yaw: f64,
    dt: f64,
) -> Result<VehicleState, StepError> {
    if !u_yaw.is_finite() {
        return Err(StepError::NonFiniteCommand(u_yaw));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(StepError::InvalidTimeStep(dt));
    }
    state.validate()?;

    let s = state.speed;
    let deriv = |yaw: f64| (s * yaw.cos(), s * yaw.sin(), u_yaw);

    let (dx, dy, dyaw) = match integrator {
        Integrator::ForwardEuler => {
            let k1 = deriv(state.yaw);
            (dt * k1.0, dt * k1.1, dt * k1.2)
        }
        Integrator::RungeKutta4 => {
            let k1 = deriv(state.yaw);
            let k2 = deriv(state.yaw + 0.5 * dt * k1.2);
            let k3 = deriv(state.yaw + 0.5 * dt * k2.2);
            let k4 = deriv(state.yaw + dt * k3.2);
            (
                dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
            )
        }
    };

    Ok(VehicleState {
        position: Vector2::new(state.position.x + dx, state.position.y + dy),
        yaw: wrap_angle(state.yaw + dyaw),
        speed: state.speed,
    })
}
