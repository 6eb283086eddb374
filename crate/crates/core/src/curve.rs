//! Implicit planar curves used as orbit paths.
//!
//! A curve is the zero level set of a smooth function `phi`. The signed
//! value of `phi` at a point doubles as the tracking error: zero on the
//! curve, negative inside, positive outside.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

/// Errors raised when constructing a curve from invalid geometry.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("curve dimension must be positive and finite, got {0}")]
    InvalidDimension(f64),
    #[error("curve parameter must be finite, got {0}")]
    NonFiniteParameter(f64),
}

/// Zero level set of a quadratic level function.
#[derive(Debug, Clone, PartialEq)]
pub enum ImplicitCurve {
    /// `phi(p) = |p - center|^2 - radius^2`. Level values lie in
    /// `[-radius^2, inf)` and the gradient vanishes only at the center.
    Circle { center: Vector2<f64>, radius: f64 },
    /// `phi(p) = (x'/a)^2 + (y'/b)^2 - 1` where `(x', y')` are the
    /// coordinates of `p - center` in a frame rotated by `rotation`
    /// radians. `a` is the semi-axis along the rotated x axis.
    Ellipse {
        center: Vector2<f64>,
        semi_x: f64,
        semi_y: f64,
        rotation: f64,
    },
}

impl ImplicitCurve {
    /// Builds a circle of positive radius.
    pub fn circle(center: Vector2<f64>, radius: f64) -> Result<Self, CurveError> {
        if !center.x.is_finite() || !center.y.is_finite() {
            return Err(CurveError::NonFiniteParameter(center.x));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(CurveError::InvalidDimension(radius));
        }
        Ok(ImplicitCurve::Circle { center, radius })
    }

    /// Builds an ellipse with positive semi-axes, rotated by `rotation`
    /// radians about its center.
    pub fn ellipse(
        center: Vector2<f64>,
        semi_x: f64,
        semi_y: f64,
        rotation: f64,
    ) -> Result<Self, CurveError> {
        if !center.x.is_finite() || !center.y.is_finite() || !rotation.is_finite() {
            return Err(CurveError::NonFiniteParameter(rotation));
        }
        for axis in [semi_x, semi_y] {
            if !(axis.is_finite() && axis > 0.0) {
                return Err(CurveError::InvalidDimension(axis));
            }
        }
        Ok(ImplicitCurve::Ellipse {
            center,
            semi_x,
            semi_y,
            rotation,
        })
    }

    /// Center of the curve.
    pub fn center(&self) -> Vector2<f64> {
        match *self {
            ImplicitCurve::Circle { center, .. } | ImplicitCurve::Ellipse { center, .. } => center,
        }
    }

    /// Center and radius when the curve is a circle.
    pub fn as_circle(&self) -> Option<(Vector2<f64>, f64)> {
        match *self {
            ImplicitCurve::Circle { center, radius } => Some((center, radius)),
            ImplicitCurve::Ellipse { .. } => None,
        }
    }

    /// Signed level value at `p`: zero on the curve, negative inside,
    /// positive outside.
    pub fn level_error(&self, p: Vector2<f64>) -> f64 {
        match *self {
            ImplicitCurve::Circle { center, radius } => {
                let d = p - center;
                d.norm_squared() - radius * radius
            }
            ImplicitCurve::Ellipse { .. } => {
                let local = self.to_local(p);
                local.x * local.x + local.y * local.y - 1.0
            }
        }
    }

    /// Gradient of the level function at `p`, in world coordinates.
    pub fn gradient(&self, p: Vector2<f64>) -> Vector2<f64> {
        match *self {
            ImplicitCurve::Circle { center, .. } => 2.0 * (p - center),
            ImplicitCurve::Ellipse {
                center,
                semi_x,
                semi_y,
                rotation,
            } => {
                let rot = Matrix2::new(
                    rotation.cos(),
                    -rotation.sin(),
                    rotation.sin(),
                    rotation.cos(),
                );
                let scale = Matrix2::new(2.0 / (semi_x * semi_x), 0.0, 0.0, 2.0 / (semi_y * semi_y));
                rot * scale * rot.transpose() * (p - center)
            }
        }
    }

    /// Hessian of the level function. Constant over the plane because the
    /// level functions are quadratic.
    pub fn hessian(&self, _p: Vector2<f64>) -> Matrix2<f64> {
        match *self {
            ImplicitCurve::Circle { .. } => Matrix2::new(2.0, 0.0, 0.0, 2.0),
            ImplicitCurve::Ellipse {
                semi_x,
                semi_y,
                rotation,
                ..
            } => {
                let rot = Matrix2::new(
                    rotation.cos(),
                    -rotation.sin(),
                    rotation.sin(),
                    rotation.cos(),
                );
                let scale = Matrix2::new(2.0 / (semi_x * semi_x), 0.0, 0.0, 2.0 / (semi_y * semi_y));
                rot * scale * rot.transpose()
            }
        }
    }

    /// Coordinates of `p` in the curve-local (centered, derotated,
    /// axis-normalized) frame. Only meaningful for ellipses.
    fn to_local(&self, p: Vector2<f64>) -> Vector2<f64> {
        match *self {
            ImplicitCurve::Circle { center, .. } => p - center,
            ImplicitCurve::Ellipse {
                center,
                semi_x,
                semi_y,
                rotation,
            } => {
                let d = p - center;
                let (sin, cos) = rotation.sin_cos();
                Vector2::new(
                    (cos * d.x + sin * d.y) / semi_x,
                    (-sin * d.x + cos * d.y) / semi_y,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circle_level_error_known_points() {
        let c = ImplicitCurve::circle(Vector2::zeros(), 30.0).unwrap();
        assert_eq!(c.level_error(Vector2::new(30.0, 0.0)), 0.0);
        assert_eq!(c.level_error(Vector2::new(0.0, 0.0)), -900.0);

        let small = ImplicitCurve::circle(Vector2::zeros(), 2.0).unwrap();
        assert_eq!(small.level_error(Vector2::new(3.0, 4.0)), 21.0);
    }

    #[test]
    fn circle_level_error_lower_bound() {
        let c = ImplicitCurve::circle(Vector2::new(5.0, -3.0), 7.0).unwrap();
        for k in 0..100 {
            let p = Vector2::new((k as f64) * 1.3 - 60.0, (k as f64) * -0.7 + 30.0);
            assert!(c.level_error(p) >= -49.0);
        }
        assert_eq!(c.level_error(Vector2::new(5.0, -3.0)), -49.0);
    }

    #[test]
    fn circle_gradient_known_points() {
        let c = ImplicitCurve::circle(Vector2::zeros(), 5.0).unwrap();
        assert_eq!(c.gradient(Vector2::new(1.0, 2.0)), Vector2::new(2.0, 4.0));
        assert_eq!(c.gradient(Vector2::new(0.0, 0.0)), Vector2::new(0.0, 0.0));
        assert_eq!(c.gradient(Vector2::new(-3.0, 0.0)), Vector2::new(-6.0, 0.0));
    }

    #[test]
    fn circle_gradient_vanishes_only_at_center() {
        let c = ImplicitCurve::circle(Vector2::new(1.0, 1.0), 3.0).unwrap();
        assert_eq!(c.gradient(Vector2::new(1.0, 1.0)).norm(), 0.0);
        assert!(c.gradient(Vector2::new(1.0, 1.0 + 1e-12)).norm() > 0.0);
    }

    #[test]
    fn circle_hessian_is_twice_identity() {
        let c = ImplicitCurve::circle(Vector2::new(-2.0, 8.0), 11.0).unwrap();
        assert_eq!(c.hessian(Vector2::new(4.0, 4.0)), Matrix2::new(2.0, 0.0, 0.0, 2.0));
    }

    #[test]
    fn axis_aligned_ellipse_matches_closed_forms() {
        let a = 4.0;
        let b = 2.0;
        let e = ImplicitCurve::ellipse(Vector2::zeros(), a, b, 0.0).unwrap();
        assert_relative_eq!(e.level_error(Vector2::new(4.0, 0.0)), 0.0, epsilon = 1e-15);
        assert_relative_eq!(e.level_error(Vector2::new(0.0, 2.0)), 0.0, epsilon = 1e-15);
        assert_eq!(e.level_error(Vector2::zeros()), -1.0);

        let h = e.hessian(Vector2::new(1.0, 1.0));
        assert_relative_eq!(h[(0, 0)], 2.0 / (a * a), max_relative = 1e-15);
        assert_relative_eq!(h[(1, 1)], 2.0 / (b * b), max_relative = 1e-15);
        assert_eq!(h[(0, 1)], 0.0);
    }

    #[test]
    fn rotated_ellipse_level_zero_on_boundary() {
        let rot = 0.7;
        let e = ImplicitCurve::ellipse(Vector2::new(3.0, -1.0), 5.0, 2.0, rot).unwrap();
        // Walk the boundary via the local parametrization and confirm the
        // level vanishes in world coordinates.
        for k in 0..32 {
            let t = 2.0 * std::f64::consts::PI * (k as f64) / 32.0;
            let local = Vector2::new(5.0 * t.cos(), 2.0 * t.sin());
            let world = Vector2::new(
                rot.cos() * local.x - rot.sin() * local.y + 3.0,
                rot.sin() * local.x + rot.cos() * local.y - 1.0,
            );
            assert_relative_eq!(e.level_error(world), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hessian_is_constant() {
        let e = ImplicitCurve::ellipse(Vector2::zeros(), 3.0, 1.5, 1.1).unwrap();
        let h0 = e.hessian(Vector2::new(0.0, 0.0));
        let h1 = e.hessian(Vector2::new(100.0, -40.0));
        assert_eq!(h0, h1);
    }

    #[test]
    fn rejects_degenerate_geometry() {
        assert!(ImplicitCurve::circle(Vector2::zeros(), 0.0).is_err());
        assert!(ImplicitCurve::circle(Vector2::zeros(), -1.0).is_err());
        assert!(ImplicitCurve::circle(Vector2::zeros(), f64::NAN).is_err());
        assert!(ImplicitCurve::ellipse(Vector2::zeros(), 0.0, 1.0, 0.0).is_err());
        assert!(ImplicitCurve::ellipse(Vector2::zeros(), 1.0, -2.0, 0.0).is_err());
    }
}
