//! Angle arithmetic on the half-open interval (-pi, pi].

use std::f64::consts::PI;

/// Wraps an angle in radians into (-pi, pi].
///
/// The interval is closed at +pi so that every angle has exactly one
/// representative; in particular `wrap_angle(-PI) == PI`. Wrapping is
/// idempotent and, away from the cut at pi, `wrap_angle(-a) == -wrap_angle(a)`
/// exactly in floating point.
pub fn wrap_angle(angle: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut wrapped = angle % two_pi;
    if wrapped > PI {
        wrapped -= two_pi;
    } else if wrapped <= -PI {
        wrapped += two_pi;
    }
    wrapped
}
