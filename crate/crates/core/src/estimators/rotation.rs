//! Global phase alignment of an estimate against the observation.

use std::f64::consts::PI;

use crate::linalg::{CVec, C64};

/// Angle in `[0, 2π)` minimizing `||y - e^{iθ} A u||^2`, given `a_u = A u`.
/// Returns 0 when the objective does not depend on θ.
pub fn optimal_angle(a_u: &CVec, y: &CVec) -> f64 {
    let w: C64 = a_u.dotc(y);
    if w.re == 0.0 && w.im == 0.0 {
        return 0.0;
    }
    let mut theta = (w.im / w.re).atan();
    // Second derivative of -Re(e^{-iθ} w); a non-positive value means the
    // stationary point is the maximizer.
    if w.re * theta.cos() + w.im * theta.sin() <= 0.0 {
        theta += PI;
    }
    theta.rem_euclid(2.0 * PI)
}

/// Rotates `u_hat` by [`optimal_angle`]; returns the rotated vector and angle.
pub fn rotation_correct(u_hat: &CVec, a_u: &CVec, y: &CVec) -> (CVec, f64) {
    let theta = optimal_angle(a_u, y);
    (u_hat * C64::from_polar(1.0, theta), theta)
}
