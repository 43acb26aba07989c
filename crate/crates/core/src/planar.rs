//! Planar frames, poses, twists and wrenches.
//!
//! World and body frames share the z axis; angles are measured
//! counter-clockwise and wrapped to `(-π, π]`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Wraps an angle to `(-π, π]`. `-π` maps to `π`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut a = theta.rem_euclid(two_pi); // [0, 2π)
    if a > PI {
        a -= two_pi;
    }
    if a <= -PI {
        a += two_pi;
    }
    a
}

/// Planar rotation embedded in SE(2)'s 3x3 twist transform.
pub fn rotation_matrix(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub(crate) fn rotate2(theta: f64, v: Vector2<f64>) -> Vector2<f64> {
    let (s, c) = theta.sin_cos();
    Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

pub(crate) fn rotate2_inv(theta: f64, v: Vector2<f64>) -> Vector2<f64> {
    rotate2(-theta, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPose {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl PlanarPose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta = wrap_angle(theta);
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Maps a body-frame point to world coordinates.
    pub fn to_world(&self, p_body: Vector2<f64>) -> Vector2<f64> {
        self.position() + rotate2(self.theta, p_body)
    }

    /// Maps a world point into body coordinates.
    pub fn to_body(&self, p_world: Vector2<f64>) -> Vector2<f64> {
        rotate2_inv(self.theta, p_world - self.position())
    }

    /// Explicit Euler update with a world-frame twist.
    pub fn advanced(&self, twist_world: BodyTwist, dt: f64) -> Self {
        Self::new(self.x + dt * twist_world.vx, self.y + dt * twist_world.vy, self.theta + dt * twist_world.omega)
    }
}

/// Planar twist `(vx, vy, ω)`. The frame it is expressed in is contextual.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyTwist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl BodyTwist {
    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn linear(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }
}

/// Planar wrench `(fx, fy, τ)` applied at the body origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyWrench {
    pub fx: f64,
    pub fy: f64,
    pub tau: f64,
}

impl BodyWrench {
    pub fn new(fx: f64, fy: f64, tau: f64) -> Self {
        Self { fx, fy, tau }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.fx, self.fy, self.tau)
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Contact force in the body frame: `fn_` along body +x (into the pushed
/// edge), `ft` along body +y.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactForce {
    pub fn_: f64,
    pub ft: f64,
}

impl ContactForce {
    pub fn new(fn_: f64, ft: f64) -> Self {
        Self { fn_, ft }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.fn_, self.ft)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn norm(&self) -> f64 {
        self.fn_.hypot(self.ft)
    }
}

/// Expresses a body twist in the world frame. The angular rate is unchanged.
pub fn twist_body_to_world(twist: BodyTwist, theta: f64) -> BodyTwist {
    BodyTwist::from_vector(rotation_matrix(theta) * twist.as_vector())
}

/// Inverse of [`twist_body_to_world`].
pub fn twist_world_to_body(twist: BodyTwist, theta: f64) -> BodyTwist {
    BodyTwist::from_vector(rotation_matrix(theta).transpose() * twist.as_vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn rotation_examples() {
        assert_abs_diff_eq!(rotation_matrix(0.0), Matrix3::identity(), epsilon = 1e-15);
        let q = rotation_matrix(PI / 2.0);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(q, expected, epsilon = 1e-15);
        let r = rotation_matrix(0.7);
        assert_abs_diff_eq!(r * r.transpose(), Matrix3::identity(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn twist_examples() {
        let t = twist_body_to_world(BodyTwist::new(1.0, 0.0, 0.5), 0.0);
        assert_eq!(t, BodyTwist::new(1.0, 0.0, 0.5));
        let t = twist_body_to_world(BodyTwist::new(1.0, 0.0, 0.0), PI / 2.0);
        assert_abs_diff_eq!(t.vx, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.vy, 1.0, epsilon = 1e-15);
        assert_eq!(t.omega, 0.0);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(PI), PI);
        let p = PlanarPose::new(0.0, 0.0, 7.0);
        assert!(p.theta() > -PI && p.theta() <= PI);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn rotation_is_orthonormal(theta in -50.0f64..50.0) {
            let r = rotation_matrix(theta);
            let err = (r.transpose() * r - Matrix3::identity()).abs().max();
            prop_assert!(err < 1e-12);
        }

        #[test]
        fn twist_roundtrip(theta in -10.0f64..10.0, vx in -1.0f64..1.0, vy in -1.0f64..1.0, w in -1.0f64..1.0) {
            let t = BodyTwist::new(vx, vy, w);
            let back = twist_world_to_body(twist_body_to_world(t, theta), theta);
            prop_assert!((back.as_vector() - t.as_vector()).abs().max() < 1e-12);
            let world = twist_body_to_world(t, theta);
            prop_assert!((world.linear().norm() - t.linear().norm()).abs() < 1e-12);
        }

        #[test]
        fn wrap_is_idempotent_and_in_range(theta in -1e3f64..1e3) {
            let a = wrap_angle(theta);
            prop_assert!(a > -PI && a <= PI);
            prop_assert_eq!(wrap_angle(a), a);
            let k = ((theta - a) / (2.0 * PI)).round();
            prop_assert!((theta - a - k * 2.0 * PI).abs() < 1e-9);
        }
    }
}
