//! Quasi-static pusher–slider model and the contact-resolving oracle used
//! as the simulated ground truth.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{PushError, Result};
use crate::limit_surface::{wrench_to_twist, LimitSurface, ObjectParams};
use crate::planar::{rotate2_inv, twist_body_to_world, BodyTwist, BodyWrench, ContactForce, PlanarPose};

/// Force tolerance (N) used by mode classification and the oracle.
pub const FORCE_TOL: f64 = 1e-9;
/// Angular-rate tolerance (rad/s) separating sticking from sliding.
pub const RATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub pose: PlanarPose,
    pub phi: f64,
}

impl ObjectState {
    pub fn new(x: f64, y: f64, theta: f64, phi: f64) -> Self {
        Self { pose: PlanarPose::new(x, y, theta), phi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContactMode {
    Sticking,
    /// `φ̇ > 0`: the contact point slides towards body −y, friction on the
    /// object points along −y (`ft = −μ·fn`).
    SlidingCCW,
    /// `φ̇ < 0`, `ft = +μ·fn`.
    SlidingCW,
    Separated,
}

impl ContactMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContactMode::Sticking => "sticking",
            ContactMode::SlidingCCW => "sliding_ccw",
            ContactMode::SlidingCW => "sliding_cw",
            ContactMode::Separated => "separated",
        }
    }

    pub fn is_sliding(&self) -> bool {
        matches!(self, ContactMode::SlidingCCW | ContactMode::SlidingCW)
    }
}

fn check_tangent(phi: f64) -> Result<()> {
    if !phi.is_finite() || phi.cos().abs() < 1e-9 {
        return Err(PushError::TangentSingularity { phi });
    }
    Ok(())
}

/// Contact point on the pushed edge, in body coordinates.
pub fn contact_point(phi: f64, params: &ObjectParams) -> Result<Vector2<f64>> {
    check_tangent(phi)?;
    let h = params.side_x / 2.0;
    Ok(Vector2::new(-h, -h * phi.tan()))
}

/// Maps a body twist to the velocity of the object point under the pusher;
/// its transpose maps the contact force to a body wrench.
pub fn contact_jacobian(phi: f64, params: &ObjectParams) -> Result<Matrix2x3<f64>> {
    let c = contact_point(phi, params)?;
    Ok(Matrix2x3::new(1.0, 0.0, -c.y, 0.0, 1.0, c.x))
}

pub fn contact_wrench(phi: f64, force: ContactForce, params: &ObjectParams) -> Result<BodyWrench> {
    let j = contact_jacobian(phi, params)?;
    Ok(BodyWrench::from_vector(j.transpose() * force.as_vector()))
}

/// Object twist in the world frame produced by the contact force.
pub fn object_velocity(
    state: &ObjectState,
    force: ContactForce,
    ls: &LimitSurface,
    params: &ObjectParams,
) -> Result<BodyTwist> {
    let wrench = contact_wrench(state.phi, force, params)?;
    Ok(twist_body_to_world(wrench_to_twist(ls, wrench), state.pose.theta()))
}

/// Classifies the contact mode of a force/sliding-rate pair.
pub fn classify_mode(force: ContactForce, phi_dot: f64, mu: f64) -> Result<ContactMode> {
    let tol = FORCE_TOL * (1.0 + force.fn_.abs());
    let inconsistent = || PushError::InconsistentMode { fn_: force.fn_, ft: force.ft, phi_dot };
    if force.fn_ <= tol {
        return if force.ft.abs() <= tol { Ok(ContactMode::Separated) } else { Err(inconsistent()) };
    }
    if phi_dot.abs() <= RATE_TOL {
        return if force.ft.abs() <= mu * force.fn_ + tol { Ok(ContactMode::Sticking) } else { Err(inconsistent()) };
    }
    let edge = if phi_dot > 0.0 { -mu * force.fn_ } else { mu * force.fn_ };
    if (force.ft - edge).abs() <= tol {
        Ok(if phi_dot > 0.0 { ContactMode::SlidingCCW } else { ContactMode::SlidingCW })
    } else {
        Err(inconsistent())
    }
}

/// Branch centre (a multiple of π) nearest to `phi`.
pub fn phi_branch(phi: f64) -> f64 {
    (phi / PI).round() * PI
}

/// Contact angle of a body-frame point on the pushed edge, on the branch of `phi_ref`.
pub fn phi_from_contact_y(y: f64, phi_ref: f64, params: &ObjectParams) -> f64 {
    phi_branch(phi_ref) + (-2.0 * y / params.side_x).atan()
}

/// Largest admissible `|φ − branch|` (the edge corner).
pub fn phi_corner(params: &ObjectParams) -> f64 {
    params.max_tan_phi().atan()
}

/// Result of one oracle step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleStep {
    pub state: ObjectState,
    pub force: ContactForce,
    pub mode: ContactMode,
    /// Contact angle at which the force was resolved (the tip location at step start).
    pub contact_phi: f64,
    pub phi_dot: f64,
    /// World-frame object twist applied over the step.
    pub twist: BodyTwist,
    pub penetration: f64,
    /// True when the contact angle had to be clamped to the edge corner.
    pub corner_clamped: bool,
}

/// Advances the object by one step given the imposed pusher-tip motion.
///
/// The tip is treated as a rigid point: its penetration depth at the start
/// of the step must be removed over `dt` by the object's motion, and its
/// tangential displacement either drags the object (sticking) or slides
/// along the edge on the friction-cone boundary.
pub fn oracle_step(
    state: &ObjectState,
    pusher_tip: Vector2<f64>,
    pusher_tip_prev: Vector2<f64>,
    dt: f64,
    ls: &LimitSurface,
    params: &ObjectParams,
) -> Result<OracleStep> {
    resolve_contact(state, pusher_tip, pusher_tip_prev, dt, ls, params, params.side_x / 10.0, BodyWrench::default())
}

/// Oracle step with an extra body wrench acting on the object and a
/// configurable penetration bound.
#[allow(clippy::too_many_arguments)]
pub fn resolve_contact(
    state: &ObjectState,
    pusher_tip: Vector2<f64>,
    pusher_tip_prev: Vector2<f64>,
    dt: f64,
    ls: &LimitSurface,
    params: &ObjectParams,
    max_penetration: f64,
    external: BodyWrench,
) -> Result<OracleStep> {
    crate::error::ensure_positive("dt", dt)?;
    let theta = state.pose.theta();
    let b = state.pose.to_body(pusher_tip);
    let h = params.side_x / 2.0;
    let depth = b.x + h;
    let free_twist = twist_body_to_world(wrench_to_twist(ls, external), theta);
    let separated = OracleStep {
        state: ObjectState { pose: state.pose.advanced(free_twist, dt), phi: state.phi },
        force: ContactForce::zero(),
        mode: ContactMode::Separated,
        contact_phi: state.phi,
        phi_dot: 0.0,
        twist: free_twist,
        penetration: depth.max(0.0),
        corner_clamped: false,
    };
    if depth <= 0.0 || b.y.abs() > params.side_y / 2.0 {
        return Ok(separated);
    }
    if depth > max_penetration {
        return Err(PushError::ExcessivePenetration { depth, bound: max_penetration });
    }

    let phi_c = phi_from_contact_y(b.y, state.phi, params);
    let contact = ObjectState { pose: state.pose, phi: phi_c };
    let j = contact_jacobian(phi_c, params)?;
    let q: Matrix2<f64> = j * ls.matrix() * j.transpose();
    let tip_vel_t = rotate2_inv(theta, pusher_tip - pusher_tip_prev).y / dt;
    // Contact-point velocity the pusher force must add to the motion the
    // external wrench already produces.
    let v_ext = j * (ls.matrix() * external.as_vector());
    let v = Vector2::new(depth / dt, tip_vel_t) - v_ext;
    let mu = params.mu_contact;
    let cos2 = phi_c.cos().powi(2);

    let tol = FORCE_TOL;
    let mut found: Option<(ContactForce, f64, ContactMode)> = None;

    if let Some(qi) = q.try_inverse() {
        let f = qi * v;
        if f.x >= -tol && f.y.abs() <= mu * f.x + tol * (1.0 + f.x.abs()) {
            found = Some((ContactForce::new(f.x.max(0.0), f.y), 0.0, ContactMode::Sticking));
        }
    }
    if found.is_none() {
        for (s, mode) in [(-mu, ContactMode::SlidingCCW), (mu, ContactMode::SlidingCW)] {
            let denom = q[(0, 0)] + q[(0, 1)] * s;
            if denom <= 0.0 {
                continue;
            }
            let fn_ = v.x / denom;
            if fn_ < -tol {
                continue;
            }
            let y_dot = v.y - fn_ * (q[(1, 0)] + q[(1, 1)] * s);
            let phi_dot = -y_dot * cos2 / h;
            let ok = match mode {
                ContactMode::SlidingCCW => phi_dot > RATE_TOL,
                _ => phi_dot < -RATE_TOL,
            };
            if ok {
                let fn_ = fn_.max(0.0);
                found = Some((ContactForce::new(fn_, s * fn_), phi_dot, mode));
                break;
            }
        }
    }
    let (force, phi_dot, mode) = found.ok_or(PushError::NoConsistentMode { penetration: depth })?;

    let mut twist = object_velocity(&contact, force, ls, params)?;
    twist.vx += free_twist.vx;
    twist.vy += free_twist.vy;
    twist.omega += free_twist.omega;
    let pose = state.pose.advanced(twist, dt);
    let branch = phi_branch(phi_c);
    let corner = phi_corner(params);
    let raw = phi_c + phi_dot * dt;
    let phi_new = raw.clamp(branch - corner, branch + corner);
    Ok(OracleStep {
        state: ObjectState { pose, phi: phi_new },
        force,
        mode,
        contact_phi: phi_c,
        phi_dot,
        twist,
        penetration: depth,
        corner_clamped: phi_new != raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_surface::build_limit_surface;
    use approx::assert_abs_diff_eq;

    fn square() -> ObjectParams {
        ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2)
    }

    #[test]
    fn contact_point_examples() {
        let p = square();
        assert_eq!(contact_point(0.0, &p).unwrap(), Vector2::new(-0.05, 0.0));
        let c = contact_point(0.5f64.atan(), &p).unwrap();
        assert_abs_diff_eq!(c, Vector2::new(-0.05, -0.025), epsilon = 1e-15);
        let c = contact_point(phi_corner(&p), &p).unwrap();
        assert_abs_diff_eq!(c, Vector2::new(-0.05, -0.05), epsilon = 1e-15);
        assert!(contact_point(PI / 2.0, &p).is_err());
    }

    #[test]
    fn jacobian_examples() {
        let p = square();
        let j = contact_jacobian(0.0, &p).unwrap();
        assert_eq!(j, Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, -0.05));
        let w = j.transpose() * Vector2::new(0.0, 1.0);
        assert_eq!(w, nalgebra::Vector3::new(0.0, 1.0, -0.05));
    }

    #[test]
    fn velocity_examples() {
        let p = square();
        let ls = build_limit_surface(&p).unwrap();
        let s = ObjectState::new(0.0, 0.0, 0.0, 0.0);
        assert_eq!(object_velocity(&s, ContactForce::zero(), &ls, &p).unwrap(), BodyTwist::default());
        let t = object_velocity(&s, ContactForce::new(1.0, 0.0), &ls, &p).unwrap();
        assert!((t.vx - 1.0 / 0.981f64.powi(2)).abs() < 1e-12);
        assert!((t.vx - 1.0391).abs() < 1e-4);
        let s = ObjectState::new(0.0, 0.0, PI / 2.0, 0.0);
        let t = object_velocity(&s, ContactForce::new(1.0, 0.0), &ls, &p).unwrap();
        assert_abs_diff_eq!(t.vx, 0.0, epsilon = 1e-12);
        assert!((t.vy - 1.0391).abs() < 1e-4);
    }

    #[test]
    fn classify_examples() {
        let f = |a, b| ContactForce::new(a, b);
        assert_eq!(classify_mode(f(1.0, 0.1), 0.0, 0.2).unwrap(), ContactMode::Sticking);
        assert_eq!(classify_mode(f(1.0, -0.2), 0.1, 0.2).unwrap(), ContactMode::SlidingCCW);
        assert_eq!(classify_mode(f(1.0, 0.2), -0.1, 0.2).unwrap(), ContactMode::SlidingCW);
        assert_eq!(classify_mode(f(0.0, 0.0), 0.0, 0.2).unwrap(), ContactMode::Separated);
        assert!(classify_mode(f(1.0, 0.2), 0.1, 0.2).is_err());
        assert!(classify_mode(f(1.0, 0.0), 0.1, 0.2).is_err());
        assert!(classify_mode(f(1.0, 0.5), 0.0, 0.2).is_err());
    }

    #[test]
    fn stationary_tip_off_edge_is_separated() {
        let p = square();
        let ls = build_limit_surface(&p).unwrap();
        let s = ObjectState::new(0.0, 0.0, 0.3, PI);
        let tip = s.pose.to_world(Vector2::new(-0.06, 0.0));
        let r = oracle_step(&s, tip, tip, 1e-3, &ls, &p).unwrap();
        assert_eq!(r.mode, ContactMode::Separated);
        assert_eq!(r.force, ContactForce::zero());
        assert_eq!(r.state, s);
    }

    #[test]
    fn centred_push_sticks_and_translates() {
        let p = square();
        let ls = build_limit_surface(&p).unwrap();
        let s = ObjectState::new(0.1, -0.2, 0.4, 0.0);
        let prev = s.pose.to_world(Vector2::new(-0.05, 0.0));
        let tip = s.pose.to_world(Vector2::new(-0.05 + 1e-5, 0.0));
        let r = oracle_step(&s, tip, prev, 1e-3, &ls, &p).unwrap();
        assert_eq!(r.mode, ContactMode::Sticking);
        assert!(r.force.ft.abs() < 1e-12);
        assert!(r.force.fn_ > 0.0);
        let d = r.state.pose.position() - s.pose.position();
        let heading = Vector2::new(0.4f64.cos(), 0.4f64.sin());
        assert!((d.normalize() - heading).norm() < 1e-9);
        assert!((r.state.pose.theta() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn large_tangential_motion_slides_on_cone() {
        let p = square();
        let ls = build_limit_surface(&p).unwrap();
        let s = ObjectState::new(0.0, 0.0, 0.0, PI);
        let prev = Vector2::new(-0.05 + 1e-5, -1e-3);
        let tip = Vector2::new(-0.05 + 1e-5, 0.0);
        let r = oracle_step(&s, tip, prev, 1e-3, &ls, &p).unwrap();
        assert!(r.mode.is_sliding());
        assert!((r.force.ft.abs() - 0.2 * r.force.fn_).abs() < 1e-9);
        assert_eq!(classify_mode(r.force, r.phi_dot, 0.2).unwrap(), r.mode);
    }

    #[test]
    fn excessive_penetration_rejected() {
        let p = square();
        let ls = build_limit_surface(&p).unwrap();
        let s = ObjectState::new(0.0, 0.0, 0.0, 0.0);
        let tip = Vector2::new(-0.03, 0.0);
        assert!(matches!(oracle_step(&s, tip, tip, 1e-3, &ls, &p), Err(PushError::ExcessivePenetration { .. })));
    }
}
