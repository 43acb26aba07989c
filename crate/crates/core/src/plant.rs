//! Planar impedance-controlled flange pushing the object through a
//! spherical tool, with contact resolved by the pusher–slider oracle.

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, PushError, Result};
use crate::limit_surface::{LimitSurface, ObjectParams};
use crate::planar::{rotate2, rotate2_inv, BodyTwist, BodyWrench, ContactForce};
use crate::pusher_slider::{phi_from_contact_y, resolve_contact, ContactMode, ObjectState, OracleStep};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceParams {
    pub apparent_mass: [f64; 2],
    pub stiffness: [f64; 2],
    pub damping: [f64; 2],
}

impl ImpedanceParams {
    pub fn validate(&self) -> Result<()> {
        for v in self.apparent_mass.iter().chain(&self.stiffness).chain(&self.damping) {
            ensure_positive("impedance entry", *v)?;
        }
        Ok(())
    }

    /// Damping giving the requested damping ratio on each axis.
    pub fn damping_from_ratio(ratio: f64, mass: [f64; 2], stiffness: [f64; 2]) -> [f64; 2] {
        [2.0 * ratio * (stiffness[0] * mass[0]).sqrt(), 2.0 * ratio * (stiffness[1] * mass[1]).sqrt()]
    }

    pub fn stiffness6(&self) -> Vector6<f64> {
        Vector6::new(self.stiffness[0], self.stiffness[1], 0.0, 0.0, 0.0, 0.0)
    }

    pub fn mass6(&self) -> Vector6<f64> {
        Vector6::new(self.apparent_mass[0], self.apparent_mass[1], 0.0, 0.0, 0.0, 0.0)
    }

    pub fn damping6(&self) -> Vector6<f64> {
        Vector6::new(self.damping[0], self.damping[1], 0.0, 0.0, 0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSpec {
    #[default]
    None,
    /// A wall appearing `gap` metres ahead of the object along `normal`
    /// (world frame; `None` takes the object's pushing direction at spawn).
    BlockingWall {
        start_s: f64,
        end_s: f64,
        #[serde(default)]
        normal: Option<[f64; 2]>,
        #[serde(default = "default_wall_gap")]
        gap: f64,
    },
    /// Constant world-frame force on the object during the window.
    ScheduledWrench {
        start_s: f64,
        end_s: f64,
        force: [f64; 2],
    },
}

fn default_wall_gap() -> f64 {
    0.01
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        let window = match self {
            DisturbanceSpec::None => return Ok(()),
            DisturbanceSpec::BlockingWall { start_s, end_s, normal, gap } => {
                if let Some(n) = normal {
                    if !(n[0].hypot(n[1]) > 0.0) {
                        return Err(PushError::InvalidParameter { name: "normal", reason: "must be non-zero".into() });
                    }
                }
                if !(gap.is_finite() && *gap >= 0.0) {
                    return Err(PushError::InvalidParameter { name: "gap", reason: "must be ≥ 0".into() });
                }
                (*start_s, *end_s)
            }
            DisturbanceSpec::ScheduledWrench { start_s, end_s, .. } => (*start_s, *end_s),
        };
        if !(window.0 < window.1) {
            return Err(PushError::InvalidParameter {
                name: "disturbance window",
                reason: format!("start {} must precede end {}", window.0, window.1),
            });
        }
        Ok(())
    }

    pub fn window(&self) -> Option<(f64, f64)> {
        match self {
            DisturbanceSpec::None => None,
            DisturbanceSpec::BlockingWall { start_s, end_s, .. }
            | DisturbanceSpec::ScheduledWrench { start_s, end_s, .. } => Some((*start_s, *end_s)),
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.window().is_some_and(|(a, b)| t >= a && t < b)
    }
}

/// Wall plane `n·p ≤ offset` fixed when the wall spawns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPlane {
    pub normal: Vector2<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub flange_pos: Vector2<f64>,
    pub flange_vel: Vector2<f64>,
    /// Set-point minus flange velocity; the integrated error-rate state.
    pub error_rate: Vector2<f64>,
    pub tool_radius: f64,
    pub contact: ContactMode,
    /// Last resolved contact force (body frame, force on the object).
    pub last_contact_force: ContactForce,
    /// Same force in world coordinates.
    pub last_contact_force_world: Vector2<f64>,
    pub wall: Option<WallPlane>,
}

impl PlantState {
    pub fn at_rest(flange_pos: Vector2<f64>, tool_radius: f64) -> Self {
        Self {
            flange_pos,
            flange_vel: Vector2::zeros(),
            error_rate: Vector2::zeros(),
            tool_radius,
            contact: ContactMode::Separated,
            last_contact_force: ContactForce::zero(),
            last_contact_force_world: Vector2::zeros(),
            wall: None,
        }
    }

    /// Tool-tip centre offset from the flange along the object's pushing direction.
    pub fn tool_tip(&self, object: &ObjectState) -> Vector2<f64> {
        self.flange_pos + pushing_direction(object.pose.theta()) * self.tool_radius
    }
}

/// Body +x axis of the object in world coordinates.
pub fn pushing_direction(theta: f64) -> Vector2<f64> {
    Vector2::new(theta.cos(), theta.sin())
}

/// Everything `plant_step` produces besides the new states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantStep {
    pub plant: PlantState,
    pub object: ObjectState,
    pub contact_force: ContactForce,
    pub contact_force_world: Vector2<f64>,
    pub mode: ContactMode,
    /// World force the disturbance exerts on the object (wall reaction or scheduled force).
    pub disturbance_force: Vector2<f64>,
    pub wall_active: bool,
    /// Object displacement along the wall normal during this step (0 when no wall).
    pub wall_normal_displacement: f64,
    /// Impedance error `x̃ = x* − x` and its rate at the end of the step.
    pub error: Vector2<f64>,
    pub error_rate: Vector2<f64>,
    /// Error rate at the step midpoint; `ΔV = dt·ẋ̃_midᵀ(f_e − D ẋ̃_mid)` exactly.
    pub error_rate_mid: Vector2<f64>,
    /// Force the flange exerted on the environment during the step.
    pub applied_force_world: Vector2<f64>,
    pub oracle: OracleStep,
}

/// Advances flange and object by one step.
///
/// The closed loop `M ẍ̃ + D ẋ̃ + K x̃ = f_e` is integrated in error
/// coordinates with the implicit midpoint rule per axis, with `f_e` the
/// contact force resolved at the end of the previous step. The error rate
/// `ẋ̃` is the continuous state; a change of set-point velocity shows up in
/// the flange velocity. The set-point moves linearly over the step.
#[allow(clippy::too_many_arguments)]
pub fn plant_step(
    plant: &PlantState,
    object: &ObjectState,
    setpoint_pose: Vector2<f64>,
    setpoint_vel: Vector2<f64>,
    disturbance: &DisturbanceSpec,
    t: f64,
    dt: f64,
    params: &ImpedanceParams,
    ls: &LimitSurface,
    object_params: &ObjectParams,
) -> Result<PlantStep> {
    ensure_positive("dt", dt)?;
    let e0 = setpoint_pose - plant.flange_pos;
    let r0 = plant.error_rate;
    let f_e = plant.last_contact_force_world;
    let mut e1 = Vector2::zeros();
    let mut r1 = Vector2::zeros();
    for i in 0..2 {
        let (m, d, k) = (params.apparent_mass[i], params.damping[i], params.stiffness[i]);
        let lhs = m / dt + d / 2.0 + k * dt / 4.0;
        let rhs = m * r0[i] / dt + f_e[i] - d * r0[i] / 2.0 - k * e0[i] - k * dt * r0[i] / 4.0;
        r1[i] = rhs / lhs;
        e1[i] = e0[i] + dt * (r0[i] + r1[i]) / 2.0;
    }
    let r_mid = (r0 + r1) / 2.0;
    let setpoint_next = setpoint_pose + setpoint_vel * dt;
    let flange_pos = setpoint_next - e1;
    let flange_vel = setpoint_vel - r1;

    let n = pushing_direction(object.pose.theta());
    let tip_prev = plant.flange_pos + n * plant.tool_radius;
    let tip = flange_pos + n * plant.tool_radius;

    let active = disturbance.is_active(t);
    if active && matches!(disturbance, DisturbanceSpec::BlockingWall { .. }) {
        if let Some(step) = blocked_step(plant, object, setpoint_pose, setpoint_vel, dt, params, object_params) {
            return Ok(step);
        }
    }
    let external = match disturbance {
        DisturbanceSpec::ScheduledWrench { force, .. } if active => {
            let fb = rotate2_inv(object.pose.theta(), Vector2::from(*force));
            BodyWrench::new(fb.x, fb.y, 0.0)
        }
        _ => BodyWrench::default(),
    };
    let oracle = resolve_contact(object, tip, tip_prev, dt, ls, object_params, object_params.side_x / 2.0, external)?;

    let mut wall = plant.wall;
    let mut new_object = oracle.state;
    let mut disturbance_force = Vector2::zeros();
    let mut wall_normal_displacement = 0.0;
    match disturbance {
        DisturbanceSpec::BlockingWall { normal, gap, .. } if active => {
            let plane = *wall.get_or_insert_with(|| {
                let n = match normal {
                    Some(v) => Vector2::from(*v).normalize(),
                    None => n,
                };
                WallPlane { normal: n, offset: n.dot(&object.pose.position()) + gap }
            });
            let p0 = object.pose.position();
            let p1 = new_object.pose.position();
            let allowed = (plane.offset - plane.normal.dot(&p0)).max(0.0);
            let along = plane.normal.dot(&(p1 - p0));
            if along > allowed {
                let clamped = p1 - plane.normal * (along - allowed);
                new_object.pose.x = clamped.x;
                new_object.pose.y = clamped.y;
                // Equivalent wrench: the part of the free twist the wall removed.
                let removed_world = plane.normal * (along - allowed) / dt;
                let removed_body = rotate2_inv(object.pose.theta(), removed_world);
                let l_inv = ls.matrix().try_inverse().unwrap_or_else(Matrix3::zeros);
                let w = l_inv * Vector3::new(removed_body.x, removed_body.y, 0.0);
                disturbance_force = -rotate2(object.pose.theta(), Vector2::new(w.x, w.y));
            }
            wall_normal_displacement = plane.normal.dot(&(new_object.pose.position() - p0));
        }
        DisturbanceSpec::BlockingWall { .. } => wall = None,
        DisturbanceSpec::ScheduledWrench { force, .. } if active => {
            disturbance_force = Vector2::from(*force);
        }
        _ => {}
    }

    let contact_force_world = rotate2(object.pose.theta(), oracle.force.as_vector());
    Ok(PlantStep {
        plant: PlantState {
            flange_pos,
            flange_vel,
            error_rate: r1,
            tool_radius: plant.tool_radius,
            contact: oracle.mode,
            last_contact_force: oracle.force,
            last_contact_force_world: contact_force_world,
            wall,
        },
        object: new_object,
        contact_force: oracle.force,
        contact_force_world,
        mode: oracle.mode,
        disturbance_force,
        wall_active: active && matches!(disturbance, DisturbanceSpec::BlockingWall { .. }),
        wall_normal_displacement,
        error: e1,
        error_rate: r1,
        error_rate_mid: r_mid,
        applied_force_world: f_e,
        oracle,
    })
}

/// Step against an object resting on an active wall: the object does not
/// move, the tool tip is held on the pushed edge and either sticks or slides
/// along it once the tangential force reaches the friction cone. The contact
/// force is the spring-damper force of the pinned flange (isotropic gains).
/// `None` when the wall is not touched or the tool would pull away.
fn blocked_step(
    plant: &PlantState,
    object: &ObjectState,
    setpoint_pose: Vector2<f64>,
    setpoint_vel: Vector2<f64>,
    dt: f64,
    params: &ImpedanceParams,
    object_params: &ObjectParams,
) -> Option<PlantStep> {
    let wall = plant.wall?;
    if wall.offset - wall.normal.dot(&object.pose.position()) > 1e-12 || plant.contact == ContactMode::Separated {
        return None;
    }
    let theta = object.pose.theta();
    let n = pushing_direction(theta);
    let tan = Vector2::new(-n.y, n.x);
    let h = object_params.side_x / 2.0;
    let b0 = object.pose.to_body(plant.flange_pos + n * plant.tool_radius);
    if b0.x + h < -1e-9 || b0.y.abs() > object_params.side_y / 2.0 {
        return None;
    }
    let (d, k) = (params.damping[0], params.stiffness[0]);
    let r0 = plant.error_rate;
    let setpoint_next = setpoint_pose + setpoint_vel * dt;
    let p0 = plant.flange_pos;
    // Sticking: the tip stops, with any penetration bled out gently. The
    // pinned flange transmits the spring-damper force; the impact impulse
    // is absorbed within the step.
    let v_stick = -n * (0.1 * (b0.x + h).max(0.0) / dt);
    let f = (setpoint_vel - v_stick) * d + (setpoint_next - p0 - v_stick * dt) * k;
    let fn_ = n.dot(&f);
    if fn_ <= 0.0 {
        return None;
    }
    let mut ft = tan.dot(&f);
    let mu = object_params.mu_contact;
    let mut mode = ContactMode::Sticking;
    let mut v1 = v_stick;
    if ft.abs() > mu * fn_ {
        ft = ft.signum() * mu * fn_;
        mode = if ft < 0.0 { ContactMode::SlidingCCW } else { ContactMode::SlidingCW };
        // Quasi-static slip: the tangential spring-damper force equals the
        // friction bound.
        let st = tan.dot(&(setpoint_next - p0));
        let vt = (d * tan.dot(&setpoint_vel) + k * st - ft) / (d + k * dt);
        v1 += tan * vt;
    }
    let p1 = p0 + v1 * dt;
    let r1 = setpoint_vel - v1;
    let e1 = setpoint_next - p1;
    let force = ContactForce::new(fn_, ft);
    let force_world = n * fn_ + tan * ft;
    let b1 = object.pose.to_body(p1 + n * plant.tool_radius);
    let h_cos2 = object.phi.cos().powi(2) / h;
    let phi = phi_from_contact_y(
        b1.y.clamp(-object_params.side_y / 2.0, object_params.side_y / 2.0),
        object.phi,
        object_params,
    );
    let new_object = ObjectState { pose: object.pose, phi };
    let oracle = OracleStep {
        state: new_object,
        force,
        mode,
        contact_phi: object.phi,
        phi_dot: -tan.dot(&v1) * h_cos2,
        twist: BodyTwist::default(),
        penetration: 0.0,
        corner_clamped: false,
    };
    Some(PlantStep {
        plant: PlantState {
            flange_pos: p1,
            flange_vel: v1,
            error_rate: r1,
            tool_radius: plant.tool_radius,
            contact: mode,
            last_contact_force: force,
            last_contact_force_world: force_world,
            wall: plant.wall,
        },
        object: new_object,
        contact_force: force,
        contact_force_world: force_world,
        mode,
        disturbance_force: -force_world,
        wall_active: true,
        wall_normal_displacement: 0.0,
        error: e1,
        error_rate: r1,
        error_rate_mid: (r0 + r1) / 2.0,
        applied_force_world: force_world,
        oracle,
    })
}

/// Separated when the tool tip is off the pushed edge or the last resolved
/// normal force vanished.
pub fn contact_loss_guard(plant: &PlantState, object: &ObjectState, params: &ObjectParams) -> ContactMode {
    let b = object.pose.to_body(plant.tool_tip(object));
    let on_edge = b.x + params.side_x / 2.0 > 0.0 && b.y.abs() <= params.side_y / 2.0;
    if !on_edge || plant.last_contact_force.fn_ <= crate::pusher_slider::FORCE_TOL {
        ContactMode::Separated
    } else {
        plant.contact
    }
}

/// Lifts a planar contact force to the spatial wrench at the flange:
/// force `(f_x, f_y, 0)`, torque `p_ec × (f_x, f_y, 0)`.
pub fn lift_wrench(f_c_world: Vector2<f64>, p_ec: Vector3<f64>) -> Vector6<f64> {
    let f = Vector3::new(f_c_world.x, f_c_world.y, 0.0);
    let tau = p_ec.cross(&f);
    Vector6::new(f.x, f.y, f.z, tau.x, tau.y, tau.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_surface::build_limit_surface;
    use approx::assert_abs_diff_eq;

    fn setup() -> (ObjectParams, LimitSurface, ImpedanceParams) {
        let p = ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2);
        let ls = build_limit_surface(&p).unwrap();
        let imp = ImpedanceParams { apparent_mass: [2.0; 2], stiffness: [300.0; 2], damping: [50.0; 2] };
        (p, ls, imp)
    }

    #[test]
    fn lift_examples() {
        let w = lift_wrench(Vector2::new(1.0, 2.0), Vector3::new(0.0, 0.0, 0.1));
        assert_abs_diff_eq!(w, Vector6::new(1.0, 2.0, 0.0, -0.2, 0.1, 0.0), epsilon = 1e-15);
        let w = lift_wrench(Vector2::new(1.0, 2.0), Vector3::zeros());
        assert_eq!(w.fixed_rows::<3>(3).into_owned(), Vector3::zeros());
    }

    #[test]
    fn rest_stays_at_rest() {
        let (p, ls, imp) = setup();
        let obj = ObjectState::new(0.0, 0.0, 0.0, std::f64::consts::PI);
        let plant = PlantState::at_rest(Vector2::new(-0.2, 0.0), 0.01);
        let s = plant_step(
            &plant,
            &obj,
            plant.flange_pos,
            Vector2::zeros(),
            &DisturbanceSpec::None,
            0.0,
            1e-3,
            &imp,
            &ls,
            &p,
        )
        .unwrap();
        assert_eq!(s.plant.flange_pos, plant.flange_pos);
        assert_eq!(s.plant.flange_vel, Vector2::zeros());
        assert_eq!(s.mode, ContactMode::Separated);
        assert_eq!(s.object, obj);
    }

    #[test]
    fn discrete_energy_identity_is_exact() {
        let (p, ls, imp) = setup();
        let obj = ObjectState::new(1.0, 0.0, 0.0, 0.0);
        let mut plant = PlantState::at_rest(Vector2::new(0.0, 0.0), 0.0);
        plant.error_rate = Vector2::new(-0.08, 0.05);
        plant.last_contact_force_world = Vector2::new(0.3, 0.1);
        let sp = Vector2::new(0.01, 0.02);
        let spv = Vector2::new(0.02, 0.0);
        let dt = 1e-3;
        let s = plant_step(&plant, &obj, sp, spv, &DisturbanceSpec::None, 0.0, dt, &imp, &ls, &p).unwrap();
        let v = |e: Vector2<f64>, r: Vector2<f64>| 0.5 * 300.0 * e.norm_squared() + 0.5 * 2.0 * r.norm_squared();
        let before = v(sp - plant.flange_pos, plant.error_rate);
        let after = v(s.error, s.error_rate);
        let work = dt * s.error_rate_mid.dot(&(s.applied_force_world - s.error_rate_mid * 50.0));
        assert!((after - before - work).abs() < 1e-15);
        assert!((s.plant.flange_vel - (spv - s.error_rate)).norm() < 1e-15);
    }

    #[test]
    fn separation_guard() {
        let (p, _, _) = setup();
        let obj = ObjectState::new(0.0, 0.0, 0.0, 0.0);
        let plant = PlantState::at_rest(Vector2::new(-0.07, 0.0), 0.01);
        assert_eq!(contact_loss_guard(&plant, &obj, &p), ContactMode::Separated);
        let mut plant = PlantState::at_rest(Vector2::new(-0.059, 0.0), 0.01);
        plant.last_contact_force = ContactForce::new(0.5, 0.0);
        plant.contact = ContactMode::Sticking;
        assert_eq!(contact_loss_guard(&plant, &obj, &p), ContactMode::Sticking);
    }
}
