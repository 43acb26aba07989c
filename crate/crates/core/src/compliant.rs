//! Compliant pushing model: the impedance spring links the set-point to the
//! contact force, giving the 8-state augmented dynamics used by the MPC.
//!
//! State ordering: `[x, y, θ, φ, xd_x, xd_y, f_x, f_y]` (set-point and force
//! in the body frame). Input ordering: `[φ̇₊, φ̇₋, ḟ_x, ḟ_y, ε]`.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};
use crate::limit_surface::{LimitSurface, ObjectParams};
use crate::pusher_slider::{contact_point, ObjectState};

pub const NX: usize = 8;
pub const NU: usize = 5;

pub type StateVec = SVector<f64, NX>;
pub type InputVec = SVector<f64, NU>;
pub type StateJac = SMatrix<f64, NX, NX>;
pub type InputJac = SMatrix<f64, NX, NU>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessMatrix {
    pub kx: f64,
    pub ky: f64,
}

impl StiffnessMatrix {
    pub fn new(kx: f64, ky: f64) -> Result<Self> {
        ensure_positive("kx", kx)?;
        ensure_positive("ky", ky)?;
        Ok(Self { kx, ky })
    }

    pub fn isotropic(k: f64) -> Result<Self> {
        Self::new(k, k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedState {
    pub object: ObjectState,
    pub setpoint_body: Vector2<f64>,
    pub force_body: Vector2<f64>,
}

impl AugmentedState {
    /// Packs into a vector. The heading is stored as given (not re-wrapped).
    pub fn to_vector(&self) -> StateVec {
        let p = &self.object.pose;
        StateVec::from_column_slice(&[
            p.x,
            p.y,
            p.theta(),
            self.object.phi,
            self.setpoint_body.x,
            self.setpoint_body.y,
            self.force_body.x,
            self.force_body.y,
        ])
    }

    pub fn from_vector(v: &StateVec) -> Self {
        Self {
            object: ObjectState::new(v[0], v[1], v[2], v[3]),
            setpoint_body: Vector2::new(v[4], v[5]),
            force_body: Vector2::new(v[6], v[7]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub phi_dot_plus: f64,
    pub phi_dot_minus: f64,
    pub force_rate: Vector2<f64>,
    pub slack: f64,
}

impl ControlInput {
    pub fn phi_dot(&self) -> f64 {
        self.phi_dot_plus - self.phi_dot_minus
    }

    pub fn to_vector(&self) -> InputVec {
        InputVec::from_column_slice(&[
            self.phi_dot_plus,
            self.phi_dot_minus,
            self.force_rate.x,
            self.force_rate.y,
            self.slack,
        ])
    }

    pub fn from_vector(v: &InputVec) -> Self {
        Self { phi_dot_plus: v[0], phi_dot_minus: v[1], force_rate: Vector2::new(v[2], v[3]), slack: v[4] }
    }
}

/// Spring force `K (x_d − x_c(φ))` in the body frame.
pub fn spring_force(
    setpoint_body: Vector2<f64>,
    phi: f64,
    k: &StiffnessMatrix,
    params: &ObjectParams,
) -> Result<Vector2<f64>> {
    let c = contact_point(phi, params)?;
    Ok(Vector2::new(k.kx * (setpoint_body.x - c.x), k.ky * (setpoint_body.y - c.y)))
}

/// Set-point position that produces `force` at contact angle `phi`.
pub fn setpoint_for_force(
    force: Vector2<f64>,
    phi: f64,
    k: &StiffnessMatrix,
    params: &ObjectParams,
) -> Result<Vector2<f64>> {
    let c = contact_point(phi, params)?;
    Ok(Vector2::new(c.x + force.x / k.kx, c.y + force.y / k.ky))
}

/// Body-frame set-point velocity: the force-rate term `K⁻¹ḟ` plus the
/// contact-point sliding term.
pub fn setpoint_velocity(
    force_rate: Vector2<f64>,
    phi: f64,
    phi_dot: f64,
    k: &StiffnessMatrix,
    params: &ObjectParams,
) -> Result<Vector2<f64>> {
    contact_point(phi, params)?;
    let sec2 = phi.cos().powi(-2);
    Ok(Vector2::new(force_rate.x / k.kx, force_rate.y / k.ky - params.side_x / 2.0 * phi_dot * sec2))
}

/// Everything the augmented dynamics needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompliantModel {
    pub params: ObjectParams,
    pub ls: LimitSurface,
    pub k: StiffnessMatrix,
}

impl CompliantModel {
    pub fn new(params: ObjectParams, ls: LimitSurface, k: StiffnessMatrix) -> Self {
        Self { params, ls, k }
    }

    /// Time derivative of the packed state. No singularity check; callers
    /// keep `φ` away from `±π/2` through the state bounds.
    pub fn rhs(&self, x: &StateVec, u: &InputVec) -> StateVec {
        let [l1, l2, l3] = self.ls.l_diag();
        let h = self.params.side_x / 2.0;
        let (s, c) = x[2].sin_cos();
        let t = x[3].tan();
        let sec2 = 1.0 + t * t;
        let (fx, fy) = (x[6], x[7]);
        let tau = h * t * fx - h * fy;
        let (wx, wy) = (l1 * fx, l2 * fy);
        let phi_dot = u[0] - u[1];
        StateVec::from_column_slice(&[
            c * wx - s * wy,
            s * wx + c * wy,
            l3 * tau,
            phi_dot,
            u[2] / self.k.kx,
            u[3] / self.k.ky - h * phi_dot * sec2,
            u[2],
            u[3],
        ])
    }

    /// Analytic Jacobians `(∂f/∂x, ∂f/∂u)`.
    pub fn jacobians(&self, x: &StateVec, u: &InputVec) -> (StateJac, InputJac) {
        let [l1, l2, l3] = self.ls.l_diag();
        let h = self.params.side_x / 2.0;
        let (s, c) = x[2].sin_cos();
        let t = x[3].tan();
        let sec2 = 1.0 + t * t;
        let (fx, fy) = (x[6], x[7]);
        let (wx, wy) = (l1 * fx, l2 * fy);
        let phi_dot = u[0] - u[1];

        let mut a = StateJac::zeros();
        a[(0, 2)] = -(s * wx + c * wy);
        a[(1, 2)] = c * wx - s * wy;
        a[(0, 6)] = c * l1;
        a[(0, 7)] = -s * l2;
        a[(1, 6)] = s * l1;
        a[(1, 7)] = c * l2;
        a[(2, 3)] = l3 * h * sec2 * fx;
        a[(2, 6)] = l3 * h * t;
        a[(2, 7)] = -l3 * h;
        a[(5, 3)] = -h * phi_dot * 2.0 * sec2 * t;

        let mut b = InputJac::zeros();
        b[(3, 0)] = 1.0;
        b[(3, 1)] = -1.0;
        b[(4, 2)] = 1.0 / self.k.kx;
        b[(5, 3)] = 1.0 / self.k.ky;
        b[(5, 0)] = -h * sec2;
        b[(5, 1)] = h * sec2;
        b[(6, 2)] = 1.0;
        b[(7, 3)] = 1.0;
        (a, b)
    }

    /// One explicit RK4 step with constant input.
    pub fn rk4(&self, x: &StateVec, u: &InputVec, dt: f64) -> StateVec {
        let k1 = self.rhs(x, u);
        let k2 = self.rhs(&(x + k1 * (dt / 2.0)), u);
        let k3 = self.rhs(&(x + k2 * (dt / 2.0)), u);
        let k4 = self.rhs(&(x + k3 * dt), u);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
    }

    /// RK4 step together with its exact sensitivities w.r.t. `x` and `u`.
    pub fn rk4_with_sensitivities(&self, x: &StateVec, u: &InputVec, dt: f64) -> (StateVec, StateJac, InputJac) {
        let eye = StateJac::identity();
        let stage = |xs: &StateVec, dxs: &StateJac, dus: &InputJac| {
            let k = self.rhs(xs, u);
            let (a, b) = self.jacobians(xs, u);
            (k, a * dxs, a * dus + b)
        };
        let (k1, k1x, k1u) = stage(x, &eye, &InputJac::zeros());
        let half = dt / 2.0;
        let (k2, k2x, k2u) = stage(&(x + k1 * half), &(eye + k1x * half), &(k1u * half));
        let (k3, k3x, k3u) = stage(&(x + k2 * half), &(eye + k2x * half), &(k2u * half));
        let (k4, k4x, k4u) = stage(&(x + k3 * dt), &(eye + k3x * dt), &(k3u * dt));
        let w = dt / 6.0;
        (
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * w,
            eye + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * w,
            (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * w,
        )
    }
}

/// Time derivative of the augmented state.
pub fn augmented_dynamics(state: &AugmentedState, input: &ControlInput, model: &CompliantModel) -> Result<StateVec> {
    contact_point(state.object.phi, &model.params)?;
    Ok(model.rhs(&state.to_vector(), &input.to_vector()))
}
