//! Receding-horizon MPC for the compliant pushing model: multiple-shooting
//! transcription, a Gauss–Newton SQP with an interior-point QP, and the
//! warm-started controller wrapper.

mod controller;
pub mod qp;
mod sqp;
mod transcription;

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub use controller::{MpcController, MpcDiagnostics, MpcOutput};
pub use sqp::solve;
pub use transcription::{transcribe, Nlp};

use crate::compliant::{AugmentedState, ControlInput, InputVec, StateVec, NU, NX};
use crate::error::{PushError, Result};
use crate::limit_surface::LimitSurface;
use crate::limit_surface::ObjectParams;
use crate::pusher_slider::phi_corner;

/// Which terminal cost the transcription uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MayerMode {
    /// `(x_N − y*_N)ᵀ W_x (x_N − y*_N)`.
    #[default]
    TrackingError,
    /// `x_Nᵀ W_x x_N` on the raw terminal state.
    RawState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon_samples: usize,
    pub sample_rate: f64,
    pub state_weights: [f64; NX],
    pub input_weights: [f64; NU],
    pub mayer_scale: f64,
    pub lagrange_scale: f64,
    #[serde(default)]
    pub mayer_mode: MayerMode,
    /// State bounds. The `φ` entry is relative to the contact branch
    /// (the multiple of π nearest to the measured angle).
    pub state_lower: [f64; NX],
    pub state_upper: [f64; NX],
    pub input_lower: [f64; NU],
    pub input_upper: [f64; NU],
    pub max_sqp_iters: usize,
    pub kkt_tolerance: f64,
    #[serde(default = "default_true")]
    pub warm_start: bool,
    /// Carry the contact angle over from the previous prediction instead of
    /// taking it from the measurement.
    #[serde(default)]
    pub predict_phi: bool,
}

fn default_true() -> bool {
    true
}

impl MpcConfig {
    /// Config with the given horizon and weights and bounds derived from the object.
    pub fn with_weights(
        horizon_samples: usize,
        sample_rate: f64,
        state_weights: [f64; NX],
        input_weights: [f64; NU],
        params: &ObjectParams,
        ls: &LimitSurface,
    ) -> Self {
        let inf = f64::INFINITY;
        let corner = phi_corner(params);
        let mut state_lower = [-inf; NX];
        let mut state_upper = [inf; NX];
        state_lower[3] = -corner;
        state_upper[3] = corner;
        state_lower[6] = 0.0;
        state_upper[6] = 5.0 * ls.f_max;
        Self {
            horizon_samples,
            sample_rate,
            state_weights,
            input_weights,
            mayer_scale: 1.0,
            lagrange_scale: 10.0,
            mayer_mode: MayerMode::TrackingError,
            state_lower,
            state_upper,
            input_lower: [0.0, 0.0, -50.0 * ls.f_max, -50.0 * ls.f_max, -inf],
            input_upper: [PI, PI, 50.0 * ls.f_max, 50.0 * ls.f_max, inf],
            max_sqp_iters: 20,
            kkt_tolerance: 1e-6,
            warm_start: true,
            predict_phi: false,
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        let bad =
            |name: &'static str, reason: &str| Err(PushError::InvalidParameter { name, reason: reason.to_string() });
        if self.horizon_samples == 0 {
            return bad("horizon_samples", "must be at least 1");
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return bad("sample_rate", "must be positive");
        }
        if self.state_weights.iter().chain(&self.input_weights).any(|w| !(*w >= 0.0)) {
            return bad("weights", "must be non-negative");
        }
        if self.state_weights[3] != 0.0 {
            return bad("state_weights", "the contact-angle weight must be zero");
        }
        if !(self.mayer_scale >= 0.0 && self.lagrange_scale >= 0.0) {
            return bad("cost scale", "must be non-negative");
        }
        if self.state_lower.iter().zip(&self.state_upper).any(|(l, u)| !(l <= u)) {
            return bad("state bounds", "lower must not exceed upper");
        }
        if self.input_lower.iter().zip(&self.input_upper).any(|(l, u)| !(l <= u)) {
            return bad("input bounds", "lower must not exceed upper");
        }
        if self.input_lower[0] < 0.0 || self.input_lower[1] < 0.0 {
            return bad("input_lower", "sliding rates must be non-negative");
        }
        if self.max_sqp_iters == 0 || !(self.kkt_tolerance > 0.0) {
            return bad("solver settings", "need at least one iteration and a positive tolerance");
        }
        Ok(())
    }
}

/// Object-pose reference sampled at the MPC rate, one entry per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub poses: Vec<[f64; 3]>,
}

impl Reference {
    pub fn new(poses: Vec<[f64; 3]>) -> Self {
        Self { poses }
    }

    /// The constant reference holding one pose.
    pub fn stationary(pose: [f64; 3], horizon_samples: usize) -> Self {
        Self { poses: vec![pose; horizon_samples + 1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSolution {
    pub states: Vec<StateVec>,
    pub inputs: Vec<InputVec>,
    pub kkt_residual: f64,
    pub complementarity_residual: f64,
    pub defect_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl OcpSolution {
    pub fn state(&self, k: usize) -> AugmentedState {
        AugmentedState::from_vector(&self.states[k])
    }

    pub fn input(&self, k: usize) -> ControlInput {
        ControlInput::from_vector(&self.inputs[k])
    }
}

/// Friction-cone multipliers paired with `[φ̇₊, φ̇₋]`.
///
/// `φ̇₊ > 0` moves the contact point towards body −y, so sliding in that
/// direction requires the force on the lower cone edge `f_y = −μ f_x`; the
/// first multiplier `μ f_x + f_y` vanishes exactly there.
pub fn cone_multipliers(force: Vector2<f64>, mu: f64) -> Vector2<f64> {
    Vector2::new(mu * force.x + force.y, mu * force.x - force.y)
}

/// `(λ_v, φ̇_v, λ_vᵀ φ̇_v + ε)` for a state/input pair.
pub fn complementarity_terms(
    state: &AugmentedState,
    input: &ControlInput,
    mu: f64,
) -> (Vector2<f64>, Vector2<f64>, f64) {
    let lambda = cone_multipliers(state.force_body, mu);
    let rates = Vector2::new(input.phi_dot_plus, input.phi_dot_minus);
    let residual = lambda.dot(&rates) + input.slack;
    (lambda, rates, residual)
}

/// Per-stage complementarity figures of a solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplementarityReport {
    /// `max_k |λ_vᵀ φ̇_v + ε|`.
    pub max_residual: f64,
    pub min_multiplier: f64,
    pub min_rate: f64,
    /// Stages with a sliding rate above `SLIDING_RATE` on a vanishing multiplier.
    pub sliding_stages: usize,
}

/// Sliding-rate threshold (rad/s) used to count sliding stages.
pub const SLIDING_RATE: f64 = 1e-3;

pub fn complementarity_report(sol: &OcpSolution, mu: f64) -> ComplementarityReport {
    let mut r = ComplementarityReport {
        max_residual: 0.0,
        min_multiplier: f64::INFINITY,
        min_rate: f64::INFINITY,
        sliding_stages: 0,
    };
    for k in 0..sol.inputs.len() {
        let (lambda, rates, res) = complementarity_terms(&sol.state(k), &sol.input(k), mu);
        r.max_residual = r.max_residual.max(res.abs());
        r.min_multiplier = r.min_multiplier.min(lambda.min());
        r.min_rate = r.min_rate.min(rates.min());
        if (0..2).any(|i| rates[i] > SLIDING_RATE && lambda[i].abs() <= 1e-4) {
            r.sliding_stages += 1;
        }
    }
    r
}
