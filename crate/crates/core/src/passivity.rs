//! Energy-tank passivity filter on the set-point twist, storage-function
//! bookkeeping and a discrete passivity monitor.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{PushError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankConfig {
    pub initial_energy: f64,
    pub upper_bound: f64,
    pub lower_bound: f64,
    /// Diagonal of the 6×6 set-point feedback gain.
    pub gain: [f64; 6],
}

impl TankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lower_bound
            && self.lower_bound < self.initial_energy
            && self.initial_energy <= self.upper_bound)
        {
            return Err(PushError::InvalidParameter {
                name: "tank bounds",
                reason: format!(
                    "need 0 < lower ({}) < initial ({}) ≤ upper ({})",
                    self.lower_bound, self.initial_energy, self.upper_bound
                ),
            });
        }
        if self.gain.iter().any(|g| !(*g >= 0.0)) {
            return Err(PushError::InvalidParameter { name: "gain", reason: "must be non-negative".into() });
        }
        Ok(())
    }

    pub fn gain_matrix(&self) -> Vector6<f64> {
        Vector6::from_column_slice(&self.gain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankState {
    pub z: f64,
    pub alpha: u8,
    pub beta: u8,
    pub gamma: u8,
    pub filtered_setpoint_pose: Vector6<f64>,
    pub filtered_setpoint_twist: Vector6<f64>,
    /// Energy added (positive) or removed (negative) by the last bound clamp.
    pub clamp_energy: f64,
}

impl TankState {
    pub fn new(config: &TankConfig, setpoint_pose: Vector6<f64>) -> Self {
        Self {
            z: (2.0 * config.initial_energy).sqrt(),
            alpha: 1,
            beta: u8::from(config.initial_energy < config.upper_bound),
            gamma: 1,
            filtered_setpoint_pose: setpoint_pose,
            filtered_setpoint_twist: Vector6::zeros(),
            clamp_energy: 0.0,
        }
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.z * self.z
    }
}

/// `½ x̃ᵀ K x̃ + ½ ẋ̃ᵀ M ẋ̃` with diagonal `K`, `M`.
pub fn storage_v(error_pose: &Vector6<f64>, error_twist: &Vector6<f64>, k_d: &Vector6<f64>, m: &Vector6<f64>) -> f64 {
    0.5 * error_pose.component_mul(error_pose).dot(k_d) + 0.5 * error_twist.component_mul(error_twist).dot(m)
}

/// `β = 1` iff the tank is below its upper bound.
pub fn beta_flag(energy: f64, config: &TankConfig) -> u8 {
    u8::from(energy < config.upper_bound)
}

/// `γ = β` when the interaction power is negative (energy flowing into the
/// tank), otherwise 1.
pub fn gamma_flag(beta: u8, interaction_power: f64) -> u8 {
    if interaction_power < 0.0 {
        beta
    } else {
        1
    }
}

/// Tank rate `ż = (β ẋ̃ᵀDẋ̃ − γ ẋ̃ᵀf_p) / z`.
pub fn tank_rate(z: f64, beta: u8, gamma: u8, dissipation: f64, interaction_power: f64) -> f64 {
    (f64::from(beta) * dissipation - f64::from(gamma) * interaction_power) / z
}

/// Advances the tank over `dt`.
///
/// The update is taken on the energy `T = z²/2` (`Ṫ = z ż`), which keeps the
/// stored-energy balance exact per step; the result is clamped to
/// `[T_ε, T̄]` and the clamp is recorded.
pub fn tank_step(
    tank: &TankState,
    config: &TankConfig,
    error_twist_p: &Vector6<f64>,
    d_d: &Vector6<f64>,
    f_p: &Vector6<f64>,
    dt: f64,
) -> TankState {
    let t = tank.energy();
    let beta = beta_flag(t, config);
    let power = error_twist_p.dot(f_p);
    let gamma = gamma_flag(beta, power);
    let dissipation = error_twist_p.component_mul(error_twist_p).dot(d_d);
    let raw = t + dt * (f64::from(beta) * dissipation - f64::from(gamma) * power);
    let clamped = raw.clamp(config.lower_bound, config.upper_bound);
    TankState { z: (2.0 * clamped).sqrt(), beta, gamma, clamp_energy: clamped - raw, ..*tank }
}

/// Output of the set-point filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub tank: TankState,
    /// Filtered set-point pose at the start of the step.
    pub pose: Vector6<f64>,
    pub twist: Vector6<f64>,
    /// Candidate error rate used by the switching rule.
    pub candidate_error_twist: Vector6<f64>,
    pub candidate_power: f64,
}

/// Applies the switching law and returns the filtered set-point twist.
///
/// The pose stored in the returned tank state is advanced by explicit Euler
/// over `dt` with the returned twist; `pose` is the value at the step start.
#[allow(clippy::too_many_arguments)]
pub fn filter_setpoint(
    tank: &TankState,
    config: &TankConfig,
    mpc_pose: &Vector6<f64>,
    mpc_twist: &Vector6<f64>,
    plant_twist: &Vector6<f64>,
    f_p: &Vector6<f64>,
    dt: f64,
) -> FilterOutput {
    let lambda = config.gain_matrix();
    let pose = tank.filtered_setpoint_pose;
    let feed = lambda.component_mul(&(mpc_pose - pose)) + mpc_twist;
    let candidate = feed - plant_twist;
    let power = candidate.dot(f_p);
    let depleted = tank.energy() <= config.lower_bound;
    let alpha: u8 = if depleted && power > 0.0 { 0 } else { 1 };
    let twist = if alpha == 1 { feed } else { *plant_twist };
    FilterOutput {
        tank: TankState { alpha, filtered_setpoint_pose: pose + twist * dt, filtered_setpoint_twist: twist, ..*tank },
        pose,
        twist,
        candidate_error_twist: candidate,
        candidate_power: power,
    }
}

/// Bypass used when the filter is disabled: the set-point passes through
/// unchanged and the tank is left untouched.
pub fn bypass_setpoint(tank: &TankState, mpc_pose: &Vector6<f64>, mpc_twist: &Vector6<f64>, dt: f64) -> FilterOutput {
    FilterOutput {
        tank: TankState {
            alpha: 1,
            filtered_setpoint_pose: mpc_pose + mpc_twist * dt,
            filtered_setpoint_twist: *mpc_twist,
            ..*tank
        },
        pose: *mpc_pose,
        twist: *mpc_twist,
        candidate_error_twist: Vector6::zeros(),
        candidate_power: 0.0,
    }
}

/// One monitor sample: storage at the end of a step and the energy that
/// entered through the human port during that step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorSample {
    pub storage: f64,
    pub human_energy: f64,
    /// Largest instantaneous port power magnitude seen during the step.
    pub peak_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorReport {
    /// Slack budget `η = 10·dt·peak power`.
    pub eta: f64,
    /// `max_k (𝒱_k − 𝒱_0 − Σ E_h)`; passivity holds when this is ≤ η.
    pub max_excess: f64,
    /// First sample index where the excess exceeds `η`.
    pub first_violation: Option<usize>,
}

impl MonitorReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }

    pub fn margin(&self) -> f64 {
        self.eta - self.max_excess
    }
}

/// Checks `𝒱(t_k) − 𝒱(0) ≤ Σ_{j≤k} E_h,j + η` for every sample.
///
/// `initial_storage` is `𝒱(0)`; samples are uniformly spaced by `dt`.
pub fn passivity_monitor(initial_storage: f64, samples: &[MonitorSample], dt: f64) -> MonitorReport {
    let peak = samples.iter().map(|s| s.peak_power).fold(0.0, f64::max);
    let eta = 10.0 * dt * peak;
    let mut supplied = 0.0;
    let mut max_excess = f64::NEG_INFINITY;
    let mut first_violation = None;
    for (k, s) in samples.iter().enumerate() {
        supplied += s.human_energy;
        let excess = s.storage - initial_storage - supplied;
        max_excess = max_excess.max(excess);
        if excess > eta && first_violation.is_none() {
            first_violation = Some(k);
        }
    }
    if samples.is_empty() {
        max_excess = 0.0;
    }
    MonitorReport { eta, max_excess, first_violation }
}
