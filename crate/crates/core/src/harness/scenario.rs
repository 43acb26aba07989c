//! Experiment profiles and the fully resolved run configuration.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::compliant::{NU, NX};
use crate::error::{ensure_positive, PushError, Result};
use crate::limit_surface::{build_limit_surface, ObjectParams};
use crate::ocp::MpcConfig;
use crate::passivity::TankConfig;
use crate::plant::{DisturbanceSpec, ImpedanceParams};

use super::reference::PathKind;

/// Apparent Cartesian mass of the simulated flange, per axis.
pub const DEFAULT_APPARENT_MASS: f64 = 2.0;

/// Test-tube rack mass levels (empty, half-full, full).
pub const RACK_MASSES: [f64; 3] = [0.1649, 0.2843, 0.4097];
/// Object-table friction levels (aluminium, nylon, steel).
pub const TABLE_FRICTIONS: [f64; 3] = [0.35, 0.28, 0.33];
/// Mean path velocities of the robustness campaign.
pub const SWEEP_VELOCITIES: [f64; 4] = [0.0313, 0.0391, 0.0521, 0.0782];
/// Path length used for the line and curve runs of the campaign.
pub const SWEEP_PATH_LENGTH: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Profile {
    /// Physics-simulation setup: 1 kHz MPC, steel box.
    #[serde(rename = "sim")]
    Sim,
    /// Mobile dual-arm setup: 15 Hz vision-rate MPC, test-tube rack.
    #[serde(rename = "yumi")]
    Yumi,
    /// Lightweight arm setup: 25 Hz MPC, 200 Hz interpolation, test-tube rack.
    #[serde(rename = "kuka")]
    Kuka,
}

impl Profile {
    pub fn as_str(&self) -> &'static str {
        match self {
            Profile::Sim => "sim",
            Profile::Yumi => "yumi",
            Profile::Kuka => "kuka",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sim" => Ok(Profile::Sim),
            "yumi" => Ok(Profile::Yumi),
            "kuka" => Ok(Profile::Kuka),
            other => Err(PushError::Config(format!("unknown profile '{other}' (expected sim, yumi or kuka)"))),
        }
    }
}

/// High-level description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub profile: Profile,
    pub path: PathKind,
    pub mean_velocity: f64,
    #[serde(default)]
    pub disturbance: DisturbanceSpec,
    /// True object mass; the controller keeps the profile's nominal value.
    #[serde(default)]
    pub mass: Option<f64>,
    /// True object-ground friction; the controller keeps the nominal value.
    #[serde(default)]
    pub mu_ground: Option<f64>,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    /// Default scenario of a profile: the eight-shape for the simulation
    /// setup, a line at the slowest campaign speed for the robot setups.
    pub fn nominal(profile: Profile) -> Self {
        match profile {
            Profile::Sim => Self {
                profile,
                path: PathKind::Eight,
                mean_velocity: 0.05,
                disturbance: DisturbanceSpec::None,
                mass: None,
                mu_ground: None,
                duration: 15.0,
                seed: 0,
            },
            Profile::Yumi | Profile::Kuka => Self {
                profile,
                path: PathKind::Line,
                mean_velocity: SWEEP_VELOCITIES[0],
                disturbance: DisturbanceSpec::None,
                mass: None,
                mu_ground: None,
                duration: SWEEP_PATH_LENGTH / SWEEP_VELOCITIES[0],
                seed: 0,
            },
        }
    }

    /// The obstacle experiment: a wall in front of the object from 3 s to 5 s.
    /// The gap places first contact about 0.83 s after the wall appears.
    pub fn eight_obstacle() -> Self {
        Self {
            disturbance: DisturbanceSpec::BlockingWall { start_s: 3.0, end_s: 5.0, normal: None, gap: 0.0415 },
            ..Self::nominal(Profile::Sim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("mean_velocity", self.mean_velocity)?;
        ensure_positive("duration", self.duration)?;
        if let Some(m) = self.mass {
            ensure_positive("mass", m)?;
        }
        if let Some(mu) = self.mu_ground {
            ensure_positive("mu_ground", mu)?;
        }
        self.disturbance.validate()
    }

    /// Expands the scenario into a complete configuration.
    pub fn resolve(&self) -> Result<RunConfig> {
        self.validate()?;
        let mut cfg = profile_defaults(self.profile)?;
        cfg.path = self.path;
        cfg.mean_velocity = self.mean_velocity;
        cfg.duration = self.duration;
        cfg.seed = self.seed;
        cfg.disturbance = self.disturbance;
        if let Some(m) = self.mass {
            cfg.object.mass = m;
        }
        if let Some(mu) = self.mu_ground {
            cfg.object.mu_ground = mu;
        }
        cfg.name = format!("{}_{}", self.profile.as_str(), self.path.as_str());
        if !matches!(self.disturbance, DisturbanceSpec::None) {
            cfg.name.push_str("_disturbed");
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything a closed-loop run needs; serializes to TOML and back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub profile: Profile,
    pub path: PathKind,
    pub mean_velocity: f64,
    pub duration: f64,
    pub seed: u64,
    pub disturbance: DisturbanceSpec,
    /// Object simulated by the plant.
    pub object: ObjectParams,
    /// Object assumed by the controller.
    pub model_object: ObjectParams,
    /// Initial object pose `(x, y, θ)` and contact angle.
    pub start_pose: [f64; 3],
    pub start_phi: f64,
    pub impedance: ImpedanceParams,
    pub tool_radius: f64,
    pub plant_rate: f64,
    /// Rate at which the interpolated set-point is sent to the impedance controller.
    pub command_rate: f64,
    pub mpc: MpcConfig,
    pub tank: TankConfig,
    pub tank_enabled: bool,
    /// Freeze the reference clock while the filter holds the set-point.
    pub planner_hold: bool,
    /// Seed the controller's set-point and force states from the set-point
    /// actually applied to the robot instead of its own last prediction.
    pub setpoint_feedback: bool,
    /// Standard deviation of Gaussian pose measurement noise (m, m, rad).
    #[serde(default)]
    pub pose_noise_std: [f64; 3],
    /// Initial transient excluded from the nominal error bounds.
    pub transient_s: f64,
    /// Recovery margin after an interaction window, also excluded.
    pub recovery_margin_s: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("mean_velocity", self.mean_velocity)?;
        ensure_positive("duration", self.duration)?;
        ensure_positive("plant_rate", self.plant_rate)?;
        ensure_positive("command_rate", self.command_rate)?;
        self.object.validate()?;
        self.model_object.validate()?;
        self.impedance.validate()?;
        self.mpc.validate()?;
        self.tank.validate()?;
        self.disturbance.validate()?;
        if !(self.tool_radius >= 0.0) {
            return Err(PushError::InvalidParameter { name: "tool_radius", reason: "must be non-negative".into() });
        }
        if self.pose_noise_std.iter().any(|s| !(*s >= 0.0)) {
            return Err(PushError::InvalidParameter { name: "pose_noise_std", reason: "must be non-negative".into() });
        }
        let ratio = self.plant_rate / self.mpc.sample_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(PushError::InvalidParameter {
                name: "plant_rate",
                reason: format!("must be an integer multiple of the MPC rate {}", self.mpc.sample_rate),
            });
        }
        let ratio = self.plant_rate / self.command_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
            return Err(PushError::InvalidParameter {
                name: "command_rate",
                reason: "plant rate must be an integer multiple of it".into(),
            });
        }
        Ok(())
    }

    pub fn plant_dt(&self) -> f64 {
        1.0 / self.plant_rate
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| PushError::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PushError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn impedance(k: f64, d: f64) -> ImpedanceParams {
    ImpedanceParams { apparent_mass: [DEFAULT_APPARENT_MASS; 2], stiffness: [k; 2], damping: [d; 2] }
}

/// Configuration of each profile with its nominal object and eight-shape or line path.
pub fn profile_defaults(profile: Profile) -> Result<RunConfig> {
    let (object, start_pose, tool_radius, rate, horizon, wx, wu, imp, tank, tank_enabled, command_rate): (
        ObjectParams,
        [f64; 3],
        f64,
        f64,
        usize,
        [f64; NX],
        [f64; NU],
        ImpedanceParams,
        TankConfig,
        bool,
        f64,
    ) = match profile {
        Profile::Sim => (
            ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2),
            [0.0, 0.6, PI / 4.0],
            0.01,
            1000.0,
            5,
            [1e6, 1e6, 1.5e6, 0.0, 0.0, 0.0, 1e-2, 0.1],
            [1e-3, 1e-3, 1e-2, 1.0, 10.0],
            impedance(300.0, 50.0),
            TankConfig {
                initial_energy: 1e-2,
                upper_bound: 1e-2,
                lower_bound: 5e-4,
                gain: [50.0, 50.0, 0.0, 0.0, 0.0, 0.0],
            },
            true,
            1000.0,
        ),
        Profile::Yumi => (
            ObjectParams::new(0.474, 0.21, 0.09, 0.35, 0.2),
            [0.0, 0.0, 0.0],
            0.0075,
            15.0,
            3,
            [3e2, 3e2, 3e2, 0.0, 0.0, 0.0, 0.0, 1e-4],
            [0.1, 0.1, 0.1, 0.0, 0.1],
            impedance(300.0, 50.0),
            TankConfig {
                initial_energy: 5e-3,
                upper_bound: 6e-3,
                lower_bound: 1.5e-3,
                gain: [50.0, 50.0, 0.0, 0.0, 0.0, 0.0],
            },
            true,
            250.0,
        ),
        Profile::Kuka => {
            let m = [DEFAULT_APPARENT_MASS; 2];
            let d = ImpedanceParams::damping_from_ratio(0.7, m, [300.0; 2]);
            (
                ObjectParams::new(RACK_MASSES[2], 0.21, 0.09, TABLE_FRICTIONS[0], 0.2),
                [0.0, 0.0, 0.0],
                0.0125,
                25.0,
                25,
                [1e2, 1e2, 1e2, 0.0, 0.0, 0.0, 1e-4, 1e-4],
                [0.1, 0.1, 0.5, 0.5, 1e-2],
                ImpedanceParams { apparent_mass: m, stiffness: [300.0; 2], damping: d },
                TankConfig {
                    initial_energy: 5e-3,
                    upper_bound: 6e-3,
                    lower_bound: 1.5e-3,
                    gain: [50.0, 50.0, 0.0, 0.0, 0.0, 0.0],
                },
                true,
                200.0,
            )
        }
    };
    let ls = build_limit_surface(&object)?;
    let mut mpc = MpcConfig::with_weights(horizon, rate, wx, wu, &object, &ls);
    // Keep the complementarity relaxation small: a free slack lets the
    // planner command sliding the plant cannot realise.
    mpc.input_lower[4] = -1e-6;
    mpc.input_upper[4] = 0.0;
    let nominal = Scenario::nominal(profile);
    Ok(RunConfig {
        name: format!("{}_{}", profile.as_str(), nominal.path.as_str()),
        profile,
        path: nominal.path,
        mean_velocity: nominal.mean_velocity,
        duration: nominal.duration,
        seed: 0,
        disturbance: DisturbanceSpec::None,
        object,
        model_object: object,
        start_pose,
        start_phi: PI,
        impedance: imp,
        tool_radius,
        // 15 Hz updates need a plant rate that is an integer multiple.
        plant_rate: if profile == Profile::Yumi { 750.0 } else { 1000.0 },
        command_rate,
        mpc,
        tank,
        tank_enabled,
        planner_hold: true,
        setpoint_feedback: false,
        pose_noise_std: [0.0; 3],
        transient_s: 2.0,
        recovery_margin_s: 2.0,
    })
}

/// Built-in configurations addressable by name from the command line.
pub fn builtin_config(name: &str) -> Option<Result<RunConfig>> {
    let scenario = match name {
        "eight" | "sim" => Scenario::nominal(Profile::Sim),
        "eight_obstacle" => Scenario::eight_obstacle(),
        "yumi" | "yumi_line" => Scenario::nominal(Profile::Yumi),
        "kuka" | "kuka_line" => Scenario::nominal(Profile::Kuka),
        "kuka_curve" => Scenario { path: PathKind::Curve, ..Scenario::nominal(Profile::Kuka) },
        _ => return None,
    };
    Some(scenario.resolve().map(|mut c| {
        c.name = name.to_string();
        c
    }))
}

pub const BUILTIN_NAMES: [&str; 5] = ["eight", "eight_obstacle", "yumi_line", "kuka_line", "kuka_curve"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        for name in BUILTIN_NAMES {
            let cfg = builtin_config(name).unwrap().unwrap();
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::from_toml(&text).unwrap();
            assert_eq!(cfg, back, "{name}");
        }
    }

    #[test]
    fn rejects_unknown_profile() {
        assert!(Profile::parse("abb").is_err());
    }
}
