//! Closed-loop experiment runner: MPC at its sample rate, set-point
//! interpolation, passivity filter, impedance plant and energy bookkeeping.

use nalgebra::{Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::compliant::{spring_force, CompliantModel, StiffnessMatrix};
use crate::error::{PushError, Result};
use crate::limit_surface::build_limit_surface;
use crate::ocp::{MpcController, MpcOutput, Reference, SolveStatus};
use crate::passivity::{
    bypass_setpoint, filter_setpoint, passivity_monitor, tank_step, MonitorReport, MonitorSample, TankState,
};
use crate::planar::{wrap_angle, PlanarPose};
use crate::plant::{lift_wrench, plant_step, pushing_direction, PlantState};
use crate::pusher_slider::{contact_point, ObjectState};

use super::metrics::{tracking_metrics, RunMetrics};
use super::reference::ReferenceTrajectory;
use super::scenario::RunConfig;
use super::trace::{TraceRow, TRACE_SCHEMA_VERSION};

/// Result of one closed-loop run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub metrics: RunMetrics,
    pub monitor: MonitorReport,
    /// Solver wall-clock time per MPC solve (not part of the trace).
    pub solve_times: Vec<f64>,
}

fn embed(v: Vector2<f64>) -> Vector6<f64> {
    Vector6::new(v.x, v.y, 0.0, 0.0, 0.0, 0.0)
}

fn planar(v: &Vector6<f64>) -> Vector2<f64> {
    Vector2::new(v[0], v[1])
}

/// Straight set-point segment `p0 + v (t − t0)`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    p0: Vector2<f64>,
    v: Vector2<f64>,
}

impl Segment {
    fn at(&self, t: f64) -> Vector2<f64> {
        self.p0 + self.v * (t - self.t0)
    }
}

fn quadratic(a: Vector2<f64>, w: [f64; 2]) -> f64 {
    0.5 * (w[0] * a.x * a.x + w[1] * a.y * a.y)
}

/// Runs the configured experiment.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dt = cfg.plant_dt();
    let steps = (cfg.duration * cfg.plant_rate).round() as usize;
    let mpc_every = (cfg.plant_rate / cfg.mpc.sample_rate).round() as usize;
    let cmd_every = (cfg.plant_rate / cfg.command_rate).round() as usize;
    let total_solves = steps.div_ceil(mpc_every);

    let traj = ReferenceTrajectory::new(cfg.path, cfg.mean_velocity, cfg.start_pose)?;
    let ls_true = build_limit_surface(&cfg.object)?;
    let ls_model = build_limit_surface(&cfg.model_object)?;
    let k = StiffnessMatrix::new(cfg.impedance.stiffness[0], cfg.impedance.stiffness[1])?;
    let model = CompliantModel::new(cfg.model_object, ls_model, k);
    let mut controller = MpcController::new(cfg.mpc.clone(), model)?;

    let [x0, y0, th0] = cfg.start_pose;
    let mut object = ObjectState { pose: PlanarPose::new(x0, y0, th0), phi: cfg.start_phi };
    let r = cfg.tool_radius;
    let contact0 = object.pose.to_world(contact_point(object.phi, &cfg.object)?);
    let flange0 = contact0 - pushing_direction(th0) * r;
    let mut plant = PlantState::at_rest(flange0, r);
    let mut tank = TankState::new(&cfg.tank, embed(flange0));
    let d6 = cfg.impedance.damping6();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<Normal<f64>> = cfg
        .pose_noise_std
        .iter()
        .map(|s| Normal::new(0.0, *s).map_err(|e| PushError::Config(e.to_string())))
        .collect::<Result<_>>()?;

    let mut mpc_seg = Segment { t0: 0.0, p0: flange0, v: Vector2::zeros() };
    let mut cmd_seg = mpc_seg;
    let mut last_out: Option<MpcOutput> = None;
    let mut ref_clock = 0.0;
    let mut plant_storage_prev = 0.0;
    let initial_storage = tank_storage(cfg, &tank);
    let mut trace = Vec::with_capacity(steps);
    let mut samples = Vec::with_capacity(steps);
    let mut solve_times = Vec::new();
    let mut infeasible = 0usize;

    for step in 0..steps {
        let t = step as f64 * dt;
        let mut mpc_update = false;
        if step % mpc_every == 0 {
            mpc_update = true;
            let mut measured = object;
            if cfg.pose_noise_std.iter().any(|s| *s > 0.0) {
                let p = measured.pose;
                measured.pose = PlanarPose::new(
                    p.x + noise[0].sample(&mut rng),
                    p.y + noise[1].sample(&mut rng),
                    p.theta() + noise[2].sample(&mut rng),
                );
            }
            if cfg.setpoint_feedback && step > 0 {
                let applied = planar(&tank.filtered_setpoint_pose) + pushing_direction(object.pose.theta()) * r;
                let sp_body = measured.pose.to_body(applied);
                let phi = measured.phi.clamp(
                    crate::pusher_slider::phi_branch(measured.phi) + cfg.mpc.state_lower[3],
                    crate::pusher_slider::phi_branch(measured.phi) + cfg.mpc.state_upper[3],
                );
                let f = spring_force(sp_body, phi, &k, &cfg.model_object)?;
                controller = controller.with_internal_state(sp_body, f);
            }
            let rate = cfg.mpc.sample_rate;
            let poses = (0..=cfg.mpc.horizon_samples)
                .map(|j| {
                    let p = traj.pose_at(ref_clock + j as f64 / rate);
                    [p.x, p.y, p.theta]
                })
                .collect();
            let out = controller.step(&measured, &Reference::new(poses))?;
            solve_times.push(out.diagnostics.solve_time_s);
            if out.diagnostics.status == SolveStatus::Infeasible {
                infeasible += 1;
                if infeasible as f64 > 0.01 * total_solves as f64 {
                    return Err(PushError::SolverInfeasible { fraction: infeasible as f64 / total_solves as f64 });
                }
            }
            let p0 = out.setpoint_position_world - pushing_direction(out.theta) * r;
            let p1 = out.next_setpoint_world - pushing_direction(out.next_theta) * r;
            mpc_seg = Segment { t0: t, p0, v: (p1 - p0) * rate };
            if out.diagnostics.held {
                mpc_seg.v = Vector2::zeros();
            }
            last_out = Some(out);
        }
        if step % cmd_every == 0 {
            cmd_seg = Segment { t0: t, p0: mpc_seg.at(t), v: mpc_seg.v };
        }
        let out = last_out.expect("controller runs on the first step");
        let raw_pose = cmd_seg.at(t);
        let raw_vel = cmd_seg.v;

        let p_ec = pushing_direction(object.pose.theta()) * r;
        let f_p_world = out.predicted_force_world;
        let f_p = lift_wrench(f_p_world, Vector3::new(p_ec.x, p_ec.y, 0.0));
        let filtered = if cfg.tank_enabled {
            filter_setpoint(&tank, &cfg.tank, &embed(raw_pose), &embed(raw_vel), &embed(plant.flange_vel), &f_p, dt)
        } else {
            bypass_setpoint(&tank, &embed(raw_pose), &embed(raw_vel), dt)
        };
        let imp = &cfg.impedance;
        // Storage change from a discontinuous set-point pose (the error rate
        // is a continuous plant state).
        let jump = quadratic(planar(&filtered.pose) - plant.flange_pos, imp.stiffness)
            + quadratic(plant.error_rate, imp.apparent_mass)
            - plant_storage_prev;
        let sp_pose = planar(&filtered.pose);
        let sp_vel = planar(&filtered.twist);

        let ps = plant_step(&plant, &object, sp_pose, sp_vel, &cfg.disturbance, t, dt, imp, &ls_true, &cfg.object)?;
        let r_mid = ps.error_rate_mid;
        let interaction_power = r_mid.dot(&f_p_world);
        let human_power = r_mid.dot(&(ps.applied_force_world - f_p_world));
        tank = if cfg.tank_enabled {
            tank_step(&filtered.tank, &cfg.tank, &embed(r_mid), &d6, &f_p, dt)
        } else {
            filtered.tank
        };
        plant_storage_prev = quadratic(ps.error, imp.stiffness) + quadratic(ps.error_rate, imp.apparent_mass);
        let storage = plant_storage_prev + tank_storage(cfg, &tank);
        let peak = interaction_power.abs().max(human_power.abs());
        samples.push(MonitorSample { storage, human_energy: dt * human_power, peak_power: peak });

        plant = ps.plant;
        object = ps.object;
        let hold = cfg.tank_enabled && cfg.planner_hold && tank.alpha == 0;
        if !hold {
            ref_clock += dt;
        }
        let t_end = t + dt;
        let reference = traj.pose_at(ref_clock);
        let pose = object.pose;
        let d = out.diagnostics;
        trace.push(TraceRow {
            schema: TRACE_SCHEMA_VERSION,
            time: t_end,
            ref_clock,
            ref_x: reference.x,
            ref_y: reference.y,
            ref_theta: reference.theta,
            obj_x: pose.x,
            obj_y: pose.y,
            obj_theta: pose.theta(),
            phi: object.phi,
            err_x: pose.x - reference.x,
            err_y: pose.y - reference.y,
            err_theta: wrap_angle(pose.theta() - reference.theta),
            flange_x: plant.flange_pos.x,
            flange_y: plant.flange_pos.y,
            flange_vx: plant.flange_vel.x,
            flange_vy: plant.flange_vel.y,
            sp_raw_x: raw_pose.x,
            sp_raw_y: raw_pose.y,
            sp_raw_vx: raw_vel.x,
            sp_raw_vy: raw_vel.y,
            sp_filt_x: sp_pose.x,
            sp_filt_y: sp_pose.y,
            sp_filt_vx: sp_vel.x,
            sp_filt_vy: sp_vel.y,
            force_n: ps.contact_force.fn_,
            force_t: ps.contact_force.ft,
            force_norm: ps.contact_force.norm(),
            pred_force_x: out.predicted_force_body.x,
            pred_force_y: out.predicted_force_body.y,
            pred_force_norm: out.predicted_force_body.norm(),
            phi_dot_plus: out.phi_rates[0],
            phi_dot_minus: out.phi_rates[1],
            mode: ps.mode.as_str().to_string(),
            disturbance_active: cfg.disturbance.is_active(t),
            disturbance_fx: ps.disturbance_force.x,
            disturbance_fy: ps.disturbance_force.y,
            tank_energy: tank.energy(),
            alpha: tank.alpha,
            beta: tank.beta,
            gamma: tank.gamma,
            interaction_power,
            human_power,
            jump_energy: jump,
            storage,
            clamp_energy: tank.clamp_energy,
            mpc_update,
            mpc_iterations: d.iterations,
            mpc_status: d.status.as_str().to_string(),
            mpc_kkt: d.kkt_residual,
            mpc_complementarity: d.complementarity_residual,
            mpc_min_multiplier: d.min_cone_multiplier,
            mpc_min_sliding_rate: d.min_sliding_rate,
            mpc_sliding_stages: d.sliding_stages,
        });
    }

    let monitor = passivity_monitor(initial_storage, &samples, dt);
    let window = cfg.disturbance.window();
    let (transient, margin) = (cfg.transient_s, cfg.recovery_margin_s);
    let mut metrics = tracking_metrics(&trace, |row| {
        row.time >= transient && window.is_none_or(|(a, b)| row.time < a || row.time > b + margin)
    });
    metrics.monitor_eta = monitor.eta;
    metrics.monitor_max_excess = monitor.max_excess;
    metrics.monitor_passed = monitor.passed();
    Ok(RunOutput { trace, metrics, monitor, solve_times })
}

fn tank_storage(cfg: &RunConfig, tank: &TankState) -> f64 {
    if cfg.tank_enabled {
        tank.energy()
    } else {
        0.0
    }
}
