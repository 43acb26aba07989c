use std::time::Instant;

use nalgebra::Vector2;

use crate::compliant::{setpoint_velocity, AugmentedState, CompliantModel, InputVec, StateVec};
use crate::error::Result;
use crate::planar::rotate2;
use crate::pusher_slider::{contact_point, phi_branch, ObjectState};

use super::{complementarity_report, solve, transcribe, MpcConfig, OcpSolution, Reference, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcDiagnostics {
    pub iterations: usize,
    pub kkt_residual: f64,
    pub complementarity_residual: f64,
    pub defect_residual: f64,
    pub min_cone_multiplier: f64,
    pub min_sliding_rate: f64,
    pub sliding_stages: usize,
    pub status: SolveStatus,
    /// True when the previous set-point was held because the solve failed.
    pub held: bool,
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcOutput {
    /// Contact set-point now, in world coordinates.
    pub setpoint_position_world: Vector2<f64>,
    /// Set-point velocity now, in world coordinates.
    pub setpoint_velocity_world: Vector2<f64>,
    /// Predicted contact set-point one sample ahead.
    pub next_setpoint_world: Vector2<f64>,
    /// Predicted object heading one sample ahead.
    pub next_theta: f64,
    /// First-stage sliding rates `(φ̇₊, φ̇₋)`.
    pub phi_rates: [f64; 2],
    pub setpoint_body: Vector2<f64>,
    pub predicted_force_body: Vector2<f64>,
    pub predicted_force_world: Vector2<f64>,
    /// Object heading used for the body-to-world maps.
    pub theta: f64,
    pub diagnostics: MpcDiagnostics,
}

/// Stateful receding-horizon controller.
#[derive(Debug, Clone)]
pub struct MpcController {
    config: MpcConfig,
    model: CompliantModel,
    previous: Option<OcpSolution>,
    internal: Option<(Vector2<f64>, Vector2<f64>)>,
    predicted_phi: Option<f64>,
    last_output: Option<MpcOutput>,
}

/// Shifts a solution one stage forward, repeating the last stage.
pub(crate) fn shift_solution(sol: &OcpSolution) -> OcpSolution {
    let mut s = sol.clone();
    let n = s.inputs.len();
    if n > 0 {
        s.states.remove(0);
        s.states.push(*s.states.last().unwrap());
        s.inputs.remove(0);
        s.inputs.push(*s.inputs.last().unwrap());
    }
    s
}

impl MpcController {
    pub fn new(config: MpcConfig, model: CompliantModel) -> Result<Self> {
        config.validate()?;
        model.params.validate()?;
        Ok(Self { config, model, previous: None, internal: None, predicted_phi: None, last_output: None })
    }

    /// Controller whose internal set-point/force states start from the given values.
    pub fn with_internal_state(mut self, setpoint_body: Vector2<f64>, force_body: Vector2<f64>) -> Self {
        self.internal = Some((setpoint_body, force_body));
        self
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn model(&self) -> &CompliantModel {
        &self.model
    }

    pub fn last_solution(&self) -> Option<&OcpSolution> {
        self.previous.as_ref()
    }

    /// Internal set-point and force states that the next step will use.
    pub fn internal_state(&self) -> Option<(Vector2<f64>, Vector2<f64>)> {
        self.internal
    }

    /// Builds the initial state from the measurement and the internal states,
    /// projected onto the constraint set so the QP subproblems stay feasible.
    pub fn initial_state(&self, measured: &ObjectState) -> Result<AugmentedState> {
        let c = &self.config;
        let phi = match self.predicted_phi {
            Some(p) if c.predict_phi => p,
            _ => measured.phi,
        };
        let branch = phi_branch(phi);
        let phi = phi.clamp(branch + c.state_lower[3], branch + c.state_upper[3]);
        let object = ObjectState { pose: measured.pose, phi };
        let (setpoint_body, force) = match self.internal {
            Some(v) => v,
            None => (contact_point(phi, &self.model.params)?, Vector2::zeros()),
        };
        let mu = self.model.params.mu_contact;
        let fx = force.x.clamp(c.state_lower[6].max(0.0), c.state_upper[6]);
        let fy = force.y.clamp((-mu * fx).max(c.state_lower[7]), (mu * fx).min(c.state_upper[7]));
        Ok(AugmentedState { object, setpoint_body, force_body: Vector2::new(fx, fy) })
    }

    /// One receding-horizon step.
    pub fn step(&mut self, measured: &ObjectState, reference: &Reference) -> Result<MpcOutput> {
        let x0 = self.initial_state(measured)?;
        let nlp = transcribe(&self.config, &x0, reference, &self.model)?;
        let warm = if self.config.warm_start { self.previous.as_ref().map(shift_solution) } else { None };
        let start = Instant::now();
        let sol = solve(&nlp, warm.as_ref());
        let solve_time_s = start.elapsed().as_secs_f64();
        let comp = complementarity_report(&sol, self.model.params.mu_contact);
        let mut diagnostics = MpcDiagnostics {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            complementarity_residual: sol.complementarity_residual,
            defect_residual: sol.defect_residual,
            min_cone_multiplier: comp.min_multiplier,
            min_sliding_rate: comp.min_rate,
            sliding_stages: comp.sliding_stages,
            status: sol.status,
            held: false,
            solve_time_s,
        };

        if sol.status == SolveStatus::Infeasible {
            diagnostics.held = true;
            let theta = measured.pose.theta();
            let out = match self.last_output {
                Some(prev) => MpcOutput {
                    setpoint_velocity_world: Vector2::zeros(),
                    next_setpoint_world: prev.setpoint_position_world,
                    next_theta: prev.theta,
                    phi_rates: [0.0; 2],
                    diagnostics,
                    ..prev
                },
                None => {
                    let p = measured.pose.to_world(x0.setpoint_body);
                    MpcOutput {
                        setpoint_position_world: p,
                        setpoint_velocity_world: Vector2::zeros(),
                        next_setpoint_world: p,
                        next_theta: theta,
                        phi_rates: [0.0; 2],
                        setpoint_body: x0.setpoint_body,
                        predicted_force_body: x0.force_body,
                        predicted_force_world: rotate2(theta, x0.force_body),
                        theta,
                        diagnostics,
                    }
                }
            };
            self.last_output = Some(out);
            self.previous = None;
            return Ok(out);
        }

        let out = self.output_from(&sol, diagnostics)?;
        let x1 = &sol.states[1];
        self.internal = Some((Vector2::new(x1[4], x1[5]), Vector2::new(x1[6], x1[7])));
        self.predicted_phi = Some(x1[3]);
        self.previous = Some(sol);
        self.last_output = Some(out);
        Ok(out)
    }

    fn output_from(&self, sol: &OcpSolution, diagnostics: MpcDiagnostics) -> Result<MpcOutput> {
        let x0: &StateVec = &sol.states[0];
        let u0: &InputVec = &sol.inputs[0];
        let x1 = &sol.states[1];
        let theta = x0[2];
        let setpoint_body = Vector2::new(x0[4], x0[5]);
        let force_body = Vector2::new(x0[6], x0[7]);
        let obj = Vector2::new(x0[0], x0[1]);
        let sp_world_rel = rotate2(theta, setpoint_body);
        let sp_dot_body =
            setpoint_velocity(Vector2::new(u0[2], u0[3]), x0[3], u0[0] - u0[1], &self.model.k, &self.model.params)?;
        let rates = self.model.rhs(x0, u0);
        let omega = rates[2];
        let velocity = rotate2(theta, sp_dot_body)
            + Vector2::new(rates[0], rates[1])
            + Vector2::new(-omega * sp_world_rel.y, omega * sp_world_rel.x);
        let next = Vector2::new(x1[0], x1[1]) + rotate2(x1[2], Vector2::new(x1[4], x1[5]));
        Ok(MpcOutput {
            setpoint_position_world: obj + sp_world_rel,
            setpoint_velocity_world: velocity,
            next_setpoint_world: next,
            next_theta: x1[2],
            phi_rates: [u0[0], u0[1]],
            setpoint_body,
            predicted_force_body: force_body,
            predicted_force_world: rotate2(theta, force_body),
            theta,
            diagnostics,
        })
    }
}
