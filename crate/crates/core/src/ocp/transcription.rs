use std::f64::consts::PI;

use crate::compliant::{AugmentedState, CompliantModel, InputVec, StateVec, NU, NX};
use crate::error::{PushError, Result};
use crate::pusher_slider::phi_branch;

use super::{cone_multipliers, MayerMode, MpcConfig, Reference};

/// Multiple-shooting NLP: states at `N + 1` nodes, inputs at `N` nodes,
/// RK4 defects and one complementarity equality per stage.
#[derive(Debug, Clone)]
pub struct Nlp {
    pub config: MpcConfig,
    pub model: CompliantModel,
    pub x0: StateVec,
    /// Reference pose per node with headings shifted onto the branch of `x0`.
    pub reference: Vec<[f64; 3]>,
    pub phi_branch: f64,
}

pub fn transcribe(
    config: &MpcConfig,
    x0: &AugmentedState,
    reference: &Reference,
    model: &CompliantModel,
) -> Result<Nlp> {
    config.validate()?;
    let n = config.horizon_samples;
    if reference.poses.len() < n + 1 {
        return Err(PushError::Dimension(format!(
            "reference has {} samples, horizon needs {}",
            reference.poses.len(),
            n + 1
        )));
    }
    let x0 = x0.to_vector();
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(PushError::Dimension("non-finite initial state".into()));
    }
    // Shift the whole heading reference by a multiple of 2π so its first
    // sample is the one nearest the current heading.
    let shift = 2.0 * PI * ((x0[2] - reference.poses[0][2]) / (2.0 * PI)).round();
    let reference = reference.poses[..=n].iter().map(|p| [p[0], p[1], p[2] + shift]).collect();
    Ok(Nlp { config: config.clone(), model: *model, x0, reference, phi_branch: phi_branch(x0[3]) })
}

impl Nlp {
    pub fn horizon(&self) -> usize {
        self.config.horizon_samples
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    pub fn num_state_nodes(&self) -> usize {
        self.horizon() + 1
    }

    pub fn num_input_nodes(&self) -> usize {
        self.horizon()
    }

    pub fn num_complementarity(&self) -> usize {
        self.horizon()
    }

    /// Tracking target `y*` at node `k` (zero beyond the pose).
    pub fn target(&self, k: usize) -> StateVec {
        let mut t = StateVec::zeros();
        if k == self.horizon() && self.config.mayer_mode == MayerMode::RawState {
            return t;
        }
        t[0] = self.reference[k][0];
        t[1] = self.reference[k][1];
        t[2] = self.reference[k][2];
        t
    }

    /// Diagonal state weight applied at node `k` (zero at the fixed node 0).
    pub fn state_weight(&self, k: usize) -> StateVec {
        let w = StateVec::from_column_slice(&self.config.state_weights);
        if k == 0 {
            StateVec::zeros()
        } else if k == self.horizon() {
            w * self.config.mayer_scale
        } else {
            w * (self.config.lagrange_scale * self.dt())
        }
    }

    pub fn input_weight(&self) -> InputVec {
        InputVec::from_column_slice(&self.config.input_weights) * self.dt()
    }

    pub fn cost(&self, states: &[StateVec], inputs: &[InputVec]) -> f64 {
        let mut j = 0.0;
        for (k, x) in states.iter().enumerate() {
            let e = x - self.target(k);
            j += e.component_mul(&e).dot(&self.state_weight(k));
        }
        let wu = self.input_weight();
        for u in inputs {
            j += u.component_mul(u).dot(&wu);
        }
        j
    }

    pub fn defects(&self, states: &[StateVec], inputs: &[InputVec]) -> Vec<StateVec> {
        (0..self.horizon()).map(|k| self.model.rk4(&states[k], &inputs[k], self.dt()) - states[k + 1]).collect()
    }

    /// `λ_vᵀ φ̇_v + ε` per stage.
    pub fn complementarity(&self, states: &[StateVec], inputs: &[InputVec]) -> Vec<f64> {
        let mu = self.model.params.mu_contact;
        (0..self.horizon())
            .map(|k| {
                let l = cone_multipliers(states[k].fixed_rows::<2>(6).into(), mu);
                l.x * inputs[k][0] + l.y * inputs[k][1] + inputs[k][4]
            })
            .collect()
    }

    /// Largest violation of the state and input bounds and of `λ_v ≥ 0`.
    pub fn bound_violation(&self, states: &[StateVec], inputs: &[InputVec]) -> f64 {
        let c = &self.config;
        let mu = self.model.params.mu_contact;
        let mut v: f64 = 0.0;
        for x in states.iter().skip(1) {
            for i in 0..NX {
                let xi = if i == 3 { x[3] - self.phi_branch } else { x[i] };
                v = v.max(c.state_lower[i] - xi).max(xi - c.state_upper[i]);
            }
            let l = cone_multipliers(x.fixed_rows::<2>(6).into(), mu);
            v = v.max(-l.x).max(-l.y);
        }
        for u in inputs {
            for i in 0..NU {
                v = v.max(c.input_lower[i] - u[i]).max(u[i] - c.input_upper[i]);
            }
        }
        v.max(0.0)
    }

    /// Forward simulation from `x0` under the given inputs.
    pub fn rollout(&self, inputs: &[InputVec]) -> Vec<StateVec> {
        let mut xs = Vec::with_capacity(inputs.len() + 1);
        xs.push(self.x0);
        for u in inputs {
            let next = self.model.rk4(xs.last().unwrap(), u, self.dt());
            xs.push(next);
        }
        xs
    }
}
