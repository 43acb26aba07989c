//! Gauss–Newton SQP on the multiple-shooting NLP.
//!
//! The slack ε is eliminated through the linearized complementarity
//! equality, the state deviations through the linearized dynamics, so each
//! QP subproblem is posed in the four free inputs per stage only.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::compliant::{InputVec, StateVec, NX};

use super::qp::{solve_qp, QpProblem, QpSettings, QpStatus};
use super::transcription::Nlp;
use super::{cone_multipliers, OcpSolution, SolveStatus};

const NV: usize = 4;
const DEFECT_TOL: f64 = 1e-9;
const COMPLEMENTARITY_TOL: f64 = 1e-8;

struct Linearization {
    /// `∂x_{k+1}/∂z` per node (`G[0] = 0`).
    g: Vec<DMatrix<f64>>,
    /// Affine part of the linearized state deviation per node.
    s: Vec<StateVec>,
    /// `∂c_k/∂x_k` restricted to the force entries.
    comp_dx: Vec<Vector2<f64>>,
}

fn linearize(nlp: &Nlp, xs: &[StateVec], us: &[InputVec]) -> Linearization {
    let n = nlp.horizon();
    let nz = NV * n;
    let dt = nlp.dt();
    let mu = nlp.model.params.mu_contact;
    let mut g = vec![DMatrix::zeros(NX, nz)];
    let mut s = vec![StateVec::zeros()];
    let mut comp_dx = Vec::with_capacity(n);
    for k in 0..n {
        let (next, a, b) = nlp.model.rk4_with_sensitivities(&xs[k], &us[k], dt);
        let d = next - xs[k + 1];
        let cols = NV * k;
        let mut gk = DMatrix::zeros(NX, nz);
        if cols > 0 {
            let prev = g[k].columns(0, cols);
            gk.columns_mut(0, cols).copy_from(&(a * prev));
        }
        gk.columns_mut(cols, NV).copy_from(&b.fixed_columns::<NV>(0));
        s.push(a * s[k] + d);
        g.push(gk);

        let u = &us[k];
        comp_dx.push(Vector2::new(mu * (u[0] + u[1]), u[0] - u[1]));
    }
    Linearization { g, s, comp_dx }
}

/// Linearized slack at stage `k` as `a + bᵀz`, from
/// `ε_new = −λ(x)ᵀ(u₀, u₁) − c_x δx − c_v δv`.
fn slack_affine(nlp: &Nlp, lin: &Linearization, xs: &[StateVec], us: &[InputVec], k: usize) -> (f64, DVector<f64>) {
    let n = nlp.horizon();
    let mu = nlp.model.params.mu_contact;
    let cx = lin.comp_dx[k];
    let lam = cone_multipliers(Vector2::new(xs[k][6], xs[k][7]), mu);
    let sk = lin.s[k];
    let a = -(lam.x * us[k][0] + lam.y * us[k][1]) - (cx.x * sk[6] + cx.y * sk[7]);
    let mut b = DVector::zeros(NV * n);
    let gk = &lin.g[k];
    for j in 0..NV * k {
        b[j] = -(cx.x * gk[(6, j)] + cx.y * gk[(7, j)]);
    }
    b[NV * k] = -lam.x;
    b[NV * k + 1] = -lam.y;
    (a, b)
}

struct Step {
    dx: Vec<StateVec>,
    du: Vec<InputVec>,
    quad: f64,
}

fn build_qp(nlp: &Nlp, lin: &Linearization, xs: &[StateVec], us: &[InputVec]) -> (QpProblem, Vec<(f64, DVector<f64>)>) {
    let n = nlp.horizon();
    let nz = NV * n;
    let c = &nlp.config;
    let mu = nlp.model.params.mu_contact;
    let mut qp = QpProblem::new(nz);
    let wu = nlp.input_weight();

    for k in 1..=n {
        let q = nlp.state_weight(k);
        let cols = NV * k;
        let gk = lin.g[k].columns(0, cols);
        let e0 = xs[k] + lin.s[k] - nlp.target(k);
        if q.iter().any(|v| *v != 0.0) {
            let qg = DMatrix::from_fn(NX, cols, |i, j| q[i] * gk[(i, j)]);
            let mut hv = qp.h.view_mut((0, 0), (cols, cols));
            hv.gemm_tr(2.0, &gk, &qg, 1.0);
            let mut gv = qp.g.rows_mut(0, cols);
            gv.gemv_tr(2.0, &gk, &q.component_mul(&e0), 1.0);
        }

        let base = xs[k] + lin.s[k];
        let row_of = |i: usize| -> Vec<(usize, f64)> {
            (0..cols)
                .filter_map(|j| {
                    let v = gk[(i, j)];
                    (v != 0.0).then_some((j, v))
                })
                .collect()
        };
        for i in 0..NX {
            let (lo, hi) = (c.state_lower[i], c.state_upper[i]);
            if !lo.is_finite() && !hi.is_finite() {
                continue;
            }
            let v0 = if i == 3 { base[3] - nlp.phi_branch } else { base[i] };
            let row = row_of(i);
            if hi.is_finite() {
                qp.add_row(row.clone(), hi - v0);
            }
            if lo.is_finite() {
                qp.add_row(row.iter().map(|&(j, v)| (j, -v)).collect(), v0 - lo);
            }
        }
        // λ_v(x_k) ≥ 0, both entries linear in the force.
        for sign in [1.0, -1.0] {
            let row: Vec<(usize, f64)> = (0..cols)
                .filter_map(|j| {
                    let v = -(mu * gk[(6, j)] + sign * gk[(7, j)]);
                    (v != 0.0).then_some((j, v))
                })
                .collect();
            qp.add_row(row, mu * base[6] + sign * base[7]);
        }
    }

    let mut slacks = Vec::with_capacity(n);
    for k in 0..n {
        for j in 0..NV {
            let idx = NV * k + j;
            qp.h[(idx, idx)] += 2.0 * wu[j];
            qp.g[idx] += 2.0 * wu[j] * us[k][j];
            qp.add_bounds(idx, c.input_lower[j] - us[k][j], c.input_upper[j] - us[k][j]);
        }
        let (a, b) = slack_affine(nlp, lin, xs, us, k);
        let cols = NV * (k + 1);
        if wu[4] != 0.0 {
            let bv = b.rows(0, cols);
            let mut hv = qp.h.view_mut((0, 0), (cols, cols));
            hv.ger(2.0 * wu[4], &bv, &bv, 1.0);
            let mut gv = qp.g.rows_mut(0, cols);
            gv.axpy(2.0 * wu[4] * a, &bv, 1.0);
        }
        let (lo, hi) = (c.input_lower[4], c.input_upper[4]);
        let row: Vec<(usize, f64)> = (0..cols).filter_map(|j| (b[j] != 0.0).then_some((j, b[j]))).collect();
        if hi.is_finite() {
            qp.add_row(row.clone(), hi - a);
        }
        if lo.is_finite() {
            qp.add_row(row.iter().map(|&(j, v)| (j, -v)).collect(), a - lo);
        }
        slacks.push((a, b));
    }
    (qp, slacks)
}

fn recover_step(
    nlp: &Nlp,
    lin: &Linearization,
    slacks: &[(f64, DVector<f64>)],
    us: &[InputVec],
    z: &DVector<f64>,
) -> Step {
    let n = nlp.horizon();
    let mut dx = Vec::with_capacity(n + 1);
    for k in 0..=n {
        dx.push(StateVec::from_iterator((&lin.g[k] * z).iter().copied()) + lin.s[k]);
    }
    dx[0] = StateVec::zeros();
    let mut du = Vec::with_capacity(n);
    for k in 0..n {
        let mut d = InputVec::zeros();
        for j in 0..NV {
            d[j] = z[NV * k + j];
        }
        let (a, b) = &slacks[k];
        d[4] = a + b.dot(z) - us[k][4];
        du.push(d);
    }
    let mut quad = 0.0;
    let wu = nlp.input_weight();
    for (k, d) in dx.iter().enumerate() {
        quad += 2.0 * d.component_mul(d).dot(&nlp.state_weight(k));
    }
    for d in &du {
        quad += 2.0 * d.component_mul(d).dot(&wu);
    }
    Step { dx, du, quad }
}

fn cost_gradient_dot(nlp: &Nlp, xs: &[StateVec], us: &[InputVec], step: &Step) -> f64 {
    let wu = nlp.input_weight();
    let mut v = 0.0;
    for (k, x) in xs.iter().enumerate() {
        v += 2.0 * (nlp.state_weight(k).component_mul(&(x - nlp.target(k)))).dot(&step.dx[k]);
    }
    for (u, d) in us.iter().zip(&step.du) {
        v += 2.0 * wu.component_mul(u).dot(d);
    }
    v
}

fn infeasibility(nlp: &Nlp, xs: &[StateVec], us: &[InputVec]) -> (f64, f64, f64) {
    let defects = nlp.defects(xs, us);
    let comp = nlp.complementarity(xs, us);
    let l1 = defects.iter().map(|d| d.lp_norm(1)).sum::<f64>() + comp.iter().map(|c| c.abs()).sum::<f64>();
    let dmax = defects.iter().map(|d| d.amax()).fold(0.0, f64::max);
    let cmax = comp.iter().map(|c| c.abs()).fold(0.0, f64::max);
    (l1, dmax, cmax)
}

fn initial_guess(nlp: &Nlp, warm: Option<&OcpSolution>) -> (Vec<StateVec>, Vec<InputVec>) {
    let n = nlp.horizon();
    let c = &nlp.config;
    let clip = |u: &InputVec| InputVec::from_fn(|i, _| u[i].clamp(c.input_lower[i], c.input_upper[i]));
    match warm {
        Some(w) if w.states.len() == n + 1 && w.inputs.len() == n => {
            let mut xs = w.states.clone();
            xs[0] = nlp.x0;
            let us = w.inputs.iter().map(clip).collect();
            (xs, us)
        }
        _ => {
            let us = vec![clip(&InputVec::zeros()); n];
            (nlp.rollout(&us), us)
        }
    }
}

/// Solves the NLP starting from `warm_start` (used as given) or from a
/// zero-input rollout.
pub fn solve(nlp: &Nlp, warm_start: Option<&OcpSolution>) -> OcpSolution {
    let n = nlp.horizon();
    let (mut xs, mut us) = initial_guess(nlp, warm_start);
    let settings = QpSettings::default();
    let mut rho: f64 = 1.0;
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut kkt = f64::INFINITY;

    for it in 0..nlp.config.max_sqp_iters {
        iterations = it + 1;
        let lin = linearize(nlp, &xs, &us);
        let (qp, slacks) = build_qp(nlp, &lin, &xs, &us);
        let sol = solve_qp(&qp, &settings);
        if sol.status == QpStatus::Infeasible {
            status = SolveStatus::Infeasible;
            break;
        }
        let step = recover_step(nlp, &lin, &slacks, &us, &sol.z);

        let (viol, _, _) = infeasibility(nlp, &xs, &us);
        let gdot = cost_gradient_dot(nlp, &xs, &us, &step);
        if viol > 0.0 {
            let needed = (gdot + 0.5 * step.quad) / (0.5 * viol);
            if needed > rho {
                rho = needed * 1.1 + 1e-3;
            }
        }
        let merit = |xs: &[StateVec], us: &[InputVec]| nlp.cost(xs, us) + rho * infeasibility(nlp, xs, us).0;
        let m0 = merit(&xs, &us);
        let slope = gdot - rho * viol;
        let mut alpha = 1.0;
        let mut trial = (xs.clone(), us.clone());
        for _ in 0..30 {
            for k in 0..=n {
                trial.0[k] = xs[k] + step.dx[k] * alpha;
            }
            for k in 0..n {
                trial.1[k] = us[k] + step.du[k] * alpha;
            }
            let m1 = merit(&trial.0, &trial.1);
            // Small slack in the comparison absorbs round-off near the optimum.
            if m1 <= m0 + 1e-4 * alpha * slope.min(0.0) + 1e-14 * (1.0 + m0.abs()) {
                break;
            }
            alpha *= 0.5;
        }
        xs = trial.0;
        us = trial.1;
        xs[0] = nlp.x0;

        let step_x = step.dx.iter().map(|d| d.amax()).fold(0.0, f64::max);
        let step_u = step.du.iter().map(|d| d.fixed_rows::<NV>(0).amax()).fold(0.0, f64::max);
        let scale_x = 1.0 + xs.iter().map(|x| x.amax()).fold(0.0, f64::max);
        let scale_u = 1.0 + us.iter().map(|u| u.fixed_rows::<NV>(0).amax()).fold(0.0, f64::max);
        let (_, dmax, cmax) = infeasibility(nlp, &xs, &us);
        kkt = (alpha * step_x / scale_x).max(alpha * step_u / scale_u).max(dmax).max(cmax);
        if alpha == 1.0 && kkt <= nlp.config.kkt_tolerance && dmax <= DEFECT_TOL && cmax <= COMPLEMENTARITY_TOL {
            status = SolveStatus::Converged;
            break;
        }
    }
    let (_, dmax, cmax) = infeasibility(nlp, &xs, &us);
    OcpSolution {
        states: xs,
        inputs: us,
        kkt_residual: kkt,
        complementarity_residual: cmax,
        defect_residual: dmax,
        iterations,
        status,
    }
}
