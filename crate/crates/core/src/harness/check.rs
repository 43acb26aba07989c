//! Invariant self-checks shared by the `check` command and the test suites.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compliant::{CompliantModel, InputVec, StateVec, StiffnessMatrix, NU, NX};
use crate::error::Result;
use crate::limit_surface::{build_limit_surface, LimitSurface, ObjectParams};
use crate::passivity::{filter_setpoint, tank_step, TankConfig, TankState};
use crate::planar::{twist_world_to_body, ContactForce};
use crate::pusher_slider::{
    classify_mode, contact_jacobian, object_velocity, oracle_step, phi_corner, ContactMode, ObjectState, RATE_TOL,
};

use super::scenario::{builtin_config, RunConfig, BUILTIN_NAMES};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Closed form of the mean distance to the centre of a square of side `a`.
pub fn square_mean_radius(a: f64) -> f64 {
    a / 6.0 * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln())
}

/// Midpoint-rule `∬ ‖r‖ dA / A` over a centred rectangle.
pub fn mean_radius_quadrature(side_x: f64, side_y: f64, n: usize) -> f64 {
    let (dx, dy) = (side_x / n as f64, side_y / n as f64);
    let mut sum = 0.0;
    for i in 0..n {
        let x = -side_x / 2.0 + (i as f64 + 0.5) * dx;
        for j in 0..n {
            let y = -side_y / 2.0 + (j as f64 + 0.5) * dy;
            sum += x.hypot(y);
        }
    }
    sum / (n * n) as f64
}

pub fn limit_surface_check() -> CheckResult {
    let p = ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2);
    let ls = match build_limit_surface(&p) {
        Ok(ls) => ls,
        Err(e) => return CheckResult::new("limit_surface", false, e.to_string()),
    };
    let f_expected = 0.2 * 0.5 * 9.81;
    let tau_expected = f_expected * square_mean_radius(0.1);
    let rel = (ls.tau_max - tau_expected).abs() / tau_expected;
    let passed = ls.f_max == f_expected && rel <= 1e-6;
    CheckResult::new(
        "limit_surface",
        passed,
        format!(
            "f_max {:.6} N, tau_max {:.7e} N·m (closed form {:.7e}, rel {:.1e})",
            ls.f_max, ls.tau_max, tau_expected, rel
        ),
    )
}

/// One randomly drawn pushing configuration with the tip pressed into the edge.
#[derive(Debug, Clone, Copy)]
pub struct OracleSample {
    pub params: ObjectParams,
    pub state: ObjectState,
    pub tip: Vector2<f64>,
    pub tip_prev: Vector2<f64>,
    pub dt: f64,
}

pub fn sample_oracle_case(rng: &mut impl Rng) -> OracleSample {
    let params = ObjectParams::new(
        rng.random_range(0.1..1.0),
        rng.random_range(0.05..0.25),
        rng.random_range(0.05..0.25),
        rng.random_range(0.1..0.5),
        rng.random_range(0.05..0.6),
    );
    let corner = phi_corner(&params);
    let phi = PI + rng.random_range(-0.95..0.95) * corner;
    let state =
        ObjectState::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-PI..PI), phi);
    let dt = 1e-3;
    let h = params.side_x / 2.0;
    let depth = rng.random_range(1e-7..2e-4);
    let tip_body = Vector2::new(-h + depth, -h * phi.tan());
    let tip = state.pose.to_world(tip_body);
    let step = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * (0.2 * dt);
    OracleSample { params, state, tip, tip_prev: tip - step, dt }
}

/// Contact-point velocity (body frame) produced by a contact force.
fn contact_velocity(sample: &OracleSample, phi: f64, force: ContactForce, ls: &LimitSurface) -> Result<Vector2<f64>> {
    let contact = ObjectState { pose: sample.state.pose, phi };
    let world = object_velocity(&contact, force, ls, &sample.params)?;
    let body = twist_world_to_body(world, contact.pose.theta());
    Ok(contact_jacobian(phi, &sample.params)? * body.as_vector())
}

/// Tries every contact mode independently of the oracle and returns the
/// ones whose force and sliding rate are consistent with the imposed motion.
pub fn enumerate_modes(sample: &OracleSample, ls: &LimitSurface) -> Result<Vec<(ContactMode, ContactForce, f64)>> {
    let p = &sample.params;
    let b = sample.state.pose.to_body(sample.tip);
    let h = p.side_x / 2.0;
    let phi = PI + (-b.y / h).atan();
    let moved = sample.state.pose.to_body(sample.tip) - sample.state.pose.to_body(sample.tip_prev);
    let target = Vector2::new((b.x + h) / sample.dt, moved.y / sample.dt);
    let mu = p.mu_contact;
    let mut out = Vec::new();

    let cn = contact_velocity(sample, phi, ContactForce::new(1.0, 0.0), ls)?;
    let ct = contact_velocity(sample, phi, ContactForce::new(0.0, 1.0), ls)?;
    let q = nalgebra::Matrix2::from_columns(&[cn, ct]);
    if let Some(qi) = q.try_inverse() {
        let f = qi * target;
        let force = ContactForce::new(f.x, f.y);
        if let Ok(ContactMode::Sticking) = classify_mode(force, 0.0, mu) {
            out.push((ContactMode::Sticking, force, 0.0));
        }
    }
    for (s, mode) in [(-mu, ContactMode::SlidingCCW), (mu, ContactMode::SlidingCW)] {
        let unit = contact_velocity(sample, phi, ContactForce::new(1.0, s), ls)?;
        if unit.x <= 0.0 {
            continue;
        }
        let fn_ = target.x / unit.x;
        let slip = target.y - fn_ * unit.y;
        let phi_dot = -slip * phi.cos().powi(2) / h;
        let force = ContactForce::new(fn_, s * fn_);
        if phi_dot.abs() > RATE_TOL && classify_mode(force, phi_dot, mu).ok() == Some(mode) {
            out.push((mode, force, phi_dot));
        }
    }
    Ok(out)
}

/// Worst discrepancies of one oracle sample: `(velocity, force, mode mismatch)`.
pub fn oracle_discrepancy(sample: &OracleSample) -> Result<(f64, f64, bool)> {
    let ls = build_limit_surface(&sample.params)?;
    let step = oracle_step(&sample.state, sample.tip, sample.tip_prev, sample.dt, &ls, &sample.params)?;
    let contact = ObjectState { pose: sample.state.pose, phi: step.contact_phi };
    let twist = object_velocity(&contact, step.force, &ls, &sample.params)?;
    let scale = 1.0 + step.twist.as_vector().abs().max();
    let dv = (twist.as_vector() - step.twist.as_vector()).abs().max() / scale;
    let classified = classify_mode(step.force, step.phi_dot, sample.params.mu_contact).ok();
    let modes = enumerate_modes(sample, &ls)?;
    let mut mismatch = classified != Some(step.mode) || modes.len() != 1;
    let mut df = 0.0;
    if let Some((mode, force, _)) = modes.first() {
        mismatch |= *mode != step.mode;
        df = (force.as_vector() - step.force.as_vector()).abs().max() / (1.0 + step.force.norm());
    }
    Ok((dv, df, mismatch))
}

pub fn oracle_check(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dv, mut df, mut bad, mut errors) = (0.0f64, 0.0f64, 0usize, 0usize);
    for _ in 0..samples {
        let s = sample_oracle_case(&mut rng);
        match oracle_discrepancy(&s) {
            Ok((v, f, m)) => {
                dv = dv.max(v);
                df = df.max(f);
                bad += usize::from(m);
            }
            Err(_) => errors += 1,
        }
    }
    CheckResult::new(
        "oracle_equivalence",
        dv <= 1e-9 && df <= 1e-9 && bad == 0 && errors == 0,
        format!("{samples} samples: twist err {dv:.1e}, force err {df:.1e}, mode mismatches {bad}, errors {errors}"),
    )
}

pub fn sample_dynamics_point(rng: &mut impl Rng) -> (StateVec, InputVec) {
    let mut x = StateVec::zeros();
    x[0] = rng.random_range(-1.0..1.0);
    x[1] = rng.random_range(-1.0..1.0);
    x[2] = rng.random_range(-PI..PI);
    x[3] = PI + rng.random_range(-1.0..1.0);
    x[4] = rng.random_range(-0.1..0.1);
    x[5] = rng.random_range(-0.1..0.1);
    x[6] = rng.random_range(0.0..5.0);
    x[7] = rng.random_range(-5.0..5.0);
    let mut u = InputVec::zeros();
    u[0] = rng.random_range(0.0..1.0);
    u[1] = rng.random_range(0.0..1.0);
    u[2] = rng.random_range(-10.0..10.0);
    u[3] = rng.random_range(-10.0..10.0);
    u[4] = rng.random_range(-1e-3..0.0);
    (x, u)
}

/// Largest relative gap between the analytic Jacobians and central differences.
pub fn jacobian_error(model: &CompliantModel, x: &StateVec, u: &InputVec) -> f64 {
    let (a, b) = model.jacobians(x, u);
    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, fd: f64| {
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(1.0));
    };
    for j in 0..NX {
        let e = 1e-6 * x[j].abs().max(1.0);
        let (mut p, mut m) = (*x, *x);
        p[j] += e;
        m[j] -= e;
        let col = (model.rhs(&p, u) - model.rhs(&m, u)) / (2.0 * e);
        for i in 0..NX {
            compare(a[(i, j)], col[i]);
        }
    }
    for j in 0..NU {
        let e = 1e-6 * u[j].abs().max(1.0);
        let (mut p, mut m) = (*u, *u);
        p[j] += e;
        m[j] -= e;
        let col = (model.rhs(x, &p) - model.rhs(x, &m)) / (2.0 * e);
        for i in 0..NX {
            compare(b[(i, j)], col[i]);
        }
    }
    worst
}

pub fn jacobian_check(samples: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let p = ObjectParams::new(rng.random_range(0.1..1.0), 0.1, rng.random_range(0.05..0.25), 0.2, 0.2);
        let Ok(ls) = build_limit_surface(&p) else { continue };
        let Ok(k) = StiffnessMatrix::new(rng.random_range(100.0..1000.0), rng.random_range(100.0..1000.0)) else {
            continue;
        };
        let model = CompliantModel::new(p, ls, k);
        let (x, u) = sample_dynamics_point(&mut rng);
        worst = worst.max(jacobian_error(&model, &x, &u));
    }
    CheckResult::new("dynamics_jacobians", worst <= 1e-5, format!("{samples} points: max relative error {worst:.2e}"))
}

/// Tank energy stays inside its bounds, the per-step balance closes, and a
/// depleted tank blocks energy-injecting set-point motion.
pub fn tank_check(steps: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TankConfig {
        initial_energy: 1e-2,
        upper_bound: 1e-2,
        lower_bound: 5e-4,
        gain: [50.0, 50.0, 0.0, 0.0, 0.0, 0.0],
    };
    let mut tank = TankState::new(&cfg, Vector6::zeros());
    let d = Vector6::new(50.0, 50.0, 0.0, 0.0, 0.0, 0.0);
    let dt = 1e-3;
    let (mut balance, mut bounds_ok, mut blocked_ok) = (0.0f64, true, true);
    for _ in 0..steps {
        let r = Vector6::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), 0.0, 0.0, 0.0, 0.0);
        let f = Vector6::new(rng.random_range(-5.0..10.0), rng.random_range(-5.0..5.0), 0.0, 0.0, 0.0, 0.0);
        let before = tank.energy();
        let next = tank_step(&tank, &cfg, &r, &d, &f, dt);
        let flow = f64::from(next.beta) * r.component_mul(&r).dot(&d) - f64::from(next.gamma) * r.dot(&f);
        balance = balance.max((next.energy() - before - dt * flow - next.clamp_energy).abs());
        bounds_ok &=
            next.energy() >= cfg.lower_bound * (1.0 - 1e-12) && next.energy() <= cfg.upper_bound * (1.0 + 1e-12);
        let out = filter_setpoint(&next, &cfg, &r, &r, &Vector6::zeros(), &f, dt);
        if next.energy() <= cfg.lower_bound && out.candidate_power > 0.0 {
            blocked_ok &= out.tank.alpha == 0 && out.twist == Vector6::zeros();
        }
        tank = next;
    }
    CheckResult::new(
        "energy_tank",
        bounds_ok && blocked_ok && balance <= 1e-15,
        format!("{steps} steps: balance residual {balance:.1e}, bounds {bounds_ok}, blocking {blocked_ok}"),
    )
}

pub fn config_round_trip_check() -> CheckResult {
    let mut failures = Vec::new();
    for name in BUILTIN_NAMES {
        let ok = builtin_config(name)
            .and_then(|c| c.ok())
            .and_then(|c| c.to_toml().ok().map(|t| (c, t)))
            .is_some_and(|(c, t)| RunConfig::from_toml(&t).is_ok_and(|b| b == c));
        if !ok {
            failures.push(name);
        }
    }
    CheckResult::new(
        "config_round_trip",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} built-in configs", BUILTIN_NAMES.len())
        } else {
            format!("failed: {failures:?}")
        },
    )
}

/// All self-checks; `samples` scales the randomized ones.
pub fn self_check(samples: usize, seed: u64) -> Vec<CheckResult> {
    vec![
        limit_surface_check(),
        oracle_check(samples, seed),
        jacobian_check(samples, seed.wrapping_add(1)),
        tank_check(samples, seed.wrapping_add(2)),
        config_round_trip_check(),
    ]
}
