use approx::assert_relative_eq;
use proptest::prelude::*;

use compliant_push::limit_surface::{build_limit_surface, footprint_moment, wrench_to_twist, ObjectParams};
use compliant_push::planar::BodyWrench;

/// Adaptive Simpson rule on `[a, b]`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rule(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let (l, r) = (rule(f, a, m), rule(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
    }
    rec(f, a, b, rule(f, a, b), tol, 40)
}

/// `∬ ‖r‖ dA` over `[x0, x1] × [y0, y1]` by nested adaptive quadrature.
fn moment_quadrature(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let inner = |x: f64| simpson(&|y: f64| x.hypot(y), y0, y1, 1e-14);
    simpson(&inner, x0, x1, 1e-13)
}

#[test]
fn square_constants_match_quadrature_and_closed_form() {
    let p = ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2);
    let q = moment_quadrature(-0.05, 0.05, -0.05, 0.05);
    let h: f64 = 0.05;
    let closed = 4.0 * h.powi(3) / 3.0 * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln());
    assert_relative_eq!(q, closed, max_relative = 1e-8);
    assert_relative_eq!(footprint_moment(&p), q, max_relative = 1e-8);
    assert!((q - 3.8260e-4).abs() < 5e-8);

    let ls = build_limit_surface(&p).unwrap();
    assert_eq!(ls.f_max, 0.2 * 0.5 * 9.81);
    assert_relative_eq!(ls.tau_max, 0.981 * closed / 0.01, max_relative = 1e-6);
    assert!((ls.tau_max - 3.7533e-2).abs() < 5e-6);
}

#[test]
fn offset_rectangles_match_quadrature() {
    for (sx, sy, cx, cy) in [(0.21, 0.09, 0.0, 0.0), (0.21, 0.09, 0.03, -0.01), (0.1, 0.3, -0.08, 0.2)] {
        let mut p = ObjectParams::new(0.4, sx, sy, 0.3, 0.2);
        p.center_offset = [cx, cy];
        let q = moment_quadrature(cx - sx / 2.0, cx + sx / 2.0, cy - sy / 2.0, cy + sy / 2.0);
        assert_relative_eq!(footprint_moment(&p), q, max_relative = 1e-7);
    }
}

#[test]
fn unit_wrench_twist() {
    let p = ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2);
    let ls = build_limit_surface(&p).unwrap();
    let t = wrench_to_twist(&ls, BodyWrench::new(0.981, 0.0, 0.0));
    assert!((t.vx - 1.0194).abs() < 1e-4);
    assert_eq!((t.vy, t.omega), (0.0, 0.0));
}

proptest! {
    #[test]
    fn motion_dissipates_energy(fx in -3.0f64..3.0, fy in -3.0f64..3.0, tau in -0.1f64..0.1,
                                mass in 0.1f64..2.0, mu in 0.05f64..0.8) {
        let p = ObjectParams::new(mass, 0.21, 0.09, mu, 0.2);
        let ls = build_limit_surface(&p).unwrap();
        let w = BodyWrench::new(fx, fy, tau);
        let t = wrench_to_twist(&ls, w);
        prop_assert!(t.as_vector().dot(&w.as_vector()) >= 0.0);
    }

    #[test]
    fn torque_limit_scales_with_size(s in 0.5f64..3.0) {
        let a = ObjectParams::new(0.5, 0.1, 0.06, 0.2, 0.2);
        let b = ObjectParams::new(0.5, 0.1 * s, 0.06 * s, 0.2, 0.2);
        let (la, lb) = (build_limit_surface(&a).unwrap(), build_limit_surface(&b).unwrap());
        prop_assert!((lb.tau_max / la.tau_max - s).abs() < 1e-9 * s);
        prop_assert_eq!(la.f_max, lb.f_max);
    }
}
