//! Ellipsoidal limit surface of a rectangular object sliding on a plane.

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};
use crate::planar::{BodyTwist, BodyWrench};

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Physical parameters of the pushed object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectParams {
    pub mass: f64,
    /// Side parallel to body x (the pushed edge is at `x = -side_x / 2`).
    pub side_x: f64,
    pub side_y: f64,
    pub mu_ground: f64,
    pub mu_contact: f64,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    /// Geometric center expressed in the body frame. Zero for centered bodies.
    #[serde(default)]
    pub center_offset: [f64; 2],
}

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

impl ObjectParams {
    pub fn new(mass: f64, side_x: f64, side_y: f64, mu_ground: f64, mu_contact: f64) -> Self {
        Self { mass, side_x, side_y, mu_ground, mu_contact, gravity: DEFAULT_GRAVITY, center_offset: [0.0; 2] }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("mass", self.mass)?;
        ensure_positive("side_x", self.side_x)?;
        ensure_positive("side_y", self.side_y)?;
        ensure_positive("mu_ground", self.mu_ground)?;
        ensure_positive("mu_contact", self.mu_contact)?;
        ensure_positive("gravity", self.gravity)?;
        Ok(())
    }

    pub fn area(&self) -> f64 {
        self.side_x * self.side_y
    }

    /// Largest |tan φ| keeping the contact point on the pushed edge.
    pub fn max_tan_phi(&self) -> f64 {
        self.side_y / self.side_x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSurface {
    pub f_max: f64,
    pub tau_max: f64,
    l: Matrix3<f64>,
}

impl LimitSurface {
    pub fn from_semi_axes(f_max: f64, tau_max: f64) -> Result<Self> {
        ensure_positive("f_max", f_max)?;
        ensure_positive("tau_max", tau_max)?;
        let fi = f_max.powi(-2);
        let l = Matrix3::from_diagonal(&nalgebra::Vector3::new(fi, fi, tau_max.powi(-2)));
        Ok(Self { f_max, tau_max, l })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.l
    }

    pub fn l_diag(&self) -> [f64; 3] {
        [self.l[(0, 0)], self.l[(1, 1)], self.l[(2, 2)]]
    }
}

/// `I(a, b) = ∫₀ᵃ∫₀ᵇ √(x² + y²) dy dx` for `a, b ≥ 0`.
fn quadrant_integral(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let d = a.hypot(b);
    (2.0 * a * b * d + a.powi(3) * ((b + d) / a).ln() + b.powi(3) * ((a + d) / b).ln()) / 6.0
}

/// Signed corner integral: `∫` over the rectangle spanned by the origin and `(x, y)`.
fn corner_integral(x: f64, y: f64) -> f64 {
    x.signum() * y.signum() * quadrant_integral(x.abs(), y.abs())
}

/// `∬ ‖r‖ dA` over the axis-aligned rectangle `[x0, x1] × [y0, y1]`.
pub fn rectangle_moment(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    corner_integral(x1, y1) - corner_integral(x0, y1) - corner_integral(x1, y0) + corner_integral(x0, y0)
}

/// `∬ ‖r‖ dA` over the object footprint, with `r` measured from the body origin.
pub fn footprint_moment(params: &ObjectParams) -> f64 {
    let c = Vector2::from(params.center_offset);
    let (hx, hy) = (params.side_x / 2.0, params.side_y / 2.0);
    rectangle_moment(c.x - hx, c.x + hx, c.y - hy, c.y + hy)
}

pub fn build_limit_surface(params: &ObjectParams) -> Result<LimitSurface> {
    params.validate()?;
    let f_max = params.mu_ground * params.mass * params.gravity;
    let tau_max = f_max / params.area() * footprint_moment(params);
    LimitSurface::from_semi_axes(f_max, tau_max)
}

/// Maximal-dissipation motion map `ω = L f`.
pub fn wrench_to_twist(ls: &LimitSurface, wrench: BodyWrench) -> BodyTwist {
    BodyTwist::from_vector(ls.l * wrench.as_vector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn square() -> ObjectParams {
        ObjectParams::new(0.5, 0.1, 0.1, 0.2, 0.2)
    }

    #[test]
    fn f_max_and_tau_max_for_square() {
        let ls = build_limit_surface(&square()).unwrap();
        assert_eq!(ls.f_max, 0.2 * 0.5 * 9.81);
        assert_relative_eq!(ls.f_max, 0.981, max_relative = 1e-15);
        let h: f64 = 0.05;
        let closed = 4.0 * h.powi(3) / 3.0 * (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln());
        assert_relative_eq!(footprint_moment(&square()), closed, max_relative = 1e-12);
        assert!((footprint_moment(&square()) - 3.8260e-4).abs() < 5e-8);
        assert!((ls.tau_max - 3.7533e-2).abs() < 5e-6);
    }

    #[test]
    fn linear_in_ground_friction() {
        let a = build_limit_surface(&square()).unwrap();
        let mut p = square();
        p.mu_ground *= 2.0;
        let b = build_limit_surface(&p).unwrap();
        assert_relative_eq!(b.f_max, 2.0 * a.f_max, max_relative = 1e-14);
        assert_relative_eq!(b.tau_max, 2.0 * a.tau_max, max_relative = 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = square();
        p.mass = 0.0;
        assert!(build_limit_surface(&p).is_err());
        let mut p = square();
        p.side_y = -1.0;
        assert!(build_limit_surface(&p).is_err());
    }

    #[test]
    fn twist_examples() {
        let ls = build_limit_surface(&square()).unwrap();
        assert_eq!(wrench_to_twist(&ls, BodyWrench::default()), BodyTwist::default());
        let t = wrench_to_twist(&ls, BodyWrench::new(0.981, 0.0, 0.0));
        assert!((t.vx - 1.0194).abs() < 1e-4);
        assert_eq!(t.vy, 0.0);
        assert_eq!(t.omega, 0.0);
    }

    #[test]
    fn offset_domain_matches_shifted_sum() {
        // Splitting a rectangle into two must add up.
        let whole = rectangle_moment(-0.03, 0.07, -0.02, 0.05);
        let left = rectangle_moment(-0.03, 0.01, -0.02, 0.05);
        let right = rectangle_moment(0.01, 0.07, -0.02, 0.05);
        assert_relative_eq!(whole, left + right, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn motion_map_is_linear(a in prop::array::uniform3(-2.0f64..2.0), b in prop::array::uniform3(-2.0f64..2.0), s in -3.0f64..3.0) {
            let ls = build_limit_surface(&square()).unwrap();
            let wa = BodyWrench::new(a[0], a[1], a[2]);
            let wb = BodyWrench::new(b[0], b[1], b[2]);
            let sum = BodyWrench::from_vector(wa.as_vector() * s + wb.as_vector());
            let lhs = wrench_to_twist(&ls, sum).as_vector();
            let rhs = wrench_to_twist(&ls, wa).as_vector() * s + wrench_to_twist(&ls, wb).as_vector();
            prop_assert!((lhs - rhs).abs().max() <= 1e-12 * (1.0 + rhs.abs().max()));
        }

        #[test]
        fn twist_is_gradient_of_dissipation(w in prop::array::uniform3(-1.0f64..1.0)) {
            let ls = build_limit_surface(&square()).unwrap();
            let f = Vector3::from(w);
            let h = |f: Vector3<f64>| 0.5 * f.dot(&(ls.matrix() * f));
            let mut grad = Vector3::zeros();
            for i in 0..3 {
                let step = 1e-6 * (1.0 + f[i].abs());
                let mut p = f;
                let mut m = f;
                p[i] += step;
                m[i] -= step;
                grad[i] = (h(p) - h(m)) / (2.0 * step);
            }
            let twist = wrench_to_twist(&ls, BodyWrench::from_vector(f)).as_vector();
            prop_assert!((twist - grad).norm() <= 1e-6 * (1.0 + twist.norm()));
        }

        #[test]
        fn twist_is_normal_on_ellipsoid(w in prop::array::uniform3(-1.0f64..1.0)) {
            prop_assume!(Vector3::from(w).norm() > 1e-3);
            let ls = build_limit_surface(&square()).unwrap();
            let mut f = Vector3::from(w);
            f /= f.dot(&(ls.matrix() * f)).sqrt();
            let twist = wrench_to_twist(&ls, BodyWrench::from_vector(f)).as_vector();
            let normal = ls.matrix() * f;
            let cos = twist.dot(&normal) / (twist.norm() * normal.norm());
            prop_assert!((cos - 1.0).abs() < 1e-9);
        }
    }
}
