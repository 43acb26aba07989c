//! Arc-length parametrized reference paths for the object pose.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{PushError, Result};
use crate::planar::wrap_angle;

/// Eight-shape half extents (the curve fits a 0.5 m × 0.25 m box).
const EIGHT_A: f64 = 0.25;
const EIGHT_B: f64 = 0.125;
/// Radius of the curvilinear path.
pub const CURVE_RADIUS: f64 = 0.4;
const TABLE_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Line,
    Curve,
    Eight,
}

impl PathKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathKind::Line => "line",
            PathKind::Curve => "curve",
            PathKind::Eight => "eight",
        }
    }
}

// 5-point Gauss–Legendre on [-1, 1].
const GL_NODES: [f64; 5] =
    [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

fn eight_point(u: f64) -> (f64, f64) {
    (EIGHT_A * u.sin(), EIGHT_B * (2.0 * u).sin())
}

fn eight_tangent(u: f64) -> (f64, f64) {
    (EIGHT_A * u.cos(), 2.0 * EIGHT_B * (2.0 * u).cos())
}

fn eight_speed(u: f64) -> f64 {
    let (dx, dy) = eight_tangent(u);
    dx.hypot(dy)
}

fn gl_integral(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (m, h) = ((a + b) / 2.0, (b - a) / 2.0);
    GL_NODES.iter().zip(&GL_WEIGHTS).map(|(x, w)| w * f(m + h * x)).sum::<f64>() * h
}

/// Pose sampled from a reference path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPose {
    pub x: f64,
    pub y: f64,
    /// Continuous (unwrapped) heading.
    pub theta: f64,
}

/// Constant-speed reference trajectory starting at a given pose.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    pub kind: PathKind,
    pub mean_velocity: f64,
    origin: [f64; 3],
    /// Cumulative arc length of the eight at cell boundaries.
    table: Vec<f64>,
    /// Unwrapped tangent heading at cell boundaries.
    heading_table: Vec<f64>,
}

impl ReferenceTrajectory {
    /// `origin` is the start pose `(x, y, θ)`; every path leaves it along `θ`.
    pub fn new(kind: PathKind, mean_velocity: f64, origin: [f64; 3]) -> Result<Self> {
        if !(mean_velocity.is_finite() && mean_velocity > 0.0) {
            return Err(PushError::InvalidParameter {
                name: "mean_velocity",
                reason: format!("must be positive, got {mean_velocity}"),
            });
        }
        let mut table = Vec::new();
        let mut heading_table = Vec::new();
        if kind == PathKind::Eight {
            let du = 2.0 * PI / TABLE_CELLS as f64;
            table.push(0.0);
            let mut prev = 0.0;
            heading_table.push(PI / 4.0);
            for i in 0..TABLE_CELLS {
                let a = i as f64 * du;
                let s = table[i] + gl_integral(a, a + du, eight_speed);
                table.push(s);
                let (dx, dy) = eight_tangent(a + du);
                let h = dy.atan2(dx);
                let last = if i == 0 { PI / 4.0 } else { prev };
                let unwrapped = last + wrap_angle(h - last);
                heading_table.push(unwrapped);
                prev = unwrapped;
            }
        }
        Ok(Self { kind, mean_velocity, origin, table, heading_table })
    }

    /// Total length of one period (the eight) or `None` for open paths.
    pub fn period_length(&self) -> Option<f64> {
        (self.kind == PathKind::Eight).then(|| *self.table.last().unwrap())
    }

    pub fn period(&self) -> Option<f64> {
        self.period_length().map(|l| l / self.mean_velocity)
    }

    fn eight_parameter(&self, s: f64) -> f64 {
        let du = 2.0 * PI / TABLE_CELLS as f64;
        let i = match self.table.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => return i as f64 * du,
            Err(i) => i.clamp(1, TABLE_CELLS) - 1,
        };
        let a = i as f64 * du;
        let frac = (s - self.table[i]) / (self.table[i + 1] - self.table[i]);
        let mut u = a + frac * du;
        for _ in 0..8 {
            let f = self.table[i] + gl_integral(a, u, eight_speed) - s;
            let step = f / eight_speed(u);
            u -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        u
    }

    /// Pose at arc length `s` relative to the canonical start (origin at 0, heading 0).
    fn local_pose(&self, s: f64) -> RefPose {
        match self.kind {
            PathKind::Line => RefPose { x: s, y: 0.0, theta: 0.0 },
            PathKind::Curve => {
                let a = s / CURVE_RADIUS;
                RefPose { x: CURVE_RADIUS * a.sin(), y: CURVE_RADIUS * (1.0 - a.cos()), theta: a }
            }
            PathKind::Eight => {
                let length = *self.table.last().unwrap();
                let periods = (s / length).floor();
                let u = self.eight_parameter(s - periods * length);
                let (x, y) = eight_point(u);
                let (dx, dy) = eight_tangent(u);
                let du = 2.0 * PI / TABLE_CELLS as f64;
                let i = ((u / du) as usize).min(TABLE_CELLS);
                let coarse = self.heading_table[i];
                let h = dy.atan2(dx);
                let h = coarse + wrap_angle(h - coarse) - PI / 4.0;
                // Canonical curve leaves at π/4; rotate it to leave along +x.
                // Net heading change over a period is zero, so periods add nothing.
                let (sn, cs) = (-PI / 4.0).sin_cos();
                RefPose { x: cs * x - sn * y, y: sn * x + cs * y, theta: h }
            }
        }
    }

    /// Pose at arc length `s` in world coordinates.
    pub fn pose_at_arclength(&self, s: f64) -> RefPose {
        let l = self.local_pose(s);
        let [ox, oy, oth] = self.origin;
        let (sn, cs) = oth.sin_cos();
        RefPose { x: ox + cs * l.x - sn * l.y, y: oy + sn * l.x + cs * l.y, theta: oth + l.theta }
    }

    /// Pose after `t` seconds on the reference clock.
    pub fn pose_at(&self, t: f64) -> RefPose {
        self.pose_at_arclength(self.mean_velocity * t.max(0.0))
    }

    pub fn sample(&self, duration: f64, rate: f64) -> Vec<RefPose> {
        let n = (duration * rate).round() as usize;
        (0..=n).map(|k| self.pose_at(k as f64 / rate)).collect()
    }
}

/// Reference sampled at `rate` over `duration`, with the speed guard applied.
pub fn generate_reference(
    kind: PathKind,
    mean_velocity: f64,
    duration: f64,
    origin: [f64; 3],
    rate: f64,
) -> Result<Vec<RefPose>> {
    if !(duration > 0.0) || !(rate > 0.0) {
        return Err(PushError::InvalidParameter { name: "duration", reason: "zero-length path".into() });
    }
    let traj = ReferenceTrajectory::new(kind, mean_velocity, origin)?;
    let samples = traj.sample(duration, rate);
    let max_speed = samples.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y) * rate).fold(0.0, f64::max);
    if max_speed > 2.0 * mean_velocity {
        return Err(PushError::InvalidParameter {
            name: "reference",
            reason: format!("peak speed {max_speed} exceeds twice the mean {mean_velocity}"),
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_starts_at_origin_with_diagonal_heading() {
        let t = ReferenceTrajectory::new(PathKind::Eight, 0.05, [0.0, 0.6, PI / 4.0]).unwrap();
        let p = t.pose_at(0.0);
        assert!(p.x.abs() < 1e-15 && (p.y - 0.6).abs() < 1e-15);
        assert!((p.theta - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn heading_follows_direction_of_motion() {
        for kind in [PathKind::Line, PathKind::Curve, PathKind::Eight] {
            let t = ReferenceTrajectory::new(kind, 0.05, [0.1, 0.6, PI / 4.0]).unwrap();
            for k in 0..200 {
                let s = k as f64 * 0.01;
                let (a, b) = (t.pose_at_arclength(s - 1e-6), t.pose_at_arclength(s + 1e-6));
                let dir = (b.y - a.y).atan2(b.x - a.x);
                let p = t.pose_at_arclength(s);
                assert!(wrap_angle(dir - p.theta).abs() < 1e-6, "{kind:?} s={s}");
            }
        }
    }

    #[test]
    fn arc_length_is_uniform() {
        let t = ReferenceTrajectory::new(PathKind::Eight, 0.05, [0.0, 0.0, PI / 4.0]).unwrap();
        let len = t.period_length().unwrap();
        let mut acc = 0.0;
        let n = 20000;
        let mut prev = t.pose_at_arclength(0.0);
        for k in 1..=n {
            let p = t.pose_at_arclength(len * k as f64 / n as f64);
            acc += (p.x - prev.x).hypot(p.y - prev.y);
            prev = p;
        }
        assert!((acc - len).abs() < 1e-6 * len);
    }
}
