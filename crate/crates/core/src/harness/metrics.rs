//! Tracking and interaction metrics of a run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::runner::RunOutput;
use super::trace::TraceRow;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Positional RMSE over the whole run.
    pub rmse_pos: f64,
    /// Rotational RMSE over the whole run.
    pub rmse_rot: f64,
    /// RMSE restricted to the nominal samples.
    pub rmse_pos_nominal: f64,
    pub rmse_rot_nominal: f64,
    /// Largest per-component position error over the nominal samples.
    pub max_abs_pos_err: f64,
    pub max_abs_rot_err: f64,
    /// Largest resolved contact force norm.
    pub max_force_norm: f64,
    pub max_predicted_force_norm: f64,
    pub tank_min: f64,
    pub alpha_zero_fraction: f64,
    pub mpc_solves: usize,
    pub mpc_infeasible: usize,
    pub mpc_max_iters: usize,
    pub mean_sqp_iterations: f64,
    pub max_complementarity: f64,
    /// Largest gap between resolved and predicted force norms while in contact.
    pub max_force_prediction_gap: f64,
    pub monitor_eta: f64,
    pub monitor_max_excess: f64,
    pub monitor_passed: bool,
}

impl RunMetrics {
    pub fn infeasible_fraction(&self) -> f64 {
        if self.mpc_solves == 0 {
            0.0
        } else {
            self.mpc_infeasible as f64 / self.mpc_solves as f64
        }
    }
}

/// Root mean square of a sequence; zero for an empty one.
///
/// Values are scaled by the largest magnitude first, which keeps a constant
/// sequence exact.
pub fn rmse(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if v.is_empty() || scale == 0.0 {
        return 0.0;
    }
    let mean = v.iter().map(|x| (x / scale).powi(2)).sum::<f64>() / v.len() as f64;
    mean.sqrt() * scale
}

/// Tracking metrics over `rows`; `nominal` selects the samples used for the
/// nominal-only figures.
pub fn tracking_metrics(rows: &[TraceRow], nominal: impl Fn(&TraceRow) -> bool) -> RunMetrics {
    let pos = |r: &TraceRow| r.err_x.hypot(r.err_y);
    let nom: Vec<&TraceRow> = rows.iter().filter(|r| nominal(r)).collect();
    let alpha_zero = rows.iter().filter(|r| r.alpha == 0).count();
    let solves: Vec<&TraceRow> = rows.iter().filter(|r| r.mpc_update).collect();
    RunMetrics {
        rmse_pos: rmse(rows.iter().map(pos)),
        rmse_rot: rmse(rows.iter().map(|r| r.err_theta)),
        rmse_pos_nominal: rmse(nom.iter().map(|r| pos(r))),
        rmse_rot_nominal: rmse(nom.iter().map(|r| r.err_theta)),
        max_abs_pos_err: nom.iter().map(|r| r.err_x.abs().max(r.err_y.abs())).fold(0.0, f64::max),
        max_abs_rot_err: nom.iter().map(|r| r.err_theta.abs()).fold(0.0, f64::max),
        max_force_norm: rows.iter().map(|r| r.force_norm).fold(0.0, f64::max),
        max_predicted_force_norm: rows.iter().map(|r| r.pred_force_norm).fold(0.0, f64::max),
        tank_min: if rows.is_empty() { 0.0 } else { rows.iter().map(|r| r.tank_energy).fold(f64::INFINITY, f64::min) },
        alpha_zero_fraction: if rows.is_empty() { 0.0 } else { alpha_zero as f64 / rows.len() as f64 },
        mpc_solves: solves.len(),
        mpc_infeasible: solves.iter().filter(|r| r.mpc_status == "infeasible").count(),
        mpc_max_iters: solves.iter().filter(|r| r.mpc_status == "max_iters").count(),
        mean_sqp_iterations: if solves.is_empty() {
            0.0
        } else {
            solves.iter().map(|r| r.mpc_iterations as f64).sum::<f64>() / solves.len() as f64
        },
        max_complementarity: solves.iter().map(|r| r.mpc_complementarity).fold(0.0, f64::max),
        max_force_prediction_gap: rows
            .iter()
            .filter(|r| r.mode != "separated")
            .map(|r| (r.force_norm - r.pred_force_norm).abs())
            .fold(0.0, f64::max),
        ..Default::default()
    }
}

/// Writes a single-row metrics table.
pub fn write_metrics_file(path: &Path, metrics: &RunMetrics) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.serialize(metrics)?;
    w.flush()?;
    Ok(())
}

/// Force and energy figures of one run around a disturbance window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSummary {
    pub case: String,
    pub tank_enabled: bool,
    /// Peak resolved and predicted force norms while the disturbance is active.
    pub peak_force_disturbed: f64,
    pub peak_predicted_force_disturbed: f64,
    pub max_force_norm: f64,
    pub tank_min: f64,
    pub monitor_passed: bool,
    pub monitor_max_excess: f64,
    pub monitor_eta: f64,
}

pub fn interaction_summary(case: &str, tank_enabled: bool, out: &RunOutput) -> InteractionSummary {
    let active = || out.trace.iter().filter(|r| r.disturbance_active);
    InteractionSummary {
        case: case.to_string(),
        tank_enabled,
        peak_force_disturbed: active().map(|r| r.force_norm).fold(0.0, f64::max),
        peak_predicted_force_disturbed: active().map(|r| r.pred_force_norm).fold(0.0, f64::max),
        max_force_norm: out.metrics.max_force_norm,
        tank_min: out.metrics.tank_min,
        monitor_passed: out.monitor.passed(),
        monitor_max_excess: out.monitor.max_excess,
        monitor_eta: out.monitor.eta,
    }
}

pub fn write_interaction_file(path: &Path, rows: &[InteractionSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_of_constant_error_is_that_error() {
        let e = 0.0123;
        assert_eq!(rmse(std::iter::repeat_n(e, 1000)), e);
        assert_eq!(rmse(std::iter::empty()), 0.0);
    }
}
