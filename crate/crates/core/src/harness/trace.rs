//! Per-step CSV trace.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Bumped whenever a column is added, removed or renamed.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TraceRow {
    pub schema: u32,
    pub time: f64,
    /// Reference clock (stops while the planner is held).
    pub ref_clock: f64,
    pub ref_x: f64,
    pub ref_y: f64,
    pub ref_theta: f64,
    pub obj_x: f64,
    pub obj_y: f64,
    pub obj_theta: f64,
    pub phi: f64,
    pub err_x: f64,
    pub err_y: f64,
    pub err_theta: f64,
    pub flange_x: f64,
    pub flange_y: f64,
    pub flange_vx: f64,
    pub flange_vy: f64,
    /// Interpolated set-point from the MPC (flange level).
    pub sp_raw_x: f64,
    pub sp_raw_y: f64,
    pub sp_raw_vx: f64,
    pub sp_raw_vy: f64,
    /// Set-point after the passivity filter.
    pub sp_filt_x: f64,
    pub sp_filt_y: f64,
    pub sp_filt_vx: f64,
    pub sp_filt_vy: f64,
    /// Resolved contact force, body frame.
    pub force_n: f64,
    pub force_t: f64,
    pub force_norm: f64,
    /// MPC predicted force, body frame.
    pub pred_force_x: f64,
    pub pred_force_y: f64,
    pub pred_force_norm: f64,
    pub phi_dot_plus: f64,
    pub phi_dot_minus: f64,
    pub mode: String,
    pub disturbance_active: bool,
    pub disturbance_fx: f64,
    pub disturbance_fy: f64,
    pub tank_energy: f64,
    pub alpha: u8,
    pub beta: u8,
    pub gamma: u8,
    /// `ẋ̃ᵀ f_p` over the step.
    pub interaction_power: f64,
    /// `ẋ̃ᵀ f_h` over the step.
    pub human_power: f64,
    /// Energy entering through set-point discontinuities at the step start.
    pub jump_energy: f64,
    pub storage: f64,
    pub clamp_energy: f64,
    pub mpc_update: bool,
    pub mpc_iterations: usize,
    pub mpc_status: String,
    pub mpc_kkt: f64,
    pub mpc_complementarity: f64,
    pub mpc_min_multiplier: f64,
    pub mpc_min_sliding_rate: f64,
    pub mpc_sliding_stages: usize,
}

pub fn write_trace<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_trace(std::io::BufWriter::new(f), rows)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Solver wall-clock times, kept out of the trace so traces stay reproducible.
pub fn write_timing_file(path: &Path, times: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["solve", "solve_time_s"])?;
    for (i, t) in times.iter().enumerate() {
        w.write_record([i.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
