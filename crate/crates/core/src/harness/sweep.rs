//! Factor sweep over object friction, mass, path shape and speed.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PushError, Result};

use super::reference::PathKind;
use super::runner::run_scenario;
use super::scenario::{Profile, Scenario, RACK_MASSES, SWEEP_PATH_LENGTH, SWEEP_VELOCITIES, TABLE_FRICTIONS};

/// Factor levels and repetitions of a sweep. Controller parameters stay at the
/// profile's nominal values; only the simulated object changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub profile: Profile,
    pub frictions: Vec<f64>,
    pub masses: Vec<f64>,
    pub paths: Vec<PathKind>,
    pub velocities: Vec<f64>,
    pub repetitions: usize,
    pub path_length: f64,
    pub base_seed: u64,
    /// Pose measurement noise (m, m, rad); it is what makes repetitions differ.
    pub pose_noise_std: [f64; 3],
}

impl SweepSpec {
    /// The 3 × 3 × 2 × 4 × 3 campaign on the lightweight-arm profile.
    pub fn campaign() -> Self {
        Self {
            profile: Profile::Kuka,
            frictions: TABLE_FRICTIONS.to_vec(),
            masses: RACK_MASSES.to_vec(),
            paths: vec![PathKind::Line, PathKind::Curve],
            velocities: SWEEP_VELOCITIES.to_vec(),
            repetitions: 3,
            path_length: SWEEP_PATH_LENGTH,
            base_seed: 0,
            pose_noise_std: [5e-4, 5e-4, 5e-3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frictions.is_empty()
            || self.masses.is_empty()
            || self.paths.is_empty()
            || self.velocities.is_empty()
            || self.repetitions == 0
        {
            return Err(PushError::Config("sweep grid is empty".into()));
        }
        Ok(())
    }

    /// Cartesian product of the levels, repetitions innermost.
    pub fn cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &mu in &self.frictions {
            for &mass in &self.masses {
                for &path in &self.paths {
                    for &velocity in &self.velocities {
                        for rep in 0..self.repetitions {
                            let index = cells.len();
                            cells.push(SweepCell {
                                index,
                                mu,
                                mass,
                                path,
                                velocity,
                                rep,
                                seed: self.base_seed.wrapping_add(index as u64),
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    fn scenario(&self, cell: &SweepCell) -> Scenario {
        Scenario {
            path: cell.path,
            mean_velocity: cell.velocity,
            mass: Some(cell.mass),
            mu_ground: Some(cell.mu),
            duration: self.path_length / cell.velocity,
            seed: cell.seed,
            ..Scenario::nominal(self.profile)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub mu: f64,
    pub mass: f64,
    pub path: PathKind,
    pub velocity: f64,
    pub rep: usize,
    pub seed: u64,
}

/// One line of the sweep table. Metric fields are NaN for failed runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub mu: f64,
    pub mass: f64,
    pub path: PathKind,
    pub velocity: f64,
    pub rep: usize,
    pub seed: u64,
    pub ok: bool,
    pub error: String,
    pub rmse_pos: f64,
    pub rmse_rot: f64,
    pub max_abs_pos_err: f64,
    pub max_abs_rot_err: f64,
    pub max_force_norm: f64,
    pub tank_min: f64,
    pub alpha_zero_fraction: f64,
    pub mpc_solves: usize,
    pub mpc_infeasible: usize,
    pub infeasible_fraction: f64,
}

/// Runs one cell; a failure is recorded in the row rather than returned.
pub fn run_cell(spec: &SweepSpec, cell: &SweepCell) -> SweepRow {
    let mut row = SweepRow {
        index: cell.index,
        mu: cell.mu,
        mass: cell.mass,
        path: cell.path,
        velocity: cell.velocity,
        rep: cell.rep,
        seed: cell.seed,
        ok: false,
        error: String::new(),
        rmse_pos: f64::NAN,
        rmse_rot: f64::NAN,
        max_abs_pos_err: f64::NAN,
        max_abs_rot_err: f64::NAN,
        max_force_norm: f64::NAN,
        tank_min: f64::NAN,
        alpha_zero_fraction: f64::NAN,
        mpc_solves: 0,
        mpc_infeasible: 0,
        infeasible_fraction: f64::NAN,
    };
    let result = spec.scenario(cell).resolve().and_then(|mut cfg| {
        cfg.pose_noise_std = spec.pose_noise_std;
        run_scenario(&cfg)
    });
    match result {
        Ok(out) => {
            let m = out.metrics;
            row.ok = true;
            row.rmse_pos = m.rmse_pos;
            row.rmse_rot = m.rmse_rot;
            row.max_abs_pos_err = m.max_abs_pos_err;
            row.max_abs_rot_err = m.max_abs_rot_err;
            row.max_force_norm = m.max_force_norm;
            row.tank_min = m.tank_min;
            row.alpha_zero_fraction = m.alpha_zero_fraction;
            row.mpc_solves = m.mpc_solves;
            row.mpc_infeasible = m.mpc_infeasible;
            row.infeasible_fraction = m.infeasible_fraction();
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

/// Runs every cell in parallel; rows come back in cell order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let cells = spec.cells();
    Ok(cells.par_iter().map(|c| run_cell(spec, c)).collect())
}

/// Aggregates of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub failures: usize,
    /// Mean positional and rotational RMSE over the successful runs.
    pub mean_rmse_pos: f64,
    pub mean_rmse_rot: f64,
    pub mean_rmse_pos_line: f64,
    pub mean_rmse_pos_curve: f64,
    /// Mean positional RMSE at the slowest and fastest speed levels.
    pub mean_rmse_pos_slowest: f64,
    pub mean_rmse_pos_fastest: f64,
    pub max_infeasible_fraction: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn summarize(rows: &[SweepRow]) -> SweepSummary {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.ok).collect();
    let vmin = ok.iter().map(|r| r.velocity).fold(f64::INFINITY, f64::min);
    let vmax = ok.iter().map(|r| r.velocity).fold(f64::NEG_INFINITY, f64::max);
    SweepSummary {
        runs: rows.len(),
        failures: rows.len() - ok.len(),
        mean_rmse_pos: mean(ok.iter().map(|r| r.rmse_pos)),
        mean_rmse_rot: mean(ok.iter().map(|r| r.rmse_rot)),
        mean_rmse_pos_line: mean(ok.iter().filter(|r| r.path == PathKind::Line).map(|r| r.rmse_pos)),
        mean_rmse_pos_curve: mean(ok.iter().filter(|r| r.path == PathKind::Curve).map(|r| r.rmse_pos)),
        mean_rmse_pos_slowest: mean(ok.iter().filter(|r| r.velocity == vmin).map(|r| r.rmse_pos)),
        mean_rmse_pos_fastest: mean(ok.iter().filter(|r| r.velocity == vmax).map(|r| r.rmse_pos)),
        max_infeasible_fraction: ok.iter().map(|r| r.infeasible_fraction).fold(0.0, f64::max),
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(PushError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn campaign_has_216_cells() {
        let spec = SweepSpec::campaign();
        let cells = spec.cells();
        assert_eq!(cells.len(), 216);
        assert!(cells.iter().enumerate().all(|(i, c)| c.index == i));
    }

    #[test]
    fn empty_grid_rejected() {
        let spec = SweepSpec { velocities: vec![], ..SweepSpec::campaign() };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn summary_skips_failures() {
        let spec = SweepSpec::campaign();
        let cells = spec.cells();
        let mk = |c: &SweepCell, ok: bool, e: f64| SweepRow {
            index: c.index,
            mu: c.mu,
            mass: c.mass,
            path: c.path,
            velocity: c.velocity,
            rep: c.rep,
            seed: c.seed,
            ok,
            error: String::new(),
            rmse_pos: e,
            rmse_rot: e,
            max_abs_pos_err: e,
            max_abs_rot_err: e,
            max_force_norm: 0.0,
            tank_min: 0.0,
            alpha_zero_fraction: 0.0,
            mpc_solves: 1,
            mpc_infeasible: 0,
            infeasible_fraction: 0.0,
        };
        let rows = vec![mk(&cells[0], true, 0.01), mk(&cells[1], true, 0.03), mk(&cells[2], false, f64::NAN)];
        let s = summarize(&rows);
        assert_eq!(s.failures, 1);
        assert!((s.mean_rmse_pos - 0.02).abs() < 1e-15);
    }
}
