//! Dense convex QP with sparse inequality rows, solved by a Mehrotra
//! predictor–corrector interior-point method.
//!
//! ```text
//! minimize   ½ zᵀ H z + gᵀ z
//! subject to aᵢᵀ z ≤ bᵢ   for every row i
//! ```

use nalgebra::{DMatrix, DVector};

/// One inequality `aᵀ z ≤ b` with `a` stored sparsely.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl SparseRow {
    pub fn dot(&self, z: &DVector<f64>) -> f64 {
        self.entries.iter().map(|&(j, v)| v * z[j]).sum()
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub rows: Vec<SparseRow>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        Self { h: DMatrix::zeros(n, n), g: DVector::zeros(n), rows: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn add_row(&mut self, entries: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(SparseRow { entries, rhs });
    }

    /// `lo ≤ z_j ≤ hi`; infinite sides are skipped.
    pub fn add_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        if hi.is_finite() {
            self.add_row(vec![(j, 1.0)], hi);
        }
        if lo.is_finite() {
            self.add_row(vec![(j, -1.0)], -lo);
        }
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.g.dot(z)
    }

    pub fn max_violation(&self, z: &DVector<f64>) -> f64 {
        self.rows.iter().map(|r| (r.dot(z) - r.rhs).max(0.0)).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// Inequality multipliers, one per row.
    pub multipliers: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iters: 60 }
    }
}

fn fraction_to_boundary(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

/// Cholesky with a growing diagonal shift if the matrix is numerically indefinite.
fn factor(mut k: DMatrix<f64>) -> Option<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>> {
    let n = k.nrows();
    let scale = (0..n).map(|i| k[(i, i)].abs()).fold(1e-12, f64::max);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(c) = k.clone().cholesky() {
            return Some(c);
        }
        let next = if shift == 0.0 { 1e-12 * scale } else { shift * 100.0 };
        for i in 0..n {
            k[(i, i)] += next - shift;
        }
        shift = next;
    }
    None
}

pub fn solve_qp(qp: &QpProblem, settings: &QpSettings) -> QpSolution {
    let n = qp.dim();
    let m = qp.rows.len();
    let a_times = |z: &DVector<f64>| DVector::from_iterator(m, qp.rows.iter().map(|r| r.dot(z)));
    let at_times = |y: &DVector<f64>| {
        let mut out = DVector::zeros(n);
        for (r, yi) in qp.rows.iter().zip(y.iter()) {
            for &(j, v) in &r.entries {
                out[j] += v * yi;
            }
        }
        out
    };
    let b = DVector::from_iterator(m, qp.rows.iter().map(|r| r.rhs));
    let h_reg = {
        let mut h = qp.h.clone();
        let scale = (0..n).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
        for i in 0..n {
            h[(i, i)] += 1e-13 * scale;
        }
        h
    };

    // Unconstrained or trivial case.
    if m == 0 {
        let z = match factor(h_reg.clone()) {
            Some(c) => c.solve(&(-&qp.g)),
            None => DVector::zeros(n),
        };
        return QpSolution { z, multipliers: DVector::zeros(0), status: QpStatus::Optimal, iterations: 1 };
    }

    let scale_g = 1.0 + qp.g.amax();
    let scale_b = 1.0 + b.amax();

    // Normal-equation matrix H + Aᵀ diag(w) A.
    let build = |w: &DVector<f64>| {
        let mut k = h_reg.clone();
        for (r, wi) in qp.rows.iter().zip(w.iter()) {
            for &(i, vi) in &r.entries {
                let s = wi * vi;
                for &(j, vj) in &r.entries {
                    k[(i, j)] += s * vj;
                }
            }
        }
        k
    };

    let mut z = DVector::zeros(n);
    let az = a_times(&z);
    let mut s = DVector::from_iterator(m, (0..m).map(|i| (b[i] - az[i]).max(1.0)));
    let mut lam = DVector::from_element(m, 1.0);
    let mut status = QpStatus::MaxIters;
    let mut iterations = 0;
    let mut best_primal = f64::INFINITY;
    let mut stall = 0;

    for it in 0..settings.max_iters {
        iterations = it + 1;
        let az = a_times(&z);
        let r_d = &qp.h * &z + &qp.g + at_times(&lam);
        let r_p = &az + &s - &b;
        let mu = s.dot(&lam) / m as f64;
        let res_d = r_d.amax() / scale_g;
        let res_p = r_p.amax() / scale_b;
        if res_d <= settings.tolerance && res_p <= settings.tolerance && mu <= settings.tolerance {
            status = QpStatus::Optimal;
            break;
        }
        // Primal infeasibility: multipliers blow up while the primal residual stalls.
        if res_p < 0.5 * best_primal {
            best_primal = res_p;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall > 15 && res_p > 1e-6 && lam.amax() > 1e8 {
            status = QpStatus::Infeasible;
            break;
        }

        let w = lam.component_div(&s);
        let chol = match factor(build(&w)) {
            Some(c) => c,
            None => {
                status = QpStatus::Infeasible;
                break;
            }
        };
        // Newton step for a given complementarity target r_c = s∘λ − σμ.
        let direction = |r_c: &DVector<f64>| {
            // λ∘Δs + s∘Δλ = −r_c ; AΔz + Δs = −r_p ; HΔz + AᵀΔλ = −r_d
            let t = DVector::from_iterator(m, (0..m).map(|i| (-r_c[i] + lam[i] * r_p[i]) / s[i]));
            let rhs = -&r_d - at_times(&t);
            let dz = chol.solve(&rhs);
            let adz = a_times(&dz);
            let ds = -&r_p - &adz;
            let dl = DVector::from_iterator(m, (0..m).map(|i| (-r_c[i] - lam[i] * ds[i]) / s[i]));
            (dz, ds, dl)
        };

        let rc_aff = s.component_mul(&lam);
        let (_, ds_a, dl_a) = direction(&rc_aff);
        let ap = fraction_to_boundary(&s, &ds_a);
        let ad = fraction_to_boundary(&lam, &dl_a);
        let mu_aff = (&s + &ds_a * ap).dot(&(&lam + &dl_a * ad)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let rc = DVector::from_iterator(m, (0..m).map(|i| s[i] * lam[i] + ds_a[i] * dl_a[i] - sigma * mu));
        let (dz, ds, dl) = direction(&rc);
        let ap = (0.995 * fraction_to_boundary(&s, &ds)).min(1.0);
        let ad = (0.995 * fraction_to_boundary(&lam, &dl)).min(1.0);
        z += &dz * ap;
        s += &ds * ap;
        lam += &dl * ad;
        // Keep strictly interior.
        for i in 0..m {
            s[i] = s[i].max(1e-300);
            lam[i] = lam[i].max(1e-300);
        }
    }
    QpSolution { z, multipliers: lam, status, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_constrained_minimum() {
        // min (z0 − 2)² + (z1 + 1)², 0 ≤ z ≤ 1  → (1, 0)
        let mut qp = QpProblem::new(2);
        qp.h = DMatrix::from_diagonal_element(2, 2, 2.0);
        qp.g = DVector::from_vec(vec![-4.0, 2.0]);
        qp.add_bounds(0, 0.0, 1.0);
        qp.add_bounds(1, 0.0, 1.0);
        let sol = solve_qp(&qp, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.z[0] - 1.0).abs() < 1e-8);
        assert!(sol.z[1].abs() < 1e-8);
    }

    #[test]
    fn general_row_active() {
        // min ½‖z‖² − z0 − z1 s.t. z0 + z1 ≤ 1 → (0.5, 0.5), multiplier 0.5
        let mut qp = QpProblem::new(2);
        qp.h = DMatrix::identity(2, 2);
        qp.g = DVector::from_vec(vec![-1.0, -1.0]);
        qp.add_row(vec![(0, 1.0), (1, 1.0)], 1.0);
        let sol = solve_qp(&qp, &QpSettings::default());
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.z[0] - 0.5).abs() < 1e-8 && (sol.z[1] - 0.5).abs() < 1e-8);
        assert!((sol.multipliers[0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn detects_infeasible() {
        let mut qp = QpProblem::new(1);
        qp.h = DMatrix::identity(1, 1);
        qp.add_row(vec![(0, 1.0)], -1.0);
        qp.add_row(vec![(0, -1.0)], -1.0);
        let sol = solve_qp(&qp, &QpSettings { tolerance: 1e-10, max_iters: 200 });
        assert_ne!(sol.status, QpStatus::Optimal);
    }

    #[test]
    fn matches_brute_force_on_small_random_problems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = 3;
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
            let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let mut qp = QpProblem::new(n);
            qp.h = h;
            qp.g = g;
            for j in 0..n {
                qp.add_bounds(j, -0.5, 0.5);
            }
            qp.add_row(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 0.3);
            let sol = solve_qp(&qp, &QpSettings::default());
            assert_eq!(sol.status, QpStatus::Optimal);
            assert!(qp.max_violation(&sol.z) < 1e-8);
            // No feasible grid point does better (up to grid resolution).
            let best = qp.objective(&sol.z);
            let steps = 20;
            for a in 0..=steps {
                for b in 0..=steps {
                    for c in 0..=steps {
                        let z = DVector::from_vec(vec![
                            -0.5 + a as f64 / steps as f64,
                            -0.5 + b as f64 / steps as f64,
                            -0.5 + c as f64 / steps as f64,
                        ]);
                        if qp.max_violation(&z) == 0.0 {
                            assert!(qp.objective(&z) >= best - 1e-9);
                        }
                    }
                }
            }
        }
    }
}
