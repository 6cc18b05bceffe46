//! Small dense convex QP solver for the per-step dispatch program.
//!
//! Solves
//!
//! ```text
//!     minimize     sum_j ( q_j / 2 * x_j^2 + c_j * x_j )
//!     subject to   l_j <= x_j <= u_j
//!                  sum_j a_rj * x_j >= b_r      for every row r
//! ```
//!
//! with `q_j >= 0`. A Mehrotra predictor-corrector interior point method gets
//! close to the optimum, then the identified active set is solved exactly so
//! that bounds hold with equality. If that polish step is singular or lands
//! outside the feasible set, the interior point iterate is kept.

use crate::error::{Error, Result};

/// One general inequality row `sum coeff * x[var] >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Diagonal-Hessian QP with box bounds and general `>=` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct QpInstance {
    pub quad: Vec<f64>,
    pub linear: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Active set solved exactly after the interior point phase.
    Polished,
    /// Interior point iterate returned as is.
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the general rows (non-negative).
    pub row_duals: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    /// Relative KKT residual (stationarity, feasibility and complementarity).
    pub kkt_residual: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 100;
const FIX_TOL: f64 = 1e-12;
const POLISH_TOL: f64 = 1e-9;
/// Proximal term on the normal matrix; keeps directions without curvature
/// (flow around a network loop) from going singular.
const PROX_REG: f64 = 1e-9;
/// IPM residual accepted without polishing.
const IPM_TOL: f64 = 1e-6;
/// Stalled IPM residual still worth handing to the polish step.
const ROUGH_TOL: f64 = 1e-4;

impl QpInstance {
    pub fn var_count(&self) -> usize {
        self.quad.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.quad
            .iter()
            .zip(&self.linear)
            .zip(x)
            .map(|((q, c), x)| 0.5 * q * x * x + c * x)
            .sum()
    }

    pub fn row_value(&self, r: usize, x: &[f64]) -> f64 {
        self.rows[r].coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.quad.len();
        if self.linear.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension("QP vectors differ in length".into()));
        }
        for j in 0..n {
            if !(self.quad[j] >= 0.0 && self.quad[j].is_finite()) {
                return Err(Error::Parameter(format!(
                    "QP Hessian entry {j} must be finite and non-negative"
                )));
            }
            if !self.linear[j].is_finite() {
                return Err(Error::Parameter(format!("QP linear term {j} not finite")));
            }
            if self.lower[j].is_nan()
                || self.upper[j].is_nan()
                || self.lower[j] > self.upper[j]
                || self.lower[j] == f64::INFINITY
                || self.upper[j] == f64::NEG_INFINITY
            {
                return Err(Error::Parameter(format!("QP bounds of variable {j} empty")));
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() || row.coeffs.iter().any(|&(j, a)| j >= n || !a.is_finite()) {
                return Err(Error::Parameter(format!("QP row {r} malformed")));
            }
        }
        Ok(())
    }

    /// Relative KKT residual of `x` with row multipliers `duals`; bound
    /// multipliers are implied by the reduced costs.
    pub fn kkt_residual(&self, x: &[f64], duals: &[f64]) -> f64 {
        let scale = 1.0
            + self
                .linear
                .iter()
                .chain(self.rows.iter().map(|r| &r.rhs))
                .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut reduced: Vec<f64> = (0..x.len())
            .map(|j| self.quad[j] * x[j] + self.linear[j])
            .collect();
        let mut worst = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            let lam = duals[r];
            worst = worst.max(-lam);
            let slack = self.row_value(r, x) - row.rhs;
            worst = worst.max(-slack);
            worst = worst.max((lam * slack).abs());
            for &(j, a) in &row.coeffs {
                reduced[j] -= a * lam;
            }
        }
        for j in 0..x.len() {
            let (l, u) = (self.lower[j], self.upper[j]);
            worst = worst.max(l - x[j]).max(x[j] - u);
            let at_lower = x[j] - l <= POLISH_TOL * (1.0 + l.abs());
            let at_upper = u - x[j] <= POLISH_TOL * (1.0 + u.abs());
            let rc = reduced[j];
            let v = match (at_lower, at_upper) {
                (true, true) => 0.0,
                (true, false) => (-rc).max(0.0),
                (false, true) => rc.max(0.0),
                (false, false) => rc.abs(),
            };
            worst = worst.max(v);
        }
        worst / scale
    }
}

fn is_fixed(lower: f64, upper: f64) -> bool {
    lower.is_finite() && upper.is_finite() && upper - lower <= FIX_TOL * (1.0 + lower.abs())
}

/// One IPM constraint `g . x - w = h`, `w >= 0`, over reduced (free) variables.
#[derive(Debug, Clone)]
struct Constraint {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Origin {
    Lower(usize),
    Upper(usize),
    Row(usize),
}

/// Solves the QP. Deterministic for identical input.
///
/// Variables are rescaled by powers of two towards unit curvature and rows
/// towards unit coefficients, which is exact in floating point.
pub fn solve_qp(qp: &QpInstance) -> Result<QpSolution> {
    qp.validate()?;
    let pow2 = |v: f64| 2f64.powi(v.log2().round() as i32);
    let col: Vec<f64> = qp
        .quad
        .iter()
        .map(|&q| if q > 0.0 { pow2((1.0 / q.sqrt()).clamp(1e-4, 1e2)) } else { 1.0 })
        .collect();
    let mut row_scale = Vec::with_capacity(qp.rows.len());
    let rows = qp
        .rows
        .iter()
        .map(|row| {
            let big = row
                .coeffs
                .iter()
                .fold(0.0f64, |m, &(j, a)| m.max((a * col[j]).abs()));
            let rs = if big > 0.0 { pow2(big) } else { 1.0 };
            row_scale.push(rs);
            Row {
                coeffs: row.coeffs.iter().map(|&(j, a)| (j, a * col[j] / rs)).collect(),
                rhs: row.rhs / rs,
            }
        })
        .collect();
    let scaled = QpInstance {
        quad: qp.quad.iter().zip(&col).map(|(q, s)| q * s * s).collect(),
        linear: qp.linear.iter().zip(&col).map(|(c, s)| c * s).collect(),
        lower: qp.lower.iter().zip(&col).map(|(l, s)| l / s).collect(),
        upper: qp.upper.iter().zip(&col).map(|(u, s)| u / s).collect(),
        rows,
    };
    let sol = match solve_scaled(&scaled) {
        Ok(s) => s,
        // a stalled run sometimes converges on the unscaled problem
        Err(e) => return solve_scaled(qp).map_err(|_| e),
    };
    let x: Vec<f64> = sol
        .x
        .iter()
        .zip(&col)
        .enumerate()
        .map(|(j, (y, s))| (y * s).clamp(qp.lower[j], qp.upper[j]))
        .collect();
    let row_duals: Vec<f64> = sol
        .row_duals
        .iter()
        .zip(&row_scale)
        .map(|(l, rs)| l / rs)
        .collect();
    Ok(QpSolution {
        objective: qp.objective(&x),
        kkt_residual: qp.kkt_residual(&x, &row_duals),
        x,
        row_duals,
        status: sol.status,
        iterations: sol.iterations,
    })
}

fn solve_scaled(qp: &QpInstance) -> Result<QpSolution> {
    let n = qp.var_count();

    // Fixed variables are substituted out.
    let mut x = vec![0.0; n];
    let mut free = Vec::with_capacity(n);
    let mut free_pos = vec![usize::MAX; n];
    for j in 0..n {
        if is_fixed(qp.lower[j], qp.upper[j]) {
            x[j] = qp.lower[j];
        } else {
            free_pos[j] = free.len();
            free.push(j);
        }
    }

    let mut cons = Vec::new();
    let mut origin = Vec::new();
    for (fi, &j) in free.iter().enumerate() {
        if qp.lower[j].is_finite() {
            cons.push(Constraint {
                coeffs: vec![(fi, 1.0)],
                rhs: qp.lower[j],
            });
            origin.push(Origin::Lower(j));
        }
        if qp.upper[j].is_finite() {
            cons.push(Constraint {
                coeffs: vec![(fi, -1.0)],
                rhs: -qp.upper[j],
            });
            origin.push(Origin::Upper(j));
        }
    }
    for (r, row) in qp.rows.iter().enumerate() {
        let mut rhs = row.rhs;
        let mut coeffs = Vec::with_capacity(row.coeffs.len());
        for &(j, a) in &row.coeffs {
            if free_pos[j] == usize::MAX {
                rhs -= a * x[j];
            } else {
                coeffs.push((free_pos[j], a));
            }
        }
        cons.push(Constraint { coeffs, rhs });
        origin.push(Origin::Row(r));
    }

    let q: Vec<f64> = free.iter().map(|&j| qp.quad[j]).collect();
    let c: Vec<f64> = free.iter().map(|&j| qp.linear[j]).collect();
    let (xf, z, iterations, ipm_residual) = interior_point(&q, &c, &cons, qp, &free)?;
    for (fi, &j) in free.iter().enumerate() {
        x[j] = xf[fi];
    }
    let mut row_duals = vec![0.0; qp.rows.len()];
    let mut active_lower = vec![false; n];
    let mut active_upper = vec![false; n];
    let mut active_rows = vec![false; qp.rows.len()];
    let mut w = vec![0.0; cons.len()];
    for (k, con) in cons.iter().enumerate() {
        w[k] = con.coeffs.iter().map(|&(i, a)| a * xf[i]).sum::<f64>() - con.rhs;
    }
    for (k, o) in origin.iter().enumerate() {
        let active = w[k] < z[k];
        match *o {
            Origin::Lower(j) => active_lower[j] = active,
            Origin::Upper(j) => active_upper[j] = active,
            Origin::Row(r) => {
                row_duals[r] = z[k].max(0.0);
                active_rows[r] = active;
            }
        }
    }
    for j in 0..n {
        if active_lower[j] && active_upper[j] {
            // keep whichever bound the iterate sits closer to
            if x[j] - qp.lower[j] <= qp.upper[j] - x[j] {
                active_upper[j] = false;
            } else {
                active_lower[j] = false;
            }
        }
    }

    let ipm_x: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(j, v)| v.clamp(qp.lower[j], qp.upper[j]))
        .collect();
    let polished = polish(
        qp,
        &free,
        &ipm_x,
        &row_duals,
        &active_lower,
        &active_upper,
        &active_rows,
    );
    let (x, row_duals, status) = match polished {
        Some((px, pd)) => (px, pd, SolveStatus::Polished),
        None => (ipm_x, row_duals, SolveStatus::Optimal),
    };
    let kkt_residual = qp.kkt_residual(&x, &row_duals);
    if status == SolveStatus::Optimal && ipm_residual > IPM_TOL {
        return Err(Error::Solver {
            iterations,
            residual: ipm_residual,
        });
    }
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        row_duals,
        status,
        kkt_residual,
        iterations,
    })
}

fn interior_point(
    q: &[f64],
    c: &[f64],
    cons: &[Constraint],
    qp: &QpInstance,
    free: &[usize],
) -> Result<(Vec<f64>, Vec<f64>, usize, f64)> {
    let m = q.len();
    let k_count = cons.len();
    let mut x: Vec<f64> = free
        .iter()
        .map(|&j| {
            let (l, u) = (qp.lower[j], qp.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (true, true) => 0.5 * (l + u),
                (true, false) => l + 1.0,
                (false, true) => u - 1.0,
                (false, false) => 0.0,
            }
        })
        .collect();
    if k_count == 0 {
        // unconstrained: each variable minimises its own parabola
        for i in 0..m {
            if q[i] <= 0.0 {
                if c[i] != 0.0 {
                    return Err(Error::Solver {
                        iterations: 0,
                        residual: f64::INFINITY,
                    });
                }
                x[i] = 0.0;
            } else {
                x[i] = -c[i] / q[i];
            }
        }
        return Ok((x, Vec::new(), 0, 0.0));
    }

    let dot = |con: &Constraint, v: &[f64]| -> f64 { con.coeffs.iter().map(|&(i, a)| a * v[i]).sum() };
    let mut w: Vec<f64> = cons.iter().map(|con| (dot(con, &x) - con.rhs).max(1.0)).collect();
    let mut z = vec![1.0; k_count];

    let c_scale = 1.0 + c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let h_scale = 1.0 + cons.iter().fold(0.0f64, |a, con| a.max(con.rhs.abs()));

    let mut mat = vec![0.0; m * m];
    let mut normal = vec![0.0; m * m];
    let mut rd = vec![0.0; m];
    let mut rp = vec![0.0; k_count];
    let mut rc = vec![0.0; k_count];
    let mut dx = vec![0.0; m];
    let mut dw = vec![0.0; k_count];
    let mut dz = vec![0.0; k_count];
    let mut dw_aff = vec![0.0; k_count];
    let mut dz_aff = vec![0.0; k_count];
    let mut residual = f64::INFINITY;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>, usize)> = None;

    for iter in 0..MAX_ITER {
        for i in 0..m {
            rd[i] = q[i] * x[i] + c[i];
        }
        for (k, con) in cons.iter().enumerate() {
            for &(i, a) in &con.coeffs {
                rd[i] -= a * z[k];
            }
            rp[k] = dot(con, &x) - w[k] - con.rhs;
        }
        let mu = w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / k_count as f64;
        let rd_norm = rd.iter().fold(0.0f64, |a, v| a.max(v.abs())) / c_scale;
        let rp_norm = rp.iter().fold(0.0f64, |a, v| a.max(v.abs())) / h_scale;
        residual = rd_norm.max(rp_norm).max(mu / c_scale);
        if !residual.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver {
                iterations: iter,
                residual: f64::INFINITY,
            });
        }
        // The normal matrix degrades as mu -> 0; the polish step takes it from here.
        if rd_norm < 1e-10 && rp_norm < 1e-10 && mu < 1e-11 * c_scale {
            return Ok((x, z, iter, residual));
        }
        if best.as_ref().is_none_or(|b| residual < b.0) {
            best = Some((residual, x.clone(), z.clone(), iter));
        }
        if mu < 1e-14 * c_scale {
            break;
        }

        // normal matrix Q + G' diag(z/w) G
        mat.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            mat[i * m + i] = q[i] + PROX_REG;
        }
        for (k, con) in cons.iter().enumerate() {
            let d = z[k] / w[k];
            for &(i, a) in &con.coeffs {
                for &(l, b) in &con.coeffs {
                    mat[i * m + l] += d * a * b;
                }
            }
        }
        normal.copy_from_slice(&mat);
        if !cholesky(&mut mat, m) {
            return Err(Error::Solver {
                iterations: iter,
                residual,
            });
        }

        // predictor
        for k in 0..k_count {
            rc[k] = -w[k] * z[k];
        }
        newton_direction(&mat, &normal, cons, &rd, &rp, &rc, &w, &z, &mut dx, &mut dw, &mut dz);
        let alpha_aff = max_step(&w, &dw).min(max_step(&z, &dz)).min(1.0);
        let mu_aff = gap_after(&w, &z, &dw, &dz, alpha_aff);
        let sigma = (mu_aff / mu).powi(3).min(1.0);
        dw_aff.copy_from_slice(&dw);
        dz_aff.copy_from_slice(&dz);

        // corrector, falling back to the plain centred direction when the
        // second-order term leaves no acceptable step
        for k in 0..k_count {
            rc[k] = -w[k] * z[k] - dw_aff[k] * dz_aff[k] + sigma * mu;
        }
        newton_direction(&mat, &normal, cons, &rd, &rp, &rc, &w, &z, &mut dx, &mut dw, &mut dz);
        let feasible = rd_norm < 1e-8 && rp_norm < 1e-8;
        let mut alpha = safeguarded_step(&w, &z, &dw, &dz, mu, feasible);
        if alpha < 0.1 {
            let sigma = sigma.max(0.3);
            for k in 0..k_count {
                rc[k] = -w[k] * z[k] + sigma * mu;
            }
            newton_direction(&mat, &normal, cons, &rd, &rp, &rc, &w, &z, &mut dx, &mut dw, &mut dz);
            alpha = safeguarded_step(&w, &z, &dw, &dz, mu, feasible);
        }
        for i in 0..m {
            x[i] += alpha * dx[i];
        }
        for k in 0..k_count {
            w[k] = (w[k] + alpha * dw[k]).max(f64::MIN_POSITIVE);
            z[k] = (z[k] + alpha * dz[k]).max(f64::MIN_POSITIVE);
        }
    }
    // hand back a stalled iterate; the caller decides whether it is good enough
    match best {
        Some((r, x, z, iter)) if r < ROUGH_TOL => Ok((x, z, iter, r)),
        _ => Err(Error::Solver {
            iterations: MAX_ITER,
            residual: best.map_or(residual, |b| b.0),
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn newton_direction(
    chol: &[f64],
    normal: &[f64],
    cons: &[Constraint],
    rd: &[f64],
    rp: &[f64],
    rc: &[f64],
    w: &[f64],
    z: &[f64],
    dx: &mut [f64],
    dw: &mut [f64],
    dz: &mut [f64],
) {
    let m = dx.len();
    for i in 0..m {
        dx[i] = -rd[i];
    }
    for (k, con) in cons.iter().enumerate() {
        let s = (rc[k] - z[k] * rp[k]) / w[k];
        for &(i, a) in &con.coeffs {
            dx[i] += a * s;
        }
    }
    let rhs = dx.to_vec();
    cholesky_solve(chol, m, dx);
    // iterative refinement against the unfactored matrix
    for _ in 0..2 {
        let mut r: Vec<f64> = (0..m)
            .map(|i| rhs[i] - (0..m).map(|l| normal[i * m + l] * dx[l]).sum::<f64>())
            .collect();
        cholesky_solve(chol, m, &mut r);
        for i in 0..m {
            dx[i] += r[i];
        }
    }
    for (k, con) in cons.iter().enumerate() {
        dw[k] = con.coeffs.iter().map(|&(i, a)| a * dx[i]).sum::<f64>() + rp[k];
        dz[k] = (rc[k] - z[k] * dw[k]) / w[k];
    }
}

/// Longest step (up to 0.995 of the way to the boundary). Once the iterate is
/// feasible the step must also keep every complementarity product above a
/// fraction of the mean and reduce the mean, which stops Newton steps from
/// bouncing between faces of a degenerate optimum.
fn safeguarded_step(w: &[f64], z: &[f64], dw: &[f64], dz: &[f64], mu: f64, feasible: bool) -> f64 {
    const SPREAD: f64 = 1e-4;
    let mut alpha = (0.995 * max_step(w, dw).min(max_step(z, dz))).min(1.0);
    if !feasible {
        return alpha;
    }
    // an iterate that is already off-centre only has to stay about as centred
    let current = w.iter().zip(z).map(|(w, z)| w * z).fold(f64::INFINITY, f64::min) / mu;
    let spread = SPREAD.min(0.5 * current);
    for _ in 0..60 {
        let gap = gap_after(w, z, dw, dz, alpha);
        let centred = w
            .iter()
            .zip(dw)
            .zip(z.iter().zip(dz))
            .all(|((w, dw), (z, dz))| (w + alpha * dw) * (z + alpha * dz) >= spread * gap);
        if centred && gap <= (1.0 - 0.01 * alpha) * mu {
            return alpha;
        }
        alpha *= 0.7;
    }
    0.0
}

fn gap_after(w: &[f64], z: &[f64], dw: &[f64], dz: &[f64], alpha: f64) -> f64 {
    w.iter()
        .zip(dw)
        .zip(z.iter().zip(dz))
        .map(|((w, dw), (z, dz))| (w + alpha * dw) * (z + alpha * dz))
        .sum::<f64>()
        / w.len() as f64
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(v, d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

/// In-place lower Cholesky factor of a dense symmetric matrix. Tiny pivots are
/// regularised; returns false only on a non-finite factor.
fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let floor = 1e-14 * a[j * n + j].abs().max(1e-12);
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            d = floor;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    a.iter().all(|v| v.is_finite())
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves the equality-constrained problem on the guessed active set and
/// verifies optimality. Returns `None` if the guess does not hold up.
#[allow(clippy::too_many_arguments)]
fn polish(
    qp: &QpInstance,
    free: &[usize],
    x0: &[f64],
    ipm_duals: &[f64],
    at_lower: &[bool],
    at_upper: &[bool],
    active_rows: &[bool],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = qp.var_count();
    let mut x = x0.to_vec();
    let mut unknown_var = Vec::new();
    let mut var_slot = vec![usize::MAX; n];
    let pinned = |j: usize| at_lower[j] || at_upper[j] || is_fixed(qp.lower[j], qp.upper[j]);
    // Active rows whose variables all sit on bounds keep the interior point dual.
    let (rows, degenerate): (Vec<usize>, Vec<usize>) = (0..qp.rows.len())
        .filter(|&r| active_rows[r])
        .partition(|&r| qp.rows[r].coeffs.iter().any(|&(j, a)| a != 0.0 && !pinned(j)));

    // Variables touching an active row, or with curvature, are solved for.
    let mut touched = vec![false; n];
    for &r in &rows {
        for &(j, a) in &qp.rows[r].coeffs {
            if a != 0.0 {
                touched[j] = true;
            }
        }
    }
    for &j in free {
        if at_lower[j] {
            x[j] = qp.lower[j];
        } else if at_upper[j] {
            x[j] = qp.upper[j];
        } else if qp.quad[j] > 0.0 || touched[j] {
            var_slot[j] = unknown_var.len();
            unknown_var.push(j);
        }
    }
    let mut duals = vec![0.0; qp.rows.len()];
    for &r in &degenerate {
        duals[r] = ipm_duals[r];
    }
    let nv = unknown_var.len();
    let size = nv + rows.len();
    if size > 0 {
        let mut a = vec![0.0; size * size];
        let mut b = vec![0.0; size];
        for (s, &j) in unknown_var.iter().enumerate() {
            a[s * size + s] = qp.quad[j];
            b[s] = -qp.linear[j];
        }
        for (t, &r) in rows.iter().enumerate() {
            let row_idx = nv + t;
            b[row_idx] = qp.rows[r].rhs;
            for &(j, coef) in &qp.rows[r].coeffs {
                if var_slot[j] != usize::MAX {
                    let s = var_slot[j];
                    a[s * size + row_idx] -= coef;
                    a[row_idx * size + s] += coef;
                } else {
                    b[row_idx] -= coef * x[j];
                }
            }
        }
        let sol = lu_solve(a, b, size)?;
        for (s, &j) in unknown_var.iter().enumerate() {
            x[j] = sol[s];
        }
        for (t, &r) in rows.iter().enumerate() {
            duals[r] = sol[nv + t];
        }
    }
    verify_polish(qp, &mut x, &duals, at_lower, at_upper).then_some((x, duals))
}

fn verify_polish(
    qp: &QpInstance,
    x: &mut [f64],
    duals: &[f64],
    at_lower: &[bool],
    at_upper: &[bool],
) -> bool {
    let scale = 1.0
        + qp
            .linear
            .iter()
            .chain(qp.rows.iter().map(|r| &r.rhs))
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = POLISH_TOL * scale;
    if duals.iter().any(|&d| d < -tol || !d.is_finite()) {
        return false;
    }
    for j in 0..x.len() {
        if !x[j].is_finite() || x[j] < qp.lower[j] - tol || x[j] > qp.upper[j] + tol {
            return false;
        }
    }
    for (r, row) in qp.rows.iter().enumerate() {
        if qp.row_value(r, x) < row.rhs - tol {
            return false;
        }
    }
    let mut reduced: Vec<f64> = (0..x.len())
        .map(|j| qp.quad[j] * x[j] + qp.linear[j])
        .collect();
    for (r, row) in qp.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            reduced[j] -= a * duals[r];
        }
    }
    for j in 0..x.len() {
        if is_fixed(qp.lower[j], qp.upper[j]) {
            continue;
        }
        let ok = if at_lower[j] {
            reduced[j] >= -tol
        } else if at_upper[j] {
            reduced[j] <= tol
        } else {
            reduced[j].abs() <= tol
        };
        if !ok {
            return false;
        }
    }
    for j in 0..x.len() {
        x[j] = x[j].clamp(qp.lower[j], qp.upper[j]);
    }
    true
}

/// Dense LU with partial pivoting. `None` when numerically singular.
fn lu_solve(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..n {
        let (piv, pmax) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for k in col..n {
                    a[r * n + k] -= f * a[col * n + k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r * n + k] * b[k];
        }
        b[r] = s / a[r * n + r];
    }
    Some(b)
}
