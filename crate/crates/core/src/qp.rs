//! Small dense convex quadratic programs.
//!
//! Solves
//!
//! ```text
//!     minimize     1/2 z' H z + F' z
//!     subject to   A z <= b
//! ```
//!
//! with `H` symmetric positive definite, using a primal active-set method. Each
//! iteration solves the equality-constrained subproblem on the current working
//! set through a Cholesky factor of `H` and of the Schur complement
//! `A_W H^-1 A_W'`. A feasible starting point is found with an elastic phase 1
//! (a single shared violation variable with an escalating exact penalty).
//!
//! [`brute_force_solve`] enumerates every candidate active set and is kept as an
//! independent oracle for tests.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Dual feasibility tolerance.
pub const DUAL_TOL: f64 = 1e-10;
/// Stationarity tolerance.
pub const STAT_TOL: f64 = 1e-8;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("objective matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("objective matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("non-finite problem data")]
    NonFinite,
    #[error("brute-force enumeration supports at most 16 constraints, got {0}")]
    TooManyConstraints(usize),
}

/// `minimize 1/2 z'Hz + F'z  s.t.  Az <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl QpProblem {
    /// Builds a problem and checks dimensions, symmetry and positive definiteness.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Self, QpError> {
        let p = Self { h, f, a, b };
        p.validate()?;
        Ok(p)
    }

    /// A problem without constraints.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self, QpError> {
        let n = f.len();
        Self::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.f.len();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::Dimension(format!(
                "H is {}x{}, F has length {}",
                self.h.nrows(),
                self.h.ncols(),
                n
            )));
        }
        if self.a.ncols() != n {
            return Err(QpError::Dimension(format!(
                "A has {} columns, expected {}",
                self.a.ncols(),
                n
            )));
        }
        if self.a.nrows() != self.b.len() {
            return Err(QpError::Dimension(format!(
                "A has {} rows, b has length {}",
                self.a.nrows(),
                self.b.len()
            )));
        }
        let finite = self.h.iter().all(|v| v.is_finite())
            && self.f.iter().all(|v| v.is_finite())
            && self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite());
        if !finite {
            return Err(QpError::NonFinite);
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > SYMMETRY_TOL * self.h.amax().max(1.0) {
            return Err(QpError::NotSymmetric(asym));
        }
        if Cholesky::new(self.h.clone()).is_none() {
            return Err(QpError::NotPositiveDefinite);
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }

    /// `b - A z`; non-negative entries mean the constraint holds.
    pub fn slack(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * z
    }

    /// Copy with every non-zero constraint row scaled to unit norm, and the scale factors.
    fn row_normalized(&self) -> (QpProblem, DVector<f64>) {
        let m = self.num_constraints();
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        let mut norms = DVector::from_element(m, 1.0);
        for i in 0..m {
            let r = self.a.row(i).norm();
            if r > 0.0 {
                norms[i] = r;
                a.row_mut(i).scale_mut(1.0 / r);
                b[i] /= r;
            }
        }
        (QpProblem { h: self.h.clone(), f: self.f.clone(), a, b }, norms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Rule for choosing which constraint leaves the working set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PivotRule {
    /// Most negative multiplier, smallest index on ties.
    #[default]
    MostNegative,
    /// Smallest index with a negative multiplier (anti-cycling).
    Bland,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub pivot: PivotRule,
    /// Overrides the default limit of `50 (m + n)` iterations per phase.
    pub max_iterations: Option<usize>,
    /// Starting point hint; only its value is used, never its active set.
    pub warm_start: Option<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    /// Working set at termination: linearly independent constraints held at
    /// equality, sorted by index.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub status: QpStatus,
    /// `b - A z` at the returned point.
    pub slack: DVector<f64>,
    pub iterations: usize,
    /// For `Infeasible`: `y >= 0` with `sum(y) = 1`, `A'y ~ 0` and `b'y < 0`.
    pub certificate: Option<DVector<f64>>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_violation: f64,
    pub comp_slack: f64,
    pub dual_violation: f64,
}

impl KktResiduals {
    /// True when all residuals are inside the module tolerances.
    pub fn within_tolerances(&self) -> bool {
        self.stationarity <= STAT_TOL
            && self.primal_violation <= FEAS_TOL
            && self.comp_slack <= FEAS_TOL
            && self.dual_violation <= DUAL_TOL
    }
}

/// Infinity-norm KKT residuals of `s` for problem `p`.
pub fn kkt_residual(p: &QpProblem, s: &QpSolution) -> KktResiduals {
    let grad = &p.h * &s.z + &p.f + p.a.transpose() * &s.lambda;
    let ax_b = &p.a * &s.z - &p.b;
    let primal_violation = ax_b.iter().fold(0.0_f64, |acc, &v| acc.max(v));
    let comp_slack = s
        .lambda
        .iter()
        .zip(ax_b.iter())
        .fold(0.0_f64, |acc, (l, r)| acc.max((l * r).abs()));
    let dual_violation = s.lambda.iter().fold(0.0_f64, |acc, &l| acc.max(-l));
    KktResiduals {
        stationarity: if grad.is_empty() { 0.0 } else { grad.amax() },
        primal_violation,
        comp_slack,
        dual_violation,
    }
}

/// True iff every constraint has a multiplier above `tol` or slack above `tol`.
pub fn check_strict_complementarity(s: &QpSolution, tol: f64) -> bool {
    s.lambda
        .iter()
        .zip(s.slack.iter())
        .all(|(&l, &r)| l > tol || r > tol)
}

/// Solves the equality-constrained problem with the rows in `working` held at
/// equality. Returns `None` when those rows are (numerically) dependent.
pub fn solve_on_working_set(p: &QpProblem, working: &[usize]) -> Option<(DVector<f64>, DVector<f64>)> {
    let chol = Cholesky::new(p.h.clone())?;
    let (z, lw) = eq_subproblem(&chol, &p.h, &p.f, &p.a, &p.b, working)?;
    let mut lambda = DVector::zeros(p.num_constraints());
    for (k, &i) in working.iter().enumerate() {
        lambda[i] = lw[k];
    }
    Some((z, lambda))
}

/// Minimizer of the objective on `{z : A_W z = b_W}` and the multipliers of `W`.
///
/// Null-space method: rank is judged on the rows of `A_W` alone, so a badly
/// scaled `H` cannot make independent rows look dependent.
fn eq_subproblem(
    chol: &Cholesky<f64, Dyn>,
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    working: &[usize],
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = f.len();
    if working.is_empty() {
        return Some((-chol.solve(f), DVector::zeros(0)));
    }
    let k = working.len();
    if k > n {
        return None;
    }
    let mut aw = DMatrix::zeros(k, n);
    let mut bw = DVector::zeros(k);
    for (r, &i) in working.iter().enumerate() {
        aw.set_row(r, &a.row(i));
        bw[r] = b[i];
    }
    // QR of [A_W' | I]: the first k columns of Q span the rows of A_W, the rest
    // span their orthogonal complement.
    let mut m = DMatrix::zeros(n, k + n);
    m.columns_mut(0, k).copy_from(&aw.transpose());
    m.columns_mut(k, n).fill_with_identity();
    let qr = m.qr();
    let q = qr.q();
    let r1 = qr.r().view((0, 0), (k, k)).into_owned();
    let dmax = r1.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let dmin = r1.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(dmin > 1e-9 * dmax) {
        return None;
    }
    let y = q.columns(0, k).into_owned();
    let zb = q.columns(k, n - k).into_owned();
    let reduced = if n > k { Some(Cholesky::new(zb.tr_mul(&(h * &zb)))?) } else { None };

    // H z + A_W' lam = -g,  A_W z = c
    let solve = |g: &DVector<f64>, c: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>)> {
        let py = r1.tr_solve_upper_triangular(c)?;
        let mut z = &y * py;
        if let Some(rc) = &reduced {
            let w = rc.solve(&(-zb.tr_mul(&(h * &z + g))));
            z += &zb * w;
        }
        let lam = r1.solve_upper_triangular(&(-y.tr_mul(&(h * &z + g))))?;
        Some((z, lam))
    };
    let (mut z, mut lam) = solve(f, &bw)?;
    // one step of iterative refinement on the KKT system
    let r_stat = -(h * &z + f + aw.tr_mul(&lam));
    let r_feas = &bw - &aw * &z;
    let (dz, dlam) = solve(&(-r_stat), &r_feas)?;
    z += dz;
    lam += dlam;
    Some((z, lam))
}

enum LoopEnd {
    Optimal,
    IterationLimit,
    Singular,
}

struct LoopResult {
    z: DVector<f64>,
    lambda_w: DVector<f64>,
    working: Vec<usize>,
    iterations: usize,
    end: LoopEnd,
}

/// Primal active-set iterations from a feasible `z` with working set `working`.
#[allow(clippy::too_many_arguments)]
fn active_set_loop(
    chol: &Cholesky<f64, Dyn>,
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    mut z: DVector<f64>,
    mut working: Vec<usize>,
    pivot: PivotRule,
    max_iter: usize,
) -> LoopResult {
    let m = b.len();
    let row_norms: Vec<f64> = (0..m).map(|i| a.row(i).norm()).collect();
    let mut in_w = vec![false; m];
    for &i in &working {
        in_w[i] = true;
    }
    let mut iterations = 0;
    loop {
        if iterations >= max_iter {
            return LoopResult {
                z,
                lambda_w: DVector::zeros(working.len()),
                working,
                iterations,
                end: LoopEnd::IterationLimit,
            };
        }
        iterations += 1;
        let Some((z_w, lam)) = eq_subproblem(chol, h, f, a, b, &working) else {
            return LoopResult {
                z,
                lambda_w: DVector::zeros(working.len()),
                working,
                iterations,
                end: LoopEnd::Singular,
            };
        };
        let step = &z_w - &z;
        let step_norm = if step.is_empty() { 0.0 } else { step.amax() };
        let zscale = 1.0 + if z.is_empty() { 0.0 } else { z.amax() };
        if step_norm <= 1e-13 * zscale {
            z = z_w;
            let lscale = 1.0 + if lam.is_empty() { 0.0 } else { lam.amax() };
            let leaving = match pivot {
                PivotRule::MostNegative => {
                    let mut best: Option<(usize, f64)> = None;
                    for (k, &l) in lam.iter().enumerate() {
                        if l < -DUAL_TOL * lscale {
                            let better = match best {
                                None => true,
                                Some((kb, lb)) => l < lb || (l == lb && working[k] < working[kb]),
                            };
                            if better {
                                best = Some((k, l));
                            }
                        }
                    }
                    best.map(|(k, _)| k)
                }
                PivotRule::Bland => lam
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l < -DUAL_TOL * lscale)
                    .min_by_key(|(k, _)| working[*k])
                    .map(|(k, _)| k),
            };
            match leaving {
                None => {
                    return LoopResult {
                        z,
                        lambda_w: lam,
                        working,
                        iterations,
                        end: LoopEnd::Optimal,
                    }
                }
                Some(k) => {
                    let i = working.remove(k);
                    in_w[i] = false;
                }
            }
            continue;
        }
        // Ratio test; strict `<` over increasing indices keeps the smallest index on ties.
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..m {
            if in_w[i] {
                continue;
            }
            let ap = a.row(i).transpose().dot(&step);
            if ap <= 1e-12 * row_norms[i] * step_norm {
                continue;
            }
            let gap = (b[i] - a.row(i).transpose().dot(&z)).max(0.0);
            let ratio = gap / ap;
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(i);
            }
        }
        match blocking {
            Some(i) => {
                z += alpha * step;
                // keep the membership list sorted for a canonical pivot order
                let pos = working.partition_point(|&w| w < i);
                working.insert(pos, i);
                in_w[i] = true;
            }
            None => z = z_w,
        }
    }
}

fn max_violation(a: &DMatrix<f64>, b: &DVector<f64>, z: &DVector<f64>) -> f64 {
    (a * z - b).iter().fold(0.0_f64, |acc, &v| acc.max(v))
}

/// Solves `p` with the primal active-set method.
///
/// Returns `Err` only for malformed problems; infeasibility and the iteration
/// guard are reported through [`QpSolution::status`].
pub fn solve_qp(p: &QpProblem, opts: &SolveOptions) -> Result<QpSolution, QpError> {
    p.validate()?;
    let (pn, norms) = p.row_normalized();
    let mut s = solve_normalized(&pn, opts)?;
    s.lambda.component_div_assign(&norms);
    if let Some(c) = s.certificate.as_mut() {
        c.component_div_assign(&norms);
        let total = c.sum();
        if total > 0.0 {
            *c /= total;
        }
    }
    s.slack = p.slack(&s.z);
    s.objective = p.objective(&s.z);
    Ok(s)
}

fn solve_normalized(p: &QpProblem, opts: &SolveOptions) -> Result<QpSolution, QpError> {
    let n = p.num_vars();
    let m = p.num_constraints();
    let chol = Cholesky::new(p.h.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let max_iter = opts.max_iterations.unwrap_or(50 * (m + n).max(1));
    let bscale = 1.0 + if m == 0 { 0.0 } else { p.b.amax() };

    let mut z0 = match &opts.warm_start {
        Some(w) if w.len() == n && w.iter().all(|v| v.is_finite()) => w.clone(),
        _ => DVector::zeros(n),
    };
    let mut iterations = 0;

    if m > 0 && max_violation(&p.a, &p.b, &z0) > 1e-12 * bscale {
        match phase_one(p, &z0, opts.pivot, max_iter) {
            PhaseOne::Feasible(z, it) => {
                z0 = z;
                iterations += it;
            }
            PhaseOne::Infeasible(z, cert, it) => {
                let slack = p.slack(&z);
                return Ok(QpSolution {
                    objective: p.objective(&z),
                    lambda: DVector::zeros(m),
                    z,
                    active_set: Vec::new(),
                    status: QpStatus::Infeasible,
                    slack,
                    iterations: iterations + it,
                    certificate: Some(cert),
                });
            }
            PhaseOne::IterationLimit(z, it) => {
                let slack = p.slack(&z);
                return Ok(QpSolution {
                    objective: p.objective(&z),
                    lambda: DVector::zeros(m),
                    z,
                    active_set: Vec::new(),
                    status: QpStatus::IterationLimit,
                    slack,
                    iterations: iterations + it,
                    certificate: None,
                });
            }
        }
    }

    let res = active_set_loop(&chol, &p.h, &p.f, &p.a, &p.b, z0, Vec::new(), opts.pivot, max_iter);
    iterations += res.iterations;
    let mut lambda = DVector::zeros(m);
    for (k, &i) in res.working.iter().enumerate() {
        lambda[i] = res.lambda_w[k];
    }
    let status = match res.end {
        LoopEnd::Optimal => QpStatus::Optimal,
        LoopEnd::IterationLimit | LoopEnd::Singular => QpStatus::IterationLimit,
    };
    let slack = p.slack(&res.z);
    Ok(QpSolution {
        objective: p.objective(&res.z),
        z: res.z,
        lambda,
        active_set: res.working,
        status,
        slack,
        iterations,
        certificate: None,
    })
}

enum PhaseOne {
    Feasible(DVector<f64>, usize),
    Infeasible(DVector<f64>, DVector<f64>, usize),
    IterationLimit(DVector<f64>, usize),
}

/// Elastic phase 1: minimize `1/2 z'Hz + F'z + 1/2 t^2 + M t` subject to
/// `A z - t <= b`, `t >= 0`, escalating `M` until the violation `t` vanishes.
fn phase_one(p: &QpProblem, z_start: &DVector<f64>, pivot: PivotRule, max_iter: usize) -> PhaseOne {
    let n = p.num_vars();
    let m = p.num_constraints();
    let mut he = DMatrix::zeros(n + 1, n + 1);
    he.view_mut((0, 0), (n, n)).copy_from(&p.h);
    he[(n, n)] = 1.0;
    let chol = match Cholesky::new(he.clone()) {
        Some(c) => c,
        None => return PhaseOne::IterationLimit(z_start.clone(), 0),
    };
    let mut ae = DMatrix::zeros(m + 1, n + 1);
    ae.view_mut((0, 0), (m, n)).copy_from(&p.a);
    for i in 0..m {
        ae[(i, n)] = -1.0;
    }
    ae[(m, n)] = -1.0;
    let mut be = DVector::zeros(m + 1);
    be.rows_mut(0, m).copy_from(&p.b);

    let scale = 1.0 + p.f.amax() + p.h.amax() * (1.0 + z_start.amax());
    let mut ze = DVector::zeros(n + 1);
    ze.rows_mut(0, n).copy_from(z_start);
    ze[n] = max_violation(&p.a, &p.b, z_start);
    let bscale = 1.0 + p.b.amax();

    let mut iterations = 0;
    let mut last_lambda = DVector::zeros(0);
    let mut last_working = Vec::new();
    for k in 0..5 {
        let penalty = scale * 10f64.powi(2 + 3 * k);
        let mut fe = DVector::zeros(n + 1);
        fe.rows_mut(0, n).copy_from(&p.f);
        fe[n] = penalty;
        let res = active_set_loop(&chol, &he, &fe, &ae, &be, ze, Vec::new(), pivot, max_iter);
        iterations += res.iterations;
        ze = res.z;
        match res.end {
            LoopEnd::Optimal => {}
            _ => return PhaseOne::IterationLimit(ze.rows(0, n).into_owned(), iterations),
        }
        let t = ze[n];
        if t <= 1e-10 * bscale {
            let z = ze.rows(0, n).into_owned();
            return PhaseOne::Feasible(z, iterations);
        }
        last_lambda = res.lambda_w;
        last_working = res.working;
    }
    // Normalized multipliers of the elastic rows approximate a Farkas ray.
    let mut cert = DVector::zeros(m);
    for (k, &i) in last_working.iter().enumerate() {
        if i < m {
            cert[i] = last_lambda[k].max(0.0);
        }
    }
    let total: f64 = cert.sum();
    if total > 0.0 {
        cert /= total;
    }
    PhaseOne::Infeasible(ze.rows(0, n).into_owned(), cert, iterations)
}

/// Exhaustive oracle: tries every subset of constraints as the active set.
///
/// For each subset with independent rows it solves the equality-constrained
/// KKT system and keeps primal-feasible candidates with non-negative
/// multipliers; the lowest objective wins (first subset on exact ties).
pub fn brute_force_solve(p: &QpProblem) -> Result<QpSolution, QpError> {
    p.validate()?;
    let m = p.num_constraints();
    if m > 16 {
        return Err(QpError::TooManyConstraints(m));
    }
    let chol = Cholesky::new(p.h.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let (pn, norms) = p.row_normalized();
    match enumerate_best(&chol, &pn.h, &pn.f, &pn.a, &pn.b, true) {
        Some((z, lambda, working, count)) => {
            let lambda = lambda.component_div(&norms);
            let slack = p.slack(&z);
            Ok(QpSolution {
                objective: p.objective(&z),
                z,
                lambda,
                active_set: working,
                status: QpStatus::Optimal,
                slack,
                iterations: count,
                certificate: None,
            })
        }
        None => {
            // Confirm emptiness with the projection problem over the same rows.
            let n = p.num_vars();
            let id = DMatrix::identity(n, n);
            let proj = Cholesky::new(id).expect("identity is positive definite");
            let confirm = enumerate_best(&proj, &DMatrix::identity(n, n), &DVector::zeros(n), &pn.a, &pn.b, false);
            let status = if confirm.is_none() {
                QpStatus::Infeasible
            } else {
                // Feasible set non-empty but no KKT point passed the filters:
                // a round-off artifact on badly conditioned data.
                QpStatus::IterationLimit
            };
            let z = DVector::zeros(n);
            let slack = p.slack(&z);
            Ok(QpSolution {
                objective: p.objective(&z),
                z,
                lambda: DVector::zeros(m),
                active_set: Vec::new(),
                status,
                slack,
                iterations: 1 << m,
                certificate: None,
            })
        }
    }
}

type Candidate = (DVector<f64>, DVector<f64>, Vec<usize>, usize);

fn enumerate_best(
    chol: &Cholesky<f64, Dyn>,
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    check_duals: bool,
) -> Option<Candidate> {
    let m = b.len();
    let n = f.len();
    let bscale = 1.0 + if m == 0 { 0.0 } else { b.amax() };
    let objective = |z: &DVector<f64>| 0.5 * z.dot(&(h * z)) + f.dot(z);
    let mut best: Option<(f64, Candidate)> = None;
    let mut working = Vec::with_capacity(m);
    for mask in 0u32..(1u32 << m) {
        working.clear();
        working.extend((0..m).filter(|i| mask & (1 << i) != 0));
        if working.len() > n {
            continue;
        }
        let Some((z, lw)) = eq_subproblem(chol, h, f, a, b, &working) else {
            continue;
        };
        if max_violation(a, b, &z) > 1e-9 * bscale {
            continue;
        }
        let lscale = 1.0 + if lw.is_empty() { 0.0 } else { lw.amax() };
        if check_duals && lw.iter().any(|&l| l < -1e-9 * lscale) {
            continue;
        }
        let obj = objective(&z);
        let better = match &best {
            None => true,
            Some((bo, _)) => obj < *bo - 1e-14 * (1.0 + bo.abs()),
        };
        if better {
            let mut lambda = DVector::zeros(m);
            for (k, &i) in working.iter().enumerate() {
                lambda[i] = lw[k];
            }
            best = Some((obj, (z, lambda, working.clone(), mask as usize)));
        }
    }
    best.map(|(_, c)| c)
}
