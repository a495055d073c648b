//! Per-state QP assembly and solve.
//!
//! At a state `x` the controller solves
//!
//! ```text
//!     minimize    1/2 v' W v + 1/2 w1 d1^2 + 1/2 w2 d2^2 + q1 d1
//!     subject to  lower <= v <= upper
//!                 Lf hg + Lg hg v - d1 hg <= -a1 max(0,hg)^g1 - a2 max(0,hg)^g2
//!                 Lf hs + Lg hs v <= -d2 hs          (one row per safe branch)
//! ```
//!
//! With input scaling on, the QP variable is `v / s` with `s_i = max(|lower_i|, |upper_i|)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    convergence_row, input_rows, safety_row, ConstraintRow, ControlAffineSystem, InputBounds,
    SetFunction,
};
use crate::fxts::{
    alpha_from_deadline, classify, domain_threshold, settling_time_bound, FxtsError, FxtsGains,
    Regime,
};
use crate::qp::{
    check_strict_complementarity, solve_qp, PivotRule, QpError, QpProblem, QpStatus, SolveOptions,
};

/// Tolerance for the strict-complementarity flag.
pub const STRICT_CS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid synthesis parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Gains(#[from] FxtsError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("QP solve failed with status {0:?}")]
    SolverFailure(QpStatus),
}

/// How a composite set function enters the QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowMode {
    /// One row per smooth branch, all sharing the same slack.
    #[default]
    PerBranch,
    /// A single row for the active (maximizing) branch.
    MaxBranch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub t_ud: f64,
    pub mu: f64,
    pub w_u: Vec<f64>,
    pub w1: f64,
    pub w2: f64,
    pub q1: f64,
    pub k_margin: f64,
    pub goal_rows: RowMode,
    pub safety_rows: RowMode,
    /// Pins `d2 = 0` while any safe branch exceeds this value.
    pub delta2_freeze: Option<f64>,
    pub scale_inputs: bool,
}

impl SynthesisParams {
    pub fn new(t_ud: f64, mu: f64, m: usize) -> Self {
        Self {
            t_ud,
            mu,
            w_u: vec![1.0; m],
            w1: 1.0,
            w2: 1.0,
            q1: 100.0,
            k_margin: crate::fxts::DEFAULT_K,
            goal_rows: RowMode::PerBranch,
            safety_rows: RowMode::PerBranch,
            delta2_freeze: None,
            scale_inputs: true,
        }
    }

    pub fn gains(&self) -> Result<FxtsGains, FxtsError> {
        alpha_from_deadline(self.t_ud, self.mu)
    }

    pub fn validate(&self, m: usize) -> Result<(), ControllerError> {
        self.gains()?;
        if self.w_u.len() != m {
            return Err(ControllerError::Params(format!(
                "w_u has {} entries for {} inputs",
                self.w_u.len(),
                m
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.w_u.iter().all(|&w| positive(w)) || !positive(self.w1) || !positive(self.w2) {
            return Err(ControllerError::Params("weights must be positive".into()));
        }
        if !positive(self.q1) {
            return Err(ControllerError::Params("q1 must be positive".into()));
        }
        if !(self.k_margin > 0.0 && self.k_margin < 1.0) {
            return Err(ControllerError::Params("k_margin must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    pub u: DVector<f64>,
    pub delta1: f64,
    pub delta2: f64,
    pub regime: Regime,
    /// Instantaneous bound from `max(0, d1)`; `None` outside the bound's domain.
    pub predicted_t: Option<f64>,
    pub duals: DVector<f64>,
    pub active_set: Vec<usize>,
    pub strict_cs: bool,
    /// QP solution in solver variables, usable as the next warm start.
    pub z: DVector<f64>,
    pub iterations: usize,
}

/// Everything needed to build the QP at a state.
#[derive(Debug, Clone, Copy)]
pub struct Synthesizer<'a> {
    pub sys: &'a ControlAffineSystem,
    pub goal: &'a SetFunction,
    pub safes: &'a [SetFunction],
    pub bounds: &'a InputBounds,
    pub params: &'a SynthesisParams,
}

impl<'a> Synthesizer<'a> {
    pub fn new(
        sys: &'a ControlAffineSystem,
        goal: &'a SetFunction,
        safes: &'a [SetFunction],
        bounds: &'a InputBounds,
        params: &'a SynthesisParams,
    ) -> Self {
        Self { sys, goal, safes, bounds, params }
    }

    fn input_scales(&self) -> DVector<f64> {
        if self.params.scale_inputs {
            self.bounds.scales()
        } else {
            DVector::from_element(self.sys.m, 1.0)
        }
    }

    fn goal_rows(&self, x: &DVector<f64>, gains: &FxtsGains) -> Vec<ConstraintRow> {
        match self.params.goal_rows {
            RowMode::PerBranch => self
                .goal
                .leaves()
                .into_iter()
                .map(|leaf| convergence_row(self.sys, leaf, x, gains))
                .collect(),
            RowMode::MaxBranch => vec![convergence_row(self.sys, self.goal, x, gains)],
        }
    }

    fn safety_rows(&self, x: &DVector<f64>) -> Vec<ConstraintRow> {
        let mut rows = Vec::new();
        for s in self.safes {
            match self.params.safety_rows {
                RowMode::PerBranch => {
                    rows.extend(s.leaves().into_iter().map(|leaf| safety_row(self.sys, leaf, x)))
                }
                RowMode::MaxBranch => rows.push(safety_row(self.sys, s, x)),
            }
        }
        rows
    }

    fn freeze_active(&self, x: &DVector<f64>) -> bool {
        match self.params.delta2_freeze {
            Some(threshold) => self
                .safes
                .iter()
                .flat_map(|s| s.leaves())
                .any(|leaf| leaf.value(x) > threshold),
            None => false,
        }
    }

    /// Builds the QP at `x` (in solver variables; see the module docs).
    pub fn assemble(&self, x: &DVector<f64>) -> Result<QpProblem, ControllerError> {
        let m = self.sys.m;
        self.params.validate(m)?;
        let gains = self.params.gains()?;
        let nz = m + 2;
        let scales = self.input_scales();

        let mut h = DMatrix::zeros(nz, nz);
        for i in 0..m {
            h[(i, i)] = self.params.w_u[i];
        }
        h[(m, m)] = self.params.w1;
        h[(m + 1, m + 1)] = self.params.w2;
        let mut f = DVector::zeros(nz);
        f[m] = self.params.q1;

        let (au, bu) = input_rows(self.bounds);
        let mut rows: Vec<ConstraintRow> = (0..au.nrows())
            .map(|i| ConstraintRow { coeffs: au.row(i).transpose(), rhs: bu[i] })
            .collect();
        rows.extend(self.goal_rows(x, &gains));
        rows.extend(self.safety_rows(x));
        if self.freeze_active(x) {
            let mut up = DVector::zeros(nz);
            up[m + 1] = 1.0;
            rows.push(ConstraintRow { coeffs: up.clone(), rhs: 0.0 });
            rows.push(ConstraintRow { coeffs: -up, rhs: 0.0 });
        }

        let mut a = DMatrix::zeros(rows.len(), nz);
        let mut b = DVector::zeros(rows.len());
        for (r, row) in rows.iter().enumerate() {
            for j in 0..nz {
                let s = if j < m { scales[j] } else { 1.0 };
                a[(r, j)] = row.coeffs[j] * s;
            }
            b[r] = row.rhs;
        }
        Ok(QpProblem::new(h, f, a, b)?)
    }

    /// Solves the QP at `x`. Non-optimal solves are errors; an iteration-limit
    /// result is retried once with Bland's rule first.
    pub fn synthesize(
        &self,
        x: &DVector<f64>,
        warm_start: Option<&DVector<f64>>,
    ) -> Result<ControlDecision, ControllerError> {
        let p = self.assemble(x)?;
        let m = self.sys.m;
        let mut opts = SolveOptions { warm_start: warm_start.cloned(), ..Default::default() };
        let mut sol = solve_qp(&p, &opts)?;
        if sol.status == QpStatus::IterationLimit {
            opts.pivot = PivotRule::Bland;
            sol = solve_qp(&p, &opts)?;
        }
        if sol.status != QpStatus::Optimal {
            return Err(ControllerError::SolverFailure(sol.status));
        }
        let scales = self.input_scales();
        // The solver meets the bound rows to ~1e-8 relative; unscaling can
        // land a few ulps outside, so project back.
        let mut u = sol.z.rows(0, m).component_mul(&scales);
        for i in 0..m {
            u[i] = u[i].clamp(self.bounds.lower()[i], self.bounds.upper()[i]);
        }
        let delta1 = sol.z[m];
        let delta2 = sol.z[m + 1];
        let gains = self.params.gains()?;
        let k = self.params.k_margin;
        let regime = classify(&gains, delta1, k);
        let d1 = delta1.max(0.0);
        let predicted_t = if domain_threshold(&gains, d1, k).contains(self.goal.value(x).max(0.0)) {
            Some(settling_time_bound(&gains, d1, k).t)
        } else {
            None
        };
        let strict_cs = check_strict_complementarity(&sol, STRICT_CS_TOL);
        Ok(ControlDecision {
            u,
            delta1,
            delta2,
            regime,
            predicted_t,
            duals: sol.lambda,
            active_set: sol.active_set,
            strict_cs,
            z: sol.z,
            iterations: sol.iterations,
        })
    }

    /// Difference quotients `|u(x') - u(x)| / |x' - x|` over random points on
    /// the sphere of the given radius around `x`.
    pub fn continuity_probe(
        &self,
        x: &DVector<f64>,
        radius: f64,
        n_samples: usize,
        seed: u64,
    ) -> Result<ContinuityReport, ControllerError> {
        let base = self.synthesize(x, None)?;
        let mut report = ContinuityReport {
            max_quotient: 0.0,
            quotients: Vec::with_capacity(n_samples),
            non_strict_samples: usize::from(!base.strict_cs),
        };
        if radius == 0.0 {
            report.quotients = vec![0.0; n_samples];
            return Ok(report);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n_samples {
            let mut d = DVector::from_fn(x.len(), |_, _| rng.random::<f64>() - 0.5);
            if d.norm() == 0.0 {
                d[0] = 1.0;
            }
            d *= radius / d.norm();
            let xp = x + &d;
            let dec = self.synthesize(&xp, None)?;
            if !dec.strict_cs {
                report.non_strict_samples += 1;
            }
            let q = (&dec.u - &base.u).norm() / d.norm();
            report.max_quotient = report.max_quotient.max(q);
            report.quotients.push(q);
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub max_quotient: f64,
    pub quotients: Vec<f64>,
    /// Number of evaluated states (base included) without strict complementarity.
    pub non_strict_samples: usize,
}
