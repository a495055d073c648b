//! Control-affine systems, set-defining functions and the QP rows built from them.
//!
//! The decision vector is `z = (v, d1, d2)` with `v` the input.

use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

use crate::fxts::{pow_pos, FxtsGains};

pub type VecField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type InputMap = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("input bounds must satisfy lower < upper in every component")]
    BoundOrder,
    #[error("input bounds have lengths {0} and {1}")]
    BoundLength(usize, usize),
    #[error("composite set function needs at least one branch")]
    EmptyComposite,
}

/// `x' = f(x) + g(x) u (+ psi(x))`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    pub n: usize,
    pub m: usize,
    pub f: VecField,
    pub g: InputMap,
    /// Additive plant-only disturbance.
    pub disturbance: Option<VecField>,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("disturbance", &self.disturbance.is_some())
            .finish()
    }
}

impl ControlAffineSystem {
    pub fn new(n: usize, m: usize, f: VecField, g: InputMap) -> Self {
        Self { n, m, f, g, disturbance: None }
    }

    pub fn with_disturbance(mut self, psi: VecField) -> Self {
        self.disturbance = Some(psi);
        self
    }

    /// `x' = u` in `n` dimensions.
    pub fn single_integrator(n: usize) -> Self {
        Self::new(
            n,
            n,
            Arc::new(move |_| DVector::zeros(n)),
            Arc::new(move |_| DMatrix::identity(n, n)),
        )
    }

    /// Closed-loop vector field seen by the plant, disturbance included.
    pub fn plant_rate(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = (self.f)(x) + (self.g)(x) * u;
        if let Some(psi) = &self.disturbance {
            dx += psi(x);
        }
        dx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetKind {
    Goal,
    Safe,
}

#[derive(Clone)]
enum Repr {
    Smooth { h: ScalarField, grad: VecField },
    Max(Vec<SetFunction>),
}

/// The set `{x : h(x) <= 0}` with an analytic gradient of `h`.
///
/// Composites take the pointwise maximum of their branches; the gradient is
/// that of the first maximizing branch.
#[derive(Clone)]
pub struct SetFunction {
    pub name: String,
    pub kind: SetKind,
    repr: Repr,
}

impl fmt::Debug for SetFunction {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = fm.debug_struct("SetFunction");
        d.field("name", &self.name).field("kind", &self.kind);
        if let Repr::Max(b) = &self.repr {
            d.field("branches", &b.len());
        }
        d.finish()
    }
}

impl SetFunction {
    pub fn smooth(name: impl Into<String>, kind: SetKind, h: ScalarField, grad: VecField) -> Self {
        Self { name: name.into(), kind, repr: Repr::Smooth { h, grad } }
    }

    pub fn max(
        name: impl Into<String>,
        kind: SetKind,
        branches: Vec<SetFunction>,
    ) -> Result<Self, ModelError> {
        if branches.is_empty() {
            return Err(ModelError::EmptyComposite);
        }
        Ok(Self { name: name.into(), kind, repr: Repr::Max(branches) })
    }

    pub fn with_kind(mut self, kind: SetKind) -> Self {
        self.kind = kind;
        if let Repr::Max(bs) = &mut self.repr {
            for b in bs {
                b.kind = kind;
            }
        }
        self
    }

    pub fn is_composite(&self) -> bool {
        matches!(self.repr, Repr::Max(_))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.repr {
            Repr::Smooth { h, .. } => h(x),
            Repr::Max(bs) => bs.iter().map(|b| b.value(x)).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.repr {
            Repr::Smooth { grad, .. } => grad(x),
            Repr::Max(bs) => bs[self.argmax(x)].gradient(x),
        }
    }

    /// Index of the first maximizing top-level branch (0 for smooth functions).
    pub fn argmax(&self, x: &DVector<f64>) -> usize {
        match &self.repr {
            Repr::Smooth { .. } => 0,
            Repr::Max(bs) => {
                let mut best = 0;
                let mut best_v = f64::NEG_INFINITY;
                for (i, b) in bs.iter().enumerate() {
                    let v = b.value(x);
                    if v > best_v {
                        best = i;
                        best_v = v;
                    }
                }
                best
            }
        }
    }

    /// Smooth leaves in depth-first order.
    pub fn leaves(&self) -> Vec<&SetFunction> {
        match &self.repr {
            Repr::Smooth { .. } => vec![self],
            Repr::Max(bs) => bs.iter().flat_map(|b| b.leaves()).collect(),
        }
    }

    /// Leaf path of the active branch, for switch detection.
    fn active_leaf(&self, x: &DVector<f64>) -> Vec<usize> {
        match &self.repr {
            Repr::Smooth { .. } => Vec::new(),
            Repr::Max(bs) => {
                let i = self.argmax(x);
                let mut p = vec![i];
                p.extend(bs[i].active_leaf(x));
                p
            }
        }
    }
}

/// Component-wise input bounds `lower <= u <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBounds {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl InputBounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, ModelError> {
        if lower.len() != upper.len() {
            return Err(ModelError::BoundLength(lower.len(), upper.len()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(ModelError::BoundOrder);
        }
        Ok(Self { lower, upper })
    }

    pub fn symmetric(m: usize, limit: f64) -> Result<Self, ModelError> {
        Self::new(DVector::from_element(m, -limit), DVector::from_element(m, limit))
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// `max(|lower_i|, |upper_i|)` per channel.
    pub fn scales(&self) -> DVector<f64> {
        self.lower.zip_map(&self.upper, |l, u| l.abs().max(u.abs()))
    }
}

/// A single row `coeffs . z <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow {
    pub coeffs: DVector<f64>,
    pub rhs: f64,
}

impl ConstraintRow {
    pub fn lhs(&self, z: &DVector<f64>) -> f64 {
        self.coeffs.dot(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieDerivatives {
    pub lf: f64,
    pub lg: DVector<f64>,
}

/// `Lf h = grad h . f`, `Lg h = grad h' g`.
pub fn lie_derivatives(sys: &ControlAffineSystem, s: &SetFunction, x: &DVector<f64>) -> LieDerivatives {
    let grad = s.gradient(x);
    let lf = grad.dot(&(sys.f)(x));
    let lg = (sys.g)(x).tr_mul(&grad);
    LieDerivatives { lf, lg }
}

/// `Lg h v - h d1 <= -Lf h - a1 max(0,h)^g1 - a2 max(0,h)^g2`.
pub fn convergence_row(
    sys: &ControlAffineSystem,
    h_g: &SetFunction,
    x: &DVector<f64>,
    gains: &FxtsGains,
) -> ConstraintRow {
    let ld = lie_derivatives(sys, h_g, x);
    let h = h_g.value(x);
    let mut coeffs = DVector::zeros(sys.m + 2);
    coeffs.rows_mut(0, sys.m).copy_from(&ld.lg);
    coeffs[sys.m] = -h;
    let rhs = -ld.lf
        - gains.alpha1() * pow_pos(h, gains.gamma1())
        - gains.alpha2() * pow_pos(h, gains.gamma2());
    ConstraintRow { coeffs, rhs }
}

/// `Lg h v + h d2 <= -Lf h`.
pub fn safety_row(sys: &ControlAffineSystem, h_s: &SetFunction, x: &DVector<f64>) -> ConstraintRow {
    let ld = lie_derivatives(sys, h_s, x);
    let mut coeffs = DVector::zeros(sys.m + 2);
    coeffs.rows_mut(0, sys.m).copy_from(&ld.lg);
    coeffs[sys.m + 1] = h_s.value(x);
    ConstraintRow { coeffs, rhs: -ld.lf }
}

/// Rows `v_i <= upper_i` and `-v_i <= -lower_i`, interleaved per channel.
pub fn input_rows(bounds: &InputBounds) -> (DMatrix<f64>, DVector<f64>) {
    let m = bounds.dim();
    let mut a = DMatrix::zeros(2 * m, m + 2);
    let mut b = DVector::zeros(2 * m);
    for i in 0..m {
        a[(2 * i, i)] = 1.0;
        b[2 * i] = bounds.upper[i];
        a[(2 * i + 1, i)] = -1.0;
        b[2 * i + 1] = -bounds.lower[i];
    }
    (a, b)
}

/// Central-difference approximation of `grad h` at `x`.
pub fn central_difference(s: &SetFunction, x: &DVector<f64>, eps: f64) -> DVector<f64> {
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let x0 = xp[j];
        xp[j] = x0 + eps;
        let hp = s.value(&xp);
        xp[j] = x0 - eps;
        let hm = s.value(&xp);
        xp[j] = x0;
        g[j] = (hp - hm) / (2.0 * eps);
    }
    g
}

/// Maximum over `xs` of `|grad h - fd| / max(1, |grad h|)`.
///
/// Composite functions skip states whose active branch changes within `eps`.
pub fn finite_diff_gradient_check(s: &SetFunction, xs: &[DVector<f64>], eps: f64) -> f64 {
    assert!(eps > 0.0, "eps must be positive");
    let mut worst = 0.0_f64;
    for x in xs {
        if s.is_composite() && near_switch(s, x, eps) {
            continue;
        }
        let g = s.gradient(x);
        let fd = central_difference(s, x, eps);
        worst = worst.max((&g - fd).norm() / g.norm().max(1.0));
    }
    worst
}

fn near_switch(s: &SetFunction, x: &DVector<f64>, eps: f64) -> bool {
    let here = s.active_leaf(x);
    let mut xp = x.clone();
    for j in 0..x.len() {
        let x0 = xp[j];
        for d in [eps, -eps] {
            xp[j] = x0 + d;
            if s.active_leaf(&xp) != here {
                return true;
            }
        }
        xp[j] = x0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fxts::FxtsGains;

    fn sq_norm_minus(c: f64, kind: SetKind) -> SetFunction {
        SetFunction::smooth(
            "sq",
            kind,
            Arc::new(move |x| x.norm_squared() - c),
            Arc::new(|x| 2.0 * x),
        )
    }

    #[test]
    fn lie_derivatives_single_integrator() {
        let sys = ControlAffineSystem::single_integrator(2);
        let h = sq_norm_minus(1.0, SetKind::Goal);
        let ld = lie_derivatives(&sys, &h, &DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(ld.lf, 0.0);
        assert_eq!(ld.lg, DVector::from_vec(vec![2.0, 0.0]));

        let constant = SetFunction::smooth(
            "c",
            SetKind::Safe,
            Arc::new(|_| 3.0),
            Arc::new(|x| DVector::zeros(x.len())),
        );
        let ld = lie_derivatives(&sys, &constant, &DVector::from_vec(vec![0.3, -2.0]));
        assert_eq!(ld.lf, 0.0);
        assert_eq!(ld.lg, DVector::zeros(2));
    }

    #[test]
    fn safety_row_single_integrator() {
        let sys = ControlAffineSystem::single_integrator(2);
        let h = sq_norm_minus(4.0, SetKind::Safe);
        let row = safety_row(&sys, &h, &DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(row.coeffs, DVector::from_vec(vec![2.0, 0.0, 0.0, -3.0]));
        assert_eq!(row.rhs, 0.0);
    }

    #[test]
    fn convergence_row_power_terms() {
        let sys = ControlAffineSystem::single_integrator(1);
        let gains = FxtsGains::new(0.7, 1.3, 3.0).unwrap();
        let on_boundary = sq_norm_minus(1.0, SetKind::Goal);
        let row = convergence_row(&sys, &on_boundary, &DVector::from_element(1, 1.0), &gains);
        assert_eq!(row.coeffs[1], 0.0);
        assert_eq!(row.rhs, 0.0);
        let unit = sq_norm_minus(1.0, SetKind::Goal);
        let row = convergence_row(&sys, &unit, &DVector::from_element(1, 2f64.sqrt()), &gains);
        assert!((row.rhs + 2.0).abs() < 1e-12);
    }

    #[test]
    fn input_rows_layout() {
        let bounds = InputBounds::new(DVector::from_element(1, -1.0), DVector::from_element(1, 2.0)).unwrap();
        let (a, b) = input_rows(&bounds);
        assert_eq!(b, DVector::from_vec(vec![2.0, 1.0]));
        assert_eq!(a.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        assert_eq!(a.row(1).iter().copied().collect::<Vec<_>>(), vec![-1.0, 0.0, 0.0]);
        let sym = InputBounds::symmetric(2, 7.0).unwrap();
        assert_eq!(input_rows(&sym).1, DVector::from_element(4, 7.0));
        assert!(InputBounds::new(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)).is_err());
    }

    #[test]
    fn composite_gradient_ties_take_first_branch() {
        let a = SetFunction::smooth("a", SetKind::Safe, Arc::new(|x| x[0]), Arc::new(|_| DVector::from_vec(vec![1.0, 0.0])));
        let b = SetFunction::smooth("b", SetKind::Safe, Arc::new(|x| x[1]), Arc::new(|_| DVector::from_vec(vec![0.0, 1.0])));
        let h = SetFunction::max("ab", SetKind::Safe, vec![a, b]).unwrap();
        let x = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(h.argmax(&x), 0);
        assert_eq!(h.gradient(&x), DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(h.value(&DVector::from_vec(vec![0.1, 0.4])), 0.4);
        assert_eq!(h.leaves().len(), 2);
        assert!(SetFunction::max("none", SetKind::Safe, vec![]).is_err());
    }
}
