//! Fixed-time stability bounds.
//!
//! For `V' <= -a1 V^g1 - a2 V^g2 + d1 V` with `g1 = 1 + 1/mu`, `g2 = 1 - 1/mu`,
//! the substitution `z = V^(1/mu)` turns the inequality into
//! `z' <= -(a1 z^2 - d1 z + a2) / mu`, and every bound below is the integral
//! `mu * int_0^z0 dz / (a1 z^2 - d1 z + a2)` over the relevant range.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Default margin used in the local branch.
pub const DEFAULT_K: f64 = 0.9;
/// Hit threshold of the scalar oracle.
pub const HIT_THRESHOLD: f64 = 1e-9;

const DEGENERATE_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FxtsError {
    #[error("deadline must be positive and finite, got {0}")]
    Deadline(f64),
    #[error("mu must be greater than 1, got {0}")]
    Mu(f64),
    #[error("gains must be positive and finite, got ({0}, {1})")]
    Alpha(f64, f64),
}

/// Gains `(a1, a2)` and exponent parameter `mu`; the exponents are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FxtsGains {
    alpha1: f64,
    alpha2: f64,
    mu: f64,
}

impl FxtsGains {
    pub fn new(alpha1: f64, alpha2: f64, mu: f64) -> Result<Self, FxtsError> {
        if !(alpha1 > 0.0 && alpha2 > 0.0 && alpha1.is_finite() && alpha2.is_finite()) {
            return Err(FxtsError::Alpha(alpha1, alpha2));
        }
        if !(mu > 1.0 && mu.is_finite()) {
            return Err(FxtsError::Mu(mu));
        }
        Ok(Self { alpha1, alpha2, mu })
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }

    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma1(&self) -> f64 {
        1.0 + 1.0 / self.mu
    }

    pub fn gamma2(&self) -> f64 {
        1.0 - 1.0 / self.mu
    }

    /// `2 sqrt(a1 a2)`, the boundary between the global and local regimes.
    pub fn delta1_critical(&self) -> f64 {
        2.0 * (self.alpha1 * self.alpha2).sqrt()
    }

    /// Right-hand side of the scalar comparison system at `v >= 0`.
    pub fn vdot(&self, v: f64, delta1: f64) -> f64 {
        let v = v.max(0.0);
        -self.alpha1 * pow_pos(v, self.gamma1()) - self.alpha2 * pow_pos(v, self.gamma2())
            + delta1 * v
    }
}

/// `max(0, h)^g`, exactly zero for `h <= 0`.
pub fn pow_pos(h: f64, g: f64) -> f64 {
    if h <= 0.0 {
        0.0
    } else {
        (g * h.ln()).exp()
    }
}

/// Gains whose `d1 = 0` bound equals the deadline: `a1 = a2 = mu pi / (2 T)`.
pub fn alpha_from_deadline(t_ud: f64, mu: f64) -> Result<FxtsGains, FxtsError> {
    if !(t_ud > 0.0 && t_ud.is_finite()) {
        return Err(FxtsError::Deadline(t_ud));
    }
    if !(mu > 1.0 && mu.is_finite()) {
        return Err(FxtsError::Mu(mu));
    }
    let a = mu * PI / (2.0 * t_ud);
    FxtsGains::new(a, a, mu)
}

/// `1/(a(1-p)) + 1/(b(q-1))` for `V' <= -a V^p - b V^q`.
pub fn settling_time_bound_basic(a: f64, b: f64, p: f64, q: f64) -> f64 {
    1.0 / (a * (1.0 - p)) + 1.0 / (b * (q - 1.0))
}

fn is_degenerate(alpha1: f64, alpha2: f64, delta1: f64) -> bool {
    let four = 4.0 * alpha1 * alpha2;
    delta1 > 0.0 && (delta1 * delta1 - four).abs() <= DEGENERATE_RTOL * four
}

/// Roots `a <= b` of `a1 z^2 - d1 z + a2`, or `None` when they are complex.
pub fn gamma_roots(alpha1: f64, alpha2: f64, delta1: f64) -> Option<(f64, f64)> {
    if is_degenerate(alpha1, alpha2, delta1) {
        let r = (alpha2 / alpha1).sqrt();
        return Some((r, r));
    }
    let disc = delta1 * delta1 - 4.0 * alpha1 * alpha2;
    if disc < 0.0 {
        return None;
    }
    let q = 0.5 * (delta1 + delta1.signum() * disc.sqrt());
    let large = q / alpha1;
    let small = alpha2 / q;
    Some((small.min(large), small.max(large)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Regime {
    /// `d1 <= 0`: global, within `mu pi / (2 sqrt(a1 a2))`.
    GlobalWithinDeadline,
    /// `0 < d1 < 2 sqrt(a1 a2)`: global, with a longer fixed time.
    GlobalFixedTime,
    /// `d1 >= 2 sqrt(a1 a2)`: only from `V <= v_max`.
    LocalFixedTime { v_max: f64, k: f64 },
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::GlobalWithinDeadline => "global_within_deadline",
            Regime::GlobalFixedTime => "global_fixed_time",
            Regime::LocalFixedTime { .. } => "local_fixed_time",
        }
    }

    pub fn is_global(&self) -> bool {
        !matches!(self, Regime::LocalFixedTime { .. })
    }
}

/// Domain of the bound: everything, or `V <= v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Unbounded,
    Bounded(f64),
}

impl Domain {
    pub fn contains(&self, v: f64) -> bool {
        match self {
            Domain::Unbounded => true,
            Domain::Bounded(m) => v <= *m,
        }
    }
}

/// Regime of `d1`; values within the degenerate band count as local.
pub fn classify(gains: &FxtsGains, delta1: f64, k: f64) -> Regime {
    if delta1 <= 0.0 {
        return Regime::GlobalWithinDeadline;
    }
    if delta1 >= gains.delta1_critical() || is_degenerate(gains.alpha1, gains.alpha2, delta1) {
        let v_max = match domain_threshold(gains, delta1, k) {
            Domain::Bounded(v) => v,
            Domain::Unbounded => f64::INFINITY,
        };
        Regime::LocalFixedTime { v_max, k }
    } else {
        Regime::GlobalFixedTime
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettlingBound {
    pub t: f64,
    pub regime: Regime,
}

/// Settling-time bound for the given `d1`; `k` only matters in the local regime.
pub fn settling_time_bound(gains: &FxtsGains, delta1: f64, k: f64) -> SettlingBound {
    let (a1, a2, mu) = (gains.alpha1, gains.alpha2, gains.mu);
    let regime = classify(gains, delta1, k);
    let t = match regime {
        Regime::GlobalWithinDeadline => mu * PI / (2.0 * (a1 * a2).sqrt()),
        Regime::GlobalFixedTime => {
            let s = (4.0 * a1 * a2 - delta1 * delta1).sqrt();
            let k1 = s / (2.0 * a1);
            let k2 = -delta1 / s;
            mu / (a1 * k1) * (FRAC_PI_2 - k2.atan())
        }
        Regime::LocalFixedTime { .. } => {
            if is_degenerate(a1, a2, delta1) {
                mu / (a1 * a2).sqrt() * k / (1.0 - k)
            } else {
                let (a, b) = gamma_roots(a1, a2, delta1).expect("real roots in the local regime");
                mu / (a1 * (b - a)) * (((b - k * a) / (a * (1.0 - k))).ln() - (b / a).ln())
            }
        }
    };
    SettlingBound { t, regime }
}

/// Largest `V` from which the local bound applies: `(k V1)^mu`.
pub fn domain_threshold(gains: &FxtsGains, delta1: f64, k: f64) -> Domain {
    if delta1 < gains.delta1_critical() && !is_degenerate(gains.alpha1, gains.alpha2, delta1) {
        return Domain::Unbounded;
    }
    match gamma_roots(gains.alpha1, gains.alpha2, delta1) {
        Some((v1, _)) => Domain::Bounded((k * v1).powf(gains.mu)),
        None => Domain::Unbounded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum HitTime {
    At(f64),
    Never,
}

impl HitTime {
    pub fn time(&self) -> Option<f64> {
        match self {
            HitTime::At(t) => Some(*t),
            HitTime::Never => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRun {
    pub hit_time: HitTime,
    /// `(t, V)` samples, at most about two thousand.
    pub trajectory: Vec<(f64, f64)>,
}

/// Integrates the scalar comparison system with RK4 until `V <= 1e-9`.
pub fn simulate_scalar_v(gains: &FxtsGains, delta1: f64, v0: f64, dt: f64) -> ScalarRun {
    assert!(dt > 0.0, "dt must be positive");
    let v0 = v0.max(0.0);
    if v0 <= HIT_THRESHOLD {
        return ScalarRun { hit_time: HitTime::At(0.0), trajectory: vec![(0.0, v0)] };
    }
    if gains.vdot(v0, delta1) >= 0.0 {
        return ScalarRun { hit_time: HitTime::Never, trajectory: vec![(0.0, v0)] };
    }
    let bound = settling_time_bound(gains, delta1, DEFAULT_K);
    let horizon = if domain_threshold(gains, delta1, DEFAULT_K).contains(v0) {
        10.0 * bound.t
    } else {
        1e3
    };
    let steps = (horizon / dt).ceil() as u64;
    let stride = (steps / 2000).max(1);
    let f = |v: f64| gains.vdot(v, delta1);
    let mut v = v0;
    let mut trajectory = vec![(0.0, v0)];
    for i in 1..=steps {
        let k1 = f(v);
        let k2 = f(v + 0.5 * dt * k1);
        let k3 = f(v + 0.5 * dt * k2);
        let k4 = f(v + dt * k3);
        v = (v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0);
        let t = i as f64 * dt;
        if v <= HIT_THRESHOLD {
            trajectory.push((t, v));
            return ScalarRun { hit_time: HitTime::At(t), trajectory };
        }
        if i % stride == 0 {
            trajectory.push((t, v));
        }
    }
    ScalarRun { hit_time: HitTime::Never, trajectory }
}

/// Grid of `(a1, a2, mu, d1, V0)` points for checking bounds against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundGrid {
    pub alpha_pairs: Vec<(f64, f64)>,
    pub mus: Vec<f64>,
    pub delta1s: Vec<f64>,
    pub v0s: Vec<f64>,
    pub k: f64,
    pub dt: f64,
}

impl Default for BoundGrid {
    fn default() -> Self {
        Self {
            alpha_pairs: vec![(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)],
            mus: vec![2.0, 5.0],
            delta1s: vec![-1.0, 0.0, 1.0, 1.9, 2.5],
            v0s: vec![0.01, 1.0, 100.0],
            k: DEFAULT_K,
            dt: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub alpha1: f64,
    pub alpha2: f64,
    pub mu: f64,
    pub delta1: f64,
    pub v0: f64,
    pub bound: f64,
    pub regime: String,
    pub in_domain: bool,
    pub hit_time: Option<f64>,
    pub pass: bool,
}

/// Slack added to the analytic bound when comparing against the oracle.
pub const BOUND_SLACK: f64 = 1e-6;

impl BoundGrid {
    pub fn len(&self) -> usize {
        self.alpha_pairs.len() * self.mus.len() * self.delta1s.len() * self.v0s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &(a1, a2) in &self.alpha_pairs {
            for &mu in &self.mus {
                for &d1 in &self.delta1s {
                    for &v0 in &self.v0s {
                        out.push((a1, a2, mu, d1, v0));
                    }
                }
            }
        }
        out
    }

    /// Runs one grid point. Out-of-domain points always pass.
    pub fn check_point(&self, (a1, a2, mu, d1, v0): (f64, f64, f64, f64, f64)) -> Result<BoundCheck, FxtsError> {
        let gains = FxtsGains::new(a1, a2, mu)?;
        let bound = settling_time_bound(&gains, d1, self.k);
        let in_domain = domain_threshold(&gains, d1, self.k).contains(v0);
        let run = simulate_scalar_v(&gains, d1, v0, self.dt);
        let hit_time = run.hit_time.time();
        let pass = !in_domain || hit_time.is_some_and(|t| t <= bound.t + BOUND_SLACK);
        Ok(BoundCheck {
            alpha1: a1,
            alpha2: a2,
            mu,
            delta1: d1,
            v0,
            bound: bound.t,
            regime: bound.regime.label().to_string(),
            in_domain,
            hit_time,
            pass,
        })
    }
}
