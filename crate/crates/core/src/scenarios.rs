//! Reference scenarios: adaptive cruise control, a two-robot visiting
//! schedule, and small synthetic systems.

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

use crate::constraints::{ControlAffineSystem, InputBounds, SetFunction, SetKind};
use crate::controller::SynthesisParams;
use crate::simulator::{self, Phase, PhaseSchedule, SeparationSpec, SimError, Trace};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("invalid value for {field:?}: {message}")]
    InvalidValue { field: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// A ready-to-run closed-loop setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub sys: ControlAffineSystem,
    pub schedule: PhaseSchedule,
    pub bounds: InputBounds,
    pub params: SynthesisParams,
    pub x0: DVector<f64>,
    pub dt: f64,
    pub separation: Option<SeparationSpec>,
    /// Lower/upper corners of a box of representative states.
    pub state_box: (Vec<f64>, Vec<f64>),
}

impl Scenario {
    pub fn run(&self) -> Result<Trace, SimError> {
        self.run_with_dt(self.dt)
    }

    pub fn run_with_dt(&self, dt: f64) -> Result<Trace, SimError> {
        simulator::run(&self.name, &self.sys, &self.schedule, &self.bounds, &self.params, &self.x0, dt)
    }

    /// Every distinct set function used by the scenario (goals, extras, globals).
    pub fn set_functions(&self) -> Vec<SetFunction> {
        let mut out: Vec<SetFunction> = Vec::new();
        let mut push = |s: &SetFunction| {
            if !out.iter().any(|o| o.name == s.name) {
                out.push(s.clone());
            }
        };
        for p in &self.schedule.phases {
            push(&p.goal);
            for s in &p.safe_extra {
                push(s);
            }
        }
        for s in &self.schedule.global_safes {
            push(s);
        }
        out
    }
}

/// Scenario selector as written on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioId {
    Acc,
    TwoRobot,
    Synthetic(SyntheticId),
}

impl FromStr for ScenarioId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "acc" => Ok(ScenarioId::Acc),
            "two-robot" => Ok(ScenarioId::TwoRobot),
            _ => match s.strip_prefix("synthetic:") {
                Some(id) => Ok(ScenarioId::Synthetic(id.parse()?)),
                None => Err(ConfigError::UnknownScenario(s.to_string())),
            },
        }
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioId::Acc => write!(f, "acc"),
            ScenarioId::TwoRobot => write!(f, "two-robot"),
            ScenarioId::Synthetic(id) => write!(f, "synthetic:{}", id.as_str()),
        }
    }
}

/// Scenario configuration with its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioConfig {
    Acc(AccConfig),
    TwoRobot(TwoRobotConfig),
    Synthetic(SyntheticConfig),
}

impl ScenarioConfig {
    pub fn default_for(id: &ScenarioId) -> Self {
        match id {
            ScenarioId::Acc => ScenarioConfig::Acc(AccConfig::default()),
            ScenarioId::TwoRobot => ScenarioConfig::TwoRobot(TwoRobotConfig::default()),
            ScenarioId::Synthetic(s) => ScenarioConfig::Synthetic(SyntheticConfig::new(*s)),
        }
    }

    /// Sets one field from its textual value (parsed as JSON, else as a string).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self {
            ScenarioConfig::Acc(c) => set_field(c, key, value),
            ScenarioConfig::TwoRobot(c) => set_field(c, key, value),
            ScenarioConfig::Synthetic(c) => set_field(c, key, value),
        }
    }

    /// Applies every entry of a JSON object as an override.
    pub fn merge_json(&mut self, obj: &serde_json::Map<String, serde_json::Value>) -> Result<(), ConfigError> {
        for (k, v) in obj {
            let text = v.to_string();
            self.set(k, &text)?;
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        match self {
            ScenarioConfig::Acc(c) => c.dt,
            ScenarioConfig::TwoRobot(c) => c.dt,
            ScenarioConfig::Synthetic(c) => c.dt,
        }
    }

    pub fn build(&self) -> Result<Scenario, ConfigError> {
        match self {
            ScenarioConfig::Acc(c) => acc_scenario(c),
            ScenarioConfig::TwoRobot(c) => two_robot_scenario(c),
            ScenarioConfig::Synthetic(c) => synthetic_scenario(c),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configs serialize")
    }
}

fn set_field<T: Serialize + DeserializeOwned>(cfg: &mut T, key: &str, value: &str) -> Result<(), ConfigError> {
    let mut json = serde_json::to_value(&*cfg).expect("configs serialize");
    let obj = json.as_object_mut().expect("configs are objects");
    if !obj.contains_key(key) {
        return Err(ConfigError::UnknownField(key.to_string()));
    }
    let parsed = serde_json::from_str::<serde_json::Value>(value)
        .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    obj.insert(key.to_string(), parsed);
    *cfg = serde_json::from_value(json).map_err(|e| ConfigError::InvalidValue {
        field: key.to_string(),
        message: e.to_string(),
    })?;
    Ok(())
}

fn ensure(cond: bool, msg: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg.to_string()))
    }
}

/// Adaptive cruise control: state `(v_f, v_l, D)`, input wheel force.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccConfig {
    pub mass: f64,
    pub grav: f64,
    pub v_d: f64,
    pub v_l0: f64,
    pub d0: f64,
    pub v_f0: f64,
    pub f0: f64,
    pub f1: f64,
    pub f2: f64,
    /// Lead acceleration envelope as a fraction of `grav`.
    pub a_l: f64,
    /// Constant lead acceleration, clipped to the envelope.
    pub a_lead: f64,
    pub tau_d: f64,
    pub t_ud: f64,
    pub mu: f64,
    pub d_delta: f64,
    /// Pin `d2` to zero above `freeze_threshold`. Always on when `d_delta > 0`.
    pub freeze: bool,
    pub freeze_threshold: f64,
    /// Goal counts as reached once `(v_f - v_d)^2` is at most this.
    pub reach_tolerance: f64,
    pub horizon: f64,
    pub dt: f64,
    pub w_u: f64,
    pub w1: f64,
    pub w2: f64,
    /// Replaces `w2` while the freeze rule is active. Braking has to start well
    /// before the frozen band or the QP turns infeasible inside it.
    pub w2_freeze: f64,
    pub q1: f64,
    pub k_margin: f64,
}

impl Default for AccConfig {
    fn default() -> Self {
        Self {
            mass: 1650.0,
            grav: 9.81,
            v_d: 22.0,
            v_l0: 10.0,
            d0: 150.0,
            v_f0: 18.0,
            f0: 0.1,
            f1: 5.0,
            f2: 0.25,
            a_l: 0.3,
            a_lead: 0.0,
            tau_d: 1.8,
            t_ud: 10.0,
            mu: 5.0,
            d_delta: 0.0,
            freeze: false,
            freeze_threshold: -20.0,
            reach_tolerance: 0.25,
            horizon: 10.0,
            dt: 1e-2,
            w_u: 1.0,
            w1: 1.0,
            w2: 3.0e4,
            w2_freeze: 1.0e6,
            q1: 100.0,
            k_margin: crate::fxts::DEFAULT_K,
        }
    }
}

impl AccConfig {
    /// `0.25 M g`.
    pub fn u_max(&self) -> f64 {
        0.25 * self.mass * self.grav
    }

    /// Rolling and aerodynamic resistance `f0 + f1 v + f2 v^2`.
    pub fn drag(&self, v: f64) -> f64 {
        self.f0 + self.f1 * v + self.f2 * v * v
    }

    /// Whether the `d2` freeze rule is active.
    pub fn freezes(&self) -> bool {
        self.freeze || self.d_delta > 0.0
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let pos = [self.mass, self.grav, self.v_d, self.tau_d, self.t_ud, self.dt, self.horizon, self.w_u, self.w1, self.w2, self.w2_freeze, self.q1];
        ensure(pos.iter().all(|v| *v > 0.0 && v.is_finite()), "masses, speeds, times and weights must be positive")?;
        ensure(self.mu > 1.0, "mu must exceed 1")?;
        ensure(self.d_delta >= 0.0, "d_delta must be non-negative")?;
        ensure(self.k_margin > 0.0 && self.k_margin < 1.0, "k_margin must lie in (0, 1)")?;
        ensure(self.reach_tolerance >= 0.0, "reach_tolerance must be non-negative")?;
        ensure(self.f0 >= 0.0 && self.f1 >= 0.0 && self.f2 >= 0.0, "drag coefficients must be non-negative")
    }

    pub fn goal(&self) -> SetFunction {
        let v_d = self.v_d;
        SetFunction::smooth(
            "acc_speed",
            SetKind::Goal,
            Arc::new(move |x: &DVector<f64>| (x[0] - v_d).powi(2)),
            Arc::new(move |x: &DVector<f64>| DVector::from_vec(vec![2.0 * (x[0] - v_d), 0.0, 0.0])),
        )
    }

    pub fn headway(&self) -> SetFunction {
        let tau = self.tau_d;
        SetFunction::smooth(
            "acc_headway",
            SetKind::Safe,
            Arc::new(move |x: &DVector<f64>| tau * x[0] - x[2]),
            Arc::new(move |_: &DVector<f64>| DVector::from_vec(vec![tau, 0.0, -1.0])),
        )
    }

    pub fn system(&self) -> ControlAffineSystem {
        let c = self.clone();
        let a_lead = self.a_lead.clamp(-self.a_l * self.grav, self.a_l * self.grav);
        let m = self.mass;
        let mut sys = ControlAffineSystem::new(
            3,
            1,
            Arc::new(move |x: &DVector<f64>| {
                DVector::from_vec(vec![-c.drag(x[0]) / c.mass, a_lead, x[1] - x[0]])
            }),
            Arc::new(move |_| DMatrix::from_column_slice(3, 1, &[1.0 / m, 0.0, 0.0])),
        );
        if self.d_delta > 0.0 {
            let (d, v_d) = (self.d_delta, self.v_d);
            sys = sys.with_disturbance(Arc::new(move |x: &DVector<f64>| {
                DVector::from_vec(vec![d / m * (x[0] - v_d).abs(), 0.0, 0.0])
            }));
        }
        sys
    }
}

pub fn acc_scenario(cfg: &AccConfig) -> Result<Scenario, ConfigError> {
    cfg.validate()?;
    let mut params = SynthesisParams::new(cfg.t_ud, cfg.mu, 1);
    params.w_u = vec![cfg.w_u];
    params.w1 = cfg.w1;
    params.w2 = cfg.w2;
    params.q1 = cfg.q1;
    params.k_margin = cfg.k_margin;
    if cfg.freezes() {
        params.delta2_freeze = Some(cfg.freeze_threshold);
        params.w2 = cfg.w2_freeze;
    }
    let u_max = cfg.u_max();
    Ok(Scenario {
        name: "acc".into(),
        sys: cfg.system(),
        schedule: PhaseSchedule {
            phases: vec![Phase::new(cfg.goal(), cfg.t_ud).with_reach_tolerance(cfg.reach_tolerance)],
            global_safes: vec![cfg.headway()],
            horizon: Some(cfg.horizon),
        },
        bounds: InputBounds::symmetric(1, u_max).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        params,
        x0: DVector::from_vec(vec![cfg.v_f0, cfg.v_l0, cfg.d0]),
        dt: cfg.dt,
        separation: None,
        state_box: (vec![10.0, 5.0, 20.0], vec![30.0, 20.0, 200.0]),
    })
}

/// One run per disturbance gain, everything else from `cfg`.
pub fn acc_disturbance_sweep(cfg: &AccConfig, d_deltas: &[f64]) -> Result<Vec<Trace>, SimError> {
    d_deltas
        .iter()
        .map(|&d| {
            let c = AccConfig { d_delta: d, ..cfg.clone() };
            let s = acc_scenario(&c).map_err(|e| SimError::Setup(e.to_string()))?;
            s.run()
        })
        .collect()
}

fn norm_or_zero_grad(v: &DVector<f64>, scale: &[f64]) -> (f64, DVector<f64>) {
    // weighted norm sqrt(sum (v_i / s_i)^2) and its gradient
    let n = v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>().sqrt();
    let g = if n > 0.0 {
        DVector::from_iterator(v.len(), v.iter().zip(scale).map(|(a, s)| a / (s * s * n)))
    } else {
        DVector::zeros(v.len())
    };
    (n, g)
}

/// `|p_agent - c|_P - r` on the agent's position block of a stacked state.
#[allow(clippy::too_many_arguments)]
fn agent_norm_set(
    name: String,
    kind: SetKind,
    n: usize,
    offset: usize,
    center: [f64; 2],
    axes: [f64; 2],
    radius: f64,
    outside: bool,
) -> SetFunction {
    let value = move |x: &DVector<f64>| {
        let d = DVector::from_vec(vec![x[offset] - center[0], x[offset + 1] - center[1]]);
        norm_or_zero_grad(&d, &axes)
    };
    let sign = if outside { -1.0 } else { 1.0 };
    SetFunction::smooth(
        name,
        kind,
        Arc::new(move |x: &DVector<f64>| sign * (value(x).0 - radius)),
        Arc::new(move |x: &DVector<f64>| {
            let (_, g) = value(x);
            let mut full = DVector::zeros(n);
            full[offset] = sign * g[0];
            full[offset + 1] = sign * g[1];
            full
        }),
    )
}

/// Waypoint set of the two-robot schedule: a circle or an axis-aligned ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub center: [f64; 2],
    pub axes: [f64; 2],
}

impl Waypoint {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let d = [(p[0] - self.center[0]) / self.axes[0], (p[1] - self.center[1]) / self.axes[1]];
        (d[0] * d[0] + d[1] * d[1]).sqrt() <= 1.0
    }
}

/// The eight waypoint sets, indexed 1..=8 as `WAYPOINTS[i - 1]`.
pub const WAYPOINTS: [Waypoint; 8] = [
    Waypoint { center: [-1.5, 1.5], axes: [0.5, 0.5] },
    Waypoint { center: [0.0, 1.5], axes: [1.2, 0.5] },
    Waypoint { center: [1.5, 1.5], axes: [0.5, 0.5] },
    Waypoint { center: [1.5, 0.0], axes: [0.5, 1.2] },
    Waypoint { center: [1.5, -1.5], axes: [0.5, 0.5] },
    Waypoint { center: [0.0, -1.5], axes: [1.2, 0.5] },
    Waypoint { center: [-1.5, -1.5], axes: [0.5, 0.5] },
    Waypoint { center: [-1.5, 0.0], axes: [0.5, 1.2] },
];

/// Visiting order of agent 1 and agent 2 (1-based waypoint indices).
pub const AGENT_ROUTES: [[usize; 8]; 2] = [[2, 3, 4, 5, 6, 7, 8, 1], [4, 3, 2, 1, 8, 7, 6, 5]];
/// Waypoint each agent starts in.
pub const AGENT_STARTS: [usize; 2] = [1, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoRobotConfig {
    pub d_m: f64,
    pub component_bound: f64,
    pub box_half_width: f64,
    pub inner_radius: f64,
    pub mu: f64,
    pub phase_budget: f64,
    pub t_ud: f64,
    pub x1_0: [f64; 2],
    pub x2_0: [f64; 2],
    /// Builds the stacked state with agent 2 first.
    pub swap_labels: bool,
    pub dt: f64,
    /// Input weights of agent 1 and agent 2.
    pub agent_weights: [f64; 2],
    pub w1: f64,
    pub w2: f64,
    pub q1: f64,
    pub k_margin: f64,
}

impl Default for TwoRobotConfig {
    fn default() -> Self {
        Self {
            d_m: 0.1,
            component_bound: 7.0,
            box_half_width: 2.0,
            inner_radius: 1.5,
            mu: 5.0,
            phase_budget: 1.0,
            t_ud: 1.0,
            x1_0: [-1.5, 1.5],
            x2_0: [1.5, -1.5],
            swap_labels: false,
            dt: 1e-3,
            agent_weights: [1.0, 1.0],
            w1: 1.0,
            w2: 1.0,
            q1: 100.0,
            k_margin: crate::fxts::DEFAULT_K,
        }
    }
}

impl TwoRobotConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let pos = [self.d_m, self.component_bound, self.box_half_width, self.inner_radius, self.phase_budget, self.t_ud, self.dt, self.w1, self.w2, self.q1];
        ensure(pos.iter().all(|v| *v > 0.0 && v.is_finite()), "distances, bounds, times and weights must be positive")?;
        ensure(self.agent_weights.iter().all(|w| *w > 0.0), "agent weights must be positive")?;
        ensure(self.mu > 1.0, "mu must exceed 1")?;
        ensure(self.k_margin > 0.0 && self.k_margin < 1.0, "k_margin must lie in (0, 1)")
    }

    /// State offset of agent `a` (0 or 1).
    pub fn offset(&self, agent: usize) -> usize {
        if self.swap_labels {
            2 * (1 - agent)
        } else {
            2 * agent
        }
    }

    fn waypoint_set(&self, agent: usize, wp: usize, kind: SetKind) -> SetFunction {
        let w = WAYPOINTS[wp - 1];
        let tag = if kind == SetKind::Goal { "goal" } else { "stay" };
        agent_norm_set(format!("a{}_{}_s{}", agent + 1, tag, wp), kind, 4, self.offset(agent), w.center, w.axes, 1.0, false)
    }

    fn global_safes(&self) -> Result<Vec<SetFunction>, ConfigError> {
        let mut out = Vec::new();
        let b = self.box_half_width;
        for agent in 0..2 {
            let o = self.offset(agent);
            let mut sides = Vec::new();
            for (axis, label) in [(0, "x"), (1, "y")] {
                for sign in [1.0, -1.0] {
                    let idx = o + axis;
                    let s = if sign > 0.0 { "+" } else { "-" };
                    sides.push(SetFunction::smooth(
                        format!("a{}_box_{s}{label}", agent + 1),
                        SetKind::Safe,
                        Arc::new(move |x: &DVector<f64>| sign * x[idx] - b),
                        Arc::new(move |_: &DVector<f64>| {
                            let mut g = DVector::zeros(4);
                            g[idx] = sign;
                            g
                        }),
                    ));
                }
            }
            out.push(
                SetFunction::max(format!("a{}_box", agent + 1), SetKind::Safe, sides)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            );
            out.push(agent_norm_set(
                format!("a{}_inner", agent + 1),
                SetKind::Safe,
                4,
                o,
                [0.0, 0.0],
                [1.0, 1.0],
                self.inner_radius,
                true,
            ));
        }
        let d_m = self.d_m;
        out.push(SetFunction::smooth(
            "separation",
            SetKind::Safe,
            Arc::new(move |x: &DVector<f64>| d_m - ((x[0] - x[2]).powi(2) + (x[1] - x[3]).powi(2)).sqrt()),
            Arc::new(move |x: &DVector<f64>| {
                let d = ((x[0] - x[2]).powi(2) + (x[1] - x[3]).powi(2)).sqrt();
                if d == 0.0 {
                    return DVector::zeros(4);
                }
                let (gx, gy) = (-(x[0] - x[2]) / d, -(x[1] - x[3]) / d);
                DVector::from_vec(vec![gx, gy, -gx, -gy])
            }),
        ));
        Ok(out)
    }

    /// Goal of phase `i` for both agents, with the stay-in sets of the previous waypoints.
    fn phase(&self, i: usize) -> Result<Phase, ConfigError> {
        let mut goals = Vec::new();
        let mut stays = Vec::new();
        for agent in 0..2 {
            let route = AGENT_ROUTES[agent];
            let prev = if i == 0 { AGENT_STARTS[agent] } else { route[i - 1] };
            goals.push(self.waypoint_set(agent, route[i], SetKind::Goal));
            stays.push(self.waypoint_set(agent, prev, SetKind::Safe));
        }
        let goal = SetFunction::max(format!("phase{i}_goal"), SetKind::Goal, goals)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Phase::new(goal, self.phase_budget).with_safe_extra(stays))
    }
}

pub fn two_robot_scenario(cfg: &TwoRobotConfig) -> Result<Scenario, ConfigError> {
    cfg.validate()?;
    let phases = (0..8).map(|i| cfg.phase(i)).collect::<Result<Vec<_>, _>>()?;
    let mut params = SynthesisParams::new(cfg.t_ud, cfg.mu, 4);
    let mut x0 = DVector::zeros(4);
    for agent in 0..2 {
        let o = cfg.offset(agent);
        let p = if agent == 0 { cfg.x1_0 } else { cfg.x2_0 };
        x0[o] = p[0];
        x0[o + 1] = p[1];
        params.w_u[o] = cfg.agent_weights[agent];
        params.w_u[o + 1] = cfg.agent_weights[agent];
    }
    params.w1 = cfg.w1;
    params.w2 = cfg.w2;
    params.q1 = cfg.q1;
    params.k_margin = cfg.k_margin;
    let b = cfg.box_half_width;
    Ok(Scenario {
        name: "two-robot".into(),
        sys: ControlAffineSystem::single_integrator(4),
        schedule: PhaseSchedule { phases, global_safes: cfg.global_safes()?, horizon: None },
        bounds: InputBounds::symmetric(4, cfg.component_bound).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        params,
        x0,
        dt: cfg.dt,
        separation: Some(SeparationSpec { first: 0..2, second: 2..4 }),
        state_box: (vec![-b; 4], vec![b; 4]),
    })
}

/// Small systems where a safe control is known to exist by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticId {
    /// `x' = u` on the line, goal `x^2 <= eps^2`.
    Integrator1d,
    /// `x' = u` in the plane, goal behind a disk obstacle.
    Integrator2dObstacle,
    /// Nonlinear drift with an everywhere-invertible input matrix.
    FullyActuated2d,
}

impl SyntheticId {
    pub const ALL: [SyntheticId; 3] =
        [SyntheticId::Integrator1d, SyntheticId::Integrator2dObstacle, SyntheticId::FullyActuated2d];

    pub fn as_str(&self) -> &'static str {
        match self {
            SyntheticId::Integrator1d => "integrator-1d",
            SyntheticId::Integrator2dObstacle => "integrator-2d-obstacle",
            SyntheticId::FullyActuated2d => "fully-actuated-2d",
        }
    }
}

impl FromStr for SyntheticId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SyntheticId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownScenario(format!("synthetic:{s}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub id: SyntheticId,
    pub t_ud: f64,
    pub mu: f64,
    pub input_bound: f64,
    pub goal_radius: f64,
    pub x0: Vec<f64>,
    /// Goal counts as reached once `h_g` is at most this. Straight Euler steps
    /// along a curved goal boundary add O(dt^2) to `h_g`, so exact zero may
    /// never be hit.
    pub reach_tolerance: f64,
    pub dt: f64,
}

impl SyntheticConfig {
    pub fn new(id: SyntheticId) -> Self {
        let (x0, input_bound, t_ud) = match id {
            SyntheticId::Integrator1d => (vec![2.0], 10.0, 2.0),
            SyntheticId::Integrator2dObstacle => (vec![-2.0, 0.3], 5.0, 3.0),
            SyntheticId::FullyActuated2d => (vec![-1.5, 0.5], 20.0, 2.0),
        };
        Self { id, t_ud, mu: 5.0, input_bound, goal_radius: 0.1, x0, reach_tolerance: 1e-6, dt: 1e-3 }
    }
}

fn ball(name: &str, kind: SetKind, center: Vec<f64>, r: f64) -> SetFunction {
    let c1 = DVector::from_vec(center);
    let c2 = c1.clone();
    SetFunction::smooth(
        name,
        kind,
        Arc::new(move |x: &DVector<f64>| (x - &c1).norm_squared() - r * r),
        Arc::new(move |x: &DVector<f64>| 2.0 * (x - &c2)),
    )
}

pub fn synthetic_scenario(cfg: &SyntheticConfig) -> Result<Scenario, ConfigError> {
    let n = match cfg.id {
        SyntheticId::Integrator1d => 1,
        _ => 2,
    };
    ensure(cfg.x0.len() == n, "x0 has the wrong dimension")?;
    ensure(cfg.t_ud > 0.0 && cfg.dt > 0.0 && cfg.input_bound > 0.0 && cfg.goal_radius > 0.0, "times, bounds and radii must be positive")?;
    ensure(cfg.mu > 1.0, "mu must exceed 1")?;
    ensure(cfg.reach_tolerance >= 0.0, "reach_tolerance must be non-negative")?;
    let (sys, goal, safes, state_box) = match cfg.id {
        SyntheticId::Integrator1d => (
            ControlAffineSystem::single_integrator(1),
            ball("goal", SetKind::Goal, vec![0.0], cfg.goal_radius),
            vec![ball("outer", SetKind::Safe, vec![0.0], 5.0)],
            (vec![-4.0], vec![4.0]),
        ),
        SyntheticId::Integrator2dObstacle => {
            let obstacle = SetFunction::smooth(
                "obstacle",
                SetKind::Safe,
                Arc::new(|x: &DVector<f64>| 1.0 - x.norm_squared()),
                Arc::new(|x: &DVector<f64>| -2.0 * x),
            );
            (
                ControlAffineSystem::single_integrator(2),
                ball("goal", SetKind::Goal, vec![2.0, 0.0], cfg.goal_radius),
                vec![obstacle],
                (vec![-3.0, -3.0], vec![3.0, 3.0]),
            )
        }
        SyntheticId::FullyActuated2d => {
            let sys = ControlAffineSystem::new(
                2,
                2,
                Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![-x[0] + x[1] * x[1], -x[1] + x[0].sin()])),
                Arc::new(|x: &DVector<f64>| {
                    DMatrix::from_row_slice(2, 2, &[2.0 + x[1].sin(), 0.0, 0.0, 2.0 + x[0].cos()])
                }),
            );
            (
                sys,
                ball("goal", SetKind::Goal, vec![1.0, 1.0], cfg.goal_radius),
                vec![ball("outer", SetKind::Safe, vec![0.0, 0.0], 3.0)],
                (vec![-2.0, -2.0], vec![2.0, 2.0]),
            )
        }
    };
    Ok(Scenario {
        name: format!("synthetic:{}", cfg.id.as_str()),
        sys,
        schedule: PhaseSchedule { phases: vec![Phase::new(goal, cfg.t_ud).with_reach_tolerance(cfg.reach_tolerance)], global_safes: safes, horizon: None },
        bounds: InputBounds::symmetric(n, cfg.input_bound).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        params: SynthesisParams::new(cfg.t_ud, cfg.mu, n),
        x0: DVector::from_vec(cfg.x0.clone()),
        dt: cfg.dt,
        separation: None,
        state_box,
    })
}

/// Every synthetic scenario with default settings.
pub fn synthetic_suite() -> Vec<Scenario> {
    SyntheticId::ALL
        .into_iter()
        .map(|id| synthetic_scenario(&SyntheticConfig::new(id)).expect("default synthetic configs are valid"))
        .collect()
}
