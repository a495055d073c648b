//! Closed-loop simulation with explicit Euler steps over a phase schedule.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::ops::Range;
use thiserror::Error;

use crate::constraints::{ControlAffineSystem, InputBounds, SetFunction};
use crate::controller::{ControllerError, SynthesisParams, Synthesizer};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("non-finite state after Euler step")]
    NonFinite,
    #[error("invalid run setup: {0}")]
    Setup(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One reach requirement: enter `{goal <= reach_tolerance}` within `deadline`
/// seconds of the phase start while also respecting `safe_extra`.
#[derive(Debug, Clone)]
pub struct Phase {
    pub goal: SetFunction,
    pub deadline: f64,
    pub safe_extra: Vec<SetFunction>,
    pub reach_tolerance: f64,
}

impl Phase {
    pub fn new(goal: SetFunction, deadline: f64) -> Self {
        Self { goal, deadline, safe_extra: Vec::new(), reach_tolerance: 0.0 }
    }

    pub fn with_safe_extra(mut self, extra: Vec<SetFunction>) -> Self {
        self.safe_extra = extra;
        self
    }

    pub fn with_reach_tolerance(mut self, tol: f64) -> Self {
        self.reach_tolerance = tol;
        self
    }

    pub fn reached(&self, x: &DVector<f64>) -> bool {
        self.goal.value(x) <= self.reach_tolerance
    }
}

#[derive(Debug, Clone)]
pub struct PhaseSchedule {
    pub phases: Vec<Phase>,
    pub global_safes: Vec<SetFunction>,
    /// Keep running (holding the last goal) until this time once every phase is met.
    pub horizon: Option<f64>,
}

impl PhaseSchedule {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.phases.is_empty() {
            return Err(SimError::Setup("schedule has no phases".into()));
        }
        if let Some(p) = self.phases.iter().position(|p| !(p.deadline > 0.0)) {
            return Err(SimError::Setup(format!("phase {p} has a non-positive deadline")));
        }
        Ok(())
    }

    fn max_extra_leaves(&self) -> usize {
        self.phases
            .iter()
            .map(|p| p.safe_extra.iter().map(|s| s.leaves().len()).sum::<usize>())
            .max()
            .unwrap_or(0)
    }

    /// Trace column names of the safety branches: global leaves, then phase extras.
    pub fn branch_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .global_safes
            .iter()
            .flat_map(|s| s.leaves())
            .map(|l| l.name.clone())
            .collect();
        names.extend((0..self.max_extra_leaves()).map(|j| format!("phase_extra_{j}")));
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    AllPhasesMet,
    DeadlineMissed { phase: usize },
    SafetyViolated { t: f64, branch: String },
    SolverFailure { t: f64, message: String },
    NonFinite { t: f64 },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::AllPhasesMet)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vec<f64>,
    /// NaN in the terminal record.
    pub u: Vec<f64>,
    pub h_g: f64,
    /// NaN for branches absent in the current phase.
    pub h_s: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
    pub strict_cs: bool,
    /// Number of phases completed so far (equals the phase count once all are met).
    pub phase: usize,
    pub active_set_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMeta {
    pub scenario: String,
    pub dt: f64,
    pub branch_names: Vec<String>,
    pub deadlines: Vec<f64>,
    pub outcome: Outcome,
    /// Steps whose safety value landed in the discretization band.
    pub discretization_warnings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

/// `x + dt (f(x) + g(x) u + psi(x))`.
pub fn step_euler(
    sys: &ControlAffineSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> Result<DVector<f64>, SimError> {
    let next = x + dt * sys.plant_rate(x, u);
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(SimError::NonFinite)
    }
}

/// Tracks the per-branch step change of the safety values for the
/// discretization band `10 * dt * max |dh/dt|`.
struct Band {
    max_step: Vec<f64>,
    prev: Option<(usize, Vec<f64>)>,
}

impl Band {
    fn new(n: usize) -> Self {
        Self { max_step: vec![0.0; n], prev: None }
    }

    fn update(&mut self, phase: usize, hs: &[f64], n_global: usize) {
        if let Some((p, prev)) = &self.prev {
            for (j, (a, b)) in prev.iter().zip(hs).enumerate() {
                if j >= n_global && *p != phase {
                    continue;
                }
                let d = (b - a).abs();
                if d.is_finite() && d > self.max_step[j] {
                    self.max_step[j] = d;
                }
            }
        }
        self.prev = Some((phase, hs.to_vec()));
    }

    fn eps(&self, j: usize) -> f64 {
        10.0 * self.max_step[j]
    }
}

/// Runs the closed loop from `x0` until every phase is met (and the horizon,
/// if any, has passed), a deadline is missed, safety is violated beyond the
/// discretization band, or the controller fails.
pub fn run(
    scenario: &str,
    sys: &ControlAffineSystem,
    schedule: &PhaseSchedule,
    bounds: &InputBounds,
    params: &SynthesisParams,
    x0: &DVector<f64>,
    dt: f64,
) -> Result<Trace, SimError> {
    schedule.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Setup(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != sys.n || bounds.dim() != sys.m {
        return Err(SimError::Setup("dimension mismatch between system, bounds and x0".into()));
    }
    params.validate(sys.m)?;

    let np = schedule.phases.len();
    let branch_names = schedule.branch_names();
    let n_global: usize = schedule.global_safes.iter().map(|s| s.leaves().len()).sum();
    let n_branches = branch_names.len();
    let tol = 1e-9 * dt;

    let mut records = Vec::new();
    let mut band = Band::new(n_branches);
    let mut warnings = 0;
    let mut x = x0.clone();
    let mut phase = 0;
    let mut phase_start = 0.0;
    let mut warm: Option<DVector<f64>> = None;
    let mut k: u64 = 0;

    let outcome = loop {
        let t = k as f64 * dt;
        while phase < np && schedule.phases[phase].reached(&x) {
            phase += 1;
            phase_start = t;
        }
        let current = &schedule.phases[phase.min(np - 1)];
        let mut safes = schedule.global_safes.clone();
        safes.extend(current.safe_extra.iter().cloned());
        let mut hs: Vec<f64> = safes.iter().flat_map(|s| s.leaves()).map(|l| l.value(&x)).collect();
        hs.resize(n_branches, f64::NAN);
        let h_g = current.goal.value(&x);

        band.update(phase, &hs, n_global);
        let mut violated = None;
        for (j, &h) in hs.iter().enumerate() {
            if h > 0.0 {
                if h <= band.eps(j) {
                    warnings += 1;
                } else {
                    violated = Some(j);
                    break;
                }
            }
        }
        let terminal = |records: &mut Vec<TraceRecord>| {
            records.push(TraceRecord {
                t,
                x: x.iter().copied().collect(),
                u: vec![f64::NAN; sys.m],
                h_g,
                h_s: hs.clone(),
                delta1: f64::NAN,
                delta2: f64::NAN,
                strict_cs: false,
                phase,
                active_set_size: 0,
            })
        };
        if let Some(j) = violated {
            terminal(&mut records);
            break Outcome::SafetyViolated { t, branch: branch_names[j].clone() };
        }
        if phase == np && t >= schedule.horizon.unwrap_or(0.0) - tol {
            terminal(&mut records);
            break Outcome::AllPhasesMet;
        }
        if phase < np && t - phase_start > current.deadline + tol {
            terminal(&mut records);
            break Outcome::DeadlineMissed { phase };
        }

        let syn = Synthesizer::new(sys, &current.goal, &safes, bounds, params);
        let dec = match syn.synthesize(&x, warm.as_ref()) {
            Ok(d) => d,
            Err(e) => {
                terminal(&mut records);
                break Outcome::SolverFailure { t, message: e.to_string() };
            }
        };
        records.push(TraceRecord {
            t,
            x: x.iter().copied().collect(),
            u: dec.u.iter().copied().collect(),
            h_g,
            h_s: hs,
            delta1: dec.delta1,
            delta2: dec.delta2,
            strict_cs: dec.strict_cs,
            phase,
            active_set_size: dec.active_set.len(),
        });
        match step_euler(sys, &x, &dec.u, dt) {
            Ok(next) => x = next,
            Err(_) => {
                break Outcome::NonFinite { t: (k + 1) as f64 * dt };
            }
        }
        warm = Some(dec.z);
        k += 1;
    };

    Ok(Trace {
        meta: TraceMeta {
            scenario: scenario.to_string(),
            dt,
            branch_names,
            deadlines: schedule.phases.iter().map(|p| p.deadline).collect(),
            outcome,
            discretization_warnings: warnings,
        },
        records,
    })
}

/// Index ranges of two position blocks in the state, for separation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationSpec {
    pub first: Range<usize>,
    pub second: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorStats {
    /// `-max_t h_s` per branch.
    pub min_safety_margin: Vec<Option<f64>>,
    pub max_h_s: Option<f64>,
    pub min_separation: Option<f64>,
    /// Absolute time at which each completed phase was reached.
    pub reach_times: Vec<f64>,
    /// Reach time minus the phase start.
    pub phase_durations: Vec<f64>,
    pub max_abs_u: Vec<Option<f64>>,
    pub max_delta1: Option<f64>,
    pub strict_cs_failures: usize,
    pub steps: usize,
}

fn fmax(acc: Option<f64>, v: f64) -> Option<f64> {
    if v.is_nan() {
        return acc;
    }
    Some(acc.map_or(v, |a| a.max(v)))
}

/// Summary statistics of a trace; every input is recoverable from the CSV form.
pub fn monitor(records: &[TraceRecord], separation: Option<&SeparationSpec>) -> MonitorStats {
    let nb = records.first().map_or(0, |r| r.h_s.len());
    let m = records.first().map_or(0, |r| r.u.len());
    let mut max_hs = vec![None; nb];
    let mut max_u = vec![None; m];
    let mut max_delta1 = None;
    let mut min_sep: Option<f64> = None;
    let mut reach_times = Vec::new();
    let mut phase_durations = Vec::new();
    let mut strict_cs_failures = 0;
    let mut phase = 0;
    let mut phase_start = records.first().map_or(0.0, |r| r.t);
    for r in records {
        for (j, &h) in r.h_s.iter().enumerate() {
            max_hs[j] = fmax(max_hs[j], h);
        }
        for (j, &u) in r.u.iter().enumerate() {
            max_u[j] = fmax(max_u[j], u.abs());
        }
        max_delta1 = fmax(max_delta1, r.delta1);
        if !r.u.iter().any(|u| u.is_nan()) && !r.strict_cs {
            strict_cs_failures += 1;
        }
        while phase < r.phase {
            reach_times.push(r.t);
            phase_durations.push(r.t - phase_start);
            phase_start = r.t;
            phase += 1;
        }
        if let Some(sep) = separation {
            let d: f64 = sep
                .first
                .clone()
                .zip(sep.second.clone())
                .map(|(a, b)| (r.x[a] - r.x[b]).powi(2))
                .sum::<f64>()
                .sqrt();
            min_sep = Some(min_sep.map_or(d, |s| s.min(d)));
        }
    }
    let max_h_s = max_hs.iter().flatten().copied().fold(None, fmax);
    MonitorStats {
        min_safety_margin: max_hs.iter().map(|h| h.map(|v| -v)).collect(),
        max_h_s,
        min_separation: min_sep,
        reach_times,
        phase_durations,
        max_abs_u: max_u,
        max_delta1,
        strict_cs_failures,
        steps: records.len(),
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Column names in trace order.
pub fn csv_header(n: usize, m: usize, branches: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..n).map(|i| format!("x_{i}")));
    h.extend((0..m).map(|i| format!("u_{i}")));
    h.push("h_g".into());
    h.extend((0..branches).map(|i| format!("h_s_branch_{i}")));
    h.extend(["delta1", "delta2", "strict_cs", "phase", "active_set_size"].map(String::from));
    h
}

/// Writes records as CSV; floats carry 17 significant digits.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let (n, m, nb) = records
        .first()
        .map_or((0, 0, 0), |r| (r.x.len(), r.u.len(), r.h_s.len()));
    w.write_record(csv_header(n, m, nb))?;
    for r in records {
        let mut row = Vec::with_capacity(n + m + nb + 7);
        row.push(fmt_f(r.t));
        row.extend(r.x.iter().map(|&v| fmt_f(v)));
        row.extend(r.u.iter().map(|&v| fmt_f(v)));
        row.push(fmt_f(r.h_g));
        row.extend(r.h_s.iter().map(|&v| fmt_f(v)));
        row.push(fmt_f(r.delta1));
        row.push(fmt_f(r.delta2));
        row.push(u8::from(r.strict_cs).to_string());
        row.push(r.phase.to_string());
        row.push(r.active_set_size.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace written by [`write_trace_csv`].
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, SimError> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
    let (n, m, nb) = (count("x_"), count("u_"), count("h_s_branch_"));
    let expected = csv_header(n, m, nb);
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(SimError::Format("unexpected header".into()));
    }
    let num = |s: &str| -> Result<f64, SimError> {
        s.parse::<f64>().map_err(|_| SimError::Format(format!("bad number {s:?}")))
    };
    let int = |s: &str| -> Result<usize, SimError> {
        s.parse::<usize>().map_err(|_| SimError::Format(format!("bad integer {s:?}")))
    };
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f: Vec<&str> = rec.iter().collect();
        let mut i = 0;
        let mut take = |k: usize| {
            let s = &f[i..i + k];
            i += k;
            s.to_vec()
        };
        let t = num(take(1)[0])?;
        let x = take(n).into_iter().map(num).collect::<Result<Vec<_>, _>>()?;
        let u = take(m).into_iter().map(num).collect::<Result<Vec<_>, _>>()?;
        let h_g = num(take(1)[0])?;
        let h_s = take(nb).into_iter().map(num).collect::<Result<Vec<_>, _>>()?;
        let delta1 = num(take(1)[0])?;
        let delta2 = num(take(1)[0])?;
        let strict_cs = match take(1)[0] {
            "1" => true,
            "0" => false,
            s => return Err(SimError::Format(format!("bad flag {s:?}"))),
        };
        let phase = int(take(1)[0])?;
        let active_set_size = int(take(1)[0])?;
        out.push(TraceRecord { t, x, u, h_g, h_s, delta1, delta2, strict_cs, phase, active_set_size });
    }
    Ok(out)
}
