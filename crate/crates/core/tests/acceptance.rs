//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use fxtqp::constraints::finite_diff_gradient_check;
use fxtqp::fxts::*;
use fxtqp::qp::*;
use fxtqp::scenarios::*;
use fxtqp::simulator::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=10);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let l = DMatrix::from_fn(n, n, |_, _| u(-1.0, 1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| u(-5.0, 5.0));
    let a = DMatrix::from_fn(m, n, |_, _| u(-1.0, 1.0));
    let z0 = DVector::from_fn(n, |_, _| u(-1.0, 1.0));
    let b = &a * &z0 + DVector::from_fn(m, |_, _| u(0.05, 1.0));
    QpProblem::new(h, f, a, b).expect("generated QP is valid")
}

fn c1_qp_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_obj, mut kkt_fail, mut status_fail) = (0.0_f64, 0, 0);
    for _ in 0..500 {
        let p = random_qp(&mut rng);
        let s = solve_qp(&p, &SolveOptions::default()).expect("solve");
        let b = brute_force_solve(&p).expect("enumerate");
        if s.status != QpStatus::Optimal || b.status != QpStatus::Optimal {
            status_fail += 1;
            continue;
        }
        worst_obj = worst_obj.max((s.objective - b.objective).abs());
        if !kkt_residual(&p, &s).within_tolerances() {
            kkt_fail += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_obj <= 1e-8 && kkt_fail == 0 && status_fail == 0 && secs < 10.0,
        format!("500 QPs, max |obj - enum| {worst_obj:.1e}, KKT failures {kkt_fail}, non-optimal {status_fail}, {secs:.2} s"),
    )
}

fn c2_bound_grid() -> Verdict {
    let start = Instant::now();
    let grid = BoundGrid::default();
    let mut in_domain = 0;
    let mut failures = 0;
    let mut eq_rows = 0;
    for pt in grid.points() {
        let c = grid.check_point(pt).expect("grid point");
        in_domain += usize::from(c.in_domain);
        if !c.pass {
            failures += 1;
        }
        if c.delta1 == 0.0 {
            eq_rows += 1;
            let closed = c.mu * PI / (2.0 * (c.alpha1 * c.alpha2).sqrt());
            if (c.bound - closed).abs() > 1e-12 * closed || c.hit_time.is_none_or(|t| t > closed) {
                failures += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        in_domain >= 60 && failures == 0 && secs < 20.0,
        format!("{in_domain} in-domain points ({eq_rows} at zero slack), {failures} failures, {secs:.2} s"),
    )
}

fn c3_round_trip() -> Verdict {
    let mut worst = 0.0_f64;
    for t in [0.1, 1.0, 10.0, 100.0] {
        for mu in [1.5, 2.0, 5.0, 10.0] {
            let g = alpha_from_deadline(t, mu).expect("gains");
            worst = worst.max((settling_time_bound(&g, 0.0, DEFAULT_K).t - t).abs() / t);
        }
    }
    verdict(worst <= 1e-12, format!("max relative error {worst:.1e} over 16 (T, mu) pairs"))
}

fn c4_dominance() -> Verdict {
    let (mut points, mut violations, mut ties) = (0, 0, 0);
    for a1 in [0.1, 0.5, 1.0, 3.0, 10.0] {
        for a2 in [0.2, 1.0, 4.0, 20.0] {
            for mu in [1.1, 1.5, 2.0, 5.0, 50.0] {
                let g = FxtsGains::new(a1, a2, mu).expect("gains");
                let tight = mu * PI / (2.0 * (a1 * a2).sqrt());
                let loose = 1.0 / (a1 * (g.gamma1() - 1.0)) + 1.0 / (a2 * (1.0 - g.gamma2()));
                points += 1;
                if tight > loose {
                    violations += 1;
                } else if tight == loose {
                    ties += 1;
                }
            }
        }
    }
    verdict(violations == 0 && points == 100, format!("{points} gain points, {violations} violations, {ties} ties"))
}

fn acc_run(cfg: &AccConfig) -> (Trace, MonitorStats) {
    let s = acc_scenario(cfg).expect("acc config");
    let t = s.run().expect("acc run");
    let st = monitor(&t.records, None);
    (t, st)
}

fn c5_acc() -> Verdict {
    let start = Instant::now();
    let base = AccConfig::default();
    let mut bad = Vec::new();
    let mut warnings = 0;
    let mut worst_hs = f64::NEG_INFINITY;
    for v in 17..=27 {
        let cfg = AccConfig { v_f0: v as f64, ..base.clone() };
        let (t, st) = acc_run(&cfg);
        warnings += t.meta.discretization_warnings;
        worst_hs = worst_hs.max(st.max_h_s.unwrap_or(f64::NEG_INFINITY));
        let safe = !matches!(t.meta.outcome, Outcome::SafetyViolated { .. });
        let bounded = t.records.iter().all(|r| r.u.iter().all(|u| u.is_nan() || u.abs() <= cfg.u_max()));
        let reaches = t.records.iter().any(|r| r.t <= 10.0 && (r.x[0] - 22.0).abs() <= 0.5);
        let feasible = !matches!(t.meta.outcome, Outcome::SolverFailure { .. } | Outcome::NonFinite { .. })
            && t.records.iter().take(t.records.len() - 1).all(|r| r.u[0].is_finite());
        if !(safe && bounded && reaches && feasible) {
            bad.push(format!("v_f0={v}: safe={safe} bounded={bounded} reaches={reaches} feasible={feasible} ({:?})", t.meta.outcome));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "11 runs, max h_s {worst_hs:.3} ({warnings} steps in the discretization band), {secs:.2} s{}",
        if bad.is_empty() { String::new() } else { format!("; {}", bad.join("; ")) }
    );
    verdict(bad.is_empty() && secs < 30.0, detail)
}

fn c6_acc_robust() -> Verdict {
    let mut bad = Vec::new();
    let mut notes = Vec::new();
    for d in [0.0, 50.0, 100.0] {
        for v in [18.0, 27.0] {
            let cfg = AccConfig { d_delta: d, v_f0: v, freeze: true, ..AccConfig::default() };
            let s = acc_scenario(&cfg).expect("acc config");
            let freeze_on = s.params.delta2_freeze.is_some();
            let t = s.run().expect("acc run");
            let st = monitor(&t.records, None);
            let safe = !matches!(t.meta.outcome, Outcome::SafetyViolated { .. })
                && st.max_h_s.is_some_and(|h| h <= 0.0 || t.meta.discretization_warnings > 0);
            let frozen = t.records.iter().all(|r| r.h_s[0] <= cfg.freeze_threshold || r.delta2.is_nan() || r.delta2 == 0.0);
            let solved = !matches!(t.meta.outcome, Outcome::SolverFailure { .. } | Outcome::NonFinite { .. });
            notes.push(format!("d={d} v={v}: {}", outcome_label(&t.meta.outcome)));
            if !(safe && freeze_on && frozen && solved) {
                bad.push(format!("d={d} v={v}: safe={safe} freeze={freeze_on}/{frozen} solved={solved}"));
            }
        }
    }
    let mut detail = notes.join(", ");
    if !bad.is_empty() {
        detail = format!("{detail}; {}", bad.join("; "));
    }
    verdict(bad.is_empty(), detail)
}

fn outcome_label(o: &Outcome) -> String {
    match o {
        Outcome::AllPhasesMet => "met".into(),
        Outcome::DeadlineMissed { phase } => format!("deadline missed (phase {phase})"),
        Outcome::SafetyViolated { t, branch } => format!("unsafe at {t} ({branch})"),
        Outcome::SolverFailure { t, .. } => format!("solver failure at {t}"),
        Outcome::NonFinite { t } => format!("non-finite at {t}"),
    }
}

fn c7_two_robot() -> Verdict {
    let start = Instant::now();
    let cfg = TwoRobotConfig::default();
    let s = two_robot_scenario(&cfg).expect("two-robot config");
    let t = s.run().expect("two-robot run");
    let st = monitor(&t.records, s.separation.as_ref());
    let met = t.meta.outcome == Outcome::AllPhasesMet;
    let within_budget = st.phase_durations.len() == 8 && st.phase_durations.iter().all(|d| *d <= cfg.phase_budget);
    let sep = st.min_separation.unwrap_or(0.0);
    let (mut max_comp, mut max_norm, mut max_inf, mut max_l1, mut min_r) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, f64::INFINITY);
    for r in &t.records {
        for a in 0..2 {
            let p = [r.x[2 * a], r.x[2 * a + 1]];
            max_inf = max_inf.max(p[0].abs().max(p[1].abs()));
            max_l1 = max_l1.max(p[0].abs() + p[1].abs());
            min_r = min_r.min((p[0] * p[0] + p[1] * p[1]).sqrt());
            if r.u[0].is_finite() {
                let u = [r.u[2 * a], r.u[2 * a + 1]];
                max_comp = max_comp.max(u[0].abs().max(u[1].abs()));
                max_norm = max_norm.max((u[0] * u[0] + u[1] * u[1]).sqrt());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    // The box is checked per coordinate: the waypoints at (+-1.5, +-1.5) lie
    // outside any l1 ball of radius 2, so |x|_inf <= 2 is the reading that
    // admits the prescribed route. The l1 figure is reported for reference.
    let pass = met && within_budget && sep >= 0.1 && max_comp <= 7.0 && max_norm <= 10.0 && max_inf <= 2.0 && min_r >= 1.5 - 1e-9 && secs < 60.0;
    verdict(
        pass,
        format!(
            "{}, phase durations max {:.3} s, min separation {sep:.3}, max |u_i| {max_comp}, max |u| {max_norm:.3}, max |x|_inf {max_inf:.3} (|x|_1 {max_l1:.3}), min |x| {min_r:.4}, {secs:.2} s",
            outcome_label(&t.meta.outcome),
            st.phase_durations.iter().copied().fold(0.0, f64::max),
        ),
    )
}

fn c8_regime() -> Verdict {
    let cfg = SyntheticConfig::new(SyntheticId::Integrator1d);
    let s = synthetic_scenario(&cfg).expect("synthetic config");
    let t = s.run().expect("synthetic run");
    let st = monitor(&t.records, None);
    let slack_ok = t.records.iter().filter(|r| r.delta1.is_finite()).all(|r| r.delta1 <= 0.0);
    let reach = st.reach_times.first().copied();
    let on_time = reach.is_some_and(|r| r <= cfg.t_ud);
    verdict(
        slack_ok && on_time,
        format!("max delta1 {:.3}, reach time {:?} vs deadline {}", st.max_delta1.unwrap_or(f64::NAN), reach, cfg.t_ud),
    )
}

fn c9_gradients() -> Verdict {
    let mut scenarios = vec![
        acc_scenario(&AccConfig::default()).expect("acc"),
        two_robot_scenario(&TwoRobotConfig::default()).expect("two-robot"),
    ];
    scenarios.extend(synthetic_suite());
    let mut worst = 0.0_f64;
    let mut count = 0;
    for (k, s) in scenarios.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let (lo, hi) = &s.state_box;
        let xs: Vec<DVector<f64>> = (0..100)
            .map(|_| DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b))))
            .collect();
        for f in s.set_functions() {
            for leaf in f.leaves() {
                worst = worst.max(finite_diff_gradient_check(leaf, &xs, 1e-6));
                count += 1;
            }
        }
    }
    verdict(worst <= 1e-5, format!("{count} set functions, max relative error {worst:.1e}"))
}

fn bit_identical(a: &Trace, b: &Trace) -> bool {
    let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    a.meta == b.meta
        && a.records.len() == b.records.len()
        && a.records.iter().zip(&b.records).all(|(r, s)| {
            bits(&r.x) == bits(&s.x) && bits(&r.u) == bits(&s.u) && r.delta1.to_bits() == s.delta1.to_bits() && r.delta2.to_bits() == s.delta2.to_bits()
        })
}

fn rel_gap(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.max(*y) }).fold(0.0, f64::max))
}

fn c10_determinism() -> Verdict {
    let acc = acc_scenario(&AccConfig::default()).expect("acc");
    let tr = two_robot_scenario(&TwoRobotConfig::default()).expect("two-robot");
    let same = bit_identical(&acc.run().expect("acc"), &acc.run().expect("acc"))
        && bit_identical(&tr.run().expect("two-robot"), &tr.run().expect("two-robot"));

    let mut worst = 0.0_f64;
    let mut mismatched = Vec::new();
    for v in [17.0, 20.0, 25.0, 27.0] {
        let s = acc_scenario(&AccConfig { v_f0: v, ..AccConfig::default() }).expect("acc");
        let a = monitor(&s.run().expect("acc").records, None).reach_times;
        let b = monitor(&s.run_with_dt(s.dt / 2.0).expect("acc").records, None).reach_times;
        match rel_gap(&a, &b) {
            Some(g) => worst = worst.max(g),
            None => mismatched.push(format!("acc v_f0={v}")),
        }
    }
    let a = monitor(&tr.run().expect("two-robot").records, None).reach_times;
    let b = monitor(&tr.run_with_dt(tr.dt / 2.0).expect("two-robot").records, None).reach_times;
    let tr_gap = rel_gap(&a, &b);
    match tr_gap {
        Some(g) => worst = worst.max(g),
        None => mismatched.push("two-robot".into()),
    }
    verdict(
        same && worst < 0.05 && mismatched.is_empty(),
        format!(
            "repeat runs bit-identical: {same}; max relative reach-time change under dt/2 {:.2}% (two-robot {:.2}%){}",
            100.0 * worst,
            100.0 * tr_gap.unwrap_or(f64::NAN),
            if mismatched.is_empty() { String::new() } else { format!("; phase counts differ: {}", mismatched.join(", ")) }
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("QP oracle equivalence", c1_qp_oracle),
        ("settling-time bound validity", c2_bound_grid),
        ("deadline gain round trip", c3_round_trip),
        ("deadline bound dominance", c4_dominance),
        ("ACC nominal runs", c5_acc),
        ("ACC disturbance robustness", c6_acc_robust),
        ("two-robot schedule", c7_two_robot),
        ("regime check on the 1-D integrator", c8_regime),
        ("gradient oracle", c9_gradients),
        ("determinism and dt halving", c10_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        println!("{} {:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
