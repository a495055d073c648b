use fxtqp::constraints::*;
use fxtqp::controller::*;
use fxtqp::fxts::alpha_from_deadline;
use fxtqp::scenarios::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;

fn acc_state() -> DVector<f64> {
    DVector::from_vec(vec![20.0, 10.0, 150.0])
}

#[test]
fn acc_lie_derivatives_by_hand() {
    let cfg = AccConfig::default();
    let ld = lie_derivatives(&cfg.system(), &cfg.goal(), &acc_state());
    // drag at 20 m/s: 0.1 + 5 * 20 + 0.25 * 400
    let drag = 200.1;
    let lf = 2.0 * (20.0 - 22.0) * (-drag / 1650.0);
    assert!((ld.lf - lf).abs() < 1e-12);
    assert!((ld.lf - 0.48509).abs() < 1e-5);
    assert!((ld.lg[0] + 4.0 / 1650.0).abs() < 1e-15);
    assert!((ld.lg[0] + 0.0024242).abs() < 1e-7);
}

#[test]
fn acc_convergence_rhs_by_hand() {
    let cfg = AccConfig::default();
    let gains = alpha_from_deadline(10.0, 5.0).unwrap();
    assert!((gains.alpha1() - PI / 4.0).abs() < 1e-15);
    let row = convergence_row(&cfg.system(), &cfg.goal(), &acc_state(), &gains);
    // h_g = 4; 4^1.2 = 2^2.4, 4^0.8 = 2^1.6
    let expected = -0.48509 - PI / 4.0 * (5.27803 + 3.03143);
    assert!((row.rhs - expected).abs() < 1e-4, "{}", row.rhs);
    // -7.01133 to five places; the four-place figure -7.0112 is truncated
    assert!((row.rhs + 7.0112).abs() < 2e-4);
    assert_eq!(row.coeffs[1], -4.0);
    assert_eq!(row.coeffs[2], 0.0);
}

#[test]
fn acc_headway_row() {
    let cfg = AccConfig::default();
    let x = acc_state();
    let row = safety_row(&cfg.system(), &cfg.headway(), &x);
    // h_s = 1.8 * 20 - 150, grad = (1.8, 0, -1), f = (-drag/M, 0, -10)
    assert!((row.coeffs[2] - (36.0 - 150.0)).abs() < 1e-12);
    assert!((row.coeffs[0] - 1.8 / 1650.0).abs() < 1e-15);
    assert!((row.rhs - (1.8 * 200.1 / 1650.0 - 10.0)).abs() < 1e-12);
}

#[test]
fn asymmetric_bounds_rows() {
    let b = InputBounds::new(DVector::from_vec(vec![-1.0]), DVector::from_vec(vec![2.0])).unwrap();
    let (a, rhs) = input_rows(&b);
    assert_eq!(rhs.as_slice(), &[2.0, 1.0]);
    assert_eq!(a, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]));
    let acc = InputBounds::symmetric(1, AccConfig::default().u_max()).unwrap();
    assert_eq!(input_rows(&acc).1.as_slice(), &[4046.625, 4046.625]);
}

#[test]
fn constant_function_has_no_lie_derivative() {
    let sys = AccConfig::default().system();
    let c = SetFunction::smooth("c", SetKind::Safe, Arc::new(|_| 3.0), Arc::new(|_| DVector::zeros(3)));
    let ld = lie_derivatives(&sys, &c, &acc_state());
    assert_eq!(ld.lf, 0.0);
    assert_eq!(ld.lg, DVector::zeros(1));
}

fn random_states(lo: &[f64], hi: &[f64], n: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| DVector::from_iterator(lo.len(), lo.iter().zip(hi).map(|(a, b)| rng.random_range(*a..*b))))
        .collect()
}

fn all_scenarios() -> Vec<Scenario> {
    let mut out = vec![
        acc_scenario(&AccConfig::default()).unwrap(),
        two_robot_scenario(&TwoRobotConfig::default()).unwrap(),
    ];
    out.extend(synthetic_suite());
    out
}

#[test]
fn every_scenario_gradient_matches_finite_differences() {
    for (k, s) in all_scenarios().iter().enumerate() {
        let xs = random_states(&s.state_box.0, &s.state_box.1, 100, k as u64);
        for f in s.set_functions() {
            for leaf in f.leaves() {
                let err = finite_diff_gradient_check(leaf, &xs, 1e-6);
                assert!(err <= 1e-5, "{} / {}: {err}", s.name, leaf.name);
            }
            let err = finite_diff_gradient_check(&f, &xs, 1e-6);
            assert!(err <= 1e-5, "{} / {}: {err}", s.name, f.name);
        }
    }
}

#[test]
fn composite_value_is_the_branch_maximum() {
    let s = two_robot_scenario(&TwoRobotConfig::default()).unwrap();
    let composites: Vec<SetFunction> = s.set_functions().into_iter().filter(|f| f.is_composite()).collect();
    assert!(!composites.is_empty());
    for x in random_states(&s.state_box.0, &s.state_box.1, 10_000, 7) {
        for c in &composites {
            let direct = c.leaves().iter().map(|l| l.value(&x)).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(c.value(&x), direct);
        }
    }
}

fn integrator_ball(r: f64) -> (ControlAffineSystem, SetFunction) {
    let sys = ControlAffineSystem::single_integrator(2);
    let h = SetFunction::smooth(
        "ball",
        SetKind::Goal,
        Arc::new(move |x: &DVector<f64>| x.norm_squared() - r * r),
        Arc::new(|x: &DVector<f64>| 2.0 * x),
    );
    (sys, h)
}

proptest! {
    #[test]
    fn rows_are_linear_in_the_decision(x in prop::array::uniform2(-3.0f64..3.0), z in prop::array::uniform4(-10.0f64..10.0)) {
        let (sys, h) = integrator_ball(1.0);
        let gains = alpha_from_deadline(2.0, 3.0).unwrap();
        let x = DVector::from_row_slice(&x);
        let z = DVector::from_row_slice(&z);
        let z2 = &z * 2.0;
        for row in [convergence_row(&sys, &h, &x, &gains), safety_row(&sys, &h.clone().with_kind(SetKind::Safe), &x)] {
            prop_assert_eq!(row.lhs(&z2), 2.0 * row.lhs(&z));
        }
    }

    #[test]
    fn convergence_rhs_falls_as_the_goal_value_grows(r1 in 0.0f64..5.0, dr in 0.0f64..5.0) {
        // single integrator: Lf = 0, so rhs depends on h_g alone
        let (sys, h) = integrator_ball(0.0);
        let gains = alpha_from_deadline(1.0, 2.5).unwrap();
        let at = |r: f64| convergence_row(&sys, &h, &DVector::from_vec(vec![r, 0.0]), &gains).rhs;
        prop_assert!(at(r1 + dr) <= at(r1));
    }

    #[test]
    fn input_rows_encode_the_box(lo in prop::array::uniform3(-5.0f64..0.0), span in prop::array::uniform3(0.0f64..5.0), v in prop::array::uniform3(-6.0f64..6.0)) {
        let lower = DVector::from_row_slice(&lo);
        let upper = DVector::from_iterator(3, lo.iter().zip(&span).map(|(a, s)| a + s));
        let bounds = InputBounds::new(lower.clone(), upper.clone()).unwrap();
        let (a, b) = input_rows(&bounds);
        let mut z = DVector::zeros(5);
        z.rows_mut(0, 3).copy_from_slice(&v);
        z[3] = 1e3;
        z[4] = -1e3;
        let rows_ok = (&a * &z - &b).iter().all(|r| *r <= 0.0);
        let box_ok = (0..3).all(|i| lower[i] <= v[i] && v[i] <= upper[i]);
        prop_assert_eq!(rows_ok, box_ok);
        prop_assert_eq!(bounds.contains(&DVector::from_row_slice(&v), 0.0), box_ok);
    }
}

#[test]
fn acc_and_two_robot_row_counts() {
    let acc = acc_scenario(&AccConfig::default()).unwrap();
    let syn = Synthesizer::new(&acc.sys, &acc.schedule.phases[0].goal, &acc.schedule.global_safes, &acc.bounds, &acc.params);
    let p = syn.assemble(&acc_state()).unwrap();
    assert_eq!((p.a.ncols(), p.a.nrows()), (3, 4));

    let tr = two_robot_scenario(&TwoRobotConfig::default()).unwrap();
    let phase = &tr.schedule.phases[0];
    let mut safes = tr.schedule.global_safes.clone();
    safes.extend(phase.safe_extra.iter().cloned());
    let syn = Synthesizer::new(&tr.sys, &phase.goal, &safes, &tr.bounds, &tr.params);
    let p = syn.assemble(&tr.x0).unwrap();
    let branches: usize = safes.iter().map(|s| s.leaves().len()).sum();
    let goal_rows = phase.goal.leaves().len();
    assert_eq!(p.a.ncols(), 6);
    assert_eq!(p.a.nrows(), 8 + goal_rows + branches);
}

#[test]
fn nagumo_holds_on_the_headway_boundary() {
    let cfg = AccConfig::default();
    let acc = acc_scenario(&cfg).unwrap();
    // D = tau_d v_f puts the state on the boundary; a closing speed of 1 m/s
    // keeps the required braking within u_max
    for v_f in [15.0, 20.0, 25.0] {
        let x = DVector::from_vec(vec![v_f, v_f - 1.0, cfg.tau_d * v_f]);
        let syn = Synthesizer::new(&acc.sys, &acc.schedule.phases[0].goal, &acc.schedule.global_safes, &acc.bounds, &acc.params);
        let d = syn.synthesize(&x, None).unwrap();
        let ld = lie_derivatives(&acc.sys, &cfg.headway(), &x);
        assert!(ld.lf + ld.lg.dot(&d.u) <= 1e-8, "{}", ld.lf + ld.lg.dot(&d.u));
    }
}

#[test]
fn idle_inside_goal_and_safe_set() {
    let (sys, goal) = integrator_ball(1.0);
    let safe = [SetFunction::smooth(
        "outer",
        SetKind::Safe,
        Arc::new(|x: &DVector<f64>| x.norm_squared() - 100.0),
        Arc::new(|x: &DVector<f64>| 2.0 * x),
    )];
    let bounds = InputBounds::symmetric(2, 5.0).unwrap();
    let params = SynthesisParams::new(1.0, 2.0, 2);
    let syn = Synthesizer::new(&sys, &goal, &safe, &bounds, &params);
    let d = syn.synthesize(&DVector::from_vec(vec![0.1, -0.2]), None).unwrap();
    assert!(d.u.amax() < 1e-12);
}

#[test]
fn continuity_probe_is_finite_away_from_switches() {
    let (sys, goal) = integrator_ball(0.1);
    let bounds = InputBounds::symmetric(2, 5.0).unwrap();
    let params = SynthesisParams::new(2.0, 3.0, 2);
    let syn = Synthesizer::new(&sys, &goal, &[], &bounds, &params);
    let r = syn.continuity_probe(&DVector::from_vec(vec![0.8, 0.3]), 1e-4, 20, 3).unwrap();
    assert_eq!(r.quotients.len(), 20);
    assert!(r.max_quotient.is_finite());
    let again = syn.continuity_probe(&DVector::from_vec(vec![0.8, 0.3]), 1e-4, 20, 3).unwrap();
    assert_eq!(r, again);
}
