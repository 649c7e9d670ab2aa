use std::sync::Arc;

use approx::assert_abs_diff_eq;
use sdcert_core::dtmodels::{
    close_loop, euler_step, exact_step, h_exact_step, models, rk4_step, simulate, ClosedLoopMap, DtModelKind, Limits,
    SampledFlow, Termination, Tolerances,
};
use sdcert_core::dynamics::{closed_loop_field, ExprLaw, Plant, ZeroLaw};
use sdcert_core::sampling::{gen_constant, SeqDescriptor};

fn plant(m: usize, f: &str) -> Arc<Plant> {
    Arc::new(Plant::parse(1, m, &[f]).unwrap())
}

fn law(e: &str) -> Arc<dyn sdcert_core::dynamics::ControlLaw> {
    ExprLaw::parse("U", 1, &[e]).unwrap().into_arc()
}

fn tol() -> Tolerances {
    Tolerances::default()
}

#[test]
fn euler_examples() {
    assert_eq!(euler_step(&plant(0, "-x1"), &[1.0], &[], 0.1).unwrap(), vec![0.9]);
    assert_eq!(euler_step(&plant(1, "u1"), &[0.0], &[2.0], 0.5).unwrap(), vec![1.0]);
    assert_eq!(euler_step(&plant(1, "sin(x1) + u1^3"), &[0.7], &[1.3], 0.0).unwrap(), vec![0.7]);
    assert!(euler_step(&plant(0, "-x1"), &[1.0], &[], -0.1).is_err());
}

#[test]
fn rk4_examples() {
    let t: f64 = 0.1;
    let taylor = 1.0 - t + t * t / 2.0 - t.powi(3) / 6.0 + t.powi(4) / 24.0;
    let y = rk4_step(&plant(0, "-x1"), &[1.0], &[], t).unwrap();
    assert_abs_diff_eq!(y[0], taylor, epsilon = 1e-15);
    assert_abs_diff_eq!(y[0], 0.904_837_5, epsilon = 1e-15);
    assert_eq!(rk4_step(&plant(0, "-x1"), &[1.0], &[], 0.0).unwrap(), vec![1.0]);
    let p = plant(1, "u1");
    assert_eq!(rk4_step(&p, &[0.0], &[2.0], 0.5).unwrap(), euler_step(&p, &[0.0], &[2.0], 0.5).unwrap());
}

#[test]
fn exact_examples() {
    let y = exact_step(&plant(0, "-x1"), &[1.0], &[], 0.1, tol()).unwrap();
    assert_abs_diff_eq!(y[0], (-0.1f64).exp(), epsilon = 1e-9);
    let y = exact_step(&plant(1, "u1"), &[0.0], &[2.0], 0.5, tol()).unwrap();
    assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-10);
    let y = exact_step(&plant(1, "-x1 + u1"), &[0.0], &[1.0], 1.0, tol()).unwrap();
    assert_abs_diff_eq!(y[0], 1.0 - (-1.0f64).exp(), epsilon = 1e-9);
}

#[test]
fn exact_step_reports_blow_up() {
    let err = exact_step(&plant(0, "x1^2"), &[1.0], &[], 2.0, tol()).unwrap_err();
    assert!(matches!(err, sdcert_core::Error::Integration(_)), "{err}");
}

#[test]
fn close_loop_examples() {
    let m = close_loop(DtModelKind::Euler, plant(1, "u1"), law("-x1")).unwrap();
    assert_eq!(m.step(&[1.0], 0.5).unwrap(), vec![0.5]);
    let m = close_loop(DtModelKind::exact(), plant(1, "u1"), law("-x1")).unwrap();
    assert_abs_diff_eq!(m.step(&[1.0], 0.5).unwrap()[0], 0.5, epsilon = 1e-10);
    let zero = Arc::new(ZeroLaw { n: 1, m: 1 });
    let m = close_loop(DtModelKind::exact(), plant(1, "-x1 + u1"), zero).unwrap();
    assert_abs_diff_eq!(m.step(&[1.0], 1.0).unwrap()[0], (-1.0f64).exp(), epsilon = 1e-9);
    assert!(close_loop(DtModelKind::Euler, plant(2, "u1"), law("-x1")).is_err());
}

#[test]
fn registry_lists_all_models() {
    assert_eq!(models().names().collect::<Vec<_>>(), vec!["euler", "exact-zoh", "rk4"]);
    assert!(DtModelKind::parse("heun", tol()).is_err());
}

#[test]
fn sampled_flow_examples() {
    let h = closed_loop_field(plant(1, "u1"), law("-x1^3")).unwrap();
    let y = h_exact_step(&h, &[1.0], 1.0, tol()).unwrap();
    assert_abs_diff_eq!(y[0], 1.0 / 3f64.sqrt(), epsilon = 1e-8);
    let h = closed_loop_field(plant(1, "u1"), law("-x1")).unwrap();
    let y = h_exact_step(&h, &[1.0], 0.1, tol()).unwrap();
    assert_abs_diff_eq!(y[0], (-0.1f64).exp(), epsilon = 1e-9);
    let y = h_exact_step(&h, &[1.0], 1e-8, tol()).unwrap();
    assert!((y[0] - 1.0).abs() <= 2e-8);
}

#[test]
fn sampled_flow_is_not_the_held_loop() {
    // x' = u, u_c = -x: the flow decays as e^{-T}, the held loop as 1 - T
    let flow = SampledFlow::new(plant(1, "u1"), law("-x1"), tol()).unwrap();
    let held = close_loop(DtModelKind::exact(), plant(1, "u1"), law("-x1")).unwrap();
    let a = flow.step(&[1.0], 0.5).unwrap()[0];
    let b = held.step(&[1.0], 0.5).unwrap()[0];
    assert_abs_diff_eq!(a, (-0.5f64).exp(), epsilon = 1e-9);
    assert_abs_diff_eq!(b, 0.5, epsilon = 1e-9);
}

#[test]
fn simulate_linear_flow() {
    let zero = Arc::new(ZeroLaw { n: 1, m: 0 });
    let m = close_loop(DtModelKind::exact(), plant(0, "-x1"), zero).unwrap();
    let seq = gen_constant(0.1, 10).unwrap();
    let tr = simulate(&m, &[1.0], &seq, Limits::default()).unwrap();
    assert_eq!(tr.termination, Termination::StepsExhausted);
    assert_eq!(tr.len(), 11);
    for (k, (t, x)) in tr.t.iter().zip(&tr.x).enumerate() {
        assert_abs_diff_eq!(*t, 0.1 * k as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], (-0.1 * k as f64).exp(), epsilon = 1e-8);
    }
}

#[test]
fn simulate_equilibrium_and_divergence() {
    let zero = Arc::new(ZeroLaw { n: 1, m: 0 });
    let exact = close_loop(DtModelKind::exact(), plant(0, "-x1"), zero.clone()).unwrap();
    let seq = gen_constant(0.1, 10).unwrap();
    let tr = simulate(&exact, &[0.0], &seq, Limits::default()).unwrap();
    assert_eq!(tr.termination, Termination::BelowFloor);
    assert!(tr.x.iter().all(|x| x[0] == 0.0));

    let euler = close_loop(DtModelKind::Euler, plant(0, "-x1"), zero).unwrap();
    let seq = gen_constant(2.5, 200).unwrap();
    let tr = simulate(&euler, &[1.0], &seq, Limits::default()).unwrap();
    assert_eq!(tr.termination, Termination::AboveCeiling);
    let norms: Vec<f64> = tr.norms().collect();
    assert!(norms.windows(2).all(|w| w[1] > w[0]));
    assert_abs_diff_eq!(norms[1], 1.5, epsilon = 1e-15);
}

#[test]
fn simulate_records_evaluation_errors() {
    let m = close_loop(DtModelKind::Euler, plant(1, "u1"), law("-sqrt(x1)")).unwrap();
    let seq = gen_constant(2.0, 5).unwrap();
    let tr = simulate(&m, &[1.0], &seq, Limits::default()).unwrap();
    assert_eq!(tr.termination, Termination::EvaluationError);
    assert_eq!(tr.len(), 2);
    assert!(tr.error.is_some());
}

#[test]
fn trajectory_serializes() {
    let zero = Arc::new(ZeroLaw { n: 1, m: 0 });
    let m = close_loop(DtModelKind::Euler, plant(0, "-x1"), zero).unwrap();
    let seq = SeqDescriptor::new("alternating", 0.5, 4).generate().unwrap();
    let tr = simulate(&m, &[1.0], &seq, Limits::default()).unwrap();
    let csv = tr.to_csv().unwrap();
    assert!(csv.starts_with("t,x1\n"));
    assert_eq!(csv.lines().count(), 6);
    let back: sdcert_core::dtmodels::Trajectory = serde_json::from_str(&tr.to_json().unwrap()).unwrap();
    assert_eq!(back, tr);
}

#[test]
fn exact_step_semigroup_and_tolerance_halving() {
    let cases: [(Arc<Plant>, f64); 3] = [(plant(1, "-x1 + u1"), 0.3), (plant(1, "-x1^3 + u1"), -0.2), (plant(1, "sin(x1) + u1"), 0.5)];
    for (p, u) in cases {
        for x in [-1.5, 0.2, 1.0] {
            let (t1, t2) = (0.07, 0.11);
            let whole = exact_step(&p, &[x], &[u], t1 + t2, tol()).unwrap()[0];
            let mid = exact_step(&p, &[x], &[u], t1, tol()).unwrap();
            let split = exact_step(&p, &mid, &[u], t2, tol()).unwrap()[0];
            assert!((whole - split).abs() <= tol().floor(x.abs()), "{whole} vs {split}");
            let finer = exact_step(&p, &[x], &[u], t1 + t2, tol().halved()).unwrap()[0];
            assert!((whole - finer).abs() <= tol().floor(x.abs()));
        }
    }
}

#[test]
fn state_independent_plants_collapse() {
    let p = plant(1, "u1^3 - sin(u1)");
    for (x, u, t) in [(0.0, 1.0, 0.3), (2.0, -0.5, 0.1), (-1.0, 2.0, 0.05)] {
        let e = euler_step(&p, &[x], &[u], t).unwrap()[0];
        let r = rk4_step(&p, &[x], &[u], t).unwrap()[0];
        let z = exact_step(&p, &[x], &[u], t, tol()).unwrap()[0];
        assert!((e - r).abs() <= tol().floor(x.abs()));
        assert!((e - z).abs() <= tol().floor(x.abs()));
    }
}
