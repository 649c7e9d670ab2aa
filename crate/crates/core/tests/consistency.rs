use std::sync::Arc;

use sdcert_core::consistency::{
    estimate_epc, estimate_stc, estimate_stl, estimate_stlc, predict_epc_from_theorem2, required_input_radius, stc_table,
    ConsistencyConfig, Status,
};
use sdcert_core::dtmodels::{close_loop, Autonomous, DtModelKind, FnLoop, FnModel, PlantModel};
use sdcert_core::dynamics::{ControlLaw, ExprLaw, Plant, ZeroLaw};
use sdcert_core::probe;

fn law(e: &str) -> Arc<dyn ControlLaw> {
    ExprLaw::parse(e, 1, &[e]).unwrap().into_arc()
}

fn plant(m: usize, f: &str) -> Arc<Plant> {
    Arc::new(Plant::parse(1, m, &[f]).unwrap())
}

fn cfg(t_bar: f64) -> ConsistencyConfig {
    ConsistencyConfig::new(t_bar).samples(1024).seed(3)
}

#[test]
fn stc_examples() {
    let c = estimate_stc(law("-x1 + T*x1").as_ref(), law("-x1").as_ref(), 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Certified, "{}", c.reason);
    let rho = c.rho.unwrap();
    assert_eq!(rho.p, 1);
    assert!((rho.c - 1.0).abs() <= 0.011, "{}", rho.c);
    for r in &rho.table {
        assert!((r.rho - r.t).abs() <= 1e-12 * r.t.max(1e-300).max(1.0) + 1e-15, "{r:?}");
    }
    assert_eq!(c.t_star, Some(0.5));

    let same = estimate_stc(law("-x1").as_ref(), law("-x1").as_ref(), 1.0, &cfg(0.5)).unwrap();
    assert_eq!(same.status, Status::Certified);
    assert!(same.rho.unwrap().table.iter().all(|r| r.rho == 0.0));

    let gap = estimate_stc(law("-x1 + 0.5*x1").as_ref(), law("-x1").as_ref(), 1.0, &cfg(0.5)).unwrap();
    assert_eq!(gap.status, Status::Falsified);
    assert!(gap.rho.unwrap().table.iter().all(|r| (r.rho - 0.5).abs() < 1e-12));
    assert!(gap.witness.is_some());
}

#[test]
fn stc_equivalence_relation() {
    let (u1, u2, u3) = (law("-x1"), law("-x1 + T*x1"), law("-x1 + T*x1 + T^2*x1"));
    let grid = cfg(0.5).grid;
    let pts = probe::ball_points(1, 1.0, 1024, 5);
    let table = |a: &Arc<dyn ControlLaw>, b: &Arc<dyn ControlLaw>| -> Vec<f64> {
        stc_table(a.as_ref(), b.as_ref(), &pts, &grid).unwrap().into_iter().map(|r| r.0.rho).collect()
    };
    assert!(table(&u1, &u1).iter().all(|&r| r == 0.0));
    let ab = table(&u1, &u2);
    let ba = table(&u2, &u1);
    assert!(ab.iter().zip(&ba).all(|(a, b)| a.to_bits() == b.to_bits()));
    let bc = table(&u2, &u3);
    let ac = table(&u1, &u3);
    for i in 0..grid.len() {
        assert!(ac[i] <= ab[i] + bc[i] + 1e-9, "T = {}", grid[i]);
    }
}

#[test]
fn stl_examples() {
    let c = estimate_stl(law("-x1").as_ref(), 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Certified, "{}", c.reason);
    assert!((c.k.unwrap() - 1.0).abs() <= 0.011);

    let c = estimate_stl(law("-x1 + T").as_ref(), 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Falsified);
    assert_eq!(c.witness.unwrap().period, Some(c.grid[0]));

    let c = estimate_stl(law("-sign(x1)*sqrt(abs(x1))").as_ref(), 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Falsified, "{}", c.reason);
}

#[test]
fn stlc_examples() {
    let euler = PlantModel::new(DtModelKind::Euler, plant(1, "-x1 + u1")).unwrap();
    let c = estimate_stlc(&euler, 1.0, 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Certified, "{}", c.reason);
    assert!((c.k.unwrap() - 1.0).abs() <= 0.05, "{:?}", c.k);

    let exact = PlantModel::new(DtModelKind::exact(), plant(1, "-x1 + 0*u1")).unwrap();
    let c = estimate_stlc(&exact, 1.0, 3.0, &ConsistencyConfig::new(0.5).samples(128)).unwrap();
    assert_eq!(c.status, Status::Certified, "{}", c.reason);
    assert!(c.k.unwrap() <= 1.0);

    let sqrt_t = FnModel { n: 1, m: 1, label: "sqrtT".into(), f: |x: &[f64], u: &[f64], t: f64| Ok(vec![x[0] + t.sqrt() * u[0]]) };
    let c = estimate_stlc(&sqrt_t, 1.0, 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Falsified, "{}", c.reason);
}

#[test]
fn epc_examples() {
    let zero: Arc<dyn ControlLaw> = Arc::new(ZeroLaw { n: 1, m: 0 });
    let euler = close_loop(DtModelKind::Euler, plant(0, "-x1"), zero.clone()).unwrap();
    let exact = close_loop(DtModelKind::exact(), plant(0, "-x1"), zero).unwrap();

    let c = estimate_epc(&euler, &euler, 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Certified);
    assert!(c.rho.unwrap().table.iter().all(|r| r.rho == 0.0));

    let c = estimate_epc(&euler, &exact, 2.0, &ConsistencyConfig::new(0.5).samples(256)).unwrap();
    assert_eq!(c.status, Status::Certified, "{}", c.reason);
    let rho = c.rho.as_ref().unwrap();
    assert_eq!(rho.p, 1);
    for r in &rho.table {
        // Taylor remainder e^{-T} - 1 + T <= T^2/2
        assert!(r.rho <= 0.6 * r.t && r.rho <= 0.5 * r.t + 1e-12, "{r:?}");
    }

    let id = FnLoop { dim: 1, label: "id".into(), f: |x: &[f64], _t: f64| Ok(x.to_vec()) };
    let scaled = FnLoop { dim: 1, label: "1.1x".into(), f: |x: &[f64], _t: f64| Ok(vec![1.1 * x[0]]) };
    let c = estimate_epc(&id, &scaled, 1.0, &cfg(0.5)).unwrap();
    assert_eq!(c.status, Status::Falsified);
}

#[test]
fn theorem2_arithmetic_and_soundness() {
    let p = plant(1, "-x1 + u1");
    let (u, v) = (law("-x1"), law("-x1 + T*x1"));
    let c = cfg(0.5);
    let stl = estimate_stl(u.as_ref(), 1.0, &c).unwrap();
    let stc = estimate_stc(u.as_ref(), v.as_ref(), 1.0, &c).unwrap();
    let e = required_input_radius(&stl, &stc).unwrap();
    let stlc = estimate_stlc(&PlantModel::new(DtModelKind::Euler, p.clone()).unwrap(), 1.0, e, &c).unwrap();
    let pred = predict_epc_from_theorem2(&stlc, &stl, &stc).unwrap();
    let k = stlc.k.unwrap();
    assert!((pred.k_bar - k * (1.0 + stl.k.unwrap())).abs() < 1e-12);
    assert!((pred.k_bar - 2.0).abs() < 0.05);

    let fa = close_loop(DtModelKind::Euler, p.clone(), u).unwrap();
    let fb = close_loop(DtModelKind::Euler, p, v).unwrap();
    let epc = estimate_epc(&fa, &fb, 1.0, &c).unwrap();
    assert_eq!(epc.status, Status::Certified, "{}", epc.reason);
    assert!(epc.k.unwrap() <= 1.1 * pred.k_bar);
    for r in &epc.rho.unwrap().table {
        assert!(r.rho <= 1.1 * pred.rho(r.t) + 1e-12);
    }

    // uncertified premise
    let bad = estimate_stc(law("-x1 + 0.5*x1").as_ref(), law("-x1").as_ref(), 1.0, &c).unwrap();
    assert!(predict_epc_from_theorem2(&stlc, &stl, &bad).is_err());
}

#[test]
fn certificates_are_reproducible() {
    let zero: Arc<dyn ControlLaw> = Arc::new(ZeroLaw { n: 1, m: 0 });
    let euler = close_loop(DtModelKind::Euler, plant(0, "-x1^3"), zero).unwrap();
    let model = Autonomous(euler);
    let a = estimate_stlc(&model, 1.0, 0.0, &cfg(0.2)).unwrap().to_json().unwrap();
    let b = estimate_stlc(&model, 1.0, 0.0, &cfg(0.2)).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}
