use super::{growth, slack, t_star, ConsistencyCertificate, ConsistencyConfig, GridValue, Property, Witness, MARGIN};
use crate::dtmodels::OpenLoopModel;
use crate::error::{Error, Result};
use crate::probe;
use crate::status::{par_max, Status};
use crate::vecops::{dist, norm};

/// Allowed growth of `K̂` when the grid gains a decade and samples double.
const STABLE_RATIO: f64 = 1.25;

/// One probe: a state pair under a common input, or an input pair at a
/// common state.
enum Probe {
    State { x: Vec<f64>, y: Vec<f64>, u: Vec<f64> },
    Input { x: Vec<f64>, u: Vec<f64>, v: Vec<f64> },
}

fn probes(n: usize, m: usize, radius_x: f64, radius_u: f64, count: usize, seed: u64) -> Vec<Probe> {
    let xs = probe::ball_points(n, radius_x, count, seed);
    let us = probe::ball_points(m, radius_u, count, probe::sub_seed(seed, 1));
    let xpairs = probe::ball_pairs(n, radius_x, count, probe::sub_seed(seed, 2), probe::NEAR_DECADES);
    let upairs = probe::ball_pairs(m, radius_u, count, probe::sub_seed(seed, 3), probe::NEAR_DECADES);
    let mut out = Vec::with_capacity(xpairs.len() + upairs.len());
    for (i, (x, y)) in xpairs.into_iter().enumerate() {
        out.push(Probe::State { x, y, u: us[i % us.len()].clone() });
    }
    for (i, (u, v)) in upairs.into_iter().enumerate() {
        out.push(Probe::Input { x: xs[i % xs.len()].clone(), u, v });
    }
    out
}

fn k_table(model: &dyn OpenLoopModel, probes: &[Probe], grid: &[f64]) -> Result<Vec<(f64, Option<usize>)>> {
    grid.iter()
        .map(|&t| {
            par_max(probes, |p| match p {
                Probe::State { x, y, u } => {
                    let acc = model.accuracy(norm(x)) + model.accuracy(norm(y));
                    let d = dist(x, y);
                    Ok((dist(&model.step(x, u, t)?, &model.step(y, u, t)?) - d - acc) / (t * d))
                }
                Probe::Input { x, u, v } => {
                    let acc = 2.0 * model.accuracy(norm(x));
                    Ok((dist(&model.step(x, u, t)?, &model.step(x, v, t)?) - acc) / (t * dist(u, v)))
                }
            })
            .map(|(k, i)| (k.max(0.0), i))
        })
        .collect()
}

fn max_of(table: &[(f64, Option<usize>)]) -> (f64, usize) {
    table.iter().enumerate().fold((0.0, 0), |acc, (i, (k, _))| if *k > acc.0 { (*k, i) } else { acc })
}

/// Small-time Lipschitz consistency of an open-loop model on the `M` state
/// ball and `E` input ball.
pub fn estimate_stlc(model: &dyn OpenLoopModel, m: f64, e: f64, cfg: &ConsistencyConfig) -> Result<ConsistencyCertificate> {
    cfg.validate()?;
    if !(m >= 0.0 && e >= 0.0) {
        return Err(Error::invalid("M and E must be nonnegative"));
    }
    let (n, mu) = (model.state_dim(), model.input_dim());
    let count = (cfg.samples / 4).max(2);
    let base = probes(n, mu, m, e, count, cfg.seed);
    let table = k_table(model, &base, &cfg.grid)?;
    let refined_grid = cfg.refined_grid();
    let refined_probes = probes(n, mu, m, e, 2 * count, cfg.seed);
    let refined = k_table(model, &refined_probes, &refined_grid)?;
    let (k0, _) = max_of(&table);
    let (k1, i1) = max_of(&refined);
    let k = k0.max(k1) * MARGIN;
    let ratio = growth(k1, k0);

    // joint inequality on fresh mixed pairs
    let vseed = cfg.validation_seed();
    let vcount = (cfg.validation_samples / 4).max(2);
    let xpairs = probe::ball_pairs(n, m, vcount, vseed, probe::NEAR_DECADES);
    let upairs = probe::ball_pairs(mu, e, vcount, probe::sub_seed(vseed, 1), probe::NEAR_DECADES);
    let us = probe::ball_points(mu, e, vcount, probe::sub_seed(vseed, 2));
    let mixed: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = xpairs
        .iter()
        .enumerate()
        .map(|(i, (x, y))| match upairs.get(i % upairs.len().max(1)) {
            Some((u, v)) if i % 2 == 0 => (x.clone(), y.clone(), u.clone(), v.clone()),
            _ => {
                let u = us[i % us.len()].clone();
                (x.clone(), y.clone(), u.clone(), u)
            }
        })
        .collect();
    let mut passed = Vec::new();
    let mut violation = None;
    for &t in &cfg.grid {
        let (excess, arg) = par_max(&mixed, |(x, y, u, v)| {
            let a = model.step(x, u, t)?;
            let b = model.step(y, v, t)?;
            let acc = model.accuracy(norm(x)) + model.accuracy(norm(y));
            let bound = (1.0 + k * t) * dist(x, y) + k * t * dist(u, v) + acc;
            Ok(dist(&a, &b) - bound - slack(norm(&a).max(norm(&b))))
        })?;
        if excess > 0.0 && violation.is_none() {
            violation = Some((t, arg, excess));
        }
        passed.push(excess <= 0.0);
    }
    let t_star_v = t_star(&cfg.grid, &passed);

    let (status, witness, reason) = if ratio > STABLE_RATIO && i1 == 0 {
        let w = match refined[0].1.map(|j| &refined_probes[j]) {
            Some(Probe::State { x, y, u }) => Witness { x: Some(x.clone()), y: Some(y.clone()), u: Some(u.clone()), ..Witness::default() },
            Some(Probe::Input { x, u, v }) => Witness { x: Some(x.clone()), u: Some(u.clone()), v: Some(v.clone()), ..Witness::default() },
            None => Witness::default(),
        };
        let w = Witness {
            period: Some(refined_grid[0]),
            value: k1,
            detail: format!("K̂ grew {ratio:.3}× with one more decade of T, peaking at the smallest period"),
            ..w
        };
        (Status::Falsified, Some(w), "mismatch does not scale with T as T → 0".to_string())
    } else if ratio <= STABLE_RATIO {
        match violation {
            None => (Status::Certified, None, format!("K = {k:.4e} stable under refinement")),
            Some((t, arg, excess)) => {
                let w = arg.map(|j| &mixed[j]).map_or_else(Witness::default, |(x, y, u, v)| Witness {
                    x: Some(x.clone()),
                    y: Some(y.clone()),
                    u: Some(u.clone()),
                    v: Some(v.clone()),
                    ..Witness::default()
                });
                (
                    Status::Inconclusive,
                    Some(Witness { period: Some(t), value: excess, detail: "joint inequality violated on a fresh pair".into(), ..w }),
                    format!("validation failed at T = {t:.3e}"),
                )
            }
        }
    } else {
        (Status::Inconclusive, None, format!("K̂ moved {ratio:.3}× under refinement"))
    };
    Ok(ConsistencyCertificate {
        property: Property::Stlc,
        subject: model.label(),
        m,
        e: Some(e),
        k: Some(k),
        k_table: cfg.grid.iter().zip(&table).map(|(&t, (v, _))| GridValue { t, value: *v }).collect(),
        rho: None,
        t_star: t_star_v,
        grid: cfg.grid.clone(),
        samples: cfg.samples,
        validation_samples: cfg.validation_samples,
        seed: cfg.seed,
        status,
        witness,
        reason,
    })
}
