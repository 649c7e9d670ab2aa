use super::{growth, slack, t_star, ConsistencyCertificate, ConsistencyConfig, GridValue, Property, Witness, MARGIN};
use crate::dynamics::{ControlLaw, ORIGIN_TOL};
use crate::error::{Error, Result};
use crate::probe;
use crate::status::{par_max, Status};
use crate::vecops::{dist, norm};

/// Allowed growth of `K̂` per sample doubling before it counts as unstable.
const STABLE_RATIO: f64 = 1.1;

type Pairs = Vec<(Vec<f64>, Vec<f64>)>;

fn k_table(u: &dyn ControlLaw, pairs: &Pairs, grid: &[f64]) -> Result<Vec<(f64, Option<usize>)>> {
    grid.iter()
        .map(|&t| par_max(pairs, |(x, y)| Ok(dist(&u.eval(x, t)?, &u.eval(y, t)?) / dist(x, y))))
        .collect()
}

fn max_of(table: &[(f64, Option<usize>)]) -> (f64, usize) {
    table.iter().enumerate().fold((0.0, 0), |acc, (i, (k, _))| if *k > acc.0 { (*k, i) } else { acc })
}

/// Small-time Lipschitz continuity of a sampled law on the `M` ball.
///
/// `K̂` is computed at three sample levels, each doubling the point count
/// and probing one decade closer pairs. It is certified when the last
/// level stays within 10% of the first, and falsified when it grows by
/// more than 10% per doubling over the two.
pub fn estimate_stl(u: &dyn ControlLaw, m: f64, cfg: &ConsistencyConfig) -> Result<ConsistencyCertificate> {
    cfg.validate()?;
    if !(m > 0.0) {
        return Err(Error::invalid("M must be positive"));
    }
    let n = u.state_dim();
    let zero = vec![0.0; n];
    let mut origin = None;
    for &t in &cfg.grid {
        let v = norm(&u.eval(&zero, t)?);
        if v > ORIGIN_TOL && origin.is_none() {
            origin = Some((t, v));
        }
    }

    let base = (cfg.samples / 4).max(2);
    let mut levels = Vec::new();
    let mut level_pairs = Vec::new();
    for (lvl, extra) in [(1usize, 0), (2, 1), (4, 2)] {
        let pairs = probe::ball_pairs(n, m, base * lvl, cfg.seed, 1..=6 + extra);
        let table = k_table(u, &pairs, &cfg.grid)?;
        levels.push(table);
        level_pairs.push(pairs);
    }
    let ks: Vec<f64> = levels.iter().map(|t| max_of(t).0).collect();
    let k = ks.iter().copied().fold(0.0, f64::max) * MARGIN;
    let last = levels.last().expect("three levels");

    let fresh = probe::ball_pairs(n, m, (cfg.validation_samples / 4).max(2), cfg.validation_seed(), 1..=6);
    let mut passed = Vec::new();
    let mut violation = None;
    for &t in &cfg.grid {
        let (excess, arg) = par_max(&fresh, |(x, y)| {
            let a = u.eval(x, t)?;
            let b = u.eval(y, t)?;
            Ok(dist(&a, &b) - k * dist(x, y) - slack(norm(&a).max(norm(&b))))
        })?;
        if excess > 0.0 && violation.is_none() {
            violation = Some((t, arg, excess));
        }
        passed.push(excess <= 0.0);
    }
    let t_star_v = t_star(&cfg.grid, &passed);

    let (r1, r2) = (growth(ks[1], ks[0]), growth(ks[2], ks[1]));
    let (status, witness, reason) = if let Some((t, v)) = origin {
        let w = Witness { period: Some(t), x: Some(zero.clone()), value: v, detail: format!("|U(0,T)| = {v:.3e}"), ..Witness::default() };
        (Status::Falsified, Some(w), "U(0,T) ≠ 0 on the period grid".to_string())
    } else if growth(ks[2], ks[0]) > STABLE_RATIO * STABLE_RATIO {
        let (kmax, i) = max_of(last);
        let pair = last[i].1.map(|j| &level_pairs[2][j]);
        let w = Witness {
            period: Some(cfg.grid[i]),
            x: pair.map(|p| p.0.clone()),
            y: pair.map(|p| p.1.clone()),
            value: kmax,
            detail: format!("K̂ grew {:.3}× then {:.3}× under sample doubling", r1, r2),
            ..Witness::default()
        };
        (Status::Falsified, Some(w), "difference quotients grow without bound as pairs approach".to_string())
    } else if growth(ks[2], ks[0]) <= STABLE_RATIO {
        match violation {
            None => (Status::Certified, None, format!("K = {k:.4e} stable under sample doubling")),
            Some((t, arg, excess)) => (
                Status::Inconclusive,
                Some(Witness {
                    period: Some(t),
                    x: arg.map(|j| fresh[j].0.clone()),
                    y: arg.map(|j| fresh[j].1.clone()),
                    value: excess,
                    detail: "validation exceeded K".into(),
                    ..Witness::default()
                }),
                format!("validation failed at T = {t:.3e}"),
            ),
        }
    } else {
        (Status::Inconclusive, None, format!("K̂ not settled: levels {:.4e}, {:.4e}, {:.4e}", ks[0], ks[1], ks[2]))
    };
    Ok(ConsistencyCertificate {
        property: Property::Stl,
        subject: u.name().to_string(),
        m,
        e: None,
        k: Some(k),
        k_table: cfg.grid.iter().zip(last).map(|(&t, (v, _))| GridValue { t, value: *v }).collect(),
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
