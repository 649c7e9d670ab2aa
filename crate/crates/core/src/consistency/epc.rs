use super::{rho_decision, slack, t_star, ConsistencyCertificate, ConsistencyConfig, GridValue, Property, RhoDecision, RhoModel, RhoPoint, Witness, MARGIN};
use crate::dtmodels::ClosedLoopMap;
use crate::error::{Error, Result};
use crate::probe;
use crate::status::{par_max, Status};
use crate::vecops::{dist, norm};

/// A diagonal estimate counts as resolved when the raw mismatch is this
/// many times the combined accuracy floor.
const RESOLVE_FACTOR: f64 = 100.0;

/// Equilibrium-preserving consistency of two closed-loop maps on the `M`
/// ball, fitted in two stages: the diagonal mismatch gives `ρ̂(T)`, then
/// pairs give the incremental constant `K̂` net of the `ρ̂` term.
///
/// Both stages subtract the maps' declared accuracy floors, so an
/// integrated map contributes no spurious mismatch at tiny periods.
pub fn estimate_epc(fa: &dyn ClosedLoopMap, fb: &dyn ClosedLoopMap, m: f64, cfg: &ConsistencyConfig) -> Result<ConsistencyCertificate> {
    cfg.validate()?;
    if !(m > 0.0) {
        return Err(Error::invalid("M must be positive"));
    }
    if fa.dim() != fb.dim() {
        return Err(Error::Dimension { context: "EPC maps".into(), expected: fa.dim(), found: fb.dim() });
    }
    let n = fa.dim();
    let acc = |x: &[f64], y: &[f64]| fa.accuracy(norm(x)) + fb.accuracy(norm(y));

    let points = probe::ball_points(n, m, cfg.samples, cfg.seed);
    let mut rows = Vec::with_capacity(cfg.grid.len());
    for &t in &cfg.grid {
        let (rho, arg) = par_max(&points, |x| {
            let r = norm(x);
            let gap = dist(&fa.step(x, t)?, &fb.step(x, t)?);
            Ok((gap - acc(x, x)).max(0.0) / (t * r))
        })?;
        let resolved = match arg {
            Some(i) => {
                let x = &points[i];
                let floor = acc(x, x);
                floor == 0.0 || rho * t * norm(x) >= (RESOLVE_FACTOR - 1.0) * floor
            }
            None => true,
        };
        rows.push((RhoPoint { t, rho: rho.max(0.0), resolved }, arg));
    }
    let model = RhoModel::fit(rows.iter().map(|r| r.0).collect());

    let pairs = probe::ball_pairs(n, m, (cfg.samples / 4).max(2), probe::sub_seed(cfg.seed, 7), probe::NEAR_DECADES);
    let mut k_table = Vec::with_capacity(cfg.grid.len());
    for (row, &t) in rows.iter().zip(&cfg.grid) {
        let rho = row.0.rho;
        let (k, _) = par_max(&pairs, |(x, y)| {
            let d = dist(x, y);
            let gap = dist(&fa.step(x, t)?, &fb.step(y, t)?);
            Ok((gap - d - t * rho * norm(x).max(norm(y)) - acc(x, y)).max(0.0) / (t * d))
        })?;
        k_table.push(GridValue { t, value: k.max(0.0) });
    }
    let k = k_table.iter().map(|g| g.value).fold(0.0, f64::max) * MARGIN;

    let vseed = cfg.validation_seed();
    let mut fresh: Vec<(Vec<f64>, Vec<f64>)> = probe::ball_points(n, m, cfg.validation_samples / 2, vseed).into_iter().map(|x| (x.clone(), x)).collect();
    fresh.extend(probe::ball_pairs(n, m, (cfg.validation_samples / 8).max(2), probe::sub_seed(vseed, 1), probe::NEAR_DECADES));
    let mut passed = Vec::new();
    let mut violation = None;
    for &t in &cfg.grid {
        let bound_rho = model.eval(t);
        let (excess, arg) = par_max(&fresh, |(x, y)| {
            let a = fa.step(x, t)?;
            let b = fb.step(y, t)?;
            let bound = (1.0 + k * t) * dist(x, y) + t * bound_rho * norm(x).max(norm(y)) + acc(x, y);
            Ok(dist(&a, &b) - bound - slack(norm(&a).max(norm(&b))))
        })?;
        if excess > 0.0 && violation.is_none() {
            violation = Some((t, arg, excess));
        }
        passed.push(excess <= 0.0);
    }
    let t_star_v = t_star(&cfg.grid, &passed);

    let (status, witness, reason) = match rho_decision(&model) {
        RhoDecision::Falsify => {
            let (first, arg) = &rows[0];
            let w = Witness {
                period: Some(first.t),
                x: arg.map(|i| points[i].clone()),
                value: first.rho,
                detail: format!("one-step mismatch / (T|x|) = {:.4e} at T = {:.1e}", first.rho, first.t),
                ..Witness::default()
            };
            (Status::Falsified, Some(w), "ρ̂ has a positive floor as T → 0".to_string())
        }
        RhoDecision::Certify => match violation {
            None => (Status::Certified, None, format!("K = {k:.4e}, ρ(T) = {:.4e}·T^{} validated on a fresh sample", model.c, model.p)),
            Some((t, arg, excess)) => {
                let w = Witness {
                    period: Some(t),
                    x: arg.map(|i| fresh[i].0.clone()),
                    y: arg.map(|i| fresh[i].1.clone()),
                    value: excess,
                    detail: "fresh pair exceeds the fitted bound".into(),
                    ..Witness::default()
                };
                (Status::Inconclusive, Some(w), format!("validation failed at T = {t:.3e}"))
            }
        },
        RhoDecision::Undecided(why) => (Status::Inconclusive, None, why),
    };
    Ok(ConsistencyCertificate {
        property: Property::Epc,
        subject: format!("({}, {})", fa.label(), fb.label()),
        m,
        e: None,
        k: Some(k),
        k_table,
        rho: Some(model),
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
