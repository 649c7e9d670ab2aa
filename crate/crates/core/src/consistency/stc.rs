use super::{rho_decision, slack, t_star, ConsistencyCertificate, ConsistencyConfig, Property, RhoDecision, RhoModel, RhoPoint, Witness};
use crate::dynamics::ControlLaw;
use crate::error::{Error, Result};
use crate::probe;
use crate::status::{par_max, Status};
use crate::vecops::{dist, norm};

fn check_pair(u: &dyn ControlLaw, v: &dyn ControlLaw) -> Result<()> {
    if u.state_dim() != v.state_dim() || u.input_dim() != v.input_dim() {
        return Err(Error::Dimension {
            context: format!("laws `{}` and `{}`", u.name(), v.name()),
            expected: u.input_dim(),
            found: v.input_dim(),
        });
    }
    Ok(())
}

/// `ρ̂(T) = max |U(x,T) - V(x,T)| / |x|` on the grid, with the maximizing
/// point per period.
pub fn stc_table(u: &dyn ControlLaw, v: &dyn ControlLaw, points: &[Vec<f64>], grid: &[f64]) -> Result<Vec<(RhoPoint, Option<usize>)>> {
    check_pair(u, v)?;
    grid.iter()
        .map(|&t| {
            let (rho, arg) = par_max(points, |x| {
                let r = norm(x);
                if r == 0.0 {
                    return Ok(0.0);
                }
                Ok(dist(&u.eval(x, t)?, &v.eval(x, t)?) / r)
            })?;
            Ok((RhoPoint { t, rho: rho.max(0.0), resolved: true }, arg))
        })
        .collect()
}

/// Small-time convergence of two sampled laws on the `M` ball.
pub fn estimate_stc(u: &dyn ControlLaw, v: &dyn ControlLaw, m: f64, cfg: &ConsistencyConfig) -> Result<ConsistencyCertificate> {
    cfg.validate()?;
    if !(m > 0.0) {
        return Err(Error::invalid("M must be positive"));
    }
    let n = u.state_dim();
    let points = probe::ball_points(n, m, cfg.samples, cfg.seed);
    let rows = stc_table(u, v, &points, &cfg.grid)?;
    let model = RhoModel::fit(rows.iter().map(|r| r.0).collect());

    let fresh = probe::ball_points(n, m, cfg.validation_samples, cfg.validation_seed());
    let mut passed = Vec::with_capacity(cfg.grid.len());
    let mut violation = None;
    for &t in &cfg.grid {
        let bound = model.eval(t);
        let (excess, arg) = par_max(&fresh, |x| {
            let a = u.eval(x, t)?;
            let b = v.eval(x, t)?;
            let r = norm(x);
            let gap = dist(&a, &b);
            Ok(gap - bound * r - slack(norm(&a).max(norm(&b)).max(r)))
        })?;
        let ok = excess <= 0.0;
        if !ok && violation.is_none() {
            violation = Some((t, arg.map(|i| fresh[i].clone()), excess));
        }
        passed.push(ok);
    }
    let t_star = t_star(&cfg.grid, &passed);

    let (status, witness, reason) = match rho_decision(&model) {
        RhoDecision::Falsify => {
            let (first, arg) = &rows[0];
            let w = Witness {
                period: Some(first.t),
                x: arg.map(|i| points[i].clone()),
                value: first.rho,
                detail: format!("gap ratio stays at {:.4e} as T shrinks to {:.1e}", first.rho, first.t),
                ..Witness::default()
            };
            (Status::Falsified, Some(w), "ρ̂ has a positive floor as T → 0".to_string())
        }
        RhoDecision::Certify => match violation {
            None => (Status::Certified, None, format!("ρ(T) = {:.4e}·T^{} validated on a fresh sample", model.c, model.p)),
            Some((t, x, excess)) => (
                Status::Inconclusive,
                Some(Witness { period: Some(t), x, value: excess, detail: "validation exceeded the fitted bound".into(), ..Witness::default() }),
                format!("validation failed at T = {t:.3e}"),
            ),
        },
        RhoDecision::Undecided(why) => (Status::Inconclusive, None, why),
    };
    Ok(ConsistencyCertificate {
        property: Property::Stc,
        subject: format!("({}, {})", u.name(), v.name()),
        m,
        e: None,
        k: None,
        k_table: Vec::new(),
        rho: Some(model),
        t_star,
        grid: cfg.grid.clone(),
        samples: cfg.samples,
        validation_samples: cfg.validation_samples,
        seed: cfg.seed,
        status,
        witness,
        reason,
    })
}
