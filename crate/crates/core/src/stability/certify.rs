use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use super::{
    construct_beta_bar, fit_exponential_envelope, run_batch, Batch, EnvelopeFit, EnvelopeOptions, KlTable, Run, Rung, StabilityConfig,
    StabilityProperty as P, StabilityVerdict, Status, CUBIC_RATIO, REVALIDATION_INFLATION, STABLE_RATIO,
};
use crate::dtmodels::{ClosedLoopMap, SampledFlow, Tolerances};
use crate::dynamics::{estimate_lipschitz, CtLaw, Plant};
use crate::error::{Error, Result};
use crate::probe;
use crate::registry::{Options, Registry};

/// Rate drop per doubling of `M` read as a non-exponential global rate.
const SES_DROP: f64 = 2.0;
const FRESH_STREAM: u64 = 0x5eed;

/// A VSR property decision procedure.
pub trait VsrCertifier: Send + Sync {
    fn certify(&self, session: &VsrSession<'_>) -> Result<StabilityVerdict>;
}

struct ByFn(fn(&VsrSession<'_>) -> Result<StabilityVerdict>);

impl VsrCertifier for ByFn {
    fn certify(&self, session: &VsrSession<'_>) -> Result<StabilityVerdict> {
        (self.0)(session)
    }
}

/// Certifiers keyed by lowercase property name.
pub fn certifiers() -> &'static Registry<dyn VsrCertifier> {
    static REG: OnceLock<Registry<dyn VsrCertifier>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn VsrCertifier> = Registry::new("stability property");
        r.register("sps-vsr", "KL table of (|x|-R)+ on the M ball", &[], |_| Ok(Arc::new(ByFn(sps))));
        r.register("les-vsr", "exponential fits on the radius ladder R0, R0/2, R0/4", &[], |_| Ok(Arc::new(ByFn(les))));
        r.register("sles-vsr", "SPS-VSR and LES-VSR together", &[], |_| Ok(Arc::new(ByFn(sles))));
        r.register("ss-vsr", "KL bound without offset, via the beta-bar construction when SLES holds", &[], |_| Ok(Arc::new(ByFn(ss))));
        r.register("ses-vsr", "exponential fits on the M ladder M/4, M/2, M", &[], |_| Ok(Arc::new(ByFn(ses))));
        r
    })
}

/// Shares batches and verdicts between the properties of one map, so a
/// conjunction does not simulate its parts twice.
pub struct VsrSession<'a> {
    pub map: &'a dyn ClosedLoopMap,
    pub cfg: StabilityConfig,
    pub subject: String,
    batches: Mutex<BTreeMap<(u64, bool), Arc<Batch>>>,
    verdicts: Mutex<BTreeMap<P, StabilityVerdict>>,
}

impl<'a> VsrSession<'a> {
    pub fn new(map: &'a dyn ClosedLoopMap, cfg: StabilityConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(VsrSession { map, subject: map.label(), cfg, batches: Mutex::default(), verdicts: Mutex::default() })
    }

    /// The batch on the ball of `radius`; `fresh` draws new directions and
    /// random sequences.
    pub fn batch(&self, radius: f64, fresh: bool) -> Result<Arc<Batch>> {
        let key = (radius.to_bits(), fresh);
        if let Some(b) = self.batches.lock().expect("batch cache").get(&key) {
            return Ok(b.clone());
        }
        let seed = if fresh { probe::sub_seed(self.cfg.seed, FRESH_STREAM) } else { self.cfg.seed };
        let b = Arc::new(run_batch(self.map, radius, self.cfg.t_bar, &self.cfg.batch, seed)?);
        self.batches.lock().expect("batch cache").insert(key, b.clone());
        Ok(b)
    }

    pub fn verdict(&self, property: P) -> Result<StabilityVerdict> {
        if property.is_ct() {
            return as_ct(self.verdict(property.vsr_counterpart())?, property);
        }
        if let Some(v) = self.verdicts.lock().expect("verdict cache").get(&property) {
            return Ok(v.clone());
        }
        let mut v = certifiers().build(&property.key(), &Options::new())?.certify(self)?;
        if v.status.is_certified() {
            v.t_star = Some(self.cfg.t_bar);
        }
        self.verdicts.lock().expect("verdict cache").insert(property, v.clone());
        Ok(v)
    }

    fn fit(&self, batch: &Batch, k_cap: f64) -> Result<EnvelopeFit> {
        fit_exponential_envelope(&batch.traces(), EnvelopeOptions { k_cap, ..EnvelopeOptions::default() })
    }

    fn blank(&self, property: P) -> StabilityVerdict {
        StabilityVerdict::new(property, self.subject.clone(), &self.cfg)
    }
}

/// Relabels a verdict on `H^e` as the matching CT property.
pub fn as_ct(mut v: StabilityVerdict, property: P) -> Result<StabilityVerdict> {
    if !property.is_ct() || property.vsr_counterpart() != v.property {
        return Err(Error::invalid(format!("{} verdict does not decide {property}", v.property)));
    }
    v.property = property;
    Ok(v)
}

pub fn certify_vsr(map: &dyn ClosedLoopMap, property: P, cfg: &StabilityConfig) -> Result<StabilityVerdict> {
    if property.is_ct() {
        return Err(Error::invalid(format!("{property} is a continuous-time property; use certify_ct")));
    }
    VsrSession::new(map, cfg.clone())?.verdict(property)
}

/// Decides a CT property through the sampled flow `H^e` of `ẋ = f(x, u_c(x))`.
pub fn certify_ct(plant: Arc<Plant>, law: CtLaw, property: P, cfg: &StabilityConfig) -> Result<StabilityVerdict> {
    if !property.is_ct() {
        return Err(Error::invalid(format!("{property} is not a continuous-time property")));
    }
    let flow = SampledFlow::new(plant, law, Tolerances::default())?;
    let field = flow.field();
    let lip = estimate_lipschitz(|x, _| field.eval(x), flow.dim(), 0, 2.0 * cfg.m, 0.0, 256, cfg.seed)?;
    if !lip.l_hat.is_finite() {
        return Err(Error::invalid(format!("closed-loop field is not Lipschitz on the {} ball", 2.0 * cfg.m)));
    }
    VsrSession::new(&flow, cfg.clone())?.verdict(property)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TStarSearch {
    pub property: P,
    #[serde(rename = "T_star")]
    pub t_star: f64,
    /// Smallest tested `T̄` that was not certified.
    #[serde(rename = "T_fail")]
    pub t_fail: f64,
    pub evaluations: Vec<(f64, Status)>,
}

/// Bisects `T̄` between a certified low end and an uncertified high end.
pub fn search_t_star(map: &dyn ClosedLoopMap, property: P, cfg: &StabilityConfig, bracket: (f64, f64), iterations: usize) -> Result<TStarSearch> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid(format!("bad T̄ bracket [{lo}, {hi}]")));
    }
    let mut evaluations = Vec::new();
    let mut eval = |t: f64| -> Result<Status> {
        let s = certify_vsr(map, property, &cfg.clone().t_bar(t))?.status;
        evaluations.push((t, s));
        Ok(s)
    };
    let at_lo = eval(lo)?;
    let at_hi = eval(hi)?;
    if !at_lo.is_certified() || at_hi.is_certified() {
        return Err(Error::NoSignChange { lo, hi, detail: format!("{property} is {at_lo} at the low end and {at_hi} at the high end") });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = 0.5 * (a + b);
        if eval(mid)?.is_certified() {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(TStarSearch { property, t_star: a, t_fail: b, evaluations })
}

fn ratios(rungs: &[Rung]) -> Vec<f64> {
    rungs.windows(2).map(|w| w[0].fit.lambda / w[1].fit.lambda).collect()
}

fn within(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

/// The run that decayed least over its own horizon.
fn slowest(batch: &Batch) -> &Run {
    let decay = |r: &Run| r.trace.r.last().copied().unwrap_or(0.0) / r.trace.r0();
    batch.runs.iter().fold(&batch.runs[0], |best, r| if decay(r) > decay(best) { r } else { best })
}

fn diverged(v: &mut StabilityVerdict, batch: &Batch) -> bool {
    match batch.first_divergence() {
        Some(w) => {
            v.status = Status::Falsified;
            v.reason = format!("divergent trajectory from the ball of radius {}", batch.descriptor.radius);
            v.witness = Some(w);
            true
        }
        None => false,
    }
}

/// Fits each rung of a ladder; `None` when a batch diverged.
fn ladder(s: &VsrSession<'_>, v: &mut StabilityVerdict, radii: &[f64], k_cap: f64) -> Result<Option<Vec<Arc<Batch>>>> {
    let mut batches = Vec::new();
    for &r in radii {
        let b = s.batch(r, false)?;
        v.batches.push(b.descriptor.clone());
        if diverged(v, &b) {
            return Ok(None);
        }
        v.rungs.push(Rung { radius: r, fit: s.fit(&b, k_cap)? });
        batches.push(b);
    }
    v.rung_ratios = ratios(&v.rungs);
    Ok(Some(batches))
}

/// Replays `(K, λ)` on a fresh batch of `radius`; sets the final status.
fn revalidate(s: &VsrSession<'_>, v: &mut StabilityVerdict, radius: f64, what: &str) -> Result<()> {
    let k = v.rungs.iter().map(|r| r.fit.k).fold(1.0, f64::max);
    let lambda = v.rungs.iter().map(|r| r.fit.lambda).fold(f64::INFINITY, f64::min);
    v.k = Some(k);
    v.lambda = Some(lambda);
    let fresh = s.batch(radius, true)?;
    v.batches.push(fresh.descriptor.clone());
    if diverged(v, &fresh) {
        return Ok(());
    }
    let env = EnvelopeFit { k, lambda, ..v.rungs[0].fit };
    if env.holds_on(&fresh.traces(), REVALIDATION_INFLATION) {
        v.status = Status::Certified;
        v.reason = format!("{what}; K = {k:.4}, λ = {lambda:.4} hold on a fresh batch with K inflated ≤ 10%");
    } else {
        v.status = Status::Inconclusive;
        v.reason = format!("{what}, but a fresh batch needs K inflated by more than 10%");
    }
    Ok(())
}

fn les(s: &VsrSession<'_>) -> Result<StabilityVerdict> {
    let cfg = &s.cfg;
    let mut v = s.blank(P::LesVsr);
    v.r = Some(cfg.r0);
    let radii = [cfg.r0, cfg.r0 / 2.0, cfg.r0 / 4.0];
    let Some(batches) = ladder(s, &mut v, &radii, cfg.k_cap)? else {
        return Ok(v);
    };
    let rs = v.rung_ratios.clone();
    let last = batches.last().expect("three rungs");
    if let Some(i) = v.rungs.iter().position(|r| !r.fit.feasible) {
        v.status = Status::Falsified;
        v.reason = format!("no rate ≥ λ_min with K ≤ {} on the R = {} rung", cfg.k_cap, radii[i]);
        v.witness = Some(batches[i].witness(slowest(&batches[i]), "slowest decay on the rung"));
    } else if rs.iter().all(|&q| within(q, STABLE_RATIO)) {
        revalidate(s, &mut v, cfg.r0, "λ̂ stable across radius halvings")?;
    } else if rs.iter().all(|&q| within(q, CUBIC_RATIO)) {
        v.status = Status::Falsified;
        v.reason = format!("non-exponential: λ̂ shrinks by {} per radius halving, rate ∝ R²", fmt_ratios(&rs));
        v.witness = Some(last.witness(slowest(last), "slowest decay on the smallest rung"));
    } else if rs.iter().all(|&q| q > STABLE_RATIO.1) {
        v.status = Status::Falsified;
        v.reason = format!("non-exponential: λ̂ decreases toward 0 as R shrinks (ratios {})", fmt_ratios(&rs));
        v.witness = Some(last.witness(slowest(last), "slowest decay on the smallest rung"));
    } else {
        v.reason = format!("λ̂ ratios {} fit neither rule", fmt_ratios(&rs));
    }
    Ok(v)
}

fn fmt_ratios(rs: &[f64]) -> String {
    rs.iter().map(|q| format!("{q:.3}")).collect::<Vec<_>>().join(", ")
}

fn ses(s: &VsrSession<'_>) -> Result<StabilityVerdict> {
    let cfg = &s.cfg;
    let mut v = s.blank(P::SesVsr);
    let local = s.verdict(P::LesVsr)?;
    v.components.push(local.component());
    if local.status.is_falsified() {
        v.status = Status::Falsified;
        v.reason = format!("LES-VSR fails: {}", local.reason);
        v.witness = local.witness.clone();
        return Ok(v);
    }
    let k_ref = local.k.unwrap_or_else(|| local.rungs.iter().map(|r| r.fit.k).fold(1.0, f64::max));
    let cap = (REVALIDATION_INFLATION * k_ref).min(cfg.k_cap);
    let radii = [cfg.m / 4.0, cfg.m / 2.0, cfg.m];
    let Some(batches) = ladder(s, &mut v, &radii, cap)? else {
        return Ok(v);
    };
    let rs = v.rung_ratios.clone();
    let drops = v.rungs.windows(2).all(|w| !w[1].fit.feasible || w[0].fit.lambda >= SES_DROP * w[1].fit.lambda);
    if drops {
        let top = batches.last().expect("three rungs");
        v.status = Status::Falsified;
        v.reason = format!("λ̂ falls by ≥ {SES_DROP}× per doubling of M with K ≤ {cap:.4} (ratios {})", fmt_ratios(&rs));
        v.witness = Some(top.witness(slowest(top), "slowest decay on the largest ball"));
    } else if v.rungs.iter().all(|r| r.fit.feasible) && rs.iter().all(|&q| within(q, STABLE_RATIO)) {
        revalidate(s, &mut v, cfg.m, "λ̂ stable across doublings of M")?;
    } else {
        v.reason = format!("λ̂ ratios {} over the M ladder are undecided", fmt_ratios(&rs));
    }
    Ok(v)
}

fn sps(s: &VsrSession<'_>) -> Result<StabilityVerdict> {
    let cfg = &s.cfg;
    let mut v = s.blank(P::SpsVsr);
    let offset = cfg.offset();
    v.r = Some(offset);
    let batch = s.batch(cfg.m, false)?;
    v.batches.push(batch.descriptor.clone());
    if diverged(&mut v, &batch) {
        return Ok(v);
    }
    let table = KlTable::fit(&batch.traces(), offset)?;
    let stalled = table.stalled_rows();
    let undecayed = table.undecayed_rows();
    if let Some(&i) = stalled.first() {
        v.status = Status::Falsified;
        v.reason = format!("no decay toward the R = {offset:.4} ball from |x0| = {:.4}", table.s[i]);
        v.witness = Some(batch.witness(slowest(&batch), "slowest decay"));
    } else if !undecayed.is_empty() {
        v.reason = format!("{} table rows decay less than {}× within the horizon {:.3}", undecayed.len(), 1.0 / super::KL_DECAY, table.horizon());
    } else {
        let fresh = s.batch(cfg.m, true)?;
        v.batches.push(fresh.descriptor.clone());
        if !diverged(&mut v, &fresh) {
            match table.dominates(&fresh.traces(), REVALIDATION_INFLATION) {
                None => {
                    v.status = Status::Certified;
                    v.reason = format!("KL table of (|x|−{offset:.4})₊ decays ≥ {}× and bounds a fresh batch", 1.0 / super::KL_DECAY);
                }
                Some((n, _)) => {
                    v.reason = "fresh batch exceeds the KL table by more than 10%".into();
                    v.witness = Some(fresh.witness(&fresh.runs[n], "exceeds the table"));
                }
            }
        }
    }
    v.kl_table = Some(table);
    Ok(v)
}

fn sles(s: &VsrSession<'_>) -> Result<StabilityVerdict> {
    let mut v = s.blank(P::SlesVsr);
    let parts = [s.verdict(P::SpsVsr)?, s.verdict(P::LesVsr)?];
    v.components = parts.iter().map(StabilityVerdict::component).collect();
    let local = &parts[1];
    v.r = local.r;
    v.k = local.k;
    v.lambda = local.lambda;
    v.rungs = local.rungs.clone();
    v.rung_ratios = local.rung_ratios.clone();
    v.kl_table = parts[0].kl_table.clone();
    v.batches = parts.iter().flat_map(|p| p.batches.clone()).collect();
    if let Some(bad) = parts.iter().find(|p| p.status.is_falsified()) {
        v.status = Status::Falsified;
        v.reason = format!("{} fails: {}", bad.property, bad.reason);
        v.witness = bad.witness.clone();
    } else if parts.iter().all(|p| p.status.is_certified()) {
        v.status = Status::Certified;
        v.reason = "SPS-VSR and LES-VSR both certified".into();
    } else {
        v.reason = "a component is inconclusive".into();
    }
    Ok(v)
}

fn ss(s: &VsrSession<'_>) -> Result<StabilityVerdict> {
    let cfg = &s.cfg;
    let mut v = s.blank(P::SsVsr);
    let practical = s.verdict(P::SpsVsr)?;
    let both = s.verdict(P::SlesVsr)?;
    v.components = vec![practical.component(), both.component()];
    if practical.status.is_falsified() {
        v.status = Status::Falsified;
        v.reason = format!("SPS-VSR fails: {}", practical.reason);
        v.witness = practical.witness.clone();
        return Ok(v);
    }
    let batch = s.batch(cfg.m, false)?;
    let fresh = s.batch(cfg.m, true)?;
    v.batches = vec![batch.descriptor.clone(), fresh.descriptor.clone()];
    if diverged(&mut v, &fresh) {
        return Ok(v);
    }
    let table = KlTable::fit(&batch.traces(), 0.0)?;
    if both.status.is_certified() {
        let (k, r, lambda) = (both.k.unwrap_or(1.0), both.r.unwrap_or(cfg.r0), both.lambda.unwrap_or(0.0));
        v.k = Some(k);
        v.r = Some(r);
        v.lambda = Some(lambda);
        let bar = construct_beta_bar(Arc::new(table.clone()), k, r, lambda, cfg.m)?;
        v.beta_bar = Some(bar.report.clone());
        let mut traces = batch.traces();
        traces.extend(fresh.traces());
        match bar.dominates(&traces) {
            None => {
                v.status = Status::Certified;
                v.reason = "β̄ built from the LES constants and the KL table dominates both batches".into();
            }
            Some((n, _)) => {
                let run = if n < batch.runs.len() { (&batch, n) } else { (&fresh, n - batch.runs.len()) };
                v.reason = "β̄ does not dominate every trajectory".into();
                v.witness = Some(run.0.witness(&run.0.runs[run.1], "exceeds β̄"));
            }
        }
    } else if !table.undecayed_rows().is_empty() {
        v.reason = format!("KL table does not decay {}× within the horizon {:.3}", 1.0 / super::KL_DECAY, table.horizon());
    } else {
        match table.dominates(&fresh.traces(), REVALIDATION_INFLATION) {
            None => {
                v.status = Status::Certified;
                v.reason = format!("KL table of |x| decays ≥ {}× and bounds a fresh batch", 1.0 / super::KL_DECAY);
            }
            Some((n, _)) => {
                v.reason = "fresh batch exceeds the KL table by more than 10%".into();
                v.witness = Some(fresh.witness(&fresh.runs[n], "exceeds the table"));
            }
        }
    }
    v.kl_table = Some(table);
    Ok(v)
}
