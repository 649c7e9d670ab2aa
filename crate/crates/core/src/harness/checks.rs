use super::context::{LawId, MapId, SystemContext};
use super::{CheckId, ItemReport, Outcome, Ref, TheoremReport};
use crate::consistency::{predict_epc_from_theorem2, stc_table, Theorem2Prediction};
use crate::error::Result;
use crate::probe;
use crate::stability::StabilityProperty as P;
use crate::status::Status;
use crate::vecops::norm;

/// Relative allowance on predicted constants.
const PREDICTION_SLACK: f64 = 1.1;
const TRANSITIVITY_SLACK: f64 = 1e-9;

fn item(name: &str, outcome: Outcome, premises: Vec<Ref>, conclusions: Vec<Ref>, note: impl Into<String>) -> ItemReport {
    ItemReport { item: name.into(), outcome, premises, conclusions, note: note.into() }
}

/// The first premise that is not certified, if any.
fn unmet(premises: &[Ref]) -> Option<&Ref> {
    premises.iter().find(|r| !r.status.is_certified())
}

fn skip_note(r: &Ref) -> String {
    format!("premise {} is {}", r.check, r.status)
}

/// Premises must hold; then the conclusion decides.
fn implication(name: &str, premises: Vec<Ref>, conclusion: Ref) -> ItemReport {
    if let Some(r) = unmet(&premises) {
        let note = skip_note(r);
        return item(name, Outcome::Skipped, premises, vec![conclusion], note);
    }
    let (outcome, note) = match conclusion.status {
        Status::Certified => (Outcome::Pass, String::new()),
        Status::Falsified => (Outcome::Fail, format!("conclusion {} falsified with all premises certified", conclusion.check)),
        Status::Inconclusive => (Outcome::Skipped, format!("conclusion {} inconclusive", conclusion.check)),
    };
    item(name, outcome, premises, vec![conclusion], note)
}

/// Premises must hold; then both sides must agree.
fn concordance(name: &str, premises: Vec<Ref>, a: Ref, b: Ref) -> ItemReport {
    if let Some(r) = unmet(&premises) {
        let note = skip_note(r);
        return item(name, Outcome::Skipped, premises, vec![a, b], note);
    }
    let (outcome, note) = if a.status == b.status && a.status != Status::Inconclusive {
        (Outcome::Pass, format!("both {}", a.status))
    } else if a.status.discordant(b.status) {
        (Outcome::Fail, format!("{} is {} but {} is {}", a.check, a.status, b.check, b.status))
    } else {
        (Outcome::Skipped, format!("{} is {} and {} is {}", a.check, a.status, b.check, b.status))
    };
    item(name, outcome, premises, vec![a, b], note)
}

/// A verdict against the catalog expectation.
fn expected(ctx: &SystemContext, name: &str, verdict: Ref, p: P) -> ItemReport {
    match ctx.expectation(p) {
        None => item(name, Outcome::Skipped, vec![], vec![verdict], "expectation not trusted: oracle did not reproduce"),
        Some(want) => {
            let oracle = Ref::new(format!("expected {p}"), want, ctx.entry.oracle);
            concordance(name, vec![], verdict, oracle)
        }
    }
}

fn no_input(ctx: &SystemContext, id: CheckId) -> TheoremReport {
    let it = item("all", Outcome::Skipped, vec![], vec![], "system has no sampled law (m = 0)");
    TheoremReport::new(id, ctx.name(), vec![it], "")
}

pub fn run_check(ctx: &SystemContext, id: CheckId) -> Result<TheoremReport> {
    Ok(match id {
        CheckId::T1 => theorem1(ctx),
        CheckId::T2 => theorem2(ctx),
        CheckId::T3 => theorem3(ctx),
        CheckId::L1 => lemma1(ctx),
        CheckId::L2 => lemma2(ctx),
        CheckId::L3 => lemma3(ctx),
        CheckId::L4 => lemma4(ctx)?,
        CheckId::P1 => proposition1(ctx),
    })
}

/// EPC of Euler and exact loops transfers SPS, LES and SLES.
fn theorem1(ctx: &SystemContext) -> TheoremReport {
    let epc = ctx.epc(MapId::EulerU, MapId::ExactU);
    let items = [("i", P::SpsVsr), ("ii", P::LesVsr), ("iii", P::SlesVsr)]
        .into_iter()
        .map(|(name, p)| {
            let premises = vec![epc.clone()];
            if unmet(&premises).is_some() {
                return concordance(name, premises, Ref::new(format!("{p}(euler_U)"), Status::Inconclusive, "not run"), Ref::new(format!("{p}(exact_U)"), Status::Inconclusive, "not run"));
            }
            concordance(name, premises, ctx.verdict_ref(MapId::EulerU, p), ctx.verdict_ref(MapId::ExactU, p))
        })
        .collect();
    TheoremReport::new(CheckId::T1, ctx.name(), items, "")
}

fn within_prediction(ctx: &SystemContext, pred: &Theorem2Prediction) -> std::result::Result<(), String> {
    let epc = ctx.cert("EPC(euler_U,euler_V)").ok_or("EPC certificate missing")?;
    let k = epc.k.unwrap_or(0.0);
    if k > PREDICTION_SLACK * pred.k_bar + 1e-12 {
        return Err(format!("measured K = {k} exceeds predicted {} by more than 10%", pred.k_bar));
    }
    if let Some(rho) = &epc.rho {
        for r in rho.table.iter().filter(|r| r.t <= pred.t_star) {
            if r.rho > PREDICTION_SLACK * pred.rho(r.t) + 1e-12 {
                return Err(format!("measured rho({}) = {} exceeds predicted {} by more than 10%", r.t, r.rho, pred.rho(r.t)));
            }
        }
    }
    Ok(())
}

/// StLC model, StL law and StC pair give EPC of the two closed loops.
fn theorem2(ctx: &SystemContext) -> TheoremReport {
    if !ctx.has_input() {
        return no_input(ctx, CheckId::T2);
    }
    let stl = ctx.stl(LawId::U);
    let stc = ctx.stc(LawId::U, LawId::V);
    let mut premises = vec![stl, stc];
    if let Some(r) = unmet(&premises) {
        let note = skip_note(r);
        let it = item("EPC", Outcome::Skipped, premises, vec![], note);
        return TheoremReport::new(CheckId::T2, ctx.name(), vec![it], "");
    }
    let Some(e) = ctx.required_e() else {
        let it = item("EPC", Outcome::Skipped, premises, vec![], "input radius E unavailable");
        return TheoremReport::new(CheckId::T2, ctx.name(), vec![it], "");
    };
    premises.push(ctx.stlc_euler("E", e));
    let conclusion = ctx.epc(MapId::EulerU, MapId::EulerV);
    let mut it = implication("EPC", premises, conclusion);
    if it.outcome == Outcome::Pass {
        let certs = (ctx.cert("StLC(euler,E)"), ctx.cert("StL(U)"), ctx.cert("StC(U,V)"));
        if let (Some(a), Some(b), Some(c)) = certs {
            match predict_epc_from_theorem2(&a, &b, &c) {
                Ok(pred) => {
                    ctx.record("T2.prediction", &pred);
                    match within_prediction(ctx, &pred) {
                        Ok(()) => it.note = format!("measured constants within 10% of K_bar = {}, rho = {} s^{}", pred.k_bar, pred.rho_c, pred.rho_p),
                        Err(msg) => {
                            it.outcome = Outcome::Fail;
                            it.note = msg;
                        }
                    }
                }
                Err(e) => {
                    it.outcome = Outcome::Skipped;
                    it.note = format!("prediction unavailable: {e}");
                }
            }
        }
    }
    TheoremReport::new(CheckId::T2, ctx.name(), vec![it], "")
}

fn t3_premises(ctx: &SystemContext) -> Vec<Ref> {
    vec![ctx.origin_ref(), ctx.lipschitz_ref(), ctx.stl(LawId::U), ctx.stc(LawId::Uc, LawId::U)]
}

/// CT properties of the emulated law against VSR properties of the exact loop.
fn theorem3(ctx: &SystemContext) -> TheoremReport {
    if !ctx.has_input() {
        return no_input(ctx, CheckId::T3);
    }
    let premises = t3_premises(ctx);
    let pairs = [("a", P::Les, P::LesVsr), ("b", P::Gales, P::SlesVsr), ("c", P::Ges, P::SesVsr)];
    let items = pairs
        .into_iter()
        .map(|(name, ct, vsr)| {
            if unmet(&premises).is_some() {
                return concordance(name, premises.clone(), Ref::new(ct.name(), Status::Inconclusive, "not run"), Ref::new(format!("{vsr}(exact_U)"), Status::Inconclusive, "not run"));
            }
            concordance(name, premises.clone(), ctx.ct_ref(ct), ctx.verdict_ref(MapId::ExactU, vsr))
        })
        .collect();
    TheoremReport::new(CheckId::T3, ctx.name(), items, "")
}

/// CT verdicts read off `H^e` against the closed-form expectations.
fn lemma1(ctx: &SystemContext) -> TheoremReport {
    let mut items = Vec::new();
    let sps = ctx.verdict_ref(MapId::He, P::SpsVsr);
    let gas = ctx.ct_ref(P::Gas);
    // GAS is read through SS-VSR; SPS-VSR must not contradict it.
    let mut i = expected(ctx, "i", gas.clone(), P::Gas);
    if gas.status.is_certified() && sps.status.is_falsified() {
        i.outcome = Outcome::Fail;
        i.note = "GAS certified but SPS-VSR(He) falsified".into();
    }
    i.conclusions.push(sps);
    items.push(i);
    for (name, p) in [("ii", P::Les), ("iii", P::Gales), ("iv", P::Ges)] {
        items.push(expected(ctx, name, ctx.ct_ref(p), p));
    }
    TheoremReport::new(CheckId::L1, ctx.name(), items, "")
}

/// `|H^e(x,T)| ≤ 2M` on the `M` ball for `T < ln 2 / L(2M)`.
fn escape_bound(ctx: &SystemContext) -> Ref {
    let Some(l) = ctx.lipschitz().filter(|l| l.l_hat.is_finite()) else {
        return Ref::new("escape-bound", Status::Inconclusive, "no finite Lipschitz estimate");
    };
    let horizon = if l.l_hat > 0.0 { std::f64::consts::LN_2 / l.l_hat } else { ctx.cfg.t_bar };
    let m = ctx.cfg.m;
    let map = ctx.map(MapId::He);
    let mut worst: f64 = 0.0;
    for x in probe::ball_points(map.dim(), m, 64, probe::sub_seed(ctx.cfg.seed, 3)) {
        for f in [0.25, 0.5, 0.75, 0.99] {
            match map.step(&x, f * horizon) {
                Ok(y) => worst = worst.max(norm(&y)),
                Err(e) => return Ref::new("escape-bound", Status::Inconclusive, format!("error: {e}")),
            }
        }
    }
    let status = if worst <= 2.0 * m { Status::Certified } else { Status::Falsified };
    Ref::new("escape-bound", status, format!("max |He(x,T)| = {worst:.6} for T < {horizon:.6}, bound {}", 2.0 * m))
}

fn lemma2(ctx: &SystemContext) -> TheoremReport {
    let base = vec![ctx.origin_ref(), ctx.lipschitz_ref()];
    let mut items = vec![implication("i", vec![ctx.origin_ref()], ctx.lipschitz_ref())];

    let stlc = ctx.stlc_he();
    let mut ii = implication("ii", base.clone(), stlc);
    let bound = escape_bound(ctx);
    if ii.outcome == Outcome::Pass && bound.status.is_falsified() {
        ii.outcome = Outcome::Fail;
        ii.note = bound.summary.clone();
    }
    ii.conclusions.push(bound);
    items.push(ii);

    items.push(implication("iii", base.clone(), ctx.epc(MapId::He, MapId::EulerUc)));
    let e = if ctx.has_input() { ctx.cfg.m } else { 0.0 };
    items.push(implication("iv", base.clone(), ctx.stlc_euler("M", e)));

    if ctx.has_input() {
        items.push(implication("v", base.clone(), ctx.stl(LawId::Uc)));
        let stl = ctx.stl(LawId::U);
        let mut vi = base.clone();
        vi.extend([stl.clone(), ctx.stc(LawId::Uc, LawId::U)]);
        items.push(implication("vi", vi, ctx.epc(MapId::EulerUc, MapId::EulerU)));
        let mut vii = base;
        vii.push(stl);
        items.push(implication("vii", vii, ctx.epc(MapId::EulerU, MapId::ExactU)));
    } else {
        for name in ["v", "vi", "vii"] {
            items.push(item(name, Outcome::Skipped, vec![], vec![], "system has no sampled law (m = 0)"));
        }
    }
    TheoremReport::new(CheckId::L2, ctx.name(), items, "")
}

/// SLES-VSR certified implies SS-VSR certified, on every loop.
fn lemma3(ctx: &SystemContext) -> TheoremReport {
    let items = [MapId::ExactU, MapId::EulerU, MapId::He]
        .into_iter()
        .map(|m| implication(m.name(), vec![ctx.verdict_ref(m, P::SlesVsr)], ctx.verdict_ref(m, P::SsVsr)))
        .collect();
    TheoremReport::new(CheckId::L3, ctx.name(), items, "")
}

/// StC is an equivalence relation on `(u_c, U, V)`.
fn lemma4(ctx: &SystemContext) -> Result<TheoremReport> {
    if !ctx.has_input() {
        return Ok(no_input(ctx, CheckId::L4));
    }
    let grid = ctx.consistency_cfg().grid;
    let points = probe::ball_points(ctx.plant.n(), ctx.cfg.m, ctx.cfg.samples, ctx.cfg.seed);
    let laws = [LawId::Uc, LawId::U, LawId::V];
    let table = |a: LawId, b: LawId| -> Result<Vec<f64>> {
        Ok(stc_table(ctx.law(a).as_ref(), ctx.law(b).as_ref(), &points, &grid)?.into_iter().map(|(p, _)| p.rho).collect())
    };
    let verdict = |name: &str, bad: Option<String>| {
        let (outcome, note, status) = match bad {
            None => (Outcome::Pass, String::new(), Status::Certified),
            Some(n) => (Outcome::Fail, n.clone(), Status::Falsified),
        };
        let laws = laws.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ");
        item(name, outcome, vec![], vec![Ref::new(format!("{name}({laws})"), status, format!("{} grid points", grid.len()))], note)
    };

    let mut bad = None;
    for &a in &laws {
        if let Some((t, r)) = grid.iter().zip(table(a, a)?).find(|(_, r)| *r != 0.0) {
            bad = Some(format!("rho({0},{0})({t}) = {r}", a.name()));
            break;
        }
    }
    let reflexive = verdict("reflexivity", bad);

    let mut bad = None;
    'sym: for (i, &a) in laws.iter().enumerate() {
        for &b in &laws[i + 1..] {
            let (ab, ba) = (table(a, b)?, table(b, a)?);
            if let Some(k) = (0..grid.len()).find(|&k| ab[k].to_bits() != ba[k].to_bits()) {
                bad = Some(format!("rho({},{})({}) = {} differs from the swapped table {}", a.name(), b.name(), grid[k], ab[k], ba[k]));
                break 'sym;
            }
        }
    }
    let symmetric = verdict("symmetry", bad);

    let mut bad = None;
    'tr: for &a in &laws {
        for &b in &laws {
            for &c in &laws {
                let (ac, ab, bc) = (table(a, c)?, table(a, b)?, table(b, c)?);
                if let Some(k) = (0..grid.len()).find(|&k| ac[k] > ab[k] + bc[k] + TRANSITIVITY_SLACK) {
                    bad = Some(format!("triangle fails for ({}, {}, {}) at T = {}", a.name(), b.name(), c.name(), grid[k]));
                    break 'tr;
                }
            }
        }
    }
    let transitive = verdict("transitivity", bad);
    Ok(TheoremReport::new(CheckId::L4, ctx.name(), vec![reflexive, symmetric, transitive], ""))
}

/// The chain `H^e → Euler(u_c) → Euler(U) → exact(U)` and its end points.
fn proposition1(ctx: &SystemContext) -> TheoremReport {
    if !ctx.has_input() {
        return no_input(ctx, CheckId::P1);
    }
    let premises = t3_premises(ctx);
    let links = [
        ("link-1", MapId::He, MapId::EulerUc),
        ("link-2", MapId::EulerUc, MapId::EulerU),
        ("link-3", MapId::EulerU, MapId::ExactU),
        ("end-to-end", MapId::He, MapId::ExactU),
    ];
    let items = links
        .into_iter()
        .map(|(name, a, b)| {
            if unmet(&premises).is_some() {
                return implication(name, premises.clone(), Ref::new(format!("EPC({},{})", a.name(), b.name()), Status::Inconclusive, "not run"));
            }
            implication(name, premises.clone(), ctx.epc(a, b))
        })
        .collect();
    TheoremReport::new(CheckId::P1, ctx.name(), items, "")
}
