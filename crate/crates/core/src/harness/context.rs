use std::cell::RefCell;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use super::catalog::{CatalogEntry, OracleCheck};
use super::{HarnessConfig, Ref};
use crate::consistency::{
    estimate_epc, estimate_stc, estimate_stl, estimate_stlc, required_input_radius, ConsistencyCertificate, ConsistencyConfig,
};
use crate::dtmodels::{close_loop, Autonomous, ClosedLoopMap, DtModelKind, ModelLoop, PlantModel, SampledFlow, Tolerances};
use crate::dynamics::{check_origin, estimate_lipschitz, AtZeroPeriod, CtLaw, DtLaw, LipschitzEstimate, OriginReport, Plant};
use crate::error::Result;
use crate::stability::{as_ct, StabilityConfig, StabilityProperty as P, StabilityVerdict, VsrSession};
use crate::status::Status;

/// The closed loops a system gives rise to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MapId {
    /// `H^e`, the sampled continuous-time closed loop.
    He,
    ExactU,
    EulerU,
    EulerUc,
    EulerV,
}

impl MapId {
    pub fn name(self) -> &'static str {
        match self {
            MapId::He => "He",
            MapId::ExactU => "exact_U",
            MapId::EulerU => "euler_U",
            MapId::EulerUc => "euler_Uc",
            MapId::EulerV => "euler_V",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LawId {
    Uc,
    U,
    V,
}

impl LawId {
    pub fn name(self) -> &'static str {
        match self {
            LawId::Uc => "u_c",
            LawId::U => "U",
            LawId::V => "V",
        }
    }
}

/// Lazily computed certificates and verdicts for one catalog system.
pub struct SystemContext {
    pub entry: &'static CatalogEntry,
    pub cfg: HarnessConfig,
    pub plant: Arc<Plant>,
    pub u_c: CtLaw,
    pub u: DtLaw,
    pub v: DtLaw,
    he: SampledFlow,
    exact_u: ModelLoop,
    euler_u: ModelLoop,
    euler_uc: ModelLoop,
    euler_v: ModelLoop,
    oracle: Option<OracleCheck>,
    origin: OriginReport,
    lipschitz: Option<LipschitzEstimate>,
    certs: RefCell<BTreeMap<String, ConsistencyCertificate>>,
    verdicts: RefCell<BTreeMap<(MapId, P), StabilityVerdict>>,
    extra: RefCell<BTreeMap<String, serde_json::Value>>,
}

impl SystemContext {
    pub fn new(entry: &'static CatalogEntry, cfg: HarnessConfig) -> Result<Self> {
        let plant = entry.plant()?;
        let u_c = entry.ct_law()?;
        let u = entry.dt_law()?;
        let v: DtLaw = match entry.alt_dt_law()? {
            Some(v) => v,
            None => Arc::new(AtZeroPeriod::new(u.clone())),
        };
        let he = SampledFlow::new(plant.clone(), u_c.clone(), Tolerances::default())?;
        let exact_u = close_loop(DtModelKind::exact(), plant.clone(), u.clone())?;
        let euler_u = close_loop(DtModelKind::Euler, plant.clone(), u.clone())?;
        let euler_uc = close_loop(DtModelKind::Euler, plant.clone(), u_c.clone())?;
        let euler_v = close_loop(DtModelKind::Euler, plant.clone(), v.clone())?;
        let oracle = entry.check_oracle().ok();
        let grid = ConsistencyConfig::new(cfg.t_bar).grid;
        let origin = check_origin(&plant, Some(u_c.as_ref()), Some(u.as_ref()), &grid);
        let field = he.field();
        let lipschitz = estimate_lipschitz(|x, _| field.eval(x), plant.n(), 0, 2.0 * cfg.m, 0.0, cfg.samples, cfg.seed).ok();
        Ok(SystemContext {
            entry,
            cfg,
            plant,
            u_c,
            u,
            v,
            he,
            exact_u,
            euler_u,
            euler_uc,
            euler_v,
            oracle,
            origin,
            lipschitz,
            certs: RefCell::default(),
            verdicts: RefCell::default(),
            extra: RefCell::default(),
        })
    }

    pub fn name(&self) -> &'static str {
        self.entry.name
    }

    pub fn has_input(&self) -> bool {
        self.entry.has_input()
    }

    /// The oracle replay, or `None` when it could not run.
    pub fn oracle(&self) -> Option<&OracleCheck> {
        self.oracle.as_ref()
    }

    /// Expectations are trusted only after the oracle reproduces.
    pub fn expectation(&self, p: P) -> Option<Status> {
        self.oracle.as_ref().filter(|o| o.pass).and_then(|_| self.entry.expected.get(&p).copied())
    }

    pub fn map(&self, id: MapId) -> &dyn ClosedLoopMap {
        match id {
            MapId::He => &self.he,
            MapId::ExactU => &self.exact_u,
            MapId::EulerU => &self.euler_u,
            MapId::EulerUc => &self.euler_uc,
            MapId::EulerV => &self.euler_v,
        }
    }

    pub fn law(&self, id: LawId) -> &DtLaw {
        match id {
            LawId::Uc => &self.u_c,
            LawId::U => &self.u,
            LawId::V => &self.v,
        }
    }

    pub fn consistency_cfg(&self) -> ConsistencyConfig {
        ConsistencyConfig::new(self.cfg.t_bar).samples(self.cfg.samples).seed(self.cfg.seed)
    }

    pub fn stability_cfg(&self) -> StabilityConfig {
        StabilityConfig::new(self.cfg.m, self.cfg.t_bar).batch(self.cfg.batch.clone()).seed(self.cfg.seed)
    }

    pub fn origin_ref(&self) -> Ref {
        let o = &self.origin;
        let status = if o.pass { Status::Certified } else { Status::Falsified };
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:e}"));
        Ref::new("origin", status, format!("|f(0,0)| = {:e}, |u_c(0)| = {}, max_T |U(0,T)| = {}", o.f_at_origin, opt(o.u_c_at_origin), opt(o.u_at_origin_max)))
    }

    /// Lipschitz estimate of the closed-loop field on the `2M` ball.
    pub fn lipschitz(&self) -> Option<&LipschitzEstimate> {
        self.lipschitz.as_ref()
    }

    pub fn lipschitz_ref(&self) -> Ref {
        match &self.lipschitz {
            Some(l) if l.l_hat.is_finite() => Ref::new("lipschitz", Status::Certified, format!("L = {:.6} on the {} ball", l.l_hat, l.state_radius)),
            Some(l) => Ref::new("lipschitz", Status::Falsified, format!("unbounded difference quotient on the {} ball", l.state_radius)),
            None => Ref::new("lipschitz", Status::Inconclusive, "estimator failed"),
        }
    }

    fn cached(&self, key: String, run: impl FnOnce() -> Result<ConsistencyCertificate>) -> Ref {
        if let Some(c) = self.certs.borrow().get(&key) {
            return Ref::new(key, c.status, c.reason.clone());
        }
        match run() {
            Ok(c) => {
                let r = Ref::new(key.clone(), c.status, c.reason.clone());
                self.certs.borrow_mut().insert(key, c);
                r
            }
            Err(e) => Ref::new(key, Status::Inconclusive, format!("error: {e}")),
        }
    }

    pub fn cert(&self, key: &str) -> Option<ConsistencyCertificate> {
        self.certs.borrow().get(key).cloned()
    }

    pub fn epc(&self, a: MapId, b: MapId) -> Ref {
        let key = format!("EPC({},{})", a.name(), b.name());
        self.cached(key, || estimate_epc(self.map(a), self.map(b), self.cfg.m, &self.consistency_cfg()))
    }

    pub fn stl(&self, law: LawId) -> Ref {
        let key = format!("StL({})", law.name());
        self.cached(key, || estimate_stl(self.law(law).as_ref(), self.cfg.m, &self.consistency_cfg()))
    }

    pub fn stc(&self, a: LawId, b: LawId) -> Ref {
        let key = format!("StC({},{})", a.name(), b.name());
        self.cached(key, || estimate_stc(self.law(a).as_ref(), self.law(b).as_ref(), self.cfg.m, &self.consistency_cfg()))
    }

    /// StLC of the Euler plant model on the `M × E` ball.
    pub fn stlc_euler(&self, tag: &str, e: f64) -> Ref {
        let key = format!("StLC(euler,{tag})");
        self.cached(key, || estimate_stlc(&PlantModel::new(DtModelKind::Euler, self.plant.clone())?, self.cfg.m, e, &self.consistency_cfg()))
    }

    pub fn stlc_he(&self) -> Ref {
        self.cached("StLC(He)".into(), || estimate_stlc(&Autonomous(self.he.clone()), self.cfg.m, 0.0, &self.consistency_cfg()))
    }

    /// Input radius for the StLC premise of the composition result.
    pub fn required_e(&self) -> Option<f64> {
        let stl = self.cert("StL(U)")?;
        let stc = self.cert("StC(U,V)")?;
        required_input_radius(&stl, &stc).ok()
    }

    /// All five VSR verdicts of a map come from one session; CT properties
    /// are the VSR verdicts of `H^e` under another name.
    pub fn verdict(&self, map: MapId, p: P) -> Result<StabilityVerdict> {
        if p.is_ct() {
            return as_ct(self.verdict(MapId::He, p.vsr_counterpart())?, p);
        }
        if let Some(v) = self.verdicts.borrow().get(&(map, p)) {
            return Ok(v.clone());
        }
        let session = VsrSession::new(self.map(map), self.stability_cfg())?;
        let v = session.verdict(p)?;
        for q in P::VSR {
            let w = if q == p { v.clone() } else { session.verdict(q)? };
            self.verdicts.borrow_mut().insert((map, q), w);
        }
        Ok(v)
    }

    pub fn verdict_ref(&self, map: MapId, p: P) -> Ref {
        let key = if p.is_ct() { p.name().to_string() } else { format!("{}({})", p.name(), map.name()) };
        match self.verdict(map, p) {
            Ok(v) => Ref::new(key, v.status, v.reason),
            Err(e) => Ref::new(key, Status::Inconclusive, format!("error: {e}")),
        }
    }

    pub fn ct_ref(&self, p: P) -> Ref {
        self.verdict_ref(MapId::He, p)
    }

    pub fn record(&self, key: &str, value: impl Serialize) {
        if let Ok(v) = serde_json::to_value(value) {
            self.extra.borrow_mut().insert(key.into(), v);
        }
    }

    /// All certificates, verdicts and side results computed so far.
    pub fn artifacts(&self) -> Result<BTreeMap<String, serde_json::Value>> {
        let mut out = BTreeMap::new();
        for (k, c) in self.certs.borrow().iter() {
            out.insert(k.clone(), serde_json::to_value(c)?);
        }
        for ((m, p), v) in self.verdicts.borrow().iter() {
            out.insert(format!("{}({})", p.name(), m.name()), serde_json::to_value(v)?);
            if *m == MapId::He {
                for q in P::CT.into_iter().filter(|q| q.vsr_counterpart() == *p) {
                    out.insert(q.name().to_string(), serde_json::to_value(as_ct(v.clone(), q)?)?);
                }
            }
        }
        for (k, v) in self.extra.borrow().iter() {
            out.insert(k.clone(), v.clone());
        }
        Ok(out)
    }
}
