use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::dtmodels::{ClosedLoopMap, SampledFlow, Tolerances};
use crate::dynamics::{CtLaw, DtLaw, ExprLaw, Plant, ZeroLaw};
use crate::error::{Error, Result};
use crate::probe;
use crate::stability::{StabilityProperty as P, Status};
use crate::sysdsl::{parse_system, SystemDef};
use crate::vecops::dist;

/// Closed-form `H^e(x, T)`.
pub type FlowOracle = fn(&[f64], f64) -> Vec<f64>;

#[derive(Debug, Clone, Serialize)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
    /// The sampled law the checks feed back; none for `m = 0`.
    pub law: Option<&'static str>,
    /// A second law for the pair checks.
    pub alt_law: Option<&'static str>,
    pub oracle: &'static str,
    #[serde(skip)]
    pub flow: FlowOracle,
    /// Continuous-time verdicts implied by the closed form.
    pub expected: BTreeMap<P, Status>,
}

fn expect(gas: bool, les: bool, gales: bool, ges: bool) -> BTreeMap<P, Status> {
    let s = |b: bool| if b { Status::Certified } else { Status::Falsified };
    BTreeMap::from([(P::Gas, s(gas)), (P::Les, s(les)), (P::Gales, s(gales)), (P::Ges, s(ges))])
}

fn scale(x: &[f64], a: f64) -> Vec<f64> {
    x.iter().map(|v| v * a).collect()
}

fn saturating_flow(x: &[f64], t: f64) -> Vec<f64> {
    // ln|x| + x²/2 decreases at unit rate along ẋ = −x/(1+x²)
    let x0 = x[0];
    if x0 == 0.0 {
        return vec![0.0];
    }
    let c = x0.abs().ln() + 0.5 * x0 * x0 - t;
    let mut y = x0.abs().ln();
    for _ in 0..100 {
        let e = (2.0 * y).exp();
        let step = (y + 0.5 * e - c) / (1.0 + e);
        y -= step;
        if step.abs() <= 1e-15 * y.abs().max(1.0) {
            break;
        }
    }
    vec![x0.signum() * y.exp()]
}

fn spiral_flow(x: &[f64], t: f64) -> Vec<f64> {
    let (c, s) = (t.cos(), t.sin());
    let d = (-1.1 * t).exp();
    vec![d * (c * x[0] + s * x[1]), d * (-s * x[0] + c * x[1])]
}

pub fn catalog() -> &'static [CatalogEntry] {
    static CAT: OnceLock<Vec<CatalogEntry>> = OnceLock::new();
    CAT.get_or_init(|| {
        vec![
            CatalogEntry {
                name: "linear-decay",
                summary: "ẋ = −x, no input",
                source: "[system]\nname = \"linear-decay\"\nn = 1\nm = 0\n\n[f]\nf1 = \"-x1\"\n",
                law: None,
                alt_law: None,
                oracle: "x e^{-t}",
                flow: |x, t| scale(x, (-t).exp()),
                expected: expect(true, true, true, true),
            },
            CatalogEntry {
                name: "linear-zoh",
                summary: "ẋ = −x + u, u_c = −x; emulated U = −x and redesigned U = −x + aTx",
                source: "[system]\nname = \"linear-zoh\"\nn = 1\nm = 1\n\n[f]\nf1 = \"-x1 + u1\"\n\n[u_c]\nuc1 = \"-x1\"\n\n\
                         [U.emulated]\nU1 = \"-x1\"\n\n[U.redesigned]\nU1 = \"-x1 + a*T*x1\"\n\n[params]\na = 0.5\n",
                law: Some("emulated"),
                alt_law: Some("redesigned"),
                oracle: "x e^{-2t}",
                flow: |x, t| scale(x, (-2.0 * t).exp()),
                expected: expect(true, true, true, true),
            },
            CatalogEntry {
                name: "integrator-deadbeat",
                summary: "ẋ = u, U = −x; Euler loop x⁺ = (1 − T)x",
                source: "[system]\nname = \"integrator-deadbeat\"\nn = 1\nm = 1\n\n[f]\nf1 = \"u1\"\n\n[u_c]\nuc1 = \"-x1\"\n\n[U.main]\nU1 = \"-x1\"\n",
                law: Some("main"),
                alt_law: None,
                oracle: "x e^{-t}",
                flow: |x, t| scale(x, (-t).exp()),
                expected: expect(true, true, true, true),
            },
            CatalogEntry {
                name: "integrator-saturating",
                summary: "ẋ = u, U = −x/(1 + x²); GALES but not GES",
                source: "[system]\nname = \"integrator-saturating\"\nn = 1\nm = 1\n\n[f]\nf1 = \"u1\"\n\n\
                         [u_c]\nuc1 = \"-x1/(1 + x1^2)\"\n\n[U.main]\nU1 = \"-x1/(1 + x1^2)\"\n",
                law: Some("main"),
                alt_law: None,
                oracle: "ln|x| + x²/2 = ln|x0| + x0²/2 − t (Newton)",
                flow: saturating_flow,
                expected: expect(true, true, true, false),
            },
            CatalogEntry {
                name: "cubic",
                summary: "ẋ = u, U = −x³; GAS but not LES",
                source: "[system]\nname = \"cubic\"\nn = 1\nm = 1\n\n[f]\nf1 = \"u1\"\n\n[u_c]\nuc1 = \"-x1^3\"\n\n[U.main]\nU1 = \"-x1^3\"\n",
                law: Some("main"),
                alt_law: None,
                oracle: "x / sqrt(1 + 2x²t)",
                flow: |x, t| scale(x, 1.0 / (1.0 + 2.0 * x[0] * x[0] * t).sqrt()),
                expected: expect(true, false, false, false),
            },
            CatalogEntry {
                name: "2d-spiral",
                summary: "damped rotation with emulated feedback u = −x",
                source: "[system]\nname = \"2d-spiral\"\nn = 2\nm = 2\n\n[f]\nf1 = \"-0.1*x1 + x2 + u1\"\nf2 = \"-x1 - 0.1*x2 + u2\"\n\n\
                         [u_c]\nuc1 = \"-x1\"\nuc2 = \"-x2\"\n\n[U.emulated]\nU1 = \"-x1\"\nU2 = \"-x2\"\n",
                law: Some("emulated"),
                alt_law: None,
                oracle: "e^{-1.1t} R(t) x",
                flow: spiral_flow,
                expected: expect(true, true, true, true),
            },
        ]
    })
}

pub fn find(name: &str) -> Result<&'static CatalogEntry> {
    catalog().iter().find(|e| e.name == name).ok_or_else(|| Error::Unknown { what: "catalog system", name: name.into() })
}

/// Outcome of replaying an entry's closed form through the integrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub max_error: f64,
    pub tolerance: f64,
    /// Largest `|u_c(x) − U(x, 0)|`, zero when there is no law.
    pub law_gap: f64,
    pub pass: bool,
}

/// Tolerance on `|H^e(x,T) − oracle|` over states in the 2-ball.
pub const ORACLE_TOL: f64 = 1e-7;

impl CatalogEntry {
    pub fn def(&self) -> Result<SystemDef> {
        Ok(parse_system(self.source)?)
    }

    pub fn plant(&self) -> Result<Arc<Plant>> {
        Ok(Arc::new(Plant::from_def(&self.def()?)))
    }

    /// `u_c`, or the zero law without inputs.
    pub fn ct_law(&self) -> Result<CtLaw> {
        let def = self.def()?;
        Ok(match ExprLaw::ct_from_def(&def) {
            Some(l) => l.into_arc(),
            None => Arc::new(ZeroLaw { n: def.n, m: def.m }),
        })
    }

    fn named_law(&self, name: Option<&str>) -> Result<DtLaw> {
        let def = self.def()?;
        Ok(match name {
            Some(n) => ExprLaw::dt_from_def(&def, n)?.into_arc(),
            None => Arc::new(ZeroLaw { n: def.n, m: def.m }),
        })
    }

    pub fn dt_law(&self) -> Result<DtLaw> {
        self.named_law(self.law)
    }

    pub fn alt_dt_law(&self) -> Result<Option<DtLaw>> {
        self.alt_law.map(|n| self.named_law(Some(n))).transpose()
    }

    pub fn has_input(&self) -> bool {
        self.law.is_some()
    }

    pub fn check_oracle(&self) -> Result<OracleCheck> {
        let plant = self.plant()?;
        let u_c = self.ct_law()?;
        let u = self.dt_law()?;
        let flow = SampledFlow::new(plant, u_c.clone(), Tolerances::default())?;
        let points = probe::ball_points(flow.dim(), 2.0, 40, 11);
        let mut max_error: f64 = 0.0;
        let mut law_gap: f64 = 0.0;
        for x in &points {
            for t in [0.01, 0.1, 0.5, 1.0] {
                max_error = max_error.max(dist(&flow.step(x, t)?, &(self.flow)(x, t)));
            }
            law_gap = law_gap.max(dist(&u_c.eval(x, 0.0)?, &u.eval(x, 0.0)?));
        }
        Ok(OracleCheck { max_error, tolerance: ORACLE_TOL, law_gap, pass: max_error <= ORACLE_TOL && law_gap <= 1e-12 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_oracle_reproduces() {
        for e in catalog() {
            let c = e.check_oracle().unwrap();
            assert!(c.pass, "{}: {c:?}", e.name);
        }
    }

    #[test]
    fn saturating_newton_inverts_the_invariant() {
        for x0 in [0.1, 1.0, 4.0] {
            let x = saturating_flow(&[x0], 2.0)[0];
            let lhs = x.ln() + 0.5 * x * x;
            assert!((lhs - (x0.ln() + 0.5 * x0 * x0 - 2.0)).abs() < 1e-12);
        }
    }
}
