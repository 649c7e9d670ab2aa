//! Plants, control laws and the standing-assumption checks on them.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe;
use crate::sysdsl::{parse_expression, EvalError, Expr, SlotEnv, SystemDef};
use crate::vecops::{dist, norm};

/// `x' = f(x, u)` with `x` in R^n and `u` in R^m.
#[derive(Debug, Clone)]
pub struct Plant {
    n: usize,
    m: usize,
    f: Vec<Expr>,
    params: Option<Arc<BTreeMap<String, f64>>>,
}

impl Plant {
    pub fn from_def(def: &SystemDef) -> Self {
        Plant {
            n: def.n,
            m: def.m,
            f: def.f.clone(),
            params: def.params_for_eval().map(|p| Arc::new(p.clone())),
        }
    }

    /// Builds a plant from one expression per state component.
    pub fn parse(n: usize, m: usize, exprs: &[&str]) -> Result<Self> {
        if exprs.len() != n {
            return Err(Error::Dimension { context: "plant".into(), expected: n, found: exprs.len() });
        }
        let f = exprs.iter().map(|s| parse_expression(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(Plant { n, m, f, params: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let env = SlotEnv { x, u, period: 0.0, params: self.params.as_deref() };
        for (o, e) in out.iter_mut().zip(&self.f) {
            *o = e.eval(&env)?;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.eval_into(x, u, &mut out).map_err(|e| Error::eval(x, e))?;
        Ok(out)
    }
}

/// A state-feedback law `U(x, T)`. Continuous-time laws `u_c(x)` are laws
/// that ignore `T`.
pub trait ControlLaw: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], period: f64, out: &mut [f64]) -> Result<(), EvalError>;

    fn eval(&self, x: &[f64], period: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.input_dim()];
        self.eval_into(x, period, &mut out).map_err(|e| Error::eval(x, e))?;
        Ok(out)
    }
}

pub type CtLaw = Arc<dyn ControlLaw>;
pub type DtLaw = Arc<dyn ControlLaw>;

#[derive(Debug, Clone)]
pub struct ExprLaw {
    name: String,
    n: usize,
    exprs: Vec<Expr>,
    params: Option<Arc<BTreeMap<String, f64>>>,
}

impl ExprLaw {
    pub fn new(name: impl Into<String>, n: usize, exprs: Vec<Expr>) -> Self {
        ExprLaw { name: name.into(), n, exprs, params: None }
    }

    pub fn parse(name: impl Into<String>, n: usize, exprs: &[&str]) -> Result<Self> {
        let exprs = exprs.iter().map(|s| parse_expression(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(ExprLaw::new(name, n, exprs))
    }

    /// The `[u_c]` section of a system, if present.
    pub fn ct_from_def(def: &SystemDef) -> Option<Self> {
        def.u_c.as_ref().map(|exprs| ExprLaw {
            name: "u_c".into(),
            n: def.n,
            exprs: exprs.clone(),
            params: def.params_for_eval().map(|p| Arc::new(p.clone())),
        })
    }

    /// The `[U.<name>]` section of a system.
    pub fn dt_from_def(def: &SystemDef, name: &str) -> Result<Self> {
        let exprs = def
            .laws
            .get(name)
            .ok_or_else(|| Error::Unknown { what: "control law", name: name.into() })?;
        Ok(ExprLaw {
            name: name.into(),
            n: def.n,
            exprs: exprs.clone(),
            params: def.params_for_eval().map(|p| Arc::new(p.clone())),
        })
    }

    pub fn into_arc(self) -> Arc<dyn ControlLaw> {
        Arc::new(self)
    }
}

impl ControlLaw for ExprLaw {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.exprs.len()
    }

    #[inline]
    fn eval_into(&self, x: &[f64], period: f64, out: &mut [f64]) -> Result<(), EvalError> {
        let env = SlotEnv { x, u: &[], period, params: self.params.as_deref() };
        for (o, e) in out.iter_mut().zip(&self.exprs) {
            *o = e.eval(&env)?;
        }
        Ok(())
    }
}

/// `u_c(x) := U(x, 0)`, the continuous-time limit of a sampled law.
#[derive(Debug, Clone)]
pub struct AtZeroPeriod {
    inner: Arc<dyn ControlLaw>,
    name: String,
}

impl AtZeroPeriod {
    pub fn new(inner: Arc<dyn ControlLaw>) -> Self {
        let name = format!("{}@T=0", inner.name());
        AtZeroPeriod { inner, name }
    }
}

impl ControlLaw for AtZeroPeriod {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn eval_into(&self, x: &[f64], _period: f64, out: &mut [f64]) -> Result<(), EvalError> {
        self.inner.eval_into(x, 0.0, out)
    }
}

/// The zero law on R^m.
#[derive(Debug, Clone)]
pub struct ZeroLaw {
    pub n: usize,
    pub m: usize,
}

impl ControlLaw for ZeroLaw {
    fn name(&self) -> &str {
        "zero"
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn eval_into(&self, _x: &[f64], _period: f64, out: &mut [f64]) -> Result<(), EvalError> {
        out.iter_mut().for_each(|o| *o = 0.0);
        Ok(())
    }
}

/// An autonomous vector field on R^n.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError>;
}

/// The plant with the input frozen at `u` (zero-order hold).
pub struct HeldInput<'a> {
    pub plant: &'a Plant,
    pub u: &'a [f64],
}

impl VectorField for HeldInput<'_> {
    fn dim(&self) -> usize {
        self.plant.n
    }

    #[inline]
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        self.plant.eval_into(x, self.u, out)
    }
}

/// `h(x) = f(x, u_c(x))`.
#[derive(Debug, Clone)]
pub struct ClosedLoopField {
    plant: Arc<Plant>,
    law: CtLaw,
}

impl ClosedLoopField {
    pub fn plant(&self) -> &Arc<Plant> {
        &self.plant
    }

    pub fn law(&self) -> &CtLaw {
        &self.law
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.plant.n];
        self.eval_into(x, &mut out).map_err(|e| Error::eval(x, e))?;
        Ok(out)
    }
}

impl VectorField for ClosedLoopField {
    fn dim(&self) -> usize {
        self.plant.n
    }

    #[inline]
    fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut u = [0.0; 8];
        let m = self.plant.m;
        if m <= u.len() {
            self.law.eval_into(x, 0.0, &mut u[..m])?;
            self.plant.eval_into(x, &u[..m], out)
        } else {
            let mut u = vec![0.0; m];
            self.law.eval_into(x, 0.0, &mut u)?;
            self.plant.eval_into(x, &u, out)
        }
    }
}

pub fn check_law_dims(plant: &Plant, law: &dyn ControlLaw) -> Result<()> {
    if law.state_dim() != plant.n {
        return Err(Error::Dimension { context: format!("law `{}` state", law.name()), expected: plant.n, found: law.state_dim() });
    }
    if law.input_dim() != plant.m {
        return Err(Error::Dimension { context: format!("law `{}` input", law.name()), expected: plant.m, found: law.input_dim() });
    }
    Ok(())
}

pub fn closed_loop_field(plant: Arc<Plant>, law: CtLaw) -> Result<ClosedLoopField> {
    check_law_dims(&plant, law.as_ref())?;
    Ok(ClosedLoopField { plant, law })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginReport {
    pub f_at_origin: f64,
    pub u_c_at_origin: Option<f64>,
    pub u_at_origin_max: Option<f64>,
    /// Sampling period attaining `u_at_origin_max`.
    pub u_witness_period: Option<f64>,
    pub pass: bool,
}

pub const ORIGIN_TOL: f64 = 1e-12;

/// Checks `f(0,0) = 0`, `u_c(0) = 0` and `U(0,T) = 0` over `t_grid`.
pub fn check_origin(plant: &Plant, ct: Option<&dyn ControlLaw>, dt: Option<&dyn ControlLaw>, t_grid: &[f64]) -> OriginReport {
    let zero_x = vec![0.0; plant.n];
    let zero_u = vec![0.0; plant.m];
    let f0 = plant.eval(&zero_x, &zero_u).map_or(f64::INFINITY, |v| norm(&v));
    let uc0 = ct.map(|c| c.eval(&zero_x, 0.0).map_or(f64::INFINITY, |v| norm(&v)));
    let (mut u_max, mut witness) = (None, None);
    if let Some(d) = dt {
        let mut best = 0.0;
        let mut arg = None;
        for &t in t_grid {
            let v = d.eval(&zero_x, t).map_or(f64::INFINITY, |v| norm(&v));
            if v > best || arg.is_none() {
                best = v;
                arg = Some(t);
            }
        }
        u_max = Some(best);
        witness = arg;
    }
    let pass = f0 <= ORIGIN_TOL && uc0.is_none_or(|v| v <= ORIGIN_TOL) && u_max.is_none_or(|v| v <= ORIGIN_TOL);
    OriginReport { f_at_origin: f0, u_c_at_origin: uc0, u_at_origin_max: u_max, u_witness_period: witness, pass }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub state_radius: f64,
    pub input_radius: f64,
    pub l_hat: f64,
    pub samples: usize,
    pub pairs: usize,
    pub seed: u64,
    /// The pair attaining `l_hat`, as concatenated `(x, u)` vectors.
    pub max_pair: Option<(Vec<f64>, Vec<f64>)>,
}

/// Lower-bounds the Lipschitz constant of `func(x, u)` on the product of
/// the `state_radius` and `input_radius` balls, using
/// `|g(x,u) - g(y,v)| / (|x-y| + |u-v|)`.
pub fn estimate_lipschitz<F>(func: F, n: usize, m: usize, state_radius: f64, input_radius: f64, n_samples: usize, seed: u64) -> Result<LipschitzEstimate>
where
    F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Sync,
{
    if !(state_radius >= 0.0 && input_radius >= 0.0) {
        return Err(Error::invalid("radii must be nonnegative"));
    }
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let xs = probe::ball_pairs(n, state_radius, n_samples, seed, probe::NEAR_DECADES);
    let us = probe::ball_pairs(m, input_radius, n_samples, probe::sub_seed(seed, 1), probe::NEAR_DECADES);
    let zero_u = vec![0.0; m];
    let count = xs.len().max(us.len());
    let blocks: Vec<usize> = (0..count).step_by(256).collect();
    let results: Vec<Result<(f64, Option<(Vec<f64>, Vec<f64>)>)>> = blocks
        .par_iter()
        .map(|&start| {
            let mut best = 0.0;
            let mut arg = None;
            for i in start..(start + 256).min(count) {
                let (x, y) = &xs[i % xs.len().max(1)];
                let (u, v) = if us.is_empty() {
                    (&zero_u, &zero_u)
                } else {
                    let p = &us[i % us.len()];
                    (&p.0, &p.1)
                };
                // Half the pairs move only the state, to probe each argument.
                let (y, v) = match i % 4 {
                    0 => (x, v),
                    1 => (y, u),
                    _ => (y, v),
                };
                let den = dist(x, y) + dist(u, v);
                if den == 0.0 {
                    continue;
                }
                let a = func(x, u)?;
                let b = func(y, v)?;
                let q = dist(&a, &b) / den;
                if q > best {
                    best = q;
                    arg = Some(([x.as_slice(), u.as_slice()].concat(), [y.as_slice(), v.as_slice()].concat()));
                }
            }
            Ok((best, arg))
        })
        .collect();
    let mut l_hat = 0.0;
    let mut max_pair = None;
    for r in results {
        let (q, arg) = r?;
        if q > l_hat {
            l_hat = q;
            max_pair = arg;
        }
    }
    Ok(LipschitzEstimate { state_radius, input_radius, l_hat, samples: n_samples, pairs: count, seed, max_pair })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plant(m: usize, f: &str) -> Arc<Plant> {
        Arc::new(Plant::parse(1, m, &[f]).unwrap())
    }

    fn law(name: &str, e: &str) -> CtLaw {
        ExprLaw::parse(name, 1, &[e]).unwrap().into_arc()
    }

    #[test]
    fn closed_loop_compositions() {
        let h = closed_loop_field(plant(1, "u1"), law("k", "-x1")).unwrap();
        assert_eq!(h.eval(&[1.0]).unwrap(), vec![-1.0]);
        let h = closed_loop_field(plant(1, "-x1 + u1"), law("zero", "0")).unwrap();
        assert_eq!(h.eval(&[2.0]).unwrap(), vec![-2.0]);
        let h = closed_loop_field(plant(1, "u1"), law("sat", "-x1/(1+x1^2)")).unwrap();
        assert_eq!(h.eval(&[1.0]).unwrap(), vec![-0.5]);
    }

    #[test]
    fn closed_loop_dimension_mismatch() {
        let l = ExprLaw::parse("two", 1, &["-x1", "x1"]).unwrap().into_arc();
        assert!(matches!(closed_loop_field(plant(1, "u1"), l), Err(Error::Dimension { .. })));
    }

    #[test]
    fn origin_checks() {
        let grid = [0.0, 0.1, 0.5];
        assert!(check_origin(&plant(1, "-x1 + u1"), None, None, &grid).pass);
        let bad = law("U", "-x1 + T");
        let r = check_origin(&plant(1, "-x1 + u1"), None, Some(bad.as_ref()), &grid);
        assert!(!r.pass);
        assert_eq!(r.u_at_origin_max, Some(0.5));
        assert_eq!(r.u_witness_period, Some(0.5));
        let cubic = law("c", "-x1^3");
        assert!(check_origin(&plant(1, "u1"), Some(cubic.as_ref()), None, &grid).pass);
        assert!(!check_origin(&plant(1, "u1 + 1"), None, None, &grid).pass);
    }

    #[test]
    fn origin_check_is_rotation_invariant() {
        let p = Plant::parse(2, 0, &["-x1 + x2", "-x1 - x2"]).unwrap();
        // same field in coordinates rotated by 30 degrees
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let rot = Plant::parse(
            2,
            0,
            &[
                &format!("{c}*(-( {c}*x1 + {s}*x2) + (-{s}*x1 + {c}*x2)) - {s}*(-({c}*x1 + {s}*x2) - (-{s}*x1 + {c}*x2))"),
                &format!("{s}*(-( {c}*x1 + {s}*x2) + (-{s}*x1 + {c}*x2)) + {c}*(-({c}*x1 + {s}*x2) - (-{s}*x1 + {c}*x2))"),
            ],
        )
        .unwrap();
        assert_eq!(check_origin(&p, None, None, &[]).pass, check_origin(&rot, None, None, &[]).pass);
    }
}
