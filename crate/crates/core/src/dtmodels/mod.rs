//! One-step discrete-time models, their closed loops with a sampled law,
//! and trajectory simulation under a sampling sequence.

mod integrator;
mod trajectory;

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

pub use integrator::{integrate, Tolerances, MAX_STEPS};
pub use trajectory::{simulate, Limits, Termination, Trajectory};

use crate::dynamics::{check_law_dims, ClosedLoopField, CtLaw, DtLaw, HeldInput, Plant, VectorField};
use crate::error::{Error, Result};
use crate::registry::{opt, Options, Registry};

fn check_period(period: f64) -> Result<()> {
    if period >= 0.0 && period.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sampling period must be nonnegative and finite, got {period}")))
    }
}

/// `F^E(x,u,T) = x + T f(x,u)`.
pub fn euler_step(plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
    check_period(period)?;
    let f = plant.eval(x, u)?;
    Ok(x.iter().zip(&f).map(|(a, b)| a + period * b).collect())
}

/// Classical four-stage Runge–Kutta with `u` held over the step.
pub fn rk4_step(plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
    check_period(period)?;
    let h = period;
    let shift = |k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * h * b).collect() };
    let k1 = plant.eval(x, u)?;
    let k2 = plant.eval(&shift(&k1, 0.5), u)?;
    let k3 = plant.eval(&shift(&k2, 0.5), u)?;
    let k4 = plant.eval(&shift(&k3, 1.0), u)?;
    Ok((0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Solution at `T` of `x' = f(x, u)` with `u` held, by adaptive integration.
pub fn exact_step(plant: &Plant, x: &[f64], u: &[f64], period: f64, tol: Tolerances) -> Result<Vec<f64>> {
    check_period(period)?;
    tol.validate()?;
    Ok(integrate(&HeldInput { plant, u }, x, period, tol)?)
}

/// `H^e(x, T)`: the continuous closed loop `x' = f(x, u_c(x))` sampled at
/// `T`, with the control updated continuously.
pub fn h_exact_step(field: &ClosedLoopField, x: &[f64], period: f64, tol: Tolerances) -> Result<Vec<f64>> {
    check_period(period)?;
    tol.validate()?;
    Ok(integrate(field, x, period, tol)?)
}

/// An open-loop one-step model `F(x, u, T)` of a plant.
pub trait DtModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn step(&self, plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>>;

    /// Absolute error to allow when comparing a result near `x`.
    fn accuracy(&self, _x_norm: f64) -> f64 {
        0.0
    }
}

#[derive(Debug)]
struct Euler;

impl DtModel for Euler {
    fn name(&self) -> &str {
        "euler"
    }

    fn step(&self, plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
        euler_step(plant, x, u, period)
    }
}

#[derive(Debug)]
struct Rk4;

impl DtModel for Rk4 {
    fn name(&self) -> &str {
        "rk4"
    }

    fn step(&self, plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
        rk4_step(plant, x, u, period)
    }
}

#[derive(Debug)]
struct ExactZoh(Tolerances);

impl DtModel for ExactZoh {
    fn name(&self) -> &str {
        "exact-zoh"
    }

    fn step(&self, plant: &Plant, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
        exact_step(plant, x, u, period, self.0)
    }

    fn accuracy(&self, x_norm: f64) -> f64 {
        self.0.floor(x_norm)
    }
}

/// The model registry: `euler`, `rk4`, `exact-zoh` (options `abs_tol`,
/// `rel_tol`).
pub fn models() -> &'static Registry<dyn DtModel> {
    static REG: OnceLock<Registry<dyn DtModel>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn DtModel> = Registry::new("model");
        r.register("euler", "x + T f(x,u)", &[], |_| Ok(Arc::new(Euler)));
        r.register("rk4", "classical four-stage Runge-Kutta", &[], |_| Ok(Arc::new(Rk4)));
        r.register("exact-zoh", "adaptive 5(4) integration of the held-input flow", &["abs_tol", "rel_tol"], |o| {
            let d = Tolerances::default();
            Ok(Arc::new(ExactZoh(Tolerances::new(opt(o, "abs_tol", d.abs), opt(o, "rel_tol", d.rel))?)))
        });
        r
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DtModelKind {
    Euler,
    Rk4,
    ExactZoh(Tolerances),
}

impl DtModelKind {
    pub fn exact() -> Self {
        DtModelKind::ExactZoh(Tolerances::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DtModelKind::Euler => "euler",
            DtModelKind::Rk4 => "rk4",
            DtModelKind::ExactZoh(_) => "exact-zoh",
        }
    }

    pub fn parse(name: &str, tol: Tolerances) -> Result<Self> {
        match name {
            "euler" => Ok(DtModelKind::Euler),
            "rk4" => Ok(DtModelKind::Rk4),
            "exact-zoh" | "exact" => Ok(DtModelKind::ExactZoh(tol)),
            _ => Err(Error::Unknown { what: "model", name: name.into() }),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn DtModel>> {
        let mut o = Options::new();
        if let DtModelKind::ExactZoh(t) = self {
            o.insert("abs_tol".into(), t.abs);
            o.insert("rel_tol".into(), t.rel);
        }
        models().build(self.name(), &o)
    }
}

/// A discrete-time closed loop `x⁺ = step(x, T)`.
pub trait ClosedLoopMap: Send + Sync {
    fn dim(&self) -> usize;
    fn step(&self, x: &[f64], period: f64) -> Result<Vec<f64>>;
    fn label(&self) -> String;

    /// Absolute error to allow when comparing a result near `x`.
    fn accuracy(&self, _x_norm: f64) -> f64 {
        0.0
    }
}

/// `F̄_U(x,T) = F(x, U(x,T), T)`.
#[derive(Debug, Clone)]
pub struct ModelLoop {
    model: Arc<dyn DtModel>,
    plant: Arc<Plant>,
    law: DtLaw,
}

impl ModelLoop {
    pub fn law(&self) -> &DtLaw {
        &self.law
    }

    pub fn plant(&self) -> &Arc<Plant> {
        &self.plant
    }

    pub fn model(&self) -> &Arc<dyn DtModel> {
        &self.model
    }
}

impl ClosedLoopMap for ModelLoop {
    fn dim(&self) -> usize {
        self.plant.n()
    }

    fn step(&self, x: &[f64], period: f64) -> Result<Vec<f64>> {
        let u = self.law.eval(x, period)?;
        self.model.step(&self.plant, x, &u, period)
    }

    fn label(&self) -> String {
        format!("{}∘{}", self.model.name(), self.law.name())
    }

    fn accuracy(&self, x_norm: f64) -> f64 {
        self.model.accuracy(x_norm)
    }
}

pub fn close_loop(kind: DtModelKind, plant: Arc<Plant>, law: DtLaw) -> Result<ModelLoop> {
    close_loop_with(kind.build()?, plant, law)
}

pub fn close_loop_with(model: Arc<dyn DtModel>, plant: Arc<Plant>, law: DtLaw) -> Result<ModelLoop> {
    check_law_dims(&plant, law.as_ref())?;
    Ok(ModelLoop { model, plant, law })
}

/// `H^e` as a closed-loop map.
#[derive(Debug, Clone)]
pub struct SampledFlow {
    field: ClosedLoopField,
    tol: Tolerances,
}

impl SampledFlow {
    pub fn new(plant: Arc<Plant>, law: CtLaw, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        Ok(SampledFlow { field: crate::dynamics::closed_loop_field(plant, law)?, tol })
    }

    pub fn field(&self) -> &ClosedLoopField {
        &self.field
    }
}

impl ClosedLoopMap for SampledFlow {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn step(&self, x: &[f64], period: f64) -> Result<Vec<f64>> {
        h_exact_step(&self.field, x, period, self.tol)
    }

    fn label(&self) -> String {
        format!("He∘{}", self.field.law().name())
    }

    fn accuracy(&self, x_norm: f64) -> f64 {
        self.tol.floor(x_norm)
    }
}

/// A closed-loop map given by a closure; used for hand-written maps.
pub struct FnLoop<F> {
    pub dim: usize,
    pub label: String,
    pub f: F,
}

impl<F> ClosedLoopMap for FnLoop<F>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn step(&self, x: &[f64], period: f64) -> Result<Vec<f64>> {
        (self.f)(x, period)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// An open-loop model `F(x, u, T)` with its input dimension, for the
/// estimators that perturb `u` directly.
pub trait OpenLoopModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn step(&self, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>>;
    fn label(&self) -> String;

    fn accuracy(&self, _x_norm: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct PlantModel {
    pub plant: Arc<Plant>,
    pub model: Arc<dyn DtModel>,
}

impl PlantModel {
    pub fn new(kind: DtModelKind, plant: Arc<Plant>) -> Result<Self> {
        Ok(PlantModel { plant, model: kind.build()? })
    }
}

impl OpenLoopModel for PlantModel {
    fn state_dim(&self) -> usize {
        self.plant.n()
    }

    fn input_dim(&self) -> usize {
        self.plant.m()
    }

    fn step(&self, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
        self.model.step(&self.plant, x, u, period)
    }

    fn label(&self) -> String {
        self.model.name().to_string()
    }

    fn accuracy(&self, x_norm: f64) -> f64 {
        self.model.accuracy(x_norm)
    }
}

/// Views a closed-loop map as an open-loop model with no input.
pub struct Autonomous<M>(pub M);

impl<M: ClosedLoopMap> OpenLoopModel for Autonomous<M> {
    fn state_dim(&self) -> usize {
        self.0.dim()
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn step(&self, x: &[f64], _u: &[f64], period: f64) -> Result<Vec<f64>> {
        self.0.step(x, period)
    }

    fn label(&self) -> String {
        self.0.label()
    }

    fn accuracy(&self, x_norm: f64) -> f64 {
        self.0.accuracy(x_norm)
    }
}

/// An open-loop model given by a closure.
pub struct FnModel<F> {
    pub n: usize,
    pub m: usize,
    pub label: String,
    pub f: F,
}

impl<F> OpenLoopModel for FnModel<F>
where
    F: Fn(&[f64], &[f64], f64) -> Result<Vec<f64>> + Send + Sync,
{
    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m
    }

    fn step(&self, x: &[f64], u: &[f64], period: f64) -> Result<Vec<f64>> {
        (self.f)(x, u, period)
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Combined comparison slack for two maps at a point of norm `x_norm`.
pub fn pair_accuracy(a: &dyn ClosedLoopMap, b: &dyn ClosedLoopMap, x_norm: f64) -> f64 {
    a.accuracy(x_norm) + b.accuracy(x_norm)
}

impl fmt::Debug for dyn ClosedLoopMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ClosedLoopMap({})", self.label())
    }
}
