//! Estimators for the consistency properties between closed-loop maps,
//! control laws and open-loop models.
//!
//! Every estimator evaluates a difference quotient on a deterministic sample
//! of the relevant ball at each point of a log-spaced period grid, fits
//! constants to the resulting table, and then replays the defining
//! inequality on an independent sample.

mod epc;
mod stc;
mod stl;
mod stlc;
mod theorem2;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use epc::estimate_epc;
pub use stc::{estimate_stc, stc_table};
pub use stl::estimate_stl;
pub use stlc::estimate_stlc;
pub use theorem2::{predict_epc_from_theorem2, required_input_radius, Theorem2Prediction};

use crate::error::{Error, Result};
use crate::probe;
pub use crate::status::Status;

/// Relative floor below which a vanishing `ρ̂` counts as reached.
pub const EPS0: f64 = 1e-3;
/// Positive-floor threshold for falsification.
pub const DELTA: f64 = 1e-3;
/// Largest acceptable relative residual of the `c·T^p` fit.
pub const MAX_FIT_RESIDUAL: f64 = 0.10;
/// Certified constants exceed the sampled maxima by this factor.
pub const MARGIN: f64 = 1.01;
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Property {
    #[serde(rename = "EPC")]
    Epc,
    #[serde(rename = "StC")]
    Stc,
    #[serde(rename = "StL")]
    Stl,
    #[serde(rename = "StLC")]
    Stlc,
}

impl Property {
    pub fn name(self) -> &'static str {
        match self {
            Property::Epc => "EPC",
            Property::Stc => "StC",
            Property::Stl => "StL",
            Property::Stlc => "StLC",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epc" => Ok(Property::Epc),
            "stc" => Ok(Property::Stc),
            "stl" => Ok(Property::Stl),
            "stlc" => Ok(Property::Stlc),
            _ => Err(Error::Unknown { what: "consistency property", name: s.into() }),
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    /// Ascending period grid.
    pub grid: Vec<f64>,
    pub samples: usize,
    pub validation_samples: usize,
    pub seed: u64,
}

impl ConsistencyConfig {
    /// Default grid from `t_bar` down four decades, four points per decade.
    pub fn new(t_bar: f64) -> Self {
        ConsistencyConfig { grid: log_grid(t_bar, 4, 4), samples: 4096, validation_samples: 4096, seed: 0 }
    }

    pub fn samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self.validation_samples = samples;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn t_bar(&self) -> f64 {
        *self.grid.last().expect("validated grid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 2 {
            return Err(Error::invalid("period grid needs at least two points"));
        }
        if !self.grid.iter().all(|t| *t > 0.0 && t.is_finite()) || !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("period grid must be positive, finite and strictly ascending"));
        }
        if self.samples < 8 || self.validation_samples < 8 {
            return Err(Error::invalid("need at least 8 samples"));
        }
        Ok(())
    }

    pub(crate) fn validation_seed(&self) -> u64 {
        probe::sub_seed(self.seed, 0x5641_4c49_44)
    }

    /// Grid extended one decade further down.
    pub(crate) fn refined_grid(&self) -> Vec<f64> {
        let lo = self.grid[0];
        let mut g: Vec<f64> = (1..=4).rev().map(|i| lo * 10f64.powf(-(i as f64) / 4.0)).collect();
        g.extend_from_slice(&self.grid);
        g
    }
}

/// `decades · per_decade + 1` points from `t_bar · 10^-decades` to `t_bar`.
pub fn log_grid(t_bar: f64, decades: u32, per_decade: u32) -> Vec<f64> {
    let n = decades * per_decade;
    (0..=n)
        .map(|i| {
            if i == n {
                t_bar
            } else {
                t_bar * 10f64.powf(-((n - i) as f64) / per_decade as f64)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoPoint {
    pub t: f64,
    pub rho: f64,
    /// False when the estimate sits within the integrator accuracy floor.
    pub resolved: bool,
}

/// `ρ(s) = c·s^p` together with the table it was fitted to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoModel {
    pub c: f64,
    pub p: u32,
    pub residual: f64,
    pub table: Vec<RhoPoint>,
}

impl RhoModel {
    pub fn eval(&self, s: f64) -> f64 {
        self.c * s.powi(self.p as i32)
    }

    /// Upper-envelope fit of `c·T^p`, `p` in {1, 2}, by smallest relative
    /// RMS gap over resolved positive entries.
    pub fn fit(table: Vec<RhoPoint>) -> Self {
        if table.iter().all(|r| r.rho <= 0.0) {
            return RhoModel { c: 1e-12, p: 1, residual: 0.0, table };
        }
        let mut best: Option<RhoModel> = None;
        for p in [1u32, 2] {
            let c = table.iter().filter(|r| r.rho > 0.0).map(|r| r.rho / r.t.powi(p as i32)).fold(0.0, f64::max);
            let gaps: Vec<f64> = table
                .iter()
                .filter(|r| r.rho > 0.0 && r.resolved)
                .map(|r| {
                    let fit = c * r.t.powi(p as i32);
                    (fit - r.rho) / fit
                })
                .collect();
            let residual = if gaps.is_empty() { 0.0 } else { (gaps.iter().map(|g| g * g).sum::<f64>() / gaps.len() as f64).sqrt() };
            if best.as_ref().is_none_or(|b| residual < b.residual) {
                best = Some(RhoModel { c: c * MARGIN, p, residual, table: Vec::new() });
            }
        }
        let mut m = best.expect("two candidates");
        m.table = table;
        m
    }
}

/// A sample at which a defining inequality or limit fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Witness {
    pub period: Option<f64>,
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridValue {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCertificate {
    pub property: Property,
    pub subject: String,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Per-period incremental constant.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub k_table: Vec<GridValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<RhoModel>,
    #[serde(rename = "T_star")]
    pub t_star: Option<f64>,
    pub grid: Vec<f64>,
    pub samples: usize,
    pub validation_samples: usize,
    pub seed: u64,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub reason: String,
}

impl ConsistencyCertificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) enum RhoDecision {
    Certify,
    Falsify,
    Undecided(String),
}

/// Shared vanishing / positive-floor rule on a `ρ̂` table.
pub(crate) fn rho_decision(model: &RhoModel) -> RhoDecision {
    let table = &model.table;
    let first = table[0].rho;
    let last = table[table.len() - 1].rho;
    let decade_up = {
        let target = table[0].t * 10.0;
        table.iter().min_by(|a, b| (a.t / target).ln().abs().total_cmp(&(b.t / target).ln().abs())).expect("nonempty").rho
    };
    if first > DELTA * last.max(1.0) && first >= 0.5 * decade_up {
        return RhoDecision::Falsify;
    }
    if first <= EPS0 * last || last == 0.0 {
        if model.residual <= MAX_FIT_RESIDUAL {
            RhoDecision::Certify
        } else {
            RhoDecision::Undecided(format!("fit residual {:.3} exceeds {MAX_FIT_RESIDUAL}", model.residual))
        }
    } else {
        RhoDecision::Undecided(format!("ρ̂ at the smallest period ({first:.3e}) has not fallen below {EPS0}·ρ̂(T̄) = {:.3e}", EPS0 * last))
    }
}

/// Largest grid period below which every validation check passed.
pub(crate) fn t_star(grid: &[f64], passed: &[bool]) -> Option<f64> {
    let mut out = None;
    for (t, ok) in grid.iter().zip(passed) {
        if !ok {
            break;
        }
        out = Some(*t);
    }
    out
}

pub(crate) fn slack(scale: f64) -> f64 {
    SLACK * scale.max(1.0)
}

/// Ratio of a refined estimate to the base one, guarded at zero.
pub(crate) fn growth(refined: f64, base: f64) -> f64 {
    (refined + 1e-12) / (base + 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = log_grid(0.1, 4, 4);
        assert_eq!(g.len(), 17);
        assert_eq!(*g.last().unwrap(), 0.1);
        assert!((g[0] - 1e-5).abs() < 1e-18);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rho_fit_picks_the_right_power() {
        let g = log_grid(0.5, 3, 4);
        let lin: Vec<RhoPoint> = g.iter().map(|&t| RhoPoint { t, rho: 2.0 * t, resolved: true }).collect();
        let m = RhoModel::fit(lin);
        assert_eq!(m.p, 1);
        assert!((m.c - 2.0 * MARGIN).abs() < 1e-12);
        let quad: Vec<RhoPoint> = g.iter().map(|&t| RhoPoint { t, rho: 3.0 * t * t, resolved: true }).collect();
        let m = RhoModel::fit(quad);
        assert_eq!(m.p, 2);
        assert!(m.residual < 0.02);
    }
}
