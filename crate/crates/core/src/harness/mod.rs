//! Cross-checks of the implication results over a catalog of systems with
//! known closed-form behaviour.
//!
//! The checks are concordance tests. A failure points at the estimators or
//! at a numerical setting, never at the results being checked.

pub mod catalog;
mod checks;
mod context;

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use catalog::{catalog, find, CatalogEntry, OracleCheck, ORACLE_TOL};
pub use checks::run_check;
pub use context::{MapId, SystemContext};

use crate::error::{Error, Result};
use crate::stability::BatchSpec;
use crate::status::Status;

pub const FRAMING: &str = "concordance checks between numerical estimators; a fail reveals an estimator or configuration problem, a pass is not a proof";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckId {
    T1,
    T2,
    T3,
    L1,
    L2,
    L3,
    L4,
    P1,
}

impl CheckId {
    pub const ALL: [CheckId; 8] = [CheckId::T1, CheckId::T2, CheckId::T3, CheckId::L1, CheckId::L2, CheckId::L3, CheckId::L4, CheckId::P1];

    pub fn name(self) -> &'static str {
        match self {
            CheckId::T1 => "T1",
            CheckId::T2 => "T2",
            CheckId::T3 => "T3",
            CheckId::L1 => "L1",
            CheckId::L2 => "L2",
            CheckId::L3 => "L3",
            CheckId::L4 => "L4",
            CheckId::P1 => "P1",
        }
    }

    /// Accepts `1`, `T1`, `L2`, `P1`, `prop1`, any case.
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let id = match t.as_str() {
            "1" | "T1" => CheckId::T1,
            "2" | "T2" => CheckId::T2,
            "3" | "T3" => CheckId::T3,
            "L1" => CheckId::L1,
            "L2" => CheckId::L2,
            "L3" => CheckId::L3,
            "L4" => CheckId::L4,
            "P1" | "PROP1" => CheckId::P1,
            _ => return Err(Error::Unknown { what: "theorem check", name: s.into() }),
        };
        Ok(id)
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Skipped,
}

impl Outcome {
    /// Any fail fails; otherwise any pass passes.
    pub fn combine(items: impl IntoIterator<Item = Outcome>) -> Outcome {
        let mut out = Outcome::Skipped;
        for o in items {
            match o {
                Outcome::Fail => return Outcome::Fail,
                Outcome::Pass => out = Outcome::Pass,
                Outcome::Skipped => {}
            }
        }
        out
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Skipped => "skipped",
        })
    }
}

/// A certificate or verdict a report item relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ref {
    pub check: String,
    pub status: Status,
    pub summary: String,
}

impl Ref {
    pub fn new(check: impl Into<String>, status: Status, summary: impl Into<String>) -> Self {
        Ref { check: check.into(), status, summary: summary.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub item: String,
    pub outcome: Outcome,
    pub premises: Vec<Ref>,
    pub conclusions: Vec<Ref>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem: CheckId,
    pub system: String,
    pub outcome: Outcome,
    pub items: Vec<ItemReport>,
    pub note: String,
}

impl TheoremReport {
    pub fn new(theorem: CheckId, system: &str, items: Vec<ItemReport>, note: impl Into<String>) -> Self {
        let outcome = Outcome::combine(items.iter().map(|i| i.outcome));
        TheoremReport { theorem, system: system.into(), outcome, items, note: note.into() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Ball radius shared by the consistency and stability estimators.
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    pub samples: usize,
    pub batch: BatchSpec,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { seed: 0, m: 4.0, t_bar: 0.1, samples: 256, batch: BatchSpec::light() }
    }
}

impl HarnessConfig {
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.m.is_finite() && self.t_bar > 0.0 && self.t_bar.is_finite()) {
            return Err(Error::invalid("M and T_bar must be positive and finite"));
        }
        self.batch.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub pass: usize,
    pub fail: usize,
    pub skipped: usize,
}

impl Tally {
    pub fn of<'a>(reports: impl IntoIterator<Item = &'a TheoremReport>) -> Self {
        let mut t = Tally { pass: 0, fail: 0, skipped: 0 };
        for r in reports {
            match r.outcome {
                Outcome::Pass => t.pass += 1,
                Outcome::Fail => t.fail += 1,
                Outcome::Skipped => t.skipped += 1,
            }
        }
        t
    }
}

/// Everything one system produced: reports plus the certificates and
/// verdicts they reference, keyed by check name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRun {
    pub system: String,
    pub oracle: Option<OracleCheck>,
    pub reports: Vec<TheoremReport>,
    pub artifacts: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySummary {
    pub framing: String,
    pub config: HarnessConfig,
    pub checks: Vec<CheckId>,
    pub tally: Tally,
    pub systems: BTreeMap<String, BTreeMap<CheckId, Outcome>>,
}

pub fn verify_system(entry: &'static CatalogEntry, checks: &[CheckId], cfg: &HarnessConfig) -> Result<SystemRun> {
    cfg.validate()?;
    let ctx = SystemContext::new(entry, cfg.clone())?;
    let reports = checks.iter().map(|&c| run_check(&ctx, c)).collect::<Result<Vec<_>>>()?;
    Ok(SystemRun { system: entry.name.into(), oracle: ctx.oracle().cloned(), reports, artifacts: ctx.artifacts()? })
}

/// Runs `checks` on `systems` (all entries when empty), one system per task.
pub fn verify(systems: &[&str], checks: &[CheckId], cfg: &HarnessConfig) -> Result<(Vec<SystemRun>, VerifySummary)> {
    let entries: Vec<&'static CatalogEntry> = if systems.is_empty() {
        catalog().iter().collect()
    } else {
        systems.iter().map(|s| find(s)).collect::<Result<_>>()?
    };
    let runs = entries.par_iter().map(|e| verify_system(e, checks, cfg)).collect::<Result<Vec<_>>>()?;
    let summary = VerifySummary {
        framing: FRAMING.into(),
        config: cfg.clone(),
        checks: checks.to_vec(),
        tally: Tally::of(runs.iter().flat_map(|r| &r.reports)),
        systems: runs.iter().map(|r| (r.system.clone(), r.reports.iter().map(|t| (t.theorem, t.outcome)).collect())).collect(),
    };
    Ok((runs, summary))
}

pub fn verify_all(cfg: &HarnessConfig) -> Result<(Vec<SystemRun>, VerifySummary)> {
    verify(&[], &CheckId::ALL, cfg)
}
