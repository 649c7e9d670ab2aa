//! Stability certification of closed-loop maps under varying sampling.

mod certify;
pub mod envelope;
pub mod kl;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use certify::{as_ct, certifiers, certify_ct, certify_vsr, search_t_star, TStarSearch, VsrCertifier, VsrSession};
pub use envelope::{fit_exponential_envelope, EnvelopeFit, EnvelopeOptions, NormTrace};
pub use kl::{construct_beta_bar, BetaBar, BetaBarReport, KlFn, KlFunction, KlTable, KL_DECAY};

use crate::dtmodels::{simulate, ClosedLoopMap, Limits, Termination};
use crate::error::{Error, Result};
use crate::probe;
use crate::sampling::{standard_batch, SeqDescriptor};
use crate::vecops::norm;

pub use crate::status::Status;

/// Ratio window inside which successive rates count as the same rate.
pub const STABLE_RATIO: (f64, f64) = (0.8, 1.25);
/// Ratio window read as a locally cubic field (rate ∝ R²).
pub const CUBIC_RATIO: (f64, f64) = (3.0, 5.0);
/// Allowed `K` inflation when a fit is replayed on a fresh batch.
pub const REVALIDATION_INFLATION: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StabilityProperty {
    #[serde(rename = "SPS-VSR")]
    SpsVsr,
    #[serde(rename = "LES-VSR")]
    LesVsr,
    #[serde(rename = "SLES-VSR")]
    SlesVsr,
    #[serde(rename = "SS-VSR")]
    SsVsr,
    #[serde(rename = "SES-VSR")]
    SesVsr,
    #[serde(rename = "GAS")]
    Gas,
    #[serde(rename = "LES")]
    Les,
    #[serde(rename = "GALES")]
    Gales,
    #[serde(rename = "GES")]
    Ges,
}

impl StabilityProperty {
    pub const VSR: [StabilityProperty; 5] = [Self::SpsVsr, Self::LesVsr, Self::SlesVsr, Self::SsVsr, Self::SesVsr];
    pub const CT: [StabilityProperty; 4] = [Self::Gas, Self::Les, Self::Gales, Self::Ges];

    pub fn name(self) -> &'static str {
        match self {
            Self::SpsVsr => "SPS-VSR",
            Self::LesVsr => "LES-VSR",
            Self::SlesVsr => "SLES-VSR",
            Self::SsVsr => "SS-VSR",
            Self::SesVsr => "SES-VSR",
            Self::Gas => "GAS",
            Self::Les => "LES",
            Self::Gales => "GALES",
            Self::Ges => "GES",
        }
    }

    /// Registry key, the lowercase name.
    pub fn key(self) -> String {
        self.name().to_ascii_lowercase()
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::VSR
            .into_iter()
            .chain(Self::CT)
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Unknown { what: "stability property", name: s.into() })
    }

    pub fn is_ct(self) -> bool {
        Self::CT.contains(&self)
    }

    /// The VSR property of `H^e` matching a CT property; identity on VSR.
    pub fn vsr_counterpart(self) -> Self {
        match self {
            Self::Gas => Self::SsVsr,
            Self::Les => Self::LesVsr,
            Self::Gales => Self::SlesVsr,
            Self::Ges => Self::SesVsr,
            p => p,
        }
    }
}

impl fmt::Display for StabilityProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Shape of a trajectory batch: initial states on `shells × directions`
/// of a ball, crossed with the standard sequence mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub directions: usize,
    /// Shell radii as fractions of the ball radius.
    pub shells: Vec<f64>,
    /// Total sequences; the five patterned kinds are always included.
    pub sequences: usize,
    pub steps: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec { directions: 16, shells: vec![0.5, 2.0 / 3.0, 5.0 / 6.0, 1.0], sequences: 16, steps: 200 }
    }
}

impl BatchSpec {
    pub fn light() -> Self {
        BatchSpec { directions: 4, shells: vec![0.5, 0.75, 1.0], sequences: 12, steps: 200 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions == 0 || self.shells.is_empty() || self.steps == 0 {
            return Err(Error::invalid("batch needs at least one direction, shell and step"));
        }
        if self.shells.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::invalid("shell fractions must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// What a batch actually contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDescriptor {
    pub radius: f64,
    pub t_bar: f64,
    pub states: usize,
    pub sequences: usize,
    pub steps: usize,
    pub seed: u64,
}

/// One simulated trajectory, reduced to its norm history.
#[derive(Debug, Clone)]
pub struct Run {
    pub x0: Vec<f64>,
    pub sequence: usize,
    pub trace: NormTrace,
    pub termination: Termination,
    pub error: Option<String>,
}

impl Run {
    pub fn diverged(&self) -> bool {
        matches!(self.termination, Termination::AboveCeiling | Termination::EvaluationError)
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub descriptor: BatchDescriptor,
    pub sequences: Vec<SeqDescriptor>,
    pub runs: Vec<Run>,
}

impl Batch {
    pub fn traces(&self) -> Vec<NormTrace> {
        self.runs.iter().map(|r| r.trace.clone()).collect()
    }

    pub fn first_divergence(&self) -> Option<TrajectoryWitness> {
        self.runs.iter().find(|r| r.diverged()).map(|r| self.witness(r, "trajectory left every bounded envelope"))
    }

    pub fn witness(&self, run: &Run, detail: &str) -> TrajectoryWitness {
        TrajectoryWitness {
            x0: run.x0.clone(),
            sequence: self.sequences[run.sequence].to_string(),
            termination: run.termination,
            t_end: run.trace.final_time(),
            norm_end: *run.trace.r.last().expect("nonempty trace"),
            detail: match &run.error {
                Some(e) => format!("{detail}: {e}"),
                None => detail.to_string(),
            },
        }
    }
}

/// Unit directions: `±1` in one dimension, seeded Gaussian draws otherwise.
fn directions(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let mut rng = probe::rng(seed);
    (0..count).map(|_| probe::random_unit(n, &mut rng)).collect()
}

/// Simulates every (initial state, sequence) pair of `spec` on the ball of
/// `radius`. Runs are ordered state-major and do not depend on scheduling.
pub fn run_batch(map: &dyn ClosedLoopMap, radius: f64, t_bar: f64, spec: &BatchSpec, seed: u64) -> Result<Batch> {
    spec.validate()?;
    if !(radius > 0.0) || !(t_bar > 0.0) {
        return Err(Error::invalid("batch radius and T̄ must be positive"));
    }
    let n = map.dim();
    let dirs = directions(n, spec.directions, probe::sub_seed(seed, 1));
    let states: Vec<Vec<f64>> = spec
        .shells
        .iter()
        .flat_map(|s| dirs.iter().map(move |d| d.iter().map(|v| v * s * radius).collect()))
        .collect();
    let seqs = standard_batch(t_bar, spec.steps, spec.sequences.saturating_sub(5), probe::sub_seed(seed, 2))?;
    let jobs: Vec<(usize, usize)> = (0..states.len()).flat_map(|i| (0..seqs.len()).map(move |j| (i, j))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(i, j)| {
            let tr = simulate(map, &states[i], &seqs[j], Limits::default())?;
            Ok(Run {
                x0: states[i].clone(),
                sequence: j,
                trace: NormTrace { r: tr.x.iter().map(|x| norm(x)).collect(), t: tr.t },
                termination: tr.termination,
                error: tr.error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch {
        descriptor: BatchDescriptor { radius, t_bar, states: states.len(), sequences: seqs.len(), steps: spec.steps, seed },
        sequences: seqs.into_iter().map(|s| s.descriptor).collect(),
        runs,
    })
}

/// Parameters of a VSR verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    /// Top of the LES radius ladder `{R₀, R₀/2, R₀/4}`.
    #[serde(rename = "R0")]
    pub r0: f64,
    /// Practical radius of SPS; `0.05·M` when unset.
    pub sps_offset: Option<f64>,
    pub k_cap: f64,
    pub batch: BatchSpec,
    pub seed: u64,
}

impl StabilityConfig {
    pub fn new(m: f64, t_bar: f64) -> Self {
        StabilityConfig { m, t_bar, r0: 0.1, sps_offset: None, k_cap: 1e3, batch: BatchSpec::default(), seed: 0 }
    }

    pub fn r0(mut self, r0: f64) -> Self {
        self.r0 = r0;
        self
    }

    pub fn batch(mut self, batch: BatchSpec) -> Self {
        self.batch = batch;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn t_bar(mut self, t_bar: f64) -> Self {
        self.t_bar = t_bar;
        self
    }

    pub fn offset(&self) -> f64 {
        self.sps_offset.unwrap_or(0.05 * self.m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !(self.t_bar > 0.0) || !(self.r0 > 0.0) || !(self.k_cap >= 1.0) {
            return Err(Error::invalid("stability config needs M, T̄, R₀ > 0 and K_cap ≥ 1"));
        }
        if self.sps_offset.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::invalid("SPS radius must be positive"));
        }
        self.batch.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryWitness {
    pub x0: Vec<f64>,
    /// Sequence descriptor, replayable with `--seq`.
    pub sequence: String,
    pub termination: Termination,
    pub t_end: f64,
    pub norm_end: f64,
    pub detail: String,
}

/// An exponential fit on one rung of a radius ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub radius: f64,
    pub fit: EnvelopeFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub property: StabilityProperty,
    pub status: Status,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub property: StabilityProperty,
    pub subject: String,
    pub status: Status,
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "T_bar")]
    pub t_bar: f64,
    #[serde(rename = "T_star")]
    pub t_star: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rungs: Vec<Rung>,
    /// `λ̂(rung i) / λ̂(rung i+1)` along the ladder.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub rung_ratios: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_table: Option<KlTable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_bar: Option<BetaBarReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub components: Vec<Component>,
    pub batches: Vec<BatchDescriptor>,
    pub witness: Option<TrajectoryWitness>,
    pub reason: String,
}

impl StabilityVerdict {
    pub(crate) fn new(property: StabilityProperty, subject: String, cfg: &StabilityConfig) -> Self {
        StabilityVerdict {
            property,
            subject,
            status: Status::Inconclusive,
            m: cfg.m,
            r: None,
            t_bar: cfg.t_bar,
            t_star: None,
            k: None,
            lambda: None,
            rungs: Vec::new(),
            rung_ratios: Vec::new(),
            kl_table: None,
            beta_bar: None,
            components: Vec::new(),
            batches: Vec::new(),
            witness: None,
            reason: String::new(),
        }
    }

    pub(crate) fn component(&self) -> Component {
        Component { property: self.property, status: self.status, reason: self.reason.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
