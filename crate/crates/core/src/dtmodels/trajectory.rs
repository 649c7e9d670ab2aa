use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ClosedLoopMap;
use crate::error::{Error, Result};
use crate::sampling::{SamplingSequence, SeqDescriptor};
use crate::vecops::norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StepsExhausted,
    BelowFloor,
    AboveCeiling,
    EvaluationError,
}

/// Stopping rules. `None` selects the defaults: every sample of the
/// sequence, floor `1e-9|x0|` (or `1e-12` at the origin), ceiling
/// `1e6 max(1, |x0|)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_steps: Option<usize>,
    pub floor: Option<f64>,
    pub ceiling: Option<f64>,
}

impl Limits {
    pub fn floor_for(&self, x0_norm: f64) -> f64 {
        self.floor.unwrap_or(if x0_norm > 0.0 { 1e-9 * x0_norm } else { 1e-12 })
    }

    pub fn ceiling_for(&self, x0_norm: f64) -> f64 {
        self.ceiling.unwrap_or(1e6 * x0_norm.max(1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: String,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub sequence: SeqDescriptor,
    pub termination: Termination,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn norms(&self) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().map(|x| norm(x))
    }

    pub fn final_time(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.x.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        out.write_record(&header)?;
        for (t, x) in self.t.iter().zip(&self.x) {
            let mut row = vec![format!("{t:e}")];
            row.extend(x.iter().map(|v| format!("{v:e}")));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Iterates `x_{k+1} = step(x_k, T_k)` until a limit triggers. An
/// evaluation failure ends the run and is kept in `error`.
pub fn simulate(map: &dyn ClosedLoopMap, x0: &[f64], seq: &SamplingSequence, limits: Limits) -> Result<Trajectory> {
    if seq.is_empty() {
        return Err(Error::invalid("sampling sequence is empty"));
    }
    if x0.len() != map.dim() {
        return Err(Error::Dimension { context: "initial state".into(), expected: map.dim(), found: x0.len() });
    }
    let r0 = norm(x0);
    let floor = limits.floor_for(r0);
    let ceiling = limits.ceiling_for(r0);
    let steps = limits.max_steps.unwrap_or(seq.len()).min(seq.len());
    let mut t = vec![0.0];
    let mut xs = vec![x0.to_vec()];
    let mut error = None;
    let mut termination = Termination::StepsExhausted;
    let mut now = 0.0;
    let mut r = r0;
    for &period in &seq.values[..steps] {
        if r < floor {
            termination = Termination::BelowFloor;
            break;
        }
        if r > ceiling {
            termination = Termination::AboveCeiling;
            break;
        }
        match map.step(xs.last().expect("nonempty"), period) {
            Ok(next) if next.iter().all(|v| v.is_finite()) => {
                now += period;
                r = norm(&next);
                t.push(now);
                xs.push(next);
            }
            Ok(_) => {
                termination = Termination::AboveCeiling;
                break;
            }
            Err(e) => {
                termination = Termination::EvaluationError;
                error = Some(e.to_string());
                break;
            }
        }
    }
    if termination == Termination::StepsExhausted {
        if r < floor {
            termination = Termination::BelowFloor;
        } else if r > ceiling {
            termination = Termination::AboveCeiling;
        }
    }
    Ok(Trajectory { label: map.label(), t, x: xs, sequence: seq.descriptor.clone(), termination, error })
}
