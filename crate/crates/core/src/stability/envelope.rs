use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm history of one trajectory: `r[k] = |x_k|` at `t[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTrace {
    pub t: Vec<f64>,
    pub r: Vec<f64>,
}

impl NormTrace {
    pub fn r0(&self) -> f64 {
        self.r[0]
    }

    pub fn final_time(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub k_cap: f64,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions { lambda_min: 1e-4, lambda_max: 1e3, k_cap: 1e3 }
    }
}

/// `|x_k| ≤ K |x_0| e^{-λ t_k}` over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    #[serde(rename = "K")]
    pub k: f64,
    pub lambda: f64,
    /// `ln K(λ)` before clamping, the largest log residual.
    pub objective: f64,
    pub trajectories: usize,
    pub samples: usize,
    /// False when even `λ_min` violates the constraints; `k` and `lambda`
    /// then describe `λ_min`.
    pub feasible: bool,
}

impl EnvelopeFit {
    /// Whether every sample of `traces` obeys the envelope with `K`
    /// inflated by `inflation`.
    pub fn holds_on(&self, traces: &[NormTrace], inflation: f64) -> bool {
        traces.iter().all(|tr| {
            let r0 = tr.r0();
            tr.t.iter().zip(&tr.r).all(|(t, r)| *r <= inflation * self.k * r0 * (-self.lambda * t).exp() * (1.0 + 1e-9) + 1e-300)
        })
    }
}

const HORIZON_SLACK: f64 = 1e-9;
/// Fraction of the largest feasible rate given up in the reported `λ`.
pub const RATE_BACKOFF: f64 = 0.02;
const PHI: f64 = 1.618_033_988_749_895;

struct Samples {
    early: Vec<(f64, f64)>,
    late: Vec<(f64, f64)>,
}

impl Samples {
    /// `(ln K over early samples, ln K over late samples)` at rate `lambda`.
    fn log_k(&self, lambda: f64) -> (f64, f64) {
        let f = |v: &[(f64, f64)]| v.iter().map(|(t, lr)| lr + lambda * t).fold(f64::NEG_INFINITY, f64::max);
        (f(&self.early), f(&self.late))
    }
}

/// Largest `λ` in `[λ_min, λ_max]` such that `K(λ) ≤ K_cap` and the late
/// half of the horizon needs no larger `K` than the early half.
///
/// The second condition keeps integrator noise at the end of long decaying
/// runs from being read as a faster rate. The search shrinks a
/// feasible/infeasible bracket in `ln λ` by the golden ratio until it is
/// within 1e-6 relative. The reported rate is the feasible end scaled by
/// `1 − RATE_BACKOFF`, which puts a negative drift on the late samples so
/// `K` is not set by the single luckiest sequence.
pub fn fit_exponential_envelope(traces: &[NormTrace], opts: EnvelopeOptions) -> Result<EnvelopeFit> {
    if traces.is_empty() {
        return Err(Error::invalid("empty trajectory batch"));
    }
    if let Some(bad) = traces.iter().find(|tr| tr.r.is_empty() || !(tr.r0() > 0.0)) {
        return Err(Error::invalid(format!("trajectory with |x0| = {:?} cannot be fitted", bad.r.first())));
    }
    let t_max = traces.iter().map(NormTrace::final_time).fold(0.0, f64::max);
    let mut s = Samples { early: Vec::new(), late: Vec::new() };
    let mut count = 0;
    for tr in traces {
        let r0 = tr.r0();
        for (t, r) in tr.t.iter().zip(&tr.r) {
            count += 1;
            let lr = (r / r0).ln();
            if t * 2.0 > t_max {
                s.late.push((*t, lr));
            } else {
                s.early.push((*t, lr));
            }
        }
    }
    let cap = opts.k_cap.ln();
    let feasible = |lambda: f64| {
        let (ke, kl) = s.log_k(lambda);
        ke.max(kl) <= cap && (kl == f64::NEG_INFINITY || kl <= ke + HORIZON_SLACK)
    };
    let finish = |lambda: f64, ok: bool| {
        let (ke, kl) = s.log_k(lambda);
        let lk = ke.max(kl);
        EnvelopeFit { k: lk.exp().max(1.0), lambda, objective: lk, trajectories: traces.len(), samples: count, feasible: ok }
    };
    if !feasible(opts.lambda_min) {
        return Ok(finish(opts.lambda_min, false));
    }
    let report = |lambda: f64| finish((lambda * (1.0 - RATE_BACKOFF)).max(opts.lambda_min), true);
    if feasible(opts.lambda_max) {
        return Ok(report(opts.lambda_max));
    }
    let (mut lo, mut hi) = (opts.lambda_min.ln(), opts.lambda_max.ln());
    while hi - lo > 1e-6 {
        let mid = hi - (hi - lo) / PHI;
        if feasible(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(report(lo.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(f: impl Fn(f64) -> f64, periods: &[f64]) -> NormTrace {
        let mut t = vec![0.0];
        for p in periods {
            t.push(t.last().unwrap() + p);
        }
        NormTrace { r: t.iter().map(|&s| f(s)).collect(), t }
    }

    #[test]
    fn exact_exponential() {
        let periods: Vec<f64> = (0..200).map(|i| 0.01 + 0.09 * ((i * 7919) % 100) as f64 / 100.0).collect();
        let tr: Vec<NormTrace> = [1.0, 3.0].iter().map(|&a| trace(|t| a * (-t).exp(), &periods)).collect();
        let fit = fit_exponential_envelope(&tr, EnvelopeOptions::default()).unwrap();
        assert!(fit.feasible);
        assert!(fit.lambda <= 0.99 && fit.lambda >= 0.97, "{}", fit.lambda);
        assert!((fit.k - 1.0).abs() < 1e-9);
        assert!(fit.holds_on(&tr, 1.0));
    }

    #[test]
    fn scaled_exponential() {
        let periods = vec![0.1; 200];
        let mut tr = trace(|t| 2.0 * (-0.5 * t).exp(), &periods);
        tr.r[0] = 1.0;
        let fit = fit_exponential_envelope(&[tr], EnvelopeOptions::default()).unwrap();
        assert!((fit.k - 2.0).abs() <= 0.1, "{}", fit.k);
        assert!((fit.lambda - 0.5).abs() <= 0.025, "{}", fit.lambda);
    }

    #[test]
    fn constant_signal_is_infeasible() {
        let tr = trace(|_| 1.0, &[0.1; 200]);
        let fit = fit_exponential_envelope(&[tr], EnvelopeOptions::default()).unwrap();
        assert!(!fit.feasible);
    }

    #[test]
    fn empty_batch() {
        assert!(fit_exponential_envelope(&[], EnvelopeOptions::default()).is_err());
    }
}
