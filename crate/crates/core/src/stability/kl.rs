use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::envelope::NormTrace;
use crate::error::{Error, Result};

/// Decay a table row must show over its horizon: last column ≤ this
/// fraction of the first.
pub const KL_DECAY: f64 = 0.1;
const T_POINTS: usize = 16;

/// A two-argument comparison function `β(s, t)`.
pub trait KlFunction: Send + Sync {
    fn eval(&self, s: f64, t: f64) -> f64;
}

/// Adapter for closures.
pub struct KlFn<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Send + Sync> KlFunction for KlFn<F> {
    fn eval(&self, s: f64, t: f64) -> f64 {
        (self.0)(s, t)
    }
}

/// Empirical β on an `(s, t)` grid.
///
/// Cell `(i, j)` is the largest `(|x_k| − offset)₊` over trajectories with
/// `|x₀| ≤ s_i` and samples from the last one at or before `t_j` onward. Taking suffix maxima in `t` and running
/// maxima in `s` is the isotonic smoothing step, so both monotonicity flags
/// hold by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlTable {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub offset: f64,
    pub nondecreasing_in_s: bool,
    pub nonincreasing_in_t: bool,
}

impl KlTable {
    pub fn fit(traces: &[NormTrace], offset: f64) -> Result<KlTable> {
        if traces.is_empty() {
            return Err(Error::invalid("empty trajectory batch"));
        }
        let mut s: Vec<f64> = traces.iter().map(NormTrace::r0).collect();
        s.sort_by(f64::total_cmp);
        s.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
        let horizon = traces.iter().map(NormTrace::final_time).fold(0.0, f64::max);
        let mut t = vec![0.0];
        if horizon > 0.0 {
            let lo = horizon * 1e-3;
            t.extend((0..T_POINTS).map(|j| lo * (horizon / lo).powf(j as f64 / (T_POINTS - 1) as f64)));
            *t.last_mut().unwrap() = horizon;
        }
        let mut values = vec![vec![0.0f64; t.len()]; s.len()];
        for tr in traces {
            let i = bin(&s, tr.r0());
            let row = &mut values[i];
            // walk samples backwards so each cell sees the suffix maximum
            let mut k = tr.t.len();
            let mut sup: f64 = 0.0;
            for j in (0..t.len()).rev() {
                while k > 0 && tr.t[k - 1] >= t[j] {
                    k -= 1;
                    sup = sup.max((tr.r[k] - offset).max(0.0));
                }
                // the sample at or before t_j bounds the unobserved gap
                let prev = if k > 0 && k < tr.t.len() { (tr.r[k - 1] - offset).max(0.0) } else { 0.0 };
                row[j] = row[j].max(sup).max(prev);
            }
        }
        for i in 1..s.len() {
            for j in 0..t.len() {
                values[i][j] = values[i][j].max(values[i - 1][j]);
            }
        }
        for row in &mut values {
            for j in (0..row.len().saturating_sub(1)).rev() {
                row[j] = row[j].max(row[j + 1]);
            }
        }
        Ok(KlTable { s, t, values, offset, nondecreasing_in_s: true, nonincreasing_in_t: true })
    }

    pub fn horizon(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    /// Rows whose last column exceeds `KL_DECAY` times the first.
    pub fn undecayed_rows(&self) -> Vec<usize> {
        (0..self.s.len()).filter(|&i| {
            let row = &self.values[i];
            row[row.len() - 1] > KL_DECAY * row[0]
        }).collect()
    }

    /// Rows with no decay at all.
    pub fn stalled_rows(&self) -> Vec<usize> {
        (0..self.s.len()).filter(|&i| {
            let row = &self.values[i];
            row[0] > 0.0 && row[row.len() - 1] >= row[0]
        }).collect()
    }

    /// Whether `|x_k| ≤ inflation·β(|x₀|, t_k) + offset` on every sample.
    pub fn dominates(&self, traces: &[NormTrace], inflation: f64) -> Option<(usize, usize)> {
        for (n, tr) in traces.iter().enumerate() {
            let r0 = tr.r0();
            for (k, (t, r)) in tr.t.iter().zip(&tr.r).enumerate() {
                let bound = inflation * self.eval(r0, *t) + self.offset;
                if *r > bound * (1.0 + 1e-9) + 1e-12 {
                    return Some((n, k));
                }
            }
        }
        None
    }
}

/// Index of the smallest bin at or above `s`, the last bin past the grid.
fn bin(s_grid: &[f64], s: f64) -> usize {
    let i = s_grid.partition_point(|&v| v < s * (1.0 - 1e-12));
    i.min(s_grid.len() - 1)
}

impl KlFunction for KlTable {
    /// Conservative lookup: the next larger `s` bin and the previous `t`
    /// grid point. Beyond the largest bin the row is scaled linearly.
    fn eval(&self, s: f64, t: f64) -> f64 {
        if s <= 0.0 || self.s.is_empty() {
            return 0.0;
        }
        let i = bin(&self.s, s);
        let j = self.t.partition_point(|&v| v <= t).max(1) - 1;
        let v = self.values[i][j];
        let top = self.s[self.s.len() - 1];
        if s > top { v * s / top } else { v }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBarReport {
    pub nondecreasing_in_s: bool,
    pub nonincreasing_in_t: bool,
    pub zero_at_origin: bool,
    /// Largest `|β̄(s, τ⁻) − β̄(s, τ)|` over tested `s` with `τ(s) > 0`.
    pub max_jump: f64,
    pub tested_s: usize,
}

/// The bound `β̄(s, t)` built from a KL function `β` and exponential
/// constants `(K, R, λ)`:
/// `2Kβ(s,t)` before `τ(s)`, `min{R, 2Kβ(s,0)}·e^{λτ(s)}·e^{−λt}` after,
/// where `τ(s) = inf{t ≥ 0 : β(s,t) ≤ R/(2K)}`.
#[derive(Clone)]
pub struct BetaBar {
    beta: Arc<dyn KlFunction>,
    pub k: f64,
    pub r: f64,
    pub lambda: f64,
    pub report: BetaBarReport,
}

impl std::fmt::Debug for BetaBar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BetaBar").field("k", &self.k).field("r", &self.r).field("lambda", &self.lambda).field("report", &self.report).finish()
    }
}

const TAU_REL_TOL: f64 = 1e-10;
const TAU_MAX: f64 = 1e15;

impl BetaBar {
    fn threshold(&self) -> f64 {
        self.r / (2.0 * self.k)
    }

    /// `τ(s)`, infinite when `β(s, ·)` never reaches the threshold.
    pub fn tau(&self, s: f64) -> f64 {
        let thr = self.threshold();
        let b = |t: f64| self.beta.eval(s, t);
        if b(0.0) <= thr {
            return 0.0;
        }
        let mut hi = 1.0;
        while b(hi) > thr {
            hi *= 2.0;
            if hi > TAU_MAX {
                return f64::INFINITY;
            }
        }
        let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
        while hi - lo > TAU_REL_TOL * hi {
            let mid = 0.5 * (lo + hi);
            if b(mid) > thr {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let tau = self.tau(s);
        if t < tau {
            2.0 * self.k * self.beta.eval(s, t)
        } else {
            self.tail(s, tau, t)
        }
    }

    fn tail(&self, s: f64, tau: f64, t: f64) -> f64 {
        self.r.min(2.0 * self.k * self.beta.eval(s, 0.0)) * (-self.lambda * (t - tau)).exp()
    }

    /// `|first-branch limit − second branch|` at `τ(s)`; zero when `τ = 0`.
    pub fn jump_at_tau(&self, s: f64) -> f64 {
        let tau = self.tau(s);
        if !(tau > 0.0 && tau.is_finite()) {
            return 0.0;
        }
        (2.0 * self.k * self.beta.eval(s, tau) - self.tail(s, tau, tau)).abs()
    }

    /// First `(trace, sample)` with `|x_k| > β̄(|x₀|, t_k)`.
    pub fn dominates(&self, traces: &[NormTrace]) -> Option<(usize, usize)> {
        for (n, tr) in traces.iter().enumerate() {
            let r0 = tr.r0();
            let tau = self.tau(r0);
            for (k, (t, r)) in tr.t.iter().zip(&tr.r).enumerate() {
                let bound = if *t < tau { 2.0 * self.k * self.beta.eval(r0, *t) } else { self.tail(r0, tau, *t) };
                if *r > bound * (1.0 + 1e-9) + 1e-12 {
                    return Some((n, k));
                }
            }
        }
        None
    }
}

/// Builds `β̄` after checking that `β` behaves as a KL function on a test
/// grid of `s ∈ (0, s_max]`.
pub fn construct_beta_bar(beta: Arc<dyn KlFunction>, k: f64, r: f64, lambda: f64, s_max: f64) -> Result<BetaBar> {
    if !(k >= 1.0) || !(r > 0.0) || !(lambda > 0.0) || !(s_max > 0.0) {
        return Err(Error::invalid(format!("β̄ needs K ≥ 1 and R, λ, s_max > 0 (K = {k}, R = {r}, λ = {lambda}, s_max = {s_max})")));
    }
    const NS: usize = 24;
    let s_grid: Vec<f64> = (1..=NS).map(|i| s_max * i as f64 / NS as f64).collect();
    let t_grid: Vec<f64> = std::iter::once(0.0).chain((0..24).map(|j| 1e-3 * 10f64.powf(j as f64 / 4.0))).collect();
    let tol = |a: f64| 1e-12 * a.abs().max(1.0);
    let mut inc_s = true;
    let mut dec_t = true;
    for w in s_grid.windows(2) {
        for &t in &t_grid {
            let (a, b) = (beta.eval(w[0], t), beta.eval(w[1], t));
            if b + tol(b) < a {
                inc_s = false;
            }
        }
    }
    for &s in &s_grid {
        for w in t_grid.windows(2) {
            let (a, b) = (beta.eval(s, w[0]), beta.eval(s, w[1]));
            if b > a + tol(a) {
                dec_t = false;
            }
        }
    }
    let zero = t_grid.iter().all(|&t| beta.eval(0.0, t) == 0.0);
    if !(inc_s && dec_t && zero) {
        return Err(Error::invalid(format!(
            "β is not of class KL on the test grid (nondecreasing in s: {inc_s}, nonincreasing in t: {dec_t}, β(0,·) = 0: {zero})"
        )));
    }
    let mut bar = BetaBar {
        beta,
        k,
        r,
        lambda,
        report: BetaBarReport { nondecreasing_in_s: inc_s, nonincreasing_in_t: dec_t, zero_at_origin: zero, max_jump: 0.0, tested_s: NS },
    };
    bar.report.max_jump = s_grid.iter().map(|&s| bar.jump_at_tau(s)).fold(0.0, f64::max);
    Ok(bar)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_is_monotone() {
        let tr = vec![
            NormTrace { t: vec![0.0, 1.0, 2.0, 3.0], r: vec![1.0, 0.8, 0.9, 0.1] },
            NormTrace { t: vec![0.0, 0.5, 1.5], r: vec![2.0, 0.5, 0.2] },
        ];
        let tab = KlTable::fit(&tr, 0.0).unwrap();
        assert_eq!(tab.s, vec![1.0, 2.0]);
        for row in &tab.values {
            assert!(row.windows(2).all(|w| w[1] <= w[0]));
        }
        for j in 0..tab.t.len() {
            assert!(tab.values[1][j] >= tab.values[0][j]);
        }
        assert_eq!(tab.eval(1.0, 0.0), 1.0);
        assert_eq!(tab.eval(1.0, 1.2), 0.9);
        assert_eq!(tab.eval(0.0, 1.0), 0.0);
        assert!(tab.dominates(&tr, 1.0).is_none());
    }

    #[test]
    fn rejects_non_kl() {
        let grow: Arc<dyn KlFunction> = Arc::new(KlFn(|s: f64, t: f64| s * (1.0 + t)));
        assert!(construct_beta_bar(grow, 2.0, 1.0, 1.0, 1.0).is_err());
        let ok: Arc<dyn KlFunction> = Arc::new(KlFn(|s: f64, t: f64| s * (-t).exp()));
        assert!(construct_beta_bar(ok.clone(), 0.5, 1.0, 1.0, 1.0).is_err());
        assert!(construct_beta_bar(ok, 2.0, 1.0, 1.0, 1.0).is_ok());
    }
}
