//! Dormand–Prince 5(4) with PI step-size control.

use serde::{Deserialize, Serialize};

use crate::dynamics::VectorField;
use crate::error::{Error, IntegrationError, Result};

pub const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { abs: 1e-12, rel: 1e-10 }
    }
}

impl Tolerances {
    pub fn new(abs: f64, rel: f64) -> Result<Self> {
        let t = Tolerances { abs, rel };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.abs > 0.0 && self.rel > 0.0 && self.abs.is_finite() && self.rel.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid(format!("integrator tolerances must be positive, got abs {} rel {}", self.abs, self.rel)))
        }
    }

    /// Comparison floor against an integrated value near `x`.
    pub fn floor(&self, x_norm: f64) -> f64 {
        10.0 * (self.abs + self.rel * x_norm)
    }

    pub fn halved(&self) -> Self {
        Tolerances { abs: self.abs / 2.0, rel: self.rel / 2.0 }
    }
}

const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

/// Integrates `x' = field(x)` from `x0` over `[0, horizon]`. The autonomous
/// fields used here carry time only through the held input.
pub fn integrate(field: &dyn VectorField, x0: &[f64], horizon: f64, tol: Tolerances) -> Result<Vec<f64>, IntegrationError> {
    let n = x0.len();
    let mut y = x0.to_vec();
    if horizon == 0.0 || n == 0 {
        return Ok(y);
    }
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let eval = |x: &[f64], out: &mut [f64]| {
        field.eval_into(x, out).map_err(|source| IntegrationError::Eval { state: x.to_vec(), source })
    };
    eval(&y, &mut k[0])?;

    let mut t = 0.0;
    let mut h = horizon / 100.0;
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0usize;
    let mut rejected_last = false;
    while t < horizon {
        if steps >= MAX_STEPS {
            return Err(IntegrationError::TooManySteps { t, max_steps: MAX_STEPS, state: y });
        }
        steps += 1;
        let last = t + h >= horizon;
        if last {
            h = horizon - t;
        }
        if h <= 4.0 * f64::EPSILON * horizon.max(t) {
            return Err(IntegrationError::StepUnderflow { t, h, state: y });
        }
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                tmp[i] = y[i] + h * acc;
            }
            eval(&tmp, &mut k[s])?;
        }
        // stage 7 is evaluated at the fifth-order solution (FSAL)
        y_new.copy_from_slice(&tmp);
        let mut err = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (s, ks) in k.iter().enumerate() {
                e += E[s] * ks[i];
            }
            let scale = tol.abs + tol.rel * y[i].abs().max(y_new[i].abs());
            let r = h * e / scale;
            err += r * r;
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            rejected_last = true;
            continue;
        }
        if err <= 1.0 {
            let mut fac = if err == 0.0 { 5.0 } else { SAFETY * err.powf(-ALPHA) * err_prev.powf(BETA) };
            fac = fac.clamp(0.2, 5.0);
            if rejected_last {
                fac = fac.min(1.0);
            }
            t = if last { horizon } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            let (first, rest) = k.split_at_mut(6);
            first[0].copy_from_slice(&rest[0]);
            err_prev = err.max(1e-4);
            h *= fac;
            rejected_last = false;
        } else {
            let fac = (SAFETY * err.powf(-ALPHA)).clamp(0.2, 1.0);
            h *= fac;
            rejected_last = true;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdsl::EvalError;

    struct Linear(f64);

    impl VectorField for Linear {
        fn dim(&self) -> usize {
            1
        }

        fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
            out[0] = self.0 * x[0];
            Ok(())
        }
    }

    struct Escape;

    impl VectorField for Escape {
        fn dim(&self) -> usize {
            1
        }

        fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
            let v = x[0] * x[0];
            if v.is_finite() {
                out[0] = v;
                Ok(())
            } else {
                Err(EvalError::NonFinite(v))
            }
        }
    }

    #[test]
    fn exponential_decay() {
        let y = integrate(&Linear(-1.0), &[1.0], 0.1, Tolerances::default()).unwrap();
        assert!((y[0] - (-0.1f64).exp()).abs() < 1e-11);
        let y = integrate(&Linear(-1.0), &[1.0], 5.0, Tolerances::default()).unwrap();
        assert!((y[0] - (-5.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn finite_escape_is_an_error() {
        // x' = x^2 from 1 escapes at t = 1
        assert!(integrate(&Escape, &[1.0], 2.0, Tolerances::default()).is_err());
    }

    #[test]
    fn bad_tolerances() {
        assert!(Tolerances::new(0.0, 1e-3).is_err());
        assert!(Tolerances::new(1e-3, f64::NAN).is_err());
    }
}
