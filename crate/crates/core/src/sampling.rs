//! Nonuniform sampling sequences: finite prefixes `{T_i}` with
//! `0 < T_i < T̄`.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe;
use crate::registry::{opt, Options, Registry};

pub const DEFAULT_LEN: usize = 200;
pub const DEFAULT_MIN_FRACTION: f64 = 0.01;

/// Everything needed to regenerate a sequence bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqDescriptor {
    pub kind: String,
    pub t_bar: f64,
    pub len: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: Options,
}

impl SeqDescriptor {
    pub fn new(kind: &str, t_bar: f64, len: usize) -> Self {
        SeqDescriptor { kind: kind.into(), t_bar, len, seed: 0, params: Options::new() }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn generate(&self) -> Result<SamplingSequence> {
        if !(self.t_bar > 0.0 && self.t_bar.is_finite()) {
            return Err(Error::invalid(format!("T̄ must be positive and finite, got {}", self.t_bar)));
        }
        if self.len == 0 {
            return Err(Error::invalid("sequence length must be at least 1"));
        }
        let generator = generators().build(&self.kind, &self.params)?;
        let (t_bar, values) = generator.generate(self.t_bar, self.len, self.seed)?;
        debug_assert!(values.iter().all(|&t| t > 0.0 && t < t_bar));
        Ok(SamplingSequence { t_bar, values, descriptor: self.clone() })
    }
}

/// Parses `kind[:key=value,...]`. The keys `t_bar`, `len` and `seed` set the
/// descriptor fields; any other key is a generator parameter.
impl FromStr for SeqDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let kind = kind.trim();
        if !generators().contains(kind) {
            return Err(Error::Unknown { what: "sequence kind", name: kind.into() });
        }
        let mut d = SeqDescriptor::new(kind, 1.0, DEFAULT_LEN);
        for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value in sequence spec, got `{item}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = || v.parse::<f64>().map_err(|_| Error::invalid(format!("`{k}` expects a number, got `{v}`")));
            match k {
                "t_bar" => d.t_bar = num()?,
                "len" => d.len = v.parse().map_err(|_| Error::invalid(format!("`len` expects an integer, got `{v}`")))?,
                "seed" => d.seed = v.parse().map_err(|_| Error::invalid(format!("`seed` expects an integer, got `{v}`")))?,
                _ => {
                    d.params.insert(k.to_string(), num()?);
                }
            }
        }
        Ok(d)
    }
}

impl fmt::Display for SeqDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:t_bar={},len={},seed={}", self.kind, self.t_bar, self.len, self.seed)?;
        for (k, v) in &self.params {
            write!(f, ",{k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSequence {
    pub t_bar: f64,
    pub values: Vec<f64>,
    pub descriptor: SeqDescriptor,
}

impl SamplingSequence {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Membership in Φ(T̄).
    pub fn is_admissible(&self) -> bool {
        !self.values.is_empty() && self.values.iter().all(|&t| t > 0.0 && t < self.t_bar)
    }

    pub fn times(&self) -> Vec<f64> {
        accumulate(&self.values)
    }
}

/// Sampling instants `t_0 = 0`, `t_{k+1} = t_k + T_k`.
pub fn accumulate(values: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    t.push(acc);
    for v in values {
        acc += v;
        t.push(acc);
    }
    t
}

/// A family of sampling patterns.
pub trait SequenceGenerator: Send + Sync {
    /// Returns the bound actually used and the values, all strictly inside
    /// `(0, bound)`.
    fn generate(&self, t_bar: f64, len: usize, seed: u64) -> Result<(f64, Vec<f64>)>;
}

/// Largest value kept strictly below `t_bar`.
fn below(t_bar: f64) -> f64 {
    t_bar * (1.0 - 1e-9)
}

fn fraction(opts: &Options, key: &str, default: f64) -> Result<f64> {
    let v = opt(opts, key, default);
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(Error::invalid(format!("`{key}` must lie in (0, 1), got {v}")))
    }
}

struct Constant {
    period: Option<f64>,
    fraction: f64,
}

impl SequenceGenerator for Constant {
    fn generate(&self, t_bar: f64, len: usize, _seed: u64) -> Result<(f64, Vec<f64>)> {
        match self.period {
            Some(p) => {
                let s = gen_constant(p, len)?;
                Ok((s.t_bar, s.values))
            }
            None => Ok((t_bar, vec![t_bar * self.fraction; len])),
        }
    }
}

struct Random {
    min_fraction: f64,
}

impl SequenceGenerator for Random {
    fn generate(&self, t_bar: f64, len: usize, seed: u64) -> Result<(f64, Vec<f64>)> {
        let mut rng = probe::rng(seed);
        let lo = self.min_fraction * t_bar;
        let values = (0..len)
            .map(|_| loop {
                let t = rng.random_range(lo..t_bar);
                if t > lo {
                    break t;
                }
            })
            .collect();
        Ok((t_bar, values))
    }
}

struct Alternating {
    big: f64,
    small: f64,
}

impl SequenceGenerator for Alternating {
    fn generate(&self, t_bar: f64, len: usize, _seed: u64) -> Result<(f64, Vec<f64>)> {
        let values = (0..len).map(|i| if i % 2 == 0 { self.big } else { self.small } * t_bar).collect();
        Ok((t_bar, values))
    }
}

/// Geometric decay from `start·T̄`, floored at `min_fraction·T̄`.
struct FrontLoaded {
    start: f64,
    ratio: f64,
    min_fraction: f64,
}

impl SequenceGenerator for FrontLoaded {
    fn generate(&self, t_bar: f64, len: usize, _seed: u64) -> Result<(f64, Vec<f64>)> {
        let mut v = self.start * t_bar;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(v.max(self.min_fraction * t_bar));
            v *= self.ratio;
        }
        Ok((t_bar, values))
    }
}

/// `T_i = T̄ (1 - (1 - start) ratio^i)`, climbing toward `T̄`.
struct BackLoaded {
    start: f64,
    ratio: f64,
}

impl SequenceGenerator for BackLoaded {
    fn generate(&self, t_bar: f64, len: usize, _seed: u64) -> Result<(f64, Vec<f64>)> {
        let mut gap = 1.0 - self.start;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push((t_bar * (1.0 - gap)).min(below(t_bar)));
            gap *= self.ratio;
        }
        Ok((t_bar, values))
    }
}

/// Runs of `T̄(1 - 1e-6)` broken every `run` samples by one `0.99·T̄`.
struct Dwell {
    run: usize,
}

impl SequenceGenerator for Dwell {
    fn generate(&self, t_bar: f64, len: usize, _seed: u64) -> Result<(f64, Vec<f64>)> {
        let values = (0..len).map(|i| if (i + 1) % self.run == 0 { 0.99 * t_bar } else { t_bar * (1.0 - 1e-6) }).collect();
        Ok((t_bar, values))
    }
}

/// The sequence-generator registry.
pub fn generators() -> &'static Registry<dyn SequenceGenerator> {
    static REG: OnceLock<Registry<dyn SequenceGenerator>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut r: Registry<dyn SequenceGenerator> = Registry::new("sequence kind");
        r.register("constant", "periodic sampling; `T` fixes the period, else T̄·fraction", &["T", "fraction"], |o| {
            let period = o.get("T").copied();
            Ok(Arc::new(Constant { period, fraction: fraction(o, "fraction", 1.0 - 1e-6)? }))
        });
        r.register("random", "i.i.d. uniform on (min_fraction·T̄, T̄)", &["min_fraction"], |o| {
            Ok(Arc::new(Random { min_fraction: fraction(o, "min_fraction", DEFAULT_MIN_FRACTION)? }))
        });
        r.register("alternating", "big, small, big, ... as fractions of T̄", &["big", "small"], |o| {
            Ok(Arc::new(Alternating { big: fraction(o, "big", 0.9)?, small: fraction(o, "small", 0.1)? }))
        });
        r.register("front_loaded", "decreasing geometric from start·T̄", &["start", "ratio", "min_fraction"], |o| {
            Ok(Arc::new(FrontLoaded {
                start: fraction(o, "start", 0.8)?,
                ratio: fraction(o, "ratio", 0.5)?,
                min_fraction: fraction(o, "min_fraction", DEFAULT_MIN_FRACTION)?,
            }))
        });
        r.register("back_loaded", "increasing toward T̄ from start·T̄", &["start", "ratio"], |o| {
            Ok(Arc::new(BackLoaded { start: fraction(o, "start", 0.1)?, ratio: fraction(o, "ratio", 0.5)? }))
        });
        r.register("dwell", "long runs just below T̄", &["run"], |o| {
            let run = opt(o, "run", 50.0);
            if !(run >= 1.0 && run.fract() == 0.0) {
                return Err(Error::invalid(format!("`run` must be a positive integer, got {run}")));
            }
            Ok(Arc::new(Dwell { run: run as usize }))
        });
        r
    })
}

/// `N` copies of `T` with `T̄ = T(1 + 1e-9)`.
pub fn gen_constant(period: f64, len: usize) -> Result<SamplingSequence> {
    if !(period > 0.0 && period.is_finite()) || len == 0 {
        return Err(Error::invalid(format!("constant sequence needs T > 0 and N ≥ 1, got T = {period}, N = {len}")));
    }
    let t_bar = period * (1.0 + 1e-9);
    let descriptor = SeqDescriptor::new("constant", t_bar, len).param("T", period);
    Ok(SamplingSequence { t_bar, values: vec![period; len], descriptor })
}

pub fn gen_random(t_bar: f64, len: usize, seed: u64, min_fraction: f64) -> Result<SamplingSequence> {
    SeqDescriptor::new("random", t_bar, len).seed(seed).param("min_fraction", min_fraction).generate()
}

pub fn gen_adversarial(kind: &str, t_bar: f64, len: usize, params: &Options) -> Result<SamplingSequence> {
    if matches!(kind, "constant" | "random") || !generators().contains(kind) {
        return Err(Error::Unknown { what: "adversarial kind", name: kind.into() });
    }
    SeqDescriptor { kind: kind.into(), t_bar, len, seed: 0, params: params.clone() }.generate()
}

/// The standard mix used by VSR batches: one of each pattern plus
/// `n_random` random sequences.
pub fn standard_batch(t_bar: f64, len: usize, n_random: usize, seed: u64) -> Result<Vec<SamplingSequence>> {
    let mut out = vec![
        SeqDescriptor::new("constant", t_bar, len).generate()?,
        SeqDescriptor::new("dwell", t_bar, len).generate()?,
        SeqDescriptor::new("alternating", t_bar, len).generate()?,
        SeqDescriptor::new("front_loaded", t_bar, len).generate()?,
        SeqDescriptor::new("back_loaded", t_bar, len).generate()?,
    ];
    for i in 0..n_random {
        out.push(SeqDescriptor::new("random", t_bar, len).seed(probe::sub_seed(seed, i as u64)).generate()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trips_through_text() {
        let d: SeqDescriptor = "alternating:t_bar=0.5,len=4,big=0.8".parse().unwrap();
        assert_eq!(d.t_bar, 0.5);
        assert_eq!(d.params["big"], 0.8);
        let again: SeqDescriptor = d.to_string().parse().unwrap();
        assert_eq!(again, d);
        assert!("bogus:len=3".parse::<SeqDescriptor>().is_err());
        assert!("random:len=x".parse::<SeqDescriptor>().is_err());
        assert!("random:oops".parse::<SeqDescriptor>().is_err());
    }

    #[test]
    fn unknown_option_is_rejected() {
        let d = SeqDescriptor::new("dwell", 1.0, 5).param("big", 0.5);
        assert!(d.generate().is_err());
    }
}
