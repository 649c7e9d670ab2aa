use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Three-valued outcome of a numerical check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Certified,
    Falsified,
    Inconclusive,
}

impl Status {
    pub fn is_certified(self) -> bool {
        self == Status::Certified
    }

    pub fn is_falsified(self) -> bool {
        self == Status::Falsified
    }

    /// One certified and the other falsified.
    pub fn discordant(self, other: Status) -> bool {
        matches!((self, other), (Status::Certified, Status::Falsified) | (Status::Falsified, Status::Certified))
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Certified => "certified",
            Status::Falsified => "falsified",
            Status::Inconclusive => "inconclusive",
        })
    }
}

const BLOCK: usize = 256;

/// Maximum of `f` over `items` with the index attaining it. Blocks are
/// fixed, so the result (including ties, which go to the lowest index) does
/// not depend on scheduling. Errors surface in item order.
pub(crate) fn par_max<T, F>(items: &[T], f: F) -> Result<(f64, Option<usize>)>
where
    T: Sync,
    F: Fn(&T) -> Result<f64> + Sync + Send,
{
    let parts: Vec<Result<(f64, Option<usize>)>> = items
        .par_chunks(BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            let mut best = (f64::NEG_INFINITY, None);
            for (i, it) in chunk.iter().enumerate() {
                let v = f(it)?;
                if v > best.0 {
                    best = (v, Some(b * BLOCK + i));
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, None);
    for p in parts {
        let p = p?;
        if p.0 > best.0 {
            best = p;
        }
    }
    Ok(best)
}
