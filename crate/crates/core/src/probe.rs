//! Deterministic sample-point schemes shared by the estimators.
//!
//! Points come from a shifted Halton sequence mapped into the ball, a share
//! of points on the bounding sphere, and near-coincident partners at
//! separations `radius * 10^-k` for `k = 1..=6`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::vecops::{clamp_to_ball, norm};

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Separation exponents for near-coincident pairs.
pub const NEAR_DECADES: std::ops::RangeInclusive<i32> = 1..=6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream id from a master seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

pub fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&v);
        if r > 1e-12 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// `count` points in the closed ball of `radius` in `dim` dimensions, never
/// exactly at the origin. Every eighth point lies on the sphere.
pub fn ball_points(dim: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 0 {
        return vec![Vec::new(); count];
    }
    let mut rng = rng(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(count);
    let mut index: u64 = 1;
    while out.len() < count {
        if out.len() % 8 == 0 {
            let dir = random_unit(dim, &mut rng);
            out.push(dir.into_iter().map(|a| a * radius).collect());
            continue;
        }
        let p: Vec<f64> = if dim <= PRIMES.len() {
            (0..dim)
                .map(|d| {
                    let h = (radical_inverse(index, PRIMES[d]) + shift[d]).fract();
                    2.0 * h - 1.0
                })
                .collect()
        } else {
            (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        index += 1;
        let r = norm(&p);
        if r <= 1.0 && r > 0.0 {
            out.push(p.into_iter().map(|a| a * radius).collect());
        }
    }
    out
}

/// Pairs of points in the ball: neighbours in the low-discrepancy order,
/// random re-pairings, and near-coincident partners at every probe decade.
pub fn ball_pairs(dim: usize, radius: f64, count: usize, seed: u64, decades: std::ops::RangeInclusive<i32>) -> Vec<(Vec<f64>, Vec<f64>)> {
    let pts = ball_points(dim, radius, count, seed);
    let mut rng = rng(sub_seed(seed, 0x5041_4952));
    let mut pairs = Vec::new();
    for w in pts.windows(2) {
        pairs.push((w[0].clone(), w[1].clone()));
    }
    for p in &pts {
        let j = rng.random_range(0..pts.len());
        pairs.push((p.clone(), pts[j].clone()));
    }
    for p in pts.iter() {
        for k in decades.clone() {
            let dir = random_unit(dim, &mut rng);
            let sep = radius * 10f64.powi(-k);
            let mut q: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + sep * d).collect();
            clamp_to_ball(&mut q, radius);
            pairs.push((p.clone(), q));
        }
    }
    pairs.retain(|(a, b)| a != b);
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_stay_in_ball_and_include_sphere() {
        let pts = ball_points(2, 3.0, 200, 7);
        assert_eq!(pts.len(), 200);
        assert!(pts.iter().all(|p| norm(p) <= 3.0 + 1e-12 && norm(p) > 0.0));
        assert!(pts.iter().any(|p| (norm(p) - 3.0).abs() < 1e-12));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(ball_points(3, 1.0, 50, 1), ball_points(3, 1.0, 50, 1));
        assert_ne!(ball_points(3, 1.0, 50, 1), ball_points(3, 1.0, 50, 2));
    }

    #[test]
    fn near_pairs_reach_every_decade() {
        let pairs = ball_pairs(1, 1.0, 16, 3, NEAR_DECADES);
        let min_sep = pairs.iter().map(|(a, b)| (a[0] - b[0]).abs()).fold(f64::INFINITY, f64::min);
        assert!(min_sep <= 1.0e-6 + 1e-15);
    }
}
