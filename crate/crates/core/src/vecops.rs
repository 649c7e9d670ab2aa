//! Small dense-vector helpers; states here have a handful of components.

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|a| a * s).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Radially projects `v` into the closed ball of the given radius.
pub fn clamp_to_ball(v: &mut [f64], radius: f64) {
    let r = norm(v);
    if r > radius && r > 0.0 {
        let s = radius / r;
        v.iter_mut().for_each(|a| *a *= s);
    }
}
