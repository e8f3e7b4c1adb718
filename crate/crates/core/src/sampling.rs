//! Deterministic low-discrepancy sample points.
//!
//! The sequence is the 2D Halton sequence in bases 2 and 3, starting at
//! index 1. A nonzero seed applies a Cranley-Patterson rotation drawn from
//! ChaCha8, which keeps the low discrepancy and makes runs reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// `count` points of the unit square.
pub fn halton2(count: usize, seed: u64) -> Vec<[f64; 2]> {
    let shift = if seed == 0 {
        [0.0, 0.0]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        [rng.gen::<f64>(), rng.gen::<f64>()]
    };
    (1..=count as u64)
        .map(|k| {
            [
                (radical_inverse(k, 2) + shift[0]).fract(),
                (radical_inverse(k, 3) + shift[1]).fract(),
            ]
        })
        .collect()
}

/// Points of the annulus `r_min ≤ |x| ≤ r_max`, uniform in area.
pub fn annulus_points(count: usize, r_min: f64, r_max: f64, seed: u64) -> Vec<[f64; 2]> {
    let (a, b) = (r_min * r_min, r_max * r_max);
    halton2(count, seed)
        .into_iter()
        .map(|[s, t]| {
            let r = (a + s * (b - a)).sqrt();
            let th = std::f64::consts::TAU * t;
            [r * th.cos(), r * th.sin()]
        })
        .collect()
}

/// Points of the disk `|x| ≤ radius`.
pub fn disk_points(count: usize, radius: f64, seed: u64) -> Vec<[f64; 2]> {
    annulus_points(count, 0.0, radius, seed)
}
