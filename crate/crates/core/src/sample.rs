//! Seeded smooth random fields for tests, perturbations and benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::spectral::{Grid, RealField, StatePair};

/// Trigonometric sum over the first `modes` nonzero periodic modes (plus the
/// mean) with coefficients uniform in `[-amp, amp]`.
pub fn smooth_field(grid: &Arc<Grid>, rng: &mut impl Rng, modes: usize, amp: f64) -> RealField {
    let l = grid.length();
    let coeffs: Vec<(f64, f64)> = (0..=modes).map(|_| (rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp))).collect();
    RealField::from_fn(grid.clone(), |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(m, (a, b))| {
                let q = 2.0 * PI * m as f64 / l;
                a * (q * x).cos() + if m == 0 { 0.0 } else { b * (q * x).sin() }
            })
            .sum()
    })
}

pub fn smooth_state(grid: &Arc<Grid>, seed: u64, modes: usize, amp: f64) -> StatePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = smooth_field(grid, &mut rng, modes, amp);
    let second = smooth_field(grid, &mut rng, modes, amp);
    StatePair { first, second }
}

/// A localized smooth random state: a trig sum times a Gaussian envelope of width `width`.
pub fn localized_state(grid: &Arc<Grid>, seed: u64, width: f64, amp: f64) -> StatePair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = || {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-amp..=amp)).collect();
        RealField::from_fn(grid.clone(), move |x| {
            let s = x / width;
            (c[0] + c[1] * s + c[2] * (2.0 * s).cos() + c[3] * (3.0 * s).sin() + c[4] * s * s + c[5] * (0.5 * s).sin())
                * (-s * s).exp()
        })
    };
    let first = pick();
    let second = pick();
    StatePair { first, second }
}
