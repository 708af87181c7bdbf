//! Conserved quantities and variational functionals.
//!
//! All integrals are trapezoid sums of spectrally differentiated fields, so
//! the algebraic identities between them hold to rounding error.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{pow_even, ModelParams};
use crate::spectral::{deriv, dot, Grid, StatePair};

/// The elementary integrals every functional is assembled from.
#[derive(Debug, Clone, Copy)]
struct Parts {
    ff: f64,
    ss: f64,
    dff: f64,
    dss: f64,
    fs: f64,
    dfs: f64,
    /// `int first |second|^(p+1)`
    cubic: f64,
}

fn parts(u: &StatePair, p: f64) -> Parts {
    let dx = u.grid().dx();
    let f = u.first.values();
    let s = u.second.values();
    // deriv only fails for an invalid order
    let df = deriv(&u.first, 1).expect("first derivative");
    let ds = deriv(&u.second, 1).expect("first derivative");
    let (df, ds) = (df.values(), ds.values());
    let cubic: f64 = f.iter().zip(s).map(|(a, b)| a * pow_even(*b, p)).sum();
    Parts {
        ff: dot(f, f) * dx,
        ss: dot(s, s) * dx,
        dff: dot(df, df) * dx,
        dss: dot(ds, ds) * dx,
        fs: dot(f, s) * dx,
        dfs: dot(df, ds) * dx,
        cubic: cubic * dx,
    }
}

impl Parts {
    fn i1(&self, params: &ModelParams) -> f64 {
        self.ff - params.c * self.dff + self.ss - params.a * self.dss
    }
    fn cross(&self, params: &ModelParams) -> f64 {
        self.fs + params.b * self.dfs
    }
    fn g(&self, p: f64) -> f64 {
        2.0 / (p + 1.0) * self.cubic
    }
}

/// `H = 1/2 int (eta^2 - c eta'^2 + u^2 - a u'^2 + 2/(p+1) eta u^(p+1))`.
pub fn hamiltonian(u: &StatePair, params: &ModelParams) -> f64 {
    let q = parts(u, params.p);
    0.5 * (q.i1(params) + q.g(params.p))
}

/// `Q = -int (eta u + b eta' u')`.
pub fn charge(u: &StatePair, params: &ModelParams) -> f64 {
    -parts(u, params.p).cross(params)
}

pub fn i1(u: &StatePair, params: &ModelParams) -> f64 {
    parts(u, params.p).i1(params)
}

/// `I_{2,w} = -2 w int (psi v + b psi' v')`.
pub fn i2w(u: &StatePair, params: &ModelParams, omega: f64) -> f64 {
    -2.0 * omega * parts(u, params.p).cross(params)
}

pub fn iw(u: &StatePair, params: &ModelParams, omega: f64) -> f64 {
    let q = parts(u, params.p);
    q.i1(params) - 2.0 * omega * q.cross(params)
}

/// `G = 2/(p+1) int psi v^(p+1)`, homogeneous of degree `p + 2`.
pub fn g_fun(u: &StatePair, p: f64) -> f64 {
    parts(u, p).g(p)
}

pub fn jw(u: &StatePair, params: &ModelParams, omega: f64) -> f64 {
    let r = FunctionalReport::compute(u, params, omega);
    r.jw
}

/// `K_w = <J_w'(U), U> = 2 I_w + (p+2) G`.
pub fn kw(u: &StatePair, params: &ModelParams, omega: f64) -> f64 {
    let r = FunctionalReport::compute(u, params, omega);
    r.kw
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2w")]
    pub i2w: f64,
    #[serde(rename = "Iw")]
    pub iw: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "Jw")]
    pub jw: f64,
    #[serde(rename = "Kw")]
    pub kw: f64,
    pub omega: f64,
}

impl FunctionalReport {
    pub fn compute(u: &StatePair, params: &ModelParams, omega: f64) -> Self {
        let p = params.p;
        let q = parts(u, p);
        let i1 = q.i1(params);
        let cross = q.cross(params);
        let i2w = -2.0 * omega * cross;
        let iw = i1 + i2w;
        let g = q.g(p);
        Self {
            h: 0.5 * (i1 + g),
            q: -cross,
            i1,
            i2w,
            iw,
            g,
            jw: iw + g,
            kw: 2.0 * iw + (p + 2.0) * g,
            omega,
        }
    }
}

/// `M1 ||U||_X^2 <= I_w(U) <= M2 ||U||_X^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityBounds {
    pub m1: f64,
    pub m2: f64,
}

/// Smallest eigenvalue of the symbol of `I_w` at wavenumber `k`, i.e. of
/// `[[1 - c k^2, -w (1 + b k^2)], [-w (1 + b k^2), 1 - a k^2]]`.
pub fn symbol_min_eigenvalue(params: &ModelParams, omega: f64, k: f64) -> f64 {
    let k2 = k * k;
    let p11 = 1.0 - params.c * k2;
    let p22 = 1.0 - params.a * k2;
    let q = omega * (1.0 + params.b * k2);
    0.5 * (p11 + p22) - (0.25 * (p11 - p22).powi(2) + q * q).sqrt()
}

/// `M1` is the minimum over the grid wavenumbers of the symbol's smallest
/// eigenvalue over `1 + k^2`, which is the sharp constant for the discrete
/// form; `M2` is the elementary Cauchy-Schwarz bound.
pub fn coercivity_bounds(params: &ModelParams, omega: f64, grid: &Grid) -> Result<CoercivityBounds> {
    if !omega.is_finite() {
        return Err(Error::invalid("omega must be finite"));
    }
    let ny = grid.nyquist();
    let m1 = grid
        .k()
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            // first derivatives drop the Nyquist mode
            let k = if j == ny { 0.0 } else { k };
            symbol_min_eigenvalue(params, omega, k) / (1.0 + k * k)
        })
        .fold(f64::INFINITY, f64::min);
    let w = omega.abs();
    let m2 = (1.0 + w).max(params.c.abs() + params.b * w).max(params.a.abs() + params.b * w);
    if !(m1 > 0.0) {
        return Err(Error::Validation(format!("I_w is not coercive at omega = {omega}: M1 = {m1:.6e}")));
    }
    Ok(CoercivityBounds { m1, m2 })
}

/// Certified discrete Sobolev constant: `max_j |f_j| <= s ||f||_{H^1}` on this grid.
pub fn sobolev_constant(grid: &Grid) -> f64 {
    let ny = grid.nyquist();
    let sum: f64 = grid
        .k()
        .iter()
        .enumerate()
        .map(|(j, &k)| if j == ny { 1.0 } else { 1.0 / (1.0 + k * k) })
        .sum();
    (sum / grid.length()).sqrt()
}

/// A constant `M` with `|G(U)| <= M ||U||_X^(p+2)` for every state on `grid`.
pub fn g_bound_constant(grid: &Arc<Grid>, p: f64) -> f64 {
    let s = sobolev_constant(grid);
    // max of a b^(p+1) over a^2 + b^2 = 1
    let ab = (1.0 / (p + 2.0)).sqrt() * ((p + 1.0) / (p + 2.0)).powf(0.5 * (p + 1.0));
    2.0 / (p + 1.0) * s.powf(p) * ab
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::smooth_state;
    use crate::spectral::{make_grid, norm_x_sq, RealField};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn sech_pair(n: usize) -> StatePair {
        let grid = make_grid(80.0, n).unwrap();
        let f = RealField::from_fn(grid.clone(), |x| 1.0 / x.cosh());
        StatePair::new(f.clone(), f).unwrap()
    }

    #[test]
    fn zero_state() {
        let grid = make_grid(20.0, 64).unwrap();
        let z = StatePair::zeros(grid);
        let r = FunctionalReport::compute(&z, &ModelParams::reference(1.0), 0.5);
        assert_eq!([r.h, r.q, r.i1, r.i2w, r.iw, r.g, r.jw, r.kw], [0.0; 8]);
    }

    #[test]
    fn sech_values() {
        let u = sech_pair(1024);
        let params = ModelParams::reference(1.0);
        assert_relative_eq!(hamiltonian(&u, &params), 2.0 + 1.0 / 9.0 + PI / 4.0, max_relative = 1e-9);
        assert_relative_eq!(charge(&u, &params), -37.0 / 18.0, max_relative = 1e-9);
        assert_relative_eq!(i1(&u, &params), 38.0 / 9.0, max_relative = 1e-9);
        assert_relative_eq!(i2w(&u, &params, 0.9), -3.7, max_relative = 1e-9);
        assert_relative_eq!(g_fun(&u, 1.0), PI / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn charge_is_odd_in_second_component() {
        let grid = make_grid(30.0, 128).unwrap();
        let u = smooth_state(&grid, 3, 6, 1.0);
        let flipped = StatePair::new(u.first.clone(), u.second.scale(-1.0)).unwrap();
        let params = ModelParams::reference(1.0);
        assert_relative_eq!(charge(&flipped, &params), -charge(&u, &params), max_relative = 1e-14);
    }

    #[test]
    fn hamiltonian_homogeneity_split() {
        let grid = make_grid(30.0, 128).unwrap();
        let u = smooth_state(&grid, 4, 6, 0.5);
        let params = ModelParams::reference(1.0);
        let quad = |v: &StatePair| 0.5 * i1(v, &params);
        let cub = |v: &StatePair| 0.5 * g_fun(v, 1.0);
        let u2 = u.scale(2.0);
        assert_relative_eq!(quad(&u2), 4.0 * quad(&u), max_relative = 1e-13);
        assert_relative_eq!(cub(&u2), 8.0 * cub(&u), max_relative = 1e-13);
        assert_relative_eq!(hamiltonian(&u2, &params), quad(&u2) + cub(&u2), max_relative = 1e-13);
    }

    #[test]
    fn coercivity_constants() {
        let params = ModelParams::reference(1.0);
        let grid = make_grid(80.0, 4096).unwrap();
        let b = coercivity_bounds(&params, 0.9, &grid).unwrap();
        assert_relative_eq!(b.m2, 1.9, max_relative = 1e-15);
        assert!(b.m1 > 0.0 && b.m1 < 0.1);
        let b0 = coercivity_bounds(&params, 1e-9, &grid).unwrap();
        assert!((b0.m1 - 1.0 / 6.0).abs() < 1e-3, "{}", b0.m1);
        assert!(coercivity_bounds(&params, 1.0, &grid).is_err());
    }

    #[test]
    fn g_bound_over_scaled_states() {
        let grid = make_grid(40.0, 256).unwrap();
        for p in [1.0, 2.0, 3.0, 4.5] {
            let m = g_bound_constant(&grid, p);
            for seed in 0..20 {
                let u = smooth_state(&grid, seed, 10, 1.0);
                for lam in [0.1, 1.0, 10.0] {
                    let v = u.scale(lam);
                    let rhs = m * norm_x_sq(&v).powf(0.5 * (p + 2.0));
                    assert!(g_fun(&v, p).abs() <= rhs * (1.0 + 1e-12));
                }
            }
        }
    }

    fn stability_sample(a: f64, c: f64, frac: f64) -> ModelParams {
        // b in (0, min(sqrt(ac), -(a+c)/2))
        let bmax = (a * c).sqrt().min(-(a + c) / 2.0);
        ModelParams::new(a, frac * bmax, c, 1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn k_identity(seed in 0u64..100_000, p in 1.0f64..6.0, omega in 0.05f64..0.95) {
            let grid = make_grid(30.0, 128).unwrap();
            let u = smooth_state(&grid, seed, 8, 1.0);
            let params = ModelParams::new(-1.0 / 6.0, 1.0 / 12.0, -1.0 / 6.0, p);
            let r = FunctionalReport::compute(&u, &params, omega);
            let expect = 2.0 * r.iw + (p + 2.0) * r.g;
            let scale = 2.0 * r.iw.abs() + (p + 2.0) * r.g.abs();
            prop_assert!((r.kw - expect).abs() <= 1e-12 * scale);
            prop_assert!((r.jw - (r.iw + r.g)).abs() <= 1e-12 * (r.iw.abs() + r.g.abs()));
        }

        #[test]
        fn j_is_twice_h_plus_wq(seed in 0u64..100_000, omega in 0.05f64..0.95) {
            let grid = make_grid(30.0, 128).unwrap();
            let u = smooth_state(&grid, seed, 8, 1.0);
            let params = ModelParams::reference(2.0);
            let r = FunctionalReport::compute(&u, &params, omega);
            let other = 2.0 * (hamiltonian(&u, &params) + omega * charge(&u, &params));
            let scale = r.i1.abs() + r.i2w.abs() + r.g.abs();
            prop_assert!((r.jw - other).abs() <= 1e-10 * scale);
        }

        #[test]
        fn i2w_linear_in_omega(seed in 0u64..100_000, w1 in 0.01f64..0.99, w2 in 0.01f64..0.99) {
            let grid = make_grid(30.0, 128).unwrap();
            let u = smooth_state(&grid, seed, 8, 1.0);
            let params = ModelParams::reference(1.0);
            let lhs = i2w(&u, &params, w1);
            let rhs = w1 / w2 * i2w(&u, &params, w2);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1e-300));
        }

        #[test]
        fn coercivity_sandwich(
            seed in 0u64..100_000,
            a in -2.0f64..-0.05,
            c in -2.0f64..-0.05,
            frac in 0.05f64..0.95,
            wfrac in 0.0f64..0.98,
        ) {
            let params = stability_sample(a, c, frac);
            let omega = wfrac * params.omega_max().unwrap();
            let grid = make_grid(30.0, 128).unwrap();
            let u = smooth_state(&grid, seed, 20, 1.0);
            let b = coercivity_bounds(&params, omega, &grid).unwrap();
            let n2 = norm_x_sq(&u);
            let val = iw(&u, &params, omega);
            prop_assert!(b.m1 * n2 <= val * (1.0 + 1e-12));
            prop_assert!(val <= b.m2 * n2 * (1.0 + 1e-12));
        }
    }
}
