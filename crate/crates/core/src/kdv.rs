//! KdV small-amplitude limit: the explicit `sech^(2/p)` profile, Beta-function
//! moments, the limit constant `J0`, the critical exponent, and the
//! `(psi, v) <-> (z, w)` long-wave scaling.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::functionals::g_fun;
use crate::model::{omega_from_eps, pow_even, ModelParams};
use crate::spectral::{deriv, dot, make_grid, Grid, RealField, StatePair};

/// `B(x, y)` through log-Gamma, for positive arguments.
pub fn beta(x: f64, y: f64) -> f64 {
    (ln_gamma(x) + ln_gamma(y) - ln_gamma(x + y)).exp()
}

/// `int sech^(2 nu)(a y) dy = 2 4^(nu-1) B(nu, nu) / a`.
pub fn sech_moment(nu: f64, a: f64) -> Result<f64> {
    if !(nu > 0.0 && a > 0.0 && nu.is_finite() && a.is_finite()) {
        return Err(Error::invalid(format!("sech_moment needs nu > 0 and a > 0, got ({nu}, {a})")));
    }
    Ok(2.0 * 4f64.powf(nu - 1.0) * beta(nu, nu) / a)
}

fn check_pm(p: f64, m: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must be >= 1, got {p}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid(format!("KdV coefficient m = sigma - 1/3 must be positive, got {m}")));
    }
    Ok(())
}

/// Closed form of `J0 = int (w0^2 + m w0'^2)`.
pub fn j0_closed(p: f64, m: f64) -> Result<f64> {
    check_pm(p, m)?;
    let inner = 2.0 * (p + 2.0).powf(2.0 / p + 1.0) * (p + 1.0).powf(2.0 / p) * m.sqrt() * beta(2.0 / p, 2.0 / p)
        / (p * (p + 4.0));
    Ok(inner.powf(p / (p + 2.0)))
}

/// `w0(0)`, negative.
pub fn kdv_amplitude(p: f64, m: f64) -> Result<f64> {
    let j0 = j0_closed(p, m)?;
    Ok(-((p + 1.0) * (p + 2.0) / (4.0 * j0)).powf(1.0 / p))
}

/// Argument scale `p / (2 sqrt(m))` of the profile.
pub fn kdv_width_rate(p: f64, m: f64) -> f64 {
    p / (2.0 * m.sqrt())
}

/// `w0(x) = A sech^(2/p)(p x / (2 sqrt m))`, the homoclinic solution of
/// `w - m w'' + 2/(p+1) J0 |w|^(p+1) = 0`.
pub fn kdv_profile_at(p: f64, m: f64, x: f64) -> Result<f64> {
    let amp = kdv_amplitude(p, m)?;
    Ok(amp * sech_pow(kdv_width_rate(p, m) * x, 2.0 / p))
}

fn sech_pow(t: f64, e: f64) -> f64 {
    // sech t = 2 e^{-|t|} / (1 + e^{-2|t|}), stable for large |t|
    let q = (-t.abs()).exp();
    (2.0 * q / (1.0 + q * q)).powf(e)
}

/// Profile sampled on `grid`, centred at `x = 0`.
pub fn kdv_profile(p: f64, m: f64, grid: &Arc<Grid>) -> Result<RealField> {
    let amp = kdv_amplitude(p, m)?;
    let rate = kdv_width_rate(p, m);
    Ok(RealField::from_fn(grid.clone(), |x| amp * sech_pow(rate * x, 2.0 / p)))
}

/// `|w0(L/2)|`, the truncation error of sampling on a cell of length `L`.
pub fn kdv_profile_tail(p: f64, m: f64, length: f64) -> Result<f64> {
    Ok(kdv_profile_at(p, m, 0.5 * length)?.abs())
}

/// A grid resolving `w0` to rounding error: tail below `1e-16` and the
/// Fourier decay set by the poles at distance `pi sqrt(m) / p`.
pub fn kdv_grid(p: f64, m: f64) -> Result<Arc<Grid>> {
    check_pm(p, m)?;
    let length = 80.0 * m.sqrt();
    let k_needed = 40.0 * p / (std::f64::consts::PI * m.sqrt());
    let n = ((length * k_needed / std::f64::consts::PI).ceil() as usize).next_power_of_two().max(256);
    make_grid(length, n)
}

/// Residual `w0 - m w0'' + 2/(p+1) J0 |w0|^(p+1)`.
pub fn kdv_residual(w0: &RealField, p: f64, m: f64) -> Result<RealField> {
    let j0 = j0_closed(p, m)?;
    let w2 = deriv(w0, 2)?;
    let coef = 2.0 / (p + 1.0) * j0;
    w0.zip_map(&w2, |w, d2| w - m * d2 + coef * pow_even(w, p))
}

/// Values of `int w0^2`: as printed in the closed form, from the Beta
/// recursion, and by quadrature of the sampled profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct W0L2 {
    pub paper_value: f64,
    pub derived_value: f64,
    pub quadrature_value: f64,
    pub discrepancy: bool,
}

/// The printed closed form for `int w0^2`.
pub fn w0_l2_printed(p: f64, m: f64) -> Result<f64> {
    check_pm(p, m)?;
    Ok(((p + 4.0) / 2.0).powf(2.0 / (p + 2.0))
        * (p + 2.0).powf(2.0 / p)
        * (p + 1.0).powf(-4.0 / (p * (p + 2.0)))
        * (m.sqrt() * beta(2.0 / p, 2.0 / p) / p).powf(p / (p + 2.0)))
}

pub fn w0_l2(p: f64, m: f64) -> Result<W0L2> {
    let paper_value = w0_l2_printed(p, m)?;
    let derived_value = (p + 4.0) / (2.0 * (p + 2.0)) * j0_closed(p, m)?;
    let quadrature_value = kdv_quadrature(p, m)?.l2;
    let discrepancy = ((paper_value - quadrature_value) / quadrature_value).abs() > 1e-6;
    Ok(W0L2 { paper_value, derived_value, quadrature_value, discrepancy })
}

/// Quadratures of the sampled profile on [`kdv_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdVQuadrature {
    /// `int (w0^2 + m w0'^2)`
    pub j0: f64,
    pub l2: f64,
    /// `G(w0, w0)`
    pub k0: f64,
    pub residual_max: f64,
}

pub fn kdv_quadrature(p: f64, m: f64) -> Result<KdVQuadrature> {
    kdv_quadrature_on(p, m, &kdv_grid(p, m)?)
}

pub fn kdv_quadrature_on(p: f64, m: f64, grid: &Arc<Grid>) -> Result<KdVQuadrature> {
    let w0 = kdv_profile(p, m, grid)?;
    let d1 = deriv(&w0, 1)?;
    let dx = grid.dx();
    let l2 = dot(w0.values(), w0.values()) * dx;
    let j0 = l2 + m * dot(d1.values(), d1.values()) * dx;
    let pair = StatePair::new(w0.clone(), w0.clone())?;
    let k0 = g_fun(&pair, p);
    let residual_max = kdv_residual(&w0, p, m)?.max_abs();
    Ok(KdVQuadrature { j0, l2, k0, residual_max })
}

/// `((p+2)/(p+1))^(2/p) - p^2 / (2 (p+4))`.
pub fn critical_fn(p: f64) -> f64 {
    ((p + 2.0) / (p + 1.0)).powf(2.0 / p) - p * p / (2.0 * (p + 4.0))
}

/// Root of [`critical_fn`] by bisection on `[4, 6]`.
pub fn critical_p0(tol: f64) -> Result<f64> {
    critical_p0_in(tol, 4.0, 6.0)
}

pub fn critical_p0_in(tol: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(tol >= 1e-12) {
        return Err(Error::invalid(format!("tolerance must be >= 1e-12, got {tol}")));
    }
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (critical_fn(lo), critical_fn(hi));
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::invalid(format!("bracket [{lo}, {hi}] does not straddle the root")));
    }
    // bisect to adjacent floats; the tolerance is then met with room to spare
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if critical_fn(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if critical_fn(lo).abs() <= critical_fn(hi).abs() { lo } else { hi };
    debug_assert!(critical_fn(root).abs() <= tol);
    Ok(root)
}

/// `4 r / p - p / (p+2)` with `r = int w0^2 / J0`; its sign is the sign of
/// `d''` as `omega -> 1`.
pub fn sign_functional(ratio: f64, p: f64) -> f64 {
    4.0 * ratio / p - p / (p + 2.0)
}

/// The sign functional evaluated along the two chains: with the printed
/// `int w0^2` and with the quadrature-consistent value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignChains {
    pub p: f64,
    pub printed: f64,
    /// `critical_fn(p) 2 (p+4) / (p (p+2))`, equal to `printed`
    pub printed_reduced: f64,
    pub derived: f64,
}

pub fn sign_chains(p: f64, m: f64) -> Result<SignChains> {
    let j0 = j0_closed(p, m)?;
    let printed = sign_functional(w0_l2_printed(p, m)? / j0, p);
    let printed_reduced = critical_fn(p) * 2.0 * (p + 4.0) / (p * (p + 2.0));
    let derived = sign_functional((p + 4.0) / (2.0 * (p + 2.0)), p);
    Ok(SignChains { p, printed, printed_reduced, derived })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdVLimitData {
    pub p: f64,
    pub m: f64,
    #[serde(rename = "J0")]
    pub j0: f64,
    pub amplitude: f64,
    pub width_rate: f64,
    pub w0_l2_paper: f64,
    pub w0_l2_derived: f64,
}

impl KdVLimitData {
    pub fn new(p: f64, m: f64) -> Result<Self> {
        let j0 = j0_closed(p, m)?;
        Ok(Self {
            p,
            m,
            j0,
            amplitude: kdv_amplitude(p, m)?,
            width_rate: kdv_width_rate(p, m),
            w0_l2_paper: w0_l2_printed(p, m)?,
            w0_l2_derived: (p + 4.0) / (2.0 * (p + 2.0)) * j0,
        })
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(())
}

/// `z(y) = eps^(-1/((p+1)(p+2))) psi(x)`, `y = eps^(1/(p+1)) x`; the physical
/// cell of length `L` becomes one of length `eps^(1/(p+1)) L`.
pub fn scale_to_zw(u: &StatePair, eps: f64, p: f64) -> Result<StatePair> {
    check_eps(eps)?;
    let grid = u.grid();
    let target = make_grid(grid.length() * eps.powf(1.0 / (p + 1.0)), grid.n())?;
    rescale(u, target, eps.powf(-1.0 / ((p + 1.0) * (p + 2.0))))
}

pub fn scale_from_zw(zw: &StatePair, eps: f64, p: f64) -> Result<StatePair> {
    check_eps(eps)?;
    let grid = zw.grid();
    let target = make_grid(grid.length() * eps.powf(-1.0 / (p + 1.0)), grid.n())?;
    rescale(zw, target, eps.powf(1.0 / ((p + 1.0) * (p + 2.0))))
}

fn rescale(u: &StatePair, target: Arc<Grid>, amp: f64) -> Result<StatePair> {
    let first = RealField::new(target.clone(), u.first.values().iter().map(|v| v * amp).collect())?;
    let second = RealField::new(target, u.second.values().iter().map(|v| v * amp).collect())?;
    StatePair::new(first, second)
}

/// `I_w(psi, v) = eps^((p+4)/((p+1)(p+2))) I^eps(z, w)`.
pub fn transport_factor(eps: f64, p: f64) -> f64 {
    eps.powf((p + 4.0) / ((p + 1.0) * (p + 2.0)))
}

/// Rescaled functionals on `(z, w)`; `j` and `k` act on the second component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledFunctionals {
    pub i1: f64,
    pub i2: f64,
    pub i: f64,
    pub j: f64,
    pub k: f64,
    pub omega: f64,
}

pub fn rescaled_functionals(zw: &StatePair, eps: f64, params: &ModelParams) -> Result<RescaledFunctionals> {
    check_eps(eps)?;
    let p = params.p;
    let omega = omega_from_eps(eps, p)?;
    let e = eps.powf(-2.0 / (p + 1.0));
    let dx = zw.grid().dx();
    let (z, w) = (zw.first.values(), zw.second.values());
    let dz = deriv(&zw.first, 1)?;
    let dw = deriv(&zw.second, 1)?;
    let (dz, dw) = (dz.values(), dw.values());
    let zz = dot(z, z) * dx;
    let ww = dot(w, w) * dx;
    let zw_ = dot(z, w) * dx;
    let dzz = dot(dz, dz) * dx;
    let dww = dot(dw, dw) * dx;
    let dzw = dot(dz, dw) * dx;
    let i1 = e * zz - params.c * dzz + e * ww - params.a * dww;
    let i2 = -2.0 * omega * (e * zw_ + params.b * dzw);
    // (1 - w^2) eps^(-2/(p+1)) = 1 up to rounding; kept explicit
    let j = e * (1.0 - omega * omega) * ww - ((2.0 * params.b + params.c) * omega * omega + params.a) * dww;
    let cubic: f64 = w.iter().map(|&v| v * pow_even(v, p)).sum::<f64>() * dx;
    let k = omega * 2.0 / (p + 1.0) * cubic;
    Ok(RescaledFunctionals { i1, i2, i: i1 + i2, j, k, omega })
}

/// `J0(w) = int (w^2 + m w'^2)`.
pub fn j0_functional(w: &RealField, m: f64) -> Result<f64> {
    let d1 = deriv(w, 1)?;
    let dx = w.grid().dx();
    Ok((dot(w.values(), w.values()) + m * dot(d1.values(), d1.values())) * dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::{iw, FunctionalReport};
    use crate::sample::localized_state;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const M: f64 = 1.0 / 6.0;

    #[test]
    fn sech_moments() {
        assert_relative_eq!(sech_moment(1.0, 1.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(sech_moment(2.0, 1.0).unwrap(), 4.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(sech_moment(0.5, 1.0).unwrap(), PI, max_relative = 1e-14);
        assert!(sech_moment(0.0, 1.0).is_err());
        assert!(sech_moment(1.0, -1.0).is_err());
    }

    #[test]
    fn j0_reference_value() {
        let expect = (36.0 / (5.0 * 6f64.sqrt())).powf(1.0 / 3.0);
        assert_relative_eq!(j0_closed(1.0, M).unwrap(), expect, max_relative = 1e-14);
        assert_relative_eq!(expect, 1.4324702914936966, max_relative = 1e-15);
        assert_relative_eq!(kdv_amplitude(1.0, M).unwrap(), -1.5 / expect, max_relative = 1e-14);
    }

    #[test]
    fn j0_m_scaling() {
        for p in [1.0, 2.0, 3.0, 5.0] {
            let r = j0_closed(p, 4.0 * M).unwrap() / j0_closed(p, M).unwrap();
            assert_relative_eq!(r, 2f64.powf(p / (p + 2.0)), max_relative = 1e-13);
        }
    }

    #[test]
    fn quadrature_consistency() {
        for p in [1.0, 2.0, 3.0, 5.0] {
            for m in [1.0 / 6.0, 1.0 / 3.0] {
                let j0 = j0_closed(p, m).unwrap();
                let q = kdv_quadrature(p, m).unwrap();
                assert_relative_eq!(q.j0, j0, max_relative = 1e-8);
                assert!(q.residual_max <= 1e-10, "p={p} m={m} residual {}", q.residual_max);
                assert_relative_eq!(q.l2 / j0, (p + 4.0) / (2.0 * (p + 2.0)), max_relative = 1e-8);
                assert_relative_eq!(q.k0, -1.0, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn w0_l2_values() {
        let r = w0_l2(1.0, M).unwrap();
        assert_relative_eq!(r.derived_value, 5.0 / 6.0 * 1.4324702914936966, max_relative = 1e-12);
        assert_relative_eq!(r.quadrature_value, r.derived_value, max_relative = 1e-8);
        assert!((r.paper_value - 2.68588).abs() < 1e-4, "{}", r.paper_value);
        assert!(r.discrepancy);
        assert_relative_eq!(r.paper_value / r.quadrature_value, 2.25, max_relative = 1e-8);
        // width grows like sqrt(m) and the amplitude like J0^(-1/p)
        let r4 = w0_l2(1.0, 4.0 * M).unwrap();
        assert_relative_eq!(r4.quadrature_value / r.quadrature_value, 2f64.powf(1.0 / 3.0), max_relative = 1e-8);
    }

    #[test]
    fn profile_is_even() {
        let grid = make_grid(20.0, 256).unwrap();
        let w = kdv_profile(1.0, M, &grid).unwrap();
        let n = grid.n();
        for j in 1..n {
            assert_eq!(w.values()[j], w.values()[n - j]);
        }
        assert_relative_eq!(w.values()[n / 2], -1.047142135, max_relative = 1e-9);
    }

    #[test]
    fn critical_function() {
        assert_relative_eq!(critical_fn(1.0), 2.15, max_relative = 1e-15);
        assert_relative_eq!(critical_fn(4.0), (1.2f64).sqrt() - 1.0, max_relative = 1e-14);
        assert!(critical_fn(4.0) > 0.0 && critical_fn(6.0) < 0.0);
        let mut prev = critical_fn(1.0);
        for i in 1..=70 {
            let v = critical_fn(1.0 + 0.1 * i as f64);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn critical_root() {
        let p0 = critical_p0(1e-10).unwrap();
        assert!((p0 - 4.2280673976).abs() < 1e-8, "{p0}");
        assert!(critical_fn(p0).abs() <= 1e-10);
        let p1 = critical_p0_in(1e-10, 4.0, 5.0).unwrap();
        assert!((p0 - p1).abs() < 1e-10);
        assert!(critical_p0(1e-13).is_err());
    }

    #[test]
    fn sign_chain_values() {
        for p in [1.0, 2.0, 3.0, 4.0, 4.5, 5.0] {
            let s = sign_chains(p, M).unwrap();
            assert_relative_eq!(s.printed, s.printed_reduced, max_relative = 1e-12);
            assert_relative_eq!(s.derived, (4.0 - p) / p, epsilon = 1e-14);
        }
    }

    #[test]
    fn scaling_round_trip_and_transport() {
        let params = ModelParams::reference(2.0);
        let grid = make_grid(60.0, 256).unwrap();
        for seed in 0..5 {
            let u = localized_state(&grid, seed, 4.0, 1.0);
            let eps = 0.3;
            let zw = scale_to_zw(&u, eps, params.p).unwrap();
            let back = scale_from_zw(&zw, eps, params.p).unwrap();
            assert_relative_eq!(back.grid().length(), 60.0, max_relative = 1e-14);
            for (a, b) in u.first.values().iter().zip(back.first.values()) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
            assert_relative_eq!(g_fun(&zw, params.p), g_fun(&u, params.p), max_relative = 1e-10);
            let omega = omega_from_eps(eps, params.p).unwrap();
            let rf = rescaled_functionals(&zw, eps, &params).unwrap();
            let direct = FunctionalReport::compute(&u, &params, omega);
            let t = transport_factor(eps, params.p);
            assert_relative_eq!(t * rf.i1, direct.i1, max_relative = 1e-10);
            assert_relative_eq!(t * rf.i2, direct.i2w, max_relative = 1e-10);
            assert_relative_eq!(t * rf.i, iw(&u, &params, omega), max_relative = 1e-10);
        }
    }

    #[test]
    fn rescaled_zero() {
        let grid = make_grid(10.0, 64).unwrap();
        let r = rescaled_functionals(&StatePair::zeros(grid), 0.5, &ModelParams::reference(1.0)).unwrap();
        assert_eq!([r.i1, r.i2, r.i, r.j, r.k], [0.0; 5]);
    }

    #[test]
    fn j_eps_is_i_eps_on_the_diagonal() {
        let params = ModelParams::new(-0.3, 0.1, -0.1, 1.0);
        let grid = make_grid(40.0, 256).unwrap();
        let w = localized_state(&grid, 9, 3.0, 1.0).second;
        for eps in [0.5, 1e-2, 1e-4] {
            let omega = omega_from_eps(eps, params.p).unwrap();
            let diag = StatePair::new(w.scale(omega), w.clone()).unwrap();
            let r = rescaled_functionals(&diag, eps, &params).unwrap();
            assert_relative_eq!(r.j, r.i, max_relative = 1e-10);
        }
    }

    #[test]
    fn j_eps_converges_to_j0() {
        let params = ModelParams::new(-0.3, 0.1, -0.1, 1.0);
        let m = params.kdv_m();
        let grid = kdv_grid(1.0, m).unwrap();
        let w0 = kdv_profile(1.0, m, &grid).unwrap();
        let pair = StatePair::new(w0.clone(), w0.clone()).unwrap();
        assert_relative_eq!(g_fun(&pair, 1.0), -1.0, max_relative = 1e-9);
        let j0 = j0_functional(&w0, m).unwrap();
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let r = rescaled_functionals(&StatePair::new(w0.clone(), w0.clone()).unwrap(), eps, &params).unwrap();
            let diff = (r.j - j0).abs();
            assert!(diff < prev, "eps={eps}: {diff} !< {prev}");
            prev = diff;
        }
        assert!(prev < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn transport_random(seed in 0u64..100_000, eps in 0.01f64..0.9, p in 1.0f64..5.0) {
            let params = ModelParams::new(-1.0 / 6.0, 1.0 / 12.0, -1.0 / 6.0, p);
            let grid = make_grid(50.0, 256).unwrap();
            let u = localized_state(&grid, seed, 4.0, 1.0);
            let zw = scale_to_zw(&u, eps, p).unwrap();
            let g0 = g_fun(&u, p);
            prop_assert!((g_fun(&zw, p) - g0).abs() <= 1e-10 * g0.abs().max(1e-12));
            let omega = omega_from_eps(eps, p).unwrap();
            let rf = rescaled_functionals(&zw, eps, &params).unwrap();
            let d = iw(&u, &params, omega);
            prop_assert!((transport_factor(eps, p) * rf.i - d).abs() <= 1e-10 * d.abs());
        }
    }
}
