//! The action curve `d(w)` along a branch of solitary waves: its two
//! closed routes, first derivative three ways, second derivative two ways,
//! the convexity verdict, and the inverse map `w(U)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{g_fun, i2w};
use crate::kdv::critical_fn;
use crate::spectral::StatePair;
use crate::wave::SolitaryWave;

/// `(2/(p+2))^(2/p)`
fn kappa(p: f64) -> f64 {
    (2.0 / (p + 2.0)).powf(2.0 / p)
}

/// Scalar summary of one branch point; this is what branch CSV files carry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub omega: f64,
    pub eps: f64,
    /// `I_w` of the `G = -1` pair
    pub iw_min: f64,
    /// `I_{2,w}` of the `G = -1` pair
    pub i2w: f64,
    /// `G`, `H`, `Q` of the profile
    pub g: f64,
    pub h: f64,
    pub q: f64,
    pub d: f64,
    pub residual: f64,
}

impl BranchPoint {
    pub fn from_wave(w: &SolitaryWave) -> Self {
        Self {
            omega: w.omega,
            eps: w.eps,
            iw_min: w.iw_min,
            i2w: i2w(&w.normalized, &w.params, w.omega),
            g: w.functionals.g,
            h: w.functionals.h,
            q: w.functionals.q,
            d: w.d_value,
            residual: w.residual_norm,
        }
    }
}

/// The three evaluations of `d` at one wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DRoutes {
    /// `p/(2(p+2)) I_w(profile)`
    pub profile_route: f64,
    /// `p/(2(p+2)) (2/(p+2))^(2/p) I^((p+2)/p)` from the normalized pair
    pub normalized_route: f64,
    /// `H + w Q` on the profile
    pub hamiltonian_route: f64,
    pub agree: bool,
}

pub fn d_of_wave(wave: &SolitaryWave) -> DRoutes {
    let p = wave.params.p;
    let a = wave.d_value;
    let b = p / (2.0 * (p + 2.0)) * kappa(p) * wave.iw_min.powf((p + 2.0) / p);
    let c = wave.functionals.h + wave.omega * wave.functionals.q;
    let agree = ((a - b) / a).abs() <= 1e-8 && ((a - c) / a).abs() <= 1e-8;
    DRoutes { profile_route: a, normalized_route: b, hamiltonian_route: c, agree }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFailure {
    pub omega: f64,
    pub message: String,
}

/// A branch sorted by decreasing speed. `waves` is empty when the branch
/// was loaded from a summary file.
#[derive(Debug, Clone)]
pub struct Branch {
    pub p: f64,
    pub points: Vec<BranchPoint>,
    pub waves: Vec<SolitaryWave>,
    pub failure: Option<BranchFailure>,
}

impl Branch {
    pub fn new(waves: Vec<SolitaryWave>) -> Self {
        let p = waves.first().map(|w| w.params.p).unwrap_or(f64::NAN);
        let points = waves.iter().map(BranchPoint::from_wave).collect();
        Self { p, points, waves, failure: None }
    }

    pub fn partial(waves: Vec<SolitaryWave>, failure: BranchFailure) -> Self {
        let mut b = Self::new(waves);
        b.failure = Some(failure);
        b
    }

    pub fn from_points(p: f64, points: Vec<BranchPoint>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[0].omega > w[1].omega)) {
            return Err(Error::invalid("branch points must be sorted by strictly decreasing omega"));
        }
        Ok(Self { p, points, waves: Vec::new(), failure: None })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|q| q.omega).collect()
    }

    fn interior(&self, i: usize) -> Result<()> {
        if i == 0 || i + 1 >= self.points.len() {
            return Err(Error::invalid(format!("index {i} is not an interior branch point")));
        }
        Ok(())
    }

    /// Largest neighbor spacing at `i`.
    pub fn spacing(&self, i: usize) -> f64 {
        let o = |j: usize| self.points[j].omega;
        let left = if i > 0 { o(i - 1) - o(i) } else { 0.0 };
        let right = if i + 1 < self.points.len() { o(i) - o(i + 1) } else { 0.0 };
        left.max(right)
    }
}

/// Three-point derivative weights at the middle node for values at `x0 < x1 < x2`.
fn first_weights(x0: f64, x1: f64, x2: f64) -> [f64; 3] {
    let (h0, h1) = (x1 - x0, x2 - x1);
    [-h1 / (h0 * (h0 + h1)), (h1 - h0) / (h0 * h1), h0 / (h1 * (h0 + h1))]
}

fn second_weights(x0: f64, x1: f64, x2: f64) -> [f64; 3] {
    let (h0, h1) = (x1 - x0, x2 - x1);
    [2.0 / (h0 * (h0 + h1)), -2.0 / (h0 * h1), 2.0 / (h1 * (h0 + h1))]
}

fn stencil(branch: &Branch, i: usize, f: impl Fn(&BranchPoint) -> f64, second: bool) -> Result<f64> {
    branch.interior(i)?;
    // ascending omega: i+1, i, i-1
    let (a, b, c) = (&branch.points[i + 1], &branch.points[i], &branch.points[i - 1]);
    let w = if second { second_weights(a.omega, b.omega, c.omega) } else { first_weights(a.omega, b.omega, c.omega) };
    Ok(w[0] * f(a) + w[1] * f(b) + w[2] * f(c))
}

/// `d'` at an interior point: central difference, the charge, and the `I_2` form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DPrime {
    pub fd: f64,
    pub via_charge: f64,
    pub via_i2: f64,
    pub spacing_warning: bool,
}

pub fn dprime(branch: &Branch, i: usize) -> Result<DPrime> {
    let fd = stencil(branch, i, |q| q.d, false)?;
    let q = &branch.points[i];
    let p = branch.p;
    let via_i2 = 0.5 * kappa(p) * q.iw_min.powf(2.0 / p) * q.i2w / q.omega;
    Ok(DPrime { fd, via_charge: q.q, via_i2, spacing_warning: branch.spacing(i) > 0.1 })
}

pub fn dsecond_fd(branch: &Branch, i: usize) -> Result<f64> {
    stencil(branch, i, |q| q.d, true)
}

/// The `d''` formula in terms of `I_w`, `I_{2,w}/w` and the derivative of the latter.
pub fn dsecond_via_deri2(branch: &Branch, i: usize) -> Result<f64> {
    let ratio_prime = stencil(branch, i, |q| q.i2w / q.omega, false)?;
    let q = &branch.points[i];
    let p = branch.p;
    let k = kappa(p);
    let r = q.i2w / q.omega;
    Ok(k / p * r * r * q.iw_min.powf((2.0 - p) / p) + 0.5 * k * q.iw_min.powf(2.0 / p) * ratio_prime)
}

/// Per-point table for reports and branch files; derivative columns are
/// `None` at the end points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DRow {
    pub point: BranchPoint,
    pub dprime: Option<DPrime>,
    pub dsecond_fd: Option<f64>,
    pub dsecond_deri2: Option<f64>,
}

pub fn d_table(branch: &Branch) -> Vec<DRow> {
    (0..branch.len())
        .map(|i| DRow {
            point: branch.points[i],
            dprime: dprime(branch, i).ok(),
            dsecond_fd: dsecond_fd(branch, i).ok(),
            dsecond_deri2: dsecond_via_deri2(branch, i).ok(),
        })
        .collect()
}

pub fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Numerical and closed-form predictions of `sign d''` as `w -> 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub p: f64,
    /// `(omega, d'' by finite differences)` at the interior points closest to 1
    pub samples: Vec<(f64, f64)>,
    pub numerical_sign: i8,
    /// the printed chain: `sign critical_fn(p)`, root 4.2280673976
    pub printed_sign: i8,
    /// the quadrature-consistent chain: `sign((4 - p)/p)`, root 4
    pub derived_sign: i8,
    pub numerical_vs_printed: bool,
    pub numerical_vs_derived: bool,
    pub printed_vs_derived: bool,
}

pub fn convexity_report(branch: &Branch) -> Result<ConvexityReport> {
    let p = branch.p;
    if branch.len() < 3 {
        return Err(Error::invalid("convexity needs at least three branch points"));
    }
    let mut samples: Vec<(f64, f64)> =
        (1..branch.len() - 1).map(|i| Ok((branch.points[i].omega, dsecond_fd(branch, i)?))).collect::<Result<_>>()?;
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    samples.truncate(3);
    let signs: Vec<i8> = samples.iter().map(|s| sign_of(s.1)).collect();
    let numerical_sign = if signs.iter().all(|&s| s == signs[0]) { signs[0] } else { 0 };
    let printed_sign = sign_of(critical_fn(p));
    let derived_sign = sign_of((4.0 - p) / p);
    Ok(ConvexityReport {
        p,
        samples,
        numerical_sign,
        printed_sign,
        derived_sign,
        numerical_vs_printed: numerical_sign == printed_sign,
        numerical_vs_derived: numerical_sign == derived_sign,
        printed_vs_derived: printed_sign == derived_sign,
    })
}

/// Monotone piecewise-cubic (Fritsch-Carlson) interpolant through sorted nodes.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n || x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("PCHIP needs >= 2 strictly increasing nodes"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m = vec![s[0]; 2];
        } else {
            for i in 1..n - 1 {
                if s[i - 1] * s[i] > 0.0 {
                    let (w1, w2) = (2.0 * h[i] + h[i - 1], h[i] + 2.0 * h[i - 1]);
                    m[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
                }
            }
            let end = |h0: f64, h1: f64, s0: f64, s1: f64| {
                let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
                if sign_of(d) != sign_of(s0) {
                    0.0
                } else if sign_of(s0) != sign_of(s1) && d.abs() > 3.0 * s0.abs() {
                    3.0 * s0
                } else {
                    d
                }
            };
            m[0] = end(h[0], h[1], s[0], s[1]);
            m[n - 1] = end(h[n - 2], h[n - 3], s[n - 2], s[n - 3]);
        }
        Ok(Self { x, y, m })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().expect("nonempty"))
    }

    pub fn eval(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.range();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k => (k - 1).min(self.x.len() - 2),
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) =
            (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s, -2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        Some(h00 * self.y[i] + h10 * h * self.m[i] + h01 * self.y[i + 1] + h11 * h * self.m[i + 1])
    }
}

/// `w(U) = d^{-1}(-(p/4) G(U))`, by monotone interpolation of the branch.
pub fn omega_of_state(u: &StatePair, branch: &Branch) -> Result<f64> {
    omega_of_g(g_fun(u, branch.p), branch)
}

pub fn omega_of_g(g: f64, branch: &Branch) -> Result<f64> {
    let p = branch.p;
    if !(g < 0.0) {
        return Err(Error::invalid(format!("w(U) needs G(U) < 0, got {g:.6e}")));
    }
    let target = -0.25 * p * g;
    let interp = inverse_d(branch)?;
    let (lo, hi) = interp.range();
    // end nodes reproduced up to rounding
    let band = 1e-10 * hi.abs();
    let target = if target < lo && target >= lo - band {
        lo
    } else if target > hi && target <= hi + band {
        hi
    } else {
        target
    };
    interp.eval(target).ok_or_else(|| {
        let (lo, hi) = interp.range();
        Error::invalid(format!(
            "target d = {target:.6e} outside the branch range [{lo:.6e}, {hi:.6e}]; admissible G in [{:.6e}, {:.6e}]",
            -4.0 * hi / p,
            -4.0 * lo / p
        ))
    })
}

fn inverse_d(branch: &Branch) -> Result<Pchip> {
    // descending omega gives ascending d on a decreasing curve
    let ds: Vec<f64> = branch.points.iter().map(|q| q.d).collect();
    if ds.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("d is not strictly monotone on this branch"));
    }
    Pchip::new(ds, branch.omegas())
}

/// Lemma-type first-order bounds between neighbours: the defect of each
/// side over `dw^2`, whose maximum is the fitted constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborBounds {
    /// `(w1, w2, defect_lower / dw^2, defect_upper / dw^2)`
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub fitted_constant: f64,
}

/// With `w1 < w2`:
/// `d(w1) <= d(w2) - 1/2 k I(w2)^(2/p) ((w2 - w1)/w2) I_2(w2) + C dw^2` and
/// `d(w2) <= d(w1) + 1/2 k I(w1)^(2/p) ((w2 - w1)/w1) I_2(w1) + C dw^2`.
pub fn neighbor_bounds(branch: &Branch) -> NeighborBounds {
    let p = branch.p;
    let k = kappa(p);
    let rows: Vec<_> = branch
        .points
        .windows(2)
        .map(|w| {
            let (hi, lo) = (&w[0], &w[1]);
            let dw = hi.omega - lo.omega;
            let lower = lo.d - (hi.d - 0.5 * k * hi.iw_min.powf(2.0 / p) * (dw / hi.omega) * hi.i2w);
            let upper = hi.d - (lo.d + 0.5 * k * lo.iw_min.powf(2.0 / p) * (dw / lo.omega) * lo.i2w);
            (lo.omega, hi.omega, lower / (dw * dw), upper / (dw * dw))
        })
        .collect();
    let fitted_constant = rows.iter().map(|r| r.2.max(r.3)).fold(0.0, f64::max);
    NeighborBounds { rows, fitted_constant }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(p: f64, f: impl Fn(f64) -> f64) -> Branch {
        let points = (0..9)
            .map(|i| {
                let omega = 0.99 - 0.01 * i as f64;
                BranchPoint { omega, eps: 0.0, iw_min: 1.0, i2w: -1.0, g: -4.0 * f(omega) / p, h: 0.0, q: 0.0, d: f(omega), residual: 0.0 }
            })
            .collect();
        Branch::from_points(p, points).unwrap()
    }

    #[test]
    fn stencils_are_exact_on_quadratics() {
        let b = synthetic(1.0, |w| 3.0 - 2.0 * w + 5.0 * w * w);
        for i in 1..8 {
            let w = b.points[i].omega;
            assert!((dprime(&b, i).unwrap().fd - (-2.0 + 10.0 * w)).abs() < 1e-9);
            assert!((dsecond_fd(&b, i).unwrap() - 10.0).abs() < 1e-6);
        }
        assert!(dprime(&b, 0).is_err());
    }

    #[test]
    fn nonuniform_weights() {
        let w = first_weights(0.0, 0.3, 1.0);
        let f = |x: f64| x * x;
        assert!((w[0] * f(0.0) + w[1] * f(0.3) + w[2] * f(1.0) - 0.6).abs() < 1e-14);
        let s = second_weights(0.0, 0.3, 1.0);
        assert!((s[0] * f(0.0) + s[1] * f(0.3) + s[2] * f(1.0) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn pchip_is_monotone_and_interpolates() {
        let x = vec![0.0, 1.0, 2.0, 3.5, 4.0];
        let y = vec![0.0, 0.1, 2.0, 2.1, 5.0];
        let pc = Pchip::new(x.clone(), y.clone()).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((pc.eval(*a).unwrap() - b).abs() < 1e-14);
        }
        let mut prev = -1.0;
        for i in 0..=400 {
            let v = pc.eval(i as f64 * 0.01).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!(pc.eval(4.5).is_none());
    }

    #[test]
    fn omega_inverse_on_nodes() {
        let b = synthetic(1.0, |w| 1.0 / w);
        for q in &b.points {
            assert!((omega_of_g(q.g, &b).unwrap() - q.omega).abs() < 1e-12);
        }
        assert!(omega_of_g(0.5, &b).is_err());
        assert!(omega_of_g(-1e3, &b).is_err());
    }

    #[test]
    fn convexity_signs() {
        let b = synthetic(1.0, |w| (w - 2.0).powi(2));
        let r = convexity_report(&b).unwrap();
        assert_eq!((r.numerical_sign, r.printed_sign, r.derived_sign), (1, 1, 1));
        let b = synthetic(5.0, |w| -(w - 2.0).powi(2));
        let r = convexity_report(&b).unwrap();
        assert_eq!((r.numerical_sign, r.printed_sign, r.derived_sign), (-1, -1, -1));
        let b = synthetic(4.1, |w| w);
        let r = convexity_report(&b).unwrap();
        assert_eq!((r.printed_sign, r.derived_sign), (1, -1));
        assert!(!r.printed_vs_derived);
    }
}
