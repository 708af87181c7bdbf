//! Periodic Fourier discretization of the line.
//!
//! A [`Grid`] holds `N` equispaced nodes `x_j = -L/2 + j L / N` and the matching
//! wavenumbers in FFT storage order (`0, 1, .., N/2-1, -N/2, .., -1` times
//! `2 pi / L`). Transforms are unnormalized forward / `1/N`-normalized inverse.
//! Plans are shared behind `Arc` and are safe to use from several threads.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub struct Grid {
    length: f64,
    n: usize,
    dx: f64,
    x: Vec<f64>,
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("length", &self.length).field("n", &self.n).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// `(L, N)` with `L > 0` and `N >= 16` a power of two.
pub fn make_grid(length: f64, n: usize) -> Result<Arc<Grid>> {
    Grid::new(length, n).map(Arc::new)
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(format!("grid length must be positive, got {length}")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("grid size must be a power of two >= 16, got {n}")));
        }
        let dx = length / n as f64;
        let x = (0..n).map(|j| -0.5 * length + j as f64 * dx).collect();
        let k = (0..n).map(|j| 2.0 * std::f64::consts::PI * fft_index(j, n) as f64 / length).collect();
        let mut planner = FftPlanner::new();
        Ok(Self {
            length,
            n,
            dx,
            x,
            k,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    /// Wavenumbers in FFT storage order; index `N/2` is the Nyquist mode.
    pub fn k(&self) -> &[f64] {
        &self.k
    }
    pub fn nyquist(&self) -> usize {
        self.n / 2
    }
    pub fn k_max(&self) -> f64 {
        std::f64::consts::PI * self.n as f64 / self.length
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    pub fn forward_complex(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform keeping the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inv.process(&mut spec);
        let s = 1.0 / self.n as f64;
        spec.into_iter().map(|z| z.re * s).collect()
    }

    pub fn inverse_complex(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        self.inv.process(&mut spec);
        let s = 1.0 / self.n as f64;
        spec.iter_mut().for_each(|z| *z *= s);
        spec
    }

    /// Index of `-x_j` on the periodic grid.
    pub fn reflect_index(&self, j: usize) -> usize {
        (self.n - j) % self.n
    }

    /// Spectrum of `f`, multiplied pointwise by `symbol(k, is_nyquist)`, transformed back.
    pub fn apply_multiplier<F>(&self, values: &[f64], symbol: F) -> Vec<f64>
    where
        F: Fn(f64, bool) -> Complex64,
    {
        let mut spec = self.forward(values);
        let ny = self.nyquist();
        for (j, z) in spec.iter_mut().enumerate() {
            *z *= symbol(self.k[j], j == ny);
        }
        self.inverse(spec)
    }

    fn same(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}

/// Signed frequency index of FFT slot `j`.
pub fn fft_index(j: usize, n: usize) -> i64 {
    if j < n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Sampled real field on a grid.
#[derive(Clone)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl fmt::Debug for RealField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RealField").field("grid", &self.grid).field("len", &self.values.len()).finish()
    }
}

impl RealField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.n()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {j}")));
        }
        Ok(Self { grid, values })
    }

    /// Like [`RealField::new`] for values the caller knows to match the grid.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.n();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.x().iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_grid(&self, other: &RealField) -> Result<()> {
        if self.grid.same(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self::from_raw(
            self.grid.clone(),
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &RealField) -> Result<Self> {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    /// Symmetrization `(f(x) + f(-x)) / 2`.
    pub fn even_part(&self) -> Self {
        let g = &self.grid;
        let values = (0..g.n()).map(|j| 0.5 * (self.values[j] + self.values[g.reflect_index(j)])).collect();
        Self::from_raw(g.clone(), values)
    }

    /// Trigonometric interpolant evaluated at arbitrary points.
    pub fn eval_at(&self, points: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let spec = self.spectrum();
        let n = g.n() as f64;
        let x0 = g.x()[0];
        let ny = g.nyquist();
        points
            .iter()
            .map(|&x| {
                let t = x - x0;
                spec.iter()
                    .enumerate()
                    .map(|(j, z)| {
                        if j == ny {
                            z.re * (g.k()[j] * t).cos()
                        } else {
                            (z * Complex64::from_polar(1.0, g.k()[j] * t)).re
                        }
                    })
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    /// Spectral resampling onto another grid via the trigonometric interpolant.
    /// Points outside this field's period are periodically wrapped.
    pub fn resample(&self, target: &Arc<Grid>) -> Self {
        Self::from_raw(target.clone(), self.eval_at(target.x()))
    }
}

/// Spectral derivative of order 1..=4; odd orders drop the Nyquist mode.
pub fn deriv(f: &RealField, order: u32) -> Result<RealField> {
    if !(1..=4).contains(&order) {
        return Err(Error::invalid(format!("derivative order must be 1..=4, got {order}")));
    }
    let values = f.grid.apply_multiplier(&f.values, |k, ny| {
        if ny && order % 2 == 1 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, k).powu(order)
        }
    });
    Ok(RealField::from_raw(f.grid.clone(), values))
}

/// `(I - b d_x^2)^{-1} f`, Fourier multiplier `1 / (1 + b k^2)`.
pub fn helmholtz_inv(f: &RealField, b: f64) -> Result<RealField> {
    if !(b > 0.0) {
        return Err(Error::invalid(format!("Helmholtz coefficient must be positive, got {b}")));
    }
    let values = f.grid.apply_multiplier(&f.values, |k, _| Complex64::new(1.0 / (1.0 + b * k * k), 0.0));
    Ok(RealField::from_raw(f.grid.clone(), values))
}

/// `f(. + y)` by the phase factor `exp(i k y)`.
pub fn shift(f: &RealField, y: f64) -> RealField {
    let values = f.grid.apply_multiplier(&f.values, |k, ny| {
        if ny {
            Complex64::new((k * y).cos(), 0.0)
        } else {
            Complex64::from_polar(1.0, k * y)
        }
    });
    RealField::from_raw(f.grid.clone(), values)
}

/// Trapezoid `sum f_j g_j dx`, exact for band-limited periodic products.
pub fn inner_l2(f: &RealField, g: &RealField) -> Result<f64> {
    f.check_grid(g)?;
    Ok(dot(&f.values, &g.values) * f.grid.dx())
}

/// H^1 inner product evaluated in Fourier space. The Nyquist mode carries
/// weight 1 because its first derivative is dropped.
pub fn inner_h1(f: &RealField, g: &RealField) -> Result<f64> {
    f.check_grid(g)?;
    let fs = f.spectrum();
    let gs = g.spectrum();
    Ok(h1_spectral(&f.grid, &fs, &gs))
}

pub(crate) fn h1_spectral(grid: &Grid, fs: &[Complex64], gs: &[Complex64]) -> f64 {
    let ny = grid.nyquist();
    let sum: f64 = fs
        .iter()
        .zip(gs)
        .enumerate()
        .map(|(j, (a, b))| {
            let k = if j == ny { 0.0 } else { grid.k()[j] };
            (1.0 + k * k) * (a * b.conj()).re
        })
        .sum();
    sum * grid.dx() / grid.n() as f64
}

pub fn norm_h1(f: &RealField) -> f64 {
    inner_h1(f, f).unwrap_or(0.0).max(0.0).sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A pair of fields on one grid: `(eta, u)` for evolution, `(psi, v)` or
/// `(z, w)` for profiles.
#[derive(Debug, Clone)]
pub struct StatePair {
    pub first: RealField,
    pub second: RealField,
}

impl StatePair {
    pub fn new(first: RealField, second: RealField) -> Result<Self> {
        first.check_grid(&second)?;
        Ok(Self { first, second })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self { first: RealField::zeros(grid.clone()), second: RealField::zeros(grid) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.first.grid()
    }

    pub fn check_grid(&self, other: &StatePair) -> Result<()> {
        self.first.check_grid(&other.first)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { first: self.first.scale(s), second: self.second.scale(s) }
    }

    pub fn axpy(&self, s: f64, other: &StatePair) -> Result<Self> {
        Ok(Self { first: self.first.axpy(s, &other.first)?, second: self.second.axpy(s, &other.second)? })
    }

    pub fn sub(&self, other: &StatePair) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn even_part(&self) -> Self {
        Self { first: self.first.even_part(), second: self.second.even_part() }
    }

    pub fn shift(&self, y: f64) -> Self {
        Self { first: shift(&self.first, y), second: shift(&self.second, y) }
    }

    pub fn resample(&self, target: &Arc<Grid>) -> Self {
        Self { first: self.first.resample(target), second: self.second.resample(target) }
    }

    pub fn max_abs(&self) -> f64 {
        self.first.max_abs().max(self.second.max_abs())
    }

    /// Largest magnitude at the two nodes nearest `x = +-L/2`.
    pub fn tail(&self) -> f64 {
        let n = self.grid().n();
        [0, 1, n - 1]
            .iter()
            .map(|&j| self.first.values()[j].abs().max(self.second.values()[j].abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.first.values().iter().chain(self.second.values()).all(|v| v.is_finite())
    }
}

/// `||U||_X^2 = ||first||_{H^1}^2 + ||second||_{H^1}^2`.
pub fn norm_x_sq(u: &StatePair) -> f64 {
    let a = inner_h1(&u.first, &u.first).unwrap_or(0.0);
    let b = inner_h1(&u.second, &u.second).unwrap_or(0.0);
    (a + b).max(0.0)
}

pub fn norm_x(u: &StatePair) -> f64 {
    norm_x_sq(u).sqrt()
}

pub fn inner_x(u: &StatePair, w: &StatePair) -> Result<f64> {
    Ok(inner_h1(&u.first, &w.first)? + inner_h1(&u.second, &w.second)?)
}

/// Zero-padded evaluation of the polynomial products `eta u^p` and `u^(p+1)`
/// for integer `p`, exact (alias-free) on `N`-mode inputs when the padded
/// size is at least `(p + 2) N / 2`.
pub struct Dealiaser {
    src: Arc<Grid>,
    padded: Arc<Grid>,
}

impl Dealiaser {
    /// Returns `None` for non-integer `p`, which no finite padding dealiases.
    pub fn new(src: Arc<Grid>, p: f64) -> Option<Self> {
        if p.fract() != 0.0 || p < 1.0 {
            return None;
        }
        let need = ((p as usize + 2) * src.n()).div_ceil(2);
        let m = need.next_power_of_two();
        let padded = make_grid(src.length(), m).ok()?;
        Some(Self { src, padded })
    }

    pub fn padded_size(&self) -> usize {
        self.padded.n()
    }

    fn pad(&self, spec: &[Complex64]) -> Vec<f64> {
        let n = self.src.n();
        let m = self.padded.n();
        let mut out = vec![Complex64::new(0.0, 0.0); m];
        for (j, z) in spec.iter().enumerate() {
            let q = fft_index(j, n);
            if j == n / 2 {
                // Split the Nyquist coefficient symmetrically so the padded field stays real.
                out[(m as i64 + q) as usize % m] += z * 0.5;
                out[(-q) as usize % m] += z * 0.5;
            } else {
                out[(m as i64 + q) as usize % m] = *z;
            }
        }
        let scale = m as f64 / n as f64;
        self.padded.inverse(out).into_iter().map(|v| v * scale).collect()
    }

    fn truncate(&self, vals: &[f64]) -> Vec<Complex64> {
        let n = self.src.n();
        let m = self.padded.n();
        let spec = self.padded.forward(vals);
        let scale = n as f64 / m as f64;
        (0..n)
            .map(|j| {
                let q = fft_index(j, n);
                if j == n / 2 {
                    Complex64::new(0.0, 0.0)
                } else {
                    spec[(m as i64 + q) as usize % m] * scale
                }
            })
            .collect()
    }

    /// Spectra of `(eta * u^p, u^(p+1))` on the source grid.
    pub fn products(&self, eta_hat: &[Complex64], u_hat: &[Complex64], p: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let eta = self.pad(eta_hat);
        let u = self.pad(u_hat);
        let prod1: Vec<f64> = eta.iter().zip(&u).map(|(&e, &v)| e * crate::model::pow_signed(v, p)).collect();
        let prod2: Vec<f64> = u.iter().map(|&v| crate::model::pow_even(v, p)).collect();
        (self.truncate(&prod1), self.truncate(&prod2))
    }
}
