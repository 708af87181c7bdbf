//! Pseudospectral RK4 integration of the generalized abcb-Boussinesq system
//!
//! ```text
//! eta_t = -(I - b d_x^2)^{-1} d_x (u + a u_xx + eta u^p)
//! u_t   = -(I - b d_x^2)^{-1} d_x (eta + c eta_xx + u^(p+1)/(p+1))
//! ```
//!
//! with Hamiltonian/charge monitors and the small-data energy bound.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{charge, hamiltonian};
use crate::model::{pow_even, pow_signed, ModelParams};
use crate::spectral::{norm_x, Dealiaser, Grid, RealField, StatePair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_safety")]
    pub cfl_safety: f64,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default = "default_stride")]
    pub monitor_stride: usize,
    /// Reject steps above the CFL bound. Off only for deliberate instability runs.
    #[serde(default = "default_true")]
    pub enforce_cfl: bool,
}

fn default_safety() -> f64 {
    1.0
}
fn default_stride() -> usize {
    10
}
fn default_true() -> bool {
    true
}

impl EvolutionConfig {
    /// The largest CFL-compliant step for `grid`, rounded so `T` is a whole number of steps.
    pub fn auto(params: &ModelParams, grid: &Grid, t_final: f64, cfl_safety: f64, monitor_stride: usize) -> Self {
        let bound = cfl_bound(params, grid, cfl_safety);
        let steps = (t_final / bound).ceil().max(1.0);
        Self { dt: t_final / steps, t_final, cfl_safety, dealias: false, monitor_stride, enforce_cfl: true }
    }
}

/// `max_k |k| sqrt((1 - a k^2)(1 - c k^2)) / (1 + b k^2)` over the grid.
pub fn max_frequency(params: &ModelParams, grid: &Grid) -> f64 {
    grid.k()
        .iter()
        .map(|&k| dispersion_frequency(params, k))
        .fold(0.0, f64::max)
}

/// Linear phase frequency `|k| sqrt((1 - a k^2)(1 - c k^2)) / (1 + b k^2)`.
pub fn dispersion_frequency(params: &ModelParams, k: f64) -> f64 {
    let k2 = k * k;
    k.abs() * ((1.0 - params.a * k2) * (1.0 - params.c * k2)).sqrt() / (1.0 + params.b * k2)
}

pub fn cfl_bound(params: &ModelParams, grid: &Grid, safety: f64) -> f64 {
    safety / max_frequency(params, grid)
}

/// Nonlinear products `eta u^p` and `|u|^(p+1)` in Fourier space.
enum Products {
    Pointwise,
    Padded(Dealiaser),
}

struct Rhs {
    grid: Arc<Grid>,
    params: ModelParams,
    products: Products,
}

impl Rhs {
    fn new(grid: Arc<Grid>, params: ModelParams, dealias: bool) -> Result<Self> {
        let products = if dealias {
            match Dealiaser::new(grid.clone(), params.p) {
                Some(d) => Products::Padded(d),
                None => return Err(Error::invalid(format!("dealiasing needs an integer p, got {}", params.p))),
            }
        } else {
            Products::Pointwise
        };
        Ok(Self { grid, params, products })
    }

    fn eval(&self, eta: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let p = self.params.p;
        let eh = g.forward(eta);
        let uh = g.forward(u);
        let (n1, n2) = match &self.products {
            Products::Pointwise => {
                let a: Vec<f64> = eta.iter().zip(u).map(|(e, v)| e * pow_signed(*v, p)).collect();
                let b: Vec<f64> = u.iter().map(|v| pow_even(*v, p)).collect();
                (g.forward(&a), g.forward(&b))
            }
            Products::Padded(d) => d.products(&eh, &uh, p),
        };
        let ny = g.nyquist();
        let (a, b, c) = (self.params.a, self.params.b, self.params.c);
        let mut de = vec![Complex64::new(0.0, 0.0); eh.len()];
        let mut du = de.clone();
        for j in 0..eh.len() {
            if j == ny {
                continue;
            }
            let k = g.k()[j];
            let k2 = k * k;
            let m = Complex64::new(0.0, -k / (1.0 + b * k2));
            de[j] = m * (uh[j] * (1.0 - a * k2) + n1[j]);
            du[j] = m * (eh[j] * (1.0 - c * k2) + n2[j] / (p + 1.0));
        }
        (g.inverse(de), g.inverse(du))
    }
}

/// Semi-discrete right-hand side `(eta_t, u_t)`.
pub fn rhs(u: &StatePair, params: &ModelParams) -> Result<StatePair> {
    let r = Rhs::new(u.grid().clone(), *params, false)?;
    let (de, du) = r.eval(u.first.values(), u.second.values());
    StatePair::new(RealField::new(u.grid().clone(), de)?, RealField::new(u.grid().clone(), du)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunStatus {
    Completed,
    /// `||U||_X` exceeded `1e6`
    Blowup { step: usize },
    NonFinite { step: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "Q")]
    pub q: Vec<f64>,
    pub x_norm: Vec<f64>,
    pub orbit_distance: Option<Vec<f64>>,
    pub small_data_satisfied: Vec<bool>,
}

impl EvolutionTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: StatePair,
    pub trace: EvolutionTrace,
    pub status: RunStatus,
    pub steps: usize,
}

pub const BLOWUP_NORM: f64 = 1e6;

pub fn evolve(u0: &StatePair, params: &ModelParams, config: &EvolutionConfig) -> Result<Evolution> {
    evolve_monitored(u0, params, config, None)
}

/// RK4 to `T`, sampling the monitors every `monitor_stride` steps (and at
/// the first and last step). `orbit` adds an orbit-distance column.
pub fn evolve_monitored(
    u0: &StatePair,
    params: &ModelParams,
    config: &EvolutionConfig,
    orbit: Option<&(dyn Fn(&StatePair) -> f64 + Sync)>,
) -> Result<Evolution> {
    if !(config.dt > 0.0 && config.dt.is_finite()) || !(config.t_final >= 0.0 && config.t_final.is_finite()) {
        return Err(Error::invalid("dt must be positive and T non-negative"));
    }
    if !(config.cfl_safety > 0.0 && config.cfl_safety <= 1.0) {
        return Err(Error::invalid(format!("cfl_safety must lie in (0, 1], got {}", config.cfl_safety)));
    }
    if config.monitor_stride == 0 {
        return Err(Error::invalid("monitor_stride must be positive"));
    }
    let grid = u0.grid().clone();
    let bound = cfl_bound(params, &grid, config.cfl_safety);
    if config.enforce_cfl && config.dt > bound * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("dt = {:.6e} exceeds the CFL bound {bound:.6e}", config.dt)));
    }
    let rhs = Rhs::new(grid.clone(), *params, config.dealias)?;
    let steps = (config.t_final / config.dt).round() as usize;
    let dt = if steps == 0 { 0.0 } else { config.t_final / steps as f64 };
    let n = grid.n();
    let mut eta = u0.first.values().to_vec();
    let mut u = u0.second.values().to_vec();
    let mut trace = EvolutionTrace { orbit_distance: orbit.map(|_| Vec::new()), ..Default::default() };
    let record = |trace: &mut EvolutionTrace, t: f64, state: &StatePair| {
        trace.times.push(t);
        trace.h.push(hamiltonian(state, params));
        trace.q.push(charge(state, params));
        trace.x_norm.push(norm_x(state));
        trace.small_data_satisfied.push(small_data_bound(state, params).satisfied);
        if let (Some(f), Some(col)) = (orbit, trace.orbit_distance.as_mut()) {
            col.push(f(state));
        }
    };
    let pack = |eta: &[f64], u: &[f64]| StatePair {
        first: RealField::from_raw(grid.clone(), eta.to_vec()),
        second: RealField::from_raw(grid.clone(), u.to_vec()),
    };
    record(&mut trace, 0.0, u0);
    let mut status = RunStatus::Completed;
    let mut tmp_e = vec![0.0; n];
    let mut tmp_u = vec![0.0; n];
    for step in 1..=steps {
        let (k1e, k1u) = rhs.eval(&eta, &u);
        stage(&eta, &u, &k1e, &k1u, 0.5 * dt, &mut tmp_e, &mut tmp_u);
        let (k2e, k2u) = rhs.eval(&tmp_e, &tmp_u);
        stage(&eta, &u, &k2e, &k2u, 0.5 * dt, &mut tmp_e, &mut tmp_u);
        let (k3e, k3u) = rhs.eval(&tmp_e, &tmp_u);
        stage(&eta, &u, &k3e, &k3u, dt, &mut tmp_e, &mut tmp_u);
        let (k4e, k4u) = rhs.eval(&tmp_e, &tmp_u);
        for j in 0..n {
            eta[j] += dt / 6.0 * (k1e[j] + 2.0 * k2e[j] + 2.0 * k3e[j] + k4e[j]);
            u[j] += dt / 6.0 * (k1u[j] + 2.0 * k2u[j] + 2.0 * k3u[j] + k4u[j]);
        }
        if eta.iter().chain(&u).any(|v| !v.is_finite()) {
            status = RunStatus::NonFinite { step };
            break;
        }
        if step % config.monitor_stride == 0 || step == steps {
            let state = pack(&eta, &u);
            record(&mut trace, step as f64 * dt, &state);
            if *trace.x_norm.last().expect("recorded") > BLOWUP_NORM {
                status = RunStatus::Blowup { step };
                break;
            }
        }
    }
    Ok(Evolution { state: pack(&eta, &u), trace, status, steps })
}

fn stage(eta: &[f64], u: &[f64], ke: &[f64], ku: &[f64], h: f64, out_e: &mut [f64], out_u: &mut [f64]) {
    for j in 0..eta.len() {
        out_e[j] = eta[j] + h * ke[j];
        out_u[j] = u[j] + h * ku[j];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationCheck {
    pub drift_h: f64,
    pub drift_q: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Max over the trace of `|X(t) - X(0)| / max(1, |X(0)|)` for `H` and `Q`.
pub fn conservation_check(trace: &EvolutionTrace, tol: f64) -> Result<ConservationCheck> {
    if trace.is_empty() {
        return Err(Error::invalid("empty trace"));
    }
    let drift = |xs: &[f64]| {
        let x0 = xs[0];
        xs.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max) / x0.abs().max(1.0)
    };
    let drift_h = drift(&trace.h);
    let drift_q = drift(&trace.q);
    Ok(ConservationCheck { drift_h, drift_q, tol, passed: drift_h <= tol && drift_q <= tol })
}

/// `c0 ||U||^2 (1 - c1 ||U||^p) <= H(U)` with the derived constants
/// `c0 = min(1,|a|,|c|)/2`, `c1 = 2^(-p/2) / ((p+1) min(1,|a|,|c|))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallDataBound {
    pub lhs: f64,
    pub rhs: f64,
    pub c0: f64,
    pub c1: f64,
    pub satisfied: bool,
}

pub fn small_data_constants(params: &ModelParams) -> (f64, f64) {
    let mu = 1f64.min(params.a.abs()).min(params.c.abs());
    let p = params.p;
    (0.5 * mu, 2f64.powf(-0.5 * p) / ((p + 1.0) * mu))
}

pub fn small_data_bound(u: &StatePair, params: &ModelParams) -> SmallDataBound {
    let (c0, c1) = small_data_constants(params);
    let n = norm_x(u);
    let lhs = c0 * n * n * (1.0 - c1 * n.powf(params.p));
    let rhs = hamiltonian(u, params);
    let satisfied = lhs <= rhs + 1e-14 * rhs.abs().max(lhs.abs());
    SmallDataBound { lhs, rhs, c0, c1, satisfied }
}
