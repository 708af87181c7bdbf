//! Traveling-wave profiles: residual of the profile system, Petviashvili
//! iteration, Newton-GMRES refinement on even fields, constraint
//! normalization and continuation in the speed.
//!
//! The profile system is written as the gradient of `J_w / 2`:
//!
//! ```text
//! psi-equation:  psi + c psi'' - w (v - b v'') + |v|^(p+1) / (p+1) = 0
//! v-equation:    v + a v''   - w (psi - b psi'') + psi v^p          = 0
//! ```
//!
//! whose linear part `S(k) = [[1 - c k^2, -w (1 + b k^2)], [-w (1 + b k^2), 1 - a k^2]]`
//! is symmetric positive definite in the admissible window.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dcurve::{Branch, BranchFailure};
use crate::error::{Error, Result};
use crate::functionals::{g_fun, iw, FunctionalReport};
use crate::kdv::{j0_closed, kdv_profile_at};
use crate::krylov::gmres;
use crate::model::{eps_from_omega, pow_even, pow_signed, pow_signed_deriv, ModelParams, RegimeLevel};
use crate::spectral::{deriv, dot, make_grid, norm_x, Grid, RealField, StatePair};

/// `w^2 (1 + b k^2)^2 - (1 - a k^2)(1 - c k^2)`, the determinant of the
/// linear part in `(v, psi)`-equation ordering; negative in the window.
pub fn symbol_det(k: f64, params: &ModelParams, omega: f64) -> f64 {
    let k2 = k * k;
    let q = omega * (1.0 + params.b * k2);
    q * q - (1.0 - params.a * k2) * (1.0 - params.c * k2)
}

/// Residual fields: `r1` is the v-equation, `r2` the psi-equation.
#[derive(Debug, Clone)]
pub struct Residual {
    pub r1: RealField,
    pub r2: RealField,
    /// `||(r1, r2)||_X`
    pub norm: f64,
}

pub fn residual(u: &StatePair, params: &ModelParams, omega: f64) -> Result<Residual> {
    residual_with(u, params, omega, true)
}

/// The residual with the nonlinear terms optionally switched off.
pub fn residual_with(u: &StatePair, params: &ModelParams, omega: f64, nonlinear: bool) -> Result<Residual> {
    u.check_grid(u)?;
    let (psi, v) = (&u.first, &u.second);
    let psi2 = deriv(psi, 2)?;
    let v2 = deriv(v, 2)?;
    let p = params.p;
    let on = if nonlinear { 1.0 } else { 0.0 };
    let (a, b, c) = (params.a, params.b, params.c);
    let n = psi.values().len();
    let (ps, vs, ps2, vs2) = (psi.values(), v.values(), psi2.values(), v2.values());
    let mut r1 = Vec::with_capacity(n);
    let mut r2 = Vec::with_capacity(n);
    for j in 0..n {
        r1.push(vs[j] + a * vs2[j] - omega * (ps[j] - b * ps2[j]) + on * ps[j] * pow_signed(vs[j], p));
        r2.push(ps[j] + c * ps2[j] - omega * (vs[j] - b * vs2[j]) + on * pow_even(vs[j], p) / (p + 1.0));
    }
    let grid = u.grid().clone();
    let r1 = RealField::new(grid.clone(), r1)?;
    let r2 = RealField::new(grid, r2)?;
    let norm = norm_x(&StatePair { first: r1.clone(), second: r2.clone() });
    Ok(Residual { r1, r2, norm })
}

/// The linear part and its inverse acting on `(psi, v)`, mode by mode.
struct Symbol<'a> {
    grid: &'a Grid,
    params: ModelParams,
    omega: f64,
}

impl<'a> Symbol<'a> {
    fn entries(&self, k: f64) -> (f64, f64, f64) {
        let k2 = k * k;
        let s11 = 1.0 - self.params.c * k2;
        let s22 = 1.0 - self.params.a * k2;
        let s12 = -self.omega * (1.0 + self.params.b * k2);
        (s11, s12, s22)
    }

    fn apply_block(&self, f: &[f64], g: &[f64], inverse: bool) -> (Vec<f64>, Vec<f64>) {
        let fs = self.grid.forward(f);
        let gs = self.grid.forward(g);
        let mut out_f = vec![Complex64::new(0.0, 0.0); fs.len()];
        let mut out_g = out_f.clone();
        for j in 0..fs.len() {
            let (s11, s12, s22) = self.entries(self.grid.k()[j]);
            let (m11, m12, m22) = if inverse {
                let det = s11 * s22 - s12 * s12;
                (s22 / det, -s12 / det, s11 / det)
            } else {
                (s11, s12, s22)
            };
            out_f[j] = fs[j] * m11 + gs[j] * m12;
            out_g[j] = fs[j] * m12 + gs[j] * m22;
        }
        (self.grid.inverse(out_f), self.grid.inverse(out_g))
    }

    fn apply(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.apply_block(f, g, false)
    }

    fn solve(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        self.apply_block(f, g, true)
    }
}

/// `(|v|^(p+1)/(p+1), psi v^p)`: the nonlinear terms of the psi- and v-equations.
fn nonlinear_terms(u: &StatePair, p: f64) -> (Vec<f64>, Vec<f64>) {
    let (ps, vs) = (u.first.values(), u.second.values());
    let n_psi = vs.iter().map(|&v| pow_even(v, p) / (p + 1.0)).collect();
    let n_v = ps.iter().zip(vs).map(|(&s, &v)| s * pow_signed(v, p)).collect();
    (n_psi, n_v)
}

fn even_vec(grid: &Grid, x: &mut [f64]) {
    let n = grid.n();
    for j in 1..n / 2 {
        let r = n - j;
        let m = 0.5 * (x[j] + x[r]);
        x[j] = m;
        x[r] = m;
    }
}

/// Rough KdV-limit profile: `beta (z, w)` with `z = w = w0` carried to the
/// physical scale, `beta = (2/(p+2) eps^((p+4)/((p+1)(p+2))) J0)^(1/p)`.
pub fn seed_from_kdv(params: &ModelParams, omega: f64, grid: &Arc<Grid>) -> Result<StatePair> {
    let p = params.p;
    let m = params.kdv_m();
    let eps = eps_from_omega(omega, p)?;
    let j0 = j0_closed(p, m)?;
    let beta = (2.0 / (p + 2.0) * eps.powf((p + 4.0) / ((p + 1.0) * (p + 2.0))) * j0).powf(1.0 / p);
    let amp = beta * eps.powf(1.0 / ((p + 1.0) * (p + 2.0)));
    let y_scale = eps.powf(1.0 / (p + 1.0));
    let mut vals = Vec::with_capacity(grid.n());
    for &x in grid.x() {
        vals.push(amp * kdv_profile_at(p, m, y_scale * x)?);
    }
    even_vec(grid, &mut vals);
    let f = RealField::new(grid.clone(), vals)?;
    StatePair::new(f.clone(), f)
}

/// Domain length and resolution for a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    /// Cell length; `None` picks [`default_length`].
    #[serde(rename = "L", default)]
    pub length: Option<f64>,
    #[serde(rename = "N")]
    pub n: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { length: None, n: 2048 }
    }
}

impl GridPolicy {
    pub fn fixed(length: f64, n: usize) -> Self {
        Self { length: Some(length), n }
    }

    pub fn resolve(&self, params: &ModelParams, omega: f64) -> Result<Arc<Grid>> {
        let length = match self.length {
            Some(l) => l,
            None => default_length(params, omega),
        };
        make_grid(length, self.n)
    }
}

/// `max(60, 100 sqrt(m) / sqrt(1 - w^2))`: about 50 decay lengths of the
/// linear tail `exp(-sqrt((1 - w^2)/m) |x|)`.
pub fn default_length(params: &ModelParams, omega: f64) -> f64 {
    let m = params.kdv_m().max(1e-3);
    let s = ((1.0 - omega) * (1.0 + omega)).max(1e-12);
    (100.0 * m.sqrt() / s.sqrt()).max(60.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Residual ceiling a converged wave must meet.
    pub tol: f64,
    /// Residual Newton aims for; it stops earlier once rounding stalls progress.
    pub newton_tol: f64,
    pub petviashvili_tol: f64,
    pub petviashvili_max_iter: usize,
    pub newton_max_iter: usize,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            newton_tol: 1e-13,
            petviashvili_tol: 1e-9,
            petviashvili_max_iter: 2000,
            newton_max_iter: 25,
            gmres_tol: 1e-11,
            gmres_restart: 80,
            gmres_max_iter: 800,
        }
    }
}

/// Outcome of the fixed-point stage; `Diverged` carries the last iterate.
#[derive(Debug, Clone)]
pub enum PetviashviliOutcome {
    Converged { profile: StatePair, iterations: usize, factor: f64 },
    Diverged { last: StatePair, iterations: usize, reason: String },
}

/// `U <- M^alpha S^{-1}(-N(U))` with `M = <S U, U> / <-N(U), U>` and
/// `alpha = (p+1)/p`, projected onto even fields each step.
pub fn solve_petviashvili(
    params: &ModelParams,
    omega: f64,
    seed: &StatePair,
    tol: f64,
    max_iter: usize,
) -> Result<PetviashviliOutcome> {
    params.check_omega(omega)?;
    let grid = seed.grid().clone();
    let sym = Symbol { grid: &grid, params: *params, omega };
    let p = params.p;
    let alpha = (p + 1.0) / p;
    let dx = grid.dx();
    let mut u = seed.even_part();
    if u.max_abs() == 0.0 {
        return Err(Error::invalid("Petviashvili seed must be nonzero"));
    }
    let mut factor = f64::NAN;
    for it in 1..=max_iter {
        let (su_psi, su_v) = sym.apply(u.first.values(), u.second.values());
        let (n_psi, n_v) = nonlinear_terms(&u, p);
        let lin = (dot(&su_psi, u.first.values()) + dot(&su_v, u.second.values())) * dx;
        let non = -(dot(&n_psi, u.first.values()) + dot(&n_v, u.second.values())) * dx;
        factor = lin / non;
        if !(factor > 0.0 && factor.is_finite()) {
            return Ok(PetviashviliOutcome::Diverged {
                last: u,
                iterations: it,
                reason: format!("stabilizing factor {factor:.3e} is not positive"),
            });
        }
        let neg_psi: Vec<f64> = n_psi.iter().map(|v| -v).collect();
        let neg_v: Vec<f64> = n_v.iter().map(|v| -v).collect();
        let (mut w_psi, mut w_v) = sym.solve(&neg_psi, &neg_v);
        let s = factor.powf(alpha);
        w_psi.iter_mut().for_each(|x| *x *= s);
        w_v.iter_mut().for_each(|x| *x *= s);
        even_vec(&grid, &mut w_psi);
        even_vec(&grid, &mut w_v);
        let next = StatePair::new(RealField::new(grid.clone(), w_psi)?, RealField::new(grid.clone(), w_v)?)?;
        let step = norm_x(&next.sub(&u)?);
        u = next;
        if !u.is_finite() {
            return Ok(PetviashviliOutcome::Diverged { last: u, iterations: it, reason: "non-finite iterate".into() });
        }
        if step <= tol {
            let r = residual(&u, params, omega)?;
            if r.norm <= tol {
                return Ok(PetviashviliOutcome::Converged { profile: u, iterations: it, factor });
            }
        }
    }
    Ok(PetviashviliOutcome::Diverged {
        last: u,
        iterations: max_iter,
        reason: format!("no convergence in {max_iter} iterations (last factor {factor:.6})"),
    })
}

/// `J(U) d`: the Jacobian of the (psi-, v-)equations applied to `d`.
pub fn jacobian_apply(u: &StatePair, params: &ModelParams, omega: f64, d: &StatePair) -> Result<StatePair> {
    u.check_grid(d)?;
    let grid = u.grid().clone();
    let sym = Symbol { grid: &grid, params: *params, omega };
    let (lp, lv) = sym.apply(d.first.values(), d.second.values());
    let (jp, jv) = add_nonlinear_jacobian(u, params.p, d.first.values(), d.second.values(), lp, lv);
    StatePair::new(RealField::new(grid.clone(), jp)?, RealField::new(grid, jv)?)
}

fn add_nonlinear_jacobian(
    u: &StatePair,
    p: f64,
    dpsi: &[f64],
    dv: &[f64],
    mut lp: Vec<f64>,
    mut lv: Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let (ps, vs) = (u.first.values(), u.second.values());
    for j in 0..ps.len() {
        let vp = pow_signed(vs[j], p);
        lp[j] += vp * dv[j];
        lv[j] += vp * dpsi[j] + ps[j] * pow_signed_deriv(vs[j], p) * dv[j];
    }
    (lp, lv)
}

/// Record of a Newton run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub steps: usize,
    pub gmres_iterations: usize,
    /// Largest relative residual left by an inner linear solve.
    pub gmres_worst_residual: f64,
    pub initial_residual: f64,
    pub final_residual: f64,
}

/// Damped Newton on even fields with `S^{-1}`-preconditioned GMRES.
pub fn newton_refine(
    params: &ModelParams,
    omega: f64,
    guess: &StatePair,
    opts: &SolverOptions,
) -> Result<(StatePair, NewtonStats)> {
    params.check_omega(omega)?;
    let grid = guess.grid().clone();
    let n = grid.n();
    let sym = Symbol { grid: &grid, params: *params, omega };
    let p = params.p;
    let mut u = guess.even_part();
    let mut res = residual(&u, params, omega)?;
    let initial = res.norm;
    let mut stats = NewtonStats { steps: 0, gmres_iterations: 0, gmres_worst_residual: 0.0, initial_residual: initial, final_residual: initial };
    while res.norm > opts.newton_tol && stats.steps < opts.newton_max_iter {
        // psi-equation first, matching the (psi, v) unknowns
        let (mut fp, mut fv) = sym.solve(res.r2.values(), res.r1.values());
        even_vec(&grid, &mut fp);
        even_vec(&grid, &mut fv);
        let rhs: Vec<f64> = fp.iter().chain(&fv).map(|x| -x).collect();
        let frozen = u.clone();
        let apply = |x: &[f64]| -> Vec<f64> {
            let (dp, dv) = x.split_at(n);
            let (lp, lv) = sym.apply(dp, dv);
            let (jp, jv) = add_nonlinear_jacobian(&frozen, p, dp, dv, lp, lv);
            let (mut yp, mut yv) = sym.solve(&jp, &jv);
            even_vec(&grid, &mut yp);
            even_vec(&grid, &mut yv);
            yp.extend_from_slice(&yv);
            yp
        };
        let out = gmres(apply, &rhs, opts.gmres_tol, opts.gmres_restart, opts.gmres_max_iter);
        stats.gmres_iterations += out.iterations;
        stats.gmres_worst_residual = stats.gmres_worst_residual.max(out.rel_residual);
        let (dp, dv) = out.x.split_at(n);
        let delta = StatePair::new(RealField::new(grid.clone(), dp.to_vec())?, RealField::new(grid.clone(), dv.to_vec())?)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = u.axpy(t, &delta)?;
            let r = residual(&trial, params, omega)?;
            if r.norm < res.norm {
                accepted = Some((trial, r));
                break;
            }
            t *= 0.5;
        }
        stats.steps += 1;
        match accepted {
            Some((trial, r)) => {
                let progress = r.norm / res.norm;
                u = trial;
                res = r;
                // rounding floor reached
                if progress > 0.5 && res.norm <= opts.tol {
                    break;
                }
            }
            None => break,
        }
    }
    stats.final_residual = res.norm;
    if res.norm > opts.tol {
        return Err(Error::NotConverged(format!(
            "Newton stopped at residual {:.3e} after {} steps (target {:.1e})",
            res.norm, stats.steps, opts.tol
        )));
    }
    Ok((u, stats))
}

/// A residual-certified even traveling wave: a minimizer candidate for
/// `inf { I_w : G = -1 }`, not a proven global minimizer.
#[derive(Debug, Clone)]
pub struct SolitaryWave {
    pub params: ModelParams,
    pub omega: f64,
    pub eps: f64,
    /// Solution `(psi~, v~)` of the profile system.
    pub profile: StatePair,
    /// `(psi_w, v_w)` with `G = -1`.
    pub normalized: StatePair,
    /// `I_w(psi_w, v_w)`
    pub iw_min: f64,
    pub residual_norm: f64,
    pub functionals: FunctionalReport,
    pub d_value: f64,
    pub petviashvili_iterations: usize,
    pub newton: Option<NewtonStats>,
}

/// `profile / |G(profile)|^(1/(p+2))` and `I_w` of it.
pub fn normalize_to_constraint(profile: &StatePair, params: &ModelParams, omega: f64) -> Result<(StatePair, f64)> {
    let p = params.p;
    let g = g_fun(profile, p);
    if !(g < 0.0) {
        return Err(Error::invalid(format!("constraint normalization needs G < 0, got {g:.6e}")));
    }
    let normalized = profile.scale(g.abs().powf(-1.0 / (p + 2.0)));
    let i = iw(&normalized, params, omega);
    Ok((normalized, i))
}

/// `beta = (2/(p+2) I)^(1/p)` with `profile = beta normalized`.
pub fn beta_from_iw(iw_min: f64, p: f64) -> f64 {
    (2.0 / (p + 2.0) * iw_min).powf(1.0 / p)
}

impl SolitaryWave {
    /// Evaluates every derived quantity for a converged profile.
    pub fn from_profile(params: &ModelParams, omega: f64, profile: StatePair) -> Result<Self> {
        let p = params.p;
        let eps = eps_from_omega(omega, p)?;
        let res = residual(&profile, params, omega)?;
        let functionals = FunctionalReport::compute(&profile, params, omega);
        let (normalized, iw_min) = normalize_to_constraint(&profile, params, omega)?;
        let d_value = p / (2.0 * (p + 2.0)) * functionals.iw;
        Ok(Self {
            params: *params,
            omega,
            eps,
            profile,
            normalized,
            iw_min,
            residual_norm: res.norm,
            functionals,
            d_value,
            petviashvili_iterations: 0,
            newton: None,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.profile.grid()
    }

    pub fn beta(&self) -> f64 {
        beta_from_iw(self.iw_min, self.params.p)
    }

    /// Relative defects of `J = p/(p+2) I`, `J = -p/2 G`, `I = -(p+2)/2 G`, `K = 0`.
    pub fn identity_defects(&self) -> [f64; 4] {
        let f = &self.functionals;
        let p = self.params.p;
        let s = f.iw.abs().max(f.g.abs());
        [
            (f.jw - p / (p + 2.0) * f.iw).abs() / s,
            (f.jw + 0.5 * p * f.g).abs() / s,
            (f.iw + 0.5 * (p + 2.0) * f.g).abs() / s,
            f.kw.abs() / s,
        ]
    }

    /// `max |U(x) - U(-x)|`.
    pub fn evenness_defect(&self) -> f64 {
        let g = self.grid();
        let (a, b) = (self.profile.first.values(), self.profile.second.values());
        (0..g.n())
            .map(|j| {
                let r = g.reflect_index(j);
                (a[j] - a[r]).abs().max((b[j] - b[r]).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Petviashvili from `seed`, then Newton (refinement or fallback).
pub fn solve_from_seed(params: &ModelParams, omega: f64, seed: &StatePair, opts: &SolverOptions) -> Result<SolitaryWave> {
    params.validate(RegimeLevel::Existence)?.into_result()?;
    params.check_omega(omega)?;
    let outcome = solve_petviashvili(params, omega, seed, opts.petviashvili_tol, opts.petviashvili_max_iter)?;
    let (start, iters, note) = match outcome {
        PetviashviliOutcome::Converged { profile, iterations, .. } => (profile, iterations, None),
        PetviashviliOutcome::Diverged { last, iterations, reason } => {
            // a non-positive factor means the iterate left the basin; restart Newton from the seed
            let start = if last.is_finite() && residual(&last, params, omega)?.norm < residual(seed, params, omega)?.norm {
                last
            } else {
                seed.clone()
            };
            (start, iterations, Some(reason))
        }
    };
    let (profile, stats) = newton_refine(params, omega, &start, opts).map_err(|e| match (e, &note) {
        (Error::NotConverged(m), Some(n)) => Error::NotConverged(format!("Petviashvili: {n}; {m}")),
        (e, _) => e,
    })?;
    let mut wave = SolitaryWave::from_profile(params, omega, profile)?;
    if !(wave.functionals.g < 0.0) {
        return Err(Error::NotConverged("converged to a state with G >= 0".into()));
    }
    wave.petviashvili_iterations = iters;
    wave.newton = Some(stats);
    Ok(wave)
}

/// One wave from the KdV seed on the grid chosen by `policy`.
pub fn solve_wave(params: &ModelParams, omega: f64, policy: &GridPolicy, opts: &SolverOptions) -> Result<SolitaryWave> {
    params.check_omega(omega)?;
    let grid = policy.resolve(params, omega)?;
    let seed = seed_from_kdv(params, omega, &grid)?;
    solve_from_seed(params, omega, &seed, opts)
}

/// Carries a profile from speed `from` to speed `to` by the long-wave law
/// `U(x) ~ eps^(2/(p(p+1))) F(eps^(1/(p+1)) x)`.
pub fn rescale_profile(u: &StatePair, p: f64, from: f64, to: f64, target: &Arc<Grid>) -> Result<StatePair> {
    let r = eps_from_omega(to, p)? / eps_from_omega(from, p)?;
    let amp = r.powf(2.0 / (p * (p + 1.0)));
    let xs: Vec<f64> = target.x().iter().map(|x| x * r.powf(1.0 / (p + 1.0))).collect();
    let mut f = u.first.eval_at(&xs);
    let mut g = u.second.eval_at(&xs);
    f.iter_mut().chain(g.iter_mut()).for_each(|v| *v *= amp);
    even_vec(target, &mut f);
    even_vec(target, &mut g);
    StatePair::new(RealField::new(target.clone(), f)?, RealField::new(target.clone(), g)?)
}

/// Continuation from the largest speed downward on one shared grid (sized
/// for the largest speed); failed steps are halved down to `1e-3`.
pub fn continuation_branch(params: &ModelParams, omegas: &[f64], policy: &GridPolicy, opts: &SolverOptions) -> Result<Branch> {
    if omegas.is_empty() {
        return Err(Error::invalid("empty speed list"));
    }
    if omegas.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::invalid("speeds must be strictly decreasing"));
    }
    for &w in omegas {
        params.check_omega(w)?;
    }
    let grid = policy.resolve(params, omegas[0])?;
    let p = params.p;
    let mut points = Vec::with_capacity(omegas.len());
    let seed = seed_from_kdv(params, omegas[0], &grid)?;
    let first = match solve_from_seed(params, omegas[0], &seed, opts) {
        Ok(w) => w,
        Err(e) => {
            return Ok(Branch::partial(points, BranchFailure { omega: omegas[0], message: e.to_string() }));
        }
    };
    points.push(first);
    for &target in &omegas[1..] {
        let mut current = points.last().expect("nonempty").clone();
        let mut goal = target;
        loop {
            let seed = rescale_profile(&current.profile, p, current.omega, goal, &grid)?;
            match solve_from_seed(params, goal, &seed, opts) {
                Ok(w) if goal == target => {
                    points.push(w);
                    break;
                }
                Ok(w) => {
                    current = w;
                    goal = target;
                }
                Err(e) => {
                    let mid = 0.5 * (current.omega + goal);
                    if (current.omega - mid).abs() < 1e-3 {
                        return Ok(Branch::partial(points, BranchFailure { omega: target, message: e.to_string() }));
                    }
                    goal = mid;
                }
            }
        }
    }
    Ok(Branch::new(points))
}

/// Low-resolution cross-check of the minimization problem: preconditioned
/// projected gradient descent on `I_w` over `G = -1`. Returns the minimizer
/// and its `I_w`.
pub fn minimize_constrained(
    params: &ModelParams,
    omega: f64,
    start: &StatePair,
    step: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(StatePair, f64)> {
    params.check_omega(omega)?;
    let grid = start.grid().clone();
    let sym = Symbol { grid: &grid, params: *params, omega };
    let p = params.p;
    let dx = grid.dx();
    let (mut u, mut value) = normalize_to_constraint(&start.even_part(), params, omega)?;
    for _ in 0..max_iter {
        // gradients of I/2 and of G/2 in the L^2 pairing
        let (gi_p, gi_v) = sym.apply(u.first.values(), u.second.values());
        let (gg_p, gg_v) = nonlinear_terms(&u, p);
        // descent direction S^{-1} grad(I) minus its component along S^{-1} grad(G)
        let (pi_p, pi_v) = sym.solve(&gi_p, &gi_v);
        let (pg_p, pg_v) = sym.solve(&gg_p, &gg_v);
        let num = dot(&pi_p, &gg_p) + dot(&pi_v, &gg_v);
        let den = dot(&pg_p, &gg_p) + dot(&pg_v, &gg_v);
        let lam = num / den;
        let dir_p: Vec<f64> = pi_p.iter().zip(&pg_p).map(|(a, b)| a - lam * b).collect();
        let dir_v: Vec<f64> = pi_v.iter().zip(&pg_v).map(|(a, b)| a - lam * b).collect();
        let size = (dot(&dir_p, &dir_p) + dot(&dir_v, &dir_v)).sqrt() * dx.sqrt();
        let trial = StatePair::new(
            RealField::new(grid.clone(), u.first.values().iter().zip(&dir_p).map(|(a, d)| a - step * d).collect())?,
            RealField::new(grid.clone(), u.second.values().iter().zip(&dir_v).map(|(a, d)| a - step * d).collect())?,
        )?;
        let (next, next_value) = normalize_to_constraint(&trial, params, omega)?;
        u = next;
        let change = (value - next_value).abs();
        value = next_value;
        if size <= tol && change <= tol * value.abs() {
            break;
        }
    }
    Ok((u, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::{localized_state, smooth_state};
    use approx::assert_relative_eq;

    fn reference() -> ModelParams {
        ModelParams::reference(1.0)
    }

    #[test]
    fn symbol_values() {
        let params = reference();
        assert_relative_eq!(symbol_det(0.0, &params, 0.9), -0.19, max_relative = 1e-14);
        let lead = 0.81 / 144.0 - 1.0 / 36.0;
        assert_relative_eq!(lead, -0.022152777777777778, max_relative = 1e-12);
        let k = 1e4;
        assert_relative_eq!(symbol_det(k, &params, 0.9) / k.powi(4), lead, max_relative = 1e-6);
        let grid = make_grid(200.0, 4096).unwrap();
        for i in 1..=99 {
            let w = 0.01 * i as f64;
            let worst = grid.k().iter().map(|&k| symbol_det(k, &params, w)).fold(f64::NEG_INFINITY, f64::max);
            assert!(worst < 0.0, "omega {w}: {worst}");
        }
    }

    #[test]
    fn zero_residual() {
        let grid = make_grid(20.0, 64).unwrap();
        let r = residual(&StatePair::zeros(grid), &reference(), 0.9).unwrap();
        assert_eq!(r.norm, 0.0);
    }

    #[test]
    fn linear_residual_is_symbol_action() {
        let params = reference();
        let grid = make_grid(30.0, 128).unwrap();
        let u = smooth_state(&grid, 11, 10, 1.0);
        let r = residual_with(&u, &params, 0.8, false).unwrap();
        let (fp, fv) = (grid.forward(u.first.values()), grid.forward(u.second.values()));
        let (r1, r2) = (grid.forward(r.r1.values()), grid.forward(r.r2.values()));
        for j in 0..grid.n() {
            let k2 = grid.k()[j].powi(2);
            let l11 = -0.8 * (1.0 + params.b * k2);
            let l12 = 1.0 - params.a * k2;
            let l21 = 1.0 - params.c * k2;
            let e1 = fp[j] * l11 + fv[j] * l12;
            let e2 = fp[j] * l21 + fv[j] * l11;
            let scale = grid.n() as f64 * (1.0 + k2);
            assert!((r1[j] - e1).norm() <= 1e-12 * scale);
            assert!((r2[j] - e2).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let params = ModelParams::reference(2.0);
        let grid = make_grid(40.0, 256).unwrap();
        let u = localized_state(&grid, 1, 3.0, 0.5);
        let d = localized_state(&grid, 2, 3.0, 1.0);
        let h = 1e-6;
        let jd = jacobian_apply(&u, &params, 0.9, &d).unwrap();
        let rp = residual(&u.axpy(h, &d).unwrap(), &params, 0.9).unwrap();
        let r0 = residual(&u, &params, 0.9).unwrap();
        let fd_psi = rp.r2.axpy(-1.0, &r0.r2).unwrap().scale(1.0 / h);
        let fd_v = rp.r1.axpy(-1.0, &r0.r1).unwrap().scale(1.0 / h);
        let err = fd_psi.axpy(-1.0, &jd.first).unwrap().max_abs().max(fd_v.axpy(-1.0, &jd.second).unwrap().max_abs());
        assert!(err < 1e-4 * jd.max_abs(), "{err}");
    }

    #[test]
    fn seed_properties() {
        let params = reference();
        let grid = GridPolicy::default().resolve(&params, 0.99).unwrap();
        let seed = seed_from_kdv(&params, 0.99, &grid).unwrap();
        let n = grid.n();
        for j in 1..n {
            assert_eq!(seed.first.values()[j], seed.first.values()[n - j]);
        }
        let r_seed = residual(&seed, &params, 0.99).unwrap().norm;
        let random = localized_state(&grid, 5, 10.0, 1.0);
        let random = random.scale(norm_x(&seed) / norm_x(&random));
        let r_rand = residual(&random, &params, 0.99).unwrap().norm;
        assert!(r_seed.is_finite() && r_seed < 0.05 * r_rand, "{r_seed} vs {r_rand}");

        let grid2 = GridPolicy::default().resolve(&params, 0.999).unwrap();
        let seed2 = seed_from_kdv(&params, 0.999, &grid2).unwrap();
        let e1 = eps_from_omega(0.999, 1.0).unwrap();
        let e2 = eps_from_omega(0.99, 1.0).unwrap();
        let ratio = seed2.max_abs() / seed.max_abs();
        assert_relative_eq!(ratio, (e1 / e2).powf(1.0), max_relative = 1e-2);
    }
}
