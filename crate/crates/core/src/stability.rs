//! Orbital stability experiments: the translation-minimized distance to a
//! wave orbit, seeded perturbations, the Shatah-type lower bound, and
//! perturb-evolve-measure runs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcurve::{dsecond_fd, omega_of_state, Branch};
use crate::error::{Error, Result};
use crate::evolution::{conservation_check, evolve_monitored, small_data_bound, ConservationCheck, EvolutionConfig, RunStatus};
use crate::functionals::{charge, hamiltonian};
use crate::spectral::{norm_x, RealField, StatePair};
use crate::wave::SolitaryWave;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitDistance {
    pub dist: f64,
    /// Minimizing shift in `(-L/2, L/2]`: `U ~ W(. + y_star)`.
    pub y_star: f64,
}

/// `inf_y ||U - W(. + y)||_X`. The cross-correlation is evaluated at every
/// grid shift with one transform, the best shift refined by a parabola and
/// Newton steps on the exact trigonometric sum, and the distance then
/// evaluated directly at the refined shift.
pub fn orbit_distance(u: &StatePair, w: &StatePair) -> Result<OrbitDistance> {
    u.check_grid(w)?;
    let grid = u.grid();
    let n = grid.n();
    let ny = grid.nyquist();
    let uh = [grid.forward(u.first.values()), grid.forward(u.second.values())];
    let wh = [grid.forward(w.first.values()), grid.forward(w.second.values())];
    let weight = |j: usize| if j == ny { 1.0 } else { 1.0 + grid.k()[j].powi(2) };
    // C(y) = Re sum_k c_k e^{-i k y}
    let c: Vec<Complex64> = (0..n).map(|j| weight(j) * (uh[0][j] * wh[0][j].conj() + uh[1][j] * wh[1][j].conj())).collect();
    let corr = grid.forward_complex(c.clone());
    let best = (0..n).max_by(|&a, &b| corr[a].re.total_cmp(&corr[b].re)).expect("nonempty grid");
    let dx = grid.dx();
    let (cm, c0, cp) = (corr[(best + n - 1) % n].re, corr[best].re, corr[(best + 1) % n].re);
    let den = cm - 2.0 * c0 + cp;
    let mut y = best as f64 * dx + if den < 0.0 { 0.5 * dx * (cm - cp) / den } else { 0.0 };
    let trig = |y: f64| -> (f64, f64) {
        let (mut d1, mut d2) = (0.0, 0.0);
        for (j, cj) in c.iter().enumerate() {
            let k = grid.k()[j];
            let e = cj * Complex64::from_polar(1.0, -k * y);
            // d/dy and d^2/dy^2 of Re(c_k e^{-iky})
            d1 += (e * Complex64::new(0.0, -k)).re;
            d2 -= k * k * e.re;
        }
        (d1, d2)
    };
    for _ in 0..8 {
        let (d1, d2) = trig(y);
        if !(d2 < 0.0) {
            break;
        }
        let step = -d1 / d2;
        y += step.clamp(-dx, dx);
        if step.abs() < 1e-15 * grid.length() {
            break;
        }
    }
    let l = grid.length();
    y = y.rem_euclid(l);
    if y > 0.5 * l {
        y -= l;
    }
    let dist = shifted_distance(&uh, &wh, grid, y);
    Ok(OrbitDistance { dist, y_star: y })
}

fn shifted_distance(uh: &[Vec<Complex64>; 2], wh: &[Vec<Complex64>; 2], grid: &crate::spectral::Grid, y: f64) -> f64 {
    let ny = grid.nyquist();
    let mut sum = 0.0;
    for j in 0..grid.n() {
        let k = grid.k()[j];
        let (weight, phase) =
            if j == ny { (1.0, Complex64::new((k * y).cos(), 0.0)) } else { (1.0 + k * k, Complex64::from_polar(1.0, k * y)) };
        for c in 0..2 {
            sum += weight * (uh[c][j] - wh[c][j] * phase).norm_sqr();
        }
    }
    (sum * grid.dx() / grid.n() as f64).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbKind {
    Scale,
    Bump,
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Relative perturbations: `scale` multiplies by `1 + amplitude`; `bump`
/// and `mode` add a Gaussian bump or a single low Fourier mode of X-norm
/// `amplitude ||profile||_X` with seeded position, phase and component mix.
/// No symmetry is imposed.
pub fn perturb(wave: &SolitaryWave, spec: &PerturbationSpec) -> Result<StatePair> {
    let a = spec.amplitude;
    if !(0.0..=0.2).contains(&a) {
        return Err(Error::invalid(format!("perturbation amplitude must lie in [0, 0.2], got {a}")));
    }
    let profile = &wave.profile;
    if a == 0.0 {
        return Ok(profile.clone());
    }
    let grid = profile.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shape: Box<dyn Fn(f64) -> f64> = match spec.kind {
        PerturbKind::Scale => return Ok(profile.scale(1.0 + a)),
        PerturbKind::Bump => {
            let width = rms_width(&profile.second).max(4.0 * grid.dx());
            let centre = rng.gen_range(-width..width);
            Box::new(move |x| (-((x - centre) / width).powi(2)).exp())
        }
        PerturbKind::Mode => {
            let m = rng.gen_range(1..=4) as f64;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let q = std::f64::consts::TAU * m / grid.length();
            Box::new(move |x| (q * x + phase).cos())
        }
    };
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let f = RealField::from_fn(grid.clone(), |x| theta.cos() * shape(x));
    let g = RealField::from_fn(grid.clone(), |x| theta.sin() * shape(x));
    let bump = StatePair::new(f, g)?;
    let target = a * norm_x(profile);
    let bump = bump.scale(target / norm_x(&bump));
    profile.axpy(1.0, &bump)
}

fn rms_width(f: &RealField) -> f64 {
    let x = f.grid().x();
    let (mut m0, mut m2) = (0.0, 0.0);
    for (xi, v) in x.iter().zip(f.values()) {
        m0 += v * v;
        m2 += xi * xi * v * v;
    }
    if m0 > 0.0 {
        (m2 / m0).sqrt()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShatahCheck {
    pub omega_u: f64,
    pub dsecond: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// `H(U) - H(W) + w(U) (Q(U) - Q(W)) >= d''(w) |w(U) - w|^2 / 4`, with
/// `d''` the finite-difference value at the branch point of `wave`.
pub fn shatah_inequality(u: &StatePair, wave: &SolitaryWave, branch: &Branch) -> Result<ShatahCheck> {
    let i = branch
        .points
        .iter()
        .position(|q| (q.omega - wave.omega).abs() <= 1e-12)
        .ok_or_else(|| Error::invalid(format!("omega = {} is not a branch point", wave.omega)))?;
    let dsecond = dsecond_fd(branch, i)?;
    shatah_with(u, wave, branch, dsecond)
}

pub fn shatah_with(u: &StatePair, wave: &SolitaryWave, branch: &Branch, dsecond: f64) -> Result<ShatahCheck> {
    let params = &wave.params;
    let omega_u = omega_of_state(u, branch)?;
    let lhs = hamiltonian(u, params) - wave.functionals.h + omega_u * (charge(u, params) - wave.functionals.q);
    let rhs = 0.25 * dsecond * (omega_u - wave.omega).powi(2);
    Ok(ShatahCheck { omega_u, dsecond, lhs, rhs, satisfied: lhs >= rhs - 1e-10 })
}

/// The inequality on `count` seeded bump/mode perturbations with
/// amplitudes uniform in `[lo, hi]`, in parallel.
pub fn shatah_sweep(wave: &SolitaryWave, branch: &Branch, count: usize, lo: f64, hi: f64, seed: u64) -> Result<Vec<(PerturbationSpec, ShatahCheck)>> {
    let i = branch
        .points
        .iter()
        .position(|q| (q.omega - wave.omega).abs() <= 1e-12)
        .ok_or_else(|| Error::invalid(format!("omega = {} is not a branch point", wave.omega)))?;
    let dsecond = dsecond_fd(branch, i)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<PerturbationSpec> = (0..count)
        .map(|j| PerturbationSpec {
            kind: match j % 3 {
                0 => PerturbKind::Bump,
                1 => PerturbKind::Mode,
                _ => PerturbKind::Scale,
            },
            amplitude: rng.gen_range(lo..=hi),
            seed: rng.gen(),
        })
        .collect();
    specs
        .into_par_iter()
        .map(|s| {
            let u = perturb(wave, &s)?;
            Ok((s, shatah_with(&u, wave, branch, dsecond)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityExperiment {
    pub perturbation: PerturbationSpec,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(default = "default_threshold")]
    pub threshold_factor: f64,
    #[serde(default = "default_drift")]
    pub drift_tol: f64,
    /// Distances below this count as zero when forming the growth ratio.
    #[serde(default = "default_floor")]
    pub distance_floor: f64,
}

fn default_threshold() -> f64 {
    10.0
}
fn default_drift() -> f64 {
    1e-8
}
fn default_floor() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StableRun,
    ThresholdExceeded,
    ConservationFailed,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub experiment: StabilityExperiment,
    pub omega: f64,
    pub initial_distance: f64,
    pub sup_distance: f64,
    /// `sup_t dist(t) / max(dist(0), distance_floor)`
    pub ratio: f64,
    pub conservation: ConservationCheck,
    pub small_data_initial: bool,
    pub small_data_all_samples: bool,
    pub status: RunStatus,
    pub verdict: Verdict,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
}

pub fn stability_experiment(wave: &SolitaryWave, cfg: &StabilityExperiment, evolution: &EvolutionConfig) -> Result<StabilityReport> {
    if !(cfg.perturbation.amplitude >= 0.0) || !(cfg.threshold_factor > 0.0) {
        return Err(Error::invalid("amplitude must be >= 0 and threshold_factor > 0"));
    }
    let u0 = perturb(wave, &cfg.perturbation)?;
    let initial = orbit_distance(&u0, &wave.profile)?.dist;
    let profile = wave.profile.clone();
    let monitor = move |s: &StatePair| orbit_distance(s, &profile).map(|d| d.dist).unwrap_or(f64::NAN);
    let evo = EvolutionConfig { t_final: cfg.t_final, ..*evolution };
    let run = evolve_monitored(&u0, &wave.params, &evo, Some(&monitor))?;
    let distances = run.trace.orbit_distance.clone().unwrap_or_default();
    let sup = distances.iter().cloned().fold(0.0, f64::max);
    let ratio = sup / initial.max(cfg.distance_floor);
    let conservation = conservation_check(&run.trace, cfg.drift_tol)?;
    let verdict = match run.status {
        RunStatus::Completed if distances.iter().any(|d| !d.is_finite()) => Verdict::Diverged,
        RunStatus::Completed if !conservation.passed => Verdict::ConservationFailed,
        RunStatus::Completed if ratio <= cfg.threshold_factor => Verdict::StableRun,
        RunStatus::Completed => Verdict::ThresholdExceeded,
        _ => Verdict::Diverged,
    };
    Ok(StabilityReport {
        experiment: *cfg,
        omega: wave.omega,
        initial_distance: initial,
        sup_distance: sup,
        ratio,
        conservation,
        small_data_initial: small_data_bound(&u0, &wave.params).satisfied,
        small_data_all_samples: run.trace.small_data_satisfied.iter().all(|&b| b),
        status: run.status,
        verdict,
        times: run.trace.times.clone(),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::localized_state;
    use crate::spectral::{make_grid, shift};
    use proptest::prelude::*;

    fn field_pair(seed: u64) -> StatePair {
        let grid = make_grid(40.0, 256).unwrap();
        localized_state(&grid, seed, 3.0, 1.0)
    }

    #[test]
    fn recovers_shift() {
        let w = field_pair(1);
        let u = w.shift(3.7);
        let d = orbit_distance(&u, &w).unwrap();
        assert!(d.dist <= 1e-10, "{d:?}");
        assert!((d.y_star - 3.7).abs() < 1e-9, "{d:?}");
        let d0 = orbit_distance(&w, &w).unwrap();
        assert!(d0.dist <= 1e-12 && d0.y_star.abs() < 1e-12, "{d0:?}");
    }

    #[test]
    fn infimum_below_plain_distance() {
        let w = field_pair(2);
        let bump = field_pair(3);
        let bump = bump.scale(0.01 / norm_x(&bump));
        let u = w.axpy(1.0, &bump).unwrap();
        let d = orbit_distance(&u, &w).unwrap();
        assert!(d.dist > 0.0 && d.dist <= 0.01 * (1.0 + 1e-12));
        let _ = shift(&u.first, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn translation_invariance(seed in 0u64..1000, y in -20.0f64..20.0) {
            let w = field_pair(seed);
            let d = orbit_distance(&w.shift(y), &w).unwrap();
            prop_assert!(d.dist <= 1e-10 * norm_x(&w).max(1.0));
        }

        #[test]
        fn symmetric_under_common_shift(seed in 0u64..1000, y in -20.0f64..20.0) {
            let w = field_pair(seed);
            let u = field_pair(seed + 7).scale(0.1).axpy(1.0, &w).unwrap();
            let a = orbit_distance(&u, &w).unwrap().dist;
            let b = orbit_distance(&u.shift(y), &w.shift(y)).unwrap().dist;
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
            prop_assert!(a <= norm_x(&u.sub(&w).unwrap()) * (1.0 + 1e-12));
        }
    }
}
