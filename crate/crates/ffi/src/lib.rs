//! C ABI for `wavelab`.
//!
//! Every fallible entry point returns a [`WlStatus`] and writes results
//! through out-pointers. On failure the message is kept per thread and can
//! be fetched with [`wl_last_error_message`]. Handles are opaque and must be
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use wavelab::evolution::{conservation_check, evolve_monitored, EvolutionConfig, RunStatus};
use wavelab::io::{read_state, write_wave};
use wavelab::kdv;
use wavelab::model::RegimeLevel;
use wavelab::stability::{orbit_distance, stability_experiment, PerturbKind, PerturbationSpec, StabilityExperiment};
use wavelab::wave::solve_wave;
use wavelab::{make_grid, Error, GridPolicy, ModelParams, RealField, SolitaryWave, SolverOptions, StatePair};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WlStatus {
    Ok = 0,
    /// Null pointer, bad size or out-of-range argument.
    InvalidArgument = 1,
    /// Parameters or speed outside the admissible regime.
    Validation = 2,
    NotConverged = 3,
    Blowup = 4,
    Io = 5,
    Parse = 6,
    GridMismatch = 7,
    /// The caller's buffer is too small.
    BufferTooSmall = 8,
    /// An internal panic was caught at the boundary.
    Internal = 9,
}

/// Model coefficients `(a, b, c, p)`.
pub struct WlParams {
    inner: ModelParams,
}

/// A converged solitary wave with its derived quantities.
pub struct WlWave {
    inner: SolitaryWave,
}

/// Functional values of a wave profile.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WlFunctionals {
    pub h: f64,
    pub q: f64,
    pub i1: f64,
    pub i2w: f64,
    pub iw: f64,
    pub g: f64,
    pub jw: f64,
    pub kw: f64,
    pub d: f64,
    pub iw_min: f64,
}

/// Summary of an evolution or stability run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WlRunSummary {
    pub steps: usize,
    pub dt: f64,
    pub drift_h: f64,
    pub drift_q: f64,
    pub initial_distance: f64,
    pub sup_distance: f64,
    pub final_distance: f64,
    /// `sup_distance / max(initial_distance, 1e-6)`
    pub ratio: f64,
    /// 1 when the run reached the final time without blow-up.
    pub completed: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> WlStatus {
    match e {
        Error::Invalid(_) => WlStatus::InvalidArgument,
        Error::Validation(_) => WlStatus::Validation,
        Error::GridMismatch(_) => WlStatus::GridMismatch,
        Error::NotConverged(_) => WlStatus::NotConverged,
        Error::Blowup(_) => WlStatus::Blowup,
        Error::Parse(_) | Error::Json(_) => WlStatus::Parse,
        Error::Io(_) => WlStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), Error>) -> WlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            WlStatus::Ok
        }
        Ok(Err(e)) => {
            let s = status_of(&e);
            set_error(e.to_string());
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            WlStatus::Internal
        }
    }
}

fn null_arg(name: &str) -> Error {
    Error::invalid(format!("{name} is null"))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Error> {
    p.as_mut().ok_or_else(|| null_arg(name))
}

unsafe fn input<'a, T>(p: *const T, name: &str) -> Result<&'a T, Error> {
    p.as_ref().ok_or_else(|| null_arg(name))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Error> {
    if p.is_null() {
        return Err(null_arg("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Error::invalid("path is not UTF-8"))?;
    Ok(Path::new(s))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
/// `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn wl_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Critical exponent bisected to `tol` (at least `1e-12`).
///
/// # Safety
/// `out_p0` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_critical_p0(tol: f64, out_p0: *mut f64) -> WlStatus {
    guard(|| {
        *out(out_p0, "out_p0")? = kdv::critical_p0(tol)?;
        Ok(())
    })
}

/// Closed-form `int (w0^2 + m w0'^2)` of the KdV soliton.
///
/// # Safety
/// `out_j0` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_j0_closed(p: f64, m: f64, out_j0: *mut f64) -> WlStatus {
    guard(|| {
        *out(out_j0, "out_j0")? = kdv::j0_closed(p, m)?;
        Ok(())
    })
}

/// # Safety
/// `out_params` must be a valid pointer; the handle it receives is owned
/// by the caller.
#[no_mangle]
pub unsafe extern "C" fn wl_params_new(a: f64, b: f64, c: f64, p: f64, out_params: *mut *mut WlParams) -> WlStatus {
    guard(|| {
        let slot = out(out_params, "out_params")?;
        if ![a, b, c, p].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        *slot = Box::into_raw(Box::new(WlParams { inner: ModelParams::new(a, b, c, p) }));
        Ok(())
    })
}

/// `a = c = -1/6`, `b = 1/12`.
///
/// # Safety
/// As [`wl_params_new`].
#[no_mangle]
pub unsafe extern "C" fn wl_params_reference(p: f64, out_params: *mut *mut WlParams) -> WlStatus {
    let r = ModelParams::reference(p);
    wl_params_new(r.a, r.b, r.c, r.p, out_params)
}

/// # Safety
/// `params` must be null or a handle from `wl_params_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_params_free(params: *mut WlParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Checks the existence regime (`level = 0`) or the stability regime
/// (`level = 1`); failures return `Validation` with the failed conditions.
///
/// # Safety
/// `params` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wl_params_validate(params: *const WlParams, level: i32) -> WlStatus {
    guard(|| {
        let p = input(params, "params")?;
        let level = match level {
            0 => RegimeLevel::Existence,
            1 => RegimeLevel::Stability,
            l => return Err(Error::invalid(format!("unknown regime level {l}"))),
        };
        p.inner.validate(level)?.into_result()?;
        Ok(())
    })
}

/// Solves for the wave of speed `omega` on `n` points. `length <= 0` picks
/// the default domain; `tol <= 0` keeps the default residual ceiling.
///
/// # Safety
/// `params` must be a valid handle and `out_wave` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_solve(
    params: *const WlParams,
    omega: f64,
    length: f64,
    n: usize,
    tol: f64,
    out_wave: *mut *mut WlWave,
) -> WlStatus {
    guard(|| {
        let p = input(params, "params")?;
        let slot = out(out_wave, "out_wave")?;
        let policy = GridPolicy { length: (length > 0.0).then_some(length), n };
        let mut opts = SolverOptions::default();
        if tol > 0.0 {
            opts.tol = tol;
        }
        let w = solve_wave(&p.inner, omega, &policy, &opts)?;
        *slot = Box::into_raw(Box::new(WlWave { inner: w }));
        Ok(())
    })
}

/// Loads a wave snapshot written by [`wl_wave_write`] or the CLI.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_wave` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_read(path: *const c_char, out_wave: *mut *mut WlWave) -> WlStatus {
    guard(|| {
        let path = path_arg(path)?;
        let slot = out(out_wave, "out_wave")?;
        let w = read_state(path)?.into_wave()?;
        *slot = Box::into_raw(Box::new(WlWave { inner: w }));
        Ok(())
    })
}

/// Writes the `x,eta,u` CSV and its metadata sidecar.
///
/// # Safety
/// `wave` must be a valid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_write(wave: *const WlWave, path: *const c_char) -> WlStatus {
    guard(|| {
        let w = input(wave, "wave")?;
        write_wave(path_arg(path)?, &w.inner)
    })
}

/// # Safety
/// `wave` must be null or a handle from a `wl_wave_*` constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_free(wave: *mut WlWave) {
    if !wave.is_null() {
        drop(Box::from_raw(wave));
    }
}

/// Speed of the wave, or NaN for a null handle.
///
/// # Safety
/// `wave` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_omega(wave: *const WlWave) -> f64 {
    wave.as_ref().map_or(f64::NAN, |w| w.inner.omega)
}

/// Max-norm residual of the profile equations, or NaN for a null handle.
///
/// # Safety
/// `wave` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_residual(wave: *const WlWave) -> f64 {
    wave.as_ref().map_or(f64::NAN, |w| w.inner.residual_norm)
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `wave` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_grid_size(wave: *const WlWave) -> usize {
    wave.as_ref().map_or(0, |w| w.inner.grid().n())
}

/// Periodic cell length, or NaN for a null handle.
///
/// # Safety
/// `wave` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_domain_length(wave: *const WlWave) -> f64 {
    wave.as_ref().map_or(f64::NAN, |w| w.inner.grid().length())
}

/// # Safety
/// `wave` must be a valid handle and `out_f` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_functionals(wave: *const WlWave, out_f: *mut WlFunctionals) -> WlStatus {
    guard(|| {
        let w = &input(wave, "wave")?.inner;
        let f = &w.functionals;
        *out(out_f, "out_f")? = WlFunctionals {
            h: f.h,
            q: f.q,
            i1: f.i1,
            i2w: f.i2w,
            iw: f.iw,
            g: f.g,
            jw: f.jw,
            kw: f.kw,
            d: w.d_value,
            iw_min: w.iw_min,
        };
        Ok(())
    })
}

/// Copies grid points and the profile `(eta, u)` into caller buffers of
/// length `len`; any of `x`, `eta`, `u` may be null to skip it. Returns
/// `BufferTooSmall` when `len` is below the grid size.
///
/// # Safety
/// Non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_copy_profile(wave: *const WlWave, x: *mut f64, eta: *mut f64, u: *mut f64, len: usize) -> WlStatus {
    let w = match wave.as_ref() {
        Some(w) => &w.inner,
        None => return guard(|| Err(null_arg("wave"))),
    };
    let n = w.grid().n();
    if len < n {
        set_error(format!("buffer holds {len} values, the grid has {n}"));
        return WlStatus::BufferTooSmall;
    }
    guard(|| {
        for (dst, src) in [(x, w.grid().x()), (eta, w.profile.first.values()), (u, w.profile.second.values())] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
            }
        }
        Ok(())
    })
}

/// Evolves the exact wave to `t_final` with the largest CFL step times
/// `cfl_safety` and reports conservation and orbit distance to the profile.
///
/// # Safety
/// `wave` must be a valid handle and `out_s` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_wave_evolve(wave: *const WlWave, t_final: f64, cfl_safety: f64, out_s: *mut WlRunSummary) -> WlStatus {
    guard(|| {
        let w = &input(wave, "wave")?.inner;
        let slot = out(out_s, "out_s")?;
        let cfg = EvolutionConfig::auto(&w.params, w.grid(), t_final, cfl_safety, 10);
        let profile = w.profile.clone();
        let monitor = move |s: &StatePair| orbit_distance(s, &profile).map_or(f64::NAN, |d| d.dist);
        let run = evolve_monitored(&w.profile, &w.params, &cfg, Some(&monitor))?;
        let c = conservation_check(&run.trace, 1e-8)?;
        let d = run.trace.orbit_distance.clone().unwrap_or_default();
        let sup = d.iter().cloned().fold(0.0, f64::max);
        let initial = d.first().copied().unwrap_or(0.0);
        *slot = WlRunSummary {
            steps: run.steps,
            dt: cfg.dt,
            drift_h: c.drift_h,
            drift_q: c.drift_q,
            initial_distance: initial,
            sup_distance: sup,
            final_distance: d.last().copied().unwrap_or(f64::NAN),
            ratio: sup / initial.max(1e-6),
            completed: (run.status == RunStatus::Completed) as i32,
        };
        Ok(())
    })
}

/// Perturbs the wave (`kind` 0 scale, 1 bump, 2 mode; relative `amplitude`
/// in `[0, 0.2]`), evolves to `t_final` and reports the orbit distance.
///
/// # Safety
/// `wave` must be a valid handle and `out_s` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wl_stability_run(
    wave: *const WlWave,
    kind: i32,
    amplitude: f64,
    seed: u64,
    t_final: f64,
    out_s: *mut WlRunSummary,
) -> WlStatus {
    guard(|| {
        let w = &input(wave, "wave")?.inner;
        let slot = out(out_s, "out_s")?;
        let kind = match kind {
            0 => PerturbKind::Scale,
            1 => PerturbKind::Bump,
            2 => PerturbKind::Mode,
            k => return Err(Error::invalid(format!("unknown perturbation kind {k}"))),
        };
        let exp = StabilityExperiment {
            perturbation: PerturbationSpec { kind, amplitude, seed },
            t_final,
            threshold_factor: 10.0,
            drift_tol: 1e-8,
            distance_floor: 1e-6,
        };
        let cfg = EvolutionConfig::auto(&w.params, w.grid(), t_final, 0.5, 10);
        let r = stability_experiment(w, &exp, &cfg)?;
        *slot = WlRunSummary {
            steps: r.times.len(),
            dt: cfg.dt,
            drift_h: r.conservation.drift_h,
            drift_q: r.conservation.drift_q,
            initial_distance: r.initial_distance,
            sup_distance: r.sup_distance,
            final_distance: r.distances.last().copied().unwrap_or(f64::NAN),
            ratio: r.ratio,
            completed: (r.status == RunStatus::Completed) as i32,
        };
        Ok(())
    })
}

/// `inf_y ||(eta1, u1) - (eta2, u2)(. + y)||_{H1 x H1}` for two states on
/// the grid of `n` points over a cell of length `length`.
///
/// # Safety
/// The four arrays must hold `n` doubles; the out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn wl_orbit_distance(
    eta1: *const f64,
    u1: *const f64,
    eta2: *const f64,
    u2: *const f64,
    n: usize,
    length: f64,
    out_dist: *mut f64,
    out_shift: *mut f64,
) -> WlStatus {
    guard(|| {
        if [eta1, u1, eta2, u2].iter().any(|p| p.is_null()) {
            return Err(null_arg("state array"));
        }
        let grid = make_grid(length, n)?;
        let field = |p: *const f64| RealField::new(grid.clone(), std::slice::from_raw_parts(p, n).to_vec());
        let a = StatePair::new(field(eta1)?, field(u1)?)?;
        let b = StatePair::new(field(eta2)?, field(u2)?)?;
        let d = orbit_distance(&a, &b)?;
        *out(out_dist, "out_dist")? = d.dist;
        if let Some(s) = out_shift.as_mut() {
            *s = d.y_star;
        }
        Ok(())
    })
}
