use wavelab::evolution::{cfl_bound, evolve, rhs, EvolutionConfig, RunStatus};
use wavelab::spectral::deriv;
use wavelab::wave::solve_wave;
use wavelab::{GridPolicy, ModelParams, SolverOptions};

#[test]
fn rhs_of_a_wave_is_a_translation() {
    for p in [1.0, 2.0, 3.0] {
        let params = ModelParams::reference(p);
        let w = solve_wave(&params, 0.94, &GridPolicy { length: None, n: 1024 }, &SolverOptions::default()).unwrap();
        let f = rhs(&w.profile, &params).unwrap();
        let de = deriv(&w.profile.first, 1).unwrap();
        let du = deriv(&w.profile.second, 1).unwrap();
        let scale = de.max_abs().max(du.max_abs());
        let gap = f.first.axpy(w.omega, &de).unwrap().max_abs().max(f.second.axpy(w.omega, &du).unwrap().max_abs());
        assert!(gap <= 1e-9 * scale.max(1.0), "p = {p}: {gap:e}");
    }
}

#[test]
fn ten_times_cfl_blows_up() {
    let params = ModelParams::reference(1.0);
    let w = solve_wave(&params, 0.95, &GridPolicy { length: None, n: 512 }, &SolverOptions::default()).unwrap();
    let dt = 10.0 * cfl_bound(&params, w.grid(), 1.0);
    let cfg = EvolutionConfig { dt, t_final: 200.0 * dt, cfl_safety: 1.0, dealias: false, monitor_stride: 1, enforce_cfl: false };
    let run = evolve(&w.profile, &params, &cfg).unwrap();
    assert!(matches!(run.status, RunStatus::Blowup { .. } | RunStatus::NonFinite { .. }), "{:?}", run.status);
    let strict = EvolutionConfig { enforce_cfl: true, ..cfg };
    assert!(evolve(&w.profile, &params, &strict).is_err());
}
