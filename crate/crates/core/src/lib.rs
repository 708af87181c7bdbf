//! Solitary waves of the generalized abcb-Boussinesq system
//!
//! ```text
//! (I - b d_x^2) eta_t + d_x u + a d_x^3 u + d_x(eta u^p)        = 0
//! (I - b d_x^2) u_t   + d_x eta + c d_x^3 eta + d_x(u^(p+1))/(p+1) = 0
//! ```
//!
//! on a periodic Fourier grid: traveling-wave profiles, the action curve
//! `d(omega)` and its convexity, the KdV small-amplitude limit, and
//! conservative time evolution with orbit-distance diagnostics.

pub mod cli;
pub mod dcurve;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod io;
pub mod kdv;
mod krylov;
pub mod model;
pub mod sample;
pub mod spectral;
pub mod stability;
pub mod wave;

pub use error::{Error, Result};
pub use functionals::FunctionalReport;
pub use model::{ModelParams, RegimeLevel, SpeedPoint};
pub use dcurve::{Branch, BranchPoint};
pub use spectral::{make_grid, Grid, RealField, StatePair};
pub use wave::{GridPolicy, SolitaryWave, SolverOptions};
