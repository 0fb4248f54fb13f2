//! Discrete solution of the radial system by damped Newton, rate extraction,
//! continuation in eps and the spectral check of the linearisation.

mod banded;
mod fem;
mod linear;
mod newton;
mod rates;

pub use banded::{BandLu, BandMatrix};
pub use fem::{dirichlet_solve, Fem};
pub use linear::{projected_linearization_sigma_min, LinearizationSpectrum};
pub use newton::{
    ansatz_state, assemble_jacobian, assemble_residual, check_envelope, newton_solve, solver_mesh, tower_ansatz,
    NewtonOptions, Residual, SystemState, MAX_K, MAX_PPD, MIN_EPS,
};
pub use rates::{
    continuation_sweep, corrector_norm, extract_rates, extract_rates_from, Continuation, CorrectorNorm, RateFit,
    SweepPoint, MAX_FIT_RESIDUAL,
};
