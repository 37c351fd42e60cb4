//! Identification of a noise-driven Van der Pol oscillator from its output.
//!
//! The pipeline runs from a sampled record to `(eps, alpha, d)`: the Hilbert
//! envelope gives data-side finite-time Kramers-Moyal coefficients, an
//! adjoint Fokker-Planck solver gives their model-side counterparts, and a
//! derivative-free Levenberg-Marquardt loop closes the gap.

pub mod afp;
pub mod error;
pub mod ident;
pub mod io;
pub mod km;
pub mod model;
pub mod pipeline;
pub mod signal;
pub mod sim;

pub use afp::{model_finite_time_km, solve_afp, AfpSolution, KmModel, ModelCoeffs, PdeConfig};
pub use error::{Error, ErrorKind, Result};
pub use ident::{
    extrapolation_guess, fd_jacobian, lm_solve, nelder_mead_solve, noise_balance_report, residual, stop_check,
    FitReport, LmState, Method, NoiseBalance, Residual, StopCriteria,
};
pub use km::{finite_time_km, KmEstimates};
pub use model::{OscillatorModel, Theta};
pub use pipeline::{identify, prepare, IdentifyConfig, Prepared, TauHint};
pub use signal::{analytic_envelope, dominant_frequency, EnvelopeSeries, SampleGrid};
pub use sim::{simulate_vdp, SimConfig, TimeSeries};
