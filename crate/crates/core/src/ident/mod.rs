//! Residual, optimizers, initializer and the noise-balance report.

mod balance;
mod extrap;
mod lm;
mod nm;
mod report;
mod residual;

pub use balance::{abs_lhs, noise_balance_report, write_balance_csv, write_lhs_csv, BalanceRow, NoiseBalance};
pub use extrap::{extrapolation_guess, initial_guess, optimizer_start, FALLBACK_THETA};
pub use lm::{lm_solve, lm_solve_with, solve_damped, stop_check, LmState, StopCriteria};
pub use nm::{nelder_mead_solve, nelder_mead_with};
pub use report::{FitReport, Method, TrajectoryPoint};
pub use residual::{
    cost, fd_jacobian, fd_jacobian_with, residual, AfpResidual, FnResidual, Jacobian, Residual, ResidualModel,
};
