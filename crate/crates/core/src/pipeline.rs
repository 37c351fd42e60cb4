//! Record-to-parameters driver: carrier frequency, envelope, grids, data-side
//! coefficients, initial guess and the chosen optimizer.

use serde::{Deserialize, Serialize};

use crate::afp::PdeConfig;
use crate::error::{Error, Result};
use crate::ident::{
    extrapolation_guess, lm_solve_with, nelder_mead_with, optimizer_start, AfpResidual, FitReport, Method, ResidualModel,
    StopCriteria, TrajectoryPoint, FALLBACK_THETA,
};
use crate::km::{finite_time_km, KmEstimates};
use crate::model::Theta;
use crate::signal::{
    analytic_envelope, band_pass, dominant_frequency, select_amplitude_grid, select_tau_grid, EnvelopeSeries,
    SampleGrid, TauSelection, DEFAULT_N_A, DEFAULT_N_TAU,
};
use crate::sim::TimeSeries;

/// Which autocorrelation threshold sets the shortest lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauHint {
    /// Growing oscillation (`eps > 0`).
    Growing,
    /// Decaying or marginal oscillation (`eps <= 0`).
    Decaying,
    /// Try the growing threshold and keep it if the extrapolated `eps` is
    /// positive; otherwise redo the grid with the decaying one.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentifyConfig {
    pub n_a: usize,
    pub n_tau: usize,
    pub tau_hint: TauHint,
    /// Known angular frequency; estimated from the spectrum when absent.
    pub omega: Option<f64>,
    /// Half-width in Hz of an optional band-pass around the carrier.
    pub band_half_width: Option<f64>,
    pub pde: PdeConfig,
    pub stop: StopCriteria,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig {
            n_a: DEFAULT_N_A,
            n_tau: DEFAULT_N_TAU,
            tau_hint: TauHint::Auto,
            omega: None,
            band_half_width: None,
            pde: PdeConfig::default(),
            stop: StopCriteria::default(),
        }
    }
}

impl IdentifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_a < 2 || self.n_tau < 2 {
            return Err(Error::InvalidInput("n_a and n_tau must be at least 2".into()));
        }
        if let Some(w) = self.omega {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidInput(format!("omega must be positive, got {w}")));
            }
        }
        if let Some(h) = self.band_half_width {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidInput(format!("band half-width must be positive, got {h}")));
            }
        }
        self.pde.validate()?;
        self.stop.validate()
    }
}

/// Everything the optimizers need, computed once per record.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub omega: f64,
    pub envelope: EnvelopeSeries,
    pub tau: TauSelection,
    /// True when the growing-oscillation threshold was used.
    pub growing: bool,
    pub km: KmEstimates,
    pub initial: Theta,
    /// Set when extrapolation failed and the fallback start is used.
    pub initializer_error: Option<String>,
}

fn estimates(env: &EnvelopeSeries, growing: bool, cfg: &IdentifyConfig) -> Result<(TauSelection, KmEstimates)> {
    let tau = select_tau_grid(env, growing, cfg.n_tau)?;
    let amplitudes = select_amplitude_grid(env, cfg.n_a)?;
    let grid = SampleGrid::new(amplitudes, tau.taus.clone())?;
    let km = finite_time_km(env, &grid)?;
    Ok((tau, km))
}

pub fn prepare(ts: &TimeSeries, cfg: &IdentifyConfig) -> Result<Prepared> {
    cfg.validate()?;
    let omega = match cfg.omega {
        Some(w) => w,
        None => dominant_frequency(ts)?,
    };
    let envelope = match cfg.band_half_width {
        Some(h) => analytic_envelope(&band_pass(ts, omega / std::f64::consts::TAU, h)?)?,
        None => analytic_envelope(ts)?,
    };
    let first = cfg.tau_hint != TauHint::Decaying;
    let (mut tau, mut km) = estimates(&envelope, first, cfg)?;
    let mut guess = extrapolation_guess(&km, omega);
    let mut growing = first;
    if cfg.tau_hint == TauHint::Auto && !matches!(guess, Ok(t) if t.epsilon > 0.0) {
        (tau, km) = estimates(&envelope, false, cfg)?;
        guess = extrapolation_guess(&km, omega);
        growing = false;
    }
    let (initial, initializer_error) = match guess {
        Ok(t) => (t, None),
        Err(e) => (FALLBACK_THETA, Some(e.to_string())),
    };
    Ok(Prepared { omega, envelope, tau, growing, km, initial, initializer_error })
}

/// Runs one method from the prepared initial guess.
pub fn identify(prep: &Prepared, method: Method, cfg: &IdentifyConfig) -> Result<FitReport> {
    let model = AfpResidual::new(&prep.km, prep.omega, &cfg.pde)?;
    identify_with(&model, prep.initial, prep.initializer_error.as_deref(), method, &cfg.stop)
}

/// As [`identify`] on any residual.
pub fn identify_with<M: ResidualModel + ?Sized>(
    model: &M,
    theta0: Theta,
    initializer_error: Option<&str>,
    method: Method,
    stop: &StopCriteria,
) -> Result<FitReport> {
    match method {
        Method::Prop => lm_solve_with(model, optimizer_start(theta0), stop),
        Method::Nm => nelder_mead_with(model, optimizer_start(theta0), stop),
        Method::Extrap => {
            let start = model.evaluations();
            let cost = match model.evaluate(&theta0) {
                Ok(r) => r.cost(),
                Err(e) if e.is_recoverable() => f64::INFINITY,
                Err(e) => return Err(e),
            };
            let evals = model.evaluations() - start;
            Ok(FitReport {
                method,
                theta0,
                theta_hat: theta0,
                cost_min: cost,
                iterations: 0,
                residual_evals: evals,
                converged: initializer_error.is_none(),
                failure: initializer_error.map(str::to_owned),
                trajectory: vec![TrajectoryPoint {
                    iteration: 0,
                    theta: theta0,
                    cost,
                    lambda: None,
                    residual_evals: evals,
                    backtracks: 0,
                }],
            })
        }
    }
}
