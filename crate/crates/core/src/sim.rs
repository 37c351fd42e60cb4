//! Synthetic data: the noise-driven Van der Pol oscillator
//!
//! ```text
//! x'' - (eps + alpha x^2) x' + omega^2 x = sqrt(2 d) eta(t)
//! ```
//!
//! integrated as the first-order system `(x, v)` with a semi-implicit
//! Euler-Maruyama step (velocity first, then position with the new
//! velocity). The explicit variant injects a spurious growth rate of
//! `omega^2 dt` into the amplitude dynamics, which at the default step is
//! comparable to the growth rates being identified.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OscillatorModel, Theta};

/// A uniformly sampled scalar record.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("sample spacing must be positive, got {dt}")));
        }
        if !t0.is_finite() {
            return Err(Error::InvalidInput("start time must be finite".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("time series is empty".into()));
        }
        if let Some(k) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("sample {k} is not finite")));
        }
        Ok(TimeSeries { t0, dt, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn fs(&self) -> f64 {
        1.0 / self.dt
    }
}

/// Integration and output settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Recorded duration, excluding the discarded transient.
    pub t_max: f64,
    /// Output sampling rate.
    pub fs: f64,
    /// Integration steps per output sample.
    pub substeps: usize,
    pub seed: u64,
    pub x0: f64,
    pub v0: f64,
    /// Carrier periods integrated and discarded before recording starts.
    pub transient_cycles: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_max: 2000.0,
            fs: 100.0,
            substeps: 10,
            seed: 0,
            x0: 0.1,
            v0: 0.0,
            transient_cycles: 500.0,
        }
    }
}

impl SimConfig {
    pub fn new(t_max: f64, fs: f64, substeps: usize, seed: u64) -> Self {
        SimConfig {
            t_max,
            fs,
            substeps,
            seed,
            ..SimConfig::default()
        }
    }

    pub fn step(&self) -> f64 {
        1.0 / (self.fs * self.substeps as f64)
    }

    pub fn validate(&self, omega: f64) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidInput(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::InvalidInput(format!("fs must be positive, got {}", self.fs)));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidInput("substeps must be at least 1".into()));
        }
        if !(self.transient_cycles.is_finite() && self.transient_cycles >= 0.0) {
            return Err(Error::InvalidInput("transient_cycles must be nonnegative".into()));
        }
        if !(self.x0.is_finite() && self.v0.is_finite()) {
            return Err(Error::InvalidInput("initial state must be finite".into()));
        }
        if self.step() * omega >= 0.1 {
            return Err(Error::InvalidInput(format!(
                "integration step {} too coarse for omega {omega} (need dt*omega < 0.1)",
                self.step()
            )));
        }
        if (self.t_max * self.fs).round() < 1.0 {
            return Err(Error::InvalidInput("record holds no samples".into()));
        }
        Ok(())
    }
}

/// Integrates the oscillator and returns `x(t)` sampled at `cfg.fs`, starting
/// after the transient. The same `(model, cfg)` always produces the same bits.
pub fn simulate_vdp(model: &OscillatorModel, cfg: &SimConfig) -> Result<TimeSeries> {
    model.validate()?;
    cfg.validate(model.omega)?;

    let Theta { epsilon, alpha, d } = model.theta;
    let omega2 = model.omega * model.omega;
    let dt = cfg.step();
    let kick = (2.0 * d * dt).sqrt();
    let sample_dt = 1.0 / cfg.fs;

    let period = std::f64::consts::TAU / model.omega;
    let n_skip = (cfg.transient_cycles * period * cfg.fs).round() as usize;
    let n_out = (cfg.t_max * cfg.fs).round() as usize;

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let (mut x, mut v) = (cfg.x0, cfg.v0);
    let mut samples = Vec::with_capacity(n_out);

    for k in 0..n_skip + n_out {
        if k >= n_skip {
            samples.push(x);
        }
        for _ in 0..cfg.substeps {
            let noise = if d > 0.0 {
                let xi: f64 = StandardNormal.sample(&mut rng);
                kick * xi
            } else {
                0.0
            };
            v += ((epsilon + alpha * x * x) * v - omega2 * x) * dt + noise;
            x += v * dt;
        }
        if !(x.is_finite() && v.is_finite()) {
            return Err(Error::BlowUp {
                time: (k + 1) as f64 * sample_dt,
            });
        }
    }

    TimeSeries::new(n_skip as f64 * sample_dt, sample_dt, samples)
}

/// Noise-free limit-cycle amplitude `sqrt(-4 eps / alpha)` of the averaged
/// amplitude dynamics `da/dt = eps a / 2 + alpha a^3 / 8`.
pub fn amplitude_fixed_point(theta: &Theta) -> Result<f64> {
    if !(theta.epsilon > 0.0 && theta.alpha < 0.0) {
        return Err(Error::Domain(format!(
            "no limit cycle for eps = {}, alpha = {} (need eps > 0, alpha < 0)",
            theta.epsilon, theta.alpha
        )));
    }
    Ok((-4.0 * theta.epsilon / theta.alpha).sqrt())
}
