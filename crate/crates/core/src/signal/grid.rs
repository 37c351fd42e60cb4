use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::envelope::EnvelopeSeries;
use crate::error::{Error, Result};
use crate::sim::TimeSeries;

/// Autocorrelation threshold defining the shortest lag for growing (`eps > 0`)
/// oscillations.
pub const ACF_THRESHOLD_GROWING: f64 = 0.97;
/// Threshold for decaying or marginal (`eps <= 0`) oscillations.
pub const ACF_THRESHOLD_DECAYING: f64 = 0.6;
/// Ratio between the longest and the shortest lag.
pub const TAU_SPAN_RATIO: f64 = 100.0;
pub const DEFAULT_N_A: usize = 50;
pub const DEFAULT_N_TAU: usize = 100;
pub const MIN_SEGMENT_SAMPLES: usize = 100;

/// The `(a_i, tau_j)` lattice on which all Kramers-Moyal quantities live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub amplitudes: Vec<f64>,
    pub taus: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) && v.iter().all(|x| x.is_finite())
}

impl SampleGrid {
    pub fn new(amplitudes: Vec<f64>, taus: Vec<f64>) -> Result<Self> {
        if amplitudes.len() < 2 || taus.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 amplitudes and 2 lags, got {} x {}",
                amplitudes.len(),
                taus.len()
            )));
        }
        if !strictly_increasing(&amplitudes) || amplitudes[0] <= 0.0 {
            return Err(Error::InvalidInput("amplitudes must be positive and strictly increasing".into()));
        }
        if !strictly_increasing(&taus) || taus[0] <= 0.0 {
            return Err(Error::InvalidInput("lags must be positive and strictly increasing".into()));
        }
        Ok(SampleGrid { amplitudes, taus })
    }

    pub fn n_a(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_tau(&self) -> usize {
        self.taus.len()
    }

    /// Grid spacing in amplitude (uniform grids only).
    pub fn amplitude_step(&self) -> f64 {
        (self.amplitudes[self.n_a() - 1] - self.amplitudes[0]) / (self.n_a() - 1) as f64
    }

    /// Integer sample lags for envelope spacing `dt`; fails if a lag is not a
    /// multiple of `dt`.
    pub fn lags(&self, dt: f64) -> Result<Vec<usize>> {
        self.taus
            .iter()
            .map(|&tau| {
                let k = (tau / dt).round();
                if k < 1.0 || ((k * dt - tau) / tau).abs() > 1e-9 {
                    Err(Error::InvalidInput(format!("lag {tau} is not a multiple of dt = {dt}")))
                } else {
                    Ok(k as usize)
                }
            })
            .collect()
    }
}

fn mean_removed(env: &EnvelopeSeries) -> Result<Vec<f64>> {
    let v = env.valid();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let centred: Vec<f64> = v.iter().map(|a| a - mean).collect();
    let var = centred.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    if !(var > 1e-24 * (1.0 + mean * mean)) {
        return Err(Error::Degenerate("envelope has zero variance".into()));
    }
    Ok(centred)
}

/// Biased sample autocorrelation of the mean-removed envelope at integer
/// sample lag `k`, normalized to 1 at lag 0. Edge-flagged samples are left out.
pub fn autocorrelation_at(env: &EnvelopeSeries, k: usize) -> Result<f64> {
    let x = mean_removed(env)?;
    if k >= x.len() {
        return Err(Error::InvalidInput(format!("lag {k} exceeds record length {}", x.len())));
    }
    let c0: f64 = x.iter().map(|v| v * v).sum();
    let ck: f64 = x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum();
    Ok(ck / c0)
}

/// Same as [`autocorrelation_at`] with the lag given in time units; the lag
/// must be a multiple of `dt`.
pub fn autocorrelation(env: &EnvelopeSeries, lag: f64) -> Result<f64> {
    let k = (lag / env.dt).round();
    if !(lag >= 0.0) || (k * env.dt - lag).abs() > 1e-9 * env.dt.max(lag) {
        return Err(Error::InvalidInput(format!("lag {lag} is not a nonnegative multiple of dt")));
    }
    autocorrelation_at(env, k as usize)
}

/// Autocorrelation for lags `0..max_lag` via zero-padded FFT.
pub fn autocorrelation_all(env: &EnvelopeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let x = mean_removed(env)?;
    let n = x.len();
    let m = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(m, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(m).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(m).process(&mut buf);
    let c0 = buf[0].re;
    Ok(buf[..max_lag.min(n)].iter().map(|c| c.re / c0).collect())
}

/// Outcome of lag selection.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSelection {
    pub taus: Vec<f64>,
    pub lags: Vec<usize>,
    pub tau_min: f64,
    pub tau_max: f64,
    /// Requested lags that collapsed onto an existing one after rounding.
    pub merged: usize,
}

/// Chooses `n_tau` equally spaced lags in `[tau1, 100 tau1]`, where `tau1` is
/// the first lag at which the envelope autocorrelation drops below 0.97
/// (`eps > 0`) or 0.6 (`eps <= 0`). Lags are rounded to whole samples.
pub fn select_tau_grid(env: &EnvelopeSeries, epsilon_positive: bool, n_tau: usize) -> Result<TauSelection> {
    if n_tau < 2 {
        return Err(Error::InvalidInput("need at least 2 lags".into()));
    }
    let threshold = if epsilon_positive {
        ACF_THRESHOLD_GROWING
    } else {
        ACF_THRESHOLD_DECAYING
    };
    let max_lag = env.valid().len() / 2;
    let acf = match autocorrelation_all(env, max_lag) {
        Ok(acf) => acf,
        Err(Error::Degenerate(_)) => return Err(Error::TauSelection { threshold, max_lag }),
        Err(e) => return Err(e),
    };
    let k1 = (1..acf.len())
        .find(|&k| acf[k] < threshold)
        .ok_or(Error::TauSelection { threshold, max_lag })?;

    let tau_min = k1 as f64 * env.dt;
    let tau_max = TAU_SPAN_RATIO * tau_min;
    let mut lags: Vec<usize> = Vec::with_capacity(n_tau);
    for j in 0..n_tau {
        let tau = tau_min + (tau_max - tau_min) * j as f64 / (n_tau - 1) as f64;
        let k = ((tau / env.dt).round() as usize).max(1);
        if lags.last() != Some(&k) {
            lags.push(k);
        }
    }
    let merged = n_tau - lags.len();
    if lags.len() < 2 {
        return Err(Error::InvalidInput("lag grid collapsed to a single lag".into()));
    }
    Ok(TauSelection {
        taus: lags.iter().map(|&k| k as f64 * env.dt).collect(),
        lags,
        tau_min,
        tau_max,
        merged,
    })
}

/// `n_a` equally spaced amplitudes across the envelope range, inset by half a
/// bin at each end: `a_i = min + (i + 1/2) (max - min) / n_a`.
pub fn select_amplitude_grid(env: &EnvelopeSeries, n_a: usize) -> Result<Vec<f64>> {
    if n_a < 2 {
        return Err(Error::InvalidInput("need at least 2 amplitudes".into()));
    }
    let (lo, hi) = amplitude_range(env);
    if !(hi > lo) {
        return Err(Error::Degenerate(format!("envelope range [{lo}, {hi}] is empty")));
    }
    let w = (hi - lo) / n_a as f64;
    Ok((0..n_a).map(|i| lo + (i as f64 + 0.5) * w).collect())
}

/// Minimum and maximum of the unflagged envelope samples.
pub fn amplitude_range(env: &EnvelopeSeries) -> (f64, f64) {
    env.valid()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)))
}

/// Cuts a record into contiguous windows of `window` time units; a trailing
/// partial window is dropped.
pub fn segment_series(ts: &TimeSeries, window: f64) -> Result<Vec<TimeSeries>> {
    let per = (window / ts.dt).round() as usize;
    if per < MIN_SEGMENT_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "segment of {per} samples is shorter than the minimum {MIN_SEGMENT_SAMPLES}"
        )));
    }
    if per > ts.len() {
        return Err(Error::InvalidInput(format!(
            "segment window {window} exceeds record duration {}",
            ts.duration()
        )));
    }
    ts.samples
        .chunks_exact(per)
        .enumerate()
        .map(|(s, chunk)| TimeSeries::new(ts.time(s * per), ts.dt, chunk.to_vec()))
        .collect()
}
