use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Theta;
use crate::signal::analytic_envelope;
use crate::sim::TimeSeries;

/// Size of the deterministic residual against the noise scale on one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBalance {
    /// Mean of `|x'' - (eps + alpha x^2) x' + omega^2 x|`.
    pub mean_abs_lhs: f64,
    /// `sqrt(2 d)`.
    pub noise_scale: f64,
    /// `mean_abs_lhs / noise_scale`, infinite when `d = 0`.
    pub ratio: f64,
    pub noise_free: bool,
    pub amplitude_mean: f64,
    pub amplitude_std: f64,
}

impl NoiseBalance {
    /// Amplitude deviation relative to its mean.
    pub fn relative_deviation(&self) -> f64 {
        self.amplitude_std / self.amplitude_mean
    }
}

/// `|x'' - (eps + alpha x^2) x' + omega^2 x|` at interior samples, by central
/// differences.
pub fn abs_lhs(ts: &TimeSeries, theta: &Theta, omega: f64) -> Result<Vec<f64>> {
    if ts.len() < 3 {
        return Err(Error::TooShort { len: ts.len(), min: 3 });
    }
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
    }
    let x = &ts.samples;
    let dt = ts.dt;
    let w2 = omega * omega;
    Ok(x.windows(3)
        .map(|w| {
            let v = (w[2] - w[0]) / (2.0 * dt);
            let acc = (w[2] - 2.0 * w[1] + w[0]) / (dt * dt);
            (acc - (theta.epsilon + theta.alpha * w[1] * w[1]) * v + w2 * w[1]).abs()
        })
        .collect())
}

pub fn noise_balance_report(ts: &TimeSeries, theta: &Theta, omega: f64) -> Result<NoiseBalance> {
    let lhs = abs_lhs(ts, theta, omega)?;
    let mean_abs_lhs = lhs.iter().sum::<f64>() / lhs.len() as f64;
    let noise_scale = (2.0 * theta.d.max(0.0)).sqrt();
    let noise_free = noise_scale == 0.0;
    let ratio = if noise_free { f64::INFINITY } else { mean_abs_lhs / noise_scale };
    let env = analytic_envelope(ts)?;
    let a = env.valid();
    let amplitude_mean = a.iter().sum::<f64>() / a.len() as f64;
    let amplitude_std = (a.iter().map(|v| (v - amplitude_mean).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
    Ok(NoiseBalance { mean_abs_lhs, noise_scale, ratio, noise_free, amplitude_mean, amplitude_std })
}

/// One row of a segment-wise balance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub segment: usize,
    pub t_start: f64,
    pub theta: Theta,
    pub balance: NoiseBalance,
}

/// Columns `segment,t_start,epsilon,alpha,d,mean_abs_lhs,noise_scale,ratio,
/// noise_free,amplitude_mean,amplitude_std,relative_deviation`.
pub fn write_balance_csv<W: Write>(rows: &[BalanceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "segment",
        "t_start",
        "epsilon",
        "alpha",
        "d",
        "mean_abs_lhs",
        "noise_scale",
        "ratio",
        "noise_free",
        "amplitude_mean",
        "amplitude_std",
        "relative_deviation",
    ])?;
    for r in rows {
        let b = &r.balance;
        w.write_record([
            r.segment.to_string(),
            r.t_start.to_string(),
            r.theta.epsilon.to_string(),
            r.theta.alpha.to_string(),
            r.theta.d.to_string(),
            b.mean_abs_lhs.to_string(),
            b.noise_scale.to_string(),
            b.ratio.to_string(),
            b.noise_free.to_string(),
            b.amplitude_mean.to_string(),
            b.amplitude_std.to_string(),
            b.relative_deviation().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Samplewise `time,abs_lhs` for one record.
pub fn write_lhs_csv<W: Write>(ts: &TimeSeries, theta: &Theta, omega: f64, out: W) -> Result<()> {
    let lhs = abs_lhs(ts, theta, omega)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "abs_lhs"])?;
    for (k, v) in lhs.iter().enumerate() {
        w.write_record([ts.time(k + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
